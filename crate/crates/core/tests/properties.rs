use std::collections::{BTreeMap, HashSet};

use fixedbitset::FixedBitSet;
use proptest::prelude::*;

use rainbow_core::absorb::{randomness_shift, shift_by};
use rainbow_core::embed::{derive_parameters_with, Constants};
use rainbow_core::expander::{is_eta_r_expander, sparsify, CheckMode};
use rainbow_core::graph::{gen_gnp, gen_seed_graph, is_rainbow, min_degree_target, uniform_colouring, SeedKind};
use rainbow_core::harness::SuccessEstimate;
use rainbow_core::io::{read_edge_list, read_tree, write_edge_list, write_tree};
use rainbow_core::spanning::{audit_partition, find_rainbow_spanning_tree, highly_connected_partition, suzuki_check};
use rainbow_core::tree::gen_random_bounded_tree;
use rainbow_core::{ColouredGraph, Colour, RandomSource};

fn coloured(n: usize, p: f64, k: usize, seed: u64) -> ColouredGraph {
    let mut rng = RandomSource::new(seed, 0);
    let g = gen_gnp(n, p, &mut rng).unwrap();
    uniform_colouring(&g, k, &mut rng).unwrap()
}

fn spans(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v) in edges {
        let (a, b) = (root(&mut parent, u), root(&mut parent, v));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    edges.len() + 1 == n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparsify_is_rainbow_within_allowed(
        x in 4usize..30,
        p in 0.2f64..1.0,
        palette in 10usize..80,
        allowed_mask in any::<u64>(),
        m in 0usize..10,
        seed in any::<u64>(),
    ) {
        let mut rng = RandomSource::new(seed, 0);
        let block: Vec<usize> = (100..100 + x).collect();
        let mut allowed = FixedBitSet::with_capacity(palette);
        for c in 0..palette {
            if allowed_mask >> (c % 64) & 1 == 1 {
                allowed.insert(c);
            }
        }
        prop_assume!(m <= allowed.count_ones(..));
        if let Ok(s) = sparsify(&block, p, palette, &allowed, m, &mut rng) {
            let g = &s.sub.graph;
            prop_assert_eq!(g.edge_count(), m);
            prop_assert!(is_rainbow(g, g.edges()).unwrap());
            prop_assert!(g.colours().unwrap().iter().all(|&c| allowed.contains(c as usize)));
            prop_assert!(s.surviving >= m);
        }
    }

    #[test]
    fn sampled_expansion_only_refutes(n in 1usize..11, p in 0.1f64..1.0, r in 1usize..4, q in 3usize..6, seed in any::<u64>()) {
        let g = gen_gnp(n, p, &mut RandomSource::new(seed, 0)).unwrap();
        let eta = 1.0 / q as f64;
        let exact = is_eta_r_expander(&g, eta, r, CheckMode::Exact).unwrap().holds();
        let sampled = is_eta_r_expander(&g, eta, r, CheckMode::sampled(4, seed)).unwrap().holds();
        prop_assert!(sampled || !exact);
    }

    #[test]
    fn shift_preserves_invariants(n in 2usize..40, p in 0.05f64..0.9, seed in any::<u64>()) {
        let g = coloured(n, p, n + 3, seed);
        let mut rng = RandomSource::new(seed, 1);
        let s = randomness_shift(&g, &mut rng).unwrap();
        let mut d1 = g.degrees();
        let mut d2 = s.shifted.degrees();
        d1.sort_unstable();
        d2.sort_unstable();
        prop_assert_eq!(d1, d2);
        let mut c1 = g.colours().unwrap().to_vec();
        let mut c2 = s.shifted.colours().unwrap().to_vec();
        c1.sort_unstable();
        c2.sort_unstable();
        prop_assert_eq!(c1, c2);
        for &(u, v) in g.edges() {
            prop_assert_eq!(g.colour_between(u, v), s.shifted.colour_between(s.pi[u], s.pi[v]));
        }
        let identity = shift_by(&g, (0..n).collect()).unwrap();
        prop_assert_eq!(identity.shifted, g);
    }

    #[test]
    fn rainbow_tree_finder_matches_criterion(n in 2usize..8, p in 0.2f64..1.0, extra in 0usize..4, seed in any::<u64>()) {
        let g = coloured(n, p, n - 1 + extra, seed);
        let found = find_rainbow_spanning_tree(&g).unwrap();
        prop_assert_eq!(found.is_some(), suzuki_check(&g).unwrap().holds);
        if let Some(t) = found {
            prop_assert!(spans(n, &t));
            prop_assert!(t.iter().all(|&(u, v)| g.has_edge(u, v)));
            prop_assert!(is_rainbow(&g, &t).unwrap());
        }
    }

    #[test]
    fn criterion_witness_is_short_of_colours(n in 2usize..8, p in 0.2f64..1.0, seed in any::<u64>()) {
        let g = coloured(n, p, n - 1, seed);
        let out = suzuki_check(&g).unwrap();
        if let Some(w) = out.witness {
            prop_assert!(!out.holds);
            let label = w.labels();
            let crossing: HashSet<Colour> = g
                .edges()
                .iter()
                .filter(|&&(u, v)| label[u] != label[v])
                .map(|&(u, v)| g.colour_between(u, v).unwrap())
                .collect();
            prop_assert!(crossing.len() + 1 < w.len());
        } else {
            prop_assert!(out.holds);
        }
    }

    #[test]
    fn partition_passes_audit(n in 12usize..50, delta in 0.3f64..0.55, kind in 0usize..3, seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed, 0);
        let kind = match kind {
            0 => SeedKind::RandomSupergraph,
            1 => SeedKind::Multipartite { parts: 3 },
            _ => match SeedKind::densest_clique_union(n, delta) {
                Ok(k) => k,
                Err(_) => SeedKind::Complete,
            },
        };
        let h = gen_seed_graph(n, delta, kind, &mut rng).unwrap();
        let k = min_degree_target(n, delta);
        let part = highly_connected_partition(&h, k).unwrap();
        prop_assert!(audit_partition(&h, &part, k).passed);
        let mut all: Vec<usize> = part.blocks().iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn derived_parameters_respect_caps(eps in 0.01f64..0.6, d in 2usize..6, c_beta in 0.01f64..1000.0, c_rho in 0.01f64..1.0) {
        let constants = Constants { c_beta, c_rho, ..Constants::default() };
        if let Ok(pp) = derive_parameters_with(eps, d, 1_000_000, constants) {
            prop_assert!(pp.zeta <= eps / (2.0 * (1.0 - eps)) + 1e-12);
            let cap = c_beta * pp.zeta * eps / ((d as f64).powi(4) * (1.0 / pp.zeta).ln());
            prop_assert!(pp.beta <= cap * (1.0 + 1e-12));
            prop_assert!(pp.rho <= c_rho * eps + 1e-12);
            prop_assert!(pp.block_size(1000) as f64 <= (1.0 + 1.5 * pp.zeta) * 1000.0 + 1e-9);
        }
    }

    #[test]
    fn wilson_interval_contains_estimate(trials in 1usize..5000, frac in 0.0f64..=1.0) {
        let successes = (trials as f64 * frac).round() as usize;
        let e = SuccessEstimate::from_counts(successes, trials).unwrap();
        prop_assert!(0.0 <= e.lower && e.lower <= e.estimate && e.estimate <= e.upper && e.upper <= 1.0);
    }

    #[test]
    fn formats_round_trip(n in 1usize..40, p in 0.0f64..1.0, k in 0usize..50, m in 1usize..60, seed in any::<u64>()) {
        let g = if k == 0 {
            gen_gnp(n, p, &mut RandomSource::new(seed, 0)).unwrap()
        } else {
            coloured(n, p, k, seed)
        };
        prop_assert_eq!(read_edge_list(&write_edge_list(&g)).unwrap(), g);
        let t = gen_random_bounded_tree(m, 3, &mut RandomSource::new(seed, 1)).unwrap();
        prop_assert_eq!(read_tree(&write_tree(&t), Some(3)).unwrap().edges(), t.edges());
    }
}

#[test]
fn uniform_colouring_is_close_to_uniform() {
    let g = ColouredGraph::complete(60);
    let k = 10;
    let mut counts: BTreeMap<Colour, usize> = BTreeMap::new();
    let mut rng = RandomSource::new(7, 0);
    for _ in 0..20 {
        for &c in uniform_colouring(&g, k, &mut rng).unwrap().colours().unwrap() {
            *counts.entry(c).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let expected = total as f64 / k as f64;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, upper tail 0.001
    assert!(chi2 < 27.877, "chi2 = {chi2}");
}
