//! Vertex expansion: (η, r)-expander checks, effective-expander extraction,
//! the high-degree attachment step, and rainbow sparsification.
//!
//! Exact checks enumerate vertex subsets as bitmasks and are limited to small
//! graphs. Sampled checks only ever refute: a sampled "holds" is not a
//! certificate, and [`Expansion::Holds`] records which kind of answer it is.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ExpandItem, Failure, Result};
use crate::graph::{for_each_random_pair, ColouredGraph, Colour, Relabelled, Vertex};

/// Largest graph [`is_eta_r_expander`] checks exactly.
pub const EXACT_SUBSET_LIMIT: usize = 24;
/// Largest graph [`verify_expand_core`] checks exactly.
pub const EXACT_INDUCED_LIMIT: usize = 18;

/// ℓ1(r, C) = 2e⁴r²ln C.
pub fn l1(r: usize, c: f64) -> f64 {
    2.0 * 4f64.exp() * (r * r) as f64 * c.ln()
}

/// ℓ2(η, d, k) = ηk / (40 d² ln(2/η)).
pub fn l2(eta: f64, d: usize, k: f64) -> f64 {
    eta * k / (40.0 * (d * d) as f64 * (2.0 / eta).ln())
}

/// Parameters (θ, C, η, r) of the EXPAND family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpandParams {
    pub theta: f64,
    pub c: f64,
    pub eta: f64,
    pub r: usize,
}

impl ExpandParams {
    pub fn new(theta: f64, c: f64, eta: f64, r: usize) -> Result<Self> {
        let p = ExpandParams { theta, c, eta, r };
        p.validate()?;
        Ok(p)
    }

    /// Check 0 ≤ θ < 1/2, C > 1, r ≥ 1 and 0 < η ≤ 1/(r+2).
    ///
    /// θ = 0 is accepted (a graph that must be its own effective expander),
    /// as is r < 3, which the random-graph lemma excludes but the membership
    /// test does not need.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta < 0.5) {
            return Err(Error::param(format!("θ = {} outside [0, 1/2)", self.theta)));
        }
        if !(self.c > 1.0) {
            return Err(Error::param(format!("C = {} must exceed 1", self.c)));
        }
        if self.r == 0 {
            return Err(Error::param("expansion ratio r must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0 / (self.r as f64 + 2.0) + 1e-12) {
            return Err(Error::param(format!(
                "η = {} outside (0, 1/(r+2)] for r = {}",
                self.eta, self.r
            )));
        }
        Ok(())
    }

    pub fn l1(&self) -> f64 {
        l1(self.r, self.c)
    }
}

/// Threshold ℓ2(η, d, k) of the rooted embedding theorem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedThreshold {
    pub eta: f64,
    pub d: usize,
    pub k: f64,
}

impl EmbedThreshold {
    pub fn new(eta: f64, d: usize, k: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 0.5) || d < 2 || !(k > 0.0) {
            return Err(Error::param(format!(
                "need 0 < η < 1/2, d ≥ 2, k > 0 (got η = {eta}, d = {d}, k = {k})"
            )));
        }
        Ok(EmbedThreshold { eta, d, k })
    }

    pub fn l2(&self) -> f64 {
        l2(self.eta, self.d, self.k)
    }
}

/// How to check an expansion property.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    /// Enumerate every qualifying set; limited to small graphs.
    Exact,
    /// Random sets of each admissible size; can only refute.
    Sampled { trials_per_size: usize, seed: u64 },
}

impl CheckMode {
    pub fn sampled(trials_per_size: usize, seed: u64) -> Self {
        CheckMode::Sampled {
            trials_per_size,
            seed,
        }
    }
}

/// Outcome of an expansion check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// No violating set found. `certified` is false for sampled checks.
    Holds { certified: bool },
    /// `witness` is a set X with |Γ(X)| < r|X|; `within` is the vertex set
    /// of the induced subgraph in which it was found (all of V for plain
    /// expander checks).
    Violated {
        witness: Vec<Vertex>,
        within: Vec<Vertex>,
    },
}

impl Expansion {
    pub fn holds(&self) -> bool {
        matches!(self, Expansion::Holds { .. })
    }
}

fn max_set_size(eta: f64, n: usize) -> usize {
    (eta * n as f64 + 1e-9).floor() as usize
}

fn masks_of(g: &ColouredGraph) -> Vec<u32> {
    (0..g.n())
        .map(|v| g.neighbours(v).fold(0u32, |m, w| m | 1 << w))
        .collect()
}

fn bits(mask: u32) -> Vec<Vertex> {
    (0..32).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Search subsets X of `universe` with 1 ≤ |X| ≤ `max_size` for one whose
/// external neighbourhood inside `universe` has fewer than r|X| vertices.
fn find_violation(masks: &[u32], universe: u32, max_size: usize, r: usize) -> Option<u32> {
    fn rec(
        masks: &[u32],
        universe: u32,
        members: &[usize],
        start: usize,
        set: u32,
        union: u32,
        size: usize,
        max_size: usize,
        r: usize,
    ) -> Option<u32> {
        for idx in start..members.len() {
            let v = members[idx];
            let set2 = set | 1 << v;
            let union2 = union | masks[v];
            let gamma = (union2 & universe & !set2).count_ones() as usize;
            if gamma < r * (size + 1) {
                return Some(set2);
            }
            if size + 1 < max_size {
                if let Some(w) = rec(masks, universe, members, idx + 1, set2, union2, size + 1, max_size, r) {
                    return Some(w);
                }
            }
        }
        None
    }
    if max_size == 0 {
        return None;
    }
    let members: Vec<usize> = (0..32).filter(|&i| universe >> i & 1 == 1).collect();
    rec(masks, universe, &members, 0, 0, 0, 0, max_size, r)
}

fn sampled_violation<R: Rng>(
    g: &ColouredGraph,
    vertices: &[Vertex],
    eta: f64,
    r: usize,
    trials: usize,
    rng: &mut R,
) -> Option<Vec<Vertex>> {
    let n = vertices.len();
    let mut inside = vec![false; g.n()];
    for &v in vertices {
        inside[v] = true;
    }
    let mut mark = vec![0u32; g.n()];
    let mut stamp = 0u32;
    for t in 1..=max_set_size(eta, n).min(n) {
        for _ in 0..trials {
            stamp += 1;
            let picked: Vec<Vertex> = sample(rng, n, t).into_iter().map(|i| vertices[i]).collect();
            for &v in &picked {
                mark[v] = stamp;
            }
            let mut gamma = 0;
            stamp += 1;
            for &v in &picked {
                for w in g.neighbours(v) {
                    if inside[w] && mark[w] != stamp && mark[w] != stamp - 1 {
                        mark[w] = stamp;
                        gamma += 1;
                    }
                }
            }
            if gamma < r * t {
                let mut w = picked;
                w.sort_unstable();
                return Some(w);
            }
        }
    }
    None
}

/// Check that |Γ(X)| ≥ r|X| for every X with |X| ≤ ηn.
pub fn is_eta_r_expander(g: &ColouredGraph, eta: f64, r: usize, mode: CheckMode) -> Result<Expansion> {
    let n = g.n();
    let all: Vec<Vertex> = (0..n).collect();
    match mode {
        CheckMode::Exact => {
            if n > EXACT_SUBSET_LIMIT {
                return Err(Error::Capacity {
                    what: "exact expander check",
                    n,
                    limit: EXACT_SUBSET_LIMIT,
                });
            }
            let masks = masks_of(g);
            let universe = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
            Ok(match find_violation(&masks, universe, max_set_size(eta, n), r) {
                Some(x) => Expansion::Violated {
                    witness: bits(x),
                    within: all,
                },
                None => Expansion::Holds { certified: true },
            })
        }
        CheckMode::Sampled {
            trials_per_size,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(match sampled_violation(g, &all, eta, r, trials_per_size, &mut rng) {
                Some(w) => Expansion::Violated {
                    witness: w,
                    within: all,
                },
                None => Expansion::Holds { certified: false },
            })
        }
    }
}

/// Vertices of the k-core (largest induced subgraph of minimum degree ≥ k)
/// of `g` restricted to `within`.
pub fn k_core(g: &ColouredGraph, within: &[Vertex], k: usize) -> Vec<Vertex> {
    let mut alive = vec![false; g.n()];
    for &v in within {
        alive[v] = true;
    }
    let mut deg = vec![0usize; g.n()];
    for &v in within {
        deg[v] = g.neighbours(v).filter(|&w| alive[w]).count();
    }
    let mut stack: Vec<Vertex> = within.iter().copied().filter(|&v| deg[v] < k).collect();
    for &v in &stack {
        alive[v] = false;
    }
    while let Some(v) = stack.pop() {
        for w in g.neighbours(v) {
            if alive[w] {
                deg[w] -= 1;
                if deg[w] < k {
                    alive[w] = false;
                    stack.push(w);
                }
            }
        }
    }
    let mut out: Vec<Vertex> = within.iter().copied().filter(|&v| alive[v]).collect();
    out.sort_unstable();
    out
}

fn degree_threshold(min_degree: f64) -> usize {
    (min_degree - 1e-9).ceil().max(0.0) as usize
}

/// Check that every induced subgraph with minimum degree ≥ `min_degree` is
/// an (η, r)-expander (relative to its own order).
///
/// Exact mode enumerates all vertex subsets of the k-core (n ≤ 18). Sampled
/// mode checks the k-core itself and the k-cores of random vertex subsets.
pub fn verify_expand_core(
    h: &ColouredGraph,
    min_degree: f64,
    eta: f64,
    r: usize,
    mode: CheckMode,
) -> Result<Expansion> {
    let k = degree_threshold(min_degree);
    let all: Vec<Vertex> = (0..h.n()).collect();
    let core = k_core(h, &all, k);
    if core.is_empty() {
        return Ok(Expansion::Holds { certified: true });
    }
    match mode {
        CheckMode::Exact => {
            if h.n() > EXACT_INDUCED_LIMIT {
                return Err(Error::Capacity {
                    what: "exact induced-subgraph expansion check",
                    n: h.n(),
                    limit: EXACT_INDUCED_LIMIT,
                });
            }
            let masks = masks_of(h);
            let core_mask = core.iter().fold(0u32, |m, &v| m | 1 << v);
            Ok(match exact_core_violation(&masks, core_mask, k, eta, r) {
                Some((u, x)) => Expansion::Violated {
                    witness: bits(x),
                    within: bits(u),
                },
                None => Expansion::Holds { certified: true },
            })
        }
        CheckMode::Sampled {
            trials_per_size,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Some(w) = sampled_violation(h, &core, eta, r, trials_per_size, &mut rng) {
                return Ok(Expansion::Violated {
                    witness: w,
                    within: core,
                });
            }
            for _ in 0..trials_per_size.min(16) {
                let keep = rng.gen_range(0.5..1.0);
                let subset: Vec<Vertex> = core.iter().copied().filter(|_| rng.gen_bool(keep)).collect();
                let sub_core = k_core(h, &subset, k);
                if sub_core.is_empty() {
                    continue;
                }
                if let Some(w) = sampled_violation(h, &sub_core, eta, r, trials_per_size, &mut rng) {
                    return Ok(Expansion::Violated {
                        witness: w,
                        within: sub_core,
                    });
                }
            }
            Ok(Expansion::Holds { certified: false })
        }
    }
}

/// Enumerate every subset U of `core_mask` with δ(H[U]) ≥ k and search it
/// for a non-expanding set. Returns `(U, X)` for the first violation.
fn exact_core_violation(masks: &[u32], core_mask: u32, k: usize, eta: f64, r: usize) -> Option<(u32, u32)> {
    let members = bits(core_mask);
    let c = members.len();
    for sub in 1u32..(1u32 << c) {
        if (sub.count_ones() as usize) < k + 1 {
            continue;
        }
        let mut u = 0u32;
        for (i, &v) in members.iter().enumerate() {
            if sub >> i & 1 == 1 {
                u |= 1 << v;
            }
        }
        let mut min_deg = usize::MAX;
        let mut rest = u;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            min_deg = min_deg.min((masks[v] & u).count_ones() as usize);
            if min_deg < k {
                break;
            }
        }
        if min_deg < k {
            continue;
        }
        let size = u.count_ones() as usize;
        let t_max = max_set_size(eta, size);
        // |Γ(X)| ≥ δ − (|X| − 1) for every X, which settles U outright when
        // that bound already clears r|X| at the largest admissible size.
        if t_max == 0 || min_deg + 1 >= (r + 1) * t_max {
            continue;
        }
        if let Some(x) = find_violation(masks, u, t_max, r) {
            return Some((u, x));
        }
    }
    None
}

/// The effective expander H′ found inside H, with the vertices it keeps.
#[derive(Clone, Debug)]
pub struct EffectiveExpander {
    pub sub: Relabelled,
    pub removed: usize,
    /// Whether the expansion item was verified exactly (or vacuously).
    pub certified: bool,
}

/// Peel H into a subgraph with all degrees in [C, 10C].
///
/// Vertices above 10C first lose their edges to their highest-index
/// neighbours; then vertices below C are deleted until none remain. Fails at
/// the degree-band item if more than θ·v(H) vertices are deleted, and at the
/// expansion item if [`verify_expand_core`] refutes the result.
pub fn find_effective_expander(h: &ColouredGraph, params: &ExpandParams, mode: CheckMode) -> Result<EffectiveExpander> {
    params.validate()?;
    let n = h.n();
    let lo = degree_threshold(params.c);
    let hi = (10.0 * params.c + 1e-9).floor() as usize;
    let mut edge_alive = vec![true; h.edge_count()];
    let mut deg = h.degrees();
    for v in 0..n {
        if deg[v] > hi {
            for &(w, id) in h.incident(v).iter().rev() {
                if deg[v] <= hi {
                    break;
                }
                if edge_alive[id] {
                    edge_alive[id] = false;
                    deg[v] -= 1;
                    deg[w] -= 1;
                }
            }
        }
    }
    let mut alive = vec![true; n];
    let mut stack: Vec<Vertex> = (0..n).filter(|&v| deg[v] < lo).collect();
    for &v in &stack {
        alive[v] = false;
    }
    while let Some(v) = stack.pop() {
        for &(w, id) in h.incident(v) {
            if edge_alive[id] {
                edge_alive[id] = false;
                deg[w] -= 1;
                if alive[w] && deg[w] < lo {
                    alive[w] = false;
                    stack.push(w);
                }
            }
        }
    }
    let kept: Vec<Vertex> = (0..n).filter(|&v| alive[v]).collect();
    let removed = n - kept.len();
    if removed as f64 > params.theta * n as f64 + 1e-9 || (kept.is_empty() && n > 0) {
        return Err(Failure::Expander {
            item: ExpandItem::DegreeBand,
            detail: format!(
                "peeling to degrees in [{lo}, {hi}] removed {removed} of {n} vertices (budget {:.1})",
                params.theta * n as f64
            ),
        }
        .into());
    }
    let ids: Vec<usize> = (0..h.edge_count()).filter(|&id| edge_alive[id]).collect();
    let pruned = h.edge_subgraph(&ids);
    let sub = pruned.induced(&kept);
    let check = verify_expand_core(&sub.graph, params.l1(), params.eta, params.r, mode)?;
    match check {
        Expansion::Holds { certified } => Ok(EffectiveExpander {
            sub,
            removed,
            certified,
        }),
        Expansion::Violated { witness, within } => Err(Failure::Expander {
            item: ExpandItem::Expansion,
            detail: format!(
                "set of size {} inside an induced subgraph on {} vertices does not expand",
                witness.len(),
                within.len()
            ),
        }
        .into()),
    }
}

/// Add a new vertex `u = v(H′)` joined to `targets`, with no degree check.
pub(crate) fn attach_vertex(h: &ColouredGraph, targets: &[Vertex]) -> Result<ColouredGraph> {
    let u = h.n();
    let edges = h
        .edges()
        .iter()
        .copied()
        .chain(targets.iter().map(|&t| (t, u)));
    ColouredGraph::from_edges(u + 1, edges)
}

/// Join a new vertex (numbered `v(H′)`) to the given targets. Requires at
/// least (d+2)² distinct targets, the degree the attachment lemma needs.
pub fn degrade_attach(h: &ColouredGraph, targets: &[Vertex], d: usize) -> Result<ColouredGraph> {
    let mut distinct = targets.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let need = (d + 2) * (d + 2);
    if distinct.len() < need {
        return Err(Error::Precondition(format!(
            "attached vertex has degree {} < (d+2)² = {need}",
            distinct.len()
        )));
    }
    if distinct.iter().any(|&t| t >= h.n()) {
        return Err(Error::Domain("attachment target outside H′".into()));
    }
    attach_vertex(h, &distinct)
}

/// Rainbow sparsification of a random coloured graph on a vertex block.
#[derive(Clone, Debug)]
pub struct Sparsified {
    /// Rainbow graph on local vertices `0..|X|`, all colours allowed.
    pub sub: Relabelled,
    /// Every pair included in step 1, with its colour from step 2
    /// (local vertex ids).
    pub exposed: Vec<((Vertex, Vertex), Colour)>,
    /// Number of edges left after step 4 (one per allowed colour present).
    pub surviving: usize,
}

/// Sparsify a fresh G(|X|, p) with a uniform `palette`-colouring down to a
/// rainbow graph with exactly `m` edges whose colours all lie in `allowed`.
///
/// Steps: include each pair with probability p; colour included pairs
/// uniformly; for each allowed colour keep one uniformly chosen edge of that
/// colour; discard the rest (including every edge of a disallowed colour);
/// keep a uniform m-subset of what remains. Fails when fewer than `m`
/// allowed colours appear.
pub fn sparsify<R: Rng + ?Sized>(
    block: &[Vertex],
    p: f64,
    palette: usize,
    allowed: &FixedBitSet,
    m: usize,
    rng: &mut R,
) -> Result<Sparsified> {
    sparsify_inner(block, p, palette, allowed, Some(m), rng)
}

/// Steps 1–4 of [`sparsify`] without the final subsampling: every surviving
/// edge is kept. Never fails.
pub fn sparsify_keep_all<R: Rng + ?Sized>(
    block: &[Vertex],
    p: f64,
    palette: usize,
    allowed: &FixedBitSet,
    rng: &mut R,
) -> Result<Sparsified> {
    sparsify_inner(block, p, palette, allowed, None, rng)
}

fn sparsify_inner<R: Rng + ?Sized>(
    block: &[Vertex],
    p: f64,
    palette: usize,
    allowed: &FixedBitSet,
    target: Option<usize>,
    rng: &mut R,
) -> Result<Sparsified> {
    let m = target.unwrap_or(0);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("probability {p} outside [0, 1]")));
    }
    if palette == 0 || allowed.len() != palette {
        return Err(Error::param("allowed-colour set must match the palette size"));
    }
    if m > allowed.count_ones(..) {
        return Err(Error::param(format!(
            "target {m} exceeds the {} allowed colours",
            allowed.count_ones(..)
        )));
    }
    let x = block.len();
    let mut pairs = Vec::new();
    for_each_random_pair(x, p, rng, |u, v| pairs.push((u, v)));
    let exposed: Vec<((Vertex, Vertex), Colour)> = pairs
        .into_iter()
        .map(|e| (e, rng.gen_range(0..palette) as Colour))
        .collect();
    // Reservoir-sample one edge per colour: the j-th edge of a colour
    // replaces the current choice with probability 1/j.
    let mut chosen: HashMap<Colour, (usize, usize)> = HashMap::new();
    for (idx, &(_, c)) in exposed.iter().enumerate() {
        if !allowed.contains(c as usize) {
            continue;
        }
        let slot = chosen.entry(c).or_insert((0, idx));
        slot.0 += 1;
        if slot.0 > 1 && rng.gen_range(0..slot.0) == 0 {
            slot.1 = idx;
        }
    }
    let mut survivors: Vec<usize> = chosen.values().map(|&(_, idx)| idx).collect();
    survivors.sort_unstable();
    // Step 4 as written: drop any survivor whose colour is not allowed.
    survivors.retain(|&idx| allowed.contains(exposed[idx].1 as usize));
    let surviving = survivors.len();
    if surviving < m {
        return Err(Failure::Sparsify {
            found: surviving,
            needed: m,
        }
        .into());
    }
    let mut keep: Vec<usize> = match target {
        Some(m) => sample(rng, surviving, m).into_iter().map(|i| survivors[i]).collect(),
        None => survivors,
    };
    keep.sort_unstable_by_key(|&idx| exposed[idx].0);
    let edges = keep.iter().map(|&idx| exposed[idx].0).collect();
    let colours = keep.iter().map(|&idx| exposed[idx].1).collect();
    let graph = ColouredGraph::from_sorted_unique(x, edges).with_colours(palette, colours)?;
    Ok(Sparsified {
        sub: Relabelled {
            graph,
            to_parent: block.to_vec(),
        },
        exposed,
        surviving,
    })
}
