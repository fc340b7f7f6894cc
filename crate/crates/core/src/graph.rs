//! Undirected simple graphs on `0..n`, random generators and edge colourings.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};

pub type Vertex = usize;
pub type Colour = u32;
/// Canonical undirected edge, always stored as `(min, max)`.
pub type Edge = (Vertex, Vertex);

/// Order a vertex pair canonically.
#[inline]
pub fn canonical(u: Vertex, v: Vertex) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Colouring {
    palette: usize,
    colours: Vec<Colour>,
}

/// A simple graph with an optional total edge colouring.
///
/// Edges are kept sorted in canonical order; edge ids index into that order.
/// Graphs produced by [`perturb`] additionally remember which edges were
/// contributed by the random perturbation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColouredGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(Vertex, usize)>>,
    colouring: Option<Colouring>,
    random: Option<Vec<bool>>,
}

/// A graph whose vertices are relabelled `0..k`, with the map back to the
/// parent graph's vertex ids.
#[derive(Clone, Debug)]
pub struct Relabelled {
    pub graph: ColouredGraph,
    pub to_parent: Vec<Vertex>,
}

impl ColouredGraph {
    pub fn empty(n: usize) -> Self {
        ColouredGraph {
            n,
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
            colouring: None,
            random: None,
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Self::from_sorted_unique(n, edges)
    }

    /// Build a graph from arbitrary pairs. Duplicate pairs are merged; loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vertex, Vertex)>,
    {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            if u == v {
                return Err(Error::Domain(format!("self-loop at vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::Domain(format!(
                    "edge {u}-{v} has an endpoint outside 0..{n}"
                )));
            }
            edges.push(canonical(u, v));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_sorted_unique(n, edges))
    }

    pub(crate) fn from_sorted_unique(n: usize, edges: Vec<Edge>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        let mut deg = vec![0usize; n];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut adj: Vec<Vec<(Vertex, usize)>> =
            deg.iter().map(|&d| Vec::with_capacity(d)).collect();
        for (id, &(u, v)) in edges.iter().enumerate() {
            adj[u].push((v, id));
            adj[v].push((u, id));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        ColouredGraph {
            n,
            edges,
            adj,
            colouring: None,
            random: None,
        }
    }

    /// Attach a colouring; `colours[i]` is the colour of edge id `i`.
    pub fn with_colours(mut self, palette: usize, colours: Vec<Colour>) -> Result<Self> {
        if palette == 0 {
            return Err(Error::param("palette size must be at least 1"));
        }
        if colours.len() != self.edges.len() {
            return Err(Error::Domain(format!(
                "colouring covers {} edges but the graph has {}",
                colours.len(),
                self.edges.len()
            )));
        }
        if let Some(&c) = colours.iter().find(|&&c| c as usize >= palette) {
            return Err(Error::Domain(format!(
                "colour {c} outside palette of size {palette}"
            )));
        }
        self.colouring = Some(Colouring { palette, colours });
        Ok(self)
    }

    pub fn without_colouring(mut self) -> Self {
        self.colouring = None;
        self
    }

    pub(crate) fn with_random_flags(mut self, flags: Vec<bool>) -> Self {
        debug_assert_eq!(flags.len(), self.edges.len());
        self.random = Some(flags);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn neighbours(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.adj[v].iter().map(|&(w, _)| w)
    }

    /// Neighbours together with the connecting edge id.
    pub fn incident(&self, v: Vertex) -> &[(Vertex, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn min_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_id(&self, u: Vertex, v: Vertex) -> Option<usize> {
        if u >= self.n || v >= self.n || u == v {
            return None;
        }
        let (a, b) = if self.adj[u].len() <= self.adj[v].len() {
            (u, v)
        } else {
            (v, u)
        };
        self.adj[a]
            .binary_search_by_key(&b, |&(w, _)| w)
            .ok()
            .map(|i| self.adj[a][i].1)
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.edge_id(u, v).is_some()
    }

    pub fn is_coloured(&self) -> bool {
        self.colouring.is_some()
    }

    pub fn palette(&self) -> Option<usize> {
        self.colouring.as_ref().map(|c| c.palette)
    }

    pub fn colours(&self) -> Option<&[Colour]> {
        self.colouring.as_ref().map(|c| c.colours.as_slice())
    }

    pub fn colour(&self, id: usize) -> Option<Colour> {
        self.colouring.as_ref().map(|c| c.colours[id])
    }

    pub fn colour_between(&self, u: Vertex, v: Vertex) -> Option<Colour> {
        self.edge_id(u, v).and_then(|id| self.colour(id))
    }

    /// Whether edge `id` came from the random perturbation.
    pub fn is_random_edge(&self, id: usize) -> bool {
        self.random.as_ref().is_some_and(|r| r[id])
    }

    pub fn has_random_flags(&self) -> bool {
        self.random.is_some()
    }

    /// Number of edges flagged as coming from the random perturbation.
    pub fn random_edge_count(&self) -> usize {
        self.random
            .as_ref()
            .map_or(0, |r| r.iter().filter(|&&b| b).count())
    }

    /// The subgraph with every perturbation edge removed (G \ E(R)).
    pub fn without_random_edges(&self) -> ColouredGraph {
        let keep: Vec<usize> = (0..self.edges.len())
            .filter(|&id| !self.is_random_edge(id))
            .collect();
        self.edge_subgraph(&keep)
    }

    /// Spanning subgraph on the given edge ids, keeping colours.
    pub fn edge_subgraph(&self, ids: &[usize]) -> ColouredGraph {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let edges = ids.iter().map(|&id| self.edges[id]).collect();
        let mut g = Self::from_sorted_unique(self.n, edges);
        if let Some(c) = &self.colouring {
            g.colouring = Some(Colouring {
                palette: c.palette,
                colours: ids.iter().map(|&id| c.colours[id]).collect(),
            });
        }
        if let Some(r) = &self.random {
            g.random = Some(ids.iter().map(|&id| r[id]).collect());
        }
        g
    }

    /// Induced subgraph on `vertices`, relabelled in the given order.
    pub fn induced(&self, vertices: &[Vertex]) -> Relabelled {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let mut picked: Vec<(Edge, usize)> = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for &(w, id) in &self.adj[v] {
                let j = local[w];
                if j != usize::MAX && i < j {
                    picked.push(((i, j), id));
                }
            }
        }
        picked.sort_unstable();
        let edges = picked.iter().map(|&(e, _)| e).collect();
        let mut g = Self::from_sorted_unique(vertices.len(), edges);
        if let Some(c) = &self.colouring {
            g.colouring = Some(Colouring {
                palette: c.palette,
                colours: picked.iter().map(|&(_, id)| c.colours[id]).collect(),
            });
        }
        Relabelled {
            graph: g,
            to_parent: vertices.to_vec(),
        }
    }

    /// Whether every vertex can reach every other.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for w in self.neighbours(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// Call `emit(u, v)` with `u < v` for each pair of `0..n` independently with
/// probability `p`. Uses geometric skipping when `p` is small.
pub(crate) fn for_each_random_pair<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    mut emit: impl FnMut(Vertex, Vertex),
) {
    if n < 2 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for v in 1..n {
            for u in 0..v {
                emit(u, v);
            }
        }
        return;
    }
    if p < 0.1 {
        // Batagelj–Brandes skipping over the lower triangle in row order.
        let log_q = (1.0 - p).ln();
        let mut v: usize = 1;
        let mut w: i64 = -1;
        while v < n {
            let r: f64 = rng.gen();
            let skip = ((1.0 - r).ln() / log_q).floor();
            w += 1 + skip as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                emit(w as usize, v);
            }
        }
    } else {
        for v in 1..n {
            for u in 0..v {
                if rng.gen::<f64>() < p {
                    emit(u, v);
                }
            }
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::param(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Sample the binomial random graph G(n, p).
pub fn gen_gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<ColouredGraph> {
    check_probability(p)?;
    let mut edges = Vec::new();
    for_each_random_pair(n, p, rng, |u, v| edges.push((u, v)));
    edges.sort_unstable();
    Ok(ColouredGraph::from_sorted_unique(n, edges))
}

/// Shape of a dense seed graph with prescribed minimum degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SeedKind {
    Complete,
    /// Complete multipartite graph with near-equal parts.
    Multipartite { parts: usize },
    /// Disjoint union of near-equal cliques.
    CliqueUnion { cliques: usize },
    /// Random graph grown until every degree reaches the target.
    RandomSupergraph,
}

impl SeedKind {
    /// The clique union with as many cliques as the degree target allows.
    pub fn densest_clique_union(n: usize, delta: f64) -> Result<SeedKind> {
        let target = min_degree_target(n, delta);
        let cliques = (1..=n.max(1))
            .rev()
            .find(|&c| n / c > target)
            .ok_or_else(|| Error::param(format!("no clique union on {n} vertices has min degree {target}")))?;
        Ok(SeedKind::CliqueUnion { cliques })
    }
}

/// ⌈δn⌉, the minimum degree demanded of members of the dense family.
pub fn min_degree_target(n: usize, delta: f64) -> usize {
    (delta * n as f64 - 1e-9).ceil().max(0.0) as usize
}

fn near_equal_parts(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Build a seed graph on `n` vertices with minimum degree at least ⌈δn⌉.
pub fn gen_seed_graph<R: Rng + ?Sized>(
    n: usize,
    delta: f64,
    kind: SeedKind,
    rng: &mut R,
) -> Result<ColouredGraph> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta = {delta} must lie in (0, 1)")));
    }
    let target = min_degree_target(n, delta);
    let infeasible = |achieved: usize| {
        Error::param(format!(
            "{kind:?} on {n} vertices has minimum degree {achieved} < {target}"
        ))
    };
    let g = match kind {
        SeedKind::Complete => {
            if n.saturating_sub(1) < target {
                return Err(infeasible(n.saturating_sub(1)));
            }
            ColouredGraph::complete(n)
        }
        SeedKind::Multipartite { parts } => {
            if parts < 2 || parts > n {
                return Err(Error::param(format!("{parts} parts on {n} vertices")));
            }
            let sizes = near_equal_parts(n, parts);
            let achieved = n - sizes[0];
            if achieved < target {
                return Err(infeasible(achieved));
            }
            let mut part_of = Vec::with_capacity(n);
            for (i, &s) in sizes.iter().enumerate() {
                part_of.extend(std::iter::repeat_n(i, s));
            }
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if part_of[u] != part_of[v] {
                        edges.push((u, v));
                    }
                }
            }
            ColouredGraph::from_sorted_unique(n, edges)
        }
        SeedKind::CliqueUnion { cliques } => {
            if cliques == 0 || cliques > n {
                return Err(Error::param(format!("{cliques} cliques on {n} vertices")));
            }
            let sizes = near_equal_parts(n, cliques);
            let achieved = sizes[sizes.len() - 1].saturating_sub(1);
            if achieved < target {
                return Err(infeasible(achieved));
            }
            let mut edges = Vec::new();
            let mut start = 0;
            for s in sizes {
                for u in start..start + s {
                    for v in u + 1..start + s {
                        edges.push((u, v));
                    }
                }
                start += s;
            }
            ColouredGraph::from_sorted_unique(n, edges)
        }
        SeedKind::RandomSupergraph => {
            if n.saturating_sub(1) < target {
                return Err(infeasible(n.saturating_sub(1)));
            }
            let mut nbrs: Vec<BTreeSet<Vertex>> = vec![BTreeSet::new(); n];
            for v in 0..n {
                while nbrs[v].len() < target {
                    let w = rng.gen_range(0..n);
                    if w != v && nbrs[v].insert(w) {
                        nbrs[w].insert(v);
                    }
                }
            }
            let edges: Vec<Edge> = (0..n)
                .flat_map(|u| nbrs[u].iter().filter(move |&&w| w > u).map(move |&w| (u, w)))
                .collect();
            ColouredGraph::from_sorted_unique(n, edges)
        }
    };
    debug_assert!(g.min_degree() >= target || n == 0);
    Ok(g)
}

/// G ∪ G(n, p). The colouring of `g` is dropped; every edge of the random
/// graph R is flagged so that G \ E(R) can be formed later.
pub fn perturb<R: Rng + ?Sized>(g: &ColouredGraph, p: f64, rng: &mut R) -> Result<ColouredGraph> {
    check_probability(p)?;
    let mut random_edges = Vec::new();
    for_each_random_pair(g.n(), p, rng, |u, v| random_edges.push((u, v)));
    random_edges.sort_unstable();
    let mut merged = Vec::with_capacity(g.edge_count() + random_edges.len());
    let mut flags = Vec::with_capacity(merged.capacity());
    let (a, b) = (g.edges(), &random_edges);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            merged.push(a[i]);
            flags.push(false);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            merged.push(b[j]);
            flags.push(true);
            j += 1;
        } else {
            merged.push(a[i]);
            flags.push(true);
            i += 1;
            j += 1;
        }
    }
    Ok(ColouredGraph::from_sorted_unique(g.n(), merged).with_random_flags(flags))
}

/// Colour every edge independently and uniformly from `0..k`.
pub fn uniform_colouring<R: Rng + ?Sized>(
    g: &ColouredGraph,
    k: usize,
    rng: &mut R,
) -> Result<ColouredGraph> {
    if k == 0 {
        return Err(Error::param("palette size must be at least 1"));
    }
    let colours = (0..g.edge_count())
        .map(|_| rng.gen_range(0..k) as Colour)
        .collect();
    g.clone().with_colours(k, colours)
}

/// Whether the given edges carry pairwise distinct colours.
pub fn is_rainbow(g: &ColouredGraph, edges: &[Edge]) -> Result<bool> {
    if !g.is_coloured() {
        return Err(Error::Domain("graph carries no colouring".into()));
    }
    let mut seen = std::collections::HashSet::with_capacity(edges.len());
    let mut rainbow = true;
    for &(u, v) in edges {
        let c = g
            .colour_between(u, v)
            .ok_or_else(|| Error::Domain(format!("edge {u}-{v} is not in the graph")))?;
        rainbow &= seen.insert(c);
    }
    Ok(rainbow)
}

/// Γ(X): vertices outside `x` with at least one neighbour in `x`, ascending.
pub fn external_neighbourhood(g: &ColouredGraph, x: &[Vertex]) -> Vec<Vertex> {
    let mut in_x = vec![false; g.n()];
    for &v in x {
        in_x[v] = true;
    }
    let mut hit = vec![false; g.n()];
    for &v in x {
        for w in g.neighbours(v) {
            if !in_x[w] {
                hit[w] = true;
            }
        }
    }
    (0..g.n()).filter(|&v| hit[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use proptest::prelude::*;

    fn triangle(colours: [Colour; 3]) -> ColouredGraph {
        ColouredGraph::from_edges(3, [(0, 1), (0, 2), (1, 2)])
            .unwrap()
            .with_colours(3, colours.to_vec())
            .unwrap()
    }

    #[test]
    fn gnp_extremes() {
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(gen_gnp(5, 0.0, &mut rng).unwrap().edge_count(), 0);
        assert_eq!(gen_gnp(5, 1.0, &mut rng).unwrap().edge_count(), 10);
        assert!(gen_gnp(5, 1.5, &mut rng).is_err());
        assert!(gen_gnp(5, -0.1, &mut rng).is_err());
    }

    #[test]
    fn gnp_mean_edge_count() {
        // Binomial(19900, 1/2): mean 9950, sd sqrt(19900/4). The mean of 10^4
        // samples has sd 0.705; allow 3 of those.
        let mut rng = RandomSource::new(2, 0);
        let trials = 10_000;
        let total: usize = (0..trials)
            .map(|_| gen_gnp(200, 0.5, &mut rng).unwrap().edge_count())
            .sum();
        let mean = total as f64 / trials as f64;
        let sd_of_mean = (19900.0f64 * 0.25).sqrt() / (trials as f64).sqrt();
        assert!((mean - 9950.0).abs() < 3.0 * sd_of_mean, "mean {mean}");
    }

    #[test]
    fn gnp_sparse_pairs_are_symmetric() {
        // Every pair of K_6 should be hit about equally often under skipping.
        let mut rng = RandomSource::new(3, 0);
        let mut counts = [0usize; 15];
        let trials = 20_000;
        for _ in 0..trials {
            let g = gen_gnp(6, 0.05, &mut rng).unwrap();
            for &(u, v) in g.edges() {
                let idx = (0..u).map(|a| 5 - a).sum::<usize>() + (v - u - 1);
                counts[idx] += 1;
            }
        }
        let expected = trials as f64 * 0.05;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi^2 critical value for 14 d.o.f. at 0.001 is 36.12
        assert!(chi2 < 36.12, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn seed_graph_examples() {
        let mut rng = RandomSource::new(4, 0);
        let k10 = gen_seed_graph(10, 0.5, SeedKind::Complete, &mut rng).unwrap();
        assert_eq!(k10.min_degree(), 9);
        let two_k5 = gen_seed_graph(10, 0.3, SeedKind::CliqueUnion { cliques: 2 }, &mut rng).unwrap();
        assert_eq!(two_k5.min_degree(), 4);
        assert_eq!(two_k5.edge_count(), 20);
        assert!(gen_seed_graph(10, 0.95, SeedKind::CliqueUnion { cliques: 2 }, &mut rng).is_err());
        let mp = gen_seed_graph(12, 0.6, SeedKind::Multipartite { parts: 3 }, &mut rng).unwrap();
        assert_eq!(mp.min_degree(), 8);
        let rs = gen_seed_graph(40, 0.4, SeedKind::RandomSupergraph, &mut rng).unwrap();
        assert!(rs.min_degree() >= 16);
        assert_eq!(
            SeedKind::densest_clique_union(600, 0.4).unwrap(),
            SeedKind::CliqueUnion { cliques: 2 }
        );
    }

    #[test]
    fn perturb_examples() {
        let mut rng = RandomSource::new(5, 0);
        let k4 = ColouredGraph::complete(4);
        let same = perturb(&k4, 0.0, &mut rng).unwrap();
        assert_eq!(same.edges(), k4.edges());
        assert_eq!(same.random_edge_count(), 0);
        let empty = ColouredGraph::empty(30);
        let r = perturb(&empty, 0.3, &mut rng).unwrap();
        assert_eq!(r.random_edge_count(), r.edge_count());
    }

    #[test]
    fn colouring_examples() {
        let mut rng = RandomSource::new(6, 0);
        let k5 = ColouredGraph::complete(5);
        let mono = uniform_colouring(&k5, 1, &mut rng).unwrap();
        assert!(mono.colours().unwrap().iter().all(|&c| c == 0));
        let e = uniform_colouring(&ColouredGraph::empty(4), 7, &mut rng).unwrap();
        assert_eq!(e.colours().unwrap().len(), 0);
        assert!(uniform_colouring(&k5, 0, &mut rng).is_err());
    }

    #[test]
    fn colouring_chi_square_on_k4() {
        // 10^5 colourings of K4 with 3 colours; per-edge frequencies must be
        // uniform. Critical chi^2 for 2 d.o.f. at 0.01 is 9.210.
        let mut rng = RandomSource::new(7, 0);
        let k4 = ColouredGraph::complete(4);
        let mut counts = vec![[0usize; 3]; 6];
        let trials = 100_000;
        for _ in 0..trials {
            let g = uniform_colouring(&k4, 3, &mut rng).unwrap();
            for (id, &c) in g.colours().unwrap().iter().enumerate() {
                counts[id][c as usize] += 1;
            }
        }
        let expected = trials as f64 / 3.0;
        for row in counts {
            let chi2: f64 = row
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < 9.210, "chi2 = {chi2}");
        }
    }

    #[test]
    fn rainbow_examples() {
        assert!(is_rainbow(&triangle([0, 1, 2]), &[(0, 1), (0, 2), (1, 2)]).unwrap());
        assert!(!is_rainbow(&triangle([0, 0, 1]), &[(0, 1), (0, 2), (1, 2)]).unwrap());
        assert!(is_rainbow(&triangle([0, 0, 1]), &[(1, 2)]).unwrap());
        assert!(is_rainbow(&triangle([0, 0, 1]), &[(0, 3)]).is_err());
        let plain = ColouredGraph::complete(3);
        assert!(is_rainbow(&plain, &[(0, 1)]).is_err());
    }

    #[test]
    fn external_neighbourhood_examples() {
        let k4 = ColouredGraph::complete(4);
        assert_eq!(external_neighbourhood(&k4, &[0]), vec![1, 2, 3]);
        let path = ColouredGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(external_neighbourhood(&path, &[1]), vec![0, 2]);
        assert!(external_neighbourhood(&k4, &[0, 1, 2, 3]).is_empty());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(ColouredGraph::from_edges(3, [(1, 1)]).is_err());
        assert!(ColouredGraph::from_edges(3, [(0, 3)]).is_err());
        let g = ColouredGraph::from_edges(3, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.clone().with_colours(2, vec![2]).is_err());
        assert!(g.with_colours(2, vec![0, 1]).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = ColouredGraph> {
        (2usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n, 0u32..4), 0..30).prop_map(move |raw| {
                let pairs: Vec<_> = raw.iter().filter(|(u, v, _)| u != v).map(|&(u, v, _)| (u, v)).collect();
                let g = ColouredGraph::from_edges(n, pairs).unwrap();
                let colours = (0..g.edge_count()).map(|i| raw[i % raw.len().max(1)].2).collect();
                g.with_colours(4, colours).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn rainbow_iff_distinct_count(g in arb_graph(), mask in any::<u64>()) {
            let subset: Vec<Edge> = g.edges().iter().enumerate()
                .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            let distinct: BTreeSet<Colour> = subset.iter().map(|&(u, v)| g.colour_between(u, v).unwrap()).collect();
            prop_assert_eq!(is_rainbow(&g, &subset).unwrap(), distinct.len() == subset.len());
        }

        #[test]
        fn external_neighbourhood_disjoint_and_monotone(g in arb_graph(), mask in any::<u16>(), extra in (0usize..12, 0usize..12)) {
            let x: Vec<Vertex> = (0..g.n()).filter(|&v| mask >> v & 1 == 1).collect();
            let gamma = external_neighbourhood(&g, &x);
            prop_assert!(gamma.iter().all(|v| !x.contains(v)));
            let (a, b) = (extra.0 % g.n(), extra.1 % g.n());
            if a != b {
                let bigger = ColouredGraph::from_edges(g.n(), g.edges().iter().copied().chain([(a, b)])).unwrap();
                let gamma2 = external_neighbourhood(&bigger, &x);
                prop_assert!(gamma.iter().all(|v| gamma2.contains(v)));
            }
        }

        #[test]
        fn perturb_contains_seed(n in 2usize..25, p in 0.0f64..1.0, seed in any::<u64>()) {
            let mut rng = RandomSource::new(seed, 0);
            let g = gen_gnp(n, 0.3, &mut rng).unwrap();
            let h = perturb(&g, p, &mut rng).unwrap();
            prop_assert!(g.edges().iter().all(|&(u, v)| h.has_edge(u, v)));
            // removing R-edges leaves a subgraph of G
            let rest = h.without_random_edges();
            prop_assert!(rest.edges().iter().all(|&(u, v)| g.has_edge(u, v)));
        }
    }
}
