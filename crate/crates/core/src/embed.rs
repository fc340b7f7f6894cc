//! Rainbow embedding of almost-spanning bounded-degree trees into a random
//! coloured graph that is exposed one vertex block at a time.
//!
//! The tree is cut into small subtrees. Each subtree gets a fresh vertex
//! block whose internal pairs are exposed only when its turn comes; the block
//! is sparsified into a rainbow graph over the colours still available, an
//! effective expander is peeled out of it, and the subtree is embedded there,
//! hanging from a vertex of an earlier block through edges coloured from a
//! small reserved palette.

use std::collections::{BTreeMap, HashMap};

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ExpandItem, Failure, Result};
use crate::expander::{
    attach_vertex, find_effective_expander, sparsify, sparsify_keep_all, CheckMode, ExpandParams, Sparsified,
};
use crate::graph::{canonical, ColouredGraph, Colour, Edge, Vertex};
use crate::tree::{compute_root_sets, decompose_with_window, Node, Tree};

/// How many edges the sparsification keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsifyTarget {
    /// n/4 edges in the first block and εn/4 in every later one.
    Proof,
    /// Every edge that survives the one-edge-per-colour step.
    AllSurvivors,
}

/// Which degree scale C the effective expander is peeled to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeScale {
    /// C = (4ξ)⁻² in the first block and ε(4ξ)⁻² later, ξ = |X_i|/n.
    Proof,
    /// C = a quarter of the sparsified block's mean degree (at least 1.5).
    MeanDegree,
}

/// Tunable constants. The defaults follow the proofs; the knobs exist because
/// small n cannot honour asymptotic smallness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_beta: f64,
    pub c_rho: f64,
    pub sparsify: SparsifyTarget,
    pub degree_scale: DegreeScale,
    /// Random sets per size in the sampled expansion check.
    pub expander_trials: usize,
    /// Independent attempts of the greedy tree embedder.
    pub embed_restarts: usize,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c_beta: 0.01,
            c_rho: 0.01,
            sparsify: SparsifyTarget::Proof,
            degree_scale: DegreeScale::Proof,
            expander_trials: 2,
            embed_restarts: 16,
        }
    }
}

/// Derived parameters of the almost-spanning pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub n: usize,
    pub eps: f64,
    pub d: usize,
    /// ζ = ε/(2(1−ε)).
    pub zeta: f64,
    /// β = c_β·ζε/(d⁴ ln ζ⁻¹).
    pub beta: f64,
    /// ρ = c_ρ·ε.
    pub rho: f64,
    /// Piece-size fraction ξ = (1 − 3ζ/2)β.
    pub xi: f64,
    /// Reservoir size ⌊ρn⌋.
    pub reservoir: usize,
    pub constants: Constants,
}

impl PipelineParams {
    /// |X_i| for a subtree on `nodes` nodes: ⌊(1 + 3ζ/2)·nodes⌋.
    pub fn block_size(&self, nodes: usize) -> usize {
        ((1.0 + 1.5 * self.zeta) * nodes as f64 + 1e-9).floor() as usize
    }

    /// Largest number of reservoir colours `s` pieces may consume.
    pub fn leak_bound(&self, s: usize) -> usize {
        s * (self.d + 2) * (self.d + 2)
    }

    /// Sparsification target for the block of piece `i` (0-based).
    pub fn sparsify_target(&self, i: usize) -> usize {
        if i == 0 {
            self.n / 4
        } else {
            (self.eps * self.n as f64 / 4.0 + 1e-9).floor() as usize
        }
    }
}

pub fn derive_parameters(eps: f64, d: usize, n: usize) -> Result<PipelineParams> {
    derive_parameters_with(eps, d, n, Constants::default())
}

/// Set ζ to its maximum and β, ρ to their caps with the given constants.
pub fn derive_parameters_with(eps: f64, d: usize, n: usize, constants: Constants) -> Result<PipelineParams> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("ε = {eps} outside (0, 1)")));
    }
    if d < 2 {
        return Err(Error::param(format!("degree bound d = {d} must be at least 2")));
    }
    if !(constants.c_beta > 0.0 && constants.c_rho > 0.0) {
        return Err(Error::param("c_β and c_ρ must be positive"));
    }
    let zeta = eps / (2.0 * (1.0 - eps));
    if zeta >= 1.0 {
        return Err(Error::param(format!(
            "ε = {eps} gives ζ = {zeta} ≥ 1, where ln ζ⁻¹ is not positive"
        )));
    }
    let beta = constants.c_beta * zeta * eps / ((d as f64).powi(4) * (1.0 / zeta).ln());
    let rho = constants.c_rho * eps;
    let xi = (1.0 - 1.5 * zeta) * beta;
    if xi * (n as f64) < d as f64 {
        let min_n = (d as f64 / xi).ceil();
        return Err(Error::param(format!(
            "ξn/d = {:.3e} < 1 at n = {n}; these parameters need n ≥ {min_n:.0}",
            xi * n as f64 / d as f64
        )));
    }
    Ok(PipelineParams {
        n,
        eps,
        d,
        zeta,
        beta,
        rho,
        xi,
        reservoir: (rho * n as f64 + 1e-9).floor() as usize,
        constants,
    })
}

/// Record of every pair of the random host whose status (and colour, when
/// present) has been revealed.
#[derive(Clone, Debug, Default)]
pub struct ExposureLedger {
    /// Exposed block of each vertex, if any. All pairs inside a block are
    /// exposed together.
    block: Vec<Option<u32>>,
    blocks: u32,
    /// Pairs exposed one at a time, outside any block.
    pairs: HashMap<Edge, Option<Colour>>,
    /// Colours of every exposed pair that turned out to be an edge.
    present: HashMap<Edge, Colour>,
    touched: Vec<bool>,
    all_exposed: bool,
}

impl ExposureLedger {
    pub fn new(n: usize) -> Self {
        ExposureLedger {
            block: vec![None; n],
            touched: vec![false; n],
            ..Default::default()
        }
    }

    pub fn n(&self) -> usize {
        self.block.len()
    }

    /// Whether any exposed pair has an endpoint in `vertices`.
    pub fn touches_any(&self, vertices: &[Vertex]) -> bool {
        vertices.iter().any(|&v| self.touched[v])
    }

    pub fn touches(&self, v: Vertex) -> bool {
        self.touched[v]
    }

    pub fn is_exposed(&self, u: Vertex, v: Vertex) -> bool {
        if self.all_exposed {
            return true;
        }
        let e = canonical(u, v);
        matches!((self.block[u], self.block[v]), (Some(a), Some(b)) if a == b) || self.pairs.contains_key(&e)
    }

    /// Colour of `uv` if it has been exposed and is an edge.
    pub fn colour(&self, u: Vertex, v: Vertex) -> Option<Colour> {
        self.present.get(&canonical(u, v)).copied()
    }

    /// Every exposed edge with its colour, sorted.
    pub fn present_edges(&self) -> Vec<(Edge, Colour)> {
        let mut out: Vec<(Edge, Colour)> = self.present.iter().map(|(&e, &c)| (e, c)).collect();
        out.sort_unstable();
        out
    }

    /// Expose all pairs inside `vertices`; `edges` lists those that are
    /// edges. Fails if any of the vertices was touched before.
    pub fn expose_block(&mut self, vertices: &[Vertex], edges: impl IntoIterator<Item = (Edge, Colour)>) -> Result<()> {
        if self.all_exposed || self.touches_any(vertices) {
            return Err(Error::Contract("block exposure meets an already exposed pair".into()));
        }
        let id = self.blocks;
        self.blocks += 1;
        for &v in vertices {
            self.block[v] = Some(id);
            self.touched[v] = true;
        }
        for (e, c) in edges {
            let e = canonical(e.0, e.1);
            if self.block[e.0] != Some(id) || self.block[e.1] != Some(id) {
                return Err(Error::Contract("block edge leaves its block".into()));
            }
            self.present.insert(e, c);
        }
        Ok(())
    }

    /// Expose a single pair with its outcome (`Some(colour)` for an edge).
    pub fn expose_pair(&mut self, u: Vertex, v: Vertex, outcome: Option<Colour>) -> Result<()> {
        if u == v {
            return Err(Error::Domain("cannot expose a loop".into()));
        }
        if self.is_exposed(u, v) {
            return Err(Error::Contract(format!("pair {u}-{v} exposed twice")));
        }
        let e = canonical(u, v);
        self.pairs.insert(e, outcome);
        if let Some(c) = outcome {
            self.present.insert(e, c);
        }
        self.touched[u] = true;
        self.touched[v] = true;
        Ok(())
    }

    /// Expose every remaining pair: each becomes an edge independently with
    /// probability `p` and gets a uniform colour from `palette`.
    pub fn expose_rest<R: Rng + ?Sized>(&mut self, p: f64, palette: usize, rng: &mut R) -> Result<()> {
        if self.all_exposed {
            return Ok(());
        }
        let n = self.n();
        let mut fresh = Vec::new();
        crate::graph::for_each_random_pair(n, p, rng, |u, v| fresh.push((u, v)));
        for (u, v) in fresh {
            if !self.is_exposed(u, v) {
                let c = rng.gen_range(0..palette) as Colour;
                self.present.insert((u, v), c);
            }
        }
        self.all_exposed = true;
        self.touched.iter_mut().for_each(|t| *t = true);
        Ok(())
    }

    /// The exposed graph with its colouring.
    pub fn to_graph(&self, palette: usize) -> Result<ColouredGraph> {
        let edges = self.present_edges();
        let g = ColouredGraph::from_sorted_unique(self.n(), edges.iter().map(|&(e, _)| e).collect());
        g.with_colours(palette, edges.iter().map(|&(_, c)| c).collect())
    }
}

/// Mutable state of a pipeline run.
#[derive(Clone, Debug)]
pub struct EmbeddingState {
    /// Host vertex of each tree node placed so far.
    pub map: Vec<Option<Vertex>>,
    /// Colours on embedded tree edges.
    pub used: FixedBitSet,
    /// The colour reservoir.
    pub reservoir: FixedBitSet,
    pub ledger: ExposureLedger,
}

impl EmbeddingState {
    pub fn new(nodes: usize, n: usize, palette: usize, reservoir: usize) -> Self {
        let mut r = FixedBitSet::with_capacity(palette);
        r.insert_range(..reservoir.min(palette));
        EmbeddingState {
            map: vec![None; nodes],
            used: FixedBitSet::with_capacity(palette),
            reservoir: r,
            ledger: ExposureLedger::new(n),
        }
    }

    /// Colours neither used nor reserved.
    pub fn available(&self) -> FixedBitSet {
        let mut a = self.used.clone();
        a.union_with(&self.reservoir);
        a.toggle_range(..);
        a
    }

    /// Reservoir colours not yet used.
    pub fn reservoir_left(&self) -> FixedBitSet {
        let mut r = self.reservoir.clone();
        r.difference_with(&self.used);
        r
    }

    pub fn reservoir_used(&self) -> usize {
        self.used.intersection_count(&self.reservoir)
    }
}

/// Number of distinct colours of `a` among `colours`.
pub fn colour_coverage(colours: &[Colour], a: &FixedBitSet) -> usize {
    let mut seen = FixedBitSet::with_capacity(a.len());
    for &c in colours {
        if (c as usize) < a.len() && a.contains(c as usize) {
            seen.insert(c as usize);
        }
    }
    seen.count_ones(..)
}

/// Embed `tree` into `h`, with `root_node` on `root_vertex` when given.
///
/// Places nodes in breadth-first order, each on a free neighbour of its
/// parent's image with the most free neighbours. When a node has no free
/// candidate, an already placed childless node occupying a candidate is
/// moved to another free neighbour of its own parent's image; at most v(T)
/// such moves are made per attempt. Later attempts break ties at random.
pub fn embed_rooted_tree<R: Rng + ?Sized>(
    h: &ColouredGraph,
    tree: &Tree,
    root_node: Node,
    root_vertex: Option<Vertex>,
    rng: &mut R,
) -> Result<Vec<Vertex>> {
    embed_with_restarts(h, tree, root_node, root_vertex, Constants::default().embed_restarts, rng)
}

fn embed_with_restarts<R: Rng + ?Sized>(
    h: &ColouredGraph,
    tree: &Tree,
    root_node: Node,
    root_vertex: Option<Vertex>,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<Vertex>> {
    let m = tree.node_count();
    let n = h.n();
    if root_node >= m {
        return Err(Error::Domain(format!("root node {root_node} outside the tree")));
    }
    if let Some(rv) = root_vertex {
        if rv >= n {
            return Err(Error::Domain(format!("root vertex {rv} outside the host")));
        }
    }
    if m > n {
        return Err(Error::Precondition(format!("tree on {m} nodes cannot fit in {n} vertices")));
    }
    let (order, parent) = tree.bfs(root_node);
    let mut best = 0;
    for attempt in 0..restarts.max(1) {
        match embed_attempt(h, tree, &order, &parent, root_vertex, attempt > 0, rng) {
            Ok(map) => return Ok(map),
            Err(placed) => best = best.max(placed),
        }
    }
    Err(Failure::Embed { placed: best, total: m }.into())
}

const FREE: usize = usize::MAX;

struct Placement<'a> {
    h: &'a ColouredGraph,
    f: Vec<usize>,
    owner: Vec<usize>,
    free_deg: Vec<usize>,
}

impl Placement<'_> {
    fn place(&mut self, x: Node, v: Vertex) {
        self.f[x] = v;
        self.owner[v] = x;
        for w in self.h.neighbours(v) {
            self.free_deg[w] -= 1;
        }
    }

    fn unplace(&mut self, x: Node) {
        let v = self.f[x];
        self.owner[v] = FREE;
        self.f[x] = FREE;
        for w in self.h.neighbours(v) {
            self.free_deg[w] += 1;
        }
    }

    /// Free neighbour of `v` for a node with `need` children: the one with
    /// the most free neighbours, or for leaves the one with the fewest, so
    /// that well-connected vertices stay available.
    fn best_free_neighbour<R: Rng + ?Sized>(&self, v: Vertex, need: usize, jitter: bool, rng: &mut R) -> Option<Vertex> {
        let mut best: Option<(i64, u32, Vertex)> = None;
        for w in self.h.neighbours(v) {
            if self.owner[w] != FREE {
                continue;
            }
            let tie = if jitter { rng.gen::<u32>() } else { u32::MAX - w as u32 };
            let free = self.free_deg[w] as i64;
            let score = if need == 0 { -free } else { free };
            let key = (score, tie, w);
            if best.is_none_or(|b| (key.0, key.1) > (b.0, b.1)) {
                best = Some(key);
            }
        }
        best.map(|b| b.2)
    }
}

fn embed_attempt<R: Rng + ?Sized>(
    h: &ColouredGraph,
    tree: &Tree,
    order: &[Node],
    parent: &[Option<Node>],
    root_vertex: Option<Vertex>,
    jitter: bool,
    rng: &mut R,
) -> std::result::Result<Vec<Vertex>, usize> {
    let m = tree.node_count();
    let mut st = Placement {
        h,
        f: vec![FREE; m],
        owner: vec![FREE; h.n()],
        free_deg: h.degrees(),
    };
    let root = order[0];
    let children = |x: Node| tree.degree(x) - usize::from(parent[x].is_some());
    let rv = match root_vertex {
        Some(v) => v,
        None => {
            let need = children(root);
            (0..h.n())
                .filter(|&v| h.degree(v) >= need)
                .max_by_key(|&v| (h.degree(v), if jitter { rng.gen::<u32>() } else { u32::MAX - v as u32 }))
                .ok_or(0usize)?
        }
    };
    st.place(root, rv);
    let mut budget = m;
    for (placed, &x) in order.iter().enumerate().skip(1) {
        let hp = st.f[parent[x].expect("non-root has a parent")];
        if let Some(w) = st.best_free_neighbour(hp, children(x), jitter, rng) {
            st.place(x, w);
            continue;
        }
        // Free a candidate by moving a childless occupant elsewhere.
        let mut moved = false;
        for w in h.neighbours(hp) {
            let y = st.owner[w];
            if y == FREE || y == root || budget == 0 {
                continue;
            }
            let has_placed_child = tree
                .neighbours(y)
                .iter()
                .any(|&c| parent[c] == Some(y) && st.f[c] != FREE);
            if has_placed_child {
                continue;
            }
            let py = st.f[parent[y].expect("non-root occupant")];
            if let Some(w2) = st.best_free_neighbour(py, children(y), jitter, rng) {
                budget -= 1;
                st.unplace(y);
                st.place(y, w2);
                st.place(x, w);
                moved = true;
                break;
            }
        }
        if !moved {
            return Err(placed);
        }
    }
    Ok(st.f)
}

/// Rainbow reservoir-coloured edges found from a root into a block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootEdges {
    /// `(target, colour)` pairs, rainbow, colours in the given reservoir.
    pub edges: Vec<(Vertex, Colour)>,
    /// Pairs that turned out to be edges (any colour).
    pub present: usize,
}

/// Expose the pairs from `r` to each target, colour the edges uniformly and
/// collect a rainbow set of edges with colours in `reservoir`, scanning
/// targets in the given order and keeping the first edge of each colour.
pub(crate) fn expose_root_edges<R: Rng + ?Sized>(
    r: Vertex,
    targets: &[Vertex],
    p: f64,
    palette: usize,
    reservoir: &FixedBitSet,
    ledger: &mut ExposureLedger,
    rng: &mut R,
) -> Result<RootEdges> {
    let mut seen = FixedBitSet::with_capacity(palette);
    let mut out = RootEdges {
        edges: Vec::new(),
        present: 0,
    };
    for &v in targets {
        if ledger.is_exposed(r, v) {
            return Err(Error::Contract(format!("root pair {r}-{v} was already exposed")));
        }
        let outcome = if rng.gen_bool(p) {
            Some(rng.gen_range(0..palette) as Colour)
        } else {
            None
        };
        ledger.expose_pair(r, v, outcome)?;
        if let Some(c) = outcome {
            out.present += 1;
            let ci = c as usize;
            if reservoir.contains(ci) && !seen.contains(ci) {
                seen.insert(ci);
                out.edges.push((v, c));
            }
        }
    }
    Ok(out)
}

/// Expose edges from `r` into `targets` and return `needed` of them forming
/// a rainbow set coloured from `reservoir`. Every pair is recorded in the
/// ledger whatever the outcome.
pub fn select_root_edges<R: Rng + ?Sized>(
    r: Vertex,
    targets: &[Vertex],
    p: f64,
    palette: usize,
    reservoir: &FixedBitSet,
    needed: usize,
    ledger: &mut ExposureLedger,
    rng: &mut R,
) -> Result<RootEdges> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("probability {p} outside [0, 1]")));
    }
    if needed == 0 {
        return Ok(RootEdges {
            edges: Vec::new(),
            present: 0,
        });
    }
    let mut found = expose_root_edges(r, targets, p, palette, reservoir, ledger, rng)?;
    if found.edges.len() < needed {
        return Err(Failure::RootEdges {
            found: found.edges.len(),
            needed,
        }
        .into());
    }
    found.edges.truncate(needed);
    Ok(found)
}

/// What the validity suite checked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    pub nodes: usize,
    pub edges: usize,
    pub reservoir_used: usize,
    pub leak_bound: usize,
    pub ledger_audits: usize,
}

/// Check that `map` embeds `tree` injectively onto edges that exist (per
/// `colour_of`), that the image re-derives to `tree`, and that it is
/// rainbow. Returns the edge colours in `tree.edges()` order.
pub fn validate_tree_embedding(
    tree: &Tree,
    map: &[Vertex],
    n: usize,
    colour_of: impl Fn(Vertex, Vertex) -> Option<Colour>,
) -> Result<Vec<Colour>> {
    let m = tree.node_count();
    if map.len() != m {
        return Err(Error::Contract(format!("map covers {} of {m} nodes", map.len())));
    }
    let mut preimage = vec![usize::MAX; n];
    for (x, &v) in map.iter().enumerate() {
        if v >= n {
            return Err(Error::Contract(format!("node {x} mapped outside the host")));
        }
        if preimage[v] != usize::MAX {
            return Err(Error::Contract(format!("injectivity: nodes {} and {x} share vertex {v}", preimage[v])));
        }
        preimage[v] = x;
    }
    let tree_edges = tree.edges();
    let mut colours = Vec::with_capacity(tree_edges.len());
    let mut image = Vec::with_capacity(tree_edges.len());
    for &(x, y) in &tree_edges {
        let (u, v) = (map[x], map[y]);
        let c = colour_of(u, v)
            .ok_or_else(|| Error::Contract(format!("edge presence: {u}-{v} (image of {x}-{y}) is not a host edge")))?;
        colours.push(c);
        image.push(canonical(u, v));
    }
    let back: Vec<(Node, Node)> = image.iter().map(|&(u, v)| (preimage[u], preimage[v])).collect();
    let rederived = Tree::from_edges(m, &back, tree.degree_bound().max(tree.max_degree()))
        .map_err(|e| Error::Contract(format!("isomorphism: image does not re-derive a tree ({e})")))?;
    if rederived.edges() != tree_edges {
        return Err(Error::Contract("isomorphism: image re-derives a different tree".into()));
    }
    let mut sorted = colours.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Contract("rainbow: two tree edges share a colour".into()));
    }
    Ok(colours)
}

/// A successful almost-spanning embedding.
#[derive(Clone, Debug)]
pub struct AlmostEmbedding {
    /// Host vertex of every tree node.
    pub map: Vec<Vertex>,
    /// Colours of the tree edges, in `tree.edges()` order.
    pub colours: Vec<Colour>,
    pub state: EmbeddingState,
    pub params: PipelineParams,
    pub pieces: usize,
    pub report: ValidityReport,
}

/// Outcome of a pipeline run with its trace.
#[derive(Clone, Debug)]
pub struct Run<T> {
    /// One line per stage: `stage=<name> status=<ok|fail> detail=<counts>`.
    pub trace: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub outcome: std::result::Result<T, Failure>,
}

impl<T> Run<T> {
    pub fn is_success(&self) -> bool {
        self.outcome.is_ok()
    }

    pub(crate) fn stage(&mut self, name: &str, ok: bool, detail: String) {
        let status = if ok { "ok" } else { "fail" };
        self.trace.push(format!("stage={name} status={status} detail={detail}"));
    }

    pub(crate) fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub(crate) fn fail(mut self, name: &str, failure: Failure) -> Self {
        self.stage(name, false, failure.to_string().replace(' ', "_"));
        self.outcome = Err(failure);
        self
    }
}

pub type AlmostRun = Run<AlmostEmbedding>;

/// Embed `tree` (at most (1−ε)n nodes, maximum degree ≤ d) rainbow into a
/// lazily exposed G(n, p) with a uniform `palette`-colouring.
///
/// Random-stage failures end the run with `outcome = Err(failure)`; the
/// returned `Err` is reserved for invalid parameters and internal contract
/// violations. Every success has passed [`validate_tree_embedding`] and the
/// reservoir and ledger audits.
pub fn embed_almost_spanning<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    palette: usize,
    tree: &Tree,
    eps: f64,
    d: usize,
    constants: &Constants,
    rng: &mut R,
) -> Result<AlmostRun> {
    almost_spanning_inner(n, p, palette, tree, eps, d, constants, false, rng)
}

/// The pipeline body. With `spanning_ok`, trees on up to n nodes are
/// accepted (the block allocation then decides whether they fit).
#[allow(clippy::too_many_arguments)]
pub(crate) fn almost_spanning_inner<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    palette: usize,
    tree: &Tree,
    eps: f64,
    d: usize,
    constants: &Constants,
    spanning_ok: bool,
    rng: &mut R,
) -> Result<AlmostRun> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("probability {p} outside [0, 1]")));
    }
    if palette < n {
        return Err(Error::param(format!("palette {palette} smaller than n = {n}")));
    }
    let m = tree.node_count();
    let limit = if spanning_ok { n as f64 } else { (1.0 - eps) * n as f64 };
    if m as f64 > limit + 1e-9 {
        return Err(Error::param(format!("tree on {m} nodes exceeds (1-ε)n")));
    }
    if tree.max_degree() > d {
        return Err(Error::param(format!("tree has maximum degree {} > d = {d}", tree.max_degree())));
    }
    let mut run = Run {
        trace: Vec::new(),
        metrics: BTreeMap::new(),
        outcome: Err(Failure::Embed { placed: 0, total: m }),
    };
    let params = derive_parameters_with(eps, d, n, *constants)?;
    run.stage(
        "params",
        true,
        format!(
            "zeta={:.4},beta={:.4e},rho={:.4e},xi={:.4e},reservoir={}",
            params.zeta, params.beta, params.rho, params.xi, params.reservoir
        ),
    );
    let mut state = EmbeddingState::new(m, n, palette, params.reservoir);
    if m == 1 {
        state.map[0] = Some(0);
        let report = ValidityReport {
            nodes: 1,
            edges: 0,
            reservoir_used: 0,
            leak_bound: params.leak_bound(1),
            ledger_audits: 0,
        };
        run.stage("embed", true, "trivial".into());
        run.outcome = Ok(AlmostEmbedding {
            map: vec![0],
            colours: Vec::new(),
            state,
            params,
            pieces: 1,
            report,
        });
        return Ok(run);
    }
    let dec = decompose_with_window(tree, d, params.xi * n as f64)?;
    let roots = compute_root_sets(&dec, tree);
    let s = dec.len();
    let sizes: Vec<usize> = roots.augmented.iter().map(|a| params.block_size(a.len())).collect();
    let total: usize = sizes.iter().sum();
    run.metric("pieces", s as f64);
    run.metric("blocks_total", total as f64);
    run.stage("decompose", true, format!("pieces={s},blocks_total={total}"));
    if total > n {
        return Ok(run.fail("blocks", Failure::Blocks { required: total, n }));
    }
    let mut start = 0;
    let mut audits = 0;
    for i in 0..s {
        let block: Vec<Vertex> = (start..start + sizes[i]).collect();
        start += sizes[i];
        // No pair meeting this block may have been exposed yet.
        if state.ledger.touches_any(&block) {
            return Err(Error::Contract(format!("block {i} was exposed before its stage")));
        }
        audits += 1;

        let available = state.available();
        let avail = available.count_ones(..);
        if (avail as f64) < eps * n as f64 / 2.0 - 1e-9 {
            let required = (eps * n as f64 / 2.0).ceil() as usize;
            return Ok(run.fail("colours", Failure::Colours { available: avail, required }));
        }
        let target = params.sparsify_target(i);
        let sparse = match constants.sparsify {
            SparsifyTarget::Proof => sparsify(&block, p, palette, &available, target.min(avail), rng),
            SparsifyTarget::AllSurvivors => sparsify_keep_all(&block, p, palette, &available, rng),
        };
        let sparse: Sparsified = match sparse {
            Ok(sp) => sp,
            Err(Error::Failure(f)) => {
                // The block's pairs were sampled even though the stage failed.
                return Ok(run.fail("sparsify", f));
            }
            Err(e) => return Err(e),
        };
        state.ledger.expose_block(
            &block,
            sparse.exposed.iter().map(|&((a, b), c)| ((block[a], block[b]), c)),
        )?;
        let h = &sparse.sub.graph;
        run.stage(
            "sparsify",
            true,
            format!(
                "piece={i},block={},raw={},survivors={},edges={}",
                block.len(),
                sparse.exposed.len(),
                sparse.surviving,
                h.edge_count()
            ),
        );

        let xi_i = block.len() as f64 / n as f64;
        let (c_proof, eta, r) = if i == 0 {
            ((4.0 * xi_i).powi(-2), 1.0 / (2 * d + 2) as f64, d + 1)
        } else {
            (eps * (4.0 * xi_i).powi(-2), 1.0 / (2 * d + 1) as f64, d + 2)
        };
        // For d < 3 the later-stage η exceeds 1/(r+2); clamp it into range.
        let eta = eta.min(1.0 / (r + 2) as f64);
        let c = match constants.degree_scale {
            DegreeScale::Proof => c_proof,
            DegreeScale::MeanDegree => {
                let mean = 2.0 * h.edge_count() as f64 / h.n().max(1) as f64;
                (mean / 4.0).max(1.5)
            }
        };
        let expand = match ExpandParams::new(params.zeta / 2.0, c, eta, r) {
            Ok(e) => e,
            Err(e) => {
                return Ok(run.fail(
                    "expander",
                    Failure::Expander {
                        item: ExpandItem::DegreeBand,
                        detail: format!("C = {c:.3}: {e}"),
                    },
                ))
            }
        };
        let mode = CheckMode::sampled(constants.expander_trials, rng.gen());
        let eff = match find_effective_expander(h, &expand, mode) {
            Ok(e) => e,
            Err(Error::Failure(f)) => return Ok(run.fail("expander", f)),
            Err(e) => return Err(e),
        };
        let tree_i = tree.induced(&roots.augmented[i])?;
        let hosted = if i == 0 { tree_i.node_count() } else { tree_i.node_count() - 1 };
        let h1 = &eff.sub;
        let h1_global: Vec<Vertex> = h1.to_parent.iter().map(|&v| block[v]).collect();
        if h1.graph.n() < hosted {
            return Ok(run.fail(
                "expander",
                Failure::Expander {
                    item: ExpandItem::Size,
                    detail: format!("effective expander has {} vertices, subtree needs {hosted}", h1.graph.n()),
                },
            ));
        }
        run.stage(
            "expander",
            true,
            format!(
                "piece={i},C={c:.3},kept={},removed={},certified={}",
                h1.graph.n(),
                eff.removed,
                eff.certified
            ),
        );

        let local_map = if i == 0 {
            match embed_with_restarts(&h1.graph, &tree_i, 0, None, constants.embed_restarts, rng) {
                Ok(mp) => mp.into_iter().map(|v| h1_global[v]).collect::<Vec<_>>(),
                Err(Error::Failure(f)) => return Ok(run.fail("embed", f)),
                Err(e) => return Err(e),
            }
        } else {
            let (top, _) = dec.connecting[i].expect("later pieces have a connecting edge");
            let root_local = roots.augmented[i]
                .binary_search(&top)
                .expect("piece top lies in its augmented tree");
            let r_vertex = state.map[top].ok_or_else(|| Error::Contract(format!("root of piece {i} not yet placed")))?;
            let need = tree_i.degree(root_local).max(1);
            let wanted = (d + 2) * (d + 2);
            let found = expose_root_edges(
                r_vertex,
                &h1_global,
                p,
                palette,
                &state.reservoir_left(),
                &mut state.ledger,
                rng,
            )?;
            let mut chosen = found.edges.clone();
            chosen.truncate(wanted);
            run.metric(&format!("root_edges_{i}"), chosen.len() as f64);
            if chosen.len() < need {
                return Ok(run.fail(
                    "root-edges",
                    Failure::RootEdges {
                        found: chosen.len(),
                        needed: need,
                    },
                ));
            }
            run.stage(
                "root-edges",
                true,
                format!(
                    "piece={i},present={},rainbow={},wanted={wanted},degraded={}",
                    found.present,
                    chosen.len(),
                    chosen.len() < wanted
                ),
            );
            let mut local_of = HashMap::new();
            for (loc, &g) in h1_global.iter().enumerate() {
                local_of.insert(g, loc);
            }
            let targets: Vec<Vertex> = chosen.iter().map(|(v, _)| local_of[v]).collect();
            let h2 = attach_vertex(&h1.graph, &targets)?;
            let k = h1.graph.n();
            match embed_with_restarts(&h2, &tree_i, root_local, Some(k), constants.embed_restarts, rng) {
                Ok(mp) => mp
                    .into_iter()
                    .map(|v| if v == k { r_vertex } else { h1_global[v] })
                    .collect(),
                Err(Error::Failure(f)) => return Ok(run.fail("embed", f)),
                Err(e) => return Err(e),
            }
        };

        for (loc, &x) in roots.augmented[i].iter().enumerate() {
            match state.map[x] {
                Some(v) if v == local_map[loc] => {}
                Some(_) => return Err(Error::Contract(format!("node {x} re-placed in piece {i}"))),
                None => state.map[x] = Some(local_map[loc]),
            }
        }
        for (a, b) in tree_i.edges() {
            let (x, y) = (roots.augmented[i][a], roots.augmented[i][b]);
            let (u, v) = (state.map[x].unwrap(), state.map[y].unwrap());
            let c = state
                .ledger
                .colour(u, v)
                .ok_or_else(|| Error::Contract(format!("tree edge {u}-{v} was never exposed")))?;
            if state.used.contains(c as usize) {
                return Err(Error::Contract(format!("colour {c} used twice")));
            }
            state.used.insert(c as usize);
        }
        run.stage("embed", true, format!("piece={i},nodes={}", tree_i.node_count()));
    }

    let map: Vec<Vertex> = state
        .map
        .iter()
        .map(|v| v.ok_or_else(|| Error::Contract("tree node left unplaced".into())))
        .collect::<Result<_>>()?;
    let colours = validate_tree_embedding(tree, &map, n, |u, v| state.ledger.colour(u, v))?;
    let reservoir_used = state.reservoir_used();
    let leak_bound = params.leak_bound(s);
    if reservoir_used > leak_bound {
        return Err(Error::Contract(format!(
            "reservoir leak {reservoir_used} exceeds s(d+2)² = {leak_bound}"
        )));
    }
    let report = ValidityReport {
        nodes: m,
        edges: colours.len(),
        reservoir_used,
        leak_bound,
        ledger_audits: audits,
    };
    run.metric("reservoir_used", reservoir_used as f64);
    run.stage("validate", true, format!("edges={},reservoir_used={reservoir_used}", colours.len()));
    run.outcome = Ok(AlmostEmbedding {
        map,
        colours,
        state,
        params,
        pieces: s,
        report,
    });
    Ok(run)
}
