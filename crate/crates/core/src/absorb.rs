//! Absorbers and the spanning pipeline on randomly perturbed graphs.
//!
//! An almost-spanning part of the tree is embedded rainbow into the random
//! graph R, whose location is then re-randomised by a uniform permutation.
//! The remaining tree nodes are attached one by one: each leftover vertex v
//! swaps in for an absorber x, a resolved tree vertex all of whose tree
//! neighbours are adjacent to v, while x takes the new leaf.

use std::collections::{BTreeMap, HashMap};

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{almost_spanning_inner, validate_tree_embedding, Constants, Run, ValidityReport};
use crate::error::{Error, Failure, Result};
use crate::graph::{canonical, min_degree_target, ColouredGraph, Colour, Edge, Vertex};
use crate::tree::{build_i0, trim_to_size, Node, Tree};

/// The absorption ε from the proof, (δ/(4d))^{d+1} / (10d²).
pub fn proof_eps(delta: f64, d: usize) -> f64 {
    (delta / (4.0 * d as f64)).powi(d as i32 + 1) / (10.0 * (d * d) as f64)
}

/// The lower bound (δ/(4d))^{d+1}·n/(5d²) on |B_j(u, v)|.
pub fn large_b_bound(delta: f64, d: usize, n: usize) -> f64 {
    (delta / (4.0 * d as f64)).powi(d as i32 + 1) * n as f64 / (5.0 * (d * d) as f64)
}

/// A coloured graph moved by a vertex permutation.
#[derive(Clone, Debug)]
pub struct ShiftedColouredGraph {
    pub base: ColouredGraph,
    /// `pi[v]` is the image of vertex `v`.
    pub pi: Vec<Vertex>,
    pub shifted: ColouredGraph,
}

/// Apply the permutation `pi`, transporting colours with the edges.
pub fn shift_by(base: &ColouredGraph, pi: Vec<Vertex>) -> Result<ShiftedColouredGraph> {
    let n = base.n();
    let palette = base
        .palette()
        .ok_or_else(|| Error::Domain("randomness shift needs a coloured graph".into()))?;
    let mut seen = vec![false; n];
    if pi.len() != n || pi.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
        return Err(Error::Domain("shift is not a permutation of the vertex set".into()));
    }
    let colours = base.colours().expect("coloured");
    let mut moved: Vec<(Edge, Colour)> = base
        .edges()
        .iter()
        .zip(colours)
        .map(|(&(u, v), &c)| (canonical(pi[u], pi[v]), c))
        .collect();
    moved.sort_unstable();
    let shifted = ColouredGraph::from_sorted_unique(n, moved.iter().map(|&(e, _)| e).collect())
        .with_colours(palette, moved.iter().map(|&(_, c)| c).collect())?;
    Ok(ShiftedColouredGraph {
        base: base.clone(),
        pi,
        shifted,
    })
}

/// Move a coloured graph by a uniformly random permutation.
pub fn randomness_shift<R: Rng + ?Sized>(base: &ColouredGraph, rng: &mut R) -> Result<ShiftedColouredGraph> {
    let mut pi: Vec<Vertex> = (0..base.n()).collect();
    pi.shuffle(rng);
    shift_by(base, pi)
}

/// Edge-disjoint spanning subgraphs H_1..H_d, kept as adjacency bitsets.
#[derive(Clone, Debug)]
pub struct EdgeClasses {
    n: usize,
    d: usize,
    adj: Vec<FixedBitSet>,
}

impl EdgeClasses {
    /// Classes from an explicit assignment (`class[id]` for each edge of `g`).
    pub fn from_assignment(g: &ColouredGraph, d: usize, class: &[usize]) -> Result<Self> {
        if class.len() != g.edge_count() || class.iter().any(|&c| c >= d) {
            return Err(Error::Domain("edge class assignment does not fit the graph".into()));
        }
        let n = g.n();
        let mut adj = vec![FixedBitSet::with_capacity(n); n * d];
        for (id, &(u, v)) in g.edges().iter().enumerate() {
            adj[class[id] * n + u].insert(v);
            adj[class[id] * n + v].insert(u);
        }
        Ok(EdgeClasses { n, d, adj })
    }

    pub fn classes(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, j: usize, u: Vertex, v: Vertex) -> bool {
        self.adj[j * self.n + u].contains(v)
    }

    pub fn neighbours(&self, j: usize, u: Vertex) -> &FixedBitSet {
        &self.adj[j * self.n + u]
    }

    pub fn degree(&self, j: usize, u: Vertex) -> usize {
        self.adj[j * self.n + u].count_ones(..)
    }

    pub fn min_degree(&self, j: usize) -> usize {
        (0..self.n).map(|u| self.degree(j, u)).min().unwrap_or(0)
    }

    pub fn class_graph(&self, j: usize) -> ColouredGraph {
        let edges = (0..self.n)
            .flat_map(|u| self.adj[j * self.n + u].ones().filter(move |&v| u < v).map(move |v| (u, v)))
            .collect();
        ColouredGraph::from_sorted_unique(self.n, edges)
    }
}

/// Number of resamplings [`partition_edge_set`] makes.
pub const PARTITION_ATTEMPTS: usize = 50;

/// Assign every edge of G \ E(R) to one of d classes uniformly at random,
/// resampling until each class has minimum degree at least δn/(2d).
///
/// Requires δ(G \ E(R)) ≥ 0.9δn; a graph below that fails at the
/// seed-degree stage.
pub fn partition_edge_set<R: Rng + ?Sized>(
    g_minus_r: &ColouredGraph,
    d: usize,
    delta: f64,
    rng: &mut R,
) -> Result<EdgeClasses> {
    if d == 0 {
        return Err(Error::param("need at least one edge class"));
    }
    let n = g_minus_r.n();
    let floor = 0.9 * delta * n as f64;
    if (g_minus_r.min_degree() as f64) < floor - 1e-9 {
        return Err(Failure::SeedDegree {
            detail: format!("minimum degree {} below 0.9δn = {floor:.1}", g_minus_r.min_degree()),
        }
        .into());
    }
    let need = delta * n as f64 / (2.0 * d as f64);
    let mut class = vec![0usize; g_minus_r.edge_count()];
    for _ in 0..PARTITION_ATTEMPTS {
        for c in class.iter_mut() {
            *c = rng.gen_range(0..d);
        }
        let classes = EdgeClasses::from_assignment(g_minus_r, d, &class)?;
        if (0..d).all(|j| classes.min_degree(j) as f64 >= need - 1e-9) {
            return Ok(classes);
        }
    }
    Err(Failure::Partition {
        attempts: PARTITION_ATTEMPTS,
    }
    .into())
}

/// An absorber: a host vertex of the embedded tree and the images of its
/// tree neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Absorber {
    pub vertex: Vertex,
    pub tree_neighbours: Vec<Vertex>,
}

/// Absorbers with the edge classes used to test them.
#[derive(Clone, Debug)]
pub struct AbsorberIndex {
    pub classes: EdgeClasses,
    /// Sorted by vertex.
    pub absorbers: Vec<Absorber>,
    /// Absorbers already spent, in order of use.
    pub used: Vec<Vertex>,
    spent: FixedBitSet,
}

impl AbsorberIndex {
    pub fn new(classes: EdgeClasses, mut absorbers: Vec<Absorber>) -> Self {
        absorbers.sort_by_key(|a| a.vertex);
        let spent = FixedBitSet::with_capacity(classes.n());
        AbsorberIndex {
            classes,
            absorbers,
            used: Vec::new(),
            spent,
        }
    }

    /// Absorbers of the embedded `tree` (under `map`) at the nodes `i0`.
    pub fn from_embedding(classes: EdgeClasses, tree: &Tree, map: &[Vertex], i0: &[Node]) -> Self {
        let absorbers = i0
            .iter()
            .map(|&x| Absorber {
                vertex: map[x],
                tree_neighbours: tree.neighbours(x).iter().map(|&y| map[y]).collect(),
            })
            .collect();
        AbsorberIndex::new(classes, absorbers)
    }

    fn mark_used(&mut self, x: Vertex) {
        self.used.push(x);
        self.spent.insert(x);
    }
}

/// B_j(u, v): absorbers x adjacent to u in H_j whose tree neighbours are all
/// adjacent to v in H_j. Ascending; no colours are consulted.
pub fn compute_b(index: &AbsorberIndex, j: usize, u: Vertex, v: Vertex) -> Vec<Vertex> {
    let cl = &index.classes;
    let nu = cl.neighbours(j, u);
    let nv = cl.neighbours(j, v);
    index
        .absorbers
        .iter()
        .filter(|a| nu.contains(a.vertex) && a.tree_neighbours.iter().all(|&y| nv.contains(y)))
        .map(|a| a.vertex)
        .collect()
}

/// B_{j,i}(u, v): [`compute_b`] without the absorbers already spent.
pub fn compute_b_remaining(index: &AbsorberIndex, j: usize, u: Vertex, v: Vertex) -> Vec<Vertex> {
    compute_b(index, j, u, v)
        .into_iter()
        .filter(|&x| !index.spent.contains(x))
        .collect()
}

/// Lazily revealed colours of G \ E(R), with the record of which edge
/// classes have been exposed at each vertex.
#[derive(Clone, Debug)]
pub struct ColourExposure {
    palette: usize,
    d: usize,
    colours: HashMap<Edge, Colour>,
    class_touched: FixedBitSet,
}

impl ColourExposure {
    pub fn new(n: usize, d: usize, palette: usize) -> Self {
        ColourExposure {
            palette,
            d,
            colours: HashMap::new(),
            class_touched: FixedBitSet::with_capacity(n * d),
        }
    }

    pub fn colour(&self, u: Vertex, v: Vertex) -> Option<Colour> {
        self.colours.get(&canonical(u, v)).copied()
    }

    pub fn exposed_count(&self) -> usize {
        self.colours.len()
    }

    /// Whether some H_j edge at `u` has had its colour revealed.
    pub fn class_exposed_at(&self, u: Vertex, j: usize) -> bool {
        self.class_touched.contains(u * self.d + j)
    }

    /// Smallest class with no revealed edge at `u`.
    pub fn first_fresh_class(&self, u: Vertex) -> Option<usize> {
        (0..self.d).find(|&j| !self.class_exposed_at(u, j))
    }

    /// Reveal the colour of the H_j edge `ab`. Revealing twice breaks the
    /// exposure discipline and is reported as a contract violation.
    pub fn expose<R: Rng + ?Sized>(&mut self, a: Vertex, b: Vertex, j: usize, rng: &mut R) -> Result<Colour> {
        let e = canonical(a, b);
        if self.colours.contains_key(&e) {
            return Err(Error::Contract(format!("colour of {a}-{b} revealed twice")));
        }
        let c = rng.gen_range(0..self.palette) as Colour;
        self.colours.insert(e, c);
        self.class_touched.insert(a * self.d + j);
        self.class_touched.insert(b * self.d + j);
        Ok(c)
    }
}

/// The growing spanning embedding during absorption.
#[derive(Clone, Debug)]
pub struct AbsorptionState {
    pub tree: Tree,
    /// Host vertex of each node; `None` for nodes not yet attached.
    pub map: Vec<Option<Vertex>>,
    /// Colour of each embedded tree edge, keyed by host edge.
    pub edge_colours: HashMap<Edge, Colour>,
    /// Colours on the current tree, with multiplicity one each.
    pub tree_colours: FixedBitSet,
    pub index: AbsorberIndex,
    pub exposure: ColourExposure,
    /// Node occupying each host vertex.
    owner: Vec<Option<Node>>,
}

impl AbsorptionState {
    pub fn new(
        tree: Tree,
        map: Vec<Option<Vertex>>,
        edge_colours: HashMap<Edge, Colour>,
        palette: usize,
        index: AbsorberIndex,
    ) -> Result<Self> {
        let n = index.classes.n();
        let mut owner = vec![None; n];
        for (x, v) in map.iter().enumerate() {
            if let Some(v) = *v {
                if owner[v].replace(x).is_some() {
                    return Err(Error::Contract(format!("vertex {v} holds two nodes")));
                }
            }
        }
        let mut tree_colours = FixedBitSet::with_capacity(palette);
        for &c in edge_colours.values() {
            if tree_colours.put(c as usize) {
                return Err(Error::Contract("starting tree is not rainbow".into()));
            }
        }
        let d = index.classes.classes();
        Ok(AbsorptionState {
            tree,
            map,
            edge_colours,
            tree_colours,
            index,
            exposure: ColourExposure::new(n, d, palette),
            owner,
        })
    }

    pub fn placed(&self) -> usize {
        self.map.iter().filter(|v| v.is_some()).count()
    }
}

/// Outcome of one absorption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbsorbRecord {
    pub j: usize,
    /// |B_{j,i}(u, v)|.
    pub candidates: usize,
    /// |B_j(u, v)| before removing spent absorbers.
    pub full: usize,
    pub chosen: Option<Vertex>,
}

/// Attach the unembedded node `v_node` (a T-neighbour of the embedded
/// `u_node`) by absorbing host vertex `v` through class `j`.
///
/// Candidates in B_{j,i}(u, v) are tried in ascending order. For each, the
/// colours of ux and of yv for every tree neighbour y of x are revealed; the
/// first x whose revealed colours are pairwise distinct and absent from the
/// current tree wins. Then the node at x moves to v and `v_node` takes x.
pub fn absorb_step<R: Rng + ?Sized>(
    state: &mut AbsorptionState,
    v: Vertex,
    u_node: Node,
    v_node: Node,
    j: usize,
    rng: &mut R,
) -> Result<AbsorbRecord> {
    let u = state.map[u_node].ok_or_else(|| Error::Structural("u' is not embedded".into()))?;
    if state.map[v_node].is_some() || !state.tree.neighbours(u_node).contains(&v_node) {
        return Err(Error::Structural("v' must be an unembedded T-neighbour of u'".into()));
    }
    if state.owner[v].is_some() {
        return Err(Error::Structural(format!("vertex {v} is already embedded")));
    }
    if j >= state.index.classes.classes() || state.exposure.class_exposed_at(u, j) {
        return Err(Error::Structural(format!("class {j} is not fresh at {u}")));
    }
    let full = compute_b(&state.index, j, u, v).len();
    let cands = compute_b_remaining(&state.index, j, u, v);
    if cands.len() + state.index.used.len() < full {
        return Err(Error::Contract("spent absorbers removed more than their number".into()));
    }
    let mut record = AbsorbRecord {
        j,
        candidates: cands.len(),
        full,
        chosen: None,
    };
    for &x in &cands {
        let nbrs = state
            .index
            .absorbers
            .iter()
            .find(|a| a.vertex == x)
            .expect("candidate is an absorber")
            .tree_neighbours
            .clone();
        let cux = state.exposure.expose(u, x, j, rng)?;
        let mut fresh = vec![cux];
        for &y in &nbrs {
            fresh.push(state.exposure.expose(y, v, j, rng)?);
        }
        let mut sorted = fresh.clone();
        sorted.sort_unstable();
        let distinct = sorted.windows(2).all(|w| w[0] != w[1]);
        if !distinct || fresh.iter().any(|&c| state.tree_colours.contains(c as usize)) {
            continue;
        }
        // Rewire: z = f⁻¹(x) moves to v, the new leaf takes x.
        let z = state.owner[x].ok_or_else(|| Error::Contract(format!("absorber {x} holds no node")))?;
        for &y in &nbrs {
            let c = state
                .edge_colours
                .remove(&canonical(x, y))
                .ok_or_else(|| Error::Contract(format!("tree edge {x}-{y} missing")))?;
            state.tree_colours.set(c as usize, false);
        }
        for (k, &y) in nbrs.iter().enumerate() {
            state.edge_colours.insert(canonical(v, y), fresh[k + 1]);
            state.tree_colours.insert(fresh[k + 1] as usize);
        }
        state.edge_colours.insert(canonical(u, x), cux);
        state.tree_colours.insert(cux as usize);
        state.map[z] = Some(v);
        state.owner[v] = Some(z);
        state.map[v_node] = Some(x);
        state.owner[x] = Some(v_node);
        state.index.mark_used(x);
        record.chosen = Some(x);
        return Ok(record);
    }
    Err(Failure::Absorb {
        step: state.index.used.len(),
        reason: format!("none of the {} candidates has fresh distinct colours", cands.len()),
    }
    .into())
}

/// Totals of a completed absorption phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AbsorbSummary {
    pub absorbed: usize,
    /// Smallest |B_{j*,i}| met along the way.
    pub min_candidates: Option<usize>,
}

/// Attach the nodes `order` (each with an embedded T-neighbour by the time
/// it comes up) onto the free host vertices, taken in ascending order.
///
/// One trace line per step is appended. A trial failure is returned with the
/// number of nodes absorbed before it.
pub fn absorb_leftovers<R: Rng + ?Sized>(
    state: &mut AbsorptionState,
    order: &[Node],
    trace: &mut Vec<String>,
    rng: &mut R,
) -> Result<std::result::Result<AbsorbSummary, (usize, Failure)>> {
    let n = state.index.classes.n();
    let mut in_image = vec![false; n];
    for v in state.map.iter().flatten() {
        in_image[*v] = true;
    }
    let free_vertices: Vec<Vertex> = (0..n).filter(|&v| !in_image[v]).collect();
    if free_vertices.len() != order.len() {
        return Err(Error::Structural(format!(
            "{} free vertices for {} leftover nodes",
            free_vertices.len(),
            order.len()
        )));
    }
    let mut min_b: Option<usize> = None;
    for (i, (&v_node, &v)) in order.iter().zip(&free_vertices).enumerate() {
        let u_node = *state
            .tree
            .neighbours(v_node)
            .iter()
            .find(|&&w| state.map[w].is_some())
            .ok_or_else(|| Error::Structural(format!("leftover node {v_node} has no embedded neighbour")))?;
        let u = state.map[u_node].unwrap();
        let Some(j) = state.exposure.first_fresh_class(u) else {
            trace.push(format!("i={i} j*=none |B|=0 chosen=fail"));
            return Ok(Err((
                i,
                Failure::Absorb {
                    step: i,
                    reason: format!("every edge class at {u} already exposed"),
                },
            )));
        };
        let before = state.index.used.len();
        match absorb_step(state, v, u_node, v_node, j, rng) {
            Ok(rec) => {
                if rec.candidates + before < rec.full {
                    return Err(Error::Contract("|B_{j,i}| fell below |B_j| - i".into()));
                }
                min_b = Some(min_b.map_or(rec.candidates, |m| m.min(rec.candidates)));
                trace.push(format!(
                    "i={i} j*={} |B|={} chosen={}",
                    rec.j + 1,
                    rec.candidates,
                    rec.chosen.unwrap()
                ));
            }
            Err(Error::Failure(f)) => {
                let b = compute_b_remaining(&state.index, j, u, v).len();
                trace.push(format!("i={i} j*={} |B|={b} chosen=fail", j + 1));
                return Ok(Err((i, f)));
            }
            Err(e) => return Err(e),
        }
        // The grown tree must stay a rainbow copy of its part of T.
        if state.tree_colours.count_ones(..) != state.edge_colours.len() {
            return Err(Error::Contract("absorption broke rainbowness".into()));
        }
    }
    Ok(Ok(AbsorbSummary {
        absorbed: order.len(),
        min_candidates: min_b,
    }))
}

/// Knobs of the spanning pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanningConstants {
    pub almost: Constants,
    /// Δ(R) above this multiple of ln n is recorded as a violation.
    pub max_degree_factor: f64,
}

impl Default for SpanningConstants {
    fn default() -> Self {
        SpanningConstants {
            almost: Constants::default(),
            max_degree_factor: 3.0,
        }
    }
}

/// A successful spanning embedding.
#[derive(Clone, Debug)]
pub struct SpanningEmbedding {
    pub map: Vec<Vertex>,
    /// Colours of the tree edges, in `tree.edges()` order.
    pub colours: Vec<Colour>,
    pub eps: f64,
    pub eps_proof: f64,
    pub absorbed: usize,
    pub report: ValidityReport,
}

pub type SpanningRun = Run<SpanningEmbedding>;

/// Embed the spanning tree `tree` rainbow into G ∪ G(n, p) with a uniform
/// colouring from (1+α)n colours.
///
/// ε is the value from the proof unless `eps_override` is given; both are logged.
#[allow(clippy::too_many_arguments)]
pub fn embed_spanning<R: Rng + ?Sized>(
    seed: &ColouredGraph,
    p: f64,
    tree: &Tree,
    delta: f64,
    alpha: f64,
    d: usize,
    eps_override: Option<f64>,
    constants: &SpanningConstants,
    rng: &mut R,
) -> Result<SpanningRun> {
    let n = seed.n();
    if tree.node_count() != n {
        return Err(Error::param(format!("tree has {} nodes, host {n}", tree.node_count())));
    }
    if tree.max_degree() > d || d == 0 {
        return Err(Error::param(format!("tree maximum degree {} exceeds d = {d}", tree.max_degree())));
    }
    if seed.min_degree() < min_degree_target(n, delta) {
        return Err(Error::param(format!(
            "seed minimum degree {} below δn = {}",
            seed.min_degree(),
            min_degree_target(n, delta)
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::param(format!("α = {alpha} must be positive")));
    }
    let palette = ((1.0 + alpha) * n as f64 + 1e-9).floor() as usize;
    let eps_proof = proof_eps(delta, d);
    let eps = eps_override.unwrap_or(eps_proof);
    let mut run: SpanningRun = Run {
        trace: Vec::new(),
        metrics: BTreeMap::new(),
        outcome: Err(Failure::Embed { placed: 0, total: n }),
    };
    run.metric("eps", eps);
    run.metric("eps_proof", eps_proof);
    let leftover = (eps * n as f64 + 1e-9).floor() as usize;
    let ell = n - leftover;
    run.stage("trim", true, format!("eps={eps:.4e},eps_proof={eps_proof:.4e},leftover={leftover}"));
    let trimmed = trim_to_size(tree, ell, rng)?;

    // Embed T0 rainbow in R' (palette (1+α)n), then reveal the rest of R'.
    let almost = almost_spanning_inner(n, p, palette, &trimmed.subtree, eps, d.max(2), &constants.almost, leftover == 0, rng)?;
    run.trace.extend(almost.trace.iter().cloned());
    let emb = match almost.outcome {
        Ok(e) => e,
        Err(f) => {
            run.outcome = Err(f);
            return Ok(run);
        }
    };
    let mut ledger = emb.state.ledger;
    ledger.expose_rest(p, palette, rng)?;
    let r_prime = ledger.to_graph(palette)?;
    let shift = randomness_shift(&r_prime, rng)?;
    let r = &shift.shifted;
    let max_deg = r.max_degree();
    run.metric("max_degree_R", max_deg as f64);
    let cap = constants.max_degree_factor * (n as f64).ln();
    run.metric("max_degree_R_violation", f64::from(u8::from(max_deg as f64 > cap)));
    run.stage("shift", true, format!("R_edges={},max_degree={max_deg}", r.edge_count()));

    let m = n;
    let mut map: Vec<Option<Vertex>> = vec![None; m];
    for (local, &x) in trimmed.kept.iter().enumerate() {
        map[x] = Some(shift.pi[emb.map[local]]);
    }
    let mut edge_colours = HashMap::new();
    for (a, b) in trimmed.subtree.edges() {
        let (x, y) = (trimmed.kept[a], trimmed.kept[b]);
        let (u, v) = (map[x].unwrap(), map[y].unwrap());
        let c = r
            .colour_between(u, v)
            .ok_or_else(|| Error::Contract("shifted tree edge missing from R".into()))?;
        edge_colours.insert(canonical(u, v), c);
    }

    if leftover == 0 {
        let full: Vec<Vertex> = map.iter().map(|v| v.unwrap()).collect();
        let colours = validate_tree_embedding(tree, &full, n, |u, v| r.colour_between(u, v))?;
        run.stage("absorb", true, "leftover=0".into());
        run.outcome = Ok(SpanningEmbedding {
            report: ValidityReport {
                nodes: n,
                edges: colours.len(),
                reservoir_used: emb.report.reservoir_used,
                leak_bound: emb.report.leak_bound,
                ledger_audits: emb.report.ledger_audits,
            },
            map: full,
            colours,
            eps,
            eps_proof,
            absorbed: 0,
        });
        return Ok(run);
    }

    let i0 = match build_i0(&trimmed.kept, tree, d, eps) {
        Ok(i) => i,
        Err(Error::Structural(msg)) => {
            return Ok(run.fail("absorbers", Failure::Absorb { step: 0, reason: msg }));
        }
        Err(e) => return Err(e),
    };
    run.metric("absorbers", i0.len() as f64);

    // G \ E(R): seed edges that R does not contain.
    let g_minus_r_edges: Vec<Edge> = seed.edges().iter().copied().filter(|&(u, v)| !r.has_edge(u, v)).collect();
    let g_minus_r = ColouredGraph::from_sorted_unique(n, g_minus_r_edges);
    let classes = match partition_edge_set(&g_minus_r, d, delta, rng) {
        Ok(c) => c,
        Err(Error::Failure(f)) => {
            let name = f.stage();
            return Ok(run.fail(name, f));
        }
        Err(e) => return Err(e),
    };
    run.stage(
        "partition",
        true,
        format!(
            "classes={d},min_degree={}",
            (0..d).map(|j| classes.min_degree(j)).min().unwrap_or(0)
        ),
    );
    let placed_map: Vec<Vertex> = map.iter().map(|v| v.unwrap_or(usize::MAX)).collect();
    let index = AbsorberIndex::from_embedding(classes, tree, &placed_map, &i0);
    let mut state = AbsorptionState::new(tree.clone(), map, edge_colours, palette, index)?;

    let order: Vec<Node> = trimmed.deletion_order.iter().rev().copied().collect();
    let outcome = absorb_leftovers(&mut state, &order, &mut run.trace, rng)?;
    match outcome {
        Ok(summary) => {
            run.metric("absorbed", summary.absorbed as f64);
            if let Some(b) = summary.min_candidates {
                run.metric("min_B", b as f64);
            }
        }
        Err((done, f)) => {
            run.metric("absorbed", done as f64);
            return Ok(run.fail("absorb", f));
        }
    }

    let full: Vec<Vertex> = state
        .map
        .iter()
        .map(|v| v.ok_or_else(|| Error::Contract("node left unembedded".into())))
        .collect::<Result<_>>()?;
    let colours = validate_tree_embedding(tree, &full, n, |u, v| {
        if r.has_edge(u, v) {
            r.colour_between(u, v)
        } else if seed.has_edge(u, v) {
            state.exposure.colour(u, v)
        } else {
            None
        }
    })?;
    // Every colour must agree with what the absorber bookkeeping recorded.
    for (&(u, v), &c) in &state.edge_colours {
        let actual = if r.has_edge(u, v) {
            r.colour_between(u, v)
        } else {
            state.exposure.colour(u, v)
        };
        if actual != Some(c) {
            return Err(Error::Contract(format!("recorded colour of {u}-{v} disagrees with the host")));
        }
    }
    run.stage("validate", true, format!("edges={},absorbed={leftover}", colours.len()));
    run.outcome = Ok(SpanningEmbedding {
        report: ValidityReport {
            nodes: n,
            edges: colours.len(),
            reservoir_used: emb.report.reservoir_used,
            leak_bound: emb.report.leak_bound,
            ledger_audits: emb.report.ledger_audits,
        },
        map: full,
        colours,
        eps,
        eps_proof,
        absorbed: leftover,
    });
    Ok(run)
}

/// Summary of sampled |B_j(u, v)| values against the lower bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BStatistics {
    pub samples: usize,
    pub min: usize,
    pub mean: f64,
    pub bound: f64,
    /// Samples with |B_j(u, v)| below the bound.
    pub below_bound: usize,
}

/// Evaluate |B_j(u, v)| on the given `(j, u, v)` triples.
pub fn measure_b_statistics(index: &AbsorberIndex, triples: &[(usize, Vertex, Vertex)], bound: f64) -> BStatistics {
    let sizes: Vec<usize> = triples.iter().map(|&(j, u, v)| compute_b(index, j, u, v).len()).collect();
    let samples = sizes.len();
    BStatistics {
        samples,
        min: sizes.iter().copied().min().unwrap_or(0),
        mean: if samples == 0 {
            0.0
        } else {
            sizes.iter().sum::<usize>() as f64 / samples as f64
        },
        bound,
        below_bound: sizes.iter().filter(|&&s| (s as f64) < bound).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_gnp, gen_seed_graph, is_rainbow, uniform_colouring, SeedKind};
    use crate::rng::RandomSource;
    use crate::tree::gen_random_bounded_tree;

    #[test]
    fn shift_identity_and_invariance() {
        let mut rng = RandomSource::new(1, 0);
        let g = uniform_colouring(&gen_gnp(12, 0.4, &mut rng).unwrap(), 5, &mut rng).unwrap();
        let id = shift_by(&g, (0..12).collect()).unwrap();
        assert_eq!(id.shifted.edges(), g.edges());
        assert_eq!(id.shifted.colours(), g.colours());
        let s = randomness_shift(&g, &mut rng).unwrap();
        let mut d1 = g.degrees();
        let mut d2 = s.shifted.degrees();
        d1.sort_unstable();
        d2.sort_unstable();
        assert_eq!(d1, d2);
        let mut c1 = g.colours().unwrap().to_vec();
        let mut c2 = s.shifted.colours().unwrap().to_vec();
        c1.sort_unstable();
        c2.sort_unstable();
        assert_eq!(c1, c2);
        for &(u, v) in g.edges() {
            assert_eq!(g.colour_between(u, v), s.shifted.colour_between(s.pi[u], s.pi[v]));
        }
        let some: Vec<Edge> = g.edges().iter().copied().take(4).collect();
        let moved: Vec<Edge> = some.iter().map(|&(u, v)| (s.pi[u], s.pi[v])).collect();
        assert_eq!(is_rainbow(&g, &some).unwrap(), is_rainbow(&s.shifted, &moved).unwrap());
        assert!(shift_by(&g, vec![0; 12]).is_err());
    }

    #[test]
    fn shift_image_is_uniform() {
        // chi^2 with 9 d.o.f. at 0.01: 21.666
        let g = uniform_colouring(&ColouredGraph::complete(10), 3, &mut RandomSource::new(2, 0)).unwrap();
        let mut rng = RandomSource::new(3, 0);
        let mut counts = [0usize; 10];
        let trials = 20_000;
        for _ in 0..trials {
            counts[randomness_shift(&g, &mut rng).unwrap().pi[0]] += 1;
        }
        let e = trials as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn partition_examples() {
        let mut rng = RandomSource::new(4, 0);
        let k20 = ColouredGraph::complete(20);
        let one = partition_edge_set(&k20, 1, 0.5, &mut rng).unwrap();
        assert_eq!(one.min_degree(0), 19);
        let mut ok = 0;
        for _ in 0..200 {
            if let Ok(c) = partition_edge_set(&k20, 2, 0.5, &mut rng) {
                assert!(c.min_degree(0) >= 3 && c.min_degree(1) >= 3);
                let total: usize = (0..2).map(|j| c.class_graph(j).edge_count()).sum();
                assert_eq!(total, 190);
                ok += 1;
            }
        }
        assert!(ok >= 195);
        let sparse = gen_gnp(20, 0.1, &mut rng).unwrap();
        let err = partition_edge_set(&sparse, 2, 0.5, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Failure(Failure::SeedDegree { .. })));
    }

    fn index_with(g: &ColouredGraph, absorbers: Vec<Absorber>) -> AbsorberIndex {
        let classes = EdgeClasses::from_assignment(g, 1, &vec![0; g.edge_count()]).unwrap();
        AbsorberIndex::new(classes, absorbers)
    }

    #[test]
    fn b_examples() {
        // a=0, x=1, b=2, u=3, v=4
        let h = ColouredGraph::from_edges(5, [(3, 1), (4, 0), (4, 2)]).unwrap();
        let x = Absorber {
            vertex: 1,
            tree_neighbours: vec![0, 2],
        };
        let idx = index_with(&h, vec![x.clone()]);
        assert_eq!(compute_b(&idx, 0, 3, 4), vec![1]);
        let h2 = ColouredGraph::from_edges(5, [(3, 1), (4, 0)]).unwrap();
        assert!(compute_b(&index_with(&h2, vec![x]), 0, 3, 4).is_empty());
        assert!(compute_b(&index_with(&h, vec![]), 0, 3, 4).is_empty());

        let kn = ColouredGraph::complete(8);
        let idx = index_with(
            &kn,
            vec![Absorber {
                vertex: 2,
                tree_neighbours: vec![1, 3],
            }],
        );
        for u in 0..8 {
            for v in 0..8 {
                if u != v && u != 2 && v != 2 && ![1, 3].contains(&v) {
                    assert_eq!(compute_b(&idx, 0, u, v), vec![2]);
                }
            }
        }
    }

    #[test]
    fn bound_values() {
        assert!((large_b_bound(0.4, 2, 100_000) - 0.625).abs() < 1e-9);
        let e = proof_eps(0.4, 2);
        assert!((e - 0.05f64.powi(3) / 40.0).abs() < 1e-15);
    }

    /// Path 0-1-2 embedded on 0,1,2 with node 3 (child of 2) left over.
    fn tiny_state(colour_clash: bool) -> (AbsorptionState, RandomSource) {
        let tree = Tree::from_edges(4, &[(0, 1), (1, 2), (2, 3)], 2).unwrap();
        let n = 6;
        let host = ColouredGraph::complete(n);
        let classes = EdgeClasses::from_assignment(&host, 1, &vec![0; host.edge_count()]).unwrap();
        let index = AbsorberIndex::from_embedding(classes, &tree, &[0, 1, 2, usize::MAX], &[1]);
        let mut colours = HashMap::new();
        colours.insert((0, 1), 0);
        colours.insert((1, 2), 1);
        let palette = if colour_clash { 2 } else { 1000 };
        let st = AbsorptionState::new(tree, vec![Some(0), Some(1), Some(2), None], colours, palette, index).unwrap();
        (st, RandomSource::new(5, 0))
    }

    #[test]
    fn absorb_step_grows_tree() {
        let (mut st, mut rng) = tiny_state(false);
        let rec = absorb_step(&mut st, 4, 2, 3, 0, &mut rng).unwrap();
        assert_eq!(rec.chosen, Some(1));
        assert_eq!(st.placed(), 4);
        assert_eq!(st.map, vec![Some(0), Some(4), Some(2), Some(1)]);
        let map: Vec<Vertex> = st.map.iter().map(|v| v.unwrap()).collect();
        validate_tree_embedding(&st.tree, &map, 6, |u, v| st.edge_colours.get(&canonical(u, v)).copied()).unwrap();
        // the class at vertex 2 is now spent
        assert!(st.exposure.class_exposed_at(2, 0));
        assert_eq!(st.exposure.first_fresh_class(2), None);
    }

    #[test]
    fn absorb_step_skips_clashing_colours() {
        // with a two-colour palette every exposed colour clashes with the tree
        let (mut st, mut rng) = tiny_state(true);
        let err = absorb_step(&mut st, 4, 2, 3, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Failure(Failure::Absorb { .. })));
        assert_eq!(st.placed(), 3);
    }

    #[test]
    fn absorb_step_without_candidates_fails() {
        let (mut st, mut rng) = tiny_state(false);
        st.index.mark_used(1);
        let err = absorb_step(&mut st, 4, 2, 3, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Failure(Failure::Absorb { .. })));
    }

    #[test]
    fn absorbs_leftovers_into_dense_classes() {
        let n = 120;
        let mut successes = 0;
        for seed in 0..20 {
            let mut rng = RandomSource::new(seed, 12);
            let tree = gen_random_bounded_tree(n, 2, &mut rng).unwrap();
            let trimmed = trim_to_size(&tree, n - 4, &mut rng).unwrap();
            let mut map = vec![None; n];
            for (i, &x) in trimmed.kept.iter().enumerate() {
                map[x] = Some(i);
            }
            let mut colours = HashMap::new();
            let mut tree_edges = Vec::new();
            for (k, (a, b)) in trimmed.subtree.edges().into_iter().enumerate() {
                colours.insert(canonical(a, b), k as Colour);
                tree_edges.push(canonical(a, b));
            }
            let rest: Vec<Edge> = ColouredGraph::complete(n)
                .edges()
                .iter()
                .copied()
                .filter(|e| !tree_edges.contains(e))
                .collect();
            let g = ColouredGraph::from_sorted_unique(n, rest);
            let classes = partition_edge_set(&g, 2, 0.5, &mut rng).unwrap();
            let i0 = build_i0(&trimmed.kept, &tree, 2, 0.05).unwrap();
            let placed: Vec<Vertex> = map.iter().map(|v| v.unwrap_or(usize::MAX)).collect();
            let index = AbsorberIndex::from_embedding(classes, &tree, &placed, &i0);
            let mut st = AbsorptionState::new(tree.clone(), map, colours, 10 * n, index).unwrap();
            let order: Vec<Node> = trimmed.deletion_order.iter().rev().copied().collect();
            let mut trace = Vec::new();
            match absorb_leftovers(&mut st, &order, &mut trace, &mut rng).unwrap() {
                Ok(summary) => {
                    successes += 1;
                    assert_eq!(summary.absorbed, 4);
                    assert_eq!(trace.len(), 4);
                    let full: Vec<Vertex> = st.map.iter().map(|v| v.unwrap()).collect();
                    validate_tree_embedding(&tree, &full, n, |u, v| st.edge_colours.get(&canonical(u, v)).copied())
                        .unwrap();
                    let mut used = st.index.used.clone();
                    used.dedup();
                    assert_eq!(used.len(), 4);
                }
                Err((done, f)) => {
                    assert!(done < 4);
                    assert_eq!(f.stage(), "absorb");
                    assert!(trace.last().unwrap().ends_with("chosen=fail"));
                }
            }
        }
        assert!(successes >= 5, "{successes}");
    }

    #[test]
    fn spanning_pipeline_reports_staged_outcomes() {
        let n = 200;
        let constants = SpanningConstants {
            almost: Constants {
                c_beta: 100.0,
                c_rho: 0.5,
                sparsify: crate::embed::SparsifyTarget::AllSurvivors,
                degree_scale: crate::embed::DegreeScale::MeanDegree,
                ..Constants::default()
            },
            ..SpanningConstants::default()
        };
        for seed in 0..6 {
            let mut rng = RandomSource::new(seed, 11);
            let g = gen_seed_graph(n, 0.3, SeedKind::Complete, &mut rng).unwrap();
            let t = gen_random_bounded_tree(n, 3, &mut rng).unwrap();
            let run = embed_spanning(&g, 0.5, &t, 0.3, 0.5, 3, Some(0.5), &constants, &mut rng).unwrap();
            assert_eq!(run.metrics["eps"], 0.5);
            assert!(run.metrics["eps_proof"] < 1e-4);
            match &run.outcome {
                Ok(emb) => assert_eq!(emb.map.len(), n),
                Err(f) => assert!(run.trace.last().unwrap().contains(f.stage())),
            }
        }
        let t = gen_random_bounded_tree(10, 3, &mut RandomSource::new(0, 0)).unwrap();
        let g = ColouredGraph::complete(12);
        let err = embed_spanning(&g, 0.5, &t, 0.3, 0.5, 3, None, &constants, &mut RandomSource::new(0, 0));
        assert!(matches!(err, Err(Error::Parameter(_))));
    }
}
