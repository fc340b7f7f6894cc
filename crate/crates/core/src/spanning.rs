//! Rainbow spanning trees without a prescribed shape: vertex connectivity,
//! highly connected partitions, the partition criterion for a rainbow
//! spanning tree, and an exact finder by matroid intersection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ColouredGraph, Colour, Edge, Vertex};

/// Largest n accepted by [`suzuki_check`].
pub const SUZUKI_LIMIT: usize = 12;

/// Disjoint non-empty blocks covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexPartition {
    n: usize,
    blocks: Vec<Vec<Vertex>>,
}

impl VertexPartition {
    pub fn new(n: usize, mut blocks: Vec<Vec<Vertex>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::Domain("partition has an empty block".into()));
            }
            b.sort_unstable();
            for &v in b.iter() {
                if v >= n || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Domain(format!("vertex {v} repeated or out of range")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Domain("partition does not cover every vertex".into()));
        }
        Ok(VertexPartition { n, blocks })
    }

    /// Partition from a block label per vertex; labels need not be contiguous.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut ids: Vec<usize> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut blocks = vec![Vec::new(); ids.len()];
        for (v, l) in labels.iter().enumerate() {
            blocks[ids.binary_search(l).unwrap()].push(v);
        }
        VertexPartition {
            n: labels.len(),
            blocks,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<Vertex>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (i, b) in self.blocks.iter().enumerate() {
            for &v in b {
                out[v] = i;
            }
        }
        out
    }
}

/// Flow network on the split graph: vertex v becomes an arc
/// v_in -> v_out, every edge uv becomes u_out -> v_in and v_out -> u_in.
struct SplitNetwork {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<u32>,
    initial: Vec<u32>,
    next: Vec<usize>,
}

impl SplitNetwork {
    const NONE: usize = usize::MAX;

    fn new(g: &ColouredGraph) -> Self {
        let n = g.n();
        let mut net = SplitNetwork {
            head: vec![Self::NONE; 2 * n],
            to: Vec::new(),
            cap: Vec::new(),
            initial: Vec::new(),
            next: Vec::new(),
        };
        // Edge arcs are uncuttable so every minimum cut consists of vertices.
        let unbounded = u32::try_from(n + 1).unwrap_or(u32::MAX);
        for v in 0..n {
            net.arc(2 * v, 2 * v + 1, 1);
        }
        for &(u, v) in g.edges() {
            net.arc(2 * u + 1, 2 * v, unbounded);
            net.arc(2 * v + 1, 2 * u, unbounded);
        }
        net.cap = net.initial.clone();
        net
    }

    fn arc(&mut self, a: usize, b: usize, cap: u32) {
        for (x, y, c) in [(a, b, cap), (b, a, 0)] {
            self.to.push(y);
            self.initial.push(c);
            self.next.push(self.head[x]);
            self.head[x] = self.to.len() - 1;
        }
    }

    fn reset(&mut self) {
        self.cap.copy_from_slice(&self.initial);
    }

    /// Internally disjoint s-t paths, stopping once `limit` are found.
    fn local_connectivity(&mut self, s: Vertex, t: Vertex, limit: usize) -> usize {
        self.reset();
        let (src, sink) = (2 * s + 1, 2 * t);
        let mut flow = 0;
        let mut prev = vec![Self::NONE; self.head.len()];
        while flow < limit {
            prev.fill(Self::NONE);
            let mut queue = VecDeque::from([src]);
            prev[src] = usize::MAX - 1;
            while let Some(x) = queue.pop_front() {
                if x == sink {
                    break;
                }
                let mut a = self.head[x];
                while a != Self::NONE {
                    let y = self.to[a];
                    if self.cap[a] > 0 && prev[y] == Self::NONE {
                        prev[y] = a;
                        queue.push_back(y);
                    }
                    a = self.next[a];
                }
            }
            if prev[sink] == Self::NONE {
                break;
            }
            let mut x = sink;
            while x != src {
                let a = prev[x];
                self.cap[a] -= 1;
                self.cap[a ^ 1] += 1;
                x = self.to[a ^ 1];
            }
            flow += 1;
        }
        flow
    }

    /// Vertices whose split arc crosses from the residual-reachable side of
    /// `s` to the rest: a minimum s-t separator after a maximum flow.
    fn separator(&self, s: Vertex, n: usize) -> Vec<Vertex> {
        let src = 2 * s + 1;
        let mut seen = vec![false; self.head.len()];
        seen[src] = true;
        let mut stack = vec![src];
        while let Some(x) = stack.pop() {
            let mut a = self.head[x];
            while a != Self::NONE {
                let y = self.to[a];
                if self.cap[a] > 0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
                a = self.next[a];
            }
        }
        (0..n).filter(|&v| v != s && seen[2 * v] && !seen[2 * v + 1]).collect()
    }
}

/// Minimum vertex cut: the connectivity and, for non-complete graphs, a
/// separator of that size (empty when the graph is disconnected).
fn min_vertex_cut(g: &ColouredGraph) -> (usize, Option<Vec<Vertex>>) {
    let n = g.n();
    if n <= 1 {
        return (0, None);
    }
    if !g.is_connected() {
        return (0, Some(Vec::new()));
    }
    let mut best = g.min_degree().min(n - 1);
    let mut best_pair = None;
    let mut net = SplitNetwork::new(g);
    // Even's scheme: some minimum separator misses one of the first κ+1
    // vertices, so those sources suffice.
    let mut i = 0;
    while i < n && i <= best {
        for j in i + 1..n {
            if g.has_edge(i, j) {
                continue;
            }
            let k = net.local_connectivity(i, j, best);
            if k < best {
                best = k;
                best_pair = Some((i, j));
            }
        }
        i += 1;
    }
    match best_pair {
        Some((s, t)) => {
            net.local_connectivity(s, t, usize::MAX);
            let cut = net.separator(s, n);
            debug_assert_eq!(cut.len(), best);
            (best, Some(cut))
        }
        None if best == n - 1 => (n - 1, None),
        None => {
            // No examined pair beat the minimum degree: a minimum-degree
            // vertex's neighbourhood is a minimum separator.
            let v = (0..n).find(|&v| g.degree(v) == best).expect("minimum degree is attained");
            (best, Some(g.neighbours(v).collect()))
        }
    }
}

/// Exact vertex connectivity; n − 1 for K_n, 0 for disconnected graphs and
/// graphs with fewer than two vertices.
pub fn vertex_connectivity(g: &ColouredGraph) -> usize {
    min_vertex_cut(g).0
}

/// ⌈k²/(16n)⌉, the connectivity demanded of each block.
pub fn connectivity_threshold(k: usize, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    (k * k).div_ceil(16 * n)
}

/// Result of checking a partition against the connectivity and size bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionAudit {
    pub threshold: usize,
    pub size_bound: f64,
    pub min_connectivity: usize,
    pub min_size: usize,
    pub passed: bool,
}

/// Check that every block of `part` induces a ⌈k²/(16n)⌉-connected subgraph
/// of `h` and has at least k/8 vertices.
pub fn audit_partition(h: &ColouredGraph, part: &VertexPartition, k: usize) -> PartitionAudit {
    let threshold = connectivity_threshold(k, h.n());
    let size_bound = k as f64 / 8.0;
    let mut min_connectivity = usize::MAX;
    let mut min_size = usize::MAX;
    for b in part.blocks() {
        let sub = h.induced(b).graph;
        // A single vertex meets any threshold of zero and no other.
        let kappa = if b.len() == 1 && threshold == 0 { 0 } else { vertex_connectivity(&sub) };
        min_connectivity = min_connectivity.min(kappa);
        min_size = min_size.min(b.len());
    }
    PartitionAudit {
        threshold,
        size_bound,
        min_connectivity,
        min_size,
        passed: min_connectivity >= threshold && min_size as f64 >= size_bound,
    }
}

/// Split the vertex set of `h` (minimum degree at least `k`) into blocks that
/// are each ⌈k²/(16n)⌉-connected with at least k/8 vertices.
///
/// A block below the connectivity threshold is split along a minimum vertex
/// cut into the cut plus the smallest remaining component, and the rest. The
/// output is audited before it is returned; an audit failure is a contract
/// violation.
pub fn highly_connected_partition(h: &ColouredGraph, k: usize) -> Result<VertexPartition> {
    let n = h.n();
    if k == 0 || h.min_degree() < k {
        return Err(Error::Precondition(format!(
            "minimum degree {} is below k = {k} (or k = 0)",
            h.min_degree()
        )));
    }
    let threshold = connectivity_threshold(k, n);
    let mut pending = vec![(0..n).collect::<Vec<Vertex>>()];
    let mut done = Vec::new();
    while let Some(block) = pending.pop() {
        let sub = h.induced(&block).graph;
        let (kappa, cut) = min_vertex_cut(&sub);
        if kappa >= threshold {
            done.push(block);
            continue;
        }
        let Some(cut) = cut else {
            return Err(Error::Contract(format!(
                "block of {} vertices is complete but below connectivity {threshold}",
                block.len()
            )));
        };
        let mut removed = vec![false; block.len()];
        for &c in &cut {
            removed[c] = true;
        }
        let comps = components_avoiding(&sub, &removed);
        let smallest = comps
            .iter()
            .min_by_key(|c| (c.len(), c[0]))
            .expect("a separator leaves at least two components");
        let mut side: Vec<Vertex> = cut.iter().chain(smallest.iter()).map(|&v| block[v]).collect();
        side.sort_unstable();
        let rest: Vec<Vertex> = block.iter().copied().filter(|v| side.binary_search(v).is_err()).collect();
        pending.push(rest);
        pending.push(side);
    }
    done.sort();
    let part = VertexPartition::new(n, done)?;
    let audit = audit_partition(h, &part, k);
    if !audit.passed {
        return Err(Error::Contract(format!("partition failed its audit: {audit:?}")));
    }
    Ok(part)
}

fn components_avoiding(g: &ColouredGraph, removed: &[bool]) -> Vec<Vec<Vertex>> {
    let n = g.n();
    let mut seen = removed.to_vec();
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            let v = comp[i];
            i += 1;
            for w in g.neighbours(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Outcome of the partition criterion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuzukiOutcome {
    pub holds: bool,
    /// A partition into s parts whose crossing edges carry fewer than s − 1
    /// colours, when the criterion fails.
    pub witness: Option<VertexPartition>,
}

/// Decide the partition criterion by enumerating every set partition:
/// a rainbow spanning tree exists iff every partition into s ≥ 2 parts has
/// crossing edges in at least s − 1 distinct colours.
pub fn suzuki_check(g: &ColouredGraph) -> Result<SuzukiOutcome> {
    let n = g.n();
    if n > SUZUKI_LIMIT {
        return Err(Error::Capacity {
            what: "partition criterion",
            n,
            limit: SUZUKI_LIMIT,
        });
    }
    let colours = g
        .colours()
        .ok_or_else(|| Error::Domain("partition criterion needs a coloured graph".into()))?;
    let palette = g.palette().unwrap_or(0);
    let mut stamp = vec![0u64; palette];
    let mut round = 0u64;
    // Restricted growth string a[0..n] with a[0] = 0, a[i] <= 1 + max(a[..i]).
    let mut a = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    if n < 2 {
        return Ok(SuzukiOutcome {
            holds: true,
            witness: None,
        });
    }
    loop {
        let s = maxes[n - 1] + 1;
        if s >= 2 {
            round += 1;
            let mut distinct = 0;
            for (id, &(u, v)) in g.edges().iter().enumerate() {
                if a[u] != a[v] {
                    let c = colours[id] as usize;
                    if stamp[c] != round {
                        stamp[c] = round;
                        distinct += 1;
                    }
                }
            }
            if distinct + 1 < s {
                return Ok(SuzukiOutcome {
                    holds: false,
                    witness: Some(VertexPartition::from_labels(&a)),
                });
            }
        }
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(SuzukiOutcome {
                    holds: true,
                    witness: None,
                });
            }
            if a[i] <= maxes[i - 1] {
                a[i] += 1;
                maxes[i] = maxes[i - 1].max(a[i]);
                for j in i + 1..n {
                    a[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let nxt = self.0[y];
            self.0[y] = r;
            y = nxt;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// A rainbow spanning tree of a coloured graph, or `None` if there is none.
///
/// Maximum common independent set of the graphic matroid and the partition
/// matroid that allows one edge per colour: a greedy rainbow forest is grown
/// and then improved by shortest augmenting paths in the exchange graph. The
/// answer is `None` exactly when the maximum has fewer than n − 1 edges.
pub fn find_rainbow_spanning_tree(g: &ColouredGraph) -> Result<Option<Vec<Edge>>> {
    let n = g.n();
    let colours = g
        .colours()
        .ok_or_else(|| Error::Domain("rainbow spanning tree needs a coloured graph".into()))?;
    if n <= 1 {
        return Ok(Some(Vec::new()));
    }
    if !g.is_connected() {
        return Ok(None);
    }
    let m = g.edge_count();
    let palette = g.palette().unwrap_or(0);
    let edges = g.edges();
    let mut in_set = vec![false; m];
    let mut owner: Vec<Option<usize>> = vec![None; palette];
    let mut size = 0;
    {
        let mut dsu = Dsu::new(n);
        for (id, &(u, v)) in edges.iter().enumerate() {
            let c = colours[id] as usize;
            if owner[c].is_none() && dsu.union(u, v) {
                in_set[id] = true;
                owner[c] = Some(id);
                size += 1;
            }
        }
    }
    while size < n - 1 {
        match augmenting_path(n, edges, colours, &in_set, &owner) {
            Some(path) => {
                for &e in &path {
                    in_set[e] = !in_set[e];
                }
                owner.fill(None);
                for id in (0..m).filter(|&id| in_set[id]) {
                    owner[colours[id] as usize] = Some(id);
                }
                size += 1;
            }
            None => return Ok(None),
        }
    }
    Ok(Some((0..m).filter(|&id| in_set[id]).map(|id| edges[id]).collect()))
}

/// Shortest path in the exchange graph from an edge addable to the forest to
/// an edge with an unused colour, alternating outside and inside edges.
fn augmenting_path(
    n: usize,
    edges: &[Edge],
    colours: &[Colour],
    in_set: &[bool],
    owner: &[Option<usize>],
) -> Option<Vec<usize>> {
    let m = edges.len();
    let mut forest = vec![Vec::new(); n];
    let mut dsu = Dsu::new(n);
    for id in (0..m).filter(|&id| in_set[id]) {
        let (u, v) = edges[id];
        forest[u].push((v, id));
        forest[v].push((u, id));
        dsu.union(u, v);
    }
    let comp: Vec<usize> = (0..n).map(|v| dsu.find(v)).collect();
    const NONE: usize = usize::MAX;
    let mut prev = vec![NONE; m];
    let mut visited = vec![false; m];
    let mut queue = VecDeque::new();
    for id in 0..m {
        let (u, v) = edges[id];
        if !in_set[id] && comp[u] != comp[v] {
            visited[id] = true;
            queue.push_back(id);
        }
    }
    let mut side = vec![false; n];
    while let Some(e) = queue.pop_front() {
        if !in_set[e] {
            match owner[colours[e] as usize] {
                None => {
                    let mut path = vec![e];
                    let mut x = e;
                    while prev[x] != NONE {
                        x = prev[x];
                        path.push(x);
                    }
                    return Some(path);
                }
                Some(y) if !visited[y] => {
                    visited[y] = true;
                    prev[y] = e;
                    queue.push_back(y);
                }
                Some(_) => {}
            }
        } else {
            // Removing e splits its tree; any outside edge reconnecting the
            // two halves can replace it.
            let (a, b) = edges[e];
            side.fill(false);
            side[a] = true;
            let mut stack = vec![a];
            while let Some(x) = stack.pop() {
                for &(w, id) in &forest[x] {
                    if id != e && !side[w] {
                        side[w] = true;
                        stack.push(w);
                    }
                }
            }
            debug_assert!(!side[b]);
            for x in 0..m {
                if visited[x] || in_set[x] {
                    continue;
                }
                let (u, v) = edges[x];
                if comp[u] == comp[a] && comp[v] == comp[a] && side[u] != side[v] {
                    visited[x] = true;
                    prev[x] = e;
                    queue.push_back(x);
                }
            }
        }
    }
    None
}

/// Whether every pair of blocks has at least 2t edges of `g` between them.
pub fn check_crossing_edges(g: &ColouredGraph, part: &VertexPartition, t: usize) -> bool {
    let k = part.len();
    let labels = part.labels();
    let mut counts = vec![0usize; k * k];
    for &(u, v) in g.edges() {
        let (a, b) = (labels[u].min(labels[v]), labels[u].max(labels[v]));
        if a != b {
            counts[a * k + b] += 1;
        }
    }
    (0..k).all(|a| (a + 1..k).all(|b| counts[a * k + b] >= 2 * t))
}
