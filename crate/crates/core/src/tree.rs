//! Bounded-degree trees, leaf trimming, size-windowed decomposition into
//! subtrees, root sets, and the absorber support set.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

pub type Node = usize;

/// A tree on nodes `0..m` whose maximum degree is at most `d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    adj: Vec<Vec<Node>>,
    d: usize,
}

impl Tree {
    pub fn single(d: usize) -> Self {
        Tree {
            adj: vec![Vec::new()],
            d,
        }
    }

    /// Build a tree and check connectivity, edge count and the degree bound.
    pub fn from_edges(m: usize, edges: &[(Node, Node)], d: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("a tree needs at least one node"));
        }
        if edges.len() != m - 1 {
            return Err(Error::Domain(format!(
                "{} edges given for a tree on {m} nodes",
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); m];
        for &(a, b) in edges {
            if a >= m || b >= m || a == b {
                return Err(Error::Domain(format!("bad tree edge {a}-{b}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Domain("repeated tree edge".into()));
            }
        }
        let t = Tree { adj, d };
        if let Some(v) = (0..m).find(|&v| t.degree(v) > d) {
            return Err(Error::Domain(format!(
                "node {v} has degree {} > {d}",
                t.degree(v)
            )));
        }
        let (order, _) = t.bfs(0);
        if order.len() != m {
            return Err(Error::Domain("edges do not connect all nodes".into()));
        }
        Ok(t)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn degree_bound(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn neighbours(&self, v: Node) -> &[Node] {
        &self.adj[v]
    }

    pub fn degree(&self, v: Node) -> usize {
        self.adj[v].len()
    }

    /// Edges as canonical `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(Node, Node)> {
        let mut out = Vec::with_capacity(self.node_count().saturating_sub(1));
        for (a, list) in self.adj.iter().enumerate() {
            for &b in list {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Breadth-first order from `root` with the parent of each visited node.
    pub fn bfs(&self, root: Node) -> (Vec<Node>, Vec<Option<Node>>) {
        let m = self.node_count();
        let mut parent = vec![None; m];
        let mut seen = vec![false; m];
        let mut order = Vec::with_capacity(m);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        (order, parent)
    }

    /// The subtree induced by `nodes` (which must induce a connected
    /// subgraph), relabelled so that local node `i` is `nodes[i]`.
    pub fn induced(&self, nodes: &[Node]) -> Result<Tree> {
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for &w in &self.adj[v] {
                let j = local[w];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        Tree::from_edges(nodes.len(), &edges, self.d)
    }
}

/// Random tree with maximum degree at most `d`: node `i` attaches to a
/// uniformly chosen earlier node that still has spare degree.
pub fn gen_random_bounded_tree<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<Tree> {
    if m == 0 {
        return Err(Error::param("tree size must be at least 1"));
    }
    if (m >= 2 && d == 0) || (m >= 3 && d < 2) {
        return Err(Error::param(format!(
            "no tree on {m} nodes has maximum degree {d}"
        )));
    }
    let mut deg = vec![0usize; m];
    let mut edges = Vec::with_capacity(m - 1);
    for i in 1..m {
        let j = loop {
            let j = rng.gen_range(0..i);
            if deg[j] < d {
                break j;
            }
        };
        deg[i] += 1;
        deg[j] += 1;
        edges.push((j, i));
    }
    Tree::from_edges(m, &edges, d.max(1))
}

/// Result of iterated leaf deletion.
#[derive(Clone, Debug)]
pub struct Trimmed {
    /// The remaining subtree, relabelled; local node `i` is `kept[i]` in the
    /// parent tree.
    pub subtree: Tree,
    /// Parent-tree ids of the remaining nodes, ascending.
    pub kept: Vec<Node>,
    /// Parent-tree ids in deletion order. Reversed, this is the order in
    /// which the removed nodes are re-attached.
    pub deletion_order: Vec<Node>,
}

/// Remove uniformly random leaves until `target` nodes remain.
pub fn trim_to_size<R: Rng + ?Sized>(tree: &Tree, target: usize, rng: &mut R) -> Result<Trimmed> {
    let m = tree.node_count();
    if target == 0 || target > m {
        return Err(Error::param(format!("cannot trim {m} nodes to {target}")));
    }
    let mut deg: Vec<usize> = (0..m).map(|v| tree.degree(v)).collect();
    let mut alive = vec![true; m];
    let mut leaves: Vec<Node> = (0..m).filter(|&v| deg[v] <= 1).collect();
    let mut order = Vec::with_capacity(m - target);
    let mut remaining = m;
    while remaining > target {
        let idx = rng.gen_range(0..leaves.len());
        let leaf = leaves.swap_remove(idx);
        assert_eq!(deg[leaf], 1, "trimmed node must be a leaf");
        alive[leaf] = false;
        remaining -= 1;
        order.push(leaf);
        for &w in tree.neighbours(leaf) {
            if alive[w] {
                deg[w] -= 1;
                if deg[w] == 1 {
                    leaves.push(w);
                }
            }
        }
    }
    let kept: Vec<Node> = (0..m).filter(|&v| alive[v]).collect();
    let subtree = tree.induced(&kept)?;
    Ok(Trimmed {
        subtree,
        kept,
        deletion_order: order,
    })
}

/// Decomposition of a tree into subtrees `T'_1, …, T'_s` such that every
/// later subtree hangs off the union of the earlier ones by a single edge.
#[derive(Clone, Debug)]
pub struct TreeDecomposition {
    /// Node sets of the subtrees, in attachment order.
    pub pieces: Vec<Vec<Node>>,
    /// For `i ≥ 1`, the edge `(top, parent)` joining piece `i` to an earlier
    /// piece; `top` lies in piece `i`. `None` for the first piece.
    pub connecting: Vec<Option<(Node, Node)>>,
    /// Largest allowed piece size ⌊ξn⌋.
    pub max_size: usize,
    /// Smallest allowed size for pieces after the first, ⌈⌊ξn⌋/d⌉.
    pub min_size: usize,
}

impl TreeDecomposition {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Index of the piece holding each node.
    pub fn piece_of(&self, m: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; m];
        for (i, piece) in self.pieces.iter().enumerate() {
            for &v in piece {
                owner[v] = i;
            }
        }
        owner
    }

    /// Check the cover, size-window and unique-attachment invariants.
    pub fn verify(&self, tree: &Tree) -> Result<()> {
        let m = tree.node_count();
        let owner = self.piece_of(m);
        if owner.contains(&usize::MAX) {
            return Err(Error::Contract("pieces do not cover the tree".into()));
        }
        if self.pieces.iter().map(Vec::len).sum::<usize>() != m {
            return Err(Error::Contract("pieces overlap".into()));
        }
        for (i, piece) in self.pieces.iter().enumerate() {
            let size = piece.len();
            if size > self.max_size || (i > 0 && size < self.min_size) {
                return Err(Error::Contract(format!(
                    "piece {i} has {size} nodes, window [{}, {}]",
                    self.min_size, self.max_size
                )));
            }
            if tree.induced(piece).is_err() {
                return Err(Error::Contract(format!("piece {i} is not connected")));
            }
            let leaving: Vec<(Node, Node)> = piece
                .iter()
                .flat_map(|&v| tree.neighbours(v).iter().map(move |&w| (v, w)))
                .filter(|&(_, w)| owner[w] < i)
                .collect();
            match (i, leaving.as_slice(), self.connecting[i]) {
                (0, [], None) => {}
                (_, [e], Some(c)) if i > 0 && *e == c => {}
                _ => {
                    return Err(Error::Contract(format!(
                        "piece {i} attaches to earlier pieces by {leaving:?}, recorded {:?}",
                        self.connecting[i]
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Split `tree` (on at most (1−ε)n nodes) into subtrees of size at most
/// ⌊ξn⌋, all but the first of size at least ⌈⌊ξn⌋/d⌉.
///
/// Roots the tree at node 0. While more than ⌊ξn⌋ nodes remain, takes the
/// deepest node whose remaining subtree is too large and cuts off its largest
/// child subtree, which always lands in the window. The cut order is then
/// reversed so that each piece attaches to the earlier ones by its parent edge.
pub fn decompose_tree(tree: &Tree, n: usize, d: usize, eps: f64, xi: f64) -> Result<TreeDecomposition> {
    let m = tree.node_count();
    if m as f64 > (1.0 - eps) * n as f64 + 1e-9 {
        return Err(Error::param(format!(
            "tree on {m} nodes exceeds (1-ε)n = {}",
            (1.0 - eps) * n as f64
        )));
    }
    if tree.max_degree() > d {
        return Err(Error::param(format!(
            "tree has maximum degree {} > d = {d}",
            tree.max_degree()
        )));
    }
    decompose_with_window(tree, d, xi * n as f64)
}

/// Same as [`decompose_tree`] with the window given directly as ξn.
pub fn decompose_with_window(tree: &Tree, d: usize, xi_n: f64) -> Result<TreeDecomposition> {
    if !(xi_n >= d as f64) || d < 2 {
        return Err(Error::param(format!(
            "size window ξn = {xi_n} must be at least d = {d} ≥ 2"
        )));
    }
    let max_size = (xi_n + 1e-9).floor() as usize;
    let min_size = max_size.div_ceil(d);
    let m = tree.node_count();
    let (order, parent) = tree.bfs(0);
    let mut depth = vec![0usize; m];
    for &v in &order[1..] {
        depth[v] = depth[parent[v].unwrap()] + 1;
    }
    let mut size = vec![1usize; m];
    for &v in order.iter().rev() {
        if let Some(p) = parent[v] {
            size[p] += size[v];
        }
    }
    let mut alive = vec![true; m];
    let mut cuts: Vec<(Vec<Node>, Option<(Node, Node)>)> = Vec::new();
    while size[0] > max_size {
        // Deepest node still heavier than the window; all of its children fit,
        // and the largest has at least ⌈max_size/d⌉ nodes.
        let heavy = order
            .iter()
            .copied()
            .filter(|&v| alive[v] && size[v] > max_size)
            .max_by_key(|&v| (depth[v], std::cmp::Reverse(v)))
            .expect("root is heavy");
        let pick = tree
            .neighbours(heavy)
            .iter()
            .copied()
            .filter(|&c| alive[c] && parent[c] == Some(heavy))
            .max_by_key(|&c| (size[c], std::cmp::Reverse(c)))
            .filter(|&c| size[c] >= min_size)
            .ok_or_else(|| Error::Structural("no subtree fits the size window".into()))?;
        let mut piece = Vec::with_capacity(size[pick]);
        let mut stack = vec![pick];
        alive[pick] = false;
        while let Some(v) = stack.pop() {
            piece.push(v);
            for &w in tree.neighbours(v) {
                if alive[w] && parent[w] == Some(v) {
                    alive[w] = false;
                    stack.push(w);
                }
            }
        }
        piece.sort_unstable();
        let removed = size[pick];
        let mut a = parent[pick];
        while let Some(p) = a {
            size[p] -= removed;
            a = parent[p];
        }
        cuts.push((piece, Some((pick, parent[pick].unwrap()))));
    }
    let mut rest: Vec<Node> = (0..m).filter(|&v| alive[v]).collect();
    rest.sort_unstable();
    let mut pieces = vec![rest];
    let mut connecting = vec![None];
    for (piece, edge) in cuts.into_iter().rev() {
        pieces.push(piece);
        connecting.push(edge);
    }
    Ok(TreeDecomposition {
        pieces,
        connecting,
        max_size,
        min_size,
    })
}

/// Root sets `Z_i` and augmented trees `T_i = T[V(T'_i) ∪ Z_i]`.
#[derive(Clone, Debug)]
pub struct RootSets {
    /// `sets[i]`: top nodes of the later pieces that attach to piece `i`.
    pub sets: Vec<Vec<Node>>,
    /// `augmented[i]`: node set of `T_i`, ascending.
    pub augmented: Vec<Vec<Node>>,
}

/// For each piece, collect the roots of the later pieces hanging off it.
pub fn compute_root_sets(dec: &TreeDecomposition, tree: &Tree) -> RootSets {
    let owner = dec.piece_of(tree.node_count());
    let s = dec.len();
    let mut sets = vec![Vec::new(); s];
    for conn in dec.connecting.iter().flatten() {
        let (top, parent) = *conn;
        sets[owner[parent]].push(top);
    }
    let mut augmented = Vec::with_capacity(s);
    for (piece, z) in dec.pieces.iter().zip(&mut sets) {
        z.sort_unstable();
        let mut nodes: Vec<Node> = piece.iter().chain(z.iter()).copied().collect();
        nodes.sort_unstable();
        augmented.push(nodes);
    }
    RootSets { sets, augmented }
}

/// Check the three root-set properties: at most one root per piece, roots
/// only in later pieces, and a unique tree neighbour inside piece `i`.
pub fn verify_root_sets(dec: &TreeDecomposition, roots: &RootSets, tree: &Tree) -> Result<()> {
    let owner = dec.piece_of(tree.node_count());
    for (i, z) in roots.sets.iter().enumerate() {
        let mut per_piece = vec![0usize; dec.len()];
        for &x in z {
            per_piece[owner[x]] += 1;
            if owner[x] <= i {
                return Err(Error::Contract(format!("root {x} of Z_{i} lies in an earlier piece")));
            }
            let inside = tree.neighbours(x).iter().filter(|&&y| owner[y] == i).count();
            if inside != 1 {
                return Err(Error::Contract(format!(
                    "root {x} of Z_{i} has {inside} neighbours in piece {i}"
                )));
            }
        }
        if per_piece.iter().any(|&c| c > 1) {
            return Err(Error::Contract(format!("Z_{i} meets a piece twice")));
        }
    }
    Ok(())
}

/// Target size ⌊(n − (d+1)εn)/(d²+1)⌋ of the absorber support set.
pub fn i0_target(n: usize, d: usize, eps: f64) -> usize {
    let n = n as f64;
    (((n - (d as f64 + 1.0) * eps * n) / ((d * d + 1) as f64)) + 1e-9)
        .floor()
        .max(0.0) as usize
}

/// Greedy absorber support set inside the trimmed tree.
///
/// `kept` lists the parent-tree ids of the trimmed tree's nodes. The result
/// (parent-tree ids) has pairwise distance at least 3 inside the trimmed tree,
/// contains only nodes whose whole neighbourhood in `tree` survived trimming,
/// and has exactly [`i0_target`] elements.
pub fn build_i0(kept: &[Node], tree: &Tree, d: usize, eps: f64) -> Result<Vec<Node>> {
    let m = tree.node_count();
    let target = i0_target(m, d, eps);
    let mut in_t0 = vec![false; m];
    for &v in kept {
        in_t0[v] = true;
    }
    let Some(&root) = kept.iter().min() else {
        return Err(Error::param("trimmed tree is empty"));
    };
    let mut blocked = vec![false; m];
    let mut chosen = Vec::with_capacity(target);
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(x) = queue.pop_front() {
        if chosen.len() == target {
            break;
        }
        for &w in tree.neighbours(x) {
            if in_t0[w] && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
        if blocked[x] || !tree.neighbours(x).iter().all(|&w| in_t0[w]) {
            continue;
        }
        chosen.push(x);
        blocked[x] = true;
        for &a in tree.neighbours(x) {
            blocked[a] = true;
            for &b in tree.neighbours(a) {
                if in_t0[b] {
                    blocked[b] = true;
                }
            }
        }
    }
    if chosen.len() < target {
        return Err(Error::Structural(format!(
            "absorber support set reached {} of the {target} nodes required",
            chosen.len()
        )));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use proptest::prelude::*;

    fn path(m: usize) -> Tree {
        let edges: Vec<_> = (1..m).map(|i| (i - 1, i)).collect();
        Tree::from_edges(m, &edges, 2).unwrap()
    }

    fn star(k: usize) -> Tree {
        let edges: Vec<_> = (1..=k).map(|i| (0, i)).collect();
        Tree::from_edges(k + 1, &edges, k).unwrap()
    }

    fn distances(tree: &Tree, from: Node) -> Vec<usize> {
        let (order, parent) = tree.bfs(from);
        let mut dist = vec![usize::MAX; tree.node_count()];
        dist[from] = 0;
        for &v in &order[1..] {
            dist[v] = dist[parent[v].unwrap()] + 1;
        }
        dist
    }

    #[test]
    fn random_tree_small_cases() {
        let mut rng = RandomSource::new(1, 0);
        assert_eq!(gen_random_bounded_tree(1, 2, &mut rng).unwrap().node_count(), 1);
        let two = gen_random_bounded_tree(2, 2, &mut rng).unwrap();
        assert_eq!(two.edges(), vec![(0, 1)]);
        assert!(gen_random_bounded_tree(3, 1, &mut rng).is_err());
        let t = gen_random_bounded_tree(100, 3, &mut rng).unwrap();
        assert_eq!(t.edges().len(), 99);
        assert!(t.max_degree() <= 3);
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(Tree::from_edges(3, &[(0, 1)], 2).is_err());
        assert!(Tree::from_edges(4, &[(0, 1), (1, 0), (2, 3)], 2).is_err());
        assert!(Tree::from_edges(4, &[(0, 1), (0, 2), (0, 3)], 2).is_err());
    }

    #[test]
    fn trim_examples() {
        let mut rng = RandomSource::new(2, 0);
        let t = gen_random_bounded_tree(30, 3, &mut rng).unwrap();
        let all = trim_to_size(&t, 30, &mut rng).unwrap();
        assert!(all.deletion_order.is_empty());
        assert_eq!(all.subtree, t);
        let one = trim_to_size(&t, 1, &mut rng).unwrap();
        assert_eq!(one.kept.len(), 1);
        assert!(trim_to_size(&t, 0, &mut rng).is_err());
        assert!(trim_to_size(&t, 31, &mut rng).is_err());
    }

    #[test]
    fn trimming_a_path_removes_endpoints() {
        let mut rng = RandomSource::new(3, 0);
        let p = path(10);
        let tr = trim_to_size(&p, 7, &mut rng).unwrap();
        assert_eq!(tr.kept.len(), 7);
        // connected subpath: consecutive ids
        assert!(tr.kept.windows(2).all(|w| w[1] == w[0] + 1));
        let mut alive = [true; 10];
        for &v in &tr.deletion_order {
            let live_nbrs = p.neighbours(v).iter().filter(|&&w| alive[w]).count();
            assert_eq!(live_nbrs, 1);
            alive[v] = false;
        }
    }

    #[test]
    fn decompose_star_is_one_piece() {
        let s = star(3);
        let dec = decompose_with_window(&s, 3, 4.0).unwrap();
        assert_eq!(dec.len(), 1);
        dec.verify(&s).unwrap();
        let roots = compute_root_sets(&dec, &s);
        assert!(roots.sets[0].is_empty());
    }

    #[test]
    fn decompose_path_of_twelve() {
        let p = path(12);
        let dec = decompose_with_window(&p, 2, 4.0).unwrap();
        dec.verify(&p).unwrap();
        assert!((3..=4).contains(&dec.len()), "s = {}", dec.len());
        assert!(dec.pieces.iter().all(|piece| (2..=4).contains(&piece.len()) || piece.len() <= 4));
        for i in 1..dec.len() {
            assert!(dec.pieces[i].len() >= 2);
        }
    }

    #[test]
    fn decompose_random_tree() {
        let mut rng = RandomSource::new(4, 0);
        let t = gen_random_bounded_tree(400, 3, &mut rng).unwrap();
        let dec = decompose_with_window(&t, 3, 40.0).unwrap();
        dec.verify(&t).unwrap();
        assert!(dec.len() <= 31, "s = {}", dec.len());
        let roots = compute_root_sets(&dec, &t);
        verify_root_sets(&dec, &roots, &t).unwrap();
        for (i, aug) in roots.augmented.iter().enumerate() {
            assert!(aug.len() <= dec.pieces[i].len() + dec.len());
            assert!(t.induced(aug).is_ok());
        }
    }

    #[test]
    fn decompose_rejects_tiny_window() {
        let p = path(12);
        assert!(decompose_with_window(&p, 3, 2.0).is_err());
        assert!(decompose_tree(&p, 12, 2, 0.5, 0.5).is_err());
    }

    #[test]
    fn root_set_of_a_split_path() {
        let p = path(8);
        let dec = decompose_with_window(&p, 2, 4.0).unwrap();
        assert_eq!(dec.len(), 2);
        let roots = compute_root_sets(&dec, &p);
        let (top, parent) = dec.connecting[1].unwrap();
        assert_eq!(roots.sets[0], vec![top]);
        assert!(dec.pieces[0].contains(&parent));
        assert!(roots.sets[1].is_empty());
        verify_root_sets(&dec, &roots, &p).unwrap();
    }

    #[test]
    fn i0_on_paths() {
        for n in 7..40 {
            let p = path(n);
            let kept: Vec<Node> = (0..n).collect();
            let i0 = build_i0(&kept, &p, 2, 0.0).unwrap();
            assert_eq!(i0.len(), n / 5);
            for &x in &i0 {
                let dist = distances(&p, x);
                assert!(i0.iter().all(|&y| y == x || dist[y] >= 3));
            }
        }
    }

    #[test]
    fn i0_unreachable_target_is_structural() {
        // Star centre loses its trimmed leaves, so it is unresolved; the kept
        // leaves are pairwise at distance 2, so at most one of them is usable.
        let s = star(3);
        let kept = vec![0, 1, 2];
        let i0 = build_i0(&kept, &s, 3, 0.0).unwrap();
        assert!(i0.is_empty());
        // A long path trimmed to 12 nodes supports at most 4 absorbers, far
        // below the target of 8.
        let p = path(40);
        let kept: Vec<Node> = (0..12).collect();
        assert!(matches!(build_i0(&kept, &p, 2, 0.0), Err(Error::Structural(_))));
    }

    #[test]
    fn i0_target_formula() {
        assert_eq!(i0_target(100, 2, 0.0), 20);
        assert_eq!(i0_target(1000, 3, 0.05), 80);
    }

    proptest! {
        #[test]
        fn decomposition_invariants(m in 2usize..300, d in 2usize..5, window in 0.05f64..0.6, seed in any::<u64>()) {
            let mut rng = RandomSource::new(seed, 0);
            let t = gen_random_bounded_tree(m, d, &mut rng).unwrap();
            let xi_n = (window * m as f64).max(d as f64);
            let dec = decompose_with_window(&t, d, xi_n).unwrap();
            dec.verify(&t).unwrap();
            let roots = compute_root_sets(&dec, &t);
            verify_root_sets(&dec, &roots, &t).unwrap();
            // connecting edges plus piece edges recover E(T)
            let owner = dec.piece_of(m);
            let internal = t.edges().iter().filter(|&&(a, b)| owner[a] == owner[b]).count();
            prop_assert_eq!(internal + dec.len() - 1, m - 1);
            let bound = d * (m as f64 / xi_n).ceil() as usize + 1;
            prop_assert!(dec.len() <= bound);
        }

        #[test]
        fn trim_deletes_leaves(m in 1usize..120, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let mut rng = RandomSource::new(seed, 1);
            let t = gen_random_bounded_tree(m, 3, &mut rng).unwrap();
            let target = ((m as f64 * frac) as usize).clamp(1, m);
            let tr = trim_to_size(&t, target, &mut rng).unwrap();
            prop_assert_eq!(tr.kept.len(), target);
            prop_assert_eq!(tr.deletion_order.len(), m - target);
            let mut alive = vec![true; m];
            for &v in &tr.deletion_order {
                let live = t.neighbours(v).iter().filter(|&&w| alive[w]).count();
                prop_assert!(live == 1 || (live == 0 && target == 1 && m == 1));
                alive[v] = false;
            }
        }

        #[test]
        fn i0_properties(m in 20usize..200, seed in any::<u64>()) {
            let mut rng = RandomSource::new(seed, 2);
            let t = gen_random_bounded_tree(m, 3, &mut rng).unwrap();
            let eps = 0.05;
            let tr = trim_to_size(&t, m - (eps * m as f64) as usize, &mut rng).unwrap();
            if let Ok(i0) = build_i0(&tr.kept, &t, 3, eps) {
                prop_assert_eq!(i0.len(), i0_target(m, 3, eps));
                let mut in_t0 = vec![false; m];
                for &v in &tr.kept { in_t0[v] = true; }
                for &x in &i0 {
                    prop_assert!(t.neighbours(x).iter().all(|&w| in_t0[w]));
                    let local = tr.kept.binary_search(&x).unwrap();
                    let dist = distances(&tr.subtree, local);
                    for &y in &i0 {
                        if y != x {
                            prop_assert!(dist[tr.kept.binary_search(&y).unwrap()] >= 3);
                        }
                    }
                }
            }
        }
    }
}
