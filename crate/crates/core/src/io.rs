//! Plain-text formats for graphs, trees, embeddings and partitions.
//!
//! Edge lists start with a header `n k` (k = 0 means uncoloured) followed by
//! one `u v [c]` line per edge. Trees are `m` followed by `parent child`
//! lines in breadth-first order from node 0.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{canonical, ColouredGraph, Colour, Edge, Vertex};
use crate::spanning::VertexPartition;
use crate::tree::{Tree, TreeDecomposition};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn numbers<T: std::str::FromStr>(line: usize, s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|tok| tok.parse().map_err(|_| parse_err(line, format!("bad number `{tok}`"))))
        .collect()
}

/// Serialise a graph in canonical edge order.
pub fn write_edge_list(g: &ColouredGraph) -> String {
    let k = g.palette().unwrap_or(0);
    let mut out = format!("{} {k}\n", g.n());
    for (id, &(u, v)) in g.edges().iter().enumerate() {
        match g.colour(id) {
            Some(c) => writeln!(out, "{u} {v} {c}").unwrap(),
            None => writeln!(out, "{u} {v}").unwrap(),
        }
    }
    out
}

/// Parse the edge-list format. Coloured files need a colour on every line.
pub fn read_edge_list(text: &str) -> Result<ColouredGraph> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing `n k` header"))?;
    let head: Vec<usize> = numbers(hl, header)?;
    let [n, k] = head[..] else {
        return Err(parse_err(hl, "header must be `n k`"));
    };
    let mut items: Vec<(Edge, Colour, usize)> = Vec::new();
    for (ln, line) in lines {
        let f: Vec<usize> = numbers(ln, line)?;
        let (u, v, c) = match (k, f.len()) {
            (0, 2) => (f[0], f[1], 0),
            (k, 3) if k > 0 => {
                if f[2] >= k {
                    return Err(parse_err(ln, format!("colour {} outside palette {k}", f[2])));
                }
                (f[0], f[1], f[2])
            }
            _ => return Err(parse_err(ln, "expected `u v` (uncoloured) or `u v c` (coloured)")),
        };
        if u >= n || v >= n || u == v {
            return Err(parse_err(ln, format!("invalid edge {u} {v} for n = {n}")));
        }
        items.push((canonical(u, v), c as Colour, ln));
    }
    items.sort_unstable();
    if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(w[1].2, format!("duplicate edge {:?}", w[1].0)));
    }
    let g = ColouredGraph::from_edges(n, items.iter().map(|&(e, _, _)| e))?;
    if k == 0 {
        Ok(g)
    } else {
        g.with_colours(k, items.iter().map(|&(_, c, _)| c).collect())
    }
}

/// Serialise a tree as `m` then breadth-first `parent child` lines.
pub fn write_tree(t: &Tree) -> String {
    let m = t.node_count();
    let mut out = format!("{m}\n");
    if m == 0 {
        return out;
    }
    let (order, parent) = t.bfs(0);
    for &v in order.iter().skip(1) {
        writeln!(out, "{} {v}", parent[v].expect("non-root nodes have parents")).unwrap();
    }
    out
}

/// Parse the tree format. The degree bound defaults to the maximum degree.
pub fn read_tree(text: &str, d: Option<usize>) -> Result<Tree> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing node count"))?;
    let m: usize = header.parse().map_err(|_| parse_err(hl, "node count must be an integer"))?;
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    for (ln, line) in lines {
        let f: Vec<usize> = numbers(ln, line)?;
        let [a, b] = f[..] else {
            return Err(parse_err(ln, "expected `parent child`"));
        };
        edges.push((a, b));
    }
    let bound = d.unwrap_or_else(|| {
        let mut deg = vec![0usize; m];
        for &(a, b) in &edges {
            if a < m && b < m {
                deg[a] += 1;
                deg[b] += 1;
            }
        }
        deg.into_iter().max().unwrap_or(0).max(1)
    });
    Tree::from_edges(m, &edges, bound)
}

/// One `node vertex` line per tree node.
pub fn write_embedding(map: &[Vertex]) -> String {
    map.iter().enumerate().map(|(x, v)| format!("{x} {v}\n")).collect()
}

/// Parse `node vertex` lines into a map indexed by node.
pub fn read_embedding(text: &str) -> Result<Vec<Vertex>> {
    let mut pairs = Vec::new();
    for (ln, line) in content_lines(text) {
        let f: Vec<usize> = numbers(ln, line)?;
        let [x, v] = f[..] else {
            return Err(parse_err(ln, "expected `node vertex`"));
        };
        pairs.push((x, v, ln));
    }
    let mut map = vec![usize::MAX; pairs.len()];
    for (x, v, ln) in pairs {
        if x >= map.len() || map[x] != usize::MAX {
            return Err(parse_err(ln, format!("node {x} out of range or repeated")));
        }
        map[x] = v;
    }
    Ok(map)
}

/// Tree edges with their colours, one `u v c` line each.
pub fn write_coloured_edges(edges: &[Edge], colours: &[Colour]) -> String {
    edges
        .iter()
        .zip(colours)
        .map(|(&(u, v), c)| format!("{u} {v} {c}\n"))
        .collect()
}

/// One line per block, vertices separated by spaces.
pub fn write_partition(p: &VertexPartition) -> String {
    p.blocks()
        .iter()
        .map(|b| {
            let mut s = b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            s.push('\n');
            s
        })
        .collect()
}

pub fn read_partition(text: &str, n: usize) -> Result<VertexPartition> {
    let mut blocks = Vec::new();
    for (ln, line) in content_lines(text) {
        blocks.push(numbers::<usize>(ln, line)?);
    }
    VertexPartition::new(n, blocks)
}

/// Diagnostic dump: `piece i: nodes` lines then `connect i top parent` lines.
pub fn write_decomposition(dec: &TreeDecomposition) -> String {
    let mut out = String::new();
    for (i, piece) in dec.pieces.iter().enumerate() {
        let nodes = piece.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "piece {i}: {nodes}").unwrap();
    }
    for (i, c) in dec.connecting.iter().enumerate() {
        if let Some((top, parent)) = c {
            writeln!(out, "connect {i} {top} {parent}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_gnp, uniform_colouring};
    use crate::rng::RandomSource;
    use crate::tree::{decompose_with_window, gen_random_bounded_tree};

    #[test]
    fn edge_list_round_trip() {
        let mut rng = RandomSource::new(1, 0);
        let g = gen_gnp(30, 0.2, &mut rng).unwrap();
        let text = write_edge_list(&g);
        assert!(text.starts_with("30 0\n"));
        assert_eq!(read_edge_list(&text).unwrap(), g);
        let c = uniform_colouring(&g, 7, &mut rng).unwrap();
        let text = write_edge_list(&c);
        let back = read_edge_list(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_edge_list(&back), text);
    }

    #[test]
    fn edge_list_reorders_and_rejects() {
        let g = read_edge_list("3 2\n2 1 1\n0 1 0\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.colour_between(2, 1), Some(1));
        for bad in ["", "3\n", "3 0\n0 3\n", "3 0\n1 1\n", "3 0\n0 1\n1 0\n", "3 2\n0 1 2\n", "3 2\n0 1\n", "3 0\n0 x\n"] {
            assert!(matches!(read_edge_list(bad), Err(Error::Parse { .. })), "{bad:?}");
        }
    }

    #[test]
    fn tree_round_trip() {
        let mut rng = RandomSource::new(2, 0);
        let t = gen_random_bounded_tree(40, 3, &mut rng).unwrap();
        let text = write_tree(&t);
        let back = read_tree(&text, Some(3)).unwrap();
        assert_eq!(back.edges(), t.edges());
        assert_eq!(read_tree("1\n", None).unwrap().node_count(), 1);
        assert!(read_tree("3\n0 1\n", None).is_err());
    }

    #[test]
    fn embedding_and_partition_round_trip() {
        let map = vec![3, 0, 2, 1];
        assert_eq!(read_embedding(&write_embedding(&map)).unwrap(), map);
        assert!(read_embedding("0 1\n0 2\n").is_err());
        let p = VertexPartition::new(5, vec![vec![0, 3], vec![1, 2, 4]]).unwrap();
        let text = write_partition(&p);
        assert_eq!(text, "0 3\n1 2 4\n");
        assert_eq!(read_partition(&text, 5).unwrap(), p);
        assert_eq!(write_coloured_edges(&[(0, 1)], &[4]), "0 1 4\n");
    }

    #[test]
    fn decomposition_dump() {
        let t = gen_random_bounded_tree(30, 3, &mut RandomSource::new(3, 0)).unwrap();
        let dec = decompose_with_window(&t, 3, 10.0).unwrap();
        let text = write_decomposition(&dec);
        assert_eq!(text.lines().filter(|l| l.starts_with("piece")).count(), dec.len());
        assert_eq!(text.lines().filter(|l| l.starts_with("connect")).count(), dec.len() - 1);
    }
}
