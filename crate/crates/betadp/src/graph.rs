//! Simple undirected graphs on `{0, …, p-1}`, stored as packed adjacency
//! bit rows.
//!
//! The packed layout is what makes the estimator fast: degree sums,
//! common-neighbour counts, and per-node triangle counts reduce to word
//! AND/popcount sweeps, and those three statistics drive the whole
//! method-of-moments path for constant noise schedules.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Node degrees of a graph, in node order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeSequence(pub Vec<usize>);

impl DegreeSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Total degree, i.e. twice the edge count.
    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Undirected simple graph; `bits[i * words + j/64]` holds the adjacency
/// row of node `i`. Rows are kept symmetric and the diagonal clear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    p: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Graph {
    /// Graph with `p` nodes and no edges.
    pub fn empty(p: usize) -> Graph {
        let words = p.div_ceil(64);
        Graph {
            p,
            words,
            bits: vec![0; p * words],
        }
    }

    /// Complete graph on `p` nodes.
    pub fn complete(p: usize) -> Graph {
        let mut g = Graph::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                g.set_edge(i, j, true);
            }
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.p
    }

    /// Build from an edge iterator. Duplicate and reversed pairs are fine;
    /// self-loops and out-of-range endpoints are not.
    pub fn from_edges<I>(p: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(p);
        for (i, j) in edges {
            g.check_pair(i, j)?;
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
        }
        if i >= self.p || j >= self.p {
            return Err(Error::InvalidArgument(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.p
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.p && j < self.p);
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Set or clear the edge `{i, j}` (both directions at once).
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        debug_assert!(i != j && i < self.p && j < self.p);
        let (wi, wj) = (i * self.words + j / 64, j * self.words + i / 64);
        if present {
            self.bits[wi] |= 1 << (j % 64);
            self.bits[wj] |= 1 << (i % 64);
        } else {
            self.bits[wi] &= !(1 << (j % 64));
            self.bits[wj] &= !(1 << (i % 64));
        }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn edge_count(&self) -> usize {
        let ones: u64 = self.bits.iter().map(|w| w.count_ones() as u64).sum();
        (ones / 2) as usize
    }

    pub fn degrees(&self) -> DegreeSequence {
        DegreeSequence(
            (0..self.p)
                .map(|i| self.row(i).iter().map(|w| w.count_ones() as usize).sum())
                .collect(),
        )
    }

    /// Neighbours of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(k * 64 + b)
                }
            })
        })
    }

    /// Edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.p).flat_map(move |i| {
            self.neighbors(i)
                .skip_while(move |&j| j < i)
                .map(move |j| (i, j))
        })
    }

    /// Build a graph by evaluating a pure predicate on every unordered pair.
    /// Rows are filled in parallel; each pair is evaluated once per endpoint,
    /// with arguments in ascending order, so the result is symmetric and
    /// independent of scheduling.
    pub(crate) fn from_pair_fn<F>(p: usize, pair: F) -> Graph
    where
        F: Fn(usize, usize) -> bool + Sync,
    {
        let words = p.div_ceil(64);
        let mut bits = vec![0u64; p * words];
        bits.par_chunks_mut(words).enumerate().for_each(|(i, row)| {
            for j in 0..p {
                if j != i && pair(i.min(j), i.max(j)) {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
        });
        Graph { p, words, bits }
    }

    /// Number of common neighbours of `i` and `j`.
    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// For each node, the number of triangles it participates in.
    pub fn triangles_per_node(&self) -> Vec<u64> {
        (0..self.p)
            .into_par_iter()
            .map(|l| {
                let twice: u64 = self
                    .neighbors(l)
                    .map(|j| self.common_neighbors(l, j) as u64)
                    .sum();
                twice / 2
            })
            .collect()
    }

    /// Number of node pairs on which the two graphs disagree.
    pub fn hamming_distance(&self, other: &Graph) -> Result<usize> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch(format!(
                "hamming distance between graphs on {} and {} nodes",
                self.p, other.p
            )));
        }
        let ones: u64 = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum();
        Ok((ones / 2) as usize)
    }

    /// Parse the plain-text edge-list format: a header line `p <count>`
    /// followed by one `i j` pair per line. Reversed and duplicate pairs are
    /// accepted; anything else is an error naming the offending line.
    pub fn load_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file; expected header `p <count>`".into(),
                })
            }
        };
        let mut toks = header.split_whitespace();
        let p = match (toks.next(), toks.next(), toks.next()) {
            (Some("p"), Some(n), None) => n.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad node count {n:?}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `p <count>`, got {header:?}"),
                })
            }
        };
        let mut g = Graph::empty(p);
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            let mut toks = line.split_whitespace();
            let (i, j) = match (toks.next(), toks.next(), toks.next()) {
                (Some(a), Some(b), None) => {
                    let parse = |t: &str| {
                        t.parse::<usize>().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("bad node index {t:?}"),
                        })
                    };
                    (parse(a)?, parse(b)?)
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected `i j`, got {line:?}"),
                    })
                }
            };
            g.check_pair(i, j).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    /// Write the canonical edge-list form: header, then ascending `i j`
    /// pairs with `i < j`, one per line.
    pub fn save_edge_list<W: Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writeln!(writer, "p {}", self.p)?;
        for (i, j) in self.edges() {
            writeln!(writer, "{i} {j}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> Graph {
        Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn edges_are_symmetric_and_removable() {
        let mut g = Graph::empty(5);
        g.set_edge(1, 4, true);
        assert!(g.has_edge(1, 4) && g.has_edge(4, 1));
        g.set_edge(4, 1, false);
        assert!(!g.has_edge(1, 4) && g.edge_count() == 0);
    }

    #[test]
    fn from_edges_tolerates_duplicates_and_reversals() {
        let g = Graph::from_edges(3, [(2, 0), (0, 2), (0, 2)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 2));
    }

    #[test]
    fn from_edges_rejects_self_loops_and_out_of_range() {
        assert!(Graph::from_edges(3, [(1, 1)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
    }

    #[test]
    fn degrees_and_neighbors_of_a_path() {
        let g = path4();
        assert_eq!(g.degrees().as_slice(), &[1, 2, 2, 1]);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(g.neighbors(1).count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn hamming_distance_empty_vs_complete() {
        // 4 nodes have 6 pairs, all differing.
        let d = Graph::empty(4).hamming_distance(&Graph::complete(4)).unwrap();
        assert_eq!(d, 6);
        assert!(Graph::empty(4).hamming_distance(&Graph::empty(5)).is_err());
    }

    #[test]
    fn triangle_statistics_on_a_known_graph() {
        // Triangle 0-1-2 plus pendant edge 2-3.
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap();
        assert_eq!(g.common_neighbors(0, 1), 1);
        assert_eq!(g.common_neighbors(0, 3), 1); // node 2
        assert_eq!(g.triangles_per_node(), vec![1, 1, 1, 0]);
    }

    #[test]
    fn save_then_load_is_identity_and_canonical() {
        let g = Graph::from_edges(70, [(65, 2), (0, 1), (0, 69), (2, 65)]).unwrap();
        let mut buf = Vec::new();
        g.save_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "p 70\n0 1\n0 69\n2 65\n");
        let back = Graph::load_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn load_tolerates_whitespace_and_reversed_pairs() {
        let text = "p 4\n3 1\n1 3\n0 2  \n";
        let g = Graph::load_edge_list(text.as_bytes()).unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn load_errors_name_the_line() {
        let text = "p 4\n0 1\n0 1 2\n";
        let err = Graph::load_edge_list(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let err = Graph::load_edge_list("q 4\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        let err = Graph::load_edge_list("p 4\n1 1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn empty_graph_round_trips() {
        let mut buf = Vec::new();
        Graph::empty(3).save_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "p 3\n");
        assert_eq!(Graph::load_edge_list(buf.as_slice()).unwrap(), Graph::empty(3));
    }
}
