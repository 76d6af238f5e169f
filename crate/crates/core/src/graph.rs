//! Undirected graphs in compressed sparse row form and hop-distance queries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::error::{input, Result};

/// Immutable undirected, unweighted graph stored as symmetric CSR.
///
/// Rows are sorted, free of duplicates and self-loops, and `row_offsets[n] == 2 * edge_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Pair orientation is ignored, duplicates
    /// are collapsed, and self-loops are dropped.
    pub fn from_edges(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return input(format!("edge ({i}, {j}) out of range for {n} nodes"));
            }
            if i != j {
                pairs.push((i, j));
                pairs.push((j, i));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut row_offsets = vec![0usize; n + 1];
        for &(i, _) in &pairs {
            row_offsets[i + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
        let edge_count = col_indices.len() / 2;
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            edge_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected edge list with `i < j`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbors(i)
                    .iter()
                    .filter(move |&&j| i < j)
                    .map(move |&j| (i, j))
            })
            .collect()
    }

    /// Shortest-path distances from `source`; `None` for unreachable nodes.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// BFS layers around `v` up to `max_hop`.
    pub fn hop_sets(&self, v: usize, max_hop: usize) -> HopSets {
        let mut exact: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut within: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut seen = vec![false; self.n];
        seen[v] = true;
        let mut frontier = vec![v];
        let mut acc = BTreeSet::new();
        for hop in 1..=max_hop {
            let mut layer = BTreeSet::new();
            for &u in &frontier {
                for &w in self.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        layer.insert(w);
                    }
                }
            }
            acc.extend(layer.iter().copied());
            frontier = layer.iter().copied().collect();
            exact.insert(hop, layer);
            within.insert(hop, acc.clone());
        }
        HopSets { center: v, exact, within }
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return input("permutation length does not match node count");
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .map(|(i, j)| (perm[i], perm[j]))
            .collect();
        Self::from_edges(&edges, self.n)
    }
}

/// BFS layers around a center node.
///
/// `exact[t]` is the set of nodes at distance exactly `t`; `within[t]` is the union of
/// `exact[1..=t]`. The center itself is never included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopSets {
    pub center: usize,
    pub exact: BTreeMap<usize, BTreeSet<usize>>,
    pub within: BTreeMap<usize, BTreeSet<usize>>,
}

impl HopSets {
    pub fn exact(&self, hop: usize) -> BTreeSet<usize> {
        self.exact.get(&hop).cloned().unwrap_or_default()
    }

    pub fn within(&self, hop: usize) -> BTreeSet<usize> {
        self.within.get(&hop).cloned().unwrap_or_default()
    }
}

/// `G(n, p)`: each of the `n (n - 1) / 2` pairs is an edge independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(&edges, n).expect("indices below n")
}

/// Random recursive tree: node `v > 0` attaches to a uniform earlier node.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    Graph::from_edges(&edges, n).expect("indices below n")
}

/// Path `0 - 1 - ... - (n-1)`.
pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    Graph::from_edges(&edges, n).expect("indices below n")
}
