//! Undirected, connected, optionally node-labeled graphs.

mod generate;
mod io;

pub use generate::{generate_dataset, generate_er, generate_er_with_cap, ErRange, DEFAULT_RETRY_CAP};
pub use io::{
    load_dataset, load_graph, load_pairs, parse_dataset, read_pairs, save_dataset, save_graph,
    save_pairs, write_pairs, Dataset, LabelDict, LabeledPair, PairRecord,
};

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Immutable graph with dense 0-based node indices.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted. Labels, when
/// present, are interned ids into a dataset-level [`LabelDict`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<u32>>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph and checks every structural invariant, connectivity included.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut norm = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge [{u},{v}] endpoint out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        if let Some(w) = norm.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge [{},{}]",
                w[0].0, w[0].1
            )));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    num_nodes
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &norm {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let g = Graph {
            num_nodes,
            edges: norm,
            labels,
            neighbors,
        };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn unlabeled(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(num_nodes, edges, None)
    }

    /// Path on `n` nodes: 0-1-2-...-(n-1).
    pub fn path(n: usize) -> Self {
        Self::unlabeled(n, (1..n).map(|i| (i - 1, i))).expect("path graphs are valid")
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::unlabeled(n, edges).expect("complete graphs are valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// `|V| + |E|`.
    pub fn cardinality(&self) -> usize {
        self.num_nodes + self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Label of `v`; unlabeled graphs report the shared label 0.
    pub fn label(&self, v: usize) -> u32 {
        self.labels.as_ref().map_or(0, |l| l[v])
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Nodes in breadth-first order from node 0.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_nodes];
        let mut order = Vec::with_capacity(self.num_nodes);
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_order().len() == self.num_nodes
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.num_nodes {
            return Err(Error::InvalidPermutation(format!(
                "length {} for {} nodes",
                perm.len(),
                self.num_nodes
            )));
        }
        let mut seen = vec![false; self.num_nodes];
        for &p in perm {
            if p >= self.num_nodes || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidPermutation(format!("{perm:?} is not a bijection")));
            }
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; l.len()];
            for (i, &lab) in l.iter().enumerate() {
                out[perm[i]] = lab;
            }
            out
        });
        Graph::new(self.num_nodes, edges, labels)
    }
}

/// Inverse of a permutation given as `perm[i] = new index of i`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
