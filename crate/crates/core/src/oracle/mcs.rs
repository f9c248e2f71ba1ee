//! Maximum common connected induced subgraph by McSplit-style branch and bound.
//!
//! Candidate vertices are kept in label classes ("bidomains") that are split
//! on adjacency to every newly matched pair, so each class only ever holds
//! vertices with identical adjacency to the current mapping. Once the mapping
//! is non-empty only classes adjacent to it are branched on, which keeps the
//! common subgraph connected.

use std::time::{Duration, Instant};

use super::OracleBudget;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McsResult {
    pub node_count: usize,
    pub edge_count: usize,
    /// Matched `(node in g1, node in g2)` pairs, sorted by the g1 index.
    pub mapping: Vec<(usize, usize)>,
}

#[derive(Clone)]
struct Bidomain {
    left: Vec<usize>,
    right: Vec<usize>,
    adjacent: bool,
}

struct Search<'a> {
    g1: &'a Graph,
    g2: &'a Graph,
    best: Vec<(usize, usize)>,
    best_edges: usize,
    max_edges: usize,
    started: Instant,
    timeout: Option<Duration>,
    steps: u64,
    timed_out: bool,
}

impl Search<'_> {
    fn edge_upper_bound(&self, domains: &[Bidomain], mapped: usize, edges: usize, extra: usize) -> usize {
        // Each future vertex adds at most min(deg, final size - 1) edges.
        let cap = mapped + extra - 1;
        let side = |graph: &Graph, pick: &dyn Fn(&Bidomain) -> &Vec<usize>| {
            let mut gains: Vec<usize> = domains
                .iter()
                .flat_map(|d| pick(d).iter().map(|&v| graph.degree(v).min(cap)))
                .collect();
            gains.sort_unstable_by(|a, b| b.cmp(a));
            gains.iter().take(extra).sum::<usize>()
        };
        let l = side(self.g1, &|d| &d.left);
        let r = side(self.g2, &|d| &d.right);
        (edges + l.min(r)).min(self.max_edges)
    }

    fn run(&mut self, domains: Vec<Bidomain>, mapping: &mut Vec<(usize, usize)>, edges: usize) {
        self.steps += 1;
        if self.steps % 1024 == 0 {
            if let Some(t) = self.timeout {
                if self.started.elapsed() > t {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        if mapping.len() > self.best.len() || (mapping.len() == self.best.len() && edges > self.best_edges) {
            self.best = mapping.clone();
            self.best_edges = edges;
        }
        let extra: usize = domains.iter().map(|d| d.left.len().min(d.right.len())).sum();
        let bound = mapping.len() + extra;
        if bound < self.best.len() || extra == 0 {
            return;
        }
        if bound == self.best.len() && self.edge_upper_bound(&domains, mapping.len(), edges, extra) <= self.best_edges {
            return;
        }

        let connected_only = !mapping.is_empty();
        let Some(di) = domains
            .iter()
            .enumerate()
            .filter(|(_, d)| !connected_only || d.adjacent)
            .min_by_key(|(i, d)| (d.left.len().max(d.right.len()), *i))
            .map(|(i, _)| i)
        else {
            return;
        };

        let dom = &domains[di];
        let v = *dom
            .left
            .iter()
            .max_by_key(|&&v| (self.g1.degree(v), std::cmp::Reverse(v)))
            .expect("bidomains are non-empty");
        let mut candidates = dom.right.clone();
        candidates.sort_by_key(|&w| (std::cmp::Reverse(self.g2.degree(w)), w));

        for w in candidates {
            let added = mapping
                .iter()
                .filter(|&&(a, _)| self.g1.has_edge(a, v))
                .count();
            let next = refine(&domains, self.g1, self.g2, v, w);
            mapping.push((v, w));
            self.run(next, mapping, edges + added);
            mapping.pop();
            if self.timed_out {
                return;
            }
        }

        // Branch where v stays unmatched.
        let mut rest = domains;
        rest[di].left.retain(|&x| x != v);
        if rest[di].left.is_empty() {
            rest.swap_remove(di);
        }
        self.run(rest, mapping, edges);
    }
}

fn refine(domains: &[Bidomain], g1: &Graph, g2: &Graph, v: usize, w: usize) -> Vec<Bidomain> {
    let mut out = Vec::with_capacity(domains.len() * 2);
    for d in domains {
        let (l_adj, l_non): (Vec<usize>, Vec<usize>) =
            d.left.iter().copied().filter(|&x| x != v).partition(|&x| g1.has_edge(v, x));
        let (r_adj, r_non): (Vec<usize>, Vec<usize>) =
            d.right.iter().copied().filter(|&x| x != w).partition(|&x| g2.has_edge(w, x));
        if !l_non.is_empty() && !r_non.is_empty() {
            out.push(Bidomain {
                left: l_non,
                right: r_non,
                adjacent: d.adjacent,
            });
        }
        if !l_adj.is_empty() && !r_adj.is_empty() {
            out.push(Bidomain {
                left: l_adj,
                right: r_adj,
                adjacent: true,
            });
        }
    }
    out
}

/// Exact maximum common connected induced subgraph, preferring more edges
/// among maximum-node solutions.
pub fn mcs_exact_with(g1: &Graph, g2: &Graph, budget: &OracleBudget) -> Result<McsResult> {
    let largest = g1.num_nodes().max(g2.num_nodes());
    if largest > budget.max_mcs_nodes {
        return Err(Error::BudgetExceeded(format!(
            "MCS on a {largest}-node graph exceeds limit {}",
            budget.max_mcs_nodes
        )));
    }
    let mut labels: Vec<u32> = (0..g1.num_nodes()).map(|v| g1.label(v)).collect();
    labels.sort_unstable();
    labels.dedup();
    let domains: Vec<Bidomain> = labels
        .into_iter()
        .filter_map(|lab| {
            let left: Vec<usize> = (0..g1.num_nodes()).filter(|&v| g1.label(v) == lab).collect();
            let right: Vec<usize> = (0..g2.num_nodes()).filter(|&v| g2.label(v) == lab).collect();
            (!right.is_empty()).then_some(Bidomain {
                left,
                right,
                adjacent: false,
            })
        })
        .collect();

    let mut search = Search {
        g1,
        g2,
        best: Vec::new(),
        best_edges: 0,
        max_edges: g1.num_edges().min(g2.num_edges()),
        started: Instant::now(),
        timeout: budget.timeout,
        steps: 0,
        timed_out: false,
    };
    search.run(domains, &mut Vec::new(), 0);
    if search.timed_out {
        return Err(Error::Timeout(search.started.elapsed()));
    }
    let mut mapping = search.best;
    mapping.sort_unstable();
    Ok(McsResult {
        node_count: mapping.len(),
        edge_count: search.best_edges,
        mapping,
    })
}

pub fn mcs_exact(g1: &Graph, g2: &Graph) -> Result<McsResult> {
    mcs_exact_with(g1, g2, &OracleBudget::default())
}
