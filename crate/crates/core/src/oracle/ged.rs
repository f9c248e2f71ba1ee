//! Exact unit-cost graph edit distance by best-first search.
//!
//! Under unit costs an optimal edit sequence always maps every node of the
//! smaller graph onto a distinct node of the larger one, so the search space
//! is the set of injective assignments of the smaller graph's nodes. Partial
//! assignments are expanded in order of `g + h`, where `h` is an assignment
//! lower bound over the unmapped nodes that charges label mismatches, the
//! exact cost of edges back into the mapped part, and half the degree gap of
//! edges among unmapped nodes.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::{lsap, OracleBudget};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// One unit-cost edit. Node ids refer to the graph being edited: original
/// nodes keep their index, inserted nodes are numbered from `|V1|` upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    DeleteEdge(usize, usize),
    DeleteNode(usize),
    SubstituteLabel { node: usize, to: u32 },
    InsertNode { label: u32 },
    InsertEdge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GedResult {
    pub cost: usize,
    pub edit_path: Option<Vec<EditOp>>,
}

/// Small dense view of a graph for the search (at most 64 nodes).
struct Dense {
    n: usize,
    adj: Vec<u64>,
    labels: Vec<u32>,
}

impl Dense {
    fn new(g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut adj = vec![0u64; n];
        for &(u, v) in g.edges() {
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        Dense {
            n,
            adj,
            labels: (0..n).map(|v| g.label(v)).collect(),
        }
    }

    fn edge(&self, u: usize, v: usize) -> bool {
        self.adj[u] >> v & 1 == 1
    }
}

#[derive(PartialEq, Eq)]
struct Entry {
    f: usize,
    depth: usize,
    /// image[i] = node of the larger graph assigned to order[i]
    image: Vec<u8>,
    g: usize,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, deeper first on ties.
        Reverse(self.f)
            .cmp(&Reverse(other.f))
            .then(self.depth.cmp(&other.depth))
            .then_with(|| other.image.cmp(&self.image))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Solver<'a> {
    small: &'a Dense,
    large: &'a Dense,
    order: Vec<usize>,
    /// Constant part: nodes of the larger graph that must be inserted.
    base: usize,
}

impl Solver<'_> {
    fn new<'a>(small: &'a Dense, large: &'a Dense) -> Solver<'a> {
        // Grow the order from the max-degree node, always taking the node with
        // the most edges into the already ordered set.
        let n = small.n;
        let mut order = Vec::with_capacity(n);
        let mut in_order = 0u64;
        for _ in 0..n {
            let next = (0..n)
                .filter(|&v| in_order >> v & 1 == 0)
                .max_by_key(|&v| {
                    (
                        (small.adj[v] & in_order).count_ones(),
                        small.adj[v].count_ones(),
                        Reverse(v),
                    )
                })
                .expect("unordered node exists");
            order.push(next);
            in_order |= 1 << next;
        }
        Solver {
            small,
            large,
            order,
            base: large.n - small.n,
        }
    }

    /// Cost added by assigning `order[depth] -> w` given earlier assignments.
    fn step_cost(&self, image: &[u8], w: usize) -> usize {
        let depth = image.len();
        let u = self.order[depth];
        let mut c = usize::from(self.small.labels[u] != self.large.labels[w]);
        for (i, &x) in image.iter().enumerate() {
            let prev = self.order[i];
            c += usize::from(self.small.edge(u, prev) != self.large.edge(w, x as usize));
        }
        c
    }

    /// Lower bound on all remaining cost; exact once every node is mapped.
    /// Also returns a completion of the assignment it was derived from.
    fn heuristic(&self, image: &[u8]) -> (usize, Vec<u8>) {
        let depth = image.len();
        let mapped_small: u64 = self.order[..depth].iter().fold(0, |m, &v| m | 1 << v);
        let used: u64 = image.iter().fold(0, |m, &w| m | 1 << w);
        let rows: Vec<usize> = self.order[depth..].to_vec();
        let cols: Vec<usize> = (0..self.large.n).filter(|&w| used >> w & 1 == 0).collect();
        let size = cols.len();
        let unmapped_small = !mapped_small & mask(self.small.n);
        let free_large = !used & mask(self.large.n);

        let mut cost = vec![0i64; size * size];
        for (ci, &w) in cols.iter().enumerate() {
            let w_cross = self.large.adj[w] & used;
            let w_inner = (self.large.adj[w] & free_large).count_ones() as i64;
            for (ri, &u) in rows.iter().enumerate() {
                let mut cross = 0i64;
                for (i, &x) in image.iter().enumerate() {
                    let a = self.small.edge(u, self.order[i]);
                    let b = w_cross >> x & 1 == 1;
                    cross += i64::from(a != b);
                }
                let label = i64::from(self.small.labels[u] != self.large.labels[w]);
                let u_inner = (self.small.adj[u] & unmapped_small).count_ones() as i64;
                cost[ri * size + ci] = 2 * (label + cross) + (u_inner - w_inner).abs();
            }
            for ri in rows.len()..size {
                cost[ri * size + ci] = 2 * i64::from(w_cross.count_ones()) + w_inner;
            }
        }
        let (total, assign) = lsap::solve(size, &cost);
        let mut completion = image.to_vec();
        completion.extend(assign[..rows.len()].iter().map(|&c| cols[c] as u8));
        (((total + 1) / 2) as usize, completion)
    }

    /// Full edit cost of a complete assignment.
    fn evaluate(&self, image: &[u8]) -> usize {
        let mut g = 0;
        let mut partial = Vec::with_capacity(image.len());
        for &w in image {
            g += self.step_cost(&partial, w as usize);
            partial.push(w);
        }
        g + self.heuristic(image).0 + self.base
    }

    fn solve(&self, started: Instant, timeout: Option<Duration>) -> Result<(usize, Vec<u8>)> {
        let (h0, completion) = self.heuristic(&[]);
        let mut best_cost = self.evaluate(&completion);
        let mut best = completion;
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            f: self.base + h0,
            depth: 0,
            image: Vec::new(),
            g: 0,
        });
        let mut expanded = 0u64;
        while let Some(e) = heap.pop() {
            if e.f >= best_cost {
                break;
            }
            expanded += 1;
            if expanded % 256 == 0 {
                if let Some(t) = timeout {
                    if started.elapsed() > t {
                        return Err(Error::Timeout(started.elapsed()));
                    }
                }
            }
            if e.depth == self.small.n {
                // f is exact at full depth.
                best_cost = e.f;
                best = e.image;
                break;
            }
            let used: u64 = e.image.iter().fold(0, |m, &w| m | 1 << w);
            for w in 0..self.large.n {
                if used >> w & 1 == 1 {
                    continue;
                }
                let g = e.g + self.step_cost(&e.image, w);
                let mut image = e.image.clone();
                image.push(w as u8);
                let (h, completion) = self.heuristic(&image);
                let f = self.base + g + h;
                if f >= best_cost {
                    continue;
                }
                let c = self.evaluate(&completion);
                if c < best_cost {
                    best_cost = c;
                    best = completion;
                }
                if f < best_cost {
                    heap.push(Entry {
                        f,
                        depth: image.len(),
                        image,
                        g,
                    });
                }
            }
        }
        Ok((best_cost, best))
    }
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Exact GED with an optimal edit path.
pub fn ged_exact_with(g1: &Graph, g2: &Graph, budget: &OracleBudget) -> Result<GedResult> {
    let largest = g1.num_nodes().max(g2.num_nodes());
    if largest > budget.max_ged_nodes || largest > 64 {
        return Err(Error::BudgetExceeded(format!(
            "GED on a {largest}-node graph exceeds limit {}",
            budget.max_ged_nodes.min(64)
        )));
    }
    let started = Instant::now();
    let (d1, d2) = (Dense::new(g1), Dense::new(g2));
    let swapped = d1.n > d2.n;
    let (small, large) = if swapped { (&d2, &d1) } else { (&d1, &d2) };
    let solver = Solver::new(small, large);
    let (cost, image) = solver.solve(started, budget.timeout)?;

    // Node map from g1 into g2 (partial when g1 is the larger graph).
    let mut map: Vec<Option<usize>> = vec![None; g1.num_nodes()];
    for (i, &w) in image.iter().enumerate() {
        let u = solver.order[i];
        if swapped {
            map[w as usize] = Some(u);
        } else {
            map[u] = Some(w as usize);
        }
    }
    let path = edit_path_from_map(g1, g2, &map);
    debug_assert_eq!(path.len(), cost);
    Ok(GedResult {
        cost,
        edit_path: Some(path),
    })
}

pub fn ged_exact(g1: &Graph, g2: &Graph) -> Result<GedResult> {
    ged_exact_with(g1, g2, &OracleBudget::default())
}

/// Edit sequence induced by a partial injective node map `g1 -> g2`.
pub fn edit_path_from_map(g1: &Graph, g2: &Graph, map: &[Option<usize>]) -> Vec<EditOp> {
    let mut ops = Vec::new();
    let mut preimage = vec![None; g2.num_nodes()];
    for (u, m) in map.iter().enumerate() {
        if let Some(w) = *m {
            preimage[w] = Some(u);
        }
    }
    for &(u, v) in g1.edges() {
        let kept = matches!((map[u], map[v]), (Some(a), Some(b)) if g2.has_edge(a, b));
        if !kept {
            ops.push(EditOp::DeleteEdge(u, v));
        }
    }
    for (u, m) in map.iter().enumerate() {
        if m.is_none() {
            ops.push(EditOp::DeleteNode(u));
        }
    }
    for (u, m) in map.iter().enumerate() {
        if let Some(w) = *m {
            if g1.label(u) != g2.label(w) {
                ops.push(EditOp::SubstituteLabel { node: u, to: g2.label(w) });
            }
        }
    }
    let mut target_id = vec![0; g2.num_nodes()];
    let mut next = g1.num_nodes();
    for w in 0..g2.num_nodes() {
        match preimage[w] {
            Some(u) => target_id[w] = u,
            None => {
                ops.push(EditOp::InsertNode { label: g2.label(w) });
                target_id[w] = next;
                next += 1;
            }
        }
    }
    for &(x, y) in g2.edges() {
        let kept = matches!((preimage[x], preimage[y]), (Some(a), Some(b)) if g1.has_edge(a, b));
        if !kept {
            ops.push(EditOp::InsertEdge(target_id[x], target_id[y]));
        }
    }
    ops
}

/// Replays an edit path on `g`. Edges must be removed before their nodes.
pub fn apply_edit_path(g: &Graph, path: &[EditOp]) -> Result<Graph> {
    let mut alive = vec![true; g.num_nodes()];
    let mut labels: Vec<u32> = (0..g.num_nodes()).map(|v| g.label(v)).collect();
    let mut edges: std::collections::BTreeSet<(usize, usize)> = g.edges().iter().copied().collect();
    let key = |u: usize, v: usize| (u.min(v), u.max(v));
    let bad = |m: String| Error::Inconsistent(format!("edit path: {m}"));
    for op in path {
        match *op {
            EditOp::DeleteEdge(u, v) => {
                if !edges.remove(&key(u, v)) {
                    return Err(bad(format!("no edge ({u},{v}) to delete")));
                }
            }
            EditOp::DeleteNode(u) => {
                if !alive.get(u).copied().unwrap_or(false) {
                    return Err(bad(format!("node {u} not present")));
                }
                if edges.iter().any(|&(a, b)| a == u || b == u) {
                    return Err(bad(format!("node {u} deleted with incident edges")));
                }
                alive[u] = false;
            }
            EditOp::SubstituteLabel { node, to } => {
                if !alive.get(node).copied().unwrap_or(false) {
                    return Err(bad(format!("node {node} not present")));
                }
                labels[node] = to;
            }
            EditOp::InsertNode { label } => {
                alive.push(true);
                labels.push(label);
            }
            EditOp::InsertEdge(u, v) => {
                let ok = |x: usize| alive.get(x).copied().unwrap_or(false);
                if u == v || !ok(u) || !ok(v) || !edges.insert(key(u, v)) {
                    return Err(bad(format!("cannot insert edge ({u},{v})")));
                }
            }
        }
    }
    let mut new_id = vec![usize::MAX; alive.len()];
    let mut n = 0;
    for (i, &a) in alive.iter().enumerate() {
        if a {
            new_id[i] = n;
            n += 1;
        }
    }
    let out_labels: Vec<u32> = (0..alive.len()).filter(|&i| alive[i]).map(|i| labels[i]).collect();
    let labeled = g.labels().is_some() || out_labels.iter().any(|&l| l != 0);
    Graph::new(
        n,
        edges.into_iter().map(|(u, v)| (new_id[u], new_id[v])),
        labeled.then_some(out_labels),
    )
}
