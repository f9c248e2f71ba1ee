//! Exhaustive reference solvers for tiny graphs, plus shared fixtures.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use g2r::graph::Graph;

fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

fn is_connected_subset(adj: &[Vec<bool>], nodes: &[usize]) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let mut seen = vec![false; nodes.len()];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..nodes.len() {
            if !seen[j] && adj[nodes[i]][nodes[j]] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Tries to embed `nodes` of g1 as an induced, label-preserving subgraph of g2.
fn embeds(g1: &Graph, a1: &[Vec<bool>], nodes: &[usize], g2: &Graph, a2: &[Vec<bool>]) -> bool {
    fn go(
        i: usize,
        img: &mut Vec<usize>,
        used: &mut Vec<bool>,
        g1: &Graph,
        a1: &[Vec<bool>],
        nodes: &[usize],
        g2: &Graph,
        a2: &[Vec<bool>],
    ) -> bool {
        if i == nodes.len() {
            return true;
        }
        for w in 0..g2.num_nodes() {
            if used[w] || g1.label(nodes[i]) != g2.label(w) {
                continue;
            }
            if (0..i).any(|j| a1[nodes[i]][nodes[j]] != a2[w][img[j]]) {
                continue;
            }
            used[w] = true;
            img.push(w);
            if go(i + 1, img, used, g1, a1, nodes, g2, a2) {
                return true;
            }
            img.pop();
            used[w] = false;
        }
        false
    }
    go(0, &mut Vec::new(), &mut vec![false; g2.num_nodes()], g1, a1, nodes, g2, a2)
}

/// Maximum common connected induced subgraph by subset enumeration:
/// `(nodes, edges)`, preferring more edges among maximum-node solutions.
pub fn brute_mcs(g1: &Graph, g2: &Graph) -> (usize, usize) {
    let (a1, a2) = (adjacency(g1), adjacency(g2));
    let n = g1.num_nodes();
    assert!(n <= 12, "brute force is for tiny graphs");
    let mut best = (0, 0);
    for mask in 1u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let edges = g1.edges().iter().filter(|&&(u, v)| mask >> u & 1 == 1 && mask >> v & 1 == 1).count();
        if (nodes.len(), edges) <= best {
            continue;
        }
        if is_connected_subset(&a1, &nodes) && embeds(g1, &a1, &nodes, g2, &a2) {
            best = (nodes.len(), edges);
        }
    }
    best
}

/// A graph state in the edit-space search: node labels and an edge set.
#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    labels: Vec<u32>,
    edges: Vec<(usize, usize)>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

impl State {
    fn of(g: &Graph) -> State {
        State {
            labels: (0..g.num_nodes()).map(|v| g.label(v)).collect(),
            edges: g.edges().to_vec(),
        }
    }

    /// Smallest relabeled encoding over all node orders.
    fn canonical(&self, perms: &[Vec<Vec<usize>>]) -> State {
        let n = self.labels.len();
        perms[n]
            .iter()
            .map(|p| {
                let mut labels = vec![0; n];
                for v in 0..n {
                    labels[p[v]] = self.labels[v];
                }
                let mut edges: Vec<(usize, usize)> = self
                    .edges
                    .iter()
                    .map(|&(u, v)| (p[u].min(p[v]), p[u].max(p[v])))
                    .collect();
                edges.sort_unstable();
                State { labels, edges }
            })
            .min_by(|a, b| (&a.labels, &a.edges).cmp(&(&b.labels, &b.edges)))
            .expect("at least one permutation")
    }

    fn neighbours(&self, alphabet: &[u32], max_nodes: usize) -> Vec<State> {
        let n = self.labels.len();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let mut s = self.clone();
                match s.edges.iter().position(|&e| e == (u, v)) {
                    Some(i) => {
                        s.edges.remove(i);
                    }
                    None => s.edges.push((u, v)),
                }
                out.push(s);
            }
        }
        for v in 0..n {
            for &l in alphabet {
                if l != self.labels[v] {
                    let mut s = self.clone();
                    s.labels[v] = l;
                    out.push(s);
                }
            }
            // Only isolated nodes can be deleted.
            if self.edges.iter().all(|&(a, b)| a != v && b != v) {
                let mut s = self.clone();
                s.labels.remove(v);
                s.edges = s
                    .edges
                    .iter()
                    .map(|&(a, b)| (a - (a > v) as usize, b - (b > v) as usize))
                    .collect();
                out.push(s);
            }
        }
        if n < max_nodes {
            for &l in alphabet {
                let mut s = self.clone();
                s.labels.push(l);
                out.push(s);
            }
        }
        out
    }
}

/// Exact GED by breadth-first search over unit-cost edit operations.
pub fn brute_ged(g1: &Graph, g2: &Graph) -> usize {
    let max_nodes = g1.num_nodes().max(g2.num_nodes());
    assert!(max_nodes <= 6, "brute force is for tiny graphs");
    let perms: Vec<Vec<Vec<usize>>> = (0..=max_nodes).map(permutations).collect();
    let mut alphabet: Vec<u32> = (0..g1.num_nodes())
        .map(|v| g1.label(v))
        .chain((0..g2.num_nodes()).map(|v| g2.label(v)))
        .collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let target = State::of(g2).canonical(&perms);
    let start = State::of(g1).canonical(&perms);
    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0)]);
    while let Some((s, d)) = queue.pop_front() {
        if s == target {
            return d;
        }
        for t in s.neighbours(&alphabet, max_nodes) {
            let c = t.canonical(&perms);
            if seen.insert(c.clone()) {
                queue.push_back((c, d + 1));
            }
        }
    }
    unreachable!("every graph is reachable by edits")
}

/// Naive Spearman: ranks by counting, then Pearson.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Naive τ-b over all pairs.
pub fn naive_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tx += 1,
                (_, Equal) => ty += 1,
                (a, b) if a == b => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let d1 = (conc + disc + tx) as f64;
    let d2 = (conc + disc + ty) as f64;
    if d1 == 0.0 || d2 == 0.0 {
        return None;
    }
    Some((conc - disc) as f64 / (d1.sqrt() * d2.sqrt()))
}
