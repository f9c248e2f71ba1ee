//! Prediction and ranking quality metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty(op));
    }
    Ok(())
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths("mse", preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths("mae", preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// 1-based ranks, tied values sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ with average ranks for ties; `None` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort by value, returning the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]) + sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ-b in O(n log n); `None` when either side is entirely tied.
pub fn kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let n0 = (n as u64) * (n as u64 - 1) / 2;

    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let n1 = tied_pairs(&xs);
    let mut n3 = 0;
    let mut run = 1u64;
    for w in idx.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    if n0 == n1 || n0 == n2 {
        return None;
    }
    let num = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let den = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Some((num as f64 / den).clamp(-1.0, 1.0))
}

/// Indices of the `k` largest scores, ties broken by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `|top_k(pred) ∩ top_k(truth)| / k`.
pub fn precision_at_k(pred: &[f64], truth: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Empty("precision_at_k with k = 0"));
    }
    if pred.len() != truth.len() {
        return Err(Error::shape("precision_at_k", format!("{} vs {} scores", pred.len(), truth.len())));
    }
    if k > pred.len() {
        return Err(Error::OutOfRange {
            op: "precision_at_k",
            index: k,
            bound: pred.len() + 1,
        });
    }
    let a = top_k(pred, k);
    let b = top_k(truth, k);
    let hits = a.iter().filter(|i| b.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub mse: f64,
    pub mae: f64,
    pub spearman_rho: Option<f64>,
    pub kendall_tau: Option<f64>,
    /// k → mean precision over queries with at least k candidates.
    pub p_at_k: BTreeMap<usize, f64>,
}

impl EvalReport {
    /// `queries` lists, per query graph, the positions in `preds` of its candidate pairs.
    pub fn compute(preds: &[f64], targets: &[f64], queries: &[Vec<usize>], ks: &[usize]) -> Result<Self> {
        let mut p_at_k = BTreeMap::new();
        for &k in ks {
            let mut sum = 0.0;
            let mut count = 0;
            for q in queries.iter().filter(|q| q.len() >= k) {
                let p: Vec<f64> = q.iter().map(|&i| preds[i]).collect();
                let t: Vec<f64> = q.iter().map(|&i| targets[i]).collect();
                sum += precision_at_k(&p, &t, k)?;
                count += 1;
            }
            if count > 0 {
                p_at_k.insert(k, sum / count as f64);
            }
        }
        Ok(EvalReport {
            pairs: preds.len(),
            mse: mse(preds, targets)?,
            mae: mae(preds, targets)?,
            spearman_rho: spearman(preds, targets),
            kendall_tau: kendall(preds, targets),
            p_at_k,
        })
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("pairs,mse,mae,spearman_rho,kendall_tau");
        for k in self.p_at_k.keys() {
            h.push_str(&format!(",p_at_{k}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut row = format!(
            "{},{},{},{},{}",
            self.pairs,
            self.mse,
            self.mae,
            opt(self.spearman_rho),
            opt(self.kendall_tau)
        );
        for v in self.p_at_k.values() {
            row.push_str(&format!(",{v}"));
        }
        row
    }
}
