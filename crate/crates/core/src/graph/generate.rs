use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RETRY_CAP: usize = 10_000;

/// Connected G(n, p) sample by rejection; deterministic in `seed`.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    generate_er_with_cap(n, p, seed, DEFAULT_RETRY_CAP)
}

pub fn generate_er_with_cap(n: usize, p: f64, seed: u64, max_attempts: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidGraph("ER graph needs n >= 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("edge probability {p} outside (0, 1]")));
    }
    let mut rng = rng::stream(seed, "er", 0);
    for _ in 0..max_attempts {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        match Graph::unlabeled(n, edges) {
            Ok(g) => return Ok(g),
            Err(Error::InvalidGraph(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NotConnected {
        n,
        p,
        attempts: max_attempts,
    })
}

/// Ranges for synthetic dataset generation (inclusive node counts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErRange {
    pub n_min: usize,
    pub n_max: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for ErRange {
    fn default() -> Self {
        ErRange {
            n_min: 5,
            n_max: 50,
            p_min: 0.1,
            p_max: 0.5,
        }
    }
}

/// `count` connected ER graphs with n and p drawn uniformly from `range`.
pub fn generate_dataset(count: usize, range: ErRange, seed: u64) -> Result<Vec<Graph>> {
    if range.n_min == 0 || range.n_min > range.n_max || range.p_min > range.p_max {
        return Err(Error::Config(format!("bad ER ranges {range:?}")));
    }
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, "dataset", i as u64);
            let n = r.gen_range(range.n_min..=range.n_max);
            let p = if range.p_min == range.p_max {
                range.p_min
            } else {
                r.gen_range(range.p_min..range.p_max)
            };
            generate_er(n, p, r.gen())
        })
        .collect()
}
