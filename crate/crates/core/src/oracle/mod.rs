//! Exact ground truth: MCS, GED, Bunke GED, the edge term Φ, the loose GED
//! upper bound, and the normalized regression targets.

mod ged;
mod lsap;
mod mcs;

pub use ged::{apply_edit_path, edit_path_from_map, ged_exact, ged_exact_with, EditOp, GedResult};
pub use mcs::{mcs_exact, mcs_exact_with, McsResult};

use std::time::Duration;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LabeledPair};
use crate::rng;

/// Size limits and wall-clock limit for the exact solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBudget {
    pub max_mcs_nodes: usize,
    pub max_ged_nodes: usize,
    pub timeout: Option<Duration>,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_mcs_nodes: 16,
            max_ged_nodes: 10,
            timeout: None,
        }
    }
}

/// GED under free incident-edge edits: `|V1| + |V2| - 2 |V_M|`.
pub fn bunke_ged(g1: &Graph, g2: &Graph, mcs_nodes: usize) -> Result<usize> {
    (g1.num_nodes() + g2.num_nodes())
        .checked_sub(2 * mcs_nodes)
        .ok_or_else(|| Error::Inconsistent(format!("mcs_nodes={mcs_nodes} exceeds graph sizes")))
}

/// `|E1| + |E2| - 2 |E_M|`.
pub fn phi(g1: &Graph, g2: &Graph, mcs_edges: usize) -> Result<usize> {
    (g1.num_edges() + g2.num_edges())
        .checked_sub(2 * mcs_edges)
        .ok_or_else(|| Error::Inconsistent(format!("mcs_edges={mcs_edges} exceeds edge counts")))
}

/// Loose upper bound `GED <= GED_Bunke + Φ` (no extra common substructure).
pub fn check_prop2_bound(ged: usize, bunke: usize, phi: usize) -> bool {
    ged <= bunke + phi
}

fn mean_nodes(g1: &Graph, g2: &Graph) -> f64 {
    (g1.num_nodes() + g2.num_nodes()) as f64 / 2.0
}

pub fn nmcs_target(g1: &Graph, g2: &Graph, mcs_nodes: usize) -> f64 {
    mcs_nodes as f64 / mean_nodes(g1, g2)
}

pub fn nged_target(g1: &Graph, g2: &Graph, ged: usize) -> f64 {
    (-(ged as f64) / mean_nodes(g1, g2)).exp()
}

/// Runs both exact solvers on one pair of dataset graphs.
pub fn label_pair(ds: &Dataset, a: usize, b: usize, budget: &OracleBudget) -> Result<LabeledPair> {
    let (g1, g2) = (&ds.graphs[a], &ds.graphs[b]);
    let m = mcs_exact_with(g1, g2, budget)?;
    let d = ged_exact_with(g1, g2, budget)?;
    LabeledPair::new(a, b, m.node_count, m.edge_count, d.cost, ds)
}

/// Whether a labeled pair satisfies the loose GED bound.
pub fn pair_within_bound(ds: &Dataset, p: &LabeledPair) -> Result<bool> {
    let (g1, g2) = (&ds.graphs[p.a], &ds.graphs[p.b]);
    Ok(check_prop2_bound(p.ged, bunke_ged(g1, g2, p.mcs_nodes)?, phi(g1, g2, p.mcs_edges)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSelection {
    /// Every unordered pair `i < j`.
    All,
    /// `m` distinct unordered pairs drawn uniformly.
    Random(usize),
}

impl std::str::FromStr for PairSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(PairSelection::All);
        }
        s.strip_prefix("random:")
            .and_then(|m| m.parse().ok())
            .map(PairSelection::Random)
            .ok_or_else(|| Error::Config(format!("pair selection {s:?}: expected all | random:<m>")))
    }
}

pub fn select_pairs(num_graphs: usize, sel: PairSelection, seed: u64) -> Result<Vec<(usize, usize)>> {
    let total = num_graphs * num_graphs.saturating_sub(1) / 2;
    let unrank = |mut k: usize| {
        // k-th pair in row-major order of the strict upper triangle.
        let mut i = 0;
        while k >= num_graphs - 1 - i {
            k -= num_graphs - 1 - i;
            i += 1;
        }
        (i, i + 1 + k)
    };
    match sel {
        PairSelection::All => Ok((0..total).map(unrank).collect()),
        PairSelection::Random(m) => {
            if m > total {
                return Err(Error::Config(format!("requested {m} pairs but only {total} exist")));
            }
            let mut r = rng::stream(seed, "pairs", 0);
            let mut ks = sample(&mut r, total, m).into_vec();
            ks.sort_unstable();
            Ok(ks.into_iter().map(unrank).collect())
        }
    }
}

/// Labels `pairs` in parallel on the current rayon pool; output order
/// follows input order.
pub fn label_pairs(ds: &Dataset, pairs: &[(usize, usize)], budget: &OracleBudget) -> Result<Vec<LabeledPair>> {
    for &(a, b) in pairs {
        for i in [a, b] {
            if i >= ds.len() {
                return Err(Error::OutOfRange { op: "label_pairs", index: i, bound: ds.len() });
            }
        }
    }
    pairs
        .par_iter()
        .map(|&(a, b)| label_pair(ds, a, b, budget))
        .collect()
}
