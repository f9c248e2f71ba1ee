//! Region operators and the MCS / GED similarity scores.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncodedBatch, GraphRegion};
use crate::error::{Error, Result};
use crate::nn::{join, Mlp, ParamTree};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMetric {
    Nodes,
    #[default]
    NodesPlusEdges,
}

impl FromStr for SizeMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(SizeMetric::Nodes),
            "nodes_plus_edges" => Ok(SizeMetric::NodesPlusEdges),
            _ => Err(Error::Config(format!("unknown size metric {s:?}"))),
        }
    }
}

impl SizeMetric {
    pub fn of(self, r: &GraphRegion) -> f64 {
        match self {
            SizeMetric::Nodes => r.num_nodes as f64,
            SizeMetric::NodesPlusEdges => r.size as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub size_metric: SizeMetric,
    /// One MLP for both heads; the GED shape term is scaled by `lambda`.
    pub shared_mlp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParams<T = Tensor> {
    pub mlp_mcs: Mlp<T>,
    /// Absent when the heads share `mlp_mcs`.
    pub mlp_ged: Option<Mlp<T>>,
    pub alpha1: T,
    pub beta1: T,
    pub alpha2: T,
    pub beta2: T,
    pub gamma: T,
    /// Present only with a shared MLP.
    pub lambda: Option<T>,
}

impl<T> ParamTree<T> for ScoreParams<T> {
    type Out<U> = ScoreParams<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<ScoreParams<U>, E> {
        Ok(ScoreParams {
            mlp_mcs: self.mlp_mcs.try_map(&join(prefix, "mlp_mcs"), f)?,
            mlp_ged: match &self.mlp_ged {
                Some(m) => Some(m.try_map(&join(prefix, "mlp_ged"), f)?),
                None => None,
            },
            alpha1: f(&join(prefix, "alpha1"), &self.alpha1)?,
            beta1: f(&join(prefix, "beta1"), &self.beta1)?,
            alpha2: f(&join(prefix, "alpha2"), &self.alpha2)?,
            beta2: f(&join(prefix, "beta2"), &self.beta2)?,
            gamma: f(&join(prefix, "gamma"), &self.gamma)?,
            lambda: match &self.lambda {
                Some(l) => Some(f(&join(prefix, "lambda"), l)?),
                None => None,
            },
        })
    }
}

fn one() -> Tensor {
    Tensor::raw(vec![], vec![1.0])
}

impl ScoreParams {
    /// Random MLPs over `k·out` inputs with hidden width `out`; all scalars 1.
    pub fn init(k: usize, out: usize, cfg: &ScoreConfig, rng: &mut impl Rng) -> Self {
        let mlp_mcs = Mlp::init(rng, k * out, out, 1);
        let mlp_ged = (!cfg.shared_mlp).then(|| Mlp::init(rng, k * out, out, 1));
        ScoreParams {
            mlp_mcs,
            mlp_ged,
            alpha1: one(),
            beta1: one(),
            alpha2: one(),
            beta2: one(),
            gamma: one(),
            lambda: cfg.shared_mlp.then(one),
        }
    }

    /// Volume-only scoring: zero shape weights, unit volume weights.
    pub fn volume_only(k: usize, out: usize) -> Self {
        let zero = Tensor::raw(vec![], vec![0.0]);
        ScoreParams {
            mlp_mcs: Mlp::zeros(k * out, out, 1),
            mlp_ged: Some(Mlp::zeros(k * out, out, 1)),
            alpha1: zero.clone(),
            beta1: one(),
            alpha2: zero,
            beta2: one(),
            gamma: one(),
            lambda: None,
        }
    }

    fn ged_head(&self) -> &Mlp {
        self.mlp_ged.as_ref().unwrap_or(&self.mlp_mcs)
    }

    fn input_dim(&self) -> usize {
        self.mlp_mcs.l1.dims().0
    }
}

/// Dimension-wise minimum.
pub fn inter(r1: &Tensor, r2: &Tensor) -> Result<Tensor> {
    if r1.shape() != r2.shape() {
        return Err(Error::shape("inter", format!("{:?} vs {:?}", r1.shape(), r2.shape())));
    }
    let data = r1.data().iter().zip(r2.data()).map(|(&a, &b)| if b < a { b } else { a }).collect();
    Ok(Tensor::raw(r1.shape().to_vec(), data))
}

/// `r1 + r2 - 2·inter(r1, r2)`.
pub fn difference(r1: &Tensor, r2: &Tensor) -> Result<Tensor> {
    let m = inter(r1, r2)?;
    let data = r1
        .data()
        .iter()
        .zip(r2.data())
        .zip(m.data())
        .map(|((&a, &b), &m)| a + b - 2.0 * m)
        .collect();
    Ok(Tensor::raw(r1.shape().to_vec(), data))
}

/// Product of the coordinates of a one-dimensional region.
pub fn volume(r: &Tensor) -> Result<f64> {
    if r.shape().len() != 1 {
        return Err(Error::shape("volume", format!("{:?} is not one-dimensional", r.shape())));
    }
    Ok(r.data().iter().product())
}

fn check_pair(a: &GraphRegion, b: &GraphRegion, p: &ScoreParams) -> Result<()> {
    if a.region.shape() != b.region.shape() {
        return Err(Error::shape("score", format!("{:?} vs {:?}", a.region.shape(), b.region.shape())));
    }
    if a.region.len() != p.input_dim() {
        return Err(Error::shape(
            "score",
            format!("regions have {} entries, heads expect {}", a.region.len(), p.input_dim()),
        ));
    }
    Ok(())
}

fn avg_size(a: &GraphRegion, b: &GraphRegion, cfg: &ScoreConfig) -> f64 {
    (cfg.size_metric.of(a) + cfg.size_metric.of(b)) / 2.0
}

pub fn score_mcs(a: &GraphRegion, b: &GraphRegion, p: &ScoreParams, cfg: &ScoreConfig) -> Result<f64> {
    check_pair(a, b, p)?;
    let shape = p.mlp_mcs.apply(inter(&a.region, &b.region)?.data())[0] / avg_size(a, b, cfg);
    let avg_vol = (volume(&a.mean_region)? + volume(&b.mean_region)?) / 2.0;
    let vol = volume(&inter(&a.mean_region, &b.mean_region)?)? / avg_vol;
    Ok(p.alpha1.item() * shape + p.beta1.item() * vol)
}

pub fn score_ged(a: &GraphRegion, b: &GraphRegion, p: &ScoreParams, cfg: &ScoreConfig) -> Result<f64> {
    check_pair(a, b, p)?;
    let mut shape = p.ged_head().apply(difference(&a.region, &b.region)?.data())[0] / avg_size(a, b, cfg);
    if let Some(l) = &p.lambda {
        shape *= l.item();
    }
    let avg_vol = (volume(&a.mean_region)? + volume(&b.mean_region)?) / 2.0;
    let vol = volume(&difference(&a.mean_region, &b.mean_region)?)? / avg_vol;
    Ok(p.alpha2.item() * shape + p.beta2.item() * (-p.gamma.item() * vol).exp())
}

/// Scores of pairs of batch rows, on the tape.
#[derive(Debug, Clone, Copy)]
pub struct PairScores {
    /// `[P]`
    pub mcs: Var,
    /// `[P]`
    pub ged: Var,
}

/// Scores `pairs` (indices into the batch) given per-graph sizes already
/// chosen by the size metric.
pub fn score_pairs_on_tape(
    tape: &mut Tape,
    enc: EncodedBatch,
    sizes: &[f64],
    pairs: &[(usize, usize)],
    p: &ScoreParams<Var>,
) -> Result<PairScores> {
    if pairs.is_empty() {
        return Err(Error::Empty("score pairs"));
    }
    let n = pairs.len();
    let ia: Vec<usize> = pairs.iter().map(|&(a, _)| a).collect();
    let ib: Vec<usize> = pairs.iter().map(|&(_, b)| b).collect();
    let mut avg = Vec::with_capacity(n);
    for &(a, b) in pairs {
        let (sa, sb) = match (sizes.get(a), sizes.get(b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::OutOfRange { op: "score sizes", index: a.max(b), bound: sizes.len() }),
        };
        avg.push((sa + sb) / 2.0);
    }
    let avg = tape.constant(Tensor::raw(vec![n], avg));

    let ra = tape.gather_rows(enc.regions, ia.clone())?;
    let rb = tape.gather_rows(enc.regions, ib.clone())?;
    let ma = tape.gather_rows(enc.means, ia)?;
    let mb = tape.gather_rows(enc.means, ib)?;
    let vol_a = tape.prod_rows(ma)?;
    let vol_b = tape.prod_rows(mb)?;
    let vol_sum = tape.add(vol_a, vol_b)?;
    let avg_vol = tape.scale(vol_sum, 0.5);

    // MCS
    let inter_r = tape.ewise_min(ra, rb)?;
    let h = p.mlp_mcs.forward(tape, inter_r)?;
    let h = tape.reshape(h, vec![n])?;
    let shape = tape.div(h, avg)?;
    let shape = tape.mul_scalar(shape, p.alpha1)?;
    let inter_m = tape.ewise_min(ma, mb)?;
    let vi = tape.prod_rows(inter_m)?;
    let vol = tape.div(vi, avg_vol)?;
    let vol = tape.mul_scalar(vol, p.beta1)?;
    let mcs = tape.add(shape, vol)?;

    // GED
    let diff_r = difference_on_tape(tape, ra, rb, Some(inter_r))?;
    let head = p.mlp_ged.as_ref().unwrap_or(&p.mlp_mcs);
    let h = head.forward(tape, diff_r)?;
    let h = tape.reshape(h, vec![n])?;
    let mut shape = tape.div(h, avg)?;
    if let Some(l) = p.lambda {
        shape = tape.mul_scalar(shape, l)?;
    }
    let shape = tape.mul_scalar(shape, p.alpha2)?;
    let diff_m = difference_on_tape(tape, ma, mb, Some(inter_m))?;
    let vd = tape.prod_rows(diff_m)?;
    let x = tape.div(vd, avg_vol)?;
    let x = tape.mul_scalar(x, p.gamma)?;
    let e = tape.exp_neg(x);
    let vol = tape.mul_scalar(e, p.beta2)?;
    let ged = tape.add(shape, vol)?;

    Ok(PairScores { mcs, ged })
}

fn difference_on_tape(tape: &mut Tape, a: Var, b: Var, min: Option<Var>) -> Result<Var> {
    let m = match min {
        Some(m) => m,
        None => tape.ewise_min(a, b)?,
    };
    let s = tape.add(a, b)?;
    let m2 = tape.scale(m, 2.0);
    tape.sub(s, m2)
}
