//! A complete model: encoder, score heads and task-uncertainty weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_batch, CachedRegion, EncoderConfig, EncoderParams, GraphRegion, SinkAssignment};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::inference::{score_ged, score_mcs, ScoreConfig, ScoreParams};
use crate::nn::{join, ParamTree};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Mcs,
    Ged,
    Dual,
    DualUncertainty,
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcs" => Ok(LossMode::Mcs),
            "ged" => Ok(LossMode::Ged),
            "dual" => Ok(LossMode::Dual),
            "dual_uncertainty" => Ok(LossMode::DualUncertainty),
            _ => Err(Error::Config(format!("unknown loss mode {s:?}"))),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Mcs => "mcs",
            LossMode::Ged => "ged",
            LossMode::Dual => "dual",
            LossMode::DualUncertainty => "dual_uncertainty",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub score: ScoreConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub encoder: EncoderParams<T>,
    pub scores: ScoreParams<T>,
    pub theta_mcs: T,
    pub theta_ged: T,
}

impl<T> ParamTree<T> for ModelParams<T> {
    type Out<U> = ModelParams<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<ModelParams<U>, E> {
        Ok(ModelParams {
            encoder: self.encoder.try_map(&join(prefix, "encoder"), f)?,
            scores: self.scores.try_map(&join(prefix, "scores"), f)?,
            theta_mcs: f(&join(prefix, "theta_mcs"), &self.theta_mcs)?,
            theta_ged: f(&join(prefix, "theta_ged"), &self.theta_ged)?,
        })
    }
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "init", 0);
        let encoder = EncoderParams::init(&cfg.encoder, &mut rng);
        let scores = ScoreParams::init(cfg.encoder.k, cfg.encoder.out, &cfg.score, &mut rng);
        ModelParams {
            encoder,
            scores,
            theta_mcs: Tensor::raw(vec![], vec![0.0]),
            theta_ged: Tensor::raw(vec![], vec![0.0]),
        }
    }

    /// Parameter tensors in canonical order.
    pub fn flatten(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.for_each("", &mut |_, t| out.push(t.clone()));
        out
    }

    /// Inverse of [`flatten`](Self::flatten) using `self` as the layout.
    pub fn with_values(&self, values: Vec<Tensor>) -> Result<Self> {
        let mut it = values.into_iter();
        let p = self.try_map("", &mut |name, t| {
            let v = it.next().ok_or_else(|| Error::shape("with_values", "too few tensors"))?;
            if v.shape() != t.shape() {
                return Err(Error::shape("with_values", format!("{name}: {:?} vs {:?}", v.shape(), t.shape())));
            }
            Ok(v)
        })?;
        if it.next().is_some() {
            return Err(Error::shape("with_values", "too many tensors"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Root seed; sink assignments are derived from it per graph id.
    pub seed: u64,
    pub loss_mode: LossMode,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64, loss_mode: LossMode) -> Result<Self> {
        config.encoder.validate()?;
        let params = ModelParams::init(&config, seed);
        Ok(Model {
            config,
            params,
            seed,
            loss_mode,
        })
    }

    pub fn assignment(&self, g: &Graph, id: usize) -> SinkAssignment {
        SinkAssignment::sample(g.num_nodes(), self.config.encoder.n_paths, self.seed, id as u64)
    }

    pub fn assignments(&self, ds: &Dataset) -> Vec<SinkAssignment> {
        ds.graphs.iter().enumerate().map(|(i, g)| self.assignment(g, i)).collect()
    }

    /// Regions of every graph, with the assignments used.
    pub fn encode_dataset(&self, ds: &Dataset) -> Result<Vec<CachedRegion>> {
        let assigns = self.assignments(ds);
        let regions = self.encode_with(ds, &assigns)?;
        Ok(regions
            .into_iter()
            .zip(assigns)
            .enumerate()
            .map(|(id, (region, assign))| CachedRegion { id, region, assign })
            .collect())
    }

    pub fn encode_with(&self, ds: &Dataset, assigns: &[SinkAssignment]) -> Result<Vec<GraphRegion>> {
        let items: Vec<_> = ds.graphs.iter().zip(assigns).collect();
        encode_batch(&items, &self.params.encoder, &self.config.encoder)
    }

    /// `(mcs, ged)` similarity of two encoded graphs.
    pub fn score(&self, a: &GraphRegion, b: &GraphRegion) -> Result<(f64, f64)> {
        Ok((
            score_mcs(a, b, &self.params.scores, &self.config.score)?,
            score_ged(a, b, &self.params.scores, &self.config.score)?,
        ))
    }
}
