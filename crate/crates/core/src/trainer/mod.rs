//! Losses, Adam, the training loop with early stopping, and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod loss;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, load_checkpoint_for, save_checkpoint, FORMAT_VERSION,
};
pub use config::{apply_config, parse_config, TrainConfig};
pub use loss::{dual_loss, mse_loss, uncertainty_loss};

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::encoder::{encode_on_tape, SinkAssignment};
use crate::error::{Error, Result};
use crate::graph::{Dataset, LabeledPair};
use crate::inference::{score_ged, score_mcs, score_pairs_on_tape};
use crate::model::{LossMode, Model, ModelConfig};
use crate::nn::{to_tape, ParamTree};
use crate::rng;
use crate::tensor::{Tape, Tensor};

/// Pair indices for training, validation and held-out testing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `n` pair indices; a fifth is held out for testing and a fifth of
/// the remainder is used for validation.
pub fn split_pairs(n: usize, seed: u64) -> Result<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split", 0));
    let n_test = n / 5;
    let n_val = (n - n_test) / 5;
    if n_test == 0 || n_val == 0 || n - n_test - n_val == 0 {
        return Err(Error::Config(format!("{n} labeled pairs are too few to split")));
    }
    let test = idx[..n_test].to_vec();
    let val = idx[n_test..n_test + n_val].to_vec();
    let train = idx[n_test + n_val..].to_vec();
    Ok(Split { train, val, test })
}

/// Mean squared errors of both heads over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairErrors {
    pub mse_mcs: f64,
    pub mse_ged: f64,
}

impl PairErrors {
    /// Model-selection loss for a mode; the dual modes use the plain sum.
    pub fn selection_loss(&self, mode: LossMode) -> f64 {
        match mode {
            LossMode::Mcs => self.mse_mcs,
            LossMode::Ged => self.mse_ged,
            LossMode::Dual | LossMode::DualUncertainty => dual_loss(self.mse_mcs, self.mse_ged),
        }
    }
}

/// Minibatch optimizer over a labeled pair list.
pub struct Trainer<'a> {
    ds: &'a Dataset,
    pairs: &'a [LabeledPair],
    assigns: Vec<SinkAssignment>,
    model: Model,
    adam: AdamState,
    lr: f64,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a Dataset, pairs: &'a [LabeledPair], model: Model, lr: f64) -> Result<Self> {
        if model.config.encoder.label_vocab < ds.label_vocab() {
            return Err(Error::Config(format!(
                "encoder has {} labels, dataset needs {}",
                model.config.encoder.label_vocab,
                ds.label_vocab()
            )));
        }
        let assigns = model.assignments(ds);
        let adam = AdamState::new(&model.params.flatten());
        Ok(Trainer {
            ds,
            pairs,
            assigns,
            model,
            adam,
            lr,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps_taken(&self) -> u64 {
        self.adam.t
    }

    /// One Adam update on the given pair indices; returns the objective before the update.
    pub fn step(&mut self, batch: &[usize]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut graphs = Vec::new();
        let mut local_pairs = Vec::with_capacity(batch.len());
        let (mut t_mcs, mut t_ged) = (Vec::with_capacity(batch.len()), Vec::with_capacity(batch.len()));
        for &i in batch {
            let p = self.pairs.get(i).ok_or(Error::OutOfRange {
                op: "training batch",
                index: i,
                bound: self.pairs.len(),
            })?;
            let mut slot = |g: usize| {
                *local.entry(g).or_insert_with(|| {
                    graphs.push(g);
                    graphs.len() - 1
                })
            };
            local_pairs.push((slot(p.a), slot(p.b)));
            t_mcs.push(p.nmcs_target);
            t_ged.push(p.nged_target);
        }
        let items: Vec<_> = graphs.iter().map(|&g| (&self.ds.graphs[g], &self.assigns[g])).collect();
        let metric = self.model.config.score.size_metric;
        let sizes: Vec<f64> = graphs
            .iter()
            .map(|&g| {
                let gr = &self.ds.graphs[g];
                match metric {
                    crate::inference::SizeMetric::Nodes => gr.num_nodes() as f64,
                    crate::inference::SizeMetric::NodesPlusEdges => gr.cardinality() as f64,
                }
            })
            .collect();

        let mut tape = Tape::new();
        let pv = to_tape(&self.model.params, &mut tape);
        let enc = encode_on_tape(&mut tape, &pv.encoder, &self.model.config.encoder, &items)?;
        let scores = score_pairs_on_tape(&mut tape, enc, &sizes, &local_pairs, &pv.scores)?;
        let n = batch.len();
        let tm = tape.constant(Tensor::raw(vec![n], t_mcs));
        let tg = tape.constant(Tensor::raw(vec![n], t_ged));
        let objective = match self.model.loss_mode {
            LossMode::Mcs => loss::mse_on_tape(&mut tape, scores.mcs, tm)?,
            LossMode::Ged => loss::mse_on_tape(&mut tape, scores.ged, tg)?,
            LossMode::Dual => {
                let a = loss::mse_on_tape(&mut tape, scores.mcs, tm)?;
                let b = loss::mse_on_tape(&mut tape, scores.ged, tg)?;
                tape.add(a, b)?
            }
            LossMode::DualUncertainty => {
                let a = loss::mse_on_tape(&mut tape, scores.mcs, tm)?;
                let b = loss::mse_on_tape(&mut tape, scores.ged, tg)?;
                let a = loss::uncertainty_term(&mut tape, a, pv.theta_mcs)?;
                let b = loss::uncertainty_term(&mut tape, b, pv.theta_ged)?;
                tape.add(a, b)?
            }
        };
        let value = tape.value(objective).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {value} at step {} ({} mode)",
                self.adam.t + 1,
                self.model.loss_mode
            )));
        }
        let grads = tape.backward(objective)?;
        let mut flat_grads = Vec::new();
        pv.for_each("", &mut |_, v| flat_grads.push(grads.wrt(*v)));
        if let Some(bad) = flat_grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter tensor {bad} at step {}", self.adam.t + 1)));
        }
        let mut flat = self.model.params.flatten();
        adam_step(&mut flat, &flat_grads, &mut self.adam, self.lr)?;
        self.model.params = self.model.params.with_values(flat)?;
        Ok(value)
    }

    /// Errors of the current model on the given pair indices.
    pub fn errors(&self, idx: &[usize]) -> Result<PairErrors> {
        pair_errors(&self.model, self.ds, self.pairs, idx, Some(&self.assigns))
    }
}

/// Errors of `model` on `pairs[idx]`, encoding only the graphs involved.
pub fn pair_errors(
    model: &Model,
    ds: &Dataset,
    pairs: &[LabeledPair],
    idx: &[usize],
    assigns: Option<&[SinkAssignment]>,
) -> Result<PairErrors> {
    let (preds, targets) = predict_pairs(model, ds, pairs, idx, assigns)?;
    Ok(PairErrors {
        mse_mcs: mse_loss(&preds.0, &targets.0)?,
        mse_ged: mse_loss(&preds.1, &targets.1)?,
    })
}

type Columns = (Vec<f64>, Vec<f64>);

/// `((mcs, ged) predictions, (nmcs, nged) targets)` for `pairs[idx]`.
pub fn predict_pairs(
    model: &Model,
    ds: &Dataset,
    pairs: &[LabeledPair],
    idx: &[usize],
    assigns: Option<&[SinkAssignment]>,
) -> Result<(Columns, Columns)> {
    let mut needed: Vec<usize> = Vec::new();
    for &i in idx {
        let p = pairs.get(i).ok_or(Error::OutOfRange { op: "pairs", index: i, bound: pairs.len() })?;
        needed.extend([p.a, p.b]);
    }
    needed.sort_unstable();
    needed.dedup();
    if let Some(&bad) = needed.iter().find(|&&g| g >= ds.len()) {
        return Err(Error::OutOfRange { op: "pairs", index: bad, bound: ds.len() });
    }
    let owned;
    let assigns = match assigns {
        Some(a) => a,
        None => {
            owned = model.assignments(ds);
            &owned
        }
    };
    let items: Vec<_> = needed.iter().map(|&g| (&ds.graphs[g], &assigns[g])).collect();
    let regions = crate::encoder::encode_batch(&items, &model.params.encoder, &model.config.encoder)?;
    let at = |g: usize| &regions[needed.binary_search(&g).expect("graph was encoded")];
    let mut preds = (Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len()));
    let mut targets = (Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len()));
    for &i in idx {
        let p = &pairs[i];
        let (ra, rb) = (at(p.a), at(p.b));
        preds.0.push(score_mcs(ra, rb, &model.params.scores, &model.config.score)?);
        preds.1.push(score_ged(ra, rb, &model.params.scores, &model.config.score)?);
        targets.0.push(p.nmcs_target);
        targets.1.push(p.nged_target);
    }
    Ok((preds, targets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub theta_mcs: f64,
    pub theta_ged: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub split: Split,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Splits `pairs` and trains a fresh model.
pub fn train(ds: &Dataset, pairs: &[LabeledPair], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let split = split_pairs(pairs.len(), cfg.seed)?;
    train_with_split(ds, pairs, split, model_cfg, cfg)
}

pub fn train_with_split(
    ds: &Dataset,
    pairs: &[LabeledPair],
    split: Split,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let model = Model::init(model_cfg.clone(), cfg.seed, cfg.loss_mode)?;
    let mut trainer = Trainer::new(ds, pairs, model, cfg.lr)?;
    let mut batch_rng = rng::stream(cfg.seed, "batches", 0);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut bad_validations = 0;
    let mut stopped_early = false;
    let mut batch = vec![0; cfg.batch_size];

    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for _ in 0..cfg.iters_per_epoch {
            for b in batch.iter_mut() {
                *b = split.train[batch_rng.gen_range(0..split.train.len())];
            }
            total += trainer.step(&batch)?;
        }
        let out_of_time = cfg.max_wall_clock.is_some_and(|limit| start.elapsed() >= limit);
        let last = epoch == cfg.max_epochs || out_of_time;
        let scheduled = epoch > cfg.warmup_epochs && (epoch - cfg.warmup_epochs) % cfg.validate_every == 0;
        let val_loss = if scheduled || last {
            let v = trainer.errors(&split.val)?.selection_loss(cfg.loss_mode);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("validation loss {v} at epoch {epoch}")));
            }
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, epoch, trainer.model().clone()));
                bad_validations = 0;
            } else {
                bad_validations += 1;
            }
            Some(v)
        } else {
            None
        };
        let params = &trainer.model().params;
        history.push(EpochRecord {
            epoch,
            train_loss: total / cfg.iters_per_epoch as f64,
            val_loss,
            theta_mcs: params.theta_mcs.item(),
            theta_ged: params.theta_ged.item(),
        });
        if bad_validations >= cfg.patience {
            stopped_early = true;
            break;
        }
        if last {
            break;
        }
    }
    let (best_val_loss, best_epoch, model) = best.expect("the final epoch always validates");
    Ok(TrainOutcome {
        model,
        history,
        split,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// Writes `epoch,train_loss,val_loss,theta_mcs,theta_ged`; skipped validations are blank.
pub fn write_history(mut w: impl Write, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,theta_mcs,theta_ged")?;
    for r in history {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", r.epoch, r.train_loss, val, r.theta_mcs, r.theta_ged)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let s = split_pairs(100, 3).unwrap();
        assert_eq!((s.test.len(), s.val.len(), s.train.len()), (20, 16, 64));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, split_pairs(100, 3).unwrap());
        assert!(split_pairs(4, 0).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = vec![
            EpochRecord { epoch: 1, train_loss: 0.5, val_loss: None, theta_mcs: 0.0, theta_ged: 0.0 },
            EpochRecord { epoch: 2, train_loss: 0.25, val_loss: Some(0.3), theta_mcs: -0.1, theta_ged: 0.2 },
        ];
        let mut buf = Vec::new();
        write_history(&mut buf, &h).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss,theta_mcs,theta_ged\n1,0.5,,0,0\n2,0.25,0.3,-0.1,0.2\n"
        );
    }
}
