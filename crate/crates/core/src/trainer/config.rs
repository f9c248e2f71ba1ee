use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::model::{LossMode, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub iters_per_epoch: usize,
    pub warmup_epochs: usize,
    pub validate_every: usize,
    /// Consecutive non-improving validations before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub max_wall_clock: Option<Duration>,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 128,
            iters_per_epoch: 100,
            warmup_epochs: 50,
            validate_every: 20,
            patience: 50,
            max_epochs: 1000,
            max_wall_clock: None,
            loss_mode: LossMode::Dual,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("iters_per_epoch", self.iters_per_epoch),
            ("validate_every", self.validate_every),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value {raw:?} for {key}"),
    })
}

/// Applies `key = value` lines (with `#` comments) on top of the given configs.
pub fn apply_config(text: &str, model: &mut ModelConfig, train: &mut TrainConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, val) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key = value, got {content:?}"),
        })?;
        let (key, val) = (key.trim(), val.trim());
        let enc = &mut model.encoder;
        match key {
            "lr" => train.lr = value(key, val, line)?,
            "batch_size" => train.batch_size = value(key, val, line)?,
            "iters_per_epoch" => train.iters_per_epoch = value(key, val, line)?,
            "warmup_epochs" => train.warmup_epochs = value(key, val, line)?,
            "validate_every" => train.validate_every = value(key, val, line)?,
            "patience" => train.patience = value(key, val, line)?,
            "max_epochs" => train.max_epochs = value(key, val, line)?,
            "max_wall_clock" => {
                let secs: f64 = value(key, val, line)?;
                if !(secs.is_finite() && secs > 0.0) {
                    return Err(Error::Parse { line, msg: "max_wall_clock must be positive seconds".into() });
                }
                train.max_wall_clock = Some(Duration::from_secs_f64(secs));
            }
            "loss_mode" => train.loss_mode = val.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?,
            "seed" => train.seed = value(key, val, line)?,
            "k" => enc.k = value(key, val, line)?,
            "d" => enc.d = value(key, val, line)?,
            "region_dim" => enc.region_dim = value(key, val, line)?,
            "out" => enc.out = value(key, val, line)?,
            "n_paths" => enc.n_paths = value(key, val, line)?,
            "path_len" => enc.path_len = value(key, val, line)?,
            "label_vocab" => enc.label_vocab = value(key, val, line)?,
            "use_positions" => enc.use_positions = value(key, val, line)?,
            "use_clamp" => enc.use_clamp = value(key, val, line)?,
            "size_metric" => {
                model.score.size_metric = val.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?
            }
            "shared_mlp" => model.score.shared_mlp = value(key, val, line)?,
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
    }
    Ok(())
}

/// Parses a config file over the defaults.
pub fn parse_config(text: &str) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let mut train = TrainConfig::default();
    apply_config(text, &mut model, &mut train)?;
    Ok((model, train))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::SizeMetric;

    #[test]
    fn parses_keys_and_comments() {
        let text = "# desk scale\nk = 4\nd=32 # hidden\n\nloss_mode = dual_uncertainty\nsize_metric = nodes\nuse_clamp = false\nmax_wall_clock = 1.5\n";
        let (m, t) = parse_config(text).unwrap();
        assert_eq!(m.encoder.k, 4);
        assert_eq!(m.encoder.d, 32);
        assert!(!m.encoder.use_clamp);
        assert_eq!(m.score.size_metric, SizeMetric::Nodes);
        assert_eq!(t.loss_mode, LossMode::DualUncertainty);
        assert_eq!(t.max_wall_clock, Some(Duration::from_millis(1500)));
        assert_eq!(t.lr, 0.001);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse_config("k = 4\nbogus = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config("k = four"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("just words"), Err(Error::Parse { line: 1, .. })));
    }
}
