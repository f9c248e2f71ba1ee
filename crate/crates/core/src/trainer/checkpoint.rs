use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossMode, Model, ModelConfig, ModelParams};
use crate::nn::ParamTree;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    loss_mode: LossMode,
    seed: u64,
    params: BTreeMap<String, StoredTensor>,
}

pub fn checkpoint_to_string(model: &Model) -> String {
    let mut params = BTreeMap::new();
    model.params.for_each("", &mut |name, t| {
        params.insert(
            name.to_string(),
            StoredTensor {
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            },
        );
    });
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        loss_mode: model.loss_mode,
        seed: model.seed,
        params,
    };
    serde_json::to_string_pretty(&file).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(s: &str) -> Result<Model> {
    let mut file: CheckpointFile = serde_json::from_str(s).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    file.config.encoder.validate()?;
    let template = ModelParams::init(&file.config, 0);
    let params = template.try_map("", &mut |name, t| {
        let stored = file
            .params
            .remove(name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name} required by its config")))?;
        if stored.shape != t.shape() {
            return Err(Error::Config(format!(
                "parameter {name} has shape {:?}, config needs {:?}",
                stored.shape,
                t.shape()
            )));
        }
        Tensor::new(stored.shape, stored.data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
    })?;
    if let Some(extra) = file.params.keys().next() {
        return Err(Error::Config(format!("checkpoint has parameter {extra} not used by its config")));
    }
    Ok(Model {
        config: file.config,
        params,
        seed: file.seed,
        loss_mode: file.loss_mode,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

/// Loads a checkpoint and checks it was built for `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Model> {
    let m = load_checkpoint(path)?;
    if &m.config != expected {
        return Err(Error::Config(format!(
            "checkpoint config {:?} differs from expected {:?}",
            m.config, expected
        )));
    }
    Ok(m)
}
