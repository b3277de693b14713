//! Run configuration: named presets, JSON overrides and validation.

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attention::LayerStackConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};

pub const PRESETS: [&str; 3] = ["best", "table1", "toy"];

/// Sizes of generated datasets when none are supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_scenes: 2000,
            val_scenes: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<RunConfig> {
        match name {
            "best" => Ok(RunConfig {
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                data: DataConfig::default(),
            }),
            "table1" => {
                let mut c = RunConfig::preset("best")?;
                c.model.layers.n_mmte = 2;
                c.model.layers.n_pra = 2;
                c.model.layers.n_sra = 2;
                Ok(c)
            }
            "toy" => Ok(RunConfig {
                model: ModelConfig {
                    layers: LayerStackConfig {
                        d_model: 32,
                        heads_sa_ga_mmte: 8,
                        heads_sra: 4,
                        heads_pra: 4,
                        ffn_dim: 64,
                        dropout: 0.0,
                        ..LayerStackConfig::default()
                    },
                    ..ModelConfig::default()
                },
                train: TrainConfig {
                    learning_rate: 3e-3,
                    warmup_iters: 30,
                    lr_decay_steps: vec![250],
                    steps: 300,
                    eval_every: 50,
                    ..TrainConfig::default()
                },
                data: DataConfig {
                    train_scenes: 200,
                    val_scenes: 50,
                    seed: 0,
                },
            }),
            other => Err(Error::Config {
                key: "preset".into(),
                message: format!("unknown preset `{other}`, expected one of {}", PRESETS.join(", ")),
            }),
        }
    }

    /// Uses `seed` for weight init, batch order, dropout and generated data.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.model.init_seed = seed;
        self.train.seed = seed;
        self.data.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Resolves a configuration: the named preset (or the file's `"preset"`
    /// key, or `best`), overlaid with the remaining keys of `file`. A blank
    /// file overrides nothing.
    pub fn resolve(preset: Option<&str>, file: Option<&str>) -> Result<RunConfig> {
        let mut overlay = match file.filter(|t| !t.trim().is_empty()) {
            Some(text) => serde_json::from_str::<Value>(text).map_err(|e| Error::Parse {
                path: "config".into(),
                message: e.to_string(),
            })?,
            None => Value::Object(Default::default()),
        };
        let Value::Object(map) = &mut overlay else {
            return Err(Error::Config {
                key: "<root>".into(),
                message: "configuration must be a JSON object".into(),
            });
        };
        let file_preset = match map.remove("preset") {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                return Err(Error::Config {
                    key: "preset".into(),
                    message: "must be a string".into(),
                })
            }
        };
        let name = preset.map(str::to_string).or(file_preset).unwrap_or_else(|| "best".into());
        let mut base = serde_json::to_value(RunConfig::preset(&name)?)?;
        merge(&mut base, overlay, "")?;
        let cfg: RunConfig = serde_path_to_error::deserialize(base).map_err(|e| Error::Config {
            key: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Recursively overwrites `base` with `overlay`, rejecting keys `base` lacks.
fn merge(base: &mut Value, overlay: Value, prefix: &str) -> Result<()> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => {
                        return Err(Error::Config {
                            key,
                            message: "unknown key".into(),
                        })
                    }
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}
