use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::network::Model;
use super::ModelConfig;

pub const CHECKPOINT_SCHEMA: &str = "scenegate-checkpoint/v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    schema: String,
    config: ModelConfig,
    vocab: Vocabulary,
    weights: BTreeMap<String, Tensor>,
}

impl Model {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let file = CheckpointFile {
            schema: CHECKPOINT_SCHEMA.to_string(),
            config: self.config().clone(),
            vocab: self.vocab().clone(),
            weights: self.params().iter().map(|(_, name, t)| (name.to_string(), t.clone())).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Model> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: CheckpointFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if file.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Parse {
                path: "schema".into(),
                message: format!("expected `{CHECKPOINT_SCHEMA}`, found `{}`", file.schema),
            });
        }
        let mut model = Model::new(file.config, file.vocab)?;
        let mut weights = file.weights;
        let store = model.params_mut();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = weights
                .remove(&name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks weight `{name}`")))?;
            store.set(id, t)?;
        }
        if let Some(extra) = weights.keys().next() {
            return Err(Error::Data(format!("checkpoint has unknown weight `{extra}`")));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }
}
