//! End-to-end training runs: data preparation, vocabulary, model and loop.

use crate::config::{DataConfig, RunConfig};
use crate::data::{build_vocab, generate_dataset, SceneInstance, Vocabulary};
use crate::error::Result;
use crate::model::{train_loop, MetricsRow, Model, ModelConfig, ModelInput, Trainer};

/// Model inputs paired with their gold answer strings.
#[derive(Clone, Debug)]
pub struct Split {
    pub inputs: Vec<ModelInput>,
    pub golds: Vec<String>,
}

impl Split {
    pub fn new(scenes: &[SceneInstance], vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Split> {
        Ok(Split {
            inputs: scenes
                .iter()
                .map(|s| ModelInput::from_scene(s, vocab, cfg))
                .collect::<Result<_>>()?,
            golds: scenes.iter().map(SceneInstance::answer_text).collect(),
        })
    }
}

/// Generated train and validation scenes: one dataset of
/// `train_scenes + val_scenes` scenes split in order, so the two never share a scene.
pub fn generated_splits(cfg: &DataConfig) -> Result<(Vec<SceneInstance>, Vec<SceneInstance>)> {
    let mut train = generate_dataset(cfg.train_scenes + cfg.val_scenes, cfg.seed)?;
    let val = train.split_off(cfg.train_scenes);
    Ok((train, val))
}

/// Builds the vocabulary from `train`, initializes a model and runs the
/// training loop, calling `on_row` for each metrics row.
pub fn run_training(
    cfg: &RunConfig,
    train: &[SceneInstance],
    val: &[SceneInstance],
    on_row: impl FnMut(&MetricsRow, &Model) -> Result<()>,
) -> Result<(Trainer, Vec<MetricsRow>)> {
    cfg.validate()?;
    let vocab = build_vocab(train)?;
    let train_split = Split::new(train, &vocab, &cfg.model)?;
    let val_split = Split::new(val, &vocab, &cfg.model)?;
    let model = Model::new(cfg.model.clone(), vocab)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let rows = train_loop(
        &mut trainer,
        (&train_split.inputs, &train_split.golds),
        (&val_split.inputs, &val_split.golds),
        on_row,
    )?;
    Ok((trainer, rows))
}
