//! The end-to-end network: modality encoders, SA/GA co-attention, the PRA
//! and SRA branches, the multimodal encoder and the pointer decoder, plus
//! loss, training and checkpoints.

mod checkpoint;
mod decode;
mod gradcheck;
mod input;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::attention::LayerStackConfig;
use crate::data::{APPEARANCE_DIM, OCR_FEATURE_DIM};
use crate::error::{Error, Result};
use crate::scene_graph::{MAX_SG_ATTRIBUTES, MAX_SG_OBJECTS};

pub use checkpoint::CHECKPOINT_SCHEMA;
pub use decode::{greedy_decode, DecodeState, Decoded};
pub use gradcheck::{gradient_check_suite, GradCheckEntry};
pub use input::{gold_units, AnswerUnit, ModelInput, ObjectInput, OcrInput};
pub use network::{AttentionDump, Model};
pub use train::{
    clip_global_norm, evaluate, learning_rate_at, train_loop, Adam, MetricsRow, StepStats, TrainConfig, Trainer,
};

/// Architecture sizes and input limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: LayerStackConfig,
    pub max_question_len: usize,
    pub max_objects: usize,
    pub max_ocr: usize,
    pub max_sg_objects: usize,
    pub max_sg_attributes: usize,
    pub obj_feature_dim: usize,
    /// Width of the concatenated OCR feature; inputs narrower than this are zero-padded.
    pub ocr_enriched_dim: usize,
    pub sg_node_dim: usize,
    pub decoding_steps: usize,
    /// When false the SRA layers run with every cell open.
    pub sra_masking: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: LayerStackConfig::default(),
            max_question_len: 20,
            max_objects: 100,
            max_ocr: 50,
            max_sg_objects: MAX_SG_OBJECTS,
            max_sg_attributes: MAX_SG_ATTRIBUTES,
            obj_feature_dim: APPEARANCE_DIM,
            ocr_enriched_dim: OCR_FEATURE_DIM,
            sg_node_dim: 300,
            decoding_steps: 12,
            sra_masking: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.layers.validate()?;
        let bad = |key: &str, message: String| Err(Error::Config { key: key.to_string(), message });
        for (key, v) in [
            ("max_question_len", self.max_question_len),
            ("max_objects", self.max_objects),
            ("max_ocr", self.max_ocr),
            ("max_sg_objects", self.max_sg_objects),
            ("max_sg_attributes", self.max_sg_attributes),
            ("sg_node_dim", self.sg_node_dim),
            ("decoding_steps", self.decoding_steps),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if self.max_sg_objects > MAX_SG_OBJECTS {
            return bad("max_sg_objects", format!("at most {MAX_SG_OBJECTS}"));
        }
        if self.max_sg_attributes > MAX_SG_ATTRIBUTES {
            return bad("max_sg_attributes", format!("at most {MAX_SG_ATTRIBUTES}"));
        }
        if self.obj_feature_dim != APPEARANCE_DIM {
            return bad("obj_feature_dim", format!("feature providers emit {APPEARANCE_DIM}"));
        }
        if self.ocr_enriched_dim < OCR_FEATURE_DIM {
            return bad("ocr_enriched_dim", format!("must be at least {OCR_FEATURE_DIM}"));
        }
        Ok(())
    }
}
