//! Biased multi-head attention and the blocks built from it: SA/GA
//! co-attention, the scene-graph (SRA) and positional (PRA) relation-masked
//! layers, and the multimodal encoder layer.

mod bias;
mod layers;
#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_graph::BoundingBox;
use crate::tensor::{Tape, Var};

pub use bias::{decoder_causal_bias, pra_bias, sra_bias, AttentionBias, HeadRelationAssignment};
pub use layers::{AttentionBlock, MmteLayer, MultiHeadAttention, PraLayer, SraLayer};

/// Modality tag of one sequence position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Question,
    Object,
    Ocr,
    Decoder,
    SgObject,
    SgAttribute,
}

impl Segment {
    pub fn requires_box(self) -> bool {
        matches!(self, Segment::Object | Segment::Ocr | Segment::SgObject | Segment::SgAttribute)
    }

    pub fn name(self) -> &'static str {
        match self {
            Segment::Question => "question",
            Segment::Object => "object",
            Segment::Ocr => "ocr",
            Segment::Decoder => "decoder",
            Segment::SgObject => "sg_object",
            Segment::SgAttribute => "sg_attribute",
        }
    }
}

/// Feature rows on a tape, with a modality tag and optional box per row.
#[derive(Clone, Debug)]
pub struct EntitySequence {
    pub features: Var,
    segments: Vec<Segment>,
    boxes: Vec<Option<BoundingBox>>,
}

impl EntitySequence {
    pub fn new(tape: &Tape, features: Var, segments: Vec<Segment>, boxes: Vec<Option<BoundingBox>>) -> Result<Self> {
        let shape = tape.shape(features);
        if shape.len() != 2 || shape[0] != segments.len() {
            return Err(Error::Shape {
                op: "entity_sequence",
                lhs: shape.to_vec(),
                rhs: vec![segments.len()],
            });
        }
        if boxes.len() != segments.len() {
            return Err(Error::contract("entity sequence: one box slot per position required"));
        }
        for (i, (s, b)) in segments.iter().zip(&boxes).enumerate() {
            if s.requires_box() != b.is_some() {
                return Err(Error::contract(format!(
                    "entity sequence: position {i} ({}) box presence mismatch",
                    s.name()
                )));
            }
        }
        Ok(EntitySequence {
            features,
            segments,
            boxes,
        })
    }

    /// Sequence of `segment` rows, none of which carry a box.
    pub fn unboxed(tape: &Tape, features: Var, segment: Segment) -> Result<Self> {
        let n = tape.shape(features).first().copied().unwrap_or(0);
        EntitySequence::new(tape, features, vec![segment; n], vec![None; n])
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn boxes(&self) -> &[Option<BoundingBox>] {
        &self.boxes
    }

    pub fn with_features(&self, features: Var) -> EntitySequence {
        EntitySequence {
            features,
            segments: self.segments.clone(),
            boxes: self.boxes.clone(),
        }
    }

    /// Row-wise concatenation, keeping tags and boxes in order.
    pub fn concat(tape: &mut Tape, parts: &[&EntitySequence]) -> Result<EntitySequence> {
        let vars: Vec<Var> = parts.iter().map(|p| p.features).collect();
        let features = tape.concat(&vars, 0)?;
        Ok(EntitySequence {
            features,
            segments: parts.iter().flat_map(|p| p.segments.iter().copied()).collect(),
            boxes: parts.iter().flat_map(|p| p.boxes.iter().copied()).collect(),
        })
    }

    /// Positions `start..start + len` as their own sequence.
    pub fn narrow(&self, tape: &mut Tape, start: usize, len: usize) -> Result<EntitySequence> {
        let features = tape.narrow(self.features, 0, start, len)?;
        Ok(EntitySequence {
            features,
            segments: self.segments[start..start + len].to_vec(),
            boxes: self.boxes[start..start + len].to_vec(),
        })
    }
}

/// Sizes of the attention stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerStackConfig {
    pub n_mmte: usize,
    pub n_pra: usize,
    pub n_sra: usize,
    pub d_model: usize,
    pub heads_sa_ga_mmte: usize,
    pub heads_sra: usize,
    pub heads_pra: usize,
    pub dropout: f64,
    pub distance_threshold: f64,
    pub pra_context: usize,
    pub sra_context: usize,
    pub ffn_dim: usize,
    pub layer_norm_eps: f64,
}

impl Default for LayerStackConfig {
    fn default() -> Self {
        LayerStackConfig {
            n_mmte: 1,
            n_pra: 2,
            n_sra: 1,
            d_model: 768,
            heads_sa_ga_mmte: 8,
            heads_sra: 12,
            heads_pra: 12,
            dropout: 0.1,
            distance_threshold: 0.5,
            pra_context: 3,
            sra_context: 3,
            ffn_dim: 3072,
            layer_norm_eps: 1e-5,
        }
    }
}

impl LayerStackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.to_string(), message });
        if self.d_model == 0 {
            return bad("d_model", "must be positive".into());
        }
        for (key, heads) in [
            ("heads_sa_ga_mmte", self.heads_sa_ga_mmte),
            ("heads_sra", self.heads_sra),
            ("heads_pra", self.heads_pra),
        ] {
            if heads == 0 || self.d_model % heads != 0 {
                return bad(key, format!("{heads} heads do not divide d_model {}", self.d_model));
            }
        }
        for (key, heads) in [("heads_sra", self.heads_sra), ("heads_pra", self.heads_pra)] {
            if 12 % heads != 0 {
                return bad(key, format!("{heads} relation-aware heads must divide 12"));
            }
        }
        for (key, k) in [("sra_context", self.sra_context), ("pra_context", self.pra_context)] {
            if !(1..=12).contains(&k) {
                return bad(key, format!("{k} outside 1..=12"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("{} outside [0, 1)", self.dropout));
        }
        if !(self.distance_threshold.is_finite() && self.distance_threshold >= 0.0) {
            return bad("distance_threshold", "must be finite and non-negative".into());
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim", "must be positive".into());
        }
        if !(self.layer_norm_eps > 0.0 && self.layer_norm_eps.is_finite()) {
            return bad("layer_norm_eps", "must be positive".into());
        }
        Ok(())
    }
}
