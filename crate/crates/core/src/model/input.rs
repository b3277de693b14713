use serde::{Deserialize, Serialize};

use crate::data::{pseudo_features, SceneInstance, Vocabulary, APPEARANCE_DIM, END, FASTTEXT_DIM, PHOC_DIM};
use crate::error::{Error, Result};
use crate::scene_graph::{build_scene_graph, BoundingBox, SceneGraph, SceneObject, SceneOcr};

use super::ModelConfig;

/// One decoded answer token: a vocabulary word or a copy of an input OCR token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerUnit {
    Vocab(usize),
    OcrCopy(usize),
}

impl AnswerUnit {
    /// Column in the combined `vocab ‖ ocr` score vector.
    pub fn score_index(self, vocab_size: usize) -> usize {
        match self {
            AnswerUnit::Vocab(i) => i,
            AnswerUnit::OcrCopy(n) => vocab_size + n,
        }
    }

    pub fn from_score_index(index: usize, vocab_size: usize) -> AnswerUnit {
        if index < vocab_size {
            AnswerUnit::Vocab(index)
        } else {
            AnswerUnit::OcrCopy(index - vocab_size)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInput {
    pub class: String,
    pub appearance: Vec<f64>,
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcrInput {
    pub text: String,
    pub appearance: Vec<f64>,
    pub fasttext: Vec<f64>,
    pub phoc: Vec<f64>,
    pub bbox: BoundingBox,
}

impl OcrInput {
    pub fn new(text: &str, bbox: BoundingBox) -> Self {
        OcrInput {
            text: text.to_string(),
            appearance: pseudo_features(text, APPEARANCE_DIM, "ocr_appearance"),
            fasttext: pseudo_features(text, FASTTEXT_DIM, "fasttext"),
            phoc: pseudo_features(text, PHOC_DIM, "phoc"),
            bbox,
        }
    }

    /// Appearance ‖ word embedding ‖ character features ‖ box, zero-padded to `width`.
    pub fn enriched(&self, width: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(width);
        v.extend(&self.appearance);
        v.extend(&self.fasttext);
        v.extend(&self.phoc);
        v.extend(self.bbox.coords());
        v.resize(width.max(v.len()), 0.0);
        v
    }
}

impl ObjectInput {
    pub fn new(class: &str, bbox: BoundingBox) -> Self {
        ObjectInput {
            class: class.to_string(),
            appearance: pseudo_features(class, APPEARANCE_DIM, "appearance"),
            bbox,
        }
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = self.appearance.clone();
        v.extend(self.bbox.coords());
        v
    }
}

/// Everything the network reads for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub question: Vec<usize>,
    pub objects: Vec<ObjectInput>,
    pub ocr: Vec<OcrInput>,
    pub scene_graph: SceneGraph,
    /// Teacher-forcing target, ending with the end token.
    pub gold: Option<Vec<AnswerUnit>>,
}

/// Maps answer words to units: the first OCR token with the same text,
/// else the vocabulary word. The end token is appended.
pub fn gold_units(answer: &[String], ocr_texts: &[&str], vocab: &Vocabulary) -> Result<Vec<AnswerUnit>> {
    let mut units = Vec::with_capacity(answer.len() + 1);
    for w in answer {
        if let Some(n) = ocr_texts.iter().position(|t| t == w) {
            units.push(AnswerUnit::OcrCopy(n));
        } else if let Some(i) = vocab.get(w) {
            units.push(AnswerUnit::Vocab(i));
        } else {
            return Err(Error::Data(format!("answer word `{w}` is neither an OCR token nor in the vocabulary")));
        }
    }
    units.push(AnswerUnit::Vocab(END));
    Ok(units)
}

impl ModelInput {
    /// Builds features and the scene graph for `scene`. Inputs beyond the
    /// configured maxima are truncated in order.
    pub fn from_scene(scene: &SceneInstance, vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Self> {
        let question: Vec<usize> = scene
            .question
            .iter()
            .take(cfg.max_question_len)
            .map(|w| vocab.index_or_unk(w))
            .collect();
        let objects: Vec<&SceneObject> = scene.objects.iter().take(cfg.max_objects).collect();
        let ocr: Vec<&SceneOcr> = scene.ocr.iter().take(cfg.max_ocr).collect();
        let sg_objects: Vec<SceneObject> = objects.iter().take(cfg.max_sg_objects).map(|&o| o.clone()).collect();
        // Attributes need an owner, so a scene without objects has an empty graph.
        let sg_ocr: Vec<SceneOcr> = if sg_objects.is_empty() {
            Vec::new()
        } else {
            ocr.iter().take(cfg.max_sg_attributes).map(|&o| o.clone()).collect()
        };
        let scene_graph = build_scene_graph(&sg_objects, &sg_ocr)?;
        let texts: Vec<&str> = ocr.iter().map(|o| o.text.as_str()).collect();
        let mut gold = gold_units(&scene.answer, &texts, vocab)?;
        if gold.len() > cfg.decoding_steps {
            log::debug!("scene {}: answer truncated to {} steps", scene.scene_id, cfg.decoding_steps);
            gold.truncate(cfg.decoding_steps);
        }
        Ok(ModelInput {
            question,
            objects: objects.iter().map(|o| ObjectInput::new(&o.class, o.bbox)).collect(),
            ocr: ocr.iter().map(|o| OcrInput::new(&o.text, o.bbox)).collect(),
            scene_graph,
            gold: Some(gold),
        })
    }

    pub fn ocr_texts(&self) -> Vec<&str> {
        self.ocr.iter().map(|o| o.text.as_str()).collect()
    }

    pub fn validate(&self, cfg: &ModelConfig, vocab_size: usize) -> Result<()> {
        if self.question.is_empty() {
            return Err(Error::contract("empty question"));
        }
        if self.question.len() > cfg.max_question_len {
            return Err(Error::contract(format!(
                "question has {} tokens, limit {}",
                self.question.len(),
                cfg.max_question_len
            )));
        }
        if let Some(&id) = self.question.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::contract(format!("unknown question token id {id}")));
        }
        if self.objects.len() > cfg.max_objects || self.ocr.len() > cfg.max_ocr {
            return Err(Error::contract("object or OCR count above configured limit"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for o in &self.objects {
            if o.appearance.len() != cfg.obj_feature_dim || !finite(&o.appearance) {
                return Err(Error::contract(format!("object `{}` has malformed appearance features", o.class)));
            }
        }
        for o in &self.ocr {
            let ok = o.appearance.len() == APPEARANCE_DIM
                && o.fasttext.len() == FASTTEXT_DIM
                && o.phoc.len() == PHOC_DIM
                && finite(&o.appearance)
                && finite(&o.fasttext)
                && finite(&o.phoc);
            if !ok {
                return Err(Error::contract(format!("OCR token `{}` has malformed features", o.text)));
            }
        }
        if self.scene_graph.objects.len() > self.objects.len() {
            return Err(Error::contract("scene graph has more objects than the input"));
        }
        Ok(())
    }
}
