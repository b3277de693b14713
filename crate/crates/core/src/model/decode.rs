use serde::{Deserialize, Serialize};

use crate::data::{Vocabulary, END};
use crate::error::{Error, Result};

use super::input::AnswerUnit;

/// Progress of a greedy decode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodeState {
    pub emitted: Vec<AnswerUnit>,
    pub finished: bool,
}

impl DecodeState {
    pub fn step(&self) -> usize {
        self.emitted.len()
    }
}

/// Decoded units (without the end token) and the answer string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub units: Vec<AnswerUnit>,
    pub text: String,
}

/// Greedy argmax decoding driven by `scores(prefix)`, which must return
/// `vocab.len() + ocr_texts.len()` scores for the unit after `prefix`.
///
/// Ties go to the lowest index. Stops after the end token or `max_steps` units.
pub fn greedy_decode(
    max_steps: usize,
    vocab: &Vocabulary,
    ocr_texts: &[&str],
    mut scores: impl FnMut(&[AnswerUnit]) -> Result<Vec<f64>>,
) -> Result<Decoded> {
    let v = vocab.len();
    let mut state = DecodeState::default();
    let mut words: Vec<&str> = Vec::new();
    while !state.finished && state.step() < max_steps {
        let s = scores(&state.emitted)?;
        if s.len() != v + ocr_texts.len() {
            return Err(Error::Shape {
                op: "greedy_decode",
                lhs: vec![s.len()],
                rhs: vec![v + ocr_texts.len()],
            });
        }
        let mut best = 0;
        for (i, &x) in s.iter().enumerate() {
            if x > s[best] {
                best = i;
            }
        }
        let unit = AnswerUnit::from_score_index(best, v);
        match unit {
            AnswerUnit::Vocab(END) => state.finished = true,
            AnswerUnit::Vocab(i) => {
                words.push(vocab.word(i).expect("index below vocab size"));
                state.emitted.push(unit);
            }
            AnswerUnit::OcrCopy(n) => {
                words.push(ocr_texts[n]);
                state.emitted.push(unit);
            }
        }
    }
    Ok(Decoded {
        units: state.emitted,
        text: words.join(" "),
    })
}
