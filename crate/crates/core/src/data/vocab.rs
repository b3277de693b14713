use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SceneInstance;

pub const PAD: usize = 0;
pub const BEGIN: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<begin>", "<end>", "<unk>"];

/// Word ↔ index bijection with the four reserved tokens at 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabDump", into = "VocabDump")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabDump {
    words: Vec<String>,
}

impl TryFrom<VocabDump> for Vocabulary {
    type Error = Error;

    fn try_from(d: VocabDump) -> Result<Self> {
        Vocabulary::from_words(d.words)
    }
}

impl From<Vocabulary> for VocabDump {
    fn from(v: Vocabulary) -> Self {
        VocabDump { words: v.words }
    }
}

impl Vocabulary {
    /// Builds from a full word list whose first four entries are the reserved tokens.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < RESERVED.len() || words[..RESERVED.len()] != RESERVED {
            return Err(Error::Data("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, or [`UNK`].
    pub fn index_or_unk(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Question words plus answer words that are not OCR tokens of their
/// scene, ordered by descending frequency then lexicographically.
pub fn build_vocab(dataset: &[SceneInstance]) -> Result<Vocabulary> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty dataset".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for scene in dataset {
        for w in &scene.question {
            *counts.entry(w).or_default() += 1;
        }
        for w in &scene.answer {
            if !scene.ocr.iter().any(|o| &o.text == w) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(w, _)| !RESERVED.contains(w)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let words = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(w, _)| w.to_string()))
        .collect();
    Vocabulary::from_words(words)
}
