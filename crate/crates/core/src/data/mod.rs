//! Synthetic scenes, hashed stand-in features and the answer vocabulary.

mod features;
mod generate;
mod pools;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use features::{
    feature_seed, object_features, ocr_features, pseudo_features, APPEARANCE_DIM, BOX_DIM, FASTTEXT_DIM,
    OBJECT_FEATURE_DIM, OCR_FEATURE_DIM, PHOC_DIM,
};
pub use generate::{
    generate_dataset, generate_scene, scene_seed, SceneInstance, MAX_OBJECTS, MAX_OCR, MIN_OBJECTS, MIN_OCR,
};
pub use pools::{OBJECT_CLASSES, OCR_WORDS, QUESTION_END, QUESTION_TEMPLATE};
pub use vocab::{build_vocab, Vocabulary, BEGIN, END, PAD, RESERVED, UNK};

/// Writes one JSON object per line.
pub fn save_dataset(path: &Path, scenes: &[SceneInstance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in scenes {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON-lines dataset; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<SceneInstance>> {
    let reader = BufReader::new(File::open(path)?);
    let mut scenes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene = parse_scene(&line).map_err(|message| Error::Parse {
            path: format!("{}:{}", path.display(), i + 1),
            message,
        })?;
        scenes.push(scene);
    }
    Ok(scenes)
}

fn parse_scene(line: &str) -> std::result::Result<SceneInstance, String> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let scene: SceneInstance = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        }
    })?;
    scene.validate().map_err(|e| e.to_string())?;
    Ok(scene)
}
