use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_graph::{assign_ocr_attributes, build_scene_graph, BoundingBox, SceneGraph, SceneObject, SceneOcr};

use super::pools::{OBJECT_CLASSES, OCR_WORDS, QUESTION_END, QUESTION_TEMPLATE};

pub const MIN_OBJECTS: usize = 2;
pub const MAX_OBJECTS: usize = 8;
pub const MIN_OCR: usize = 1;
pub const MAX_OCR: usize = 6;

const MAX_ATTEMPTS: usize = 200;
const MAX_BOX_TRIES: usize = 50;

/// One question about one synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInstance {
    pub scene_id: u64,
    pub objects: Vec<SceneObject>,
    pub ocr: Vec<SceneOcr>,
    pub question: Vec<String>,
    pub answer: Vec<String>,
}

impl SceneInstance {
    /// Gold answer as a single space-joined string.
    pub fn answer_text(&self) -> String {
        self.answer.join(" ")
    }

    pub fn scene_graph(&self) -> Result<SceneGraph> {
        build_scene_graph(&self.objects, &self.ocr)
    }

    /// Checks that question and answer are non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.question.is_empty() {
            return Err(Error::Data(format!("scene {}: empty question", self.scene_id)));
        }
        if self.answer.is_empty() {
            return Err(Error::Data(format!("scene {}: empty answer", self.scene_id)));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index` in a dataset generated from `seed`.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

fn random_object_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let w = rng.random_range(0.15..0.5);
    let h = rng.random_range(0.15..0.5);
    let x = rng.random_range(0.0..1.0 - w);
    let y = rng.random_range(0.0..1.0 - h);
    BoundingBox::new(x, y, x + w, y + h).expect("positive extents")
}

fn random_inner_box(rng: &mut ChaCha8Rng, host: &BoundingBox) -> BoundingBox {
    let (hw, hh) = (host.width(), host.height());
    let w = hw * rng.random_range(0.2..0.45);
    let h = hh * rng.random_range(0.15..0.35);
    let (mx, my) = (0.02 * hw, 0.02 * hh);
    let x = host.x_min() + rng.random_range(mx..hw - w - mx);
    let y = host.y_min() + rng.random_range(my..hh - h - my);
    BoundingBox::new(x, y, x + w, y + h).expect("positive extents")
}

/// One scene with `n_obj` objects and `n_ocr` OCR tokens.
///
/// Every OCR box lies strictly inside a host object that the scene-graph
/// builder also picks as its owner. The question names an object whose
/// class is unique in the scene and that carries at least one OCR token;
/// the answer is that object's OCR texts ordered left to right.
pub fn generate_scene(seed: u64, n_obj: usize, n_ocr: usize) -> Result<SceneInstance> {
    if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&n_obj) {
        return Err(Error::contract(format!("n_obj {n_obj} outside {MIN_OBJECTS}..={MAX_OBJECTS}")));
    }
    if !(MIN_OCR..=MAX_OCR).contains(&n_ocr) {
        return Err(Error::contract(format!("n_ocr {n_ocr} outside {MIN_OCR}..={MAX_OCR}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let objects: Vec<SceneObject> = (0..n_obj)
            .map(|_| {
                let class = OBJECT_CLASSES[rng.random_range(0..OBJECT_CLASSES.len())].to_string();
                SceneObject {
                    class,
                    bbox: random_object_box(&mut rng),
                }
            })
            .collect();
        let object_boxes: Vec<(usize, BoundingBox)> = objects.iter().map(|o| o.bbox).enumerate().collect();
        let words = sample(&mut rng, OCR_WORDS.len(), n_ocr);
        let mut ocr = Vec::with_capacity(n_ocr);
        let mut hosts = Vec::with_capacity(n_ocr);
        for w in words.iter() {
            let host = rng.random_range(0..n_obj);
            let mut placed = None;
            for _ in 0..MAX_BOX_TRIES {
                let b = random_inner_box(&mut rng, &objects[host].bbox);
                let owner = assign_ocr_attributes(&object_boxes, &[(0, b)])?;
                if owner[&0] == host {
                    placed = Some(b);
                    break;
                }
            }
            let Some(bbox) = placed else { continue 'attempt };
            ocr.push(SceneOcr {
                text: OCR_WORDS[w].to_string(),
                bbox,
            });
            hosts.push(host);
        }

        let mut class_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for o in &objects {
            *class_counts.entry(o.class.as_str()).or_default() += 1;
        }
        let candidates: Vec<usize> = (0..n_obj)
            .filter(|&i| class_counts[objects[i].class.as_str()] == 1 && hosts.contains(&i))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let target = candidates[rng.random_range(0..candidates.len())];
        let mut owned: Vec<usize> = (0..n_ocr).filter(|&k| hosts[k] == target).collect();
        owned.sort_by(|&a, &b| {
            let (ba, bb) = (&ocr[a].bbox, &ocr[b].bbox);
            ba.x_min().total_cmp(&bb.x_min()).then(ba.y_min().total_cmp(&bb.y_min())).then(a.cmp(&b))
        });
        let mut question: Vec<String> = QUESTION_TEMPLATE.iter().map(|s| s.to_string()).collect();
        question.push(objects[target].class.clone());
        question.push(QUESTION_END.to_string());
        let answer = owned.iter().map(|&k| ocr[k].text.clone()).collect();
        return Ok(SceneInstance {
            scene_id: seed,
            objects,
            ocr,
            question,
            answer,
        });
    }
    Err(Error::Generation(format!(
        "no valid scene with {n_obj} objects and {n_ocr} OCR tokens after {MAX_ATTEMPTS} attempts (seed {seed})"
    )))
}

/// `n` scenes with ids `0..n`; object and OCR counts are drawn per scene.
pub fn generate_dataset(n: usize, seed: u64) -> Result<Vec<SceneInstance>> {
    (0..n as u64)
        .map(|i| {
            let s = scene_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xA5A5_A5A5_A5A5_A5A5);
            let n_obj = rng.random_range(MIN_OBJECTS..=MAX_OBJECTS);
            let n_ocr = rng.random_range(MIN_OCR..=MAX_OCR);
            let mut scene = generate_scene(s, n_obj, n_ocr)?;
            scene.scene_id = i;
            Ok(scene)
        })
        .collect()
}
