use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::scene_graph::BoundingBox;

pub const APPEARANCE_DIM: usize = 2048;
pub const FASTTEXT_DIM: usize = 300;
pub const PHOC_DIM: usize = 604;
pub const BOX_DIM: usize = 4;
pub const OBJECT_FEATURE_DIM: usize = APPEARANCE_DIM + BOX_DIM;
pub const OCR_FEATURE_DIM: usize = APPEARANCE_DIM + FASTTEXT_DIM + PHOC_DIM + BOX_DIM;

/// Stable 64-bit seed for `(namespace, text)`: the first 8 bytes of
/// SHA-256 over the namespace, a zero byte and the text.
pub fn feature_seed(namespace: &str, text: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(namespace.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Unit-norm pseudo-embedding of `text`, reproducible across runs and platforms.
///
/// Panics if `dim` is zero.
pub fn pseudo_features(text: &str, dim: usize, namespace: &str) -> Vec<f64> {
    assert!(dim >= 1, "pseudo_features: dim must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed(namespace, text));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Appearance of an object class followed by its box coordinates.
pub fn object_features(class: &str, bbox: &BoundingBox) -> Vec<f64> {
    let mut v = pseudo_features(class, APPEARANCE_DIM, "appearance");
    v.extend(bbox.coords());
    v
}

/// Appearance, word embedding and character features of an OCR token,
/// followed by its box coordinates.
pub fn ocr_features(text: &str, bbox: &BoundingBox) -> Vec<f64> {
    let mut v = pseudo_features(text, APPEARANCE_DIM, "ocr_appearance");
    v.extend(pseudo_features(text, FASTTEXT_DIM, "fasttext"));
    v.extend(pseudo_features(text, PHOC_DIM, "phoc"));
    v.extend(bbox.coords());
    v
}
