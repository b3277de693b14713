//! Answer scoring: normalized exact match and ANLS.


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANLS_TAU: f64 = 0.5;

/// Aggregate scores over an evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub n_examples: usize,
    pub accuracy: f64,
    pub anls: f64,
}

impl EvalReport {
    /// Scores `predictions[i]` against the single gold `golds[i]`.
    pub fn from_pairs(predictions: &[String], golds: &[String]) -> Result<Self> {
        let acc = accuracy(predictions, golds)?;
        let anls_mean = if golds.is_empty() {
            0.0
        } else {
            predictions
                .iter()
                .zip(golds)
                .map(|(p, g)| anls(p, std::slice::from_ref(g), ANLS_TAU))
                .collect::<Result<Vec<_>>>()?
                .iter()
                .sum::<f64>()
                / golds.len() as f64
        };
        Ok(EvalReport {
            n_examples: golds.len(),
            accuracy: acc,
            anls: anls_mean,
        })
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best similarity of `prediction` to any gold answer, with scores whose
/// normalized distance reaches `tau` cut to zero. Comparison is case-insensitive.
pub fn anls(prediction: &str, gold: &[String], tau: f64) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::contract("anls needs at least one gold answer"));
    }
    let p = prediction.to_lowercase();
    let best = gold
        .iter()
        .map(|g| {
            let g = g.to_lowercase();
            let len = p.chars().count().max(g.chars().count()).max(1);
            let nl = levenshtein(&p, &g) as f64 / len as f64;
            if nl < tau {
                1.0 - nl
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(best)
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Fraction of predictions equal to their gold after normalization.
pub fn accuracy(predictions: &[String], golds: &[String]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::contract(format!(
            "accuracy: {} predictions for {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| normalize_answer(p) == normalize_answer(g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}
