use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_vocab, generate_scene};
use crate::error::Result;
use crate::nn::Ctx;
use crate::tensor::{grad_check_entries, op_suite, Tape};

use super::input::ModelInput;
use super::network::Model;
use super::ModelConfig;

pub const GRAD_CHECK_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
}

/// Central-difference checks of every tensor op, then of the full model loss
/// on a two-object, two-OCR scene with respect to every parameter tensor.
///
/// Each parameter is probed at its largest-gradient entry plus up to
/// `entries_per_param - 1` random entries.
pub fn gradient_check_suite(cfg: &ModelConfig, seed: u64, entries_per_param: usize) -> Result<Vec<GradCheckEntry>> {
    let mut out: Vec<GradCheckEntry> = op_suite((3, 4, 2), seed)?
        .into_iter()
        .map(|(name, e)| GradCheckEntry {
            name: format!("op.{name}"),
            max_rel_error: e,
        })
        .collect();

    let scene = generate_scene(seed, 2, 2)?;
    let vocab = build_vocab(std::slice::from_ref(&scene))?;
    let model = Model::new(cfg.clone(), vocab)?;
    let input = ModelInput::from_scene(&scene, model.vocab(), cfg)?;
    let params = model.params();

    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, params);
    let loss = model.loss(&mut ctx, &input)?;
    ctx.tape.backward(loss)?;
    let bound: Vec<_> = ctx.bound_params().collect();
    let mut analytic = vec![None; params.len()];
    for (id, var) in bound {
        analytic[id.index()] = ctx.tape.grad(var);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (id, name, value) in params.iter() {
        let n = value.numel();
        let mut entries = vec![];
        if let Some(g) = &analytic[id.index()] {
            let top = (0..n).max_by(|&a, &b| g.data()[a].abs().total_cmp(&g.data()[b].abs())).unwrap_or(0);
            entries.push(top);
        }
        let extra = entries_per_param.saturating_sub(entries.len()).min(n);
        for i in sample(&mut rng, n, extra).iter() {
            if !entries.contains(&i) {
                entries.push(i);
            }
        }
        let f = |tape: &mut Tape, x| {
            let mut ctx = Ctx::new(tape, params);
            ctx.bind(id, x);
            model.loss(&mut ctx, &input)
        };
        let e = grad_check_entries(f, value, GRAD_CHECK_STEP, &entries)?;
        out.push(GradCheckEntry {
            name: format!("model.{name}"),
            max_rel_error: e,
        });
    }
    Ok(out)
}
