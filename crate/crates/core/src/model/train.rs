use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::scene_seed;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::nn::Ctx;
use crate::tensor::{Tape, Tensor};

use super::input::ModelInput;
use super::network::Model;

/// Optimizer, schedule and loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub warmup_factor: f64,
    pub warmup_iters: u64,
    pub lr_decay_steps: Vec<u64>,
    pub lr_decay_ratio: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub steps: u64,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 8,
            max_grad_norm: 0.25,
            warmup_factor: 0.2,
            warmup_iters: 1000,
            lr_decay_steps: vec![14000, 19000],
            lr_decay_ratio: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            steps: 24000,
            eval_every: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.to_string(), message: message.to_string() });
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta1", "betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive");
        }
        Ok(())
    }
}

/// Learning rate for update number `step` (0-based): linear warmup from
/// `warmup_factor` to 1 over `warmup_iters`, then ×`lr_decay_ratio` at each decay step.
pub fn learning_rate_at(cfg: &TrainConfig, step: u64) -> f64 {
    let ratio = if step < cfg.warmup_iters {
        let alpha = step as f64 / cfg.warmup_iters as f64;
        cfg.warmup_factor * (1.0 - alpha) + alpha
    } else {
        let passed = cfg.lr_decay_steps.iter().filter(|&&s| step >= s).count();
        cfg.lr_decay_ratio.powi(passed as i32)
    };
    cfg.learning_rate * ratio
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Adam { m, v, t: 0 }
    }

    /// Returns the updated values of each parameter.
    pub fn update(&mut self, cfg: &TrainConfig, lr: f64, params: &[&[f64]], grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.t += 1;
        let c1 = 1.0 - cfg.adam_beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.adam_beta2.powi(self.t as i32);
        params
            .iter()
            .zip(grads)
            .enumerate()
            .map(|(k, (p, g))| {
                let (m, v) = (&mut self.m[k], &mut self.v[k]);
                p.iter()
                    .zip(g)
                    .enumerate()
                    .map(|(i, (&w, &gi))| {
                        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
                        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        w - lr * mh / (vh.sqrt() + cfg.adam_eps)
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
}

/// A model together with its optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    cfg: TrainConfig,
    adam: Adam,
    step: u64,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(model.params().iter().map(|(_, _, t)| t.numel()));
        Ok(Trainer {
            model,
            cfg,
            adam,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Batch-mean gradients of every parameter, reduced in batch order, and the mean loss.
    pub fn gradients(&self, batch: &[&ModelInput]) -> Result<(f64, Vec<Vec<f64>>)> {
        let params = self.model.params();
        let mut grads: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        let rate = self.model.config().layers.dropout;
        let mut total = 0.0;
        for (i, input) in batch.iter().enumerate() {
            let mut tape = Tape::new();
            let seed = scene_seed(self.cfg.seed ^ self.step.wrapping_mul(0x1_0000_0001), i as u64);
            let mut ctx = Ctx::new(&mut tape, params).with_dropout(rate, seed);
            let loss = self.model.loss(&mut ctx, input)?;
            let value = ctx.tape.value(loss).item()?;
            if !value.is_finite() {
                log::error!("non-finite loss {value} at step {} on batch item {i}", self.step);
                return Err(Error::NonFiniteLoss { step: self.step, loss: value });
            }
            total += value;
            ctx.tape.backward(loss)?;
            let bound: Vec<_> = ctx.bound_params().collect();
            for (id, var) in bound {
                if let Some(g) = ctx.tape.grad(var) {
                    for (acc, x) in grads[id.index()].iter_mut().zip(g.data()) {
                        *acc += x;
                    }
                }
            }
        }
        let n = batch.len() as f64;
        grads.iter_mut().flatten().for_each(|g| *g /= n);
        Ok((total / n, grads))
    }

    /// One optimizer update on `batch`.
    pub fn train_step(&mut self, batch: &[&ModelInput]) -> Result<StepStats> {
        if batch.is_empty() || batch.len() > self.cfg.batch_size {
            return Err(Error::contract(format!(
                "batch of {} examples, expected 1..={}",
                batch.len(),
                self.cfg.batch_size
            )));
        }
        let (loss, mut grads) = self.gradients(batch)?;
        let grad_norm = clip_global_norm(&mut grads, self.cfg.max_grad_norm);
        let lr = learning_rate_at(&self.cfg, self.step);
        let updated = {
            let params = self.model.params();
            let current: Vec<&[f64]> = params.iter().map(|(_, _, t)| t.data()).collect();
            self.adam.update(&self.cfg, lr, &current, &grads)
        };
        let store = self.model.params_mut();
        let ids: Vec<_> = store.ids().collect();
        for (id, data) in ids.into_iter().zip(updated) {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::new(shape, data)?)?;
        }
        let stats = StepStats {
            step: self.step,
            loss,
            grad_norm,
            learning_rate: lr,
        };
        self.step += 1;
        Ok(stats)
    }
}

/// Decodes every input and scores it against its gold answer string.
pub fn evaluate(model: &Model, inputs: &[ModelInput], golds: &[String]) -> Result<(EvalReport, Vec<String>)> {
    let predictions = inputs
        .iter()
        .map(|x| model.decode_answer(x).map(|d| d.text))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::from_pairs(&predictions, golds)?;
    Ok((report, predictions))
}

/// One line of the training metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "step,loss,train_acc,val_acc";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss, self.train_acc, self.val_acc)
    }
}

/// Runs `cfg.steps` updates over reshuffled passes of `train`, logging a
/// row (mean loss since the previous row, train and validation exact-match)
/// every `eval_every` steps and after the last one. `on_row` also sees the
/// model as of that step.
pub fn train_loop(
    trainer: &mut Trainer,
    train: (&[ModelInput], &[String]),
    val: (&[ModelInput], &[String]),
    mut on_row: impl FnMut(&MetricsRow, &Model) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    if train.0.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let cfg = trainer.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut rows = Vec::new();
    let (mut loss_sum, mut loss_n) = (0.0, 0u64);
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train.0.len()) {
            if cursor == order.len() {
                order = (0..train.0.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train.0[order[cursor]]);
            cursor += 1;
        }
        let stats = trainer.train_step(&batch)?;
        log::debug!("step {step} loss {:.5} grad_norm {:.4} lr {:.3e}", stats.loss, stats.grad_norm, stats.learning_rate);
        loss_sum += stats.loss;
        loss_n += 1;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let (tr, _) = evaluate(&trainer.model, train.0, train.1)?;
            let val_acc = if val.0.is_empty() {
                0.0
            } else {
                evaluate(&trainer.model, val.0, val.1)?.0.accuracy
            };
            let row = MetricsRow {
                step,
                loss: loss_sum / loss_n as f64,
                train_acc: tr.accuracy,
                val_acc,
            };
            log::info!(
                "step {} loss {:.4} train_acc {:.3} val_acc {:.3}",
                row.step,
                row.loss,
                row.train_acc,
                row.val_acc
            );
            on_row(&row, &trainer.model)?;
            rows.push(row);
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    Ok(rows)
}
