//! Named parameters, the per-forward binding context, and the two
//! parameterized primitives (linear maps and layer norm) every layer uses.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named weight tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.tensors[id.0].shape() {
            return Err(Error::Shape {
                op: "parameter update",
                lhs: self.tensors[id.0].shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.ids().map(|id| (id, self.names[id.0].as_str(), &self.tensors[id.0]))
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

/// Seeded weight initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self, shape: &[usize], std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Tensor::raw(shape.to_vec(), data)
    }
}

/// One forward pass: a tape plus the parameters bound onto it.
///
/// Parameters become tape leaves the first time a layer asks for them.
/// Dropout is off unless enabled with [`Ctx::with_dropout`]; each dropout
/// call draws its own seed from a counter so a pass is reproducible.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    params: &'a ParamStore,
    bound: Vec<Option<Var>>,
    dropout_rate: f64,
    dropout_seed: u64,
    dropout_calls: u64,
    trace: Option<Vec<AttentionRecord>>,
}

/// Attention weights of one head, captured for inspection.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    pub layer: String,
    pub head: usize,
    pub weights: Tensor,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a mut Tape, params: &'a ParamStore) -> Self {
        Ctx {
            tape,
            params,
            bound: vec![None; params.len()],
            dropout_rate: 0.0,
            dropout_seed: 0,
            dropout_calls: 0,
            trace: None,
        }
    }

    pub fn with_dropout(mut self, rate: f64, seed: u64) -> Self {
        self.dropout_rate = rate;
        self.dropout_seed = seed;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.variable(self.params.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Uses `var` in place of parameter `id` for the rest of this pass.
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.bound[id.0] = Some(var);
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        if self.dropout_rate == 0.0 {
            return Ok(x);
        }
        self.dropout_calls += 1;
        let seed = self
            .dropout_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.dropout_calls);
        self.tape.dropout_det(x, self.dropout_rate, seed)
    }

    pub fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    pub fn record_attention(&mut self, layer: &str, head: usize, weights: Var) {
        if let Some(trace) = &mut self.trace {
            trace.push(AttentionRecord {
                layer: layer.to_string(),
                head,
                weights: self.tape.value(weights).clone(),
            });
        }
    }

    pub fn take_trace(&mut self) -> Vec<AttentionRecord> {
        self.trace.take().unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// `in_dim × out_dim` weight drawn from N(0, 1/in_dim), zero bias.
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self::with_std(store, init, name, in_dim, out_dim, (1.0 / in_dim as f64).sqrt())
    }

    pub fn with_std(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        std: f64,
    ) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), init.normal(&[in_dim, out_dim], std)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        ctx.tape.linear(x, w, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[dim])),
            eps,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let g = ctx.param(self.gamma);
        let b = ctx.param(self.beta);
        ctx.tape.layer_norm(x, g, b, self.eps)
    }
}
