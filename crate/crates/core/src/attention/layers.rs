use crate::error::{Error, Result};
use crate::nn::{Ctx, Initializer, LayerNorm, Linear, ParamStore};
use crate::scene_graph::AdjacencyMatrix;
use crate::tensor::Var;

use super::bias::{decoder_causal_bias, pra_bias, sra_bias, AttentionBias, HeadRelationAssignment};
use super::{EntitySequence, LayerStackConfig};

/// Scaled dot-product attention split over heads, with an additive bias.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub name: String,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    heads: usize,
    d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::contract(format!("{name}: {heads} heads do not divide d_model {d_model}")));
        }
        Ok(MultiHeadAttention {
            name: name.to_string(),
            query: Linear::new(store, init, &format!("{name}.query"), d_model, d_model),
            key: Linear::new(store, init, &format!("{name}.key"), d_model, d_model),
            value: Linear::new(store, init, &format!("{name}.value"), d_model, d_model),
            output: Linear::new(store, init, &format!("{name}.output"), d_model, d_model),
            heads,
            d_model,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Queries from `x`, keys and values from `y`.
    pub fn forward(&self, ctx: &mut Ctx, x: Var, y: Var, bias: &AttentionBias) -> Result<Var> {
        let (lq, lk) = (ctx.tape.shape(x)[0], ctx.tape.shape(y)[0]);
        if bias.dims() != (self.heads, lq, lk) {
            let (h, r, c) = bias.dims();
            return Err(Error::Shape {
                op: "multi_head_attention bias",
                lhs: vec![self.heads, lq, lk],
                rhs: vec![h, r, c],
            });
        }
        let q = self.query.forward(ctx, x)?;
        let k = self.key.forward(ctx, y)?;
        let v = self.value.forward(ctx, y)?;
        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = ctx.tape.narrow(q, 1, h * dh, dh)?;
            let kh = ctx.tape.narrow(k, 1, h * dh, dh)?;
            let vh = ctx.tape.narrow(v, 1, h * dh, dh)?;
            let kt = ctx.tape.transpose(kh)?;
            let scores = ctx.tape.matmul(qh, kt)?;
            let scores = ctx.tape.scale(scores, scale);
            let weights = ctx.tape.softmax_biased(scores, &bias.head(h))?;
            if ctx.tracing() {
                ctx.record_attention(&self.name, h, weights);
            }
            outs.push(ctx.tape.matmul(weights, vh)?);
        }
        let joined = ctx.tape.concat(&outs, 1)?;
        self.output.forward(ctx, joined)
    }
}

/// Post-norm transformer block: attention, add & norm, feed-forward, add & norm.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: LayerNorm,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cfg: &LayerStackConfig,
        heads: usize,
    ) -> Result<Self> {
        let d = cfg.d_model;
        Ok(AttentionBlock {
            attention: MultiHeadAttention::new(store, init, &format!("{name}.attn"), d, heads)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d, cfg.layer_norm_eps),
            ffn_in: Linear::new(store, init, &format!("{name}.ffn_in"), d, cfg.ffn_dim),
            ffn_out: Linear::new(store, init, &format!("{name}.ffn_out"), cfg.ffn_dim, d),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d, cfg.layer_norm_eps),
        })
    }

    pub fn heads(&self) -> usize {
        self.attention.heads
    }

    pub fn name(&self) -> &str {
        &self.attention.name
    }

    /// Guided attention: `x` attends over `y`. With `y == x` this is self-attention.
    pub fn forward(&self, ctx: &mut Ctx, x: Var, y: Var, bias: &AttentionBias) -> Result<Var> {
        let a = self.attention.forward(ctx, x, y, bias)?;
        let a = ctx.dropout(a)?;
        let h = ctx.tape.add(x, a)?;
        let h = self.norm1.forward(ctx, h)?;
        let f = self.ffn_in.forward(ctx, h)?;
        let f = ctx.tape.gelu(f);
        let f = self.ffn_out.forward(ctx, f)?;
        let f = ctx.dropout(f)?;
        let out = ctx.tape.add(h, f)?;
        self.norm2.forward(ctx, out)
    }

    pub fn self_attention(&self, ctx: &mut Ctx, x: &EntitySequence) -> Result<EntitySequence> {
        let bias = AttentionBias::zeros(self.heads(), x.len(), x.len());
        let out = self.forward(ctx, x.features, x.features, &bias)?;
        Ok(x.with_features(out))
    }

    pub fn guided_attention(&self, ctx: &mut Ctx, x: &EntitySequence, y: &EntitySequence) -> Result<EntitySequence> {
        let bias = AttentionBias::zeros(self.heads(), x.len(), y.len());
        let out = self.forward(ctx, x.features, y.features, &bias)?;
        Ok(x.with_features(out))
    }
}

/// Scene-graph layer: heads attend only along permitted relation labels.
#[derive(Clone, Debug)]
pub struct SraLayer {
    pub block: AttentionBlock,
}

impl SraLayer {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, cfg: &LayerStackConfig) -> Result<Self> {
        Ok(SraLayer {
            block: AttentionBlock::new(store, init, name, cfg, cfg.heads_sra)?,
        })
    }

    pub fn bias(&self, adj: &AdjacencyMatrix, assignment: &HeadRelationAssignment) -> Result<AttentionBias> {
        if assignment.heads() != self.block.heads() {
            return Err(Error::contract("sra layer: assignment head count differs from layer"));
        }
        Ok(sra_bias(adj, assignment))
    }

    pub fn forward(
        &self,
        ctx: &mut Ctx,
        nodes: &EntitySequence,
        adj: &AdjacencyMatrix,
        assignment: &HeadRelationAssignment,
    ) -> Result<EntitySequence> {
        if adj.len() != nodes.len() {
            return Err(Error::contract("sra layer: adjacency order differs from node count"));
        }
        let bias = self.bias(adj, assignment)?;
        self.forward_with_bias(ctx, nodes, &bias)
    }

    pub fn forward_with_bias(&self, ctx: &mut Ctx, nodes: &EntitySequence, bias: &AttentionBias) -> Result<EntitySequence> {
        let out = self.block.forward(ctx, nodes.features, nodes.features, bias)?;
        Ok(nodes.with_features(out))
    }
}

/// Positional layer over question, visual and decoder positions.
#[derive(Clone, Debug)]
pub struct PraLayer {
    pub block: AttentionBlock,
}

impl PraLayer {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, cfg: &LayerStackConfig) -> Result<Self> {
        Ok(PraLayer {
            block: AttentionBlock::new(store, init, name, cfg, cfg.heads_pra)?,
        })
    }

    pub fn bias(
        &self,
        seq: &EntitySequence,
        assignment: &HeadRelationAssignment,
        distance_threshold: f64,
    ) -> Result<AttentionBias> {
        if assignment.heads() != self.block.heads() {
            return Err(Error::contract("pra layer: assignment head count differs from layer"));
        }
        pra_bias(seq.segments(), seq.boxes(), assignment, distance_threshold)
    }

    pub fn forward(
        &self,
        ctx: &mut Ctx,
        seq: &EntitySequence,
        assignment: &HeadRelationAssignment,
        distance_threshold: f64,
    ) -> Result<EntitySequence> {
        let bias = self.bias(seq, assignment, distance_threshold)?;
        self.forward_with_bias(ctx, seq, &bias)
    }

    pub fn forward_with_bias(&self, ctx: &mut Ctx, seq: &EntitySequence, bias: &AttentionBias) -> Result<EntitySequence> {
        let out = self.block.forward(ctx, seq.features, seq.features, bias)?;
        Ok(seq.with_features(out))
    }
}

/// Multimodal encoder layer: full pairwise attention except decoder causality.
#[derive(Clone, Debug)]
pub struct MmteLayer {
    pub block: AttentionBlock,
}

impl MmteLayer {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, cfg: &LayerStackConfig) -> Result<Self> {
        Ok(MmteLayer {
            block: AttentionBlock::new(store, init, name, cfg, cfg.heads_sa_ga_mmte)?,
        })
    }

    pub fn bias(&self, seq: &EntitySequence) -> AttentionBias {
        decoder_causal_bias(seq.segments(), self.block.heads())
    }

    pub fn forward(&self, ctx: &mut Ctx, seq: &EntitySequence) -> Result<EntitySequence> {
        let bias = self.bias(seq);
        self.forward_with_bias(ctx, seq, &bias)
    }

    pub fn forward_with_bias(&self, ctx: &mut Ctx, seq: &EntitySequence, bias: &AttentionBias) -> Result<EntitySequence> {
        let out = self.block.forward(ctx, seq.features, seq.features, bias)?;
        Ok(seq.with_features(out))
    }
}
