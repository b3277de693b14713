use serde::Serialize;

use crate::attention::{
    decoder_causal_bias, AttentionBlock, EntitySequence, HeadRelationAssignment, MmteLayer, PraLayer, Segment, SraLayer,
};
use crate::data::{pseudo_features, Vocabulary, BEGIN, OBJECT_FEATURE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Ctx, Initializer, LayerNorm, Linear, ParamId, ParamStore};
use crate::scene_graph::{BoundingBox, SceneGraph};
use crate::tensor::{Tape, Tensor, Var};

use super::decode::{greedy_decode, Decoded};
use super::input::{AnswerUnit, ModelInput, ObjectInput, OcrInput};
use super::ModelConfig;

/// Feature inputs are concatenations of unit-norm blocks (object: appearance
/// and box; OCR: appearance, fastText and PHOC), so projections are scaled per
/// block rather than per input coordinate.
const BLOCK_STD: [f64; 2] = [0.7071067811865476, 0.5773502691896258];

#[derive(Clone, Debug)]
struct Parts {
    word_embedding: ParamId,
    question_position: ParamId,
    object_proj: Linear,
    object_norm: LayerNorm,
    ocr_proj: Linear,
    ocr_norm: LayerNorm,
    decoder_position: ParamId,
    decoder_norm: LayerNorm,
    sg_proj: Linear,
    segment_embedding: ParamId,
    sa_question: AttentionBlock,
    sa_visual: AttentionBlock,
    ga: AttentionBlock,
    pra: Vec<PraLayer>,
    sra: Vec<SraLayer>,
    mmte: Vec<MmteLayer>,
    vocab_head: Linear,
    pointer_decoder: Linear,
    pointer_ocr: Linear,
}

/// The full network with its weights.
#[derive(Clone, Debug)]
pub struct Model {
    cfg: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
    parts: Parts,
    pra_assignment: HeadRelationAssignment,
    sra_assignment: HeadRelationAssignment,
}

/// Positions of each modality inside the visual sequence `obj ‖ ocr ‖ dec`.
struct Layout {
    n_question: usize,
    n_obj: usize,
    n_ocr: usize,
    n_dec: usize,
}

impl Model {
    /// Freshly initialized weights drawn from `cfg.init_seed`.
    pub fn new(cfg: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        cfg.validate()?;
        let l = &cfg.layers;
        let d = l.d_model;
        let v = vocab.len();
        let mut store = ParamStore::new();
        let mut init = Initializer::new(cfg.init_seed);
        let emb_std = 1.0;
        let parts = Parts {
            word_embedding: store.add("word_embedding", init.normal(&[v, d], emb_std)),
            question_position: store.add("question_position", init.normal(&[cfg.max_question_len, d], emb_std)),
            object_proj: Linear::with_std(&mut store, &mut init, "object_proj", OBJECT_FEATURE_DIM, d, BLOCK_STD[0]),
            object_norm: LayerNorm::new(&mut store, "object_norm", d, l.layer_norm_eps),
            ocr_proj: Linear::with_std(&mut store, &mut init, "ocr_proj", cfg.ocr_enriched_dim, d, BLOCK_STD[1]),
            ocr_norm: LayerNorm::new(&mut store, "ocr_norm", d, l.layer_norm_eps),
            decoder_position: store.add("decoder_position", init.normal(&[cfg.decoding_steps, d], emb_std)),
            decoder_norm: LayerNorm::new(&mut store, "decoder_norm", d, l.layer_norm_eps),
            sg_proj: Linear::with_std(&mut store, &mut init, "sg_proj", cfg.sg_node_dim, d, 1.0),
            segment_embedding: store.add("segment_embedding", init.normal(&[2, d], emb_std)),
            sa_question: AttentionBlock::new(&mut store, &mut init, "sa_question", l, l.heads_sa_ga_mmte)?,
            sa_visual: AttentionBlock::new(&mut store, &mut init, "sa_visual", l, l.heads_sa_ga_mmte)?,
            ga: AttentionBlock::new(&mut store, &mut init, "ga", l, l.heads_sa_ga_mmte)?,
            pra: (0..l.n_pra)
                .map(|i| PraLayer::new(&mut store, &mut init, &format!("pra.{i}"), l))
                .collect::<Result<_>>()?,
            sra: (0..l.n_sra)
                .map(|i| SraLayer::new(&mut store, &mut init, &format!("sra.{i}"), l))
                .collect::<Result<_>>()?,
            mmte: (0..l.n_mmte)
                .map(|i| MmteLayer::new(&mut store, &mut init, &format!("mmte.{i}"), l))
                .collect::<Result<_>>()?,
            vocab_head: Linear::new(&mut store, &mut init, "vocab_head", d, v),
            pointer_decoder: Linear::new(&mut store, &mut init, "pointer_decoder", d, d),
            pointer_ocr: Linear::new(&mut store, &mut init, "pointer_ocr", d, d),
        };
        Ok(Model {
            pra_assignment: HeadRelationAssignment::new(l.heads_pra, l.pra_context)?,
            sra_assignment: HeadRelationAssignment::new(l.heads_sra, l.sra_context)?,
            cfg,
            vocab,
            params: store,
            parts,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn pra_assignment(&self) -> &HeadRelationAssignment {
        &self.pra_assignment
    }

    pub fn sra_assignment(&self) -> &HeadRelationAssignment {
        &self.sra_assignment
    }

    /// Parameters of the two pointer projections, `(weight, bias)` each.
    pub fn pointer_params(&self) -> [(ParamId, ParamId); 2] {
        let (d, o) = (&self.parts.pointer_decoder, &self.parts.pointer_ocr);
        [(d.weight, d.bias), (o.weight, o.bias)]
    }

    /// Word embedding plus learned position, one row per token.
    pub fn encode_question(&self, ctx: &mut Ctx, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::contract("empty question"));
        }
        if ids.len() > self.cfg.max_question_len {
            return Err(Error::contract(format!("question longer than {}", self.cfg.max_question_len)));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab.len()) {
            return Err(Error::contract(format!("unknown question token id {id}")));
        }
        let table = ctx.param(self.parts.word_embedding);
        let words = ctx.tape.gather_rows(table, ids)?;
        let pos_table = ctx.param(self.parts.question_position);
        let pos = ctx.tape.narrow(pos_table, 0, 0, ids.len())?;
        ctx.tape.add(words, pos)
    }

    /// Projected, normalized appearance ‖ box rows.
    pub fn encode_objects(&self, ctx: &mut Ctx, objects: &[ObjectInput]) -> Result<Var> {
        if objects.is_empty() {
            return Err(Error::contract("encode_objects needs at least one object"));
        }
        let rows: Vec<Vec<f64>> = objects.iter().map(ObjectInput::features).collect();
        let x = ctx.tape.constant(Tensor::from_rows(&rows)?);
        let h = self.parts.object_proj.forward(ctx, x)?;
        self.parts.object_norm.forward(ctx, h)
    }

    /// Projected, normalized enriched OCR rows.
    pub fn encode_ocr(&self, ctx: &mut Ctx, ocr: &[OcrInput]) -> Result<Var> {
        if ocr.is_empty() {
            return Err(Error::contract("encode_ocr needs at least one OCR token"));
        }
        let rows: Vec<Vec<f64>> = ocr.iter().map(|o| o.enriched(self.cfg.ocr_enriched_dim)).collect();
        let x = ctx.tape.constant(Tensor::from_rows(&rows)?);
        let h = self.parts.ocr_proj.forward(ctx, x)?;
        self.parts.ocr_norm.forward(ctx, h)
    }

    /// Base word vectors of the graph nodes in adjacency order.
    pub fn scene_graph_base(&self, sg: &SceneGraph) -> Result<Option<Tensor>> {
        let order = sg.node_order();
        if order.is_empty() {
            return Ok(None);
        }
        let rows: Vec<Vec<f64>> = order
            .iter()
            .map(|&id| pseudo_features(node_info(sg, id).0, self.cfg.sg_node_dim, "fasttext"))
            .collect();
        Ok(Some(Tensor::from_rows(&rows)?))
    }

    /// Projected node embeddings, `None` for an empty graph.
    pub fn embed_scene_graph(&self, ctx: &mut Ctx, sg: &SceneGraph) -> Result<Option<EntitySequence>> {
        let Some(base) = self.scene_graph_base(sg)? else {
            return Ok(None);
        };
        let (mut segments, mut boxes) = (Vec::new(), Vec::new());
        for id in sg.node_order() {
            let (_, bbox, segment) = node_info(sg, id);
            segments.push(segment);
            boxes.push(Some(bbox));
        }
        let x = ctx.tape.constant(base);
        let h = self.parts.sg_proj.forward(ctx, x)?;
        Ok(Some(EntitySequence::new(ctx.tape, h, segments, boxes)?))
    }

    /// Decoder input rows for `[begin] ++ prefix`: the begin or vocabulary
    /// word embedding, or the encoded OCR row for a copy, plus position, normalized.
    fn decoder_inputs(&self, ctx: &mut Ctx, prefix: &[AnswerUnit], ocr_enc: Option<Var>) -> Result<Var> {
        let v = self.vocab.len();
        let n_ocr = ocr_enc.map(|o| ctx.tape.shape(o)[0]).unwrap_or(0);
        let mut indices = vec![BEGIN];
        for u in prefix {
            let i = u.score_index(v);
            if i >= v + n_ocr {
                return Err(Error::contract(format!("decoder prefix unit {u:?} out of range")));
            }
            indices.push(i);
        }
        let words = ctx.param(self.parts.word_embedding);
        let table = match ocr_enc {
            Some(o) => ctx.tape.concat(&[words, o], 0)?,
            None => words,
        };
        let rows = ctx.tape.gather_rows(table, &indices)?;
        let pos_table = ctx.param(self.parts.decoder_position);
        let pos = ctx.tape.narrow(pos_table, 0, 0, indices.len())?;
        let h = ctx.tape.add(rows, pos)?;
        self.parts.decoder_norm.forward(ctx, h)
    }

    fn segment_row(&self, ctx: &mut Ctx, which: usize) -> Result<Var> {
        let table = ctx.param(self.parts.segment_embedding);
        let row = ctx.tape.narrow(table, 0, which, 1)?;
        ctx.tape.reshape(row, vec![self.cfg.layers.d_model])
    }

    /// Scores for every decoder position of `[begin] ++ prefix`: row `t`
    /// holds the `vocab ‖ ocr` logits for answer unit `t`.
    pub fn forward_steps(&self, ctx: &mut Ctx, input: &ModelInput, prefix: &[AnswerUnit]) -> Result<Var> {
        input.validate(&self.cfg, self.vocab.len())?;
        if prefix.len() >= self.cfg.decoding_steps {
            return Err(Error::contract(format!(
                "decoder prefix of {} units leaves no step below {}",
                prefix.len(),
                self.cfg.decoding_steps
            )));
        }
        let layout = Layout {
            n_question: input.question.len(),
            n_obj: input.objects.len(),
            n_ocr: input.ocr.len(),
            n_dec: prefix.len() + 1,
        };

        let q = self.encode_question(ctx, &input.question)?;
        let q = EntitySequence::unboxed(ctx.tape, q, Segment::Question)?;
        let q = self.parts.sa_question.self_attention(ctx, &q)?;

        let mut parts = Vec::new();
        if layout.n_obj > 0 {
            let o = self.encode_objects(ctx, &input.objects)?;
            let boxes = input.objects.iter().map(|o| Some(o.bbox)).collect();
            parts.push(EntitySequence::new(ctx.tape, o, vec![Segment::Object; layout.n_obj], boxes)?);
        }
        let ocr_enc = if layout.n_ocr > 0 {
            let o = self.encode_ocr(ctx, &input.ocr)?;
            let boxes = input.ocr.iter().map(|o| Some(o.bbox)).collect();
            parts.push(EntitySequence::new(ctx.tape, o, vec![Segment::Ocr; layout.n_ocr], boxes)?);
            Some(o)
        } else {
            None
        };
        let dec = self.decoder_inputs(ctx, prefix, ocr_enc)?;
        parts.push(EntitySequence::unboxed(ctx.tape, dec, Segment::Decoder)?);
        let refs: Vec<&EntitySequence> = parts.iter().collect();
        let x = EntitySequence::concat(ctx.tape, &refs)?;

        let causal = decoder_causal_bias(x.segments(), self.parts.sa_visual.heads());
        let x = x.with_features(self.parts.sa_visual.forward(ctx, x.features, x.features, &causal)?);
        let v_prime = self.parts.ga.guided_attention(ctx, &x, &q)?;

        let mut fs = EntitySequence::concat(ctx.tape, &[&q, &v_prime])?;
        if let Some(first) = self.parts.pra.first() {
            let bias = first.bias(&fs, &self.pra_assignment, self.cfg.layers.distance_threshold)?;
            for layer in &self.parts.pra {
                fs = layer.forward_with_bias(ctx, &fs, &bias)?;
            }
        }
        let seg0 = self.segment_row(ctx, 0)?;
        fs = fs.with_features(ctx.tape.add_bias(fs.features, seg0)?);

        let mut fused = fs;
        if let Some(mut fsg) = self.embed_scene_graph(ctx, &input.scene_graph)? {
            if let Some(first) = self.parts.sra.first() {
                let adj = input.scene_graph.adjacency_matrix();
                let mut bias = first.bias(&adj, &self.sra_assignment)?;
                if !self.cfg.sra_masking {
                    bias = bias.cleared();
                }
                for layer in &self.parts.sra {
                    fsg = layer.forward_with_bias(ctx, &fsg, &bias)?;
                }
            }
            let seg1 = self.segment_row(ctx, 1)?;
            fsg = fsg.with_features(ctx.tape.add_bias(fsg.features, seg1)?);
            fused = EntitySequence::concat(ctx.tape, &[&fused, &fsg])?;
        }
        if let Some(first) = self.parts.mmte.first() {
            let bias = first.bias(&fused);
            for layer in &self.parts.mmte {
                fused = layer.forward_with_bias(ctx, &fused, &bias)?;
            }
        }

        let dec_start = layout.n_question + layout.n_obj + layout.n_ocr;
        let z = ctx.tape.narrow(fused.features, 0, dec_start, layout.n_dec)?;
        let vocab_scores = self.parts.vocab_head.forward(ctx, z)?;
        if layout.n_ocr == 0 {
            return Ok(vocab_scores);
        }
        let ocr_out = ctx
            .tape
            .narrow(fused.features, 0, layout.n_question + layout.n_obj, layout.n_ocr)?;
        let pd = self.parts.pointer_decoder.forward(ctx, z)?;
        let po = self.parts.pointer_ocr.forward(ctx, ocr_out)?;
        let pot = ctx.tape.transpose(po)?;
        let copy = ctx.tape.matmul(pd, pot)?;
        let copy = ctx.tape.scale(copy, 1.0 / (self.cfg.layers.d_model as f64).sqrt());
        ctx.tape.concat(&[vocab_scores, copy], 1)
    }

    /// Scores for the unit following `prefix`, shape `[1, vocab + n_ocr]`.
    pub fn forward(&self, ctx: &mut Ctx, input: &ModelInput, prefix: &[AnswerUnit]) -> Result<Var> {
        let all = self.forward_steps(ctx, input, prefix)?;
        ctx.tape.narrow(all, 0, prefix.len(), 1)
    }

    /// Mean per-step cross-entropy of the teacher-forced gold answer.
    pub fn loss(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Var> {
        let gold = input
            .gold
            .as_ref()
            .filter(|g| !g.is_empty())
            .ok_or_else(|| Error::contract("loss needs a gold answer"))?;
        let logits = self.forward_steps(ctx, input, &gold[..gold.len() - 1])?;
        let v = self.vocab.len();
        let targets: Vec<usize> = gold.iter().map(|u| u.score_index(v)).collect();
        ctx.tape.cross_entropy(logits, &targets)
    }

    /// Step scores without dropout, as plain numbers.
    pub fn step_scores(&self, input: &ModelInput, prefix: &[AnswerUnit]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params);
        let out = self.forward(&mut ctx, input, prefix)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Greedy decoding until the end token or the step limit.
    pub fn decode_answer(&self, input: &ModelInput) -> Result<Decoded> {
        let texts = input.ocr_texts();
        greedy_decode(self.cfg.decoding_steps, &self.vocab, &texts, |prefix| {
            self.step_scores(input, prefix)
        })
    }
}

/// Attention weights of one head with the segment tag of every query and key position.
#[derive(Clone, Debug, Serialize)]
pub struct AttentionDump {
    pub layer: String,
    pub head: usize,
    pub query_segments: Vec<Segment>,
    pub key_segments: Vec<Segment>,
    pub weights: Tensor,
}

impl Model {
    /// Every attention head of one forward pass over `[begin] ++ prefix`.
    pub fn attention_dump(&self, input: &ModelInput, prefix: &[AnswerUnit]) -> Result<Vec<AttentionDump>> {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params).with_trace();
        self.forward_steps(&mut ctx, input, prefix)?;
        let records = ctx.take_trace();

        let question = vec![Segment::Question; input.question.len()];
        let mut visual = vec![Segment::Object; input.objects.len()];
        visual.extend(vec![Segment::Ocr; input.ocr.len()]);
        visual.extend(vec![Segment::Decoder; prefix.len() + 1]);
        let fs: Vec<Segment> = question.iter().chain(&visual).copied().collect();
        let mut sg = vec![Segment::SgObject; input.scene_graph.objects.len()];
        sg.extend(vec![Segment::SgAttribute; input.scene_graph.attributes.len()]);
        let fused: Vec<Segment> = fs.iter().chain(&sg).copied().collect();

        records
            .into_iter()
            .map(|r| {
                let block = r.layer.trim_end_matches(".attn");
                let (q, k) = match block.split('.').next().unwrap_or("") {
                    "sa_question" => (&question, &question),
                    "sa_visual" => (&visual, &visual),
                    "ga" => (&visual, &question),
                    "pra" => (&fs, &fs),
                    "sra" => (&sg, &sg),
                    "mmte" => (&fused, &fused),
                    other => return Err(Error::contract(format!("no segment layout for layer `{other}`"))),
                };
                Ok(AttentionDump {
                    layer: block.to_string(),
                    head: r.head,
                    query_segments: q.clone(),
                    key_segments: k.clone(),
                    weights: r.weights,
                })
            })
            .collect()
    }
}

/// Label, box and segment of node `id`.
fn node_info(sg: &SceneGraph, id: usize) -> (&str, BoundingBox, Segment) {
    if let Some(o) = sg.objects.iter().find(|o| o.id == id) {
        return (&o.class, o.bbox, Segment::SgObject);
    }
    let a = sg.attributes.iter().find(|a| a.id == id).expect("node id from node_order");
    (&a.text, a.bbox, Segment::SgAttribute)
}
