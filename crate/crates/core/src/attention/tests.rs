use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{Ctx, Initializer, ParamStore};
use crate::scene_graph::{AdjacencyMatrix, BoundingBox};
use crate::tensor::{grad_check, Tape, Tensor};

fn small_cfg(d: usize) -> LayerStackConfig {
    LayerStackConfig {
        d_model: d,
        heads_sa_ga_mmte: 2,
        heads_sra: 4,
        heads_pra: 4,
        ffn_dim: 2 * d,
        dropout: 0.0,
        ..LayerStackConfig::default()
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn affine(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            (0..dout)
                .map(|j| b.data()[j] + (0..din).map(|i| row[i] * w.at(i, j)).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Dense reference: one explicit loop per head, query and key.
fn naive_mha(
    store: &ParamStore,
    mha: &MultiHeadAttention,
    x: &Tensor,
    y: &Tensor,
    bias: &AttentionBias,
) -> Vec<Vec<f64>> {
    let p = |id| store.get(id);
    let q = affine(&mat(x), p(mha.query.weight), p(mha.query.bias));
    let k = affine(&mat(y), p(mha.key.weight), p(mha.key.bias));
    let v = affine(&mat(y), p(mha.value.weight), p(mha.value.bias));
    let d = q[0].len();
    let heads = mha.heads();
    let dh = d / heads;
    let mut concat = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        for i in 0..q.len() {
            let mut scores = Vec::new();
            for j in 0..k.len() {
                let dot: f64 = (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum();
                scores.push(dot / (dh as f64).sqrt() + bias.get(h, i, j));
            }
            let open: Vec<bool> = (0..k.len()).map(|j| bias.is_open(h, i, j)).collect();
            let m = (0..k.len()).filter(|&j| open[j]).map(|j| scores[j]).fold(f64::MIN, f64::max);
            let e: Vec<f64> = (0..k.len()).map(|j| if open[j] { (scores[j] - m).exp() } else { 0.0 }).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dh {
                concat[i][h * dh + c] = (0..k.len()).map(|j| e[j] / z * v[j][h * dh + c]).sum();
            }
        }
    }
    affine(&concat, p(mha.output.weight), p(mha.output.bias))
}

fn max_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m = m.max((a.at(i, j) - v).abs());
        }
    }
    m
}

#[test]
fn mha_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (lq, lk) in [(4, 4), (3, 5), (1, 2)] {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(3);
        let mha = MultiHeadAttention::new(&mut store, &mut init, "mha", 8, 2).unwrap();
        let x = random_tensor(&mut rng, lq, 8);
        let y = random_tensor(&mut rng, lk, 8);
        let bias = AttentionBias::from_fn(2, lq, lk, |h, i, j| (h + i + j) % 3 != 0 || j == i.min(lk - 1));
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store);
        let xv = ctx.tape.constant(x.clone());
        let yv = ctx.tape.constant(y.clone());
        let out = mha.forward(&mut ctx, xv, yv, &bias).unwrap();
        let got = tape.value(out).clone();
        assert!(max_diff(&got, &naive_mha(&store, &mha, &x, &y, &bias)) < 1e-10);
    }
}

#[test]
fn single_key_forces_attention() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(5);
    let mha = MultiHeadAttention::new(&mut store, &mut init, "mha", 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, 3, 4);
    let y = random_tensor(&mut rng, 1, 4);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store);
    let xv = ctx.tape.constant(x);
    let yv = ctx.tape.constant(y.clone());
    let out = mha.forward(&mut ctx, xv, yv, &AttentionBias::zeros(2, 3, 1)).unwrap();
    let v = affine(&mat(&y), store.get(mha.value.weight), store.get(mha.value.bias));
    let expect = affine(&v, store.get(mha.output.weight), store.get(mha.output.bias));
    let got = tape.value(out);
    for i in 0..3 {
        for j in 0..4 {
            assert!((got.at(i, j) - expect[0][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn diagonal_only_bias_attends_to_self() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(6);
    let mha = MultiHeadAttention::new(&mut store, &mut init, "mha", 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, 5, 4);
    let bias = AttentionBias::from_fn(2, 5, 5, |_, i, j| i == j);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store).with_trace();
    let xv = ctx.tape.constant(x.clone());
    let out = mha.forward(&mut ctx, xv, xv, &bias).unwrap();
    for rec in ctx.take_trace() {
        assert_eq!(rec.weights, Tensor::eye(5));
    }
    let v = affine(&mat(&x), store.get(mha.value.weight), store.get(mha.value.bias));
    let expect = affine(&v, store.get(mha.output.weight), store.get(mha.output.bias));
    assert!(max_diff(tape.value(out), &expect) < 1e-12);
}

#[test]
fn bias_shape_mismatch_is_rejected() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(0);
    let mha = MultiHeadAttention::new(&mut store, &mut init, "mha", 4, 2).unwrap();
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store);
    let x = ctx.tape.constant(Tensor::zeros(&[3, 4]));
    assert!(mha.forward(&mut ctx, x, x, &AttentionBias::zeros(2, 3, 2)).is_err());
    assert!(MultiHeadAttention::new(&mut store, &mut init, "bad", 6, 4).is_err());
}

#[test]
fn guided_by_itself_equals_self_attention() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(9);
    let block = AttentionBlock::new(&mut store, &mut init, "sa", &cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, 6, 8);
    let run = |guided: bool| {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store);
        let xv = ctx.tape.constant(x.clone());
        let seq = EntitySequence::unboxed(ctx.tape, xv, Segment::Question).unwrap();
        let out = if guided {
            block.guided_attention(&mut ctx, &seq, &seq).unwrap()
        } else {
            block.self_attention(&mut ctx, &seq).unwrap()
        };
        tape.value(out.features).clone()
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn guided_attention_with_one_key_gives_equal_attended_values() {
    let cfg = small_cfg(4);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(2);
    let block = AttentionBlock::new(&mut store, &mut init, "ga", &cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store);
    let x = ctx.tape.constant(random_tensor(&mut rng, 4, 4));
    let y = ctx.tape.constant(random_tensor(&mut rng, 1, 4));
    let a = block.attention.forward(&mut ctx, x, y, &AttentionBias::zeros(2, 4, 1)).unwrap();
    let a = tape.value(a);
    for i in 1..4 {
        assert_eq!(a.row(i), a.row(0));
    }
}

#[test]
fn zero_value_projection_leaves_ffn_path() {
    let cfg = small_cfg(4);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(7);
    let block = AttentionBlock::new(&mut store, &mut init, "sa", &cfg, 2).unwrap();
    store.set(block.attention.value.weight, Tensor::zeros(&[4, 4])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, 5, 4);

    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store);
    let xv = ctx.tape.constant(x.clone());
    let seq = EntitySequence::unboxed(ctx.tape, xv, Segment::Object).err();
    assert!(seq.is_some(), "objects need boxes");
    let seq = EntitySequence::unboxed(ctx.tape, xv, Segment::Question).unwrap();
    let full = block.self_attention(&mut ctx, &seq).unwrap().features;

    let h = block.norm1.forward(&mut ctx, xv).unwrap();
    let f = block.ffn_in.forward(&mut ctx, h).unwrap();
    let f = ctx.tape.gelu(f);
    let f = block.ffn_out.forward(&mut ctx, f).unwrap();
    let s = ctx.tape.add(h, f).unwrap();
    let ffn_only = block.norm2.forward(&mut ctx, s).unwrap();
    assert!(tape.value(full).max_abs_diff(tape.value(ffn_only)) < 1e-12);
}

#[test]
fn blocks_preserve_shape() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(1);
    let block = AttentionBlock::new(&mut store, &mut init, "sa", &cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for l in [1, 5, 20] {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store);
        let xv = ctx.tape.constant(random_tensor(&mut rng, l, 8));
        let seq = EntitySequence::unboxed(ctx.tape, xv, Segment::Question).unwrap();
        let out = block.self_attention(&mut ctx, &seq).unwrap();
        assert_eq!(tape.shape(out.features), &[l, 8]);
    }
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> AdjacencyMatrix {
    let labels = (0..n * n)
        .map(|k| if k / n == k % n { 12 } else { rng.random_range(0..12u8) })
        .collect();
    AdjacencyMatrix::new(n, labels).unwrap()
}

fn sra_fixture(n: usize, seed: u64) -> (ParamStore, SraLayer, Tensor, AdjacencyMatrix) {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed);
    let layer = SraLayer::new(&mut store, &mut init, "sra", &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, n, 8);
    let adj = random_adjacency(&mut rng, n);
    (store, layer, x, adj)
}

fn sg_sequence(tape: &mut Tape, x: &Tensor) -> EntitySequence {
    let n = x.rows();
    let v = tape.constant(x.clone());
    let b = BoundingBox::new(0.1, 0.1, 0.2, 0.2).unwrap();
    EntitySequence::new(tape, v, vec![Segment::SgObject; n], vec![Some(b); n]).unwrap()
}

#[test]
fn sra_weight_support_matches_edge_permissions() {
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    for seed in 0..10 {
        let (store, layer, x, adj) = sra_fixture(7, seed);
        let mut tape = Tape::new();
        let seq = sg_sequence(&mut tape, &x);
        let mut ctx = Ctx::new(&mut tape, &store).with_trace();
        layer.forward(&mut ctx, &seq, &adj, &assign).unwrap();
        let trace = ctx.take_trace();
        assert_eq!(trace.len(), 4);
        for rec in trace {
            let h = rec.head;
            for u in 0..7 {
                let mut row_sum = 0.0;
                for v in 0..7 {
                    let w = rec.weights.at(u, v);
                    row_sum += w;
                    let permitted = u == v || assign.relations(h).contains(&adj.get(u, v));
                    assert_eq!(w > 0.0, permitted, "seed {seed} head {h} ({u},{v})");
                }
                assert!((row_sum - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn single_node_graph_attends_to_itself() {
    let (store, layer, x, _) = sra_fixture(1, 3);
    let adj = AdjacencyMatrix::new(1, vec![12]).unwrap();
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let mut tape = Tape::new();
    let seq = sg_sequence(&mut tape, &x);
    let mut ctx = Ctx::new(&mut tape, &store).with_trace();
    let out = layer.forward(&mut ctx, &seq, &adj, &assign).unwrap();
    for rec in ctx.take_trace() {
        assert_eq!(rec.weights.data(), &[1.0]);
    }
    assert!(tape.value(out.features).data().iter().all(|v| v.is_finite()));
}

#[test]
fn sra_is_permutation_equivariant() {
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let (store, layer, x, adj) = sra_fixture(6, 21);
    let perm = [3, 0, 5, 1, 4, 2];
    // Node i moves to position perm[i].
    let mut rows = vec![Vec::new(); 6];
    for (old, &new) in perm.iter().enumerate() {
        rows[new] = x.row(old).to_vec();
    }
    let xp = Tensor::from_rows(&rows).unwrap();
    let run = |x: &Tensor, adj: &AdjacencyMatrix| {
        let mut tape = Tape::new();
        let seq = sg_sequence(&mut tape, x);
        let mut ctx = Ctx::new(&mut tape, &store);
        let out = layer.forward(&mut ctx, &seq, adj, &assign).unwrap();
        tape.value(out.features).clone()
    };
    let base = run(&x, &adj);
    let permuted = run(&xp, &adj.permuted(&perm));
    for (old, &new) in perm.iter().enumerate() {
        for (a, b) in permuted.row(new).iter().zip(base.row(old)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn pra_sequence(tape: &mut Tape, rng: &mut ChaCha8Rng, d: usize) -> (EntitySequence, Vec<usize>) {
    let mut segments = vec![Segment::Question; 2];
    segments.extend([Segment::Object; 3]);
    segments.extend([Segment::Ocr; 2]);
    segments.extend([Segment::Decoder; 4]);
    let boxes = segments
        .iter()
        .map(|s| {
            s.requires_box().then(|| {
                let (x, y) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
                let (w, h) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
                BoundingBox::new(x, y, x + w, y + h).unwrap()
            })
        })
        .collect();
    let n = segments.len();
    let decoder: Vec<usize> = (0..n).filter(|&i| segments[i] == Segment::Decoder).collect();
    let v = tape.constant(random_tensor(rng, n, d));
    (EntitySequence::new(tape, v, segments, boxes).unwrap(), decoder)
}

#[test]
fn pra_weight_support_matches_bias() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(4);
    let layer = PraLayer::new(&mut store, &mut init, "pra", &cfg).unwrap();
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let mut tape = Tape::new();
        let (seq, _) = pra_sequence(&mut tape, &mut rng, 8);
        let bias = layer.bias(&seq, &assign, 0.5).unwrap();
        let mut ctx = Ctx::new(&mut tape, &store).with_trace();
        layer.forward(&mut ctx, &seq, &assign, 0.5).unwrap();
        for rec in ctx.take_trace() {
            for u in 0..seq.len() {
                for v in 0..seq.len() {
                    assert_eq!(rec.weights.at(u, v) > 0.0, bias.is_open(rec.head, u, v));
                }
            }
        }
    }
}

fn perturbed_after(x: &Tensor, decoder: &[usize], t: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut out = x.clone();
    for &pos in &decoder[t + 1..] {
        for c in 0..x.cols() {
            out = out.with_entry(pos * x.cols() + c, rng.random_range(-3.0..3.0));
        }
    }
    out
}

#[test]
fn pra_and_mmte_are_causal_over_decoder() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(12);
    let pra = PraLayer::new(&mut store, &mut init, "pra", &cfg).unwrap();
    let mmte = MmteLayer::new(&mut store, &mut init, "mmte", &cfg).unwrap();
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut tape = Tape::new();
    let (seq, decoder) = pra_sequence(&mut tape, &mut rng, 8);
    let x = tape.value(seq.features).clone();
    let run = |input: &Tensor| {
        let mut tape = Tape::new();
        let v = tape.constant(input.clone());
        let s = seq.with_features(v);
        let mut ctx = Ctx::new(&mut tape, &store);
        let a = pra.forward(&mut ctx, &s, &assign, 0.5).unwrap();
        let b = mmte.forward(&mut ctx, &a).unwrap();
        tape.value(b.features).clone()
    };
    let base = run(&x);
    for t in 0..decoder.len() - 1 {
        let out = run(&perturbed_after(&x, &decoder, t, &mut rng));
        for pos in 0..=decoder[t] {
            assert_eq!(out.row(pos), base.row(pos), "step {t} position {pos}");
        }
        assert_ne!(out.row(decoder[t + 1]), base.row(decoder[t + 1]));
    }
}

#[test]
fn pra_without_visual_entities_is_causal_self_attention() {
    let segments = vec![Segment::Question, Segment::Question, Segment::Decoder, Segment::Decoder];
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let bias = pra_bias(&segments, &[None; 4], &assign, 0.5).unwrap();
    assert_eq!(bias, decoder_causal_bias(&segments, 4));
}

#[test]
fn mmte_without_decoder_matches_oracle() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(14);
    let mmte = MmteLayer::new(&mut store, &mut init, "mmte", &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random_tensor(&mut rng, 5, 8);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let seq = EntitySequence::unboxed(&tape, v, Segment::Question).unwrap();
    let bias = mmte.bias(&seq);
    assert_eq!(bias, AttentionBias::zeros(2, 5, 5));
    let mut ctx = Ctx::new(&mut tape, &store);
    let a = mmte.block.attention.forward(&mut ctx, v, v, &bias).unwrap();
    let got = tape.value(a).clone();
    assert!(max_diff(&got, &naive_mha(&store, &mmte.block.attention, &x, &x, &bias)) < 1e-10);

    let one = random_tensor(&mut rng, 1, 8);
    let mut tape = Tape::new();
    let v = tape.constant(one);
    let seq = EntitySequence::unboxed(&tape, v, Segment::Decoder).unwrap();
    let mut ctx = Ctx::new(&mut tape, &store);
    let out = mmte.forward(&mut ctx, &seq).unwrap();
    assert!(tape.value(out.features).data().iter().all(|v| v.is_finite()));
}

#[test]
fn layers_pass_grad_check() {
    let cfg = small_cfg(8);
    let mut store = ParamStore::new();
    let mut init = Initializer::new(30);
    let sra = SraLayer::new(&mut store, &mut init, "sra", &cfg).unwrap();
    let pra = PraLayer::new(&mut store, &mut init, "pra", &cfg).unwrap();
    let mmte = MmteLayer::new(&mut store, &mut init, "mmte", &cfg).unwrap();
    let ga = AttentionBlock::new(&mut store, &mut init, "ga", &cfg, 2).unwrap();
    let assign = HeadRelationAssignment::new(4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let adj = random_adjacency(&mut rng, 5);
    let mut tape = Tape::new();
    let (seq, _) = pra_sequence(&mut tape, &mut rng, 8);
    let readout = random_tensor(&mut rng, seq.len(), 8);
    let guide = random_tensor(&mut rng, 3, 8);

    let x_sg = random_tensor(&mut rng, 5, 8);
    let err = grad_check(
        |tape, x| {
            let b = BoundingBox::new(0.1, 0.1, 0.2, 0.2).unwrap();
            let s = EntitySequence::new(tape, x, vec![Segment::SgAttribute; 5], vec![Some(b); 5])?;
            let mut ctx = Ctx::new(tape, &store);
            let out = sra.forward(&mut ctx, &s, &adj, &assign)?;
            let r = ctx.tape.constant(readout.clone().reshaped(vec![11, 8])?);
            let r = ctx.tape.narrow(r, 0, 0, 5)?;
            let p = ctx.tape.mul(out.features, r)?;
            Ok(ctx.tape.sum(p))
        },
        &x_sg,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "sra {err}");

    let x = tape.value(seq.features).clone();
    let err = grad_check(
        |tape, x| {
            let s = seq.with_features(x);
            let mut ctx = Ctx::new(tape, &store);
            let a = pra.forward(&mut ctx, &s, &assign, 0.5)?;
            let g = ctx.tape.constant(guide.clone());
            let a = ga.forward(&mut ctx, a.features, g, &AttentionBias::zeros(2, 11, 3))?;
            let b = mmte.forward(&mut ctx, &s.with_features(a))?;
            let r = ctx.tape.constant(readout.clone());
            let p = ctx.tape.mul(b.features, r)?;
            Ok(ctx.tape.sum(p))
        },
        &x,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "pra/ga/mmte {err}");
}

#[test]
fn entity_sequence_checks_boxes_and_lengths() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::zeros(&[2, 3]));
    let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    assert!(EntitySequence::new(&tape, v, vec![Segment::Question], vec![None]).is_err());
    assert!(EntitySequence::new(&tape, v, vec![Segment::Question, Segment::Ocr], vec![None, None]).is_err());
    assert!(EntitySequence::new(&tape, v, vec![Segment::Question, Segment::Ocr], vec![Some(b), Some(b)]).is_err());
    let a = EntitySequence::new(&tape, v, vec![Segment::Question, Segment::Ocr], vec![None, Some(b)]).unwrap();
    let joined = EntitySequence::concat(&mut tape, &[&a, &a]).unwrap();
    assert_eq!(joined.len(), 4);
    assert_eq!(joined.segments()[3], Segment::Ocr);
    let tail = joined.narrow(&mut tape, 1, 2).unwrap();
    assert_eq!(tail.segments(), &[Segment::Ocr, Segment::Question]);
}

#[test]
fn stack_config_validation() {
    assert!(LayerStackConfig::default().validate().is_ok());
    let bad = LayerStackConfig {
        heads_sra: 5,
        d_model: 10,
        heads_sa_ga_mmte: 2,
        heads_pra: 2,
        ..LayerStackConfig::default()
    };
    match bad.validate() {
        Err(crate::Error::Config { key, .. }) => assert_eq!(key, "heads_sra"),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sra_support_on_random_graphs(n in 1usize..9, seed in 0u64..1000) {
        let (store, layer, x, adj) = sra_fixture(n, seed);
        let assign = HeadRelationAssignment::new(4, 3).unwrap();
        let mut tape = Tape::new();
        let seq = sg_sequence(&mut tape, &x);
        let mut ctx = Ctx::new(&mut tape, &store).with_trace();
        layer.forward(&mut ctx, &seq, &adj, &assign).unwrap();
        for rec in ctx.take_trace() {
            for u in 0..n {
                let s: f64 = rec.weights.row(u).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                for v in 0..n {
                    let permitted = u == v || assign.permits(rec.head, adj.get(u, v));
                    prop_assert_eq!(rec.weights.at(u, v) > 0.0, permitted);
                }
            }
        }
    }
}
