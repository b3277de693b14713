use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var, MASK_SENTINEL};

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::raw(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn eval_scalar<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = f(&mut tape, xv)?;
    tape.value(out).item()
}

/// Maximum relative error between the tape gradient of `f` at `x` and central
/// differences with step `h`, over every entry of `x`.
///
/// The error per entry is `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_entries(f, x, h, &all)
}

/// [`grad_check`] restricted to the listed flat indices of `x`.
pub fn grad_check_entries<F>(f: F, x: &Tensor, h: f64, entries: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::contract(format!("grad_check step {h} outside (0, 1e-2]")));
    }
    let first = eval_scalar(&f, x)?;
    let second = eval_scalar(&f, x)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape.grad(xv).unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut worst: f64 = 0.0;
    for &i in entries {
        let v = x.data()[i];
        let plus = eval_scalar(&f, &x.with_entry(i, v + h))?;
        let minus = eval_scalar(&f, &x.with_entry(i, v - h))?;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

/// Every differentiable op, checked one at a time against central differences
/// with step `1e-3` on `m × k` inputs (`k × n` for the right matmul operand).
pub fn op_suite(dims: (usize, usize, usize), seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let (m, k, n) = dims;
    let x = random(&[m, k], seed);
    let other = random(&[m, k], seed + 1);
    let right = random(&[k, n], seed + 2);
    let vec_k = random(&[k], seed + 3);
    let weights = random(&[m, k], seed + 4);
    let h = 1e-3;
    let weigh = move |t: &mut Tape, y: Var| -> Result<Var> {
        let s = t.shape(y).to_vec();
        let w = t.constant(random(&s, seed + 99));
        let p = t.mul(y, w)?;
        Ok(t.sum(p))
    };
    let mut out = vec![];
    let mut failure = None;
    let mut check = |name, f: &dyn Fn(&mut Tape, Var) -> Result<Var>| match grad_check(f, &x, h) {
        Ok(e) => out.push((name, e)),
        Err(e) => {
            failure.get_or_insert(e);
        }
    };
    check("matmul", &|t, x| {
        let r = t.constant(right.clone());
        let y = t.matmul(x, r)?;
        weigh(t, y)
    });
    check("matmul_rhs", &|t, x| {
        let l = t.constant(random(&[n, m], seed + 5));
        let y = t.matmul(l, x)?;
        weigh(t, y)
    });
    check("add", &|t, x| {
        let o = t.constant(other.clone());
        let y = t.add(x, o)?;
        weigh(t, y)
    });
    check("sub", &|t, x| {
        let o = t.constant(other.clone());
        let y = t.sub(o, x)?;
        weigh(t, y)
    });
    check("mul", &|t, x| {
        let y = t.mul(x, x)?;
        weigh(t, y)
    });
    check("add_bias", &|t, x| {
        let b = t.constant(vec_k.clone());
        let y = t.add_bias(x, b)?;
        weigh(t, y)
    });
    check("scale", &|t, x| {
        let y = t.scale(x, -1.7);
        weigh(t, y)
    });
    check("transpose", &|t, x| {
        let y = t.transpose(x)?;
        weigh(t, y)
    });
    check("reshape", &|t, x| {
        let y = t.reshape(x, vec![m * k])?;
        weigh(t, y)
    });
    check("concat", &|t, x| {
        let o = t.constant(other.clone());
        let y = t.concat(&[o, x, x], 1)?;
        weigh(t, y)
    });
    check("narrow", &|t, x| {
        let y = t.narrow(x, 1, k / 2, k - k / 2)?;
        weigh(t, y)
    });
    check("gather_rows", &|t, x| {
        let y = t.gather_rows(x, &[m - 1, 0, m - 1])?;
        weigh(t, y)
    });
    check("softmax_biased", &|t, x| {
        let mut bias = vec![0.0; m * k];
        for r in 0..m {
            for c in 0..k {
                if (r + c) % 3 == 1 {
                    bias[r * k + c] = MASK_SENTINEL;
                }
            }
        }
        let y = t.softmax_biased(x, &Tensor::raw(vec![m, k], bias))?;
        weigh(t, y)
    });
    check("layer_norm", &|t, x| {
        // Central differences lose accuracy on near-constant rows, so spread them out.
        let ramp = Tensor::raw(vec![m, k], (0..m * k).map(|i| 3.0 * (i % k) as f64).collect());
        let ramp = t.constant(ramp);
        let x = t.add(x, ramp)?;
        let g = t.constant(vec_k.clone());
        let b = t.constant(vec_k.map(|v| v * 0.5));
        let y = t.layer_norm(x, g, b, 1e-5)?;
        weigh(t, y)
    });
    check("layer_norm_gamma", &|t, x| {
        let xs = t.constant(weights.clone());
        let g = t.narrow(x, 0, 0, 1)?;
        let g = t.reshape(g, vec![k])?;
        let b = t.constant(vec_k.clone());
        let y = t.layer_norm(xs, g, b, 1e-5)?;
        weigh(t, y)
    });
    check("linear", &|t, x| {
        let w = t.constant(right.clone());
        let b = t.constant(random(&[n], seed + 6));
        let y = t.linear(x, w, b)?;
        weigh(t, y)
    });
    check("gelu", &|t, x| {
        let y = t.gelu(x);
        weigh(t, y)
    });
    check("dropout_det", &|t, x| {
        let y = t.dropout_det(x, 0.25, seed)?;
        weigh(t, y)
    });
    check("mean", &|t, x| {
        let y = t.mul(x, x)?;
        Ok(t.mean(y))
    });
    check("cross_entropy", &|t, x| {
        let targets: Vec<usize> = (0..m).map(|r| (r * 7 + 1) % k).collect();
        t.cross_entropy(x, &targets)
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

