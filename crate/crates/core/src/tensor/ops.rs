use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::Tensor;

/// Finite stand-in for a `-inf` attention bias.
pub const MASK_SENTINEL: f64 = -1e9;

/// Bias values at or below this are treated as masked.
const MASKED_BELOW: f64 = MASK_SENTINEL / 2.0;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `c[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// outer/inner strides of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

impl Tape {
    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.val(a).data(), self.val(b).data(), m, k, n);
        Ok(self.record(Tensor::raw(vec![m, n], out), Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.val(a), self.val(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::raw(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |x, y| x + y);
        Ok(self.record(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |x, y| x - y);
        Ok(self.record(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |x, y| x * y);
        Ok(self.record(t, Op::Mul(a, b)))
    }

    /// Adds a `[cols]` vector to every trailing-axis row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.val(x).cols();
        if self.val(bias).numel() != cols {
            return Err(shape_err("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.val(bias).data();
        let data = self
            .val(x)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let t = Tensor::raw(self.shape(x).to_vec(), data);
        Ok(self.record(t, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.val(x).map(|v| v * s);
        self.record(t, Op::Scale(x, s))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::contract(format!("transpose needs a matrix, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let t = Tensor::raw(vec![c, r], transpose_raw(self.val(x).data(), r, c));
        Ok(self.record(t, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.val(x).reshaped(shape)?;
        Ok(self.record(t, Op::Reshape(x)))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::contract(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(shape_err("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.val(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.record(
            Tensor::raw(shape, data),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::contract(format!(
                "narrow({axis}, {start}, {len}) out of range for {s:?}"
            )));
        }
        let (outer, inner) = split_axis(&s, axis);
        let src = self.val(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * s[axis] * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        Ok(self.record(Tensor::raw(shape, data), Op::Narrow { x, axis, start }))
    }

    /// Selects rows of a matrix; used both for embedding lookup and row selection.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::contract(format!("gather_rows needs a matrix, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        if indices.is_empty() {
            return Err(Error::contract("gather_rows with no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::contract(format!("row index {bad} out of range for {rows} rows")));
        }
        let src = self.val(table).data();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        Ok(self.record(
            Tensor::raw(vec![indices.len(), cols], data),
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.gather_rows(table, ids)
    }

    /// Row-wise `softmax(logits + bias)` over the trailing axis.
    ///
    /// Cells whose bias is the mask sentinel come out exactly zero. A row
    /// with every cell masked is an error.
    pub fn softmax_biased(&mut self, logits: Var, bias: &Tensor) -> Result<Var> {
        let x = self.val(logits);
        if x.shape() != bias.shape() {
            return Err(shape_err("softmax_biased", x.shape(), bias.shape()));
        }
        let cols = x.cols();
        let mut out = vec![0.0; x.numel()];
        for (r, ((row, brow), orow)) in x
            .data()
            .chunks(cols)
            .zip(bias.data().chunks(cols))
            .zip(out.chunks_mut(cols))
            .enumerate()
        {
            let max = row
                .iter()
                .zip(brow)
                .filter(|(_, &b)| b > MASKED_BELOW)
                .map(|(&l, &b)| l + b)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::FullyMasked { row: r });
            }
            let mut sum = 0.0;
            for ((o, &l), &b) in orow.iter_mut().zip(row).zip(brow) {
                if b > MASKED_BELOW {
                    *o = (l + b - max).exp();
                    sum += *o;
                }
            }
            orow.iter_mut().for_each(|o| *o /= sum);
        }
        let t = Tensor::raw(x.shape().to_vec(), out);
        Ok(self.record(t, Op::SoftmaxBiased(logits)))
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let zeros = Tensor::zeros(self.shape(logits));
        self.softmax_biased(logits, &zeros)
    }

    /// Normalizes each trailing-axis row, then scales by `gamma` and shifts by `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let d = self.val(x).cols();
        if self.val(gamma).numel() != d || self.val(beta).numel() != d {
            return Err(shape_err("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let (g, b) = (self.val(gamma).data(), self.val(beta).data());
        let xs = self.val(x);
        let mut xhat = Vec::with_capacity(xs.numel());
        let mut inv_std = Vec::with_capacity(xs.rows());
        let mut out = Vec::with_capacity(xs.numel());
        for row in xs.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let t = Tensor::raw(xs.shape().to_vec(), out);
        Ok(self.record(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// `x · w + b` with `x` of shape `[..., in]`, `w` `[in, out]`, `b` `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() == 2 {
            let y = self.matmul(x, w)?;
            return self.add_bias(y, b);
        }
        let last = *s.last().unwrap();
        let flat = self.reshape(x, vec![s.iter().product::<usize>() / last, last])?;
        let y = self.matmul(flat, w)?;
        let y = self.add_bias(y, b)?;
        let mut out_shape = s;
        *out_shape.last_mut().unwrap() = self.shape(y)[1];
        self.reshape(y, out_shape)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.val(x).map(gelu);
        self.record(t, Op::Gelu(x))
    }

    /// Inverted dropout with a mask drawn from a ChaCha8 stream seeded by `seed`.
    /// Returns `x` itself when `rate == 0`.
    pub fn dropout_det(&mut self, x: Var, rate: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let scale: Vec<f64> = (0..self.val(x).numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.val(x);
        let data = src.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let t = Tensor::raw(src.shape().to_vec(), data);
        Ok(self.record(t, Op::Dropout { x, scale }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.val(x).data().iter().sum();
        self.record(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.record(Tensor::scalar(s), Op::Mean(x))
    }

    /// Mean over rows of `-log softmax(logits)[row, target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.val(logits);
        if x.rows() != targets.len() {
            return Err(shape_err("cross_entropy", x.shape(), &[targets.len()]));
        }
        let cols = x.cols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::contract(format!("target {bad} out of range for {cols} classes")));
        }
        let mut probs = Vec::with_capacity(x.numel());
        let mut total = 0.0;
        for (row, &t) in x.data().chunks(cols).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[t];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let loss = total / targets.len() as f64;
        Ok(self.record(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub(crate) fn backward_op(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.requires_grad(*a) {
                    let bt = transpose_raw(tb.data(), k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    self.accumulate(adj, *a, |s| add_into(s, &da));
                }
                if self.requires_grad(*b) {
                    let at = transpose_raw(ta.data(), m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    self.accumulate(adj, *b, |s| add_into(s, &db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |s| add_into(s, g));
                self.accumulate(adj, *b, |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |s| add_into(s, g));
                self.accumulate(adj, *b, |s| s.iter_mut().zip(g).for_each(|(x, d)| *x -= d));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.val(*a).data(), self.val(*b).data());
                self.accumulate(adj, *a, |s| {
                    s.iter_mut().zip(g.iter().zip(tb)).for_each(|(x, (d, y))| *x += d * y)
                });
                self.accumulate(adj, *b, |s| {
                    s.iter_mut().zip(g.iter().zip(ta)).for_each(|(x, (d, y))| *x += d * y)
                });
            }
            Op::AddBias(x, b) => {
                self.accumulate(adj, *x, |s| add_into(s, g));
                let cols = self.val(*b).numel();
                self.accumulate(adj, *b, |s| {
                    for row in g.chunks(cols) {
                        add_into(s, row);
                    }
                });
            }
            Op::Scale(x, c) => {
                self.accumulate(adj, *x, |s| s.iter_mut().zip(g).for_each(|(v, d)| *v += c * d));
            }
            Op::Transpose(x) => {
                let s = node.value.shape();
                let gt = transpose_raw(g, s[0], s[1]);
                self.accumulate(adj, *x, |acc| add_into(acc, &gt));
            }
            Op::Reshape(x) => self.accumulate(adj, *x, |s| add_into(s, g)),
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let (outer, inner) = split_axis(shape, *axis);
                let total = shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let ext = self.shape(p)[*axis];
                    self.accumulate(adj, p, |s| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + ext) * inner];
                            add_into(&mut s[o * ext * inner..(o + 1) * ext * inner], src);
                        }
                    });
                    offset += ext;
                }
            }
            Op::Narrow { x, axis, start } => {
                let src_shape = self.shape(*x);
                let (outer, inner) = split_axis(src_shape, *axis);
                let (full, len) = (src_shape[*axis], node.value.shape()[*axis]);
                self.accumulate(adj, *x, |s| {
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        add_into(&mut s[dst..dst + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                    }
                });
            }
            Op::GatherRows { table, indices } => {
                let cols = self.val(*table).cols();
                self.accumulate(adj, *table, |s| {
                    for (r, &idx) in indices.iter().enumerate() {
                        add_into(&mut s[idx * cols..(idx + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::SoftmaxBiased(x) => {
                let y = node.value.data();
                let cols = node.value.cols();
                self.accumulate(adj, *x, |s| {
                    for ((srow, yrow), grow) in s.chunks_mut(cols).zip(y.chunks(cols)).zip(g.chunks(cols)) {
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for ((sv, &yv), &gv) in srow.iter_mut().zip(yrow).zip(grow) {
                            *sv += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = node.value.cols();
                let gam = self.val(*gamma).data();
                self.accumulate(adj, *x, |s| {
                    for (r, (srow, grow)) in s.chunks_mut(d).zip(g.chunks(d)).enumerate() {
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<f64> = grow.iter().zip(gam).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hrow).map(|(a, b)| a * b).sum();
                        let k = inv_std[r] / d as f64;
                        for ((sv, &dhv), &hv) in srow.iter_mut().zip(&dh).zip(hrow) {
                            *sv += k * (d as f64 * dhv - sum_dh - hv * sum_dh_h);
                        }
                    }
                });
                self.accumulate(adj, *gamma, |s| {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        s.iter_mut().zip(grow.iter().zip(hrow)).for_each(|(v, (a, b))| *v += a * b);
                    }
                });
                self.accumulate(adj, *beta, |s| {
                    for grow in g.chunks(d) {
                        add_into(s, grow);
                    }
                });
            }
            Op::Gelu(x) => {
                let xs = self.val(*x).data();
                self.accumulate(adj, *x, |s| {
                    s.iter_mut().zip(g.iter().zip(xs)).for_each(|(v, (d, &xv))| *v += d * gelu_grad(xv))
                });
            }
            Op::Dropout { x, scale } => {
                self.accumulate(adj, *x, |s| {
                    s.iter_mut().zip(g.iter().zip(scale)).for_each(|(v, (d, k))| *v += d * k)
                });
            }
            Op::Sum(x) => self.accumulate(adj, *x, |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let n = self.val(*x).numel() as f64;
                self.accumulate(adj, *x, |s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let cols = self.val(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                self.accumulate(adj, *logits, |s| {
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut s[r * cols..(r + 1) * cols];
                        for (j, v) in row.iter_mut().enumerate() {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            *v += scale * (probs[r * cols + j] - onehot);
                        }
                    }
                });
            }
        }
    }
}

fn add_into(acc: &mut [f64], delta: &[f64]) {
    acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d);
}
