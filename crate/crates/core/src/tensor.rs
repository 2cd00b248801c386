//! Dense row-major `f64` tensors.
//!
//! These are plain values: every operation here allocates its result and never
//! records anything. Differentiation lives in [`crate::autograd`], which calls
//! into these kernels for both the forward values and the local gradients.
//!
//! Binary operations broadcast only along axes of extent 1 and require equal
//! rank; there is no implicit rank promotion.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Splits `shape` around `axis` into (outer, extent, inner) block sizes.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl Tensor {
    /// Builds a tensor, checking extents, length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for kernels whose output shape is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    /// A `1 × n` row vector.
    pub fn row(values: &[f64]) -> Self {
        Self::from_parts(vec![1, values.len()], values.to_vec())
    }

    /// A matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidTensor("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform samples in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::from_parts(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Leading extent of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent; for a rank-2 tensor, the column count.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Element of a rank-2 tensor.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::shape("item", &self.shape, &[1]))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn require_rank2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::shape(op, s, &[0, 0])),
        }
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_rank2("matmul")?;
        let (k2, n) = other.require_rank2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.require_rank2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    /// Output shape of broadcasting `a` against `b` along 1-extent axes.
    pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
        if a.len() != b.len() {
            return Err(Error::shape(op, a, b));
        }
        a.iter()
            .zip(b)
            .map(|(&x, &y)| match (x, y) {
                _ if x == y => Ok(x),
                (1, _) => Ok(y),
                (_, 1) => Ok(x),
                _ => Err(Error::shape(op, a, b)),
            })
            .collect()
    }

    /// Applies `f` pairwise with 1-extent broadcasting.
    pub fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Tensor::from_parts(self.shape.clone(), data));
        }
        let shape = Self::broadcast_shape(op, &self.shape, &other.shape)?;
        let out_strides = strides(&shape);
        let sa = broadcast_strides(&self.shape);
        let sb = broadcast_strides(&other.shape);
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for flat in 0..n {
            let (mut ia, mut ib, mut rem) = (0, 0, flat);
            for ax in 0..shape.len() {
                let idx = rem / out_strides[ax];
                rem %= out_strides[ax];
                ia += idx * sa[ax];
                ib += idx * sb[ax];
            }
            data.push(f(self.data[ia], other.data[ib]));
        }
        Ok(Tensor::from_parts(shape, data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    /// Sums a broadcast gradient back down to `shape`.
    pub fn sum_to_shape(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        if shape.len() != self.rank() {
            return Err(Error::shape("sum_to_shape", &self.shape, shape));
        }
        let mut out = self.clone();
        for (ax, &target) in shape.iter().enumerate() {
            if out.shape[ax] != target {
                if target != 1 {
                    return Err(Error::shape("sum_to_shape", &self.shape, shape));
                }
                out = out.sum_axis(ax)?;
            }
        }
        Ok(out)
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::shape("sum_axis", &self.shape, &[axis]));
        }
        let (outer, n, inner) = axis_blocks(&self.shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += self.data[base + i];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = 1;
        Ok(Tensor::from_parts(shape, out))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let n = *self
            .shape
            .get(axis)
            .ok_or_else(|| Error::shape("mean_axis", &self.shape, &[axis]))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / n as f64))
    }

    /// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::shape("softmax", &self.shape, &[axis]));
        }
        let (outer, n, inner) = axis_blocks(&self.shape, axis);
        let mut out = vec![0.0; self.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let max = (0..n)
                    .map(|k| self.data[idx(k)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..n {
                    let e = (self.data[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..n {
                    out[idx(k)] /= total;
                }
            }
        }
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
        if axis >= first.rank() {
            return Err(Error::shape("concat", &first.shape, &[axis]));
        }
        for p in &parts[1..] {
            let ok = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(ax, (a, b))| ax == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
        }
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let (outer, _, inner) = axis_blocks(&first.shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Tensor::from_parts(shape, data))
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || len == 0 || start + len > self.shape[axis] {
            return Err(Error::shape("narrow", &self.shape, &[axis, start, len]));
        }
        let (outer, n, inner) = axis_blocks(&self.shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor::from_parts(shape, data))
    }

    /// Inverse of [`Tensor::narrow`]: places `self` into zeros of extent `full` along `axis`.
    pub(crate) fn pad_narrowed(&self, axis: usize, start: usize, full: usize) -> Tensor {
        let (outer, len, inner) = axis_blocks(&self.shape, axis);
        let mut shape = self.shape.clone();
        shape[axis] = full;
        let mut data = vec![0.0; outer * full * inner];
        for o in 0..outer {
            let dst = (o * full + start) * inner;
            let src = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&self.data[src..src + len * inner]);
        }
        Tensor::from_parts(shape, data)
    }

    /// Inverted dropout: zero with probability `rate`, scale survivors by `1/(1-rate)`.
    /// Identity when `training` is false.
    pub fn dropout<R: Rng + ?Sized>(&self, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
        let mask = dropout_mask(self.shape(), rate, training, rng)?;
        match mask {
            Some(m) => self.mul(&m),
            None => Ok(self.clone()),
        }
    }

    /// Row-wise layer normalisation over the last axis, followed by an affine map.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        Ok(layer_norm_forward(self, gain, bias, eps)?.0)
    }
}

fn broadcast_strides(shape: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    shape
        .iter()
        .zip(s)
        .map(|(&d, st)| if d == 1 { 0 } else { st })
        .collect()
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Domain {
            op: "dropout",
            msg: format!("rate must lie in [0, 1), got {rate}"),
        })
    }
}

/// Scaled keep-mask for inverted dropout, or `None` when dropout is a no-op.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(
    shape: &[usize],
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Option<Tensor>> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok(Some(Tensor::from_parts(shape.to_vec(), data)))
}

/// Returns (output, normalised input, per-row inverse std).
pub(crate) fn layer_norm_forward(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor, Vec<f64>)> {
    if eps <= 0.0 {
        return Err(Error::Domain {
            op: "layer_norm",
            msg: format!("eps must be positive, got {eps}"),
        });
    }
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    }
    let rows = x.numel() / d;
    let mut xhat = vec![0.0; x.numel()];
    let mut out = vec![0.0; x.numel()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x.data()[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std.push(inv);
        for j in 0..d {
            let h = (row[j] - mean) * inv;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gain.data()[j] + bias.data()[j];
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), out),
        Tensor::from_parts(x.shape().to_vec(), xhat),
        inv_std,
    ))
}
