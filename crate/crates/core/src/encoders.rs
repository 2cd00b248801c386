//! Frame-level LSTM encoder and attentive statistics pooling.

use rand::Rng;

use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::nn::add_uniform;
use crate::tensor::Tensor;

/// Single-layer unidirectional LSTM.
///
/// The four gates are stored stacked along columns in the order
/// `(input, forget, output, candidate)`: `w` is `D × 4H`, `u` is `H × 4H` and
/// `b` is `1 × 4H`, so gate `k` occupies columns `kH..(k+1)H`.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    /// Weights uniform in `±1/√H`; forget bias 1, other biases 0.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::invalid(format!("{prefix}: LSTM dims must be positive")));
        }
        let h = hidden_dim;
        let bound = 1.0 / (h as f64).sqrt();
        let w = add_uniform(store, format!("{prefix}.w"), &[input_dim, 4 * h], bound, rng)?;
        let u = add_uniform(store, format!("{prefix}.u"), &[h, 4 * h], bound, rng)?;
        let mut bias = vec![0.0; 4 * h];
        bias[h..2 * h].fill(1.0);
        let b = store.add(format!("{prefix}.b"), Tensor::row(&bias))?;
        Ok(Self {
            w,
            u,
            b,
            input_dim,
            hidden_dim,
        })
    }
}

/// Runs the recurrence over the rows of `x` (`T × D`) from zero state and
/// returns every hidden state as a `T × H` node.
pub fn lstm_encode(g: &mut Graph<'_>, x: NodeId, p: &LstmParams) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 2 || xs[1] != p.input_dim {
        return Err(Error::shape("lstm_encode", &xs, &[xs.first().copied().unwrap_or(0), p.input_dim]));
    }
    let h = p.hidden_dim;
    let (w, u, b) = (g.param(p.w), g.param(p.u), g.param(p.b));
    let xw = g.matmul(x, w)?;
    let pre = g.add(xw, b)?;
    let mut hidden: Option<NodeId> = None;
    let mut cell: Option<NodeId> = None;
    let mut outputs = Vec::with_capacity(xs[0]);
    for t in 0..xs[0] {
        let mut z = g.row(pre, t)?;
        if let Some(hp) = hidden {
            let hu = g.matmul(hp, u)?;
            z = g.add(z, hu)?;
        }
        let gates = g.narrow(z, 1, 0, 3 * h)?;
        let gates = g.sigmoid(gates)?;
        let i = g.narrow(gates, 1, 0, h)?;
        let f = g.narrow(gates, 1, h, h)?;
        let o = g.narrow(gates, 1, 2 * h, h)?;
        let cand = g.narrow(z, 1, 3 * h, h)?;
        let cand = g.tanh(cand)?;
        let mut c = g.mul(i, cand)?;
        if let Some(cp) = cell {
            let keep = g.mul(f, cp)?;
            c = g.add(c, keep)?;
        }
        let tc = g.tanh(c)?;
        let ht = g.mul(o, tc)?;
        outputs.push(ht);
        hidden = Some(ht);
        cell = Some(c);
    }
    g.concat(&outputs, 0)
}

/// Attentive statistics pooling: `e_t = vᵀ tanh(W h_t + b)`, `α = softmax(e)`,
/// output `[μ, sqrt(max(Σ α h⊙h − μ⊙μ, 0) + eps)]`.
#[derive(Clone, Debug)]
pub struct AspParams {
    /// `H × A`
    pub w: ParamId,
    /// `1 × A`
    pub b: ParamId,
    /// `A × 1`
    pub v: ParamId,
    pub eps: f64,
    pub hidden_dim: usize,
}

impl AspParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        hidden_dim: usize,
        attn_dim: usize,
        eps: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::invalid(format!("{prefix}: ASP eps must be positive, got {eps}")));
        }
        if hidden_dim == 0 || attn_dim == 0 {
            return Err(Error::invalid(format!("{prefix}: ASP dims must be positive")));
        }
        let w = add_uniform(
            store,
            format!("{prefix}.w"),
            &[hidden_dim, attn_dim],
            1.0 / (hidden_dim as f64).sqrt(),
            rng,
        )?;
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[1, attn_dim]))?;
        let v = add_uniform(store, format!("{prefix}.v"), &[attn_dim, 1], 1.0 / (attn_dim as f64).sqrt(), rng)?;
        Ok(Self {
            w,
            b,
            v,
            eps,
            hidden_dim,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    /// `1 × 2H`: mean then standard deviation.
    pub out: NodeId,
    /// `T × 1` frame weights.
    pub weights: NodeId,
}

pub fn asp_pool(g: &mut Graph<'_>, h: NodeId, p: &AspParams) -> Result<Pooled> {
    let hs = g.shape(h).to_vec();
    if hs.len() != 2 || hs[1] != p.hidden_dim || hs[0] == 0 {
        return Err(Error::shape("asp_pool", &hs, &[1, p.hidden_dim]));
    }
    let (w, b, v) = (g.param(p.w), g.param(p.b), g.param(p.v));
    let proj = g.matmul(h, w)?;
    let proj = g.add(proj, b)?;
    let proj = g.tanh(proj)?;
    let scores = g.matmul(proj, v)?;
    let alpha = g.softmax(scores, 0)?;
    let at = g.transpose(alpha)?;
    let mu = g.matmul(at, h)?;
    let hh = g.square(h)?;
    let second = g.matmul(at, hh)?;
    let mu2 = g.square(mu)?;
    let var = g.sub(second, mu2)?;
    let var = g.relu(var)?;
    let floor = g.constant(Tensor::full(&[1, p.hidden_dim], p.eps));
    let var = g.add(var, floor)?;
    let sd = g.sqrt(var)?;
    let out = g.concat(&[mu, sd], 1)?;
    Ok(Pooled { out, weights: alpha })
}
