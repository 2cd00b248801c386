//! Building blocks shared by the encoders, fusion and interaction modules.

use rand::Rng;

use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Registers a `shape` tensor drawn uniformly from `[-bound, bound]`.
pub(crate) fn add_uniform<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: String,
    shape: &[usize],
    bound: f64,
    rng: &mut R,
) -> Result<ParamId> {
    store.add(name, Tensor::uniform(shape, bound, rng))
}

/// `y = x W + b` with `W: in × out` and a `1 × out` bias row.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights uniform in `±1/√in`, bias zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!("{prefix}: linear dims must be positive")));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = add_uniform(store, format!("{prefix}.weight"), &[in_dim, out_dim], bound, rng)?;
        let bias = if bias {
            Some(store.add(format!("{prefix}.bias"), Tensor::zeros(&[1, out_dim]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Result of one attention call. `weights` holds one row-stochastic
/// `n_q × n_k` matrix per head.
#[derive(Clone, Debug)]
pub struct Attended {
    pub out: NodeId,
    pub weights: Vec<NodeId>,
}

/// Scaled dot-product attention, split into `n_heads` column blocks of the
/// already projected `q`, `k`, `v`.
pub fn multi_head_attention(
    g: &mut Graph<'_>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    n_heads: usize,
) -> Result<Attended> {
    let (qs, ks, vs) = (g.shape(q).to_vec(), g.shape(k).to_vec(), g.shape(v).to_vec());
    if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
        return Err(Error::shape("attention", &qs, &ks));
    }
    let d = qs[1];
    if n_heads == 0 || d % n_heads != 0 || vs[1] % n_heads != 0 {
        return Err(Error::invalid(format!(
            "attention width {d} (values {}) not divisible by {n_heads} heads",
            vs[1]
        )));
    }
    let (dh, dv) = (d / n_heads, vs[1] / n_heads);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (
                g.narrow(q, 1, h * dh, dh)?,
                g.narrow(k, 1, h * dh, dh)?,
                g.narrow(v, 1, h * dv, dv)?,
            )
        };
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale)?;
        let a = g.softmax(scores, 1)?;
        heads.push(g.matmul(a, vh)?);
        weights.push(a);
    }
    let out = if n_heads == 1 { heads[0] } else { g.concat(&heads, 1)? };
    Ok(Attended { out, weights })
}
