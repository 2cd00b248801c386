//! Personality and multimodal feature interaction: binary correlation
//! attention, triple interaction attention and a sigmoid gating regulator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::nn::{multi_head_attention, Linear};

/// Which side supplies the queries of the binary correlation attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcaDirection {
    /// Personality tokens attend over the audio and visual tokens.
    #[default]
    PersonalityQueries,
    /// Audio and visual tokens attend over the personality tokens.
    MultimodalQueries,
}

#[derive(Clone, Copy, Debug)]
pub struct QkvProjection {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl QkvProjection {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d_h: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            q: Linear::new(store, &format!("{prefix}.q"), d_h, d_h, false, rng)?,
            k: Linear::new(store, &format!("{prefix}.k"), d_h, d_h, false, rng)?,
            v: Linear::new(store, &format!("{prefix}.v"), d_h, d_h, false, rng)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PtmfimParams {
    pub d_h: usize,
    pub n_p: usize,
    pub n_heads: usize,
    pub direction: BcaDirection,
    /// Personality embedding to `n_p · d_h`.
    pub personality: Linear,
    /// Each fused token (`d_model`) to `d_h`.
    pub multimodal: Linear,
    pub bca: QkvProjection,
    pub tia: QkvProjection,
    /// `2·d_h → d_h` with bias.
    pub gate: Linear,
}

impl PtmfimParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        personality_dim: usize,
        d_model: usize,
        d_h: usize,
        n_p: usize,
        n_heads: usize,
        direction: BcaDirection,
        rng: &mut R,
    ) -> Result<Self> {
        if n_p == 0 || d_h == 0 || n_heads == 0 || !d_h.is_multiple_of(n_heads) {
            return Err(Error::invalid(format!(
                "need n_p >= 1 and d_h divisible by heads, got n_p {n_p} d_h {d_h} heads {n_heads}"
            )));
        }
        Ok(Self {
            d_h,
            n_p,
            n_heads,
            direction,
            personality: Linear::new(store, &format!("{prefix}.personality"), personality_dim, n_p * d_h, true, rng)?,
            multimodal: Linear::new(store, &format!("{prefix}.multimodal"), d_model, d_h, true, rng)?,
            bca: QkvProjection::new(store, &format!("{prefix}.bca"), d_h, rng)?,
            tia: QkvProjection::new(store, &format!("{prefix}.tia"), d_h, rng)?,
            gate: Linear::new(store, &format!("{prefix}.gate"), 2 * d_h, d_h, true, rng)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PtmfimOutput {
    /// `1 × d_h` classifier input.
    pub out: NodeId,
    /// `1 × d_h`, each strictly inside (0, 1).
    pub gate: NodeId,
    pub personality_tokens: NodeId,
    pub bca: NodeId,
    pub tia: NodeId,
    pub bca_attention: Vec<NodeId>,
    pub tia_attention: Vec<NodeId>,
}

/// Attention output together with its per-head weights.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub out: NodeId,
    pub weights: Vec<NodeId>,
}

fn project_attend(
    g: &mut Graph<'_>,
    queries: NodeId,
    keys: NodeId,
    proj: &QkvProjection,
    n_heads: usize,
) -> Result<AttentionBlock> {
    let q = proj.q.forward(g, queries)?;
    let k = proj.k.forward(g, keys)?;
    let v = proj.v.forward(g, keys)?;
    let a = multi_head_attention(g, q, k, v, n_heads)?;
    Ok(AttentionBlock {
        out: a.out,
        weights: a.weights,
    })
}

/// `B = softmax(Q Kᵀ/√d_h) V`. With the default direction `Q` comes from the
/// personality tokens and `K`, `V` from the multimodal tokens.
pub fn binary_correlation_attention(
    g: &mut Graph<'_>,
    p_tok: NodeId,
    m_tok: NodeId,
    params: &PtmfimParams,
) -> Result<AttentionBlock> {
    let (q, kv) = match params.direction {
        BcaDirection::PersonalityQueries => (p_tok, m_tok),
        BcaDirection::MultimodalQueries => (m_tok, p_tok),
    };
    project_attend(g, q, kv, &params.bca, params.n_heads)
}

/// Personality queries over the rows of `B`.
pub fn triple_interaction_attention(
    g: &mut Graph<'_>,
    p_tok: NodeId,
    b: NodeId,
    params: &PtmfimParams,
) -> Result<AttentionBlock> {
    project_attend(g, p_tok, b, &params.tia, params.n_heads)
}

/// `g = σ(W_g [mean B, mean T] + b_g)`, returns `(g ⊙ mean T + p_pooled, g)`.
pub fn gate_regulator(
    g: &mut Graph<'_>,
    b: NodeId,
    t_out: NodeId,
    p_pooled: NodeId,
    params: &PtmfimParams,
) -> Result<(NodeId, NodeId)> {
    let b_bar = g.mean_axis(b, 0)?;
    let t_bar = g.mean_axis(t_out, 0)?;
    let both = g.concat(&[b_bar, t_bar], 1)?;
    let z = params.gate.forward(g, both)?;
    let gate = g.sigmoid(z)?;
    let gated = g.mul(gate, t_bar)?;
    let out = g.add(gated, p_pooled)?;
    Ok((out, gate))
}

/// `personality` is a `1 × d_p` embedding, `tokens` the `2 × d_model` fused
/// token matrix.
pub fn ptmfim_forward(
    g: &mut Graph<'_>,
    personality: NodeId,
    tokens: NodeId,
    params: &PtmfimParams,
) -> Result<PtmfimOutput> {
    let flat = params.personality.forward(g, personality)?;
    let p_tok = g.reshape(flat, &[params.n_p, params.d_h])?;
    let m_tok = params.multimodal.forward(g, tokens)?;
    let bca = binary_correlation_attention(g, p_tok, m_tok, params)?;
    let tia = triple_interaction_attention(g, p_tok, bca.out, params)?;
    let p_pooled = g.mean_axis(p_tok, 0)?;
    let (out, gate) = gate_regulator(g, bca.out, tia.out, p_pooled, params)?;
    Ok(PtmfimOutput {
        out,
        gate,
        personality_tokens: p_tok,
        bca: bca.out,
        tia: tia.out,
        bca_attention: bca.weights,
        tia_attention: tia.weights,
    })
}
