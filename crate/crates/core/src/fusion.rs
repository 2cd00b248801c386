//! Audio co-attention, visual concatenation and the two-token transformer
//! that produces the fused representation `f*`.

use rand::Rng;

use crate::autograd::{Graph, NodeId, ParamId, ParamStore};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::{add_uniform, multi_head_attention, Linear};
use crate::tensor::Tensor;

/// Nearest-frame resampling of `m` to `t` rows. Output row `i` copies source
/// row `floor((i + 0.5) · T / t)`.
pub fn resample_frames(m: &FeatureMatrix, t: usize) -> Result<FeatureMatrix> {
    if t == 0 {
        return Err(Error::invalid("cannot resample to zero frames"));
    }
    if t == m.rows() {
        return Ok(m.clone());
    }
    let src = m.rows();
    let rows: Vec<usize> = (0..t)
        .map(|i| (((2 * i + 1) * src) / (2 * t)).min(src - 1))
        .collect();
    m.select_rows(&rows)
}

/// Resamples every stream of a bundle to the bundle's shortest length.
pub fn align_streams(streams: &[&FeatureMatrix]) -> Result<Vec<FeatureMatrix>> {
    let t = streams
        .iter()
        .map(|m| m.rows())
        .min()
        .ok_or_else(|| Error::invalid("no streams to align"))?;
    streams.iter().map(|m| resample_frames(m, t)).collect()
}

fn check_frames(g: &Graph<'_>, named: &[(&str, NodeId)], op: &str) -> Result<()> {
    let t0 = g.shape(named[0].1)[0];
    for &(name, n) in &named[1..] {
        let t = g.shape(n)[0];
        if t != t0 {
            return Err(Error::invalid(format!(
                "{op}: stream {name} has {t} frames but {} has {t0}",
                named[0].0
            )));
        }
    }
    Ok(())
}

/// Frame-wise concatenation in the order openface, resnet, densenet.
pub fn visual_concat(
    g: &mut Graph<'_>,
    openface: NodeId,
    resnet: NodeId,
    densenet: NodeId,
) -> Result<NodeId> {
    check_frames(
        g,
        &[("openface", openface), ("resnet", resnet), ("densenet", densenet)],
        "visual_concat",
    )?;
    g.concat(&[openface, resnet, densenet], 1)
}

#[derive(Clone, Debug)]
pub struct CoAttentionParams {
    pub lld: Linear,
    pub mfcc: Linear,
    pub w2v: Linear,
    /// `(d_lld' + d_mfcc') × d_w2v'`
    pub p: ParamId,
    pub dropout: f64,
    /// Squash `P·c` through a sigmoid before weighting.
    pub sigmoid: bool,
}

impl CoAttentionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dims: (usize, usize, usize),
        out_dims: (usize, usize, usize),
        dropout: f64,
        sigmoid: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let lld = Linear::new(store, &format!("{prefix}.lld"), in_dims.0, out_dims.0, true, rng)?;
        let mfcc = Linear::new(store, &format!("{prefix}.mfcc"), in_dims.1, out_dims.1, true, rng)?;
        let w2v = Linear::new(store, &format!("{prefix}.w2v"), in_dims.2, out_dims.2, true, rng)?;
        let c = out_dims.0 + out_dims.1;
        let p = add_uniform(store, format!("{prefix}.p"), &[c, out_dims.2], 1.0 / (c as f64).sqrt(), rng)?;
        Ok(Self {
            lld,
            mfcc,
            w2v,
            p,
            dropout,
            sigmoid,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.lld.out_dim + self.mfcc.out_dim + self.w2v.out_dim
    }
}

/// `x' = ReLU(Dropout(Linear(x)))` for one stream.
pub fn transform_stream(g: &mut Graph<'_>, x: NodeId, lin: &Linear, dropout: f64) -> Result<NodeId> {
    let y = lin.forward(g, x)?;
    let y = g.dropout(y, dropout)?;
    g.relu(y)
}

/// Output `[(P·[lld', mfcc']) ⊙ w2v', lld', mfcc']` per frame.
pub fn co_attention_fuse(
    g: &mut Graph<'_>,
    lld: NodeId,
    mfcc: NodeId,
    w2v: NodeId,
    p: &CoAttentionParams,
) -> Result<NodeId> {
    check_frames(g, &[("lld", lld), ("mfcc", mfcc), ("wav2vec", w2v)], "co_attention_fuse")?;
    let l = transform_stream(g, lld, &p.lld, p.dropout)?;
    let m = transform_stream(g, mfcc, &p.mfcc, p.dropout)?;
    let w = transform_stream(g, w2v, &p.w2v, p.dropout)?;
    let c = g.concat(&[l, m], 1)?;
    let pm = g.param(p.p);
    let mut weight = g.matmul(c, pm)?;
    if p.sigmoid {
        weight = g.sigmoid(weight)?;
    }
    let weighted = g.mul(weight, w)?;
    g.concat(&[weighted, l, m], 1)
}

/// Ablation path: the three transformed streams concatenated without weighting.
pub fn plain_audio_concat(
    g: &mut Graph<'_>,
    lld: NodeId,
    mfcc: NodeId,
    w2v: NodeId,
    p: &CoAttentionParams,
) -> Result<NodeId> {
    check_frames(g, &[("lld", lld), ("mfcc", mfcc), ("wav2vec", w2v)], "plain_audio_concat")?;
    let l = transform_stream(g, lld, &p.lld, p.dropout)?;
    let m = transform_stream(g, mfcc, &p.mfcc, p.dropout)?;
    let w = transform_stream(g, w2v, &p.w2v, p.dropout)?;
    g.concat(&[w, l, m], 1)
}

#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: store.add(format!("{prefix}.gain"), Tensor::ones(&[1, dim]))?,
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[1, dim]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm1: LayerNormParams,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub norm2: LayerNormParams,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Clone, Debug)]
pub struct TransformerFusionParams {
    pub d_model: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub proj_audio: Linear,
    pub proj_visual: Linear,
    /// `1 × d_model` each.
    pub m_audio: ParamId,
    pub m_visual: ParamId,
    pub layers: Vec<EncoderLayer>,
}

impl TransformerFusionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        audio_dim: usize,
        visual_dim: usize,
        d_model: usize,
        n_layers: usize,
        n_heads: usize,
        ffn_dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::invalid(format!(
                "d_model {d_model} must be divisible by n_heads {n_heads}"
            )));
        }
        let proj_audio = Linear::new(store, &format!("{prefix}.proj_audio"), audio_dim, d_model, true, rng)?;
        let proj_visual = Linear::new(store, &format!("{prefix}.proj_visual"), visual_dim, d_model, true, rng)?;
        let bound = 1.0 / (d_model as f64).sqrt();
        let m_audio = add_uniform(store, format!("{prefix}.m_audio"), &[1, d_model], bound, rng)?;
        let m_visual = add_uniform(store, format!("{prefix}.m_visual"), &[1, d_model], bound, rng)?;
        let layers = (0..n_layers)
            .map(|l| {
                let p = format!("{prefix}.layer{l}");
                Ok(EncoderLayer {
                    norm1: LayerNormParams::new(store, &format!("{p}.norm1"), d_model)?,
                    q: Linear::new(store, &format!("{p}.attn.q"), d_model, d_model, true, rng)?,
                    k: Linear::new(store, &format!("{p}.attn.k"), d_model, d_model, false, rng)?,
                    v: Linear::new(store, &format!("{p}.attn.v"), d_model, d_model, true, rng)?,
                    o: Linear::new(store, &format!("{p}.attn.o"), d_model, d_model, true, rng)?,
                    norm2: LayerNormParams::new(store, &format!("{p}.norm2"), d_model)?,
                    ff1: Linear::new(store, &format!("{p}.ff1"), d_model, ffn_dim, true, rng)?,
                    ff2: Linear::new(store, &format!("{p}.ff2"), ffn_dim, d_model, true, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d_model,
            n_heads,
            dropout,
            proj_audio,
            proj_visual,
            m_audio,
            m_visual,
            layers,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FusedRepresentation {
    /// `1 × 2·d_model`: audio token then visual token.
    pub f_star: NodeId,
    /// `2 × d_model` token matrix after the encoder stack.
    pub tokens: NodeId,
    pub audio_token: NodeId,
    pub visual_token: NodeId,
    /// Attention matrices of every layer and head.
    pub attention: Vec<NodeId>,
}

fn encoder_layer(
    g: &mut Graph<'_>,
    x: NodeId,
    layer: &EncoderLayer,
    n_heads: usize,
    dropout: f64,
    attention: &mut Vec<NodeId>,
) -> Result<NodeId> {
    let h = layer.norm1.forward(g, x)?;
    let q = layer.q.forward(g, h)?;
    let k = layer.k.forward(g, h)?;
    let v = layer.v.forward(g, h)?;
    let att = multi_head_attention(g, q, k, v, n_heads)?;
    attention.extend(att.weights);
    let a = layer.o.forward(g, att.out)?;
    let a = g.dropout(a, dropout)?;
    let x = g.add(x, a)?;
    let h = layer.norm2.forward(g, x)?;
    let f = layer.ff1.forward(g, h)?;
    let f = g.relu(f)?;
    let f = layer.ff2.forward(g, f)?;
    let f = g.dropout(f, dropout)?;
    g.add(x, f)
}

/// Projects the two utterance vectors (`1 × ·`), adds modality embeddings and
/// runs the pre-norm encoder stack over the resulting 2-token sequence.
pub fn transformer_fuse(
    g: &mut Graph<'_>,
    u_a: NodeId,
    u_v: NodeId,
    p: &TransformerFusionParams,
) -> Result<FusedRepresentation> {
    let a = p.proj_audio.forward(g, u_a)?;
    let ma = g.param(p.m_audio);
    let a = g.add(a, ma)?;
    let v = p.proj_visual.forward(g, u_v)?;
    let mv = g.param(p.m_visual);
    let v = g.add(v, mv)?;
    let mut x = g.concat(&[a, v], 0)?;
    let mut attention = Vec::new();
    for layer in &p.layers {
        x = encoder_layer(g, x, layer, p.n_heads, p.dropout, &mut attention)?;
    }
    let audio_token = g.row(x, 0)?;
    let visual_token = g.row(x, 1)?;
    let f_star = g.concat(&[audio_token, visual_token], 1)?;
    Ok(FusedRepresentation {
        f_star,
        tokens: x,
        audio_token,
        visual_token,
        attention,
    })
}
