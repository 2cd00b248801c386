//! Finite-difference gradient checks for every parameterised module, on
//! small random instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{grad_check, GradCheckReport, Graph, NodeId, ParamStore};
use crate::encoders::{asp_pool, lstm_encode, AspParams, LstmParams};
use crate::error::Result;
use crate::fusion::{co_attention_fuse, transformer_fuse, CoAttentionParams, TransformerFusionParams};
use crate::model::classifier_logits;
use crate::nn::Linear;
use crate::ptmfim::{ptmfim_forward, BcaDirection, PtmfimParams};
use crate::tensor::Tensor;

pub const GRADCHECK_EPS: f64 = 3e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct ModuleCheck {
    pub module: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// `Σ out ⊙ r` for a fixed random `r`, so every output entry contributes
/// with a distinct weight.
fn weighted_sum(g: &mut Graph<'_>, out: NodeId, r: &Tensor) -> Result<NodeId> {
    let rn = g.constant(r.clone());
    let prod = g.mul(out, rn)?;
    g.sum(prod)
}

fn check<F>(module: &'static str, seed: u64, store: &mut ParamStore, out_shape: &[usize], rng: &mut ChaCha8Rng, mut f: F) -> Result<ModuleCheck>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<NodeId>,
{
    let r = Tensor::uniform(out_shape, 1.0, rng);
    let report = grad_check(store, None, GRADCHECK_EPS, GRADCHECK_TOL, |g| {
        let out = f(g)?;
        weighted_sum(g, out, &r)
    })?;
    Ok(ModuleCheck { module, seed, report })
}

/// Runs all six module checks for one seed.
pub fn gradcheck_modules(seed: u64) -> Result<Vec<ModuleCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(6);

    let mut s = ParamStore::new();
    let p = LstmParams::new(&mut s, "enc.x.lstm", 3, 4, &mut rng)?;
    let x = Tensor::uniform(&[5, 3], 1.0, &mut rng);
    out.push(check("lstm", seed, &mut s, &[5, 4], &mut rng, |g| {
        let xn = g.constant(x.clone());
        lstm_encode(g, xn, &p)
    })?);

    let mut s = ParamStore::new();
    let p = AspParams::new(&mut s, "enc.x.asp", 4, 3, 1e-5, &mut rng)?;
    let h = Tensor::uniform(&[6, 4], 1.0, &mut rng);
    out.push(check("asp", seed, &mut s, &[1, 8], &mut rng, |g| {
        let hn = g.constant(h.clone());
        Ok(asp_pool(g, hn, &p)?.out)
    })?);

    let mut s = ParamStore::new();
    let p = CoAttentionParams::new(&mut s, "fuse.coatt", (3, 2, 4), (3, 3, 4), 0.0, false, &mut rng)?;
    let (l, m, w) = (
        Tensor::uniform(&[4, 3], 1.0, &mut rng),
        Tensor::uniform(&[4, 2], 1.0, &mut rng),
        Tensor::uniform(&[4, 4], 1.0, &mut rng),
    );
    out.push(check("co_attention", seed, &mut s, &[4, 10], &mut rng, |g| {
        let (ln, mn, wn) = (g.constant(l.clone()), g.constant(m.clone()), g.constant(w.clone()));
        co_attention_fuse(g, ln, mn, wn, &p)
    })?);

    let mut s = ParamStore::new();
    let p = TransformerFusionParams::new(&mut s, "fuse.tx", 6, 5, 8, 2, 2, 16, 0.0, &mut rng)?;
    let (ua, uv) = (Tensor::uniform(&[1, 6], 1.0, &mut rng), Tensor::uniform(&[1, 5], 1.0, &mut rng));
    out.push(check("transformer", seed, &mut s, &[1, 16], &mut rng, |g| {
        let (a, v) = (g.constant(ua.clone()), g.constant(uv.clone()));
        Ok(transformer_fuse(g, a, v, &p)?.f_star)
    })?);

    let mut s = ParamStore::new();
    let p = PtmfimParams::new(&mut s, "ptmfim", 6, 5, 4, 3, 1, BcaDirection::PersonalityQueries, &mut rng)?;
    let (e, tok) = (Tensor::uniform(&[1, 6], 3.0, &mut rng), Tensor::uniform(&[2, 5], 3.0, &mut rng));
    out.push(check("ptmfim", seed, &mut s, &[1, 4], &mut rng, |g| {
        let (en, tn) = (g.constant(e.clone()), g.constant(tok.clone()));
        Ok(ptmfim_forward(g, en, tn, &p)?.out)
    })?);

    let mut s = ParamStore::new();
    let hidden = Linear::new(&mut s, "head.hidden", 5, 4, true, &mut rng)?;
    let last = Linear::new(&mut s, "head.out", 4, 3, true, &mut rng)?;
    let xs = Tensor::uniform(&[2, 5], 1.0, &mut rng);
    let report = grad_check(&mut s, None, GRADCHECK_EPS, GRADCHECK_TOL, |g| {
        let xn = g.constant(xs.clone());
        let logits = classifier_logits(g, xn, &hidden, &last)?;
        g.cross_entropy(logits, &[2, 0])
    })?;
    out.push(ModuleCheck {
        module: "head",
        seed,
        report,
    });
    Ok(out)
}
