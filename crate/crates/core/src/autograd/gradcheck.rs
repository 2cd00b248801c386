use serde::Serialize;

use crate::error::{Error, Result};

use super::{Graph, NodeId, ParamId, ParamStore};

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub numel: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(move |p| p.max_rel_err > self.tol)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_loss<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let loss = f(&mut g)?;
    g.value(loss).item()
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// finite differences for every entry of `params` (all parameters when `None`).
///
/// `f` must be deterministic; it is evaluated twice at the base point and a
/// mismatch is reported as an error.
pub fn grad_check<F>(
    store: &mut ParamStore,
    params: Option<&[ParamId]>,
    eps: f64,
    tol: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: for<'g> FnMut(&mut Graph<'g>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let base = eval_loss(store, &mut f)?;
    if base.to_bits() != eval_loss(store, &mut f)?.to_bits() {
        return Err(Error::invalid(
            "grad_check: loss is not deterministic across repeated evaluation",
        ));
    }

    let ids: Vec<ParamId> = match params {
        Some(p) => p.to_vec(),
        None => store.ids().collect(),
    };
    let mut report = GradCheckReport {
        eps,
        tol,
        params: Vec::with_capacity(ids.len()),
    };
    for id in ids {
        let grad = analytic
            .get(id)
            .cloned()
            .unwrap_or_else(|| crate::Tensor::zeros(store.value(id).shape()));
        let n = grad.numel();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval_loss(store, &mut f)?;
            store.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval_loss(store, &mut f)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        report.params.push(ParamCheck {
            name: store.get(id).name().to_string(),
            numel: n,
            max_rel_err: worst,
        });
    }
    Ok(report)
}
