use crate::autograd::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction. Weight decay, when non-zero, is added to the
/// gradient as an L2 term.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value().shape())).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_defaults(store: &ParamStore) -> Self {
        Self::new(store, 1e-3, 0.9, 0.999, 1e-8, 0.0)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((x, &g0), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                let g = g0 + self.weight_decay * *x;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *x -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
