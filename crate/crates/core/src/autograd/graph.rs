use std::collections::HashMap;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::tensor::{check_dropout_rate, dropout_mask, layer_norm_forward, Tensor};

use super::{ParamId, ParamStore};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Square,
    Sqrt,
    Log,
    Exp,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Relu => "relu",
            Unary::Square => "square",
            Unary::Sqrt => "sqrt",
            Unary::Log => "log",
            Unary::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Unary::Sigmoid => {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Tanh => v.tanh(),
            Unary::Relu => v.max(0.0),
            Unary::Square => v * v,
            Unary::Sqrt => v.sqrt(),
            Unary::Log => v.ln(),
            Unary::Exp => v.exp(),
        }
    }

    /// Local derivative from input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Sqrt => 0.5 / y,
            Unary::Log => 1.0 / x,
            Unary::Exp => y,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Tensor),
    Unary(NodeId, Unary),
    Softmax(NodeId, usize),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Concat(Vec<NodeId>, usize),
    Narrow {
        x: NodeId,
        axis: usize,
        start: usize,
    },
    Reshape(NodeId),
    Sum(NodeId),
    MeanAxis(NodeId, usize),
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients for every parameter reached by a backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    entries: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.entries.iter().map(|(id, g)| (*id, g))
    }
}

/// Define-by-run tape.
///
/// A graph is rebuilt for every forward pass. Nodes are appended in execution
/// order, so every node's inputs precede it and a single reverse sweep visits
/// each node once. Parameters are bound lazily from the [`ParamStore`]; a
/// parameter used several times maps to a single leaf.
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, NodeId>,
    rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Graph<'a> {
    /// Inference graph: dropout is the identity.
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            bound: HashMap::new(),
            rng: None,
        }
    }

    /// Training graph: dropout draws its masks from `rng`.
    pub fn training(store: &'a ParamStore, rng: &'a mut dyn RngCore) -> Self {
        Self {
            rng: Some(rng),
            ..Self::new(store)
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<NodeId> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.bound.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            value: self.store.value(id).clone(),
            op: Op::Param,
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.bound.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose()?;
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg, "transpose")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg, "scale")
    }

    pub fn unary(&mut self, a: NodeId, kind: Unary) -> Result<NodeId> {
        let x = self.value(a);
        match kind {
            Unary::Sqrt if x.data().iter().any(|&v| v < 0.0) => {
                return Err(Error::Domain {
                    op: "sqrt",
                    msg: "negative input".into(),
                })
            }
            Unary::Log if x.data().iter().any(|&v| v <= 0.0) => {
                return Err(Error::Domain {
                    op: "log",
                    msg: "non-positive input".into(),
                })
            }
            _ => {}
        }
        let v = x.map(|v| kind.apply(v));
        let rg = self.rg(a);
        self.push(v, Op::Unary(a, kind), rg, kind.name())
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Relu)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Square)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Sqrt)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Log)
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(a).softmax(axis)?;
        let rg = self.rg(a);
        self.push(v, Op::Softmax(a, axis), rg, "softmax")
    }

    /// Normalises over the last axis; `gain` and `bias` hold one entry per column.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (v, xhat, inv_std) =
            layer_norm_forward(self.value(x), self.value(gain), self.value(bias), eps)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
            "layer_norm",
        )
    }

    /// Inverted dropout; the identity on inference graphs.
    pub fn dropout(&mut self, x: NodeId, rate: f64) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        let mask = match self.rng.as_deref_mut() {
            Some(rng) => dropout_mask(&shape, rate, true, rng)?,
            None => {
                check_dropout_rate(rate)?;
                None
            }
        };
        match mask {
            None => Ok(x),
            Some(mask) => {
                let v = self.value(x).mul(&mask)?;
                let rg = self.rg(x);
                self.push(v, Op::MulConst(x, mask), rg, "dropout")
            }
        }
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat(&values, axis)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(v, Op::Concat(parts.to_vec(), axis), rg, "concat")
    }

    pub fn narrow(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x).narrow(axis, start, len)?;
        let rg = self.rg(x);
        self.push(v, Op::Narrow { x, axis, start }, rg, "narrow")
    }

    /// Row `r` of a matrix as a `1 × cols` node.
    pub fn row(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        self.narrow(x, 0, r, 1)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        self.push(v, Op::Reshape(x), rg, "reshape")
    }

    /// Sum of all entries as a one-element tensor.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(v, Op::Sum(x), rg, "sum")
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(x).mean_axis(axis)?;
        let rg = self.rg(x);
        self.push(v, Op::MeanAxis(x, axis), rg, "mean_axis")
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits` (`N × C`), computed with log-sum-exp.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        if z.rank() != 2 || z.rows() != labels.len() {
            return Err(Error::shape("cross_entropy", z.shape(), &[labels.len()]));
        }
        let c = z.cols();
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Domain {
                op: "cross_entropy",
                msg: format!("label {bad} out of range for {c} classes"),
            });
        }
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        loss /= labels.len() as f64;
        let probs = z.softmax(1)?;
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
            "cross_entropy",
        )
    }

    /// Reverse sweep from a scalar `loss`. Returns the gradient of every
    /// parameter bound on this graph; unreachable parameters get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::shape("backward", lv.shape(), &[1]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Param = node.op {
                grads[i] = Some(g);
                continue;
            }
            for (input, gi) in self.local_grads(node, &g)? {
                if !self.rg(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }

        let mut entries: Vec<(ParamId, Tensor)> = self
            .bound
            .iter()
            .map(|(&pid, &nid)| {
                let g = grads
                    .get_mut(nid.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(self.value(nid).shape()));
                (pid, g)
            })
            .collect();
        entries.sort_by_key(|(pid, _)| *pid);
        Ok(Gradients { entries })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
        let val = |id: NodeId| &self.nodes[id.0].value;
        Ok(match &node.op {
            Op::Leaf | Op::Param => Vec::new(),
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.rg(*a) {
                    out.push((*a, g.matmul(&val(*b).transpose()?)?));
                }
                if self.rg(*b) {
                    out.push((*b, val(*a).transpose()?.matmul(g)?));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, g.transpose()?)],
            Op::Add(a, b) => vec![
                (*a, g.sum_to_shape(val(*a).shape())?),
                (*b, g.sum_to_shape(val(*b).shape())?),
            ],
            Op::Sub(a, b) => vec![
                (*a, g.sum_to_shape(val(*a).shape())?),
                (*b, g.scale(-1.0).sum_to_shape(val(*b).shape())?),
            ],
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.rg(*a) {
                    out.push((*a, g.mul(val(*b))?.sum_to_shape(val(*a).shape())?));
                }
                if self.rg(*b) {
                    out.push((*b, g.mul(val(*a))?.sum_to_shape(val(*b).shape())?));
                }
                out
            }
            Op::Scale(a, c) => vec![(*a, g.scale(*c))],
            Op::MulConst(a, mask) => vec![(*a, g.mul(mask)?)],
            Op::Unary(a, kind) => {
                let x = val(*a).data();
                let y = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                vec![(*a, Tensor::from_parts(g.shape().to_vec(), data))]
            }
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let dot = g.mul(y)?.sum_axis(*axis)?;
                vec![(*a, g.sub(&dot)?.mul(y)?)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = xhat.cols();
                let rows = xhat.numel() / d;
                let gw = val(*gain).data();
                let mut dx = vec![0.0; xhat.numel()];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let hr = &xhat.data()[r * d..(r + 1) * d];
                    let mut sum_gh = 0.0;
                    let mut sum_ghh = 0.0;
                    for j in 0..d {
                        let gh = gr[j] * gw[j];
                        sum_gh += gh;
                        sum_ghh += gh * hr[j];
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                    }
                    let k = inv_std[r] / d as f64;
                    for j in 0..d {
                        let gh = gr[j] * gw[j];
                        dx[r * d + j] = k * (d as f64 * gh - sum_gh - hr[j] * sum_ghh);
                    }
                }
                vec![
                    (*x, Tensor::from_parts(xhat.shape().to_vec(), dx)),
                    (*gain, Tensor::from_parts(val(*gain).shape().to_vec(), dgain)),
                    (*bias, Tensor::from_parts(val(*bias).shape().to_vec(), dbias)),
                ]
            }
            Op::Concat(parts, axis) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let len = val(p).shape()[*axis];
                    out.push((p, g.narrow(*axis, start, len)?));
                    start += len;
                }
                out
            }
            Op::Narrow { x, axis, start } => {
                let full = val(*x).shape()[*axis];
                vec![(*x, g.pad_narrowed(*axis, *start, full))]
            }
            Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape())?)],
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()?))],
            Op::MeanAxis(x, axis) => {
                let shape = val(*x).shape();
                let n = shape[*axis] as f64;
                vec![(*x, Tensor::zeros(shape).add(g)?.scale(1.0 / n))]
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len() as f64;
                let c = probs.cols();
                let scale = g.item()? / n;
                let mut d = probs.data().to_vec();
                for (r, &y) in labels.iter().enumerate() {
                    d[r * c + y] -= 1.0;
                }
                for v in &mut d {
                    *v *= scale;
                }
                vec![(*logits, Tensor::from_parts(probs.shape().to_vec(), d))]
            }
        })
    }

    /// Indices of each node's inputs; used to check tape ordering.
    #[cfg(test)]
    fn inputs_of(&self, i: usize) -> Vec<usize> {
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a.0, b.0],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::Unary(a, _)
            | Op::Softmax(a, _)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::MeanAxis(a, _) => vec![a.0],
            Op::LayerNorm { x, gain, bias, .. } => vec![x.0, gain.0, bias.0],
            Op::Concat(parts, _) => parts.iter().map(|p| p.0).collect(),
            Op::Narrow { x, .. } => vec![x.0],
            Op::CrossEntropy { logits, .. } => vec![logits.0],
        }
    }
}
