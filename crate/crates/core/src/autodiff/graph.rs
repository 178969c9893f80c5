//! Recorded computation graphs with reverse-mode differentiation.
//!
//! A [`Graph`] is a topologically ordered list of primitive op records. Every
//! builder call validates shapes and evaluates the new node immediately, so a
//! freshly built graph already holds all forward values. [`Graph::evaluate`]
//! replays the same records with new input bindings, which is what gradient
//! checking and repeated inference use.
//!
//! ```
//! use motionprop::autodiff::Graph;
//! use motionprop::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param("x", Tensor::from_vec(vec![3.0]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum_all(sq).unwrap();
//! assert_eq!(g.value(loss).item(), Some(9.0));
//!
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.param("x").unwrap().data(), &[6.0]);
//! ```

use std::collections::BTreeMap;

use crate::autodiff::kernels::{
    broadcast_shape, col2im, conv_out_len, for_each_broadcast, gemm, im2col,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probabilities below this are clamped inside the cross-entropy value.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum Op {
    Input(String),
    Param(String),
    Constant,
    /// `[.., k] × [k, n] → [.., n]`
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `scale · x + shift`
    Affine { x: NodeId, scale: f64, shift: f64 },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Sqrt(NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { x: NodeId, axis: usize, start: usize, len: usize },
    Reshape { x: NodeId, shape: Vec<usize> },
    /// Mean of all elements.
    Mean(NodeId),
    /// Sum of all elements.
    SumAll(NodeId),
    /// Sums axes `from_axis..` away.
    SumTrailing { x: NodeId, from_axis: usize },
    /// `y[.., i, f] = Σ_j m[i, j] · x[.., j, f]` with a fixed `m`.
    MixRows { x: NodeId, matrix: Tensor },
    /// `x: [B, T, C_in]`, `w: [K, C_in, C_out]` → `[B, T_out, C_out]`.
    Conv1d {
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
    },
    /// Nearest-neighbour ×2 along axis 1 of `[B, T, C]`.
    Upsample2(NodeId),
    /// Mean over the batch of `-log softmax(logits)[label]`.
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize> },
    /// `Σ (a − b)²`
    SquaredErrorSum(NodeId, NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Sqrt(_) => "sqrt",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Mean(_) => "mean",
            Op::SumAll(_) => "sum",
            Op::SumTrailing { .. } => "sum_trailing",
            Op::MixRows { .. } => "mix_rows",
            Op::Conv1d { .. } => "conv1d",
            Op::Upsample2(_) => "upsample2",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::SquaredErrorSum(..) => "squared_error_sum",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::SquaredErrorSum(a, b) => vec![*a, *b],
            Op::Affine { x, .. }
            | Op::Slice { x, .. }
            | Op::Reshape { x, .. }
            | Op::SumTrailing { x, .. }
            | Op::MixRows { x, .. } => vec![*x],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Sqrt(x)
            | Op::Mean(x)
            | Op::SumAll(x)
            | Op::Upsample2(x) => vec![*x],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Conv1d { x, w, .. } => vec![*x, *w],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, NodeId>,
}

fn shape_err(node: usize, op: &Op, detail: impl Into<String>) -> Error {
    Error::Shape {
        node,
        op: op.name(),
        detail: detail.into(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Marks `id` as a named output returned by [`Graph::evaluate`].
    pub fn name_output(&mut self, name: impl Into<String>, id: NodeId) {
        self.outputs.insert(name.into(), id);
    }

    fn leaf(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.leaf(Op::Input(name.into()), value)
    }

    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.leaf(Op::Param(name.into()), value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(Op::Constant, value)
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let idx = self.nodes.len();
        let value = self.forward(idx, &op)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(idx))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.push(Op::Affine { x, scale, shift })
    }
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(x))
    }
    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(x))
    }
    /// Square root; the adjoint at exactly zero is taken as zero.
    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(x))
    }
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.push(Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        })
    }
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::Slice { x, axis, start, len })
    }
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(x))
    }
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumAll(x))
    }
    pub fn sum_trailing(&mut self, x: NodeId, from_axis: usize) -> Result<NodeId> {
        self.push(Op::SumTrailing { x, from_axis })
    }
    pub fn mix_rows(&mut self, x: NodeId, matrix: Tensor) -> Result<NodeId> {
        self.push(Op::MixRows { x, matrix })
    }
    /// Strided 1D convolution with "same" zero padding (`⌊(K−1)/2⌋` on the left).
    pub fn conv1d_same(&mut self, x: NodeId, w: NodeId, stride: usize) -> Result<NodeId> {
        let k = self.shape(w).first().copied().unwrap_or(1);
        let pad_left = k.saturating_sub(1) / 2;
        let pad_right = k.saturating_sub(1) - pad_left;
        self.conv1d(x, w, stride, pad_left, pad_right)
    }
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Result<NodeId> {
        self.push(Op::Conv1d {
            x,
            w,
            stride,
            pad_left,
            pad_right,
        })
    }
    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Upsample2(x))
    }
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.push(Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
        })
    }
    pub fn squared_error_sum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::SquaredErrorSum(a, b))
    }

    /// Re-runs every node with new bindings.
    ///
    /// Every `Input` node must be bound by name; `Param` nodes keep their
    /// current value unless a binding with their name is given. Returns the
    /// values of all outputs registered with [`Graph::name_output`].
    pub fn evaluate(&mut self, bindings: &BTreeMap<String, Tensor>) -> Result<BTreeMap<String, Tensor>> {
        for idx in 0..self.nodes.len() {
            let op = self.nodes[idx].op.clone();
            let value = match &op {
                Op::Input(name) => bindings
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::Unbound(name.clone()))?,
                Op::Param(name) => match bindings.get(name) {
                    Some(v) => v.clone(),
                    None => continue,
                },
                Op::Constant => continue,
                _ => self.forward(idx, &op)?,
            };
            self.nodes[idx].value = value;
        }
        Ok(self
            .outputs
            .iter()
            .map(|(k, id)| (k.clone(), self.nodes[id.0].value.clone()))
            .collect())
    }

    /// Replays forward values after parameter values were changed in place.
    pub(crate) fn refresh(&mut self) -> Result<()> {
        for idx in 0..self.nodes.len() {
            let op = self.nodes[idx].op.clone();
            if matches!(op, Op::Input(_) | Op::Param(_) | Op::Constant) {
                continue;
            }
            self.nodes[idx].value = self.forward(idx, &op)?;
        }
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, id: NodeId) -> &mut Tensor {
        &mut self.nodes[id.0].value
    }

    /// Ids and names of every `Param` node, in graph order.
    pub fn params(&self) -> Vec<(NodeId, &str)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Param(name) => Some((NodeId(i), name.as_str())),
                _ => None,
            })
            .collect()
    }

    fn v(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn forward(&self, idx: usize, op: &Op) -> Result<Tensor> {
        for input in op.inputs() {
            if input.0 >= idx {
                return Err(shape_err(idx, op, format!("input {} does not precede node", input.0)));
            }
        }
        let out = match op {
            Op::Input(_) | Op::Param(_) | Op::Constant => unreachable!("leaf nodes carry their value"),
            Op::MatMul(a, b) => {
                let (a, b) = (self.v(*a), self.v(*b));
                if b.rank() != 2 || a.rank() == 0 || a.shape()[a.rank() - 1] != b.shape()[0] {
                    return Err(shape_err(idx, op, format!("{:?} × {:?}", a.shape(), b.shape())));
                }
                let k = b.shape()[0];
                let n = b.shape()[1];
                let m = a.len() / k;
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, a.data(), false, b.data(), false, &mut c, 0.0);
                let mut shape = a.shape().to_vec();
                *shape.last_mut().unwrap() = n;
                Tensor::new(shape, c)?
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (a, b) = (self.v(*a), self.v(*b));
                let shape = broadcast_shape(a.shape(), b.shape())
                    .ok_or_else(|| shape_err(idx, op, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
                let n: usize = shape.iter().product();
                let mut out = vec![0.0; n];
                let (ad, bd) = (a.data(), b.data());
                match op {
                    Op::Add(..) => for_each_broadcast(&shape, a.shape(), b.shape(), |o, i, j| {
                        out[o] = ad[i] + bd[j]
                    }),
                    Op::Sub(..) => for_each_broadcast(&shape, a.shape(), b.shape(), |o, i, j| {
                        out[o] = ad[i] - bd[j]
                    }),
                    _ => for_each_broadcast(&shape, a.shape(), b.shape(), |o, i, j| {
                        out[o] = ad[i] * bd[j]
                    }),
                }
                Tensor::new(shape, out)?
            }
            Op::Affine { x, scale, shift } => self.v(*x).map(|v| scale * v + shift),
            Op::Relu(x) => self.v(*x).map(|v| v.max(0.0)),
            Op::Sigmoid(x) => self.v(*x).map(sigmoid),
            Op::Tanh(x) => self.v(*x).map(f64::tanh),
            Op::Sqrt(x) => {
                let x = self.v(*x);
                if x.data().iter().any(|&v| v < 0.0) {
                    return Err(shape_err(idx, op, "negative argument"));
                }
                x.map(f64::sqrt)
            }
            Op::Concat { inputs, axis } => {
                let first = inputs
                    .first()
                    .ok_or_else(|| shape_err(idx, op, "no inputs"))?;
                let base = self.v(*first).shape().to_vec();
                if *axis >= base.len() {
                    return Err(shape_err(idx, op, format!("axis {axis} out of range for {base:?}")));
                }
                let mut total = 0;
                for id in inputs {
                    let s = self.v(*id).shape();
                    let compatible = s.len() == base.len()
                        && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == *axis || x == y);
                    if !compatible {
                        return Err(shape_err(idx, op, format!("{s:?} vs {base:?} on axis {axis}")));
                    }
                    total += s[*axis];
                }
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[axis + 1..].iter().product();
                let mut data = Vec::with_capacity(outer * total * inner);
                for o in 0..outer {
                    for id in inputs {
                        let t = self.v(*id);
                        let chunk = t.shape()[*axis] * inner;
                        data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                    }
                }
                let mut shape = base;
                shape[*axis] = total;
                Tensor::new(shape, data)?
            }
            Op::Slice { x, axis, start, len } => {
                let x = self.v(*x);
                let s = x.shape();
                if *axis >= s.len() || *len == 0 || start + len > s[*axis] {
                    return Err(shape_err(idx, op, format!("slice {start}+{len} on axis {axis} of {s:?}")));
                }
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut data = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * s[*axis] + start) * inner;
                    data.extend_from_slice(&x.data()[base..base + len * inner]);
                }
                let mut shape = s.to_vec();
                shape[*axis] = *len;
                Tensor::new(shape, data)?
            }
            Op::Reshape { x, shape } => self
                .v(*x)
                .clone()
                .reshape(shape)
                .map_err(|e| shape_err(idx, op, e.to_string()))?,
            Op::Mean(x) => {
                let x = self.v(*x);
                Tensor::scalar(x.sum() / x.len() as f64)
            }
            Op::SumAll(x) => Tensor::scalar(self.v(*x).sum()),
            Op::SumTrailing { x, from_axis } => {
                let x = self.v(*x);
                if *from_axis == 0 || *from_axis > x.rank() {
                    return Err(shape_err(idx, op, format!("axis {from_axis} for {:?}", x.shape())));
                }
                let inner: usize = x.shape()[*from_axis..].iter().product();
                let data: Vec<f64> = x.data().chunks(inner).map(|c| c.iter().sum()).collect();
                Tensor::new(x.shape()[..*from_axis].to_vec(), data)?
            }
            Op::MixRows { x, matrix } => {
                let x = self.v(*x);
                let s = x.shape();
                if x.rank() < 2 || matrix.rank() != 2 {
                    return Err(shape_err(idx, op, format!("{s:?} with matrix {:?}", matrix.shape())));
                }
                let (rows, feat) = (s[s.len() - 2], s[s.len() - 1]);
                if matrix.shape() != [rows, rows] {
                    return Err(shape_err(idx, op, format!("matrix {:?} for {rows} rows", matrix.shape())));
                }
                let block = rows * feat;
                let mut out = vec![0.0; x.len()];
                for (src, dst) in x.data().chunks(block).zip(out.chunks_mut(block)) {
                    gemm(rows, rows, feat, matrix.data(), false, src, false, dst, 0.0);
                }
                Tensor::new(s.to_vec(), out)?
            }
            Op::Conv1d {
                x,
                w,
                stride,
                pad_left,
                pad_right,
            } => {
                let (x, w) = (self.v(*x), self.v(*w));
                let (b, t, c_in, k, c_out) = conv_dims(idx, op, x, w)?;
                let t_out = conv_out_len(t, k, *stride, *pad_left, *pad_right)
                    .filter(|_| *stride > 0)
                    .ok_or_else(|| shape_err(idx, op, format!("T={t}, K={k}, stride={stride}")))?;
                let cols = im2col(x.data(), (b, t, c_in), k, *stride, *pad_left, t_out);
                let mut out = vec![0.0; b * t_out * c_out];
                gemm(b * t_out, k * c_in, c_out, &cols, false, w.data(), false, &mut out, 0.0);
                Tensor::new(vec![b, t_out, c_out], out)?
            }
            Op::Upsample2(x) => {
                let x = self.v(*x);
                if x.rank() != 3 {
                    return Err(shape_err(idx, op, format!("expected [B,T,C], got {:?}", x.shape())));
                }
                let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let mut data = Vec::with_capacity(2 * x.len());
                for bi in 0..b {
                    for ti in 0..t {
                        let row = &x.data()[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                        data.extend_from_slice(row);
                        data.extend_from_slice(row);
                    }
                }
                Tensor::new(vec![b, 2 * t, c], data)?
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let l = self.v(*logits);
                if l.rank() != 2 || l.shape()[0] != labels.len() {
                    return Err(shape_err(idx, op, format!("logits {:?} with {} labels", l.shape(), labels.len())));
                }
                let c = l.shape()[1];
                if let Some(bad) = labels.iter().find(|&&y| y >= c) {
                    return Err(shape_err(idx, op, format!("label {bad} out of range for {c} classes")));
                }
                let p = l.softmax_last();
                let ceiling = -PROB_FLOOR.ln();
                let total: f64 = labels
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        let row = &l.data()[i * c..(i + 1) * c];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                        let nll = lse - row[y];
                        if p.data()[i * c + y] < PROB_FLOOR {
                            ceiling
                        } else {
                            nll.min(ceiling)
                        }
                    })
                    .sum();
                Tensor::scalar(total / labels.len() as f64)
            }
            Op::SquaredErrorSum(a, b) => {
                let (a, b) = (self.v(*a), self.v(*b));
                if a.shape() != b.shape() {
                    return Err(shape_err(idx, op, format!("{:?} vs {:?}", a.shape(), b.shape())));
                }
                let s = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
                Tensor::scalar(s)
            }
        };
        Ok(out)
    }

    /// Reverse-mode sweep from a scalar `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.v(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss {
                node: loss.0,
                shape: lv.shape().to_vec(),
            });
        }
        // Constants (data tensors) never need adjoints.
        let mut needs = vec![false; loss.0 + 1];
        for i in 0..=loss.0 {
            needs[i] = match &self.nodes[i].op {
                Op::Constant => false,
                Op::Input(_) | Op::Param(_) => true,
                op => op.inputs().iter().any(|id| needs[id.0]),
            };
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let op = &self.nodes[idx].op;
            let y = &self.nodes[idx].value;
            let contributions = self.adjoint(op, y, &dy, &needs)?;
            for (id, g) in contributions.into_iter().filter(|(id, _)| needs[id.0]) {
                match &mut adj[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            adj[idx] = Some(dy);
        }
        adj.resize(self.nodes.len(), None);
        let mut params: BTreeMap<String, Tensor> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                let g = adj[i]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                match params.get_mut(name) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        params.insert(name.clone(), g);
                    }
                }
            }
        }
        Ok(Gradients { nodes: adj, params })
    }

    fn adjoint(&self, op: &Op, y: &Tensor, dy: &Tensor, needs: &[bool]) -> Result<Vec<(NodeId, Tensor)>> {
        let g = match op {
            Op::Input(_) | Op::Param(_) | Op::Constant => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (self.v(*a), self.v(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let m = av.len() / k;
                let mut out = Vec::with_capacity(2);
                if needs[a.0] {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, dy.data(), false, bv.data(), true, &mut da, 0.0);
                    out.push((*a, Tensor::new(av.shape().to_vec(), da)?));
                }
                if needs[b.0] {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, dy.data(), false, &mut db, 0.0);
                    out.push((*b, Tensor::new(bv.shape().to_vec(), db)?));
                }
                out
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (av, bv) = (self.v(*a), self.v(*b));
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                let d = dy.data();
                let (ad, bd) = (av.data(), bv.data());
                match op {
                    Op::Add(..) => for_each_broadcast(y.shape(), av.shape(), bv.shape(), |o, i, j| {
                        da[i] += d[o];
                        db[j] += d[o];
                    }),
                    Op::Sub(..) => for_each_broadcast(y.shape(), av.shape(), bv.shape(), |o, i, j| {
                        da[i] += d[o];
                        db[j] -= d[o];
                    }),
                    _ => for_each_broadcast(y.shape(), av.shape(), bv.shape(), |o, i, j| {
                        da[i] += d[o] * bd[j];
                        db[j] += d[o] * ad[i];
                    }),
                }
                vec![
                    (*a, Tensor::new(av.shape().to_vec(), da)?),
                    (*b, Tensor::new(bv.shape().to_vec(), db)?),
                ]
            }
            Op::Affine { x, scale, .. } => vec![(*x, dy.map(|d| d * scale))],
            Op::Relu(x) => vec![(*x, dy.zip_map(y, |d, v| if v > 0.0 { d } else { 0.0 })?)],
            Op::Sigmoid(x) => vec![(*x, dy.zip_map(y, |d, s| d * s * (1.0 - s))?)],
            Op::Tanh(x) => vec![(*x, dy.zip_map(y, |d, t| d * (1.0 - t * t))?)],
            Op::Sqrt(x) => vec![(
                *x,
                dy.zip_map(y, |d, r| if r > 0.0 { d / (2.0 * r) } else { 0.0 })?,
            )],
            Op::Concat { inputs, axis } => {
                let s = y.shape();
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut parts: Vec<Vec<f64>> = inputs.iter().map(|id| Vec::with_capacity(self.v(*id).len())).collect();
                let mut off = 0;
                for o in 0..outer {
                    for (p, id) in parts.iter_mut().zip(inputs) {
                        let chunk = self.v(*id).shape()[*axis] * inner;
                        p.extend_from_slice(&dy.data()[off..off + chunk]);
                        off += chunk;
                    }
                    debug_assert_eq!(off, (o + 1) * s[*axis] * inner);
                }
                inputs
                    .iter()
                    .zip(parts)
                    .map(|(id, p)| Ok((*id, Tensor::new(self.v(*id).shape().to_vec(), p)?)))
                    .collect::<Result<_>>()?
            }
            Op::Slice { x, axis, start, len } => {
                let xv = self.v(*x);
                let s = xv.shape();
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut dx = vec![0.0; xv.len()];
                for o in 0..outer {
                    let base = (o * s[*axis] + start) * inner;
                    let src = o * len * inner;
                    dx[base..base + len * inner].copy_from_slice(&dy.data()[src..src + len * inner]);
                }
                vec![(*x, Tensor::new(s.to_vec(), dx)?)]
            }
            Op::Reshape { x, .. } => vec![(*x, dy.clone().reshape(self.v(*x).shape())?)],
            Op::Mean(x) => {
                let xv = self.v(*x);
                let d = dy.data()[0] / xv.len() as f64;
                vec![(*x, Tensor::full(xv.shape(), d))]
            }
            Op::SumAll(x) => vec![(*x, Tensor::full(self.v(*x).shape(), dy.data()[0]))],
            Op::SumTrailing { x, from_axis } => {
                let xv = self.v(*x);
                let inner: usize = xv.shape()[*from_axis..].iter().product();
                let dx: Vec<f64> = dy
                    .data()
                    .iter()
                    .flat_map(|&d| std::iter::repeat(d).take(inner))
                    .collect();
                vec![(*x, Tensor::new(xv.shape().to_vec(), dx)?)]
            }
            Op::MixRows { x, matrix } => {
                let s = y.shape();
                let (rows, feat) = (s[s.len() - 2], s[s.len() - 1]);
                let block = rows * feat;
                let mut dx = vec![0.0; y.len()];
                for (src, dst) in dy.data().chunks(block).zip(dx.chunks_mut(block)) {
                    gemm(rows, rows, feat, matrix.data(), true, src, false, dst, 0.0);
                }
                vec![(*x, Tensor::new(s.to_vec(), dx)?)]
            }
            Op::Conv1d {
                x,
                w,
                stride,
                pad_left,
                ..
            } => {
                let (xv, wv) = (self.v(*x), self.v(*w));
                let (b, t, c_in, k, c_out) = (
                    xv.shape()[0],
                    xv.shape()[1],
                    xv.shape()[2],
                    wv.shape()[0],
                    wv.shape()[2],
                );
                let t_out = y.shape()[1];
                let mut out = Vec::with_capacity(2);
                if needs[w.0] {
                    let cols = im2col(xv.data(), (b, t, c_in), k, *stride, *pad_left, t_out);
                    let mut dw = vec![0.0; wv.len()];
                    gemm(k * c_in, b * t_out, c_out, &cols, true, dy.data(), false, &mut dw, 0.0);
                    out.push((*w, Tensor::new(wv.shape().to_vec(), dw)?));
                }
                if needs[x.0] {
                    let mut dcols = vec![0.0; b * t_out * k * c_in];
                    gemm(b * t_out, c_out, k * c_in, dy.data(), false, wv.data(), true, &mut dcols, 0.0);
                    let dx = col2im(&dcols, (b, t, c_in), k, *stride, *pad_left, t_out);
                    out.push((*x, Tensor::new(xv.shape().to_vec(), dx)?));
                }
                out
            }
            Op::Upsample2(x) => {
                let xv = self.v(*x);
                let (b, t, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let mut dx = vec![0.0; xv.len()];
                for bi in 0..b {
                    for ti in 0..t {
                        for ci in 0..c {
                            let up = (bi * 2 * t + 2 * ti) * c + ci;
                            dx[(bi * t + ti) * c + ci] = dy.data()[up] + dy.data()[up + c];
                        }
                    }
                }
                vec![(*x, Tensor::new(xv.shape().to_vec(), dx)?)]
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let l = self.v(*logits);
                let c = l.shape()[1];
                let scale = dy.data()[0] / labels.len() as f64;
                let mut d = l.softmax_last().into_data();
                for (i, &lab) in labels.iter().enumerate() {
                    d[i * c + lab] -= 1.0;
                }
                d.iter_mut().for_each(|v| *v *= scale);
                vec![(*logits, Tensor::new(l.shape().to_vec(), d)?)]
            }
            Op::SquaredErrorSum(a, b) => {
                let (av, bv) = (self.v(*a), self.v(*b));
                let s = dy.data()[0];
                let da = av.zip_map(bv, |x, y| 2.0 * s * (x - y))?;
                let db = da.map(|v| -v);
                vec![(*a, da), (*b, db)]
            }
        };
        Ok(g)
    }
}

fn conv_dims(idx: usize, op: &Op, x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    if x.rank() != 3 || w.rank() != 3 || x.shape()[2] != w.shape()[1] {
        return Err(shape_err(idx, op, format!("x {:?}, w {:?}", x.shape(), w.shape())));
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2], w.shape()[0], w.shape()[2]))
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    /// Adjoint of any node reached by the sweep.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Gradient for every `Param` node, zero where the loss does not depend on it.
    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }
}
