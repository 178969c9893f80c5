//! Graph-building forward pass of the classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeighborhoodSpec;
use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;
use crate::Tensor;

/// Layer widths of the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierDims {
    /// Per-joint input width `D`.
    pub input: usize,
    pub graph1: usize,
    pub graph2: usize,
    pub hidden: usize,
    pub fc: usize,
    pub classes: usize,
    /// One attention `W_x` shared by all joints, or one per joint.
    pub shared_attention: bool,
}

impl ClassifierDims {
    pub fn new(input: usize, classes: usize) -> Self {
        ClassifierDims {
            input,
            graph1: 32,
            graph2: 64,
            hidden: 128,
            fc: 64,
            classes,
            shared_attention: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.input, self.graph1, self.graph2, self.hidden, self.fc].contains(&0) {
            return Err(Error::arg("classifier widths must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::arg("a classifier needs at least two classes"));
        }
        Ok(())
    }

    /// Name and shape of every parameter for a skeleton of `joints` joints.
    pub fn param_shapes(&self, joints: usize) -> Vec<(&'static str, Vec<usize>)> {
        let (d, f1, f2, h, m, c) = (self.input, self.graph1, self.graph2, self.hidden, self.fc, self.classes);
        let gru_in = joints * f2;
        let w_x = if self.shared_attention { vec![f2, 1] } else { vec![joints, f2] };
        vec![
            ("gc1.w", vec![2 * d, f1]),
            ("gc1.b", vec![f1]),
            ("gc2.w", vec![2 * f1, f2]),
            ("gc2.b", vec![f2]),
            ("att.w_h", vec![h, 1]),
            ("att.w_x", w_x),
            ("att.b", vec![1]),
            ("gru.w_z", vec![gru_in, h]),
            ("gru.u_z", vec![h, h]),
            ("gru.b_z", vec![h]),
            ("gru.w_r", vec![gru_in, h]),
            ("gru.u_r", vec![h, h]),
            ("gru.b_r", vec![h]),
            ("gru.w_c", vec![gru_in, h]),
            ("gru.u_c", vec![h, h]),
            ("gru.b_c", vec![h]),
            ("fc1.w", vec![h, m]),
            ("fc1.b", vec![m]),
            ("fc2.w", vec![m, c]),
            ("fc2.b", vec![c]),
        ]
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, joints: usize, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes(joints) {
            let t = if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
            };
            store.insert(name, t);
        }
        store
    }

    /// Checks that `params` holds exactly the expected names and shapes.
    pub fn check_params(&self, params: &ParamStore, joints: usize) -> Result<()> {
        let expected = self.param_shapes(joints);
        if params.len() != expected.len() {
            return Err(Error::arg(format!(
                "classifier expects {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            let t = params.expect(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::arg(format!("parameter `{name}` has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }
}

/// One graph convolution over the joint axis of `x: [.., J, F_in]`:
/// `ReLU(W · [x_i ; mean_{j ∈ N(i)} x_j − x_i] + b)`.
///
/// Because the edge function is linear before the ReLU, averaging edge
/// outputs equals using the mean neighbour difference.
pub fn graph_conv(
    g: &mut Graph,
    x: NodeId,
    topo: &SkeletonTopology,
    spec: NeighborhoodSpec,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let f_in = *g.shape(x).last().unwrap_or(&0);
    if g.shape(w).len() != 2 || g.shape(w)[0] != 2 * f_in {
        return Err(Error::arg(format!(
            "graph conv weight {:?} does not take input width {f_in}",
            g.shape(w)
        )));
    }
    let w_self = g.slice(w, 0, 0, f_in)?;
    let mut out = g.matmul(x, w_self)?;
    if let Some(diff) = spec.difference_matrix(topo) {
        let w_diff = g.slice(w, 0, f_in, f_in)?;
        let d = g.mix_rows(x, diff)?;
        let dw = g.matmul(d, w_diff)?;
        out = g.add(out, dw)?;
    }
    let out = g.add(out, b)?;
    g.relu(out)
}

/// Attention weights of the gate.
#[derive(Clone, Copy, Debug)]
pub struct AttentionNodes {
    pub w_h: NodeId,
    pub w_x: NodeId,
    pub b: NodeId,
    pub shared: bool,
}

/// `a_i = sigmoid(W_h h + W_x x_i + b)` and `x̃_i = (1 + a_i) x_i` for
/// `x: [B, J, F]`, `h: [B, H]`. Returns `(x̃, a)` with `a: [B, J, 1]`.
pub fn attention_gate(g: &mut Graph, x: NodeId, h: NodeId, att: &AttentionNodes) -> Result<(NodeId, NodeId)> {
    let (batch, joints) = (g.shape(x)[0], g.shape(x)[1]);
    let from_h = g.matmul(h, att.w_h)?;
    let from_h = g.reshape(from_h, &[batch, 1, 1])?;
    let from_x = if att.shared {
        g.matmul(x, att.w_x)?
    } else {
        let p = g.mul(x, att.w_x)?;
        let s = g.sum_trailing(p, 2)?;
        g.reshape(s, &[batch, joints, 1])?
    };
    let pre = g.add(from_x, from_h)?;
    let pre = g.add(pre, att.b)?;
    let a = g.sigmoid(pre)?;
    let xa = g.mul(x, a)?;
    Ok((g.add(x, xa)?, a))
}

/// Weights of the recurrent cell.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_c: NodeId,
    pub u_c: NodeId,
    pub b_c: NodeId,
}

fn gate(g: &mut Graph, x: NodeId, h: NodeId, w: NodeId, u: NodeId, b: NodeId) -> Result<NodeId> {
    let xw = g.matmul(x, w)?;
    let hu = g.matmul(h, u)?;
    let s = g.add(xw, hu)?;
    g.add(s, b)
}

/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `c = tanh(x W_c + (r ⊙ h) U_c + b_c)`, `h' = (1 − z) ⊙ h + z ⊙ c`.
pub fn gru_step(g: &mut Graph, x: NodeId, h: NodeId, w: &GruNodes) -> Result<NodeId> {
    let z = gate(g, x, h, w.w_z, w.u_z, w.b_z)?;
    let z = g.sigmoid(z)?;
    let r = gate(g, x, h, w.w_r, w.u_r, w.b_r)?;
    let r = g.sigmoid(r)?;
    let rh = g.mul(r, h)?;
    let c = gate(g, x, rh, w.w_c, w.u_c, w.b_c)?;
    let c = g.tanh(c)?;
    let step = g.sub(c, h)?;
    let step = g.mul(z, step)?;
    g.add(h, step)
}

/// Every parameter of the classifier as graph nodes.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierNodes {
    pub gc1: (NodeId, NodeId),
    pub gc2: (NodeId, NodeId),
    pub attention: AttentionNodes,
    pub gru: GruNodes,
    pub fc1: (NodeId, NodeId),
    pub fc2: (NodeId, NodeId),
}

impl ClassifierNodes {
    /// Adds every parameter of `params` to `g` as a learnable leaf.
    pub fn bind(g: &mut Graph, params: &ParamStore, shared_attention: bool) -> Result<Self> {
        let mut p = |name: &str| -> Result<NodeId> { Ok(g.param(name, params.expect(name)?.clone())) };
        Ok(ClassifierNodes {
            gc1: (p("gc1.w")?, p("gc1.b")?),
            gc2: (p("gc2.w")?, p("gc2.b")?),
            attention: AttentionNodes {
                w_h: p("att.w_h")?,
                w_x: p("att.w_x")?,
                b: p("att.b")?,
                shared: shared_attention,
            },
            gru: GruNodes {
                w_z: p("gru.w_z")?,
                u_z: p("gru.u_z")?,
                b_z: p("gru.b_z")?,
                w_r: p("gru.w_r")?,
                u_r: p("gru.u_r")?,
                b_r: p("gru.b_r")?,
                w_c: p("gru.w_c")?,
                u_c: p("gru.u_c")?,
                b_c: p("gru.b_c")?,
            },
            fc1: (p("fc1.w")?, p("fc1.b")?),
            fc2: (p("fc2.w")?, p("fc2.b")?),
        })
    }
}

/// Output nodes of [`classify_forward`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    /// `[B, n_C]`
    pub logits: NodeId,
    /// `[B, T, J]`
    pub attention: NodeId,
}

/// Two graph convolutions, the attention-gated GRU over time, then two
/// dense layers on the last hidden state. `x: [B, T, J, D]`.
pub fn classify_forward(
    g: &mut Graph,
    x: NodeId,
    nodes: &ClassifierNodes,
    topo: &SkeletonTopology,
    spec: NeighborhoodSpec,
) -> Result<ForwardNodes> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 || shape[2] != topo.num_joints() {
        return Err(Error::arg(format!(
            "classifier input must be [B, T, {}, D], got {shape:?}",
            topo.num_joints()
        )));
    }
    let (batch, frames, joints) = (shape[0], shape[1], shape[2]);
    let y = graph_conv(g, x, topo, spec, nodes.gc1.0, nodes.gc1.1)?;
    let y = graph_conv(g, y, topo, spec, nodes.gc2.0, nodes.gc2.1)?;
    let f2 = g.shape(y)[3];
    let hidden = g.shape(nodes.gru.u_z)[0];
    let mut h = g.constant(Tensor::zeros(&[batch, hidden]));
    let mut maps = Vec::with_capacity(frames);
    for t in 0..frames {
        let xt = g.slice(y, 1, t, 1)?;
        let xt = g.reshape(xt, &[batch, joints, f2])?;
        let (gated, a) = attention_gate(g, xt, h, &nodes.attention)?;
        maps.push(g.reshape(a, &[batch, 1, joints])?);
        let flat = g.reshape(gated, &[batch, joints * f2])?;
        h = gru_step(g, flat, h, &nodes.gru)?;
    }
    let attention = g.concat(&maps, 1)?;
    let z = g.matmul(h, nodes.fc1.0)?;
    let z = g.add(z, nodes.fc1.1)?;
    let z = g.relu(z)?;
    let z = g.matmul(z, nodes.fc2.0)?;
    let logits = g.add(z, nodes.fc2.1)?;
    Ok(ForwardNodes { logits, attention })
}
