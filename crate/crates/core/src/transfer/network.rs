//! Convolutional encoder/decoder and the transfer losses as graph ops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferDims {
    /// Channels per input frame.
    pub input: usize,
    /// Encoder output channels per layer; each layer halves time.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub classes: usize,
}

impl TransferDims {
    pub fn new(input: usize, classes: usize) -> Self {
        TransferDims {
            input,
            channels: vec![64, 96, 128, 160],
            kernel: 4,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.kernel == 0 || self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::arg("transfer widths, kernel and layer count must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::arg("transfer needs at least two property classes"));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.channels.len()
    }

    /// Latent `[frames / 2^L, last channel]` for `frames` input frames.
    pub fn latent_shape(&self, frames: usize) -> Result<[usize; 2]> {
        let f = 1usize << self.layers();
        if frames == 0 || frames % f != 0 {
            return Err(Error::arg(format!("frame count {frames} must be a positive multiple of {f}")));
        }
        Ok([frames / f, *self.channels.last().expect("validated")])
    }

    fn encoder_io(&self) -> Vec<(usize, usize)> {
        let mut prev = self.input;
        self.channels
            .iter()
            .map(|&c| {
                let io = (prev, c);
                prev = c;
                io
            })
            .collect()
    }

    fn decoder_io(&self) -> Vec<(usize, usize)> {
        let l = self.layers();
        (0..l)
            .map(|i| {
                let cin = if i == 0 { self.channels[l - 1] + self.classes } else { self.channels[l - 1 - i] };
                let cout = if i + 1 == l { self.input } else { self.channels[l - 2 - i] };
                (cin, cout)
            })
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (prefix, io) in [("enc", self.encoder_io()), ("dec", self.decoder_io())] {
            for (i, (cin, cout)) in io.into_iter().enumerate() {
                out.push((format!("{prefix}{i}.w"), vec![self.kernel, cin, cout]));
                out.push((format!("{prefix}{i}.b"), vec![cout]));
            }
        }
        out
    }

    /// He-uniform kernels (Glorot for the linear output layer), zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let last = format!("dec{}.w", self.layers() - 1);
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                let fan_in = (shape[0] * shape[1]) as f64;
                let fan_out = (shape[0] * shape[2]) as f64;
                let limit = if name == last { (6.0 / (fan_in + fan_out)).sqrt() } else { (6.0 / fan_in).sqrt() };
                Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
            };
            store.insert(name, t);
        }
        store
    }

    pub fn check_params(&self, params: &ParamStore) -> Result<()> {
        let expected = self.param_shapes();
        if params.len() != expected.len() {
            return Err(Error::arg(format!(
                "transfer network expects {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            let t = params.expect(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::arg(format!("parameter `{name}` has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }
}

/// Encoder and decoder weights as graph nodes.
#[derive(Clone, Debug)]
pub struct TransferNodes {
    pub encoder: Vec<(NodeId, NodeId)>,
    pub decoder: Vec<(NodeId, NodeId)>,
    pub classes: usize,
}

impl TransferNodes {
    pub fn bind(g: &mut Graph, params: &ParamStore, dims: &TransferDims) -> Result<Self> {
        let mut layer = |prefix: &str, i: usize| -> Result<(NodeId, NodeId)> {
            let w = format!("{prefix}{i}.w");
            let b = format!("{prefix}{i}.b");
            Ok((g.param(&w, params.expect(&w)?.clone()), g.param(&b, params.expect(&b)?.clone())))
        };
        let encoder = (0..dims.layers()).map(|i| layer("enc", i)).collect::<Result<_>>()?;
        let decoder = (0..dims.layers()).map(|i| layer("dec", i)).collect::<Result<_>>()?;
        Ok(TransferNodes {
            encoder,
            decoder,
            classes: dims.classes,
        })
    }
}

/// `x: [B, T, C_in]` through stride-2 convolutions with ReLU → `[B, T/2^L, C_L]`.
pub fn encode(g: &mut Graph, x: NodeId, nodes: &TransferNodes) -> Result<NodeId> {
    let mut h = x;
    for &(w, b) in &nodes.encoder {
        h = g.conv1d_same(h, w, 2)?;
        h = g.add(h, b)?;
        h = g.relu(h)?;
    }
    Ok(h)
}

/// One-hot `labels` tiled over `frames`: `[B, frames, classes]`.
pub fn one_hot_tiled(labels: &[usize], frames: usize, classes: usize) -> Result<Tensor> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::arg(format!("target property {bad} outside {classes} classes")));
    }
    let mut data = vec![0.0; labels.len() * frames * classes];
    for (i, &y) in labels.iter().enumerate() {
        for t in 0..frames {
            data[(i * frames + t) * classes + y] = 1.0;
        }
    }
    Tensor::new(vec![labels.len(), frames, classes], data)
}

/// Concatenates the tiled one-hot of `targets` to `z: [B, T_z, C_L]`, then
/// upsamples ×2 and convolves (stride 1) per layer; the last layer is linear.
pub fn decode(g: &mut Graph, z: NodeId, targets: &[usize], nodes: &TransferNodes) -> Result<NodeId> {
    let shape = g.shape(z).to_vec();
    if shape.len() != 3 || shape[0] != targets.len() {
        return Err(Error::arg(format!(
            "latent {shape:?} does not match {} targets",
            targets.len()
        )));
    }
    let cond = g.constant(one_hot_tiled(targets, shape[1], nodes.classes)?);
    let mut h = g.concat(&[z, cond], 2)?;
    let last = nodes.decoder.len() - 1;
    for (i, &(w, b)) in nodes.decoder.iter().enumerate() {
        h = g.upsample2(h)?;
        h = g.conv1d_same(h, w, 1)?;
        h = g.add(h, b)?;
        if i < last {
            h = g.relu(h)?;
        }
    }
    Ok(h)
}

/// Sum of squared differences over frames and channels, averaged over the batch.
pub fn reconstruction_loss(g: &mut Graph, output: NodeId, target: NodeId) -> Result<NodeId> {
    let batch = g.shape(output).first().copied().unwrap_or(1).max(1);
    let s = g.squared_error_sum(output, target)?;
    g.affine(s, 1.0 / batch as f64, 0.0)
}

/// `‖z − z⁺‖² + max(0, α − ‖z − z⁻‖)²` per sample, averaged over the batch.
pub fn contrastive_loss(g: &mut Graph, z: NodeId, pos: NodeId, neg: NodeId, alpha: f64) -> Result<NodeId> {
    if !(alpha > 0.0) {
        return Err(Error::arg("contrastive margin must be positive"));
    }
    let dp = g.sub(z, pos)?;
    let dp2 = g.mul(dp, dp)?;
    let pull = g.sum_trailing(dp2, 1)?;
    let dn = g.sub(z, neg)?;
    let dn2 = g.mul(dn, dn)?;
    let dn2 = g.sum_trailing(dn2, 1)?;
    let dist = g.sqrt(dn2)?;
    let gap = g.affine(dist, -1.0, alpha)?;
    let hinge = g.relu(gap)?;
    let push = g.mul(hinge, hinge)?;
    let per = g.add(pull, push)?;
    g.mean(per)
}

/// `rec + λ · ctr`.
pub fn total_loss(g: &mut Graph, rec: NodeId, ctr: NodeId, lambda: f64) -> Result<NodeId> {
    if !(lambda >= 0.0) {
        return Err(Error::arg("contrastive weight must be non-negative"));
    }
    let w = g.affine(ctr, lambda, 0.0)?;
    g.add(rec, w)
}
