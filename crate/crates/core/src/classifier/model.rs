use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::network::{classify_forward, ClassifierDims, ClassifierNodes};
use super::NeighborhoodSpec;
use crate::autodiff::{Checkpoint, CheckpointMeta, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::skeleton::{build_features, resample, MotionSequence, Representation, SkeletonTopology};
use crate::Tensor;

/// What the classifier consumes per joint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Body-frame 3D features of the given channels.
    Skeleton(Representation),
    /// Root-centred weak-perspective positions and velocities (`D = 4`).
    Projected,
}

impl InputKind {
    pub fn dim(&self) -> usize {
        match self {
            InputKind::Skeleton(rep) => rep.dim(),
            InputKind::Projected => 4,
        }
    }
}

/// Everything besides the weights needed to run a trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierHeader {
    pub dims: ClassifierDims,
    pub neighborhood: NeighborhoodSpec,
    pub input: InputKind,
    /// Frames after resampling.
    pub frames: usize,
    /// Per-channel divisor applied to raw features.
    pub input_scale: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub header: ClassifierHeader,
    pub params: ParamStore,
}

const EVAL_BATCH: usize = 64;

impl Classifier {
    pub fn new(header: ClassifierHeader, params: ParamStore, topo: &SkeletonTopology) -> Result<Self> {
        header.dims.validate()?;
        header.neighborhood.validate()?;
        if header.input_scale.len() != header.dims.input || header.input.dim() != header.dims.input {
            return Err(Error::arg("input scale, input kind and input width disagree"));
        }
        if header.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::arg("input scale entries must be positive"));
        }
        header.dims.check_params(&params, topo.num_joints())?;
        Ok(Classifier { header, params })
    }

    /// Resamples a world-frame sequence and builds its features.
    pub fn prepare(&self, seq: &MotionSequence, topo: &SkeletonTopology) -> Result<Tensor> {
        match &self.header.input {
            InputKind::Skeleton(rep) => prepare_sequence(seq, topo, rep, self.header.frames),
            InputKind::Projected => Err(Error::arg("this classifier takes projected 2D input")),
        }
    }

    fn stack(&self, batch: &[&Tensor], topo: &SkeletonTopology) -> Result<Tensor> {
        let (t, j, d) = (self.header.frames, topo.num_joints(), self.header.dims.input);
        let mut data = Vec::with_capacity(batch.len() * t * j * d);
        for x in batch {
            if x.shape() != [t, j, d] {
                return Err(Error::arg(format!("sample shape {:?}, expected [{t}, {j}, {d}]", x.shape())));
            }
            data.extend(x.data().iter().enumerate().map(|(i, v)| v / self.header.input_scale[i % d]));
        }
        Tensor::new(vec![batch.len(), t, j, d], data)
    }

    /// Builds the forward graph for a batch of `[T, J, D]` feature tensors.
    pub(crate) fn graph(
        &self,
        batch: &[&Tensor],
        topo: &SkeletonTopology,
    ) -> Result<(Graph, super::network::ForwardNodes)> {
        let x = self.stack(batch, topo)?;
        let mut g = Graph::new();
        let input = g.input("x", x);
        let nodes = ClassifierNodes::bind(&mut g, &self.params, self.header.dims.shared_attention)?;
        let out = classify_forward(&mut g, input, &nodes, topo, self.header.neighborhood)?;
        Ok((g, out))
    }

    /// Logits and `[T, J]` attention maps of every sample.
    pub fn forward(&self, samples: &[&Tensor], topo: &SkeletonTopology) -> Result<(Vec<Vec<f64>>, Vec<Tensor>)> {
        let (mut logits, mut maps) = (Vec::new(), Vec::new());
        let (t, j) = (self.header.frames, topo.num_joints());
        for chunk in samples.chunks(EVAL_BATCH) {
            let (g, out) = self.graph(chunk, topo)?;
            logits.extend(g.value(out.logits).data().chunks(self.header.dims.classes).map(<[f64]>::to_vec));
            for a in g.value(out.attention).data().chunks(t * j) {
                maps.push(Tensor::new(vec![t, j], a.to_vec())?);
            }
        }
        Ok((logits, maps))
    }

    pub fn logits(&self, samples: &[&Tensor], topo: &SkeletonTopology) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(samples, topo)?.0)
    }

    pub fn predict(&self, samples: &[&Tensor], topo: &SkeletonTopology) -> Result<Vec<usize>> {
        Ok(self.logits(samples, topo)?.iter().map(|l| argmax(l)).collect())
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Result<Checkpoint> {
        Ok(Checkpoint {
            params: self.params.clone(),
            meta: CheckpointMeta {
                seed,
                step,
                hyperparameters: serde_json::to_value(&self.header)?,
            },
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, topo: &SkeletonTopology) -> Result<Self> {
        let header: ClassifierHeader = serde_json::from_value(ckpt.meta.hyperparameters.clone())
            .map_err(|e| Error::Schema {
                path: "metadata.hyperparameters".into(),
                detail: e.to_string(),
            })?;
        Classifier::new(header, ckpt.params, topo)
    }

    pub fn header_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(&self.header)?)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Resamples to `frames` frames and builds body-frame features.
pub fn prepare_sequence(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    rep: &Representation,
    frames: usize,
) -> Result<Tensor> {
    Ok(build_features(&resample(seq, frames)?, topo, rep)?.features)
}
