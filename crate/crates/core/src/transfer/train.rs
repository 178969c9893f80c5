use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{
    contrastive_loss, decode, encode, reconstruction_loss, total_loss, TransferDims, TransferNodes,
};
use super::repr::{reassemble, to_transfer_input, transfer_channels, TransferInput, TRANSFER_FRAMES};
use super::triplets::{TransferCorpus, TripletBatch};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Checkpoint, CheckpointMeta, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::rng;
use crate::skeleton::{ContactThresholds, MotionSequence, SkeletonTopology};
use crate::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub frames: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Weight of the contrastive term.
    pub lambda: f64,
    /// Contrastive margin.
    pub alpha: f64,
    pub seed: u64,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub contacts: ContactThresholds,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            frames: TRANSFER_FRAMES,
            batch_size: 32,
            lr: 1e-5,
            epochs: 200,
            lambda: 0.1,
            alpha: 5.0,
            seed: 0,
            channels: vec![64, 96, 128, 160],
            kernel: 4,
            contacts: ContactThresholds::default(),
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch size and epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::arg("lambda must be non-negative"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::arg("alpha must be positive"));
        }
        let dims = self.dims(1, 2);
        dims.validate()?;
        dims.latent_shape(self.frames)?;
        self.contacts.validate()
    }

    pub fn dims(&self, joints: usize, classes: usize) -> TransferDims {
        TransferDims {
            input: transfer_channels(joints),
            channels: self.channels.clone(),
            kernel: self.kernel,
            classes,
        }
    }

    /// Converts clips to the transfer representation.
    pub fn prepare(&self, seqs: &[MotionSequence], topo: &SkeletonTopology) -> Result<Vec<TransferInput>> {
        seqs.iter()
            .map(|s| to_transfer_input(s, topo, self.frames, &self.contacts))
            .collect()
    }
}

/// Everything besides the weights needed to run a trained transfer network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferHeader {
    pub dims: TransferDims,
    pub frames: usize,
    pub contacts: ContactThresholds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferModel {
    pub header: TransferHeader,
    pub params: ParamStore,
}

const EVAL_BATCH: usize = 64;

fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let shape = items.first().map(|t| t.shape().to_vec()).unwrap_or_default();
    let mut data = Vec::with_capacity(items.len() * items.first().map_or(0, |t| t.len()));
    for t in items {
        if t.shape() != shape.as_slice() {
            return Err(Error::arg(format!("mixed sample shapes {:?} and {shape:?}", t.shape())));
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![items.len()];
    full.extend(shape);
    Tensor::new(full, data)
}

fn unstack(t: &Tensor) -> Vec<Tensor> {
    let inner = t.shape()[1..].to_vec();
    let n: usize = inner.iter().product();
    t.data()
        .chunks(n)
        .map(|c| Tensor::new(inner.clone(), c.to_vec()).expect("chunk matches shape"))
        .collect()
}

impl TransferModel {
    pub fn new(header: TransferHeader, params: ParamStore) -> Result<Self> {
        header.dims.validate()?;
        header.dims.latent_shape(header.frames)?;
        header.dims.check_params(&params)?;
        Ok(TransferModel { header, params })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.header.frames, self.header.dims.input];
        if x.shape() != want {
            return Err(Error::arg(format!("transfer input shape {:?}, expected {want:?}", x.shape())));
        }
        Ok(())
    }

    /// Latents `[T_z, C_L]` of `[T, C_in]` inputs.
    pub fn encode(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_BATCH) {
            for x in chunk {
                self.check_input(x)?;
            }
            let mut g = Graph::new();
            let x = g.input("x", stack(chunk)?);
            let nodes = TransferNodes::bind(&mut g, &self.params, &self.header.dims)?;
            let z = encode(&mut g, x, &nodes)?;
            out.extend(unstack(g.value(z)));
        }
        Ok(out)
    }

    /// Decodes latents under target properties.
    pub fn decode(&self, latents: &[&Tensor], targets: &[usize]) -> Result<Vec<Tensor>> {
        if latents.len() != targets.len() {
            return Err(Error::arg("one target property per latent is required"));
        }
        let want = self.header.dims.latent_shape(self.header.frames)?;
        let mut out = Vec::with_capacity(latents.len());
        for (chunk, ys) in latents.chunks(EVAL_BATCH).zip(targets.chunks(EVAL_BATCH)) {
            if let Some(z) = chunk.iter().find(|z| z.shape() != want) {
                return Err(Error::arg(format!("latent shape {:?}, expected {want:?}", z.shape())));
            }
            let mut g = Graph::new();
            let z = g.input("z", stack(chunk)?);
            let nodes = TransferNodes::bind(&mut g, &self.params, &self.header.dims)?;
            let y = decode(&mut g, z, ys, &nodes)?;
            out.extend(unstack(g.value(y)));
        }
        Ok(out)
    }

    /// `decode(encode(x), y')` in the transfer representation.
    pub fn reconstruct(&self, inputs: &[&Tensor], targets: &[usize]) -> Result<Vec<Tensor>> {
        let z = self.encode(inputs)?;
        self.decode(&z.iter().collect::<Vec<_>>(), targets)
    }

    /// Re-synthesises a clip at property `target` in the world frame.
    pub fn transfer(&self, seq: &MotionSequence, target: usize, topo: &SkeletonTopology) -> Result<MotionSequence> {
        let input = to_transfer_input(seq, topo, self.header.frames, &self.header.contacts)?;
        self.transfer_input(&input, target, topo)
    }

    pub fn transfer_input(
        &self,
        input: &TransferInput,
        target: usize,
        topo: &SkeletonTopology,
    ) -> Result<MotionSequence> {
        let out = self.reconstruct(&[&input.data], &[target])?;
        reassemble(&out[0], input, target, topo)
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

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let header: TransferHeader =
            serde_json::from_value(ckpt.meta.hyperparameters.clone()).map_err(|e| Error::Schema {
                path: "metadata.hyperparameters".into(),
                detail: e.to_string(),
            })?;
        TransferModel::new(header, ckpt.params)
    }
}

/// Losses of one triplet batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferLosses {
    pub total: f64,
    pub reconstruction: f64,
    pub contrastive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferEpochLog {
    pub epoch: usize,
    pub train: TransferLosses,
    pub val: TransferLosses,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferOutcome {
    /// Parameters of the epoch with the lowest validation total loss.
    pub model: TransferModel,
    pub best_epoch: usize,
    pub log: Vec<TransferEpochLog>,
}

/// Builds the loss graph of a triplet batch. Anchors, positives and
/// negatives share one encoder pass.
pub fn triplet_graph(
    corpus: &TransferCorpus,
    batch: &TripletBatch,
    params: &ParamStore,
    dims: &TransferDims,
    lambda: f64,
    alpha: f64,
) -> Result<(Graph, [crate::autodiff::NodeId; 3])> {
    let b = batch.anchors.len();
    let rows: Vec<&Tensor> = [&batch.anchors, &batch.positives, &batch.negatives]
        .into_iter()
        .flatten()
        .map(|&i| &corpus.items[i].data)
        .collect();
    let targets: Vec<&Tensor> = batch.target_items.iter().map(|&i| &corpus.items[i].data).collect();
    let mut g = Graph::new();
    let x = g.input("x", stack(&rows)?);
    let x_hat = g.input("x_hat", stack(&targets)?);
    let nodes = TransferNodes::bind(&mut g, params, dims)?;
    let z_all = encode(&mut g, x, &nodes)?;
    let z = g.slice(z_all, 0, 0, b)?;
    let zp = g.slice(z_all, 0, b, b)?;
    let zn = g.slice(z_all, 0, 2 * b, b)?;
    let out = decode(&mut g, z, &batch.targets, &nodes)?;
    let rec = reconstruction_loss(&mut g, out, x_hat)?;
    let ctr = contrastive_loss(&mut g, z, zp, zn, alpha)?;
    let total = total_loss(&mut g, rec, ctr, lambda)?;
    Ok((g, [total, rec, ctr]))
}

fn losses(g: &Graph, ids: [crate::autodiff::NodeId; 3]) -> TransferLosses {
    let v = |i| g.value(i).item().unwrap_or(f64::NAN);
    TransferLosses {
        total: v(ids[0]),
        reconstruction: v(ids[1]),
        contrastive: v(ids[2]),
    }
}

fn accumulate(acc: &mut TransferLosses, l: TransferLosses, w: f64) {
    acc.total += w * l.total;
    acc.reconstruction += w * l.reconstruction;
    acc.contrastive += w * l.contrastive;
}

/// Sample-weighted mean losses over fixed batches.
fn evaluate_batches(
    corpus: &TransferCorpus,
    batches: &[TripletBatch],
    params: &ParamStore,
    config: &TransferConfig,
    dims: &TransferDims,
) -> Result<TransferLosses> {
    let n: usize = batches.iter().map(|b| b.anchors.len()).sum();
    let mut acc = TransferLosses::default();
    for b in batches {
        let (g, ids) = triplet_graph(corpus, b, params, dims, config.lambda, config.alpha)?;
        accumulate(&mut acc, losses(&g, ids), b.anchors.len() as f64 / n as f64);
    }
    Ok(acc)
}

/// Adam on `rec + λ·ctr`. Every training clip is an anchor once per epoch;
/// validation uses one fixed draw of triplets, and the epoch with the lowest
/// validation total is returned.
pub fn train_transfer(
    train: &TransferCorpus,
    val: &TransferCorpus,
    config: &TransferConfig,
) -> Result<TransferOutcome> {
    config.validate()?;
    if train.classes != val.classes {
        return Err(Error::arg("train and validation corpora disagree on the class count"));
    }
    let c = train.items[0].data.shape()[1];
    if c < super::repr::GLOBAL_CHANNELS + 3
        || (c - super::repr::GLOBAL_CHANNELS) % 3 != 0 || val.items[0].data.shape() != train.items[0].data.shape() {
        return Err(Error::arg("corpus channel layout does not match a skeleton"));
    }
    let dims = config.dims((c - super::repr::GLOBAL_CHANNELS) / 3, train.classes);
    let header = TransferHeader {
        dims: dims.clone(),
        frames: config.frames,
        contacts: config.contacts,
    };
    let mut model = TransferModel::new(header, dims.init_params(&mut rng::stream(config.seed, &[rng::tag("init")])))?;
    let mut vr = rng::stream(config.seed, &[rng::tag("val")]);
    let val_batches: Vec<TripletBatch> = (0..val.len())
        .collect::<Vec<_>>()
        .chunks(config.batch_size)
        .map(|a| val.triplets_for(a, &mut vr))
        .collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut r = rng::stream(config.seed, &[rng::tag("epoch"), epoch as u64]);
        let mut anchors: Vec<usize> = (0..train.len()).collect();
        anchors.shuffle(&mut r);
        let mut acc = TransferLosses::default();
        for chunk in anchors.chunks(config.batch_size) {
            let batch = train.triplets_for(chunk, &mut r);
            let (g, ids) = triplet_graph(train, &batch, &model.params, &dims, config.lambda, config.alpha)?;
            accumulate(&mut acc, losses(&g, ids), chunk.len() as f64 / train.len() as f64);
            let grads = g.backward(ids[0])?;
            adam_step(&mut model.params, grads.params(), &mut adam)?;
        }
        let v = evaluate_batches(val, &val_batches, &model.params, config, &dims)?;
        if !(acc.total.is_finite() && v.total.is_finite()) {
            return Err(Error::NonFinite(format!("transfer loss diverged at epoch {epoch}")));
        }
        log.push(TransferEpochLog {
            epoch,
            train: acc,
            val: v,
        });
        if best.as_ref().is_none_or(|(l, _, _)| v.total < *l) {
            best = Some((v.total, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TransferOutcome {
        model,
        best_epoch,
        log,
    })
}
