use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::model::{argmax, prepare_sequence, Classifier, ClassifierHeader, InputKind};
use super::network::ClassifierDims;
use super::NeighborhoodSpec;
use crate::autodiff::{adam_step, AdamConfig, AdamState, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::rng;
use crate::skeleton::{
    augment_with, features_2d, project_weak_perspective, view_yaws, Camera, DatasetManifest, MotionSequence,
    Representation, SkeletonTopology, Split,
};
use crate::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub representation: Representation,
    pub neighborhood: NeighborhoodSpec,
    /// Frames after resampling.
    pub frames: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub graph1: usize,
    pub graph2: usize,
    pub hidden: usize,
    pub fc: usize,
    pub shared_attention: bool,
    /// Augmentation: random rotations per clip, and crops per rotation.
    /// Zero disables augmentation.
    pub rotations: usize,
    pub crops: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            representation: Representation::position_speed(),
            neighborhood: NeighborhoodSpec::Parent,
            frames: 30,
            batch_size: 32,
            lr: 1e-4,
            epochs: 60,
            seed: 0,
            graph1: 32,
            graph2: 64,
            hidden: 128,
            fc: 64,
            shared_attention: true,
            rotations: 10,
            crops: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::arg("frames must be at least 2"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch size and epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        self.neighborhood.validate()
    }

    pub fn dims(&self, input: usize, classes: usize) -> ClassifierDims {
        ClassifierDims {
            input,
            graph1: self.graph1,
            graph2: self.graph2,
            hidden: self.hidden,
            fc: self.fc,
            classes,
            shared_attention: self.shared_attention,
        }
    }
}

/// A prepared `[T, J, D]` feature tensor and its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Tensor,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation error
    /// (validation loss breaks ties).
    pub classifier: Classifier,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Augments (when enabled) and prepares training clips. Clip `i` draws its
/// augmentations from its own seeded stream.
pub fn prepare_training_set(
    seqs: &[MotionSequence],
    topo: &SkeletonTopology,
    config: &TrainConfig,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, seq) in seqs.iter().enumerate() {
        if config.rotations == 0 || config.crops == 0 {
            out.push(prepare_sample(seq, topo, config)?);
            continue;
        }
        let mut r = rng::stream(config.seed, &[rng::tag("augment"), i as u64]);
        for (_, aug) in augment_with(seq, config.rotations, config.crops, &mut r) {
            out.push(prepare_sample(&aug, topo, config)?);
        }
    }
    Ok(out)
}

/// Prepares clips without augmentation.
pub fn prepare_samples(seqs: &[MotionSequence], topo: &SkeletonTopology, config: &TrainConfig) -> Result<Vec<Sample>> {
    seqs.iter().map(|s| prepare_sample(s, topo, config)).collect()
}

fn prepare_sample(seq: &MotionSequence, topo: &SkeletonTopology, config: &TrainConfig) -> Result<Sample> {
    Ok(Sample {
        features: prepare_sequence(seq, topo, &config.representation, config.frames)?,
        label: seq.property_label,
    })
}

/// Weak-perspective samples: every clip (augmented when `augment` is set
/// and the config enables it) seen from `views` yaws `k·π/8`.
pub fn prepare_projected_samples(
    seqs: &[MotionSequence],
    topo: &SkeletonTopology,
    config: &TrainConfig,
    camera: &Camera,
    views: usize,
    augment: bool,
) -> Result<Vec<Sample>> {
    let yaws = view_yaws(views);
    let mut out = Vec::new();
    for (i, seq) in seqs.iter().enumerate() {
        let clips = if augment && config.rotations > 0 && config.crops > 0 {
            let mut r = rng::stream(config.seed, &[rng::tag("augment"), i as u64]);
            augment_with(seq, config.rotations, config.crops, &mut r)
                .into_iter()
                .map(|(_, s)| s)
                .collect()
        } else {
            vec![seq.clone()]
        };
        for clip in &clips {
            for &yaw in &yaws {
                let proj = project_weak_perspective(clip, yaw, camera)?;
                out.push(Sample {
                    features: features_2d(&proj, topo, config.frames)?,
                    label: seq.property_label,
                });
            }
        }
    }
    Ok(out)
}

/// Per-channel root mean square over every frame and joint; zero channels get 1.
pub fn channel_rms(samples: &[Sample]) -> Vec<f64> {
    let d = samples.first().map_or(0, |s| *s.features.shape().last().unwrap_or(&0));
    let mut acc = vec![0.0; d];
    let mut n = 0usize;
    for s in samples {
        for row in s.features.data().chunks(d) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v * v;
            }
            n += 1;
        }
    }
    acc.iter()
        .map(|a| {
            let r = (a / n.max(1) as f64).sqrt();
            if r > 0.0 && r.is_finite() {
                r
            } else {
                1.0
            }
        })
        .collect()
}

/// Visits every class equally often per epoch: classes are interleaved and
/// smaller classes are recycled.
fn balanced_order<R: rand::Rng + ?Sized>(labels: &[usize], classes: usize, rng: &mut R) -> Vec<usize> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for c in &mut by_class {
        c.shuffle(rng);
    }
    let longest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut order = Vec::with_capacity(longest * classes);
    for i in 0..longest {
        for c in by_class.iter().filter(|c| !c.is_empty()) {
            order.push(c[i % c.len()]);
        }
    }
    order
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    -((logits[label] - max).exp() / z).max(PROB_FLOOR).ln()
}

/// Mean cross-entropy and error rate.
pub fn loss_and_error(classifier: &Classifier, samples: &[Sample], topo: &SkeletonTopology) -> Result<(f64, f64)> {
    let feats: Vec<&Tensor> = samples.iter().map(|s| &s.features).collect();
    let logits = classifier.logits(&feats, topo)?;
    let n = samples.len() as f64;
    let loss = logits.iter().zip(samples).map(|(l, s)| cross_entropy(l, s.label)).sum::<f64>() / n;
    let wrong = logits.iter().zip(samples).filter(|(l, s)| argmax(l) != s.label).count();
    Ok((loss, wrong as f64 / n))
}

/// Minibatch Adam on cross-entropy. Inputs are divided by the per-channel
/// RMS of the training set.
pub fn train_on_samples(
    train: &[Sample],
    val: &[Sample],
    topo: &SkeletonTopology,
    input: InputKind,
    classes: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::arg("training and validation splits must be non-empty"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.label >= classes) {
        return Err(Error::arg(format!("label {} outside {classes} classes", s.label)));
    }
    let dims = config.dims(input.dim(), classes);
    let header = ClassifierHeader {
        dims,
        neighborhood: config.neighborhood,
        input,
        frames: config.frames,
        input_scale: channel_rms(train),
    };
    let params = dims.init_params(topo.num_joints(), &mut rng::stream(config.seed, &[rng::tag("init")]));
    let mut model = Classifier::new(header, params, topo)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let mut best: Option<(f64, f64, usize, Classifier)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut r = rng::stream(config.seed, &[rng::tag("epoch"), epoch as u64]);
        let order = balanced_order(&labels, classes, &mut r);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let feats: Vec<&Tensor> = chunk.iter().map(|&i| &train[i].features).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let (mut g, out) = model.graph(&feats, topo)?;
            let loss = g.softmax_cross_entropy(out.logits, &y)?;
            total += g.value(loss).item().unwrap_or(f64::NAN);
            batches += 1;
            let grads = g.backward(loss)?;
            adam_step(&mut model.params, grads.params(), &mut adam)?;
        }
        let (val_loss, val_error) = loss_and_error(&model, val, topo)?;
        let train_loss = total / batches as f64;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::NonFinite(format!("loss diverged at epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_error,
        });
        let better = match &best {
            None => true,
            Some((e, l, _, _)) => val_error < *e || (val_error == *e && val_loss < *l),
        };
        if better {
            best = Some((val_error, val_loss, epoch, model.clone()));
        }
    }
    let (_, _, best_epoch, classifier) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        classifier,
        best_epoch,
        log,
    })
}

/// Trains on 3D clips: augmentation and feature preparation, then
/// [`train_on_samples`].
pub fn train_classifier(
    train: &[MotionSequence],
    val: &[MotionSequence],
    topo: &SkeletonTopology,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let classes = train
        .iter()
        .chain(val)
        .map(|s| s.n_classes)
        .max()
        .ok_or_else(|| Error::arg("training split is empty"))?;
    let train_samples = prepare_training_set(train, topo, config)?;
    let val_samples = prepare_samples(val, topo, config)?;
    train_on_samples(
        &train_samples,
        &val_samples,
        topo,
        InputKind::Skeleton(config.representation.clone()),
        classes,
        config,
    )
}

/// Loads the clips of one split, resolving paths against `root`.
pub fn load_split(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    topo: &SkeletonTopology,
) -> Result<Vec<MotionSequence>> {
    manifest
        .split(split)
        .into_iter()
        .map(|e| MotionSequence::load(&root.join(&e.path), topo))
        .collect()
}

/// Trains on the `train` split of a manifest and selects on `val`.
pub fn train_from_manifest(
    manifest: &DatasetManifest,
    root: &Path,
    topo: &SkeletonTopology,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train = load_split(manifest, root, Split::Train, topo)?;
    let val = load_split(manifest, root, Split::Val, topo)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::arg("manifest needs non-empty train and val splits"));
    }
    train_classifier(&train, &val, topo, config)
}

/// Argmax metrics of a classifier on prepared samples.
pub fn evaluate(classifier: &Classifier, samples: &[Sample], topo: &SkeletonTopology) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::arg("cannot evaluate an empty split"));
    }
    let feats: Vec<&Tensor> = samples.iter().map(|s| &s.features).collect();
    let predicted = classifier.predict(&feats, topo)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(Metrics::from_predictions(&predicted, &truth, classifier.header.dims.classes))
}
