//! Command-line front end.
//!
//! Every subcommand resolves its settings from an optional JSON object
//! (`--config`) overlaid with the flags given on the command line, writes the
//! result to `config.resolved.json` in the output directory, runs, and
//! finishes with `run.json` (inputs, outputs, seed, version, wall time).
//! Everything except `run.json` is byte-reproducible.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::autodiff::Checkpoint;
use crate::classifier::{
    attention_colors, evaluate, load_split, prepare_projected_samples, prepare_samples, prepare_training_set,
    train_on_samples, write_attention_csv, Classifier, EpochLog, InputKind, TrainConfig,
};
use crate::error::{Error, Result};
use crate::io;
use crate::rng;
use crate::skeleton::{
    augment_with, project_weak_perspective, view_yaws, Camera, DatasetManifest, MotionSequence, SkeletonTopology,
    Split,
};
use crate::synth::{gen_dataset, GeneratorConfig};
use crate::transfer::{
    pca_2d, write_latent_csv, LatentPoint, TransferConfig, TransferCorpus, TransferEpochLog, TransferModel,
};
use crate::Tensor;

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const RUN_MANIFEST: &str = "run.json";
pub const TRAIN_LOG: &str = "train_log.ndjson";
pub const MODEL_FILE: &str = "model.json";

#[derive(Parser, Debug)]
#[command(name = "motionprop", version, about = "Object-property inference and transfer for skeletal motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus: motions/, truth/ and manifest.csv.
    Gen(GenArgs),
    /// Write rotated and cropped copies of one motion file.
    Augment(AugmentArgs),
    /// Project one motion file into weak-perspective views.
    Project2d(Project2dArgs),
    /// Train the property classifier on a generated corpus.
    TrainCls(TrainClsArgs),
    /// Evaluate a classifier on one split; writes metrics.json.
    EvalCls(EvalClsArgs),
    /// Train the property-conditioned transfer network.
    TrainXfer(TrainXferArgs),
    /// Re-synthesise a motion at a target property value.
    Transfer(TransferArgs),
    /// Export 2D principal components of transfer latents.
    Latent(LatentArgs),
    /// Export per-joint attention of a classifier on one motion.
    Attention(AttentionArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// JSON object of settings; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// lift, walk or drink.
    #[arg(long)]
    pub action: Option<String>,
    #[arg(long)]
    #[serde(rename = "n_classes")]
    pub classes: Option<usize>,
    #[arg(long)]
    #[serde(rename = "n_subjects")]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Per-coordinate joint noise in metres.
    #[arg(long)]
    pub noise: Option<f64>,
    /// xyz or xy_only.
    #[arg(long)]
    pub signal_axes: Option<String>,
    #[arg(long)]
    pub z_signal_fraction: Option<f64>,
    #[arg(long)]
    pub timing_jitter: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct AugmentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Motion file to augment.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rotations: Option<usize>,
    #[arg(long)]
    pub crops: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct Project2dArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of cameras, 22.5° apart.
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainClsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Corpus directory holding manifest.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train on this many projected views instead of 3D features (0 = 3D).
    #[arg(long)]
    pub views: Option<usize>,
    /// Comma-separated channels: position, speed, euler_angles, angular_speed.
    #[arg(long, value_delimiter = ',')]
    pub representation: Option<Vec<String>>,
    /// self, parent, ancestors:K, khop:K or full.
    #[arg(long)]
    pub neighborhood: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub graph1: Option<usize>,
    #[arg(long)]
    pub graph2: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub fc: Option<usize>,
    #[arg(long)]
    pub shared_attention: Option<bool>,
    #[arg(long)]
    pub rotations: Option<usize>,
    #[arg(long)]
    pub crops: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalClsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Classifier checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Views per clip for a classifier trained on projections.
    #[arg(long)]
    pub views: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainXferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight of the contrastive term.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Contrastive margin.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated encoder widths.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub kernel: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct TransferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Transfer checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target_property: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct LatentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct AttentionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Classifier checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// 2 for anything wrong with the inputs or settings, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_)
        | Error::Schema { .. }
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Topology(_)
        | Error::Motion(_)
        | Error::Unsatisfiable(_)
        | Error::DegenerateFrame { .. }
        | Error::ZeroLengthBone { .. } => 2,
        _ => 3,
    }
}

/// Merged settings and where they came from, for error messages.
struct Settings {
    map: Map<String, Value>,
    origin: PathBuf,
}

/// Overlays the non-empty flags on the `--config` object.
fn resolve<A: Serialize>(config: Option<&Path>, args: &A) -> Result<Settings> {
    let mut merged = match config {
        Some(p) => {
            require_file(p)?;
            match io::read_json::<Value>(p)? {
                Value::Object(m) => m,
                _ => {
                    return Err(Error::Schema {
                        path: p.to_path_buf(),
                        detail: "config must be a JSON object".into(),
                    })
                }
            }
        }
        None => Map::new(),
    };
    if let Value::Object(flags) = serde_json::to_value(args)? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    let origin = config.map_or_else(|| PathBuf::from("<command line>"), Path::to_path_buf);
    Ok(Settings { map: merged, origin })
}

fn schema(origin: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Schema {
        path: origin.to_path_buf(),
        detail: detail.to_string(),
    }
}

impl Settings {
    fn parse<T: DeserializeOwned>(self) -> Result<T> {
        serde_json::from_value(Value::Object(self.map)).map_err(|e| schema(&self.origin, e))
    }

    fn take<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>> {
        self.map
            .remove(key)
            .map(|v| serde_json::from_value(v).map_err(|e| schema(&self.origin, format!("`{key}`: {e}"))))
            .transpose()
    }

    fn required<T: DeserializeOwned>(&mut self, key: &str) -> Result<T> {
        self.take(key)?
            .ok_or_else(|| Error::arg(format!("missing required setting `{key}`")))
    }

    /// Splits `keys` off and parses the rest as `T`. The snapshot holds both,
    /// with defaults filled in.
    fn split<T: DeserializeOwned + Serialize>(mut self, keys: &[&str]) -> Result<(Settings, T, Value)> {
        let mut own = Map::new();
        for k in keys {
            if let Some(v) = self.map.remove(*k) {
                own.insert((*k).to_string(), v);
            }
        }
        let origin = self.origin.clone();
        let inner: T = self.parse()?;
        let mut snapshot = match serde_json::to_value(&inner)? {
            Value::Object(o) => o,
            _ => Map::new(),
        };
        snapshot.extend(own.clone());
        Ok((Settings { map: own, origin }, inner, Value::Object(snapshot)))
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::arg(format!("input file {} does not exist", p.display())))
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(Error::arg(format!("unknown split `{s}` (train, val, test)"))),
    }
}

/// Bookkeeping for one command invocation.
struct Run {
    command: &'static str,
    out: PathBuf,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn start(command: &'static str, out: PathBuf, resolved: &Value) -> Result<Self> {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let mut run = Run {
            command,
            out,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        let p = run.path(RESOLVED_CONFIG);
        io::write_pretty_json(&p, resolved)?;
        Ok(run)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn input(&mut self, p: &Path) -> Result<PathBuf> {
        require_file(p)?;
        self.inputs.push(p.to_path_buf());
        Ok(p.to_path_buf())
    }

    fn finish(mut self, seed: Option<u64>) -> Result<()> {
        let manifest = serde_json::json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        let p = self.path(RUN_MANIFEST);
        io::write_pretty_json(&p, &manifest)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let topo = SkeletonTopology::xsens23();
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &topo),
        Command::Augment(a) => cmd_augment(&a, &topo),
        Command::Project2d(a) => cmd_project2d(&a, &topo),
        Command::TrainCls(a) => cmd_train_cls(&a, &topo),
        Command::EvalCls(a) => cmd_eval_cls(&a, &topo),
        Command::TrainXfer(a) => cmd_train_xfer(&a, &topo),
        Command::Transfer(a) => cmd_transfer(&a, &topo),
        Command::Latent(a) => cmd_latent(&a, &topo),
        Command::Attention(a) => cmd_attention(&a, &topo),
    }
}

pub fn cmd_gen(a: &GenArgs, topo: &SkeletonTopology) -> Result<()> {
    let m = resolve(a.common.config.as_deref(), a)?;
    let (mut own, config, snapshot): (_, GeneratorConfig, _) = m.split(&["out"])?;
    config.validate()?;
    let mut run = Run::start("gen", own.required("out")?, &snapshot)?;
    let ds = gen_dataset(&config, topo, &run.out)?;
    run.outputs.push(ds.manifest_path);
    run.finish(Some(config.seed))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentSettings {
    out: PathBuf,
    input: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_rotations")]
    rotations: usize,
    #[serde(default = "default_crops")]
    crops: usize,
}

fn default_rotations() -> usize {
    crate::skeleton::ROTATIONS
}

fn default_crops() -> usize {
    crate::skeleton::CROPS
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_augment(a: &AugmentArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: AugmentSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    if s.rotations == 0 || s.crops == 0 {
        return Err(Error::arg("rotations and crops must be positive"));
    }
    let mut run = Run::start("augment", s.out.clone(), &serde_json::to_value(&s)?)?;
    let seq = MotionSequence::load(&run.input(&s.input)?, topo)?;
    let mut r = rng::stream(s.seed, &[rng::tag("augment")]);
    let name = stem(&s.input);
    let mut draws = Vec::new();
    for (k, (draw, mut clip)) in augment_with(&seq, s.rotations, s.crops, &mut r).into_iter().enumerate() {
        clip.meta.insert("augmentation".into(), serde_json::to_value(draw)?);
        let p = run.path(&format!("{name}_aug{k:03}.json"));
        clip.save(&p, topo)?;
        draws.push(draw);
    }
    let p = run.path("draws.json");
    io::write_json(&p, &draws)?;
    run.finish(Some(s.seed))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Project2dSettings {
    out: PathBuf,
    input: PathBuf,
    #[serde(default = "default_views")]
    views: usize,
    #[serde(default)]
    focal: Option<f64>,
    #[serde(default)]
    distance: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_views() -> usize {
    8
}

fn camera(focal: Option<f64>, distance: Option<f64>) -> Result<Camera> {
    let d = Camera::default();
    let distance = distance.unwrap_or(d.distance);
    let c = Camera {
        focal: focal.unwrap_or(d.focal * distance / d.distance),
        distance,
    };
    if !(c.focal > 0.0 && c.distance > 0.0 && c.focal.is_finite() && c.distance.is_finite()) {
        return Err(Error::arg("camera focal length and distance must be positive"));
    }
    Ok(c)
}

pub fn cmd_project2d(a: &Project2dArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: Project2dSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    if s.views == 0 {
        return Err(Error::arg("views must be positive"));
    }
    let cam = camera(s.focal, s.distance)?;
    let mut run = Run::start("project2d", s.out.clone(), &serde_json::to_value(&s)?)?;
    let seq = MotionSequence::load(&run.input(&s.input)?, topo)?;
    let name = stem(&s.input);
    for (k, yaw) in view_yaws(s.views).into_iter().enumerate() {
        let proj = project_weak_perspective(&seq, yaw, &cam)?;
        let p = run.path(&format!("{name}_view{k}.json"));
        proj.save(&p)?;
    }
    run.finish(s.seed)
}

fn load_manifest(run: &mut Run, data: &Path) -> Result<DatasetManifest> {
    let p = run.input(&data.join("manifest.csv"))?;
    let m = DatasetManifest::read_csv(&p)?;
    m.validate()?;
    Ok(m)
}

fn write_log<T: Serialize>(run: &mut Run, rows: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for r in rows {
        bytes.extend(io::to_json_bytes(r)?);
    }
    let p = run.path(TRAIN_LOG);
    io::write_bytes(&p, &bytes)
}

pub fn cmd_train_cls(a: &TrainClsArgs, topo: &SkeletonTopology) -> Result<()> {
    let m = resolve(a.common.config.as_deref(), a)?;
    let (mut own, config, snapshot): (_, TrainConfig, _) = m.split(&["out", "data", "views"])?;
    config.validate()?;
    let data: PathBuf = own.required("data")?;
    let views: usize = own.take("views")?.unwrap_or(0);
    let mut run = Run::start("train-cls", own.required("out")?, &snapshot)?;
    let manifest = load_manifest(&mut run, &data)?;
    let train = load_split(&manifest, &data, Split::Train, topo)?;
    let val = load_split(&manifest, &data, Split::Val, topo)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::arg("manifest needs non-empty train and val splits"));
    }
    let classes = manifest.n_classes();
    let outcome = if views == 0 {
        let tr = prepare_training_set(&train, topo, &config)?;
        let va = prepare_samples(&val, topo, &config)?;
        train_on_samples(&tr, &va, topo, InputKind::Skeleton(config.representation.clone()), classes, &config)?
    } else {
        let cam = Camera::default();
        let tr = prepare_projected_samples(&train, topo, &config, &cam, views, true)?;
        let va = prepare_projected_samples(&val, topo, &config, &cam, views, false)?;
        train_on_samples(&tr, &va, topo, InputKind::Projected, classes, &config)?
    };
    let p = run.path(MODEL_FILE);
    outcome
        .classifier
        .to_checkpoint(config.seed, outcome.best_epoch as u64)?
        .save(&p)?;
    write_log::<EpochLog>(&mut run, &outcome.log)?;
    run.finish(Some(config.seed))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSettings {
    out: PathBuf,
    model: PathBuf,
    data: PathBuf,
    #[serde(default = "default_split")]
    split: String,
    #[serde(default = "default_views")]
    views: usize,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_split() -> String {
    "test".into()
}

fn load_classifier(run: &mut Run, p: &Path, topo: &SkeletonTopology) -> Result<Classifier> {
    Classifier::from_checkpoint(Checkpoint::load(&run.input(p)?)?, topo)
}

pub fn cmd_eval_cls(a: &EvalClsArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: EvalSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    let split = parse_split(&s.split)?;
    let mut run = Run::start("eval-cls", s.out.clone(), &serde_json::to_value(&s)?)?;
    let model = load_classifier(&mut run, &s.model, topo)?;
    let manifest = load_manifest(&mut run, &s.data)?;
    let seqs = load_split(&manifest, &s.data, split, topo)?;
    if seqs.is_empty() {
        return Err(Error::arg(format!("split `{}` is empty", s.split)));
    }
    let config = TrainConfig {
        frames: model.header.frames,
        ..TrainConfig::default()
    };
    let samples = match &model.header.input {
        InputKind::Skeleton(rep) => {
            let config = TrainConfig {
                representation: rep.clone(),
                ..config
            };
            prepare_samples(&seqs, topo, &config)?
        }
        InputKind::Projected => prepare_projected_samples(&seqs, topo, &config, &Camera::default(), s.views, false)?,
    };
    let metrics = evaluate(&model, &samples, topo)?;
    let report = serde_json::json!({
        "split": s.split,
        "samples": samples.len(),
        "accuracy": metrics.accuracy,
        "f1": metrics.f1,
        "confusion": metrics.confusion,
    });
    let p = run.path("metrics.json");
    io::write_pretty_json(&p, &report)?;
    run.finish(s.seed)
}

#[derive(Serialize)]
struct TransferLogRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    train_reconstruction: f64,
    train_contrastive: f64,
    val_reconstruction: f64,
    val_contrastive: f64,
}

impl From<&TransferEpochLog> for TransferLogRow {
    fn from(l: &TransferEpochLog) -> Self {
        TransferLogRow {
            epoch: l.epoch,
            train_loss: l.train.total,
            val_loss: l.val.total,
            train_reconstruction: l.train.reconstruction,
            train_contrastive: l.train.contrastive,
            val_reconstruction: l.val.reconstruction,
            val_contrastive: l.val.contrastive,
        }
    }
}

pub fn cmd_train_xfer(a: &TrainXferArgs, topo: &SkeletonTopology) -> Result<()> {
    let m = resolve(a.common.config.as_deref(), a)?;
    let (mut own, config, snapshot): (_, TransferConfig, _) = m.split(&["out", "data"])?;
    config.validate()?;
    let data: PathBuf = own.required("data")?;
    let mut run = Run::start("train-xfer", own.required("out")?, &snapshot)?;
    let manifest = load_manifest(&mut run, &data)?;
    let classes = manifest.n_classes();
    let corpus = |split| -> Result<TransferCorpus> {
        let seqs = load_split(&manifest, &data, split, topo)?;
        TransferCorpus::new(config.prepare(&seqs, topo)?, classes)
    };
    let (train, val) = (corpus(Split::Train)?, corpus(Split::Val)?);
    let outcome = crate::transfer::train_transfer(&train, &val, &config)?;
    let p = run.path(MODEL_FILE);
    outcome.model.to_checkpoint(config.seed, outcome.best_epoch as u64)?.save(&p)?;
    let rows: Vec<TransferLogRow> = outcome.log.iter().map(TransferLogRow::from).collect();
    write_log(&mut run, &rows)?;
    run.finish(Some(config.seed))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransferSettings {
    out: PathBuf,
    model: PathBuf,
    input: PathBuf,
    target_property: usize,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn cmd_transfer(a: &TransferArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: TransferSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    let mut run = Run::start("transfer", s.out.clone(), &serde_json::to_value(&s)?)?;
    let model = TransferModel::from_checkpoint(Checkpoint::load(&run.input(&s.model)?)?)?;
    let seq = MotionSequence::load(&run.input(&s.input)?, topo)?;
    let mut out = model.transfer(&seq, s.target_property, topo)?;
    out.meta.insert("source_property".into(), seq.property_label.into());
    out.meta.insert("target_property".into(), s.target_property.into());
    let p = run.path(&format!("{}_to{}.json", stem(&s.input), s.target_property));
    out.save(&p, topo)?;
    run.finish(s.seed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatentSettings {
    out: PathBuf,
    model: PathBuf,
    data: PathBuf,
    #[serde(default = "default_split")]
    split: String,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn cmd_latent(a: &LatentArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: LatentSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    let split = parse_split(&s.split)?;
    let mut run = Run::start("latent", s.out.clone(), &serde_json::to_value(&s)?)?;
    let model = TransferModel::from_checkpoint(Checkpoint::load(&run.input(&s.model)?)?)?;
    let manifest = load_manifest(&mut run, &s.data)?;
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::arg(format!("split `{}` is empty", s.split)));
    }
    let mut inputs = Vec::with_capacity(entries.len());
    for e in &entries {
        let seq = MotionSequence::load(&s.data.join(&e.path), topo)?;
        inputs.push(crate::transfer::to_transfer_input(
            &seq,
            topo,
            model.header.frames,
            &model.header.contacts,
        )?);
    }
    let xs: Vec<&Tensor> = inputs.iter().map(|i| &i.data).collect();
    let rows: Vec<Vec<f64>> = model.encode(&xs)?.into_iter().map(Tensor::into_data).collect();
    let uv = pca_2d(&rows)?;
    let points: Vec<LatentPoint> = entries
        .iter()
        .zip(&inputs)
        .zip(uv)
        .map(|((e, i), [u, v])| LatentPoint {
            sample_id: stem(&e.path),
            subject: i.subject_id.clone(),
            property: i.label,
            u,
            v,
        })
        .collect();
    let p = run.path("latent.csv");
    write_latent_csv(&p, &points)?;
    run.finish(s.seed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttentionSettings {
    out: PathBuf,
    model: PathBuf,
    input: PathBuf,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn cmd_attention(a: &AttentionArgs, topo: &SkeletonTopology) -> Result<()> {
    let s: AttentionSettings = resolve(a.common.config.as_deref(), a)?.parse()?;
    let mut run = Run::start("attention", s.out.clone(), &serde_json::to_value(&s)?)?;
    let model = load_classifier(&mut run, &s.model, topo)?;
    if model.header.input == InputKind::Projected {
        return Err(Error::arg("attention export needs a classifier trained on 3D features"));
    }
    let seq = MotionSequence::load(&run.input(&s.input)?, topo)?;
    let x = model.prepare(&seq, topo)?;
    let (_, maps) = model.forward(&[&x], topo)?;
    let p = run.path("attention.csv");
    write_attention_csv(&p, topo, &attention_colors(&maps[0]))?;
    run.finish(s.seed)
}
