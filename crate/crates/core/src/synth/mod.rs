//! Procedural motion generator with known ground truth.
//!
//! Every clip is a deterministic kinematic template evaluated on normalised
//! time `τ ∈ [0, 1]`, modulated by the class index `k` through
//! `m = 0.3 · k / (n_classes − 1)`:
//!
//! * with [`SignalAxes::Xyz`] the clip lasts `D₀ (1 + m)` seconds and the
//!   arm movement starts later for larger `m`, so every speed scales as
//!   `1 / (1 + m)`;
//! * with [`SignalAxes::XyOnly`] the duration is fixed and `m` shrinks a
//!   horizontal arm sweep by `1 / (1 + m)`; a fraction of the signal also
//!   shrinks the vertical raise.
//!
//! Subject style (size, tempo, phase, posture) changes the clip without
//! touching the class signal. Clips are placed in the world with a random
//! heading and offset shared by all classes of a `(subject, trial)` pair, and
//! i.i.d. Gaussian noise is added to every coordinate.

mod kinematics;
mod oracle;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::rng;
use crate::skeleton::{
    split_by_subject, Action, DatasetManifest, ManifestEntry, MotionSequence, SkeletonTopology, Split,
};
use kinematics::{ArmAngles, PoseBuilder, V3, LEFT_LEG, RIGHT_LEG};

pub use oracle::{centroid_distance, nearest_centroid_accuracy, oracle_features, OracleFeatures};

/// Base clip duration in seconds.
pub const BASE_DURATION: f64 = 3.0;
/// Largest relative modulation, reached by the last class.
pub const MAX_MODULATION: f64 = 0.3;

const ARM_WINDOW: f64 = 0.6;
const LIFT_FLEX: f64 = 100.0 * PI / 180.0;
const LIFT_ELBOW: f64 = 40.0 * PI / 180.0;
const DRINK_FLEX: f64 = 120.0 * PI / 180.0;
const DRINK_ELBOW: f64 = 110.0 * PI / 180.0;
const SWEEP: f64 = 40.0 * PI / 180.0;
const STOOP: f64 = 15.0 * PI / 180.0;
const WALK_CYCLES: f64 = 2.0;
const WALK_STRIDE: f64 = 1.0;
const WALK_SWING: f64 = 0.4;
const WALK_STEP_HEIGHT: f64 = 0.10;
const WALK_CROUCH: f64 = 0.07;
const WALK_ARM_SWING: f64 = 20.0 * PI / 180.0;
const PLACEMENT_RANGE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Lift,
    Walk,
    Drink,
}

impl Template {
    pub fn action(self) -> Action {
        match self {
            Template::Lift => Action::Lift,
            Template::Walk => Action::Walk,
            Template::Drink => Action::Drink,
        }
    }

    /// Joints whose motion depends on the class.
    pub fn signal_joints(self) -> &'static [&'static str] {
        match self {
            Template::Lift => &["RightUpperArm", "RightForeArm", "RightHand", "LeftUpperArm", "LeftForeArm", "LeftHand"],
            Template::Drink => &["RightUpperArm", "RightForeArm", "RightHand"],
            Template::Walk => &crate::skeleton::XSENS_JOINTS,
        }
    }
}

impl std::str::FromStr for Template {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lift" => Ok(Template::Lift),
            "walk" => Ok(Template::Walk),
            "drink" => Ok(Template::Drink),
            _ => Err(Error::arg(format!("unknown action template `{s}` (lift, walk, drink)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalAxes {
    Xyz,
    XyOnly,
}

impl std::str::FromStr for SignalAxes {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" => Ok(SignalAxes::Xyz),
            "xy_only" | "xy-only" => Ok(SignalAxes::XyOnly),
            _ => Err(Error::arg(format!("unknown signal axes `{s}` (xyz, xy-only)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub action: Template,
    pub n_classes: usize,
    pub n_subjects: usize,
    pub trials: usize,
    /// Standard deviation of the per-coordinate joint noise, metres.
    pub noise: f64,
    pub signal_axes: SignalAxes,
    /// With `XyOnly`, the share of the modulation applied to the vertical raise.
    pub z_signal_fraction: f64,
    /// Relative per-trial spread of duration and onset (or amplitude).
    pub timing_jitter: f64,
    /// Nominal capture rate; each clip's exact rate is adjusted so its
    /// duration is exact.
    pub fps: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            action: Template::Lift,
            n_classes: 3,
            n_subjects: 30,
            trials: 2,
            noise: 0.01,
            signal_axes: SignalAxes::Xyz,
            z_signal_fraction: 0.25,
            timing_jitter: 0.0,
            fps: 30.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::arg("n_classes must be at least 2"));
        }
        if self.n_subjects == 0 || self.trials == 0 {
            return Err(Error::arg("n_subjects and trials must be positive"));
        }
        if !(self.noise >= 0.0) || !(self.timing_jitter >= 0.0) {
            return Err(Error::arg("noise and timing jitter must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.z_signal_fraction) {
            return Err(Error::arg("z_signal_fraction must lie in [0, 1]"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::arg("fps must be positive"));
        }
        Ok(())
    }

    /// Relative modulation `0.3 · k / (n − 1)` of class `k`.
    pub fn modulation(&self, k: usize) -> f64 {
        MAX_MODULATION * k as f64 / (self.n_classes - 1) as f64
    }
}

/// Per-performer variation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    /// Uniform skeleton scale in `[0.9, 1.1]`.
    pub limb_scale: f64,
    /// Secondary-motion rate in `[0.85, 1.15]`.
    pub tempo: f64,
    /// Phase of the secondary motion, radians.
    pub phase: f64,
    /// Constant forward lean, radians.
    pub posture_bias: f64,
}

impl SubjectStyle {
    pub fn neutral() -> Self {
        SubjectStyle {
            limb_scale: 1.0,
            tempo: 1.0,
            phase: 0.0,
            posture_bias: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        SubjectStyle {
            limb_scale: rng.random_range(0.9..=1.1),
            tempo: rng.random_range(0.85..=1.15),
            phase: rng.random_range(0.0..2.0 * PI),
            posture_bias: rng.random_range(-0.1..=0.1),
        }
    }

    /// The style of subject `index` under `seed`.
    pub fn for_subject(seed: u64, index: usize) -> Self {
        SubjectStyle::sample(&mut rng::stream(seed, &[rng::tag("subject"), index as u64]))
    }
}

/// World placement of a clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub heading: f64,
    pub offset: [f64; 2],
}

impl Placement {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Placement {
            heading: rng.random_range(0.0..2.0 * PI),
            offset: [
                rng.random_range(-PLACEMENT_RANGE..PLACEMENT_RANGE),
                rng.random_range(-PLACEMENT_RANGE..PLACEMENT_RANGE),
            ],
        }
    }

    pub fn identity() -> Self {
        Placement {
            heading: 0.0,
            offset: [0.0; 2],
        }
    }
}

/// Ground truth emitted beside each clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: usize,
    pub modulation: f64,
    pub duration: f64,
    /// Normalised start of the arm movement.
    pub onset: f64,
    /// Peak speed of the signal joints in the noise-free clip, m/s.
    pub peak_speed: f64,
    /// Inclusive frame ranges with the foot planted, `[left, right]`.
    pub plant_intervals: [Vec<[usize; 2]>; 2],
    pub signal_joints: Vec<String>,
    pub style: SubjectStyle,
    pub placement: Placement,
}

/// Per-trial draws that are independent of the template.
#[derive(Clone, Copy, Debug)]
struct TrialDraw {
    duration_factor: f64,
    onset_shift: f64,
}

fn ease(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * u).cos())
}

/// Generates one clip. `rng` drives the per-trial jitter and the noise;
/// placement is passed in so that classes of a trial can share it.
pub fn gen_motion<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    topo: &SkeletonTopology,
    subject_id: &str,
    style: &SubjectStyle,
    placement: &Placement,
    k: usize,
    rng: &mut R,
) -> Result<(MotionSequence, GroundTruth)> {
    config.validate()?;
    if k >= config.n_classes {
        return Err(Error::arg(format!("class {k} out of range for {} classes", config.n_classes)));
    }
    if topo.num_joints() != crate::skeleton::XSENS_JOINTS.len() {
        return Err(Error::Topology("the generator needs the 23-joint skeleton".into()));
    }
    let m = config.modulation(k);
    let j = config.timing_jitter;
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let draw = TrialDraw {
        duration_factor: (1.0 + j * z1).clamp(0.5, 1.5),
        onset_shift: (0.5 * j * z2).clamp(-0.1, 0.1),
    };

    let xyz = config.signal_axes == SignalAxes::Xyz;
    let timing_m = if xyz { m } else { 0.0 };
    let duration = BASE_DURATION * (1.0 + timing_m) * if xyz { draw.duration_factor } else { 1.0 };
    let onset = (0.1 + 0.2 * timing_m / MAX_MODULATION + if xyz { draw.onset_shift } else { 0.0 })
        .clamp(0.0, 1.0 - ARM_WINDOW);
    let amp_jitter = if xyz { 1.0 } else { draw.duration_factor };

    let steps = (duration * config.fps).round().max(1.0) as usize;
    let fps = steps as f64 / duration;
    let n_frames = steps + 1;

    let builder = PoseBuilder::new(topo.rest_pose(), style.limb_scale);
    let scale = style.limb_scale;
    let mut clean = Vec::with_capacity(n_frames);
    let mut planted = [Vec::with_capacity(n_frames), Vec::with_capacity(n_frames)];
    for t in 0..n_frames {
        let tau = t as f64 / steps as f64;
        let u = (tau - onset) / ARM_WINDOW;
        // The stoop is locked to the arm phase so that every speed in the
        // clip scales with the same time constant.
        let stoop_u = ((u + 0.15) / (1.3 * style.tempo)).clamp(0.0, 1.0);
        let stoop = STOOP * (PI * stoop_u).sin().powi(2) + style.posture_bias;
        let p = ease(u);
        let pose = match config.action {
            Template::Lift => {
                let arm = if xyz {
                    ArmAngles {
                        flex: LIFT_FLEX * p,
                        elbow: LIFT_ELBOW * p,
                        sweep: 0.0,
                    }
                } else {
                    let f = config.z_signal_fraction;
                    ArmAngles {
                        flex: LIFT_FLEX * p / (1.0 + f * m),
                        elbow: LIFT_ELBOW * p,
                        sweep: amp_jitter * SWEEP * p / (1.0 + m),
                    }
                };
                builder.pose(arm, arm, stoop, V3::zeros(), None)
            }
            Template::Drink => {
                let right = ArmAngles {
                    flex: DRINK_FLEX * p / if xyz { 1.0 } else { 1.0 + config.z_signal_fraction * m },
                    elbow: DRINK_ELBOW * p,
                    sweep: if xyz { 0.0 } else { amp_jitter * SWEEP * p / (1.0 + m) },
                };
                builder.pose(right, ArmAngles::default(), style.posture_bias, V3::zeros(), None)
            }
            Template::Walk => {
                let (pose, plants) = walk_pose(&builder, scale, style, tau);
                planted[0].push(plants[0]);
                planted[1].push(plants[1]);
                pose
            }
        };
        clean.push(pose);
    }

    let world: Vec<Vec<[f64; 3]>> = clean
        .iter()
        .map(|f| f.iter().map(|&p| place(p, placement)).collect())
        .collect();
    let peak_speed = peak_signal_speed(&world, topo, config.action, fps);
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::arg(e.to_string()))?;
    let frames: Vec<Vec<[f64; 3]>> = if config.noise > 0.0 {
        world
            .iter()
            .map(|f| f.iter().map(|p| p.map(|v| v + noise.sample(rng))).collect())
            .collect()
    } else {
        world
    };

    let mut meta = BTreeMap::new();
    meta.insert("modulation".to_string(), m.into());
    let seq = MotionSequence {
        fps,
        frames,
        subject_id: subject_id.to_string(),
        action: config.action.action(),
        property_label: k,
        n_classes: config.n_classes,
        meta,
    };
    let truth = GroundTruth {
        class: k,
        modulation: m,
        duration,
        onset,
        peak_speed,
        plant_intervals: planted.map(|p| runs(&p)),
        signal_joints: config.action.signal_joints().iter().map(|s| s.to_string()).collect(),
        style: *style,
        placement: *placement,
    };
    Ok((seq, truth))
}

fn place(p: [f64; 3], pl: &Placement) -> [f64; 3] {
    let (s, c) = pl.heading.sin_cos();
    [
        c * p[0] - s * p[1] + pl.offset[0],
        s * p[0] + c * p[1] + pl.offset[1],
        p[2],
    ]
}

/// Pose at normalised time `tau` of a two-cycle walk along body `−y`, and
/// whether each foot (`[left, right]`) is planted.
fn walk_pose(b: &PoseBuilder, scale: f64, style: &SubjectStyle, tau: f64) -> (Vec<[f64; 3]>, [bool; 2]) {
    let stride = WALK_STRIDE * scale;
    let phase = WALK_CYCLES * tau;
    let forward = V3::new(0.0, -1.0, 0.0);
    let root = forward * (stride * phase) + V3::new(0.0, 0.0, -WALK_CROUCH * scale);
    // Right foot swings during [0.1, 0.5) of each cycle, left during [0.6, 1.0).
    let foot = |swing_start: f64, ankle_rest: V3| -> (V3, bool) {
        let u = phase - swing_start;
        let k = u.floor();
        let r = u - k;
        let (progress, lift, planted) = if r < WALK_SWING {
            let s = r / WALK_SWING;
            (k + ease(s), WALK_STEP_HEIGHT * scale * (PI * s).sin(), false)
        } else {
            (k + 1.0, 0.0, true)
        };
        let along = stride * (progress + swing_start - 0.3);
        (ankle_rest + forward * along + V3::new(0.0, 0.0, lift), planted)
    };
    let (right, right_planted) = foot(0.1, b.rest(RIGHT_LEG[2]));
    let (left, left_planted) = foot(0.6, b.rest(LEFT_LEG[2]));
    let swing = WALK_ARM_SWING * (2.0 * PI * phase + style.phase * 0.1).sin();
    let r_arm = ArmAngles {
        flex: swing,
        elbow: 0.2,
        sweep: 0.0,
    };
    let l_arm = ArmAngles {
        flex: -swing,
        elbow: 0.2,
        sweep: 0.0,
    };
    let pose = b.pose(r_arm, l_arm, style.posture_bias, root, Some([right, left]));
    (pose, [left_planted, right_planted])
}

fn peak_signal_speed(frames: &[Vec<[f64; 3]>], topo: &SkeletonTopology, action: Template, fps: f64) -> f64 {
    let joints: Vec<usize> = action
        .signal_joints()
        .iter()
        .filter_map(|n| topo.joint_index(n))
        .collect();
    frames
        .windows(2)
        .flat_map(|w| {
            joints.iter().map(move |&j| {
                let d: f64 = (0..3).map(|c| (w[1][j][c] - w[0][j][c]).powi(2)).sum();
                d.sqrt() * fps
            })
        })
        .fold(0.0, f64::max)
}

/// Inclusive index ranges where `flags` is true.
fn runs(flags: &[bool]) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push([s, i - 1]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push([s, flags.len() - 1]);
    }
    out
}

/// A generated corpus on disk.
#[derive(Clone, Debug)]
pub struct GeneratedDataset {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
}

/// Metadata key holding the trial index of a generated clip.
pub const TRIAL_KEY: &str = "trial";

pub fn subject_id(index: usize) -> String {
    format!("s{index:03}")
}

pub fn motion_file_name(subject: usize, class: usize, trial: usize) -> String {
    format!("{}_c{class}_t{trial}.json", subject_id(subject))
}

/// Generates every clip in memory, in subject, class, trial order.
pub fn gen_corpus(
    config: &GeneratorConfig,
    topo: &SkeletonTopology,
) -> Result<Vec<(MotionSequence, GroundTruth)>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.n_subjects * config.n_classes * config.trials);
    for s in 0..config.n_subjects {
        let style = SubjectStyle::for_subject(config.seed, s);
        let sid = subject_id(s);
        for k in 0..config.n_classes {
            for r in 0..config.trials {
                let placement = Placement::sample(&mut rng::stream(
                    config.seed,
                    &[rng::tag("placement"), s as u64, r as u64],
                ));
                let mut trial_rng = rng::stream(config.seed, &[rng::tag("trial"), s as u64, k as u64, r as u64]);
                let (mut seq, truth) = gen_motion(config, topo, &sid, &style, &placement, k, &mut trial_rng)?;
                // Clips of one trial share placement and phase across classes.
                seq.meta.insert(TRIAL_KEY.to_string(), r.into());
                out.push((seq, truth));
            }
        }
    }
    Ok(out)
}

/// Writes `motions/*.json`, `truth/*.json` and finally `manifest.csv` (with a
/// seeded 60/20/20 subject split) under `out_dir`. The manifest is only
/// written once every clip has been saved.
pub fn gen_dataset(config: &GeneratorConfig, topo: &SkeletonTopology, out_dir: &Path) -> Result<GeneratedDataset> {
    config.validate()?;
    let motions = out_dir.join("motions");
    let truths = out_dir.join("truth");
    for d in [&motions, &truths] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let corpus = gen_corpus(config, topo)?;
    let mut entries = Vec::with_capacity(corpus.len());
    let mut i = 0;
    for s in 0..config.n_subjects {
        for k in 0..config.n_classes {
            for r in 0..config.trials {
                let (seq, truth) = &corpus[i];
                i += 1;
                let name = motion_file_name(s, k, r);
                seq.save(&motions.join(&name), topo)?;
                io::write_json(&truths.join(&name), truth)?;
                entries.push(ManifestEntry {
                    path: PathBuf::from("motions").join(&name),
                    subject_id: seq.subject_id.clone(),
                    action: seq.action,
                    label: k,
                    split: None,
                });
            }
        }
    }
    let manifest = if config.n_subjects >= 3 {
        split_by_subject(&DatasetManifest { entries }, [0.6, 0.2, 0.2], config.seed)?
    } else {
        DatasetManifest { entries }
    };
    let manifest_path = out_dir.join("manifest.csv");
    manifest.write_csv(&manifest_path)?;
    Ok(GeneratedDataset {
        manifest,
        manifest_path,
    })
}

/// Cross-subject train/val/test partition of an in-memory corpus with the
/// same subject assignment [`gen_dataset`] writes to its manifest.
pub fn split_corpus(corpus: &[(MotionSequence, GroundTruth)], seed: u64) -> Result<[Vec<MotionSequence>; 3]> {
    let entries = corpus
        .iter()
        .enumerate()
        .map(|(i, (seq, _))| ManifestEntry {
            path: PathBuf::from(i.to_string()),
            subject_id: seq.subject_id.clone(),
            action: seq.action,
            label: seq.property_label,
            split: None,
        })
        .collect();
    let manifest = split_by_subject(&DatasetManifest { entries }, [0.6, 0.2, 0.2], seed)?;
    let mut out: [Vec<MotionSequence>; 3] = Default::default();
    for (e, (seq, _)) in manifest.entries.iter().zip(corpus) {
        let slot = match e.split {
            Some(Split::Train) => 0,
            Some(Split::Val) => 1,
            _ => 2,
        };
        out[slot].push(seq.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_compress_flags() {
        assert_eq!(runs(&[true, true, false, true]), vec![[0, 1], [3, 3]]);
        assert_eq!(runs(&[false, false]), Vec::<[usize; 2]>::new());
    }
}
