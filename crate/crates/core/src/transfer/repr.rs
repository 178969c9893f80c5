use serde_json::Value;

use crate::error::{Error, Result};
use crate::skeleton::{
    detect_foot_contacts, finite_difference, resample, to_local_frame, Action, ContactThresholds, MotionSequence,
    RootFrame, SkeletonTopology,
};
use crate::synth::TRIAL_KEY;
use crate::Tensor;

/// Frames of the transfer representation.
pub const TRANSFER_FRAMES: usize = 64;
/// Root velocity (3) and left/right foot contact (2).
pub const GLOBAL_CHANNELS: usize = 5;
/// Metadata key for synthesised foot contacts.
pub const CONTACTS_KEY: &str = "foot_contacts";

/// Channels per frame for a skeleton of `joints` joints.
pub fn transfer_channels(joints: usize) -> usize {
    3 * joints + GLOBAL_CHANNELS
}

/// A clip in the transfer representation plus what is needed to put a
/// synthesised motion back into the world.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferInput {
    /// `[T, 3J + 5]`: body-frame joints, root velocity in the heading frame
    /// of the first frame, then left and right contact as 0/1.
    pub data: Tensor,
    pub label: usize,
    pub n_classes: usize,
    pub subject_id: String,
    pub action: Action,
    /// Clips of one subject with equal `trial` are time-aligned across classes.
    pub trial: u64,
    /// Frame rate after resampling.
    pub fps: f64,
    /// World root frame of every resampled frame.
    pub roots: Vec<RootFrame>,
}

fn rot_z(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Resamples to `frames` frames and builds the transfer representation.
/// `trial` comes from the clip metadata when present.
pub fn to_transfer_input(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    frames: usize,
    contacts: &ContactThresholds,
) -> Result<TransferInput> {
    seq.validate(topo)?;
    let r = resample(seq, frames)?;
    let (local, roots) = to_local_frame(&r, topo)?;
    let h0 = roots[0].heading;
    let root_path: Vec<Vec<[f64; 3]>> = roots.iter().map(|f| vec![f.origin]).collect();
    let vel = finite_difference(&root_path, r.dt());
    let feet = detect_foot_contacts(&r, topo, contacts)?;
    let c = transfer_channels(topo.num_joints());
    let mut data = Vec::with_capacity(frames * c);
    for t in 0..frames {
        for p in &local.frames[t] {
            data.extend_from_slice(p);
        }
        data.extend_from_slice(&rot_z(vel[t][0], -h0));
        data.extend(feet[t].iter().map(|&f| f64::from(u8::from(f))));
    }
    let trial = seq.meta.get(TRIAL_KEY).and_then(Value::as_u64).unwrap_or(0);
    Ok(TransferInput {
        data: Tensor::new(vec![frames, c], data)?,
        label: seq.property_label,
        n_classes: seq.n_classes,
        subject_id: seq.subject_id.clone(),
        action: seq.action,
        trial,
        fps: r.fps,
        roots,
    })
}

/// Puts a `[T, 3J + 5]` network output back into the world: the root starts
/// at the reference origin and follows the integrated velocities, each frame
/// keeps the reference heading, and contacts are thresholded at 0.5 into
/// the `foot_contacts` metadata.
pub fn reassemble(
    output: &Tensor,
    reference: &TransferInput,
    label: usize,
    topo: &SkeletonTopology,
) -> Result<MotionSequence> {
    let j = topo.num_joints();
    let c = transfer_channels(j);
    let t = reference.roots.len();
    if output.shape() != [t, c] {
        return Err(Error::arg(format!("output shape {:?}, expected [{t}, {c}]", output.shape())));
    }
    let h0 = reference.roots[0].heading;
    let dt = 1.0 / reference.fps;
    let mut origin = reference.roots[0].origin;
    let mut frames = Vec::with_capacity(t);
    let mut contacts = Vec::with_capacity(t);
    for (ti, row) in output.data().chunks(c).enumerate() {
        let frame = RootFrame {
            origin,
            heading: reference.roots[ti].heading,
        };
        frames.push((0..j).map(|k| frame.to_world([row[3 * k], row[3 * k + 1], row[3 * k + 2]])).collect());
        let v = rot_z([row[3 * j], row[3 * j + 1], row[3 * j + 2]], h0);
        for (o, dv) in origin.iter_mut().zip(v) {
            *o += dv * dt;
        }
        contacts.push(Value::from(vec![row[3 * j + 3] > 0.5, row[3 * j + 4] > 0.5]));
    }
    let mut seq = MotionSequence {
        fps: reference.fps,
        frames,
        subject_id: reference.subject_id.clone(),
        action: reference.action,
        property_label: label,
        n_classes: reference.n_classes,
        meta: Default::default(),
    };
    seq.meta.insert(CONTACTS_KEY.into(), Value::from(contacts));
    seq.meta.insert(TRIAL_KEY.into(), reference.trial.into());
    Ok(seq)
}
