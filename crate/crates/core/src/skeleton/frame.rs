use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::motion::MotionSequence;
use crate::skeleton::topology::SkeletonTopology;

/// Horizontal extent below which a shoulder vector is treated as vertical.
const MIN_SHOULDER_SPAN: f64 = 1e-9;

/// Placement of the body frame in the world for one frame.
///
/// The frame's `x` axis is `(cos heading, sin heading, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootFrame {
    pub origin: [f64; 3],
    pub heading: f64,
}

impl RootFrame {
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.heading.sin_cos();
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    pub fn to_world(&self, q: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.heading.sin_cos();
        [
            self.origin[0] + c * q[0] - s * q[1],
            self.origin[1] + s * q[0] + c * q[1],
            self.origin[2] + q[2],
        ]
    }
}

/// Body frame of a single pose: origin at the root, `z` up, `x` along the
/// horizontal projection of the right-to-left shoulder vector.
pub fn root_frame(pose: &[[f64; 3]], topo: &SkeletonTopology, frame: usize) -> Result<RootFrame> {
    let r = topo.roles();
    let (rs, ls) = (pose[r.right_shoulder], pose[r.left_shoulder]);
    let (dx, dy) = (ls[0] - rs[0], ls[1] - rs[1]);
    if dx.hypot(dy) < MIN_SHOULDER_SPAN {
        return Err(Error::DegenerateFrame { frame });
    }
    Ok(RootFrame {
        origin: pose[r.root],
        heading: dy.atan2(dx),
    })
}

/// Expresses every frame in its own body frame. The root maps to the origin
/// in every frame; the per-frame placement is returned alongside.
pub fn to_local_frame(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
) -> Result<(MotionSequence, Vec<RootFrame>)> {
    let mut roots = Vec::with_capacity(seq.num_frames());
    let mut frames = Vec::with_capacity(seq.num_frames());
    for (t, pose) in seq.frames.iter().enumerate() {
        let rf = root_frame(pose, topo, t)?;
        let mut local: Vec<[f64; 3]> = pose.iter().map(|&p| rf.to_local(p)).collect();
        local[topo.root()] = [0.0; 3];
        frames.push(local);
        roots.push(rf);
    }
    Ok((seq.with_frames(frames, seq.fps), roots))
}

/// Forward differences `(p[t+1] − p[t]) / dt`; the last frame repeats the
/// previous velocity. Requires at least two frames.
pub fn finite_difference<const N: usize>(frames: &[Vec<[f64; N]>], dt: f64) -> Vec<Vec<[f64; N]>> {
    let t = frames.len();
    assert!(t >= 2, "finite differences need at least two frames");
    let mut out: Vec<Vec<[f64; N]>> = frames
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| std::array::from_fn(|k| (b[k] - a[k]) / dt))
                .collect()
        })
        .collect();
    out.push(out[t - 2].clone());
    out
}

/// Per-joint velocity of a sequence, `T × J × 3` in metres per second.
pub fn compute_velocity(seq: &MotionSequence) -> Result<Vec<Vec<[f64; 3]>>> {
    if seq.num_frames() < 2 || !(seq.fps > 0.0) {
        return Err(Error::Motion(format!(
            "velocity needs T ≥ 2 and fps > 0 (T = {}, fps = {})",
            seq.num_frames(),
            seq.fps
        )));
    }
    Ok(finite_difference(&seq.frames, seq.dt()))
}

/// Rotates every position about the world `z` axis through the origin.
pub fn rotate_z(frames: &[Vec<[f64; 3]>], angle: f64) -> Vec<Vec<[f64; 3]>> {
    let (s, c) = angle.sin_cos();
    frames
        .iter()
        .map(|f| f.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect())
        .collect()
}

pub fn translate(frames: &[Vec<[f64; 3]>], offset: [f64; 3]) -> Vec<Vec<[f64; 3]>> {
    frames
        .iter()
        .map(|f| f.iter().map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]]).collect())
        .collect()
}
