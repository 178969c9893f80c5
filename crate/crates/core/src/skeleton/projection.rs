use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io;
use crate::skeleton::frame::finite_difference;
use crate::skeleton::motion::{Action, MotionSequence};
use crate::skeleton::resample::resample_frames;
use crate::skeleton::topology::SkeletonTopology;
use crate::tensor::Tensor;

/// Angular spacing of the virtual cameras.
pub const VIEW_STEP: f64 = PI / 8.0;

/// Reference figure height used to set the default focal length.
const FIGURE_HEIGHT: f64 = 1.7;
/// Fraction of the unit image height that figure spans at the default distance.
const FIGURE_FILL: f64 = 0.9;

/// A horizontal weak-perspective camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    /// Distance from the clip centroid along the optical axis.
    pub distance: f64,
}

impl Default for Camera {
    fn default() -> Self {
        let distance = 5.0;
        Camera {
            focal: FIGURE_FILL * distance / FIGURE_HEIGHT,
            distance,
        }
    }
}

/// Camera yaws `0, 22.5°, …` for `n` views.
pub fn view_yaws(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * VIEW_STEP).collect()
}

/// A projected clip, `T × J × 2` image coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection2d {
    pub fps: f64,
    pub yaw_deg: f64,
    pub scale: f64,
    pub subject_id: String,
    pub action: Action,
    pub property_label: usize,
    pub n_classes: usize,
    pub frames: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl Projection2d {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Rotates the clip by `yaw` about the vertical through its centroid and
/// images it with a camera looking along `+y` from `camera.distance` in front
/// of the centroid. The scale is `focal / mean depth` over all joints and
/// frames; each joint maps to `(s·x, s·z)` relative to the centroid.
pub fn project_weak_perspective(seq: &MotionSequence, yaw: f64, camera: &Camera) -> Result<Projection2d> {
    let n = (seq.num_frames() * seq.num_joints()) as f64;
    if n == 0.0 {
        return Err(Error::Motion("cannot project an empty clip".into()));
    }
    let mut c = [0.0; 3];
    for p in seq.frames.iter().flatten() {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.iter_mut().for_each(|v| *v /= n);
    let (s, co) = yaw.sin_cos();
    let rotated: Vec<Vec<[f64; 3]>> = seq
        .frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|p| {
                    let (x, y) = (p[0] - c[0], p[1] - c[1]);
                    [co * x - s * y, s * x + co * y, p[2] - c[2]]
                })
                .collect()
        })
        .collect();
    let mean_depth = camera.distance + rotated.iter().flatten().map(|p| p[1]).sum::<f64>() / n;
    if !(mean_depth > 0.0) {
        return Err(Error::arg(format!("mean depth {mean_depth} is not in front of the camera")));
    }
    let scale = camera.focal / mean_depth;
    Ok(Projection2d {
        fps: seq.fps,
        yaw_deg: yaw.to_degrees(),
        scale,
        subject_id: seq.subject_id.clone(),
        action: seq.action,
        property_label: seq.property_label,
        n_classes: seq.n_classes,
        frames: rotated
            .iter()
            .map(|f| f.iter().map(|p| [scale * p[0], scale * p[2]]).collect())
            .collect(),
        meta: seq.meta.clone(),
    })
}

/// Root-centred image positions and their velocities, `T × J × 4`, after
/// resampling to `t_target` frames.
pub fn features_2d(proj: &Projection2d, topo: &SkeletonTopology, t_target: usize) -> Result<Tensor> {
    let t = proj.frames.len();
    if t < 2 || t_target < 2 {
        return Err(Error::Motion("2D features need at least two frames".into()));
    }
    let j = topo.num_joints();
    if proj.frames.iter().any(|f| f.len() != j) {
        return Err(Error::Motion("projected frame joint count differs from the skeleton".into()));
    }
    let frames = resample_frames(&proj.frames, t_target);
    let fps = proj.fps * (t_target - 1) as f64 / (t - 1) as f64;
    let root = topo.root();
    let centred: Vec<Vec<[f64; 2]>> = frames
        .iter()
        .map(|f| f.iter().map(|p| [p[0] - f[root][0], p[1] - f[root][1]]).collect())
        .collect();
    let vel = finite_difference(&centred, 1.0 / fps);
    let mut data = Vec::with_capacity(t_target * j * 4);
    for (pf, vf) in centred.iter().zip(&vel) {
        for (p, v) in pf.iter().zip(vf) {
            data.extend_from_slice(&[p[0], p[1], v[0], v[1]]);
        }
    }
    Tensor::new(vec![t_target, j, 4], data)
}
