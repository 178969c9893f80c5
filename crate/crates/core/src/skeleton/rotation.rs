use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::motion::MotionSequence;
use crate::skeleton::topology::SkeletonTopology;

const MIN_BONE: f64 = 1e-12;

/// Intrinsic X-Y-Z Euler angles of `R = Rx(a) · Ry(b) · Rz(c)`.
pub fn euler_xyz(r: &Matrix3<f64>) -> [f64; 3] {
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        [
            (-r[(1, 2)]).atan2(r[(2, 2)]),
            b,
            (-r[(0, 1)]).atan2(r[(0, 0)]),
        ]
    } else {
        // Gimbal lock: only a ± c is determined; put it all on `a`.
        [r[(2, 1)].atan2(r[(1, 1)]), b, 0.0]
    }
}

pub fn rotation_from_euler_xyz(e: [f64; 3]) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), e[0])
        * Rotation3::from_axis_angle(&Vector3::y_axis(), e[1])
        * Rotation3::from_axis_angle(&Vector3::z_axis(), e[2])
}

/// Shortest-arc rotation taking unit `from` onto unit `to`.
fn swing(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => r,
        None => {
            // Antiparallel: half-turn about any axis orthogonal to `from`.
            let helper = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let axis = Unit::new_normalize(from.cross(&helper));
            Rotation3::from_axis_angle(&axis, PI)
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Per-joint bone orientation relative to the rest pose, and its rate.
///
/// For every non-root joint the bone from its parent is compared with the
/// same bone in the topology's rest pose; the shortest-arc rotation between
/// the two directions is reported as intrinsic X-Y-Z Euler angles (radians).
/// Angular speed is the forward difference of those angles (wrapped to
/// `(−π, π]`) over `1/fps`, with the last frame repeated. The root gets zeros.
/// `seq` is expected in the body frame.
pub fn bone_rotation_features(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
) -> Result<(Vec<Vec<[f64; 3]>>, Vec<Vec<[f64; 3]>>)> {
    let j = topo.num_joints();
    let rest: Vec<Option<Vector3<f64>>> = (0..j)
        .map(|i| topo.rest_direction(i).map(Vector3::from))
        .collect();
    let mut euler = Vec::with_capacity(seq.num_frames());
    for (t, pose) in seq.frames.iter().enumerate() {
        let mut row = vec![[0.0; 3]; j];
        for (i, out) in row.iter_mut().enumerate() {
            let p = topo.parent(i);
            if p == i {
                continue;
            }
            let d = Vector3::from(pose[i]) - Vector3::from(pose[p]);
            let n = d.norm();
            if n < MIN_BONE {
                return Err(Error::ZeroLengthBone { joint: i, frame: t });
            }
            let r = rest[i].ok_or(Error::ZeroLengthBone { joint: i, frame: t })?;
            *out = euler_xyz(swing(&r, &(d / n)).matrix());
        }
        euler.push(row);
    }
    if euler.len() < 2 {
        return Err(Error::Motion("angular speed needs at least two frames".into()));
    }
    let dt = seq.dt();
    let mut speed: Vec<Vec<[f64; 3]>> = euler
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| std::array::from_fn(|k| wrap_angle(b[k] - a[k]) / dt))
                .collect()
        })
        .collect();
    speed.push(speed[speed.len() - 1].clone());
    Ok((euler, speed))
}
