//! Body-frame pose construction for the 23-joint skeleton.

use nalgebra::{Rotation3, Vector3};

pub(crate) type V3 = Vector3<f64>;

pub(crate) const PELVIS: usize = 0;
const SPINE_AND_ARMS: std::ops::RangeInclusive<usize> = 1..=14;
pub(crate) const RIGHT_ARM: [usize; 3] = [8, 9, 10];
pub(crate) const LEFT_ARM: [usize; 3] = [12, 13, 14];
/// `(hip, knee, ankle, toe)` per side.
pub(crate) const RIGHT_LEG: [usize; 4] = [15, 16, 17, 18];
pub(crate) const LEFT_LEG: [usize; 4] = [19, 20, 21, 22];

/// Shoulder and elbow flexion plus a horizontal sweep toward the midline.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ArmAngles {
    pub flex: f64,
    pub elbow: f64,
    pub sweep: f64,
}

fn rot_x(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

fn rot_z(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

/// Places elbow and wrist for an arm hanging from `shoulder`. Positive
/// flexion raises the arm forward (towards −y).
fn arm_chain(shoulder: V3, l1: f64, l2: f64, a: ArmAngles) -> (V3, V3) {
    let down = Vector3::new(0.0, 0.0, -1.0);
    let d1 = rot_x(-a.flex) * down;
    let d2 = rot_x(-(a.flex + a.elbow)) * down;
    let elbow = shoulder + l1 * d1;
    (elbow, elbow + l2 * d2)
}

/// Two-link leg: knee bends forward in the plane of the leg.
fn leg_ik(hip: V3, ankle: V3, thigh: f64, shank: f64) -> (V3, V3) {
    let mut d = ankle - hip;
    let reach = d.norm().clamp((thigh - shank).abs() + 1e-9, (thigh + shank) * (1.0 - 1e-9));
    let u = d.normalize();
    d = u * reach;
    let forward = Vector3::new(0.0, -1.0, 0.0);
    let w = (forward - forward.dot(&u) * u).normalize();
    let cos_a = ((thigh * thigh + reach * reach - shank * shank) / (2.0 * thigh * reach)).clamp(-1.0, 1.0);
    let knee = hip + thigh * (cos_a * u + (1.0 - cos_a * cos_a).sqrt() * w);
    (knee, hip + d)
}

pub(crate) struct PoseBuilder {
    rest: Vec<V3>,
}

/// Leg placement for one frame: body-frame ankle targets, or `None` to keep
/// the rest legs.
pub(crate) type AnkleTargets = Option<[V3; 2]>;

impl PoseBuilder {
    pub fn new(rest: &[[f64; 3]], scale: f64) -> Self {
        PoseBuilder {
            rest: rest.iter().map(|p| Vector3::from(*p) * scale).collect(),
        }
    }

    pub fn rest(&self, j: usize) -> V3 {
        self.rest[j]
    }

    /// Builds a pose: arms set by the given angles, upper body leaned forward
    /// by `lean` about the pelvis, then each arm swept about the vertical
    /// through its shoulder (so the sweep never changes heights). Everything
    /// is shifted by `root_shift`; legs stay at rest or are solved to reach
    /// `ankles` (`[right, left]`, before the shift).
    pub fn pose(
        &self,
        right: ArmAngles,
        left: ArmAngles,
        lean: f64,
        root_shift: V3,
        ankles: AnkleTargets,
    ) -> Vec<[f64; 3]> {
        let mut p = self.rest.clone();
        let arms = [(RIGHT_ARM, -1.0, right), (LEFT_ARM, 1.0, left)];
        for (arm, _, a) in arms {
            let l1 = (self.rest[arm[1]] - self.rest[arm[0]]).norm();
            let l2 = (self.rest[arm[2]] - self.rest[arm[1]]).norm();
            let (e, h) = arm_chain(self.rest[arm[0]], l1, l2, a);
            p[arm[1]] = e;
            p[arm[2]] = h;
        }
        let pivot = self.rest[PELVIS];
        let lean_rot = rot_x(lean);
        for j in SPINE_AND_ARMS {
            p[j] = pivot + lean_rot * (p[j] - pivot);
        }
        for (arm, side, a) in arms {
            let sweep = rot_z(-side * a.sweep);
            let shoulder = p[arm[0]];
            for j in &arm[1..] {
                p[*j] = shoulder + sweep * (p[*j] - shoulder);
            }
        }
        for j in 0..p.len() {
            p[j] += root_shift;
        }
        if let Some(targets) = ankles {
            for (leg, target) in [RIGHT_LEG, LEFT_LEG].into_iter().zip(targets) {
                let thigh = (self.rest[leg[1]] - self.rest[leg[0]]).norm();
                let shank = (self.rest[leg[2]] - self.rest[leg[1]]).norm();
                let toe_offset = self.rest[leg[3]] - self.rest[leg[2]];
                let (knee, ankle) = leg_ik(p[leg[0]], target, thigh, shank);
                p[leg[1]] = knee;
                p[leg[2]] = ankle;
                p[leg[3]] = ankle + toe_offset;
            }
        }
        p.iter().map(|v| [v.x, v.y, v.z]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::SkeletonTopology;

    #[test]
    fn zero_angles_reproduce_rest() {
        let topo = SkeletonTopology::xsens23();
        let b = PoseBuilder::new(topo.rest_pose(), 1.0);
        let p = b.pose(ArmAngles::default(), ArmAngles::default(), 0.0, V3::zeros(), None);
        for (a, r) in p.iter().zip(topo.rest_pose()) {
            for k in 0..3 {
                assert!((a[k] - r[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flexion_moves_hand_forward_and_preserves_bones() {
        let topo = SkeletonTopology::xsens23();
        let b = PoseBuilder::new(topo.rest_pose(), 1.0);
        let a = ArmAngles {
            flex: 1.0,
            elbow: 0.5,
            sweep: 0.3,
        };
        let p = b.pose(a, a, 0.0, V3::zeros(), None);
        assert!(p[10][1] < -0.2 && p[14][1] < -0.2);
        let len = |i: usize, j: usize| (V3::from(p[i]) - V3::from(p[j])).norm();
        assert!((len(9, 8) - 0.28).abs() < 1e-12);
        assert!((len(10, 9) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn leg_ik_keeps_bone_lengths() {
        let hip = V3::new(0.1, 0.0, 0.86);
        let ankle = V3::new(0.1, -0.3, 0.03);
        let (knee, a) = leg_ik(hip, ankle, 0.43, 0.47);
        assert!(((knee - hip).norm() - 0.43).abs() < 1e-9);
        assert!(((a - knee).norm() - 0.47).abs() < 1e-9);
        assert!((a - ankle).norm() < 1e-9);
    }
}
