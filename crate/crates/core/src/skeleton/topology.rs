use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Joints with a semantic role in feature construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Roles {
    pub root: usize,
    pub right_shoulder: usize,
    pub left_shoulder: usize,
    pub right_foot: usize,
    pub left_foot: usize,
}

/// A rooted joint tree with a rest pose.
///
/// The rest pose is given in the body frame used throughout the crate: `x`
/// points from the right shoulder to the left, `z` is up and `y = z × x`
/// points backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonTopology {
    joint_names: Vec<String>,
    parents: Vec<usize>,
    roles: Roles,
    rest_pose: Vec<[f64; 3]>,
}

pub const XSENS_JOINTS: [&str; 23] = [
    "Pelvis",
    "L5",
    "L3",
    "T12",
    "T8",
    "Neck",
    "Head",
    "RightShoulder",
    "RightUpperArm",
    "RightForeArm",
    "RightHand",
    "LeftShoulder",
    "LeftUpperArm",
    "LeftForeArm",
    "LeftHand",
    "RightUpperLeg",
    "RightLowerLeg",
    "RightFoot",
    "RightToe",
    "LeftUpperLeg",
    "LeftLowerLeg",
    "LeftFoot",
    "LeftToe",
];

const XSENS_PARENTS: [usize; 23] = [
    0, 0, 1, 2, 3, 4, 5, 4, 7, 8, 9, 4, 11, 12, 13, 0, 15, 16, 17, 0, 19, 20, 21,
];

/// Right-side rest positions (metres); left joints mirror `x`.
const XSENS_REST: [[f64; 3]; 23] = [
    [0.0, 0.0, 0.95],
    [0.0, 0.0, 1.05],
    [0.0, 0.0, 1.15],
    [0.0, 0.0, 1.25],
    [0.0, 0.0, 1.35],
    [0.0, 0.0, 1.50],
    [0.0, 0.0, 1.62],
    [-0.04, 0.0, 1.45],
    [-0.18, 0.0, 1.45],
    [-0.18, 0.0, 1.17],
    [-0.18, 0.0, 0.92],
    [0.04, 0.0, 1.45],
    [0.18, 0.0, 1.45],
    [0.18, 0.0, 1.17],
    [0.18, 0.0, 0.92],
    [-0.09, 0.0, 0.93],
    [-0.09, 0.0, 0.50],
    [-0.09, 0.0, 0.03],
    [-0.09, -0.14, 0.01],
    [0.09, 0.0, 0.93],
    [0.09, 0.0, 0.50],
    [0.09, 0.0, 0.03],
    [0.09, -0.14, 0.01],
];

impl SkeletonTopology {
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<usize>,
        roles: Roles,
        rest_pose: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let j = joint_names.len();
        if j == 0 || parents.len() != j || rest_pose.len() != j {
            return Err(Error::Topology(format!(
                "{} names, {} parents, {} rest positions",
                j,
                parents.len(),
                rest_pose.len()
            )));
        }
        if let Some((i, &p)) = parents.iter().enumerate().find(|(_, &p)| p >= j) {
            return Err(Error::Topology(format!("joint {i} has parent {p} out of range")));
        }
        let roots: Vec<usize> = (0..j).filter(|&i| parents[i] == i).collect();
        if roots.len() != 1 {
            return Err(Error::Topology(format!("expected one root, found {roots:?}")));
        }
        for start in 0..j {
            let mut i = start;
            for _ in 0..=j {
                if parents[i] == i {
                    break;
                }
                i = parents[i];
            }
            if parents[i] != i {
                return Err(Error::Topology(format!("cycle through joint {start}")));
            }
        }
        let r = roles;
        for (what, idx) in [
            ("root", r.root),
            ("right shoulder", r.right_shoulder),
            ("left shoulder", r.left_shoulder),
            ("right foot", r.right_foot),
            ("left foot", r.left_foot),
        ] {
            if idx >= j {
                return Err(Error::Topology(format!("{what} index {idx} out of range")));
            }
        }
        if r.root != roots[0] {
            return Err(Error::Topology(format!(
                "root role {} is not the tree root {}",
                r.root, roots[0]
            )));
        }
        if rest_pose.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Topology("non-finite rest pose".into()));
        }
        Ok(SkeletonTopology {
            joint_names,
            parents,
            roles,
            rest_pose,
        })
    }

    /// The 23-joint inertial-suit skeleton.
    pub fn xsens23() -> Self {
        SkeletonTopology::new(
            XSENS_JOINTS.iter().map(|s| s.to_string()).collect(),
            XSENS_PARENTS.to_vec(),
            Roles {
                root: 0,
                right_shoulder: 8,
                left_shoulder: 12,
                right_foot: 17,
                left_foot: 21,
            },
            XSENS_REST.to_vec(),
        )
        .expect("built-in topology is valid")
    }

    /// A vertical chain of `n ≥ 2` joints, useful for toy problems.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Topology("a chain needs at least two joints".into()));
        }
        let last = n - 1;
        SkeletonTopology::new(
            (0..n).map(|i| format!("j{i}")).collect(),
            (0..n).map(|i| i.saturating_sub(1)).collect(),
            Roles {
                root: 0,
                right_shoulder: last,
                left_shoulder: last,
                right_foot: 0,
                left_foot: 0,
            },
            (0..n).map(|i| [0.0, 0.0, 0.1 * i as f64]).collect(),
        )
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn parent(&self, joint: usize) -> usize {
        self.parents[joint]
    }

    pub fn roles(&self) -> Roles {
        self.roles
    }

    pub fn root(&self) -> usize {
        self.roles.root
    }

    pub fn rest_pose(&self) -> &[[f64; 3]] {
        &self.rest_pose
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Unit rest direction of the bone ending at `joint`; `None` for the root
    /// or a zero-length rest bone.
    pub fn rest_direction(&self, joint: usize) -> Option<[f64; 3]> {
        let p = self.parents[joint];
        if p == joint {
            return None;
        }
        let (a, b) = (self.rest_pose[p], self.rest_pose[joint]);
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        (n > 0.0).then(|| [d[0] / n, d[1] / n, d[2] / n])
    }

    /// Up to `k` ancestors of `joint`, nearest first.
    pub fn ancestors(&self, joint: usize, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = joint;
        while out.len() < k && self.parents[i] != i {
            i = self.parents[i];
            out.push(i);
        }
        out
    }

    /// Joints within `k` undirected hops of `joint`, excluding itself, in index order.
    pub fn within_hops(&self, joint: usize, k: usize) -> Vec<usize> {
        let j = self.num_joints();
        let mut adj = vec![Vec::new(); j];
        for (i, &p) in self.parents.iter().enumerate() {
            if p != i {
                adj[i].push(p);
                adj[p].push(i);
            }
        }
        let mut dist = vec![usize::MAX; j];
        dist[joint] = 0;
        let mut queue = VecDeque::from([joint]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..j).filter(|&v| v != joint && dist[v] <= k).collect()
    }

    /// Whether a motion file's joint list describes this skeleton.
    pub fn check_matches(&self, names: &[String], parents: &[usize]) -> Result<()> {
        if names != self.joint_names.as_slice() {
            return Err(Error::Topology(format!(
                "joint names differ from the {}-joint skeleton",
                self.num_joints()
            )));
        }
        if parents != self.parents.as_slice() {
            return Err(Error::Topology("parent indices differ from the skeleton".into()));
        }
        Ok(())
    }

    /// Joints whose names contain any of the given fragments.
    pub fn joints_named(&self, fragments: &[&str]) -> Vec<usize> {
        (0..self.num_joints())
            .filter(|&i| fragments.iter().any(|f| self.joint_names[i].contains(f)))
            .collect()
    }
}

pub const ARM_FRAGMENTS: [&str; 4] = ["Shoulder", "UpperArm", "ForeArm", "Hand"];
pub const LEG_FRAGMENTS: [&str; 4] = ["UpperLeg", "LowerLeg", "Foot", "Toe"];
