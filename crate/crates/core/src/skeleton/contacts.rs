use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::motion::MotionSequence;
use crate::skeleton::topology::SkeletonTopology;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactThresholds {
    /// Maximum foot height in metres.
    pub height: f64,
    /// Maximum foot speed in metres per second.
    pub speed: f64,
    /// Half-width in seconds of the centred window the speed is measured
    /// over (at least one frame), which keeps joint noise from toggling
    /// contacts.
    #[serde(default = "default_window")]
    pub window: f64,
}

fn default_window() -> f64 {
    0.1
}

impl Default for ContactThresholds {
    fn default() -> Self {
        ContactThresholds {
            height: 0.05,
            speed: 0.2,
            window: default_window(),
        }
    }
}

impl ContactThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.height) && ok(self.speed) && ok(self.window)) {
            return Err(Error::arg("contact thresholds must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Per-frame `[left, right]` foot contact: the foot joint is low and slow.
pub fn detect_foot_contacts(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    th: &ContactThresholds,
) -> Result<Vec<[bool; 2]>> {
    th.validate()?;
    if seq.num_joints() != topo.num_joints() {
        return Err(Error::Motion("joint count differs from the skeleton".into()));
    }
    let t = seq.num_frames();
    if t < 2 {
        return Err(Error::Motion("contact detection needs at least two frames".into()));
    }
    let w = ((th.window * seq.fps).round() as usize).max(1);
    let r = topo.roles();
    let feet = [r.left_foot, r.right_foot];
    Ok((0..t)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(w), (i + w).min(t - 1));
            feet.map(|f| {
                let (a, b) = (seq.frames[lo][f], seq.frames[hi][f]);
                let dist = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
                let speed = dist * seq.fps / (hi - lo) as f64;
                seq.frames[i][f][2] < th.height && speed < th.speed
            })
        })
        .collect())
}
