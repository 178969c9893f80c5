use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io;
use crate::skeleton::topology::SkeletonTopology;

/// The eight interaction types of the capture protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Lift,
    MoveBowl,
    Walk,
    Fish,
    Pour,
    Bend,
    Sit,
    Drink,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Lift,
        Action::MoveBowl,
        Action::Walk,
        Action::Fish,
        Action::Pour,
        Action::Bend,
        Action::Sit,
        Action::Drink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Lift => "lift",
            Action::MoveBowl => "move_bowl",
            Action::Walk => "walk",
            Action::Fish => "fish",
            Action::Pour => "pour",
            Action::Bend => "bend",
            Action::Sit => "sit",
            Action::Drink => "drink",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown action `{s}`")))
    }
}

/// A timed sequence of 3D joint positions (metres, world frame, `z` up).
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    /// `T × J` joint positions.
    pub frames: Vec<Vec<[f64; 3]>>,
    pub subject_id: String,
    pub action: Action,
    pub property_label: usize,
    pub n_classes: usize,
    /// Free-form annotations carried through the file format.
    pub meta: BTreeMap<String, Value>,
}

impl MotionSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_joints(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    /// Time between the first and last frame.
    pub fn duration(&self) -> f64 {
        (self.num_frames().saturating_sub(1)) as f64 / self.fps
    }

    pub fn with_frames(&self, frames: Vec<Vec<[f64; 3]>>, fps: f64) -> MotionSequence {
        MotionSequence {
            fps,
            frames,
            subject_id: self.subject_id.clone(),
            action: self.action,
            property_label: self.property_label,
            n_classes: self.n_classes,
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self, topo: &SkeletonTopology) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Motion(format!("fps must be positive, got {}", self.fps)));
        }
        if self.num_frames() < 2 {
            return Err(Error::Motion(format!("need at least 2 frames, got {}", self.num_frames())));
        }
        let j = topo.num_joints();
        if let Some(t) = self.frames.iter().position(|f| f.len() != j) {
            return Err(Error::Motion(format!(
                "frame {t} has {} joints, skeleton has {j}",
                self.frames[t].len()
            )));
        }
        if let Some(t) = self
            .frames
            .iter()
            .position(|f| f.iter().flatten().any(|v| !v.is_finite()))
        {
            return Err(Error::Motion(format!("non-finite position in frame {t}")));
        }
        if self.n_classes == 0 || self.property_label >= self.n_classes {
            return Err(Error::Motion(format!(
                "property label {} not in [0, {})",
                self.property_label, self.n_classes
            )));
        }
        Ok(())
    }

    pub fn to_file(&self, topo: &SkeletonTopology) -> MotionFile {
        MotionFile {
            fps: self.fps,
            joint_names: topo.joint_names().to_vec(),
            parents: topo.parents().to_vec(),
            subject_id: self.subject_id.clone(),
            action: self.action,
            property_label: self.property_label,
            n_classes: self.n_classes,
            frames: self.frames.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn save(&self, path: &Path, topo: &SkeletonTopology) -> Result<()> {
        self.validate(topo)?;
        io::write_json(path, &self.to_file(topo))
    }

    pub fn load(path: &Path, topo: &SkeletonTopology) -> Result<MotionSequence> {
        let file: MotionFile = io::read_json(path)?;
        let schema = |e: Error| Error::Schema {
            path: path.to_path_buf(),
            detail: e.to_string(),
        };
        topo.check_matches(&file.joint_names, &file.parents).map_err(schema)?;
        let seq = MotionSequence {
            fps: file.fps,
            frames: file.frames,
            subject_id: file.subject_id,
            action: file.action,
            property_label: file.property_label,
            n_classes: file.n_classes,
            meta: file.meta,
        };
        seq.validate(topo).map_err(schema)?;
        Ok(seq)
    }
}

/// On-disk motion file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionFile {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub parents: Vec<usize>,
    pub subject_id: String,
    pub action: Action,
    pub property_label: usize,
    pub n_classes: usize,
    pub frames: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_names_round_trip() {
        for a in Action::ALL {
            assert_eq!(a.as_str().parse::<Action>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("juggle".parse::<Action>().is_err());
    }
}
