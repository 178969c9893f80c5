use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::frame::{compute_velocity, to_local_frame};
use crate::skeleton::motion::MotionSequence;
use crate::skeleton::rotation::bone_rotation_features;
use crate::skeleton::topology::SkeletonTopology;
use crate::tensor::Tensor;

/// Per-joint feature channel. The declaration order is the concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Position,
    Speed,
    EulerAngles,
    AngularSpeed,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Position,
        Channel::Speed,
        Channel::EulerAngles,
        Channel::AngularSpeed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Position => "position",
            Channel::Speed => "speed",
            Channel::EulerAngles => "euler_angles",
            Channel::AngularSpeed => "angular_speed",
        }
    }
}

/// A non-empty set of channels, three values each.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Channel>", into = "Vec<Channel>")]
pub struct Representation(BTreeSet<Channel>);

impl Representation {
    pub fn new(channels: impl IntoIterator<Item = Channel>) -> Result<Self> {
        let set: BTreeSet<Channel> = channels.into_iter().collect();
        if set.is_empty() {
            return Err(Error::arg("feature representation must name at least one channel"));
        }
        Ok(Representation(set))
    }

    pub fn position_speed() -> Self {
        Representation::new([Channel::Position, Channel::Speed]).unwrap()
    }

    pub fn all() -> Self {
        Representation::new(Channel::ALL).unwrap()
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, c: Channel) -> bool {
        self.0.contains(&c)
    }

    /// Values per joint.
    pub fn dim(&self) -> usize {
        3 * self.0.len()
    }
}

impl Default for Representation {
    fn default() -> Self {
        Representation::position_speed()
    }
}

impl TryFrom<Vec<Channel>> for Representation {
    type Error = Error;
    fn try_from(v: Vec<Channel>) -> Result<Self> {
        Representation::new(v)
    }
}

impl From<Representation> for Vec<Channel> {
    fn from(r: Representation) -> Self {
        r.0.into_iter().collect()
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.channels().map(Channel::as_str).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for Representation {
    type Err = Error;

    /// Comma-separated channel names, e.g. `position,speed`.
    fn from_str(s: &str) -> Result<Self> {
        let channels = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                Channel::ALL
                    .into_iter()
                    .find(|c| c.as_str() == p)
                    .ok_or_else(|| Error::arg(format!("unknown feature channel `{p}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Representation::new(channels)
    }
}

/// Features of one sequence, `T × J × D`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub features: Tensor,
    pub representation: Representation,
}

/// Body-frame features of a world-frame sequence.
pub fn build_features(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    rep: &Representation,
) -> Result<FeatureSequence> {
    seq.validate(topo)?;
    let (local, _) = to_local_frame(seq, topo)?;
    let speed = if rep.contains(Channel::Speed) {
        Some(compute_velocity(&local)?)
    } else {
        None
    };
    let rot = if rep.contains(Channel::EulerAngles) || rep.contains(Channel::AngularSpeed) {
        Some(bone_rotation_features(&local, topo)?)
    } else {
        None
    };
    let (t, j, d) = (local.num_frames(), topo.num_joints(), rep.dim());
    let mut data = Vec::with_capacity(t * j * d);
    for ti in 0..t {
        for ji in 0..j {
            for c in rep.channels() {
                let v = match c {
                    Channel::Position => local.frames[ti][ji],
                    Channel::Speed => speed.as_ref().unwrap()[ti][ji],
                    Channel::EulerAngles => rot.as_ref().unwrap().0[ti][ji],
                    Channel::AngularSpeed => rot.as_ref().unwrap().1[ti][ji],
                };
                data.extend_from_slice(&v);
            }
        }
    }
    Ok(FeatureSequence {
        features: Tensor::new(vec![t, j, d], data)?,
        representation: rep.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representation_parsing_and_dims() {
        let r: Representation = "speed, position".parse().unwrap();
        assert_eq!(r.to_string(), "position,speed");
        assert_eq!(r.dim(), 6);
        assert_eq!(Representation::all().dim(), 12);
        assert!("".parse::<Representation>().is_err());
        assert!("pos".parse::<Representation>().is_err());
        assert!(Representation::new([]).is_err());
    }
}
