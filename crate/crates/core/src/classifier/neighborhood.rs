use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;
use crate::Tensor;

/// Which joints feed the difference block of a graph convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NeighborhoodSpec {
    /// No neighbours: the difference block is zero.
    SelfOnly,
    /// The parent in the tree rooted at the pelvis. The root is its own parent.
    #[default]
    Parent,
    /// The first `k` ancestors.
    KAncestors(usize),
    /// All joints within `k` hops, ignoring edge direction.
    UndirectedKHop(usize),
    /// Every other joint.
    FullyConnected,
}

impl NeighborhoodSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NeighborhoodSpec::KAncestors(k) | NeighborhoodSpec::UndirectedKHop(k) if !(1..=3).contains(k) => {
                Err(Error::arg(format!("neighbourhood size must be 1, 2 or 3, got {k}")))
            }
            _ => Ok(()),
        }
    }

    /// Neighbour list of every joint. Joints without a neighbour under the
    /// spec (the root for directed specs) fall back to themselves.
    pub fn neighbours(&self, topo: &SkeletonTopology) -> Vec<Vec<usize>> {
        let n = topo.num_joints();
        (0..n)
            .map(|j| {
                let nb = match *self {
                    NeighborhoodSpec::SelfOnly => vec![],
                    NeighborhoodSpec::Parent => vec![topo.parent(j)],
                    NeighborhoodSpec::KAncestors(k) => topo.ancestors(j, k),
                    NeighborhoodSpec::UndirectedKHop(k) => topo.within_hops(j, k),
                    NeighborhoodSpec::FullyConnected => (0..n).filter(|&i| i != j).collect(),
                };
                if nb.is_empty() {
                    vec![j]
                } else {
                    nb
                }
            })
            .collect()
    }

    /// `J × J` matrix `A − I` where row `i` of `A` averages the neighbours of
    /// joint `i`, so that `A·x − x` is the mean neighbour difference. `None`
    /// for [`NeighborhoodSpec::SelfOnly`].
    pub fn difference_matrix(&self, topo: &SkeletonTopology) -> Option<Tensor> {
        if *self == NeighborhoodSpec::SelfOnly {
            return None;
        }
        let n = topo.num_joints();
        let mut m = vec![0.0; n * n];
        for (i, nb) in self.neighbours(topo).iter().enumerate() {
            for &j in nb {
                m[i * n + j] += 1.0 / nb.len() as f64;
            }
            m[i * n + i] -= 1.0;
        }
        Some(Tensor::new(vec![n, n], m).expect("square matrix"))
    }
}

impl fmt::Display for NeighborhoodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborhoodSpec::SelfOnly => write!(f, "self"),
            NeighborhoodSpec::Parent => write!(f, "parent"),
            NeighborhoodSpec::KAncestors(k) => write!(f, "ancestors:{k}"),
            NeighborhoodSpec::UndirectedKHop(k) => write!(f, "khop:{k}"),
            NeighborhoodSpec::FullyConnected => write!(f, "full"),
        }
    }
}

impl FromStr for NeighborhoodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("unknown neighbourhood `{s}` (self, parent, ancestors:K, khop:K, full)"));
        let spec = match s.split_once(':') {
            None => match s {
                "self" => NeighborhoodSpec::SelfOnly,
                "parent" => NeighborhoodSpec::Parent,
                "full" => NeighborhoodSpec::FullyConnected,
                _ => return Err(bad()),
            },
            Some((kind, k)) => {
                let k: usize = k.parse().map_err(|_| bad())?;
                match kind {
                    "ancestors" => NeighborhoodSpec::KAncestors(k),
                    "khop" => NeighborhoodSpec::UndirectedKHop(k),
                    _ => return Err(bad()),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for NeighborhoodSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NeighborhoodSpec> for String {
    fn from(s: NeighborhoodSpec) -> String {
        s.to_string()
    }
}
