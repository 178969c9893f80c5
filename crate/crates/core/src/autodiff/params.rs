use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io;
use crate::tensor::Tensor;

/// Named learnable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::arg(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

impl FromIterator<(String, Tensor)> for ParamStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamStore {
            tensors: iter.into_iter().collect(),
        }
    }
}

/// Key reserved for the metadata block inside a checkpoint object.
pub const METADATA_KEY: &str = "metadata";

/// Run metadata stored beside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
    /// Free-form hyperparameters of the run that produced the checkpoint.
    #[serde(default)]
    pub hyperparameters: Value,
}

/// A flat JSON object: one `{shape, data}` entry per parameter plus `metadata`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_value(&self) -> Result<Value> {
        let mut obj = Map::new();
        for (name, t) in self.params.iter() {
            if name == METADATA_KEY {
                return Err(Error::arg(format!("parameter name `{METADATA_KEY}` is reserved")));
            }
            obj.insert(name.clone(), serde_json::to_value(t)?);
        }
        obj.insert(METADATA_KEY.to_string(), serde_json::to_value(&self.meta)?);
        Ok(Value::Object(obj))
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(obj) = v else {
            return Err(Error::arg("checkpoint must be a JSON object"));
        };
        let mut params = ParamStore::new();
        let mut meta = None;
        for (k, v) in obj {
            if k == METADATA_KEY {
                meta = Some(serde_json::from_value(v)?);
            } else {
                let t: Tensor = serde_json::from_value(v)
                    .map_err(|e| Error::arg(format!("parameter `{k}`: {e}")))?;
                params.insert(k, t);
            }
        }
        Ok(Checkpoint {
            params,
            meta: meta.ok_or_else(|| Error::arg("checkpoint has no metadata block"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_value()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let v: Value = io::read_json(path)?;
        Checkpoint::from_value(v).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![2, 2], vec![0.1, -1.0 / 3.0, 1e-310, 7.0]).unwrap());
        params.insert("b", Tensor::from_vec(vec![std::f64::consts::PI]));
        let ck = Checkpoint {
            params,
            meta: CheckpointMeta {
                seed: 9,
                step: 120,
                hyperparameters: serde_json::json!({"lr": 1e-4}),
            },
        };
        let bytes = io::to_json_bytes(&ck.to_value().unwrap()).unwrap();
        let back = Checkpoint::from_value(serde_json::from_slice(&bytes).unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn reserved_name_is_rejected() {
        let mut params = ParamStore::new();
        params.insert(METADATA_KEY, Tensor::scalar(1.0));
        let ck = Checkpoint {
            params,
            meta: CheckpointMeta::default(),
        };
        assert!(ck.to_value().is_err());
    }
}
