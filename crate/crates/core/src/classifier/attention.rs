use std::path::Path;

use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;
use crate::Tensor;

/// Per-joint mean over frames of `a²`, min–max scaled to `[0, 1]`.
/// A map with no spread scales to all zeros.
pub fn attention_colors(map: &Tensor) -> Vec<f64> {
    let (t, j) = (map.shape()[0], map.shape()[1]);
    let mut mean = vec![0.0; j];
    for row in map.data().chunks(j) {
        for (m, a) in mean.iter_mut().zip(row) {
            *m += a * a / t as f64;
        }
    }
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return vec![0.0; j];
    }
    mean.iter().map(|m| (m - lo) / (hi - lo)).collect()
}

/// `joint_name,value` rows in joint order.
pub fn write_attention_csv(path: &Path, topo: &SkeletonTopology, values: &[f64]) -> Result<()> {
    if values.len() != topo.num_joints() {
        return Err(Error::arg("one attention value per joint is required"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["joint_name", "value"])?;
    for (name, v) in topo.joint_names().iter().zip(values) {
        w.write_record([name.as_str(), &format!("{v:.16e}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
