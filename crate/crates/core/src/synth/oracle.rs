//! Brute-force separability check on hand-picked clip statistics.

use crate::skeleton::{MotionSequence, SkeletonTopology};
use crate::synth::Template;

/// `(duration, peak signal-joint speed)` measured directly from a clip.
/// Speed is in skeleton sizes per second (total bone length of the first
/// frame), so performer size drops out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleFeatures {
    pub duration: f64,
    pub peak_speed: f64,
}

impl OracleFeatures {
    fn as_array(&self) -> [f64; 2] {
        [self.duration, self.peak_speed]
    }
}

pub fn oracle_features(seq: &MotionSequence, topo: &SkeletonTopology, template: Template) -> OracleFeatures {
    let joints: Vec<usize> = template
        .signal_joints()
        .iter()
        .filter_map(|n| topo.joint_index(n))
        .collect();
    let first = &seq.frames[0];
    let size: f64 = (0..topo.num_joints())
        .filter(|&j| j != topo.root())
        .map(|j| {
            let p = topo.parent(j);
            (0..3).map(|c| (first[j][c] - first[p][c]).powi(2)).sum::<f64>().sqrt()
        })
        .sum();
    let mut peak: f64 = 0.0;
    for w in seq.frames.windows(2) {
        for &j in &joints {
            let d: f64 = (0..3).map(|c| (w[1][j][c] - w[0][j][c]).powi(2)).sum();
            peak = peak.max(d.sqrt() * seq.fps);
        }
    }
    OracleFeatures {
        duration: seq.duration(),
        peak_speed: peak / size,
    }
}

fn standardise(features: &[OracleFeatures]) -> Vec<[f64; 2]> {
    let n = features.len() as f64;
    let raw: Vec<[f64; 2]> = features.iter().map(OracleFeatures::as_array).collect();
    let mut mean = [0.0; 2];
    let mut sd = [0.0; 2];
    for c in 0..2 {
        mean[c] = raw.iter().map(|r| r[c]).sum::<f64>() / n;
        sd[c] = (raw.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt();
        if sd[c] == 0.0 {
            sd[c] = 1.0;
        }
    }
    raw.iter()
        .map(|r| [(r[0] - mean[0]) / sd[0], (r[1] - mean[1]) / sd[1]])
        .collect()
}

fn centroids(z: &[[f64; 2]], labels: &[usize], n_classes: usize) -> Vec<Option<[f64; 2]>> {
    let mut sum = vec![[0.0; 2]; n_classes];
    let mut count = vec![0usize; n_classes];
    for (v, &y) in z.iter().zip(labels) {
        sum[y][0] += v[0];
        sum[y][1] += v[1];
        count[y] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| [s[0] / c as f64, s[1] / c as f64]))
        .collect()
}

/// Accuracy of assigning each clip to the nearest class centroid in
/// standardised feature space (centroids fitted on the same clips).
pub fn nearest_centroid_accuracy(features: &[OracleFeatures], labels: &[usize], n_classes: usize) -> f64 {
    assert_eq!(features.len(), labels.len());
    if features.is_empty() {
        return 0.0;
    }
    let z = standardise(features);
    let cents = centroids(&z, labels, n_classes);
    let correct = z
        .iter()
        .zip(labels)
        .filter(|(v, &y)| {
            let best = cents
                .iter()
                .enumerate()
                .filter_map(|(k, c)| c.map(|c| (k, (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k);
            best == Some(y)
        })
        .count();
    correct as f64 / features.len() as f64
}

/// Distance between the standardised centroids of classes `a` and `b`.
pub fn centroid_distance(features: &[OracleFeatures], labels: &[usize], n_classes: usize, a: usize, b: usize) -> f64 {
    let z = standardise(features);
    let cents = centroids(&z, labels, n_classes);
    match (cents[a], cents[b]) {
        (Some(p), Some(q)) => ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(),
        _ => f64::NAN,
    }
}
