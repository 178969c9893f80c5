//! Latent diagnostics: 2D PCA embedding and a linear property probe.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::Tensor;

/// Projects row vectors onto their first two principal components.
///
/// Each axis is signed so that its largest-magnitude loading is positive.
/// Identical rows all map to the origin.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::arg("PCA needs equally long non-empty rows"));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1.abs() { (i, *x) } else { acc });
        if v[imax] < 0.0 {
            v = -v;
        }
        axes.push(v);
    }
    while axes.len() < 2 {
        axes.push(nalgebra::DVector::zeros(d));
    }
    let proj = &x * DMatrix::from_columns(&axes);
    Ok((0..n)
        .map(|i| {
            let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
            [clean(proj[(i, 0)]), clean(proj[(i, 1)])]
        })
        .collect())
}

/// One row of the latent embedding CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatentPoint {
    pub sample_id: String,
    pub subject: String,
    pub property: usize,
    pub u: f64,
    pub v: f64,
}

pub fn write_latent_csv(path: &Path, points: &[LatentPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "subject", "property", "u", "v"])?;
    for p in points {
        w.write_record([
            p.sample_id.as_str(),
            p.subject.as_str(),
            &p.property.to_string(),
            &format!("{:.16e}", p.u),
            &format!("{:.16e}", p.v),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Settings of the linear probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    /// Inverse regularisation strength: the objective is
    /// `C·Σ cross-entropy + ½‖W‖²`, minimised in its per-sample form.
    pub c: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 1000,
            lr: 2e-2,
            c: 1.0,
        }
    }
}

/// L2-regularised multinomial logistic regression fitted by full-batch Adam;
/// returns accuracy on the test rows. Rows are centred and divided by one
/// global RMS taken over the training rows, so the probe is invariant to the
/// overall latent scale but not to per-dimension rescaling.
pub fn linear_probe_accuracy(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: &[Vec<f64>],
    test_labels: &[usize],
    classes: usize,
    config: ProbeConfig,
) -> Result<f64> {
    let d = train.first().map_or(0, Vec::len);
    if d == 0 || test.is_empty() || train.len() != train_labels.len() || test.len() != test_labels.len() {
        return Err(Error::arg("probe needs non-empty, labelled train and test rows"));
    }
    if train.iter().chain(test).any(|r| r.len() != d) {
        return Err(Error::arg("probe rows differ in length"));
    }
    if !(config.c > 0.0) {
        return Err(Error::arg("probe C must be positive"));
    }
    if train_labels.iter().chain(test_labels).any(|&y| y >= classes) {
        return Err(Error::arg("probe label outside the class range"));
    }
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let ms = train
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - mean[j]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n * d as f64);
    let scale = if ms > 1e-24 { ms.sqrt() } else { 1.0 };
    let design = |rows: &[Vec<f64>]| {
        let data = rows.iter().flat_map(|r| (0..d).map(|j| (r[j] - mean[j]) / scale)).collect();
        Tensor::new(vec![rows.len(), d], data)
    };
    let (xtr, xte) = (design(train)?, design(test)?);
    let mut params = ParamStore::new();
    params.insert("w", Tensor::zeros(&[d, classes]));
    params.insert("b", Tensor::zeros(&[classes]));
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    for _ in 0..config.steps {
        let mut g = Graph::new();
        let x = g.input("x", xtr.clone());
        let w = g.param("w", params.expect("w")?.clone());
        let b = g.param("b", params.expect("b")?.clone());
        let xw = g.matmul(x, w)?;
        let logits = g.add(xw, b)?;
        let ce = g.softmax_cross_entropy(logits, train_labels)?;
        let w2 = g.mul(w, w)?;
        let w2 = g.sum_all(w2)?;
        let penalty = g.affine(w2, 0.5 / (config.c * n), 0.0)?;
        let loss = g.add(ce, penalty)?;
        let grads = g.backward(loss)?;
        adam_step(&mut params, grads.params(), &mut adam)?;
    }
    let mut g = Graph::new();
    let x = g.input("x", xte);
    let w = g.param("w", params.expect("w")?.clone());
    let b = g.param("b", params.expect("b")?.clone());
    let xw = g.matmul(x, w)?;
    let logits = g.add(xw, b)?;
    let correct = g
        .value(logits)
        .data()
        .chunks(classes)
        .zip(test_labels)
        .filter(|(row, &y)| crate::classifier::argmax(row) == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}
