use serde::{Deserialize, Serialize};

/// Accuracy, per-class F1 and the confusion matrix (rows: true class).
///
/// A class with no true and no predicted samples has F1 = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_predictions(predicted: &[usize], truth: &[usize], n_classes: usize) -> Self {
        assert_eq!(predicted.len(), truth.len());
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            confusion[t][p] += 1;
        }
        let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let accuracy = if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 };
        let f1 = (0..n_classes)
            .map(|k| {
                let tp = confusion[k][k] as f64;
                let actual: usize = confusion[k].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[k]).sum();
                let denom = (actual + predicted) as f64;
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * tp / denom
                }
            })
            .collect();
        Metrics { accuracy, f1, confusion }
    }
}

/// Accuracy on the samples of classes `a` and `b` when the decision is
/// restricted to those two logits.
pub fn pairwise_accuracy(logits: &[Vec<f64>], truth: &[usize], a: usize, b: usize) -> Option<f64> {
    let mut n = 0usize;
    let mut correct = 0usize;
    for (l, &t) in logits.iter().zip(truth) {
        if t != a && t != b {
            continue;
        }
        n += 1;
        let pick = if l[b] > l[a] { b } else { a };
        correct += usize::from(pick == t);
    }
    (n > 0).then(|| correct as f64 / n as f64)
}
