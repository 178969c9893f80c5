use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use super::repr::TransferInput;
use crate::error::{Error, Result};

/// Clips in the transfer representation, indexed for triplet sampling.
#[derive(Clone, Debug)]
pub struct TransferCorpus {
    pub items: Vec<TransferInput>,
    pub classes: usize,
    /// Items of each subject, by subject.
    by_subject: BTreeMap<String, Vec<usize>>,
    /// Items of each property value.
    by_label: Vec<Vec<usize>>,
    /// `(subject, trial, label)` → item.
    by_key: BTreeMap<(String, u64, usize), usize>,
}

/// Index lists into a [`TransferCorpus`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletBatch {
    pub anchors: Vec<usize>,
    /// Same subject, different property.
    pub positives: Vec<usize>,
    /// Different subject, same property.
    pub negatives: Vec<usize>,
    /// Target property `y'` per anchor.
    pub targets: Vec<usize>,
    /// `x̂`: the anchor's subject and trial at property `y'`.
    pub target_items: Vec<usize>,
}

impl TransferCorpus {
    /// Indexes `items`; fails when any triplet constraint cannot be met.
    pub fn new(items: Vec<TransferInput>, classes: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Unsatisfiable("transfer corpus is empty".into()));
        }
        let shape = items[0].data.shape().to_vec();
        let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_label = vec![Vec::new(); classes];
        let mut by_key = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            if it.data.shape() != shape.as_slice() {
                return Err(Error::arg(format!("clip {i} has shape {:?}, expected {shape:?}", it.data.shape())));
            }
            if it.label >= classes {
                return Err(Error::arg(format!("clip {i} has property {} outside {classes} classes", it.label)));
            }
            by_subject.entry(it.subject_id.clone()).or_default().push(i);
            by_label[it.label].push(i);
            if by_key.insert((it.subject_id.clone(), it.trial, it.label), i).is_some() {
                return Err(Error::arg(format!(
                    "subject {} has two clips for trial {} at property {}",
                    it.subject_id, it.trial, it.label
                )));
            }
        }
        let corpus = TransferCorpus {
            items,
            classes,
            by_subject,
            by_label,
            by_key,
        };
        corpus.check()?;
        Ok(corpus)
    }

    fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (s, idx) in &self.by_subject {
            let labels: BTreeSet<usize> = idx.iter().map(|&i| self.items[i].label).collect();
            if labels.len() < 2 {
                problems.push(format!("subject {s} has fewer than two property values"));
            }
            let trials: BTreeSet<u64> = idx.iter().map(|&i| self.items[i].trial).collect();
            for t in trials {
                for y in 0..self.classes {
                    if !self.by_key.contains_key(&(s.clone(), t, y)) {
                        problems.push(format!("subject {s} trial {t} lacks property {y}"));
                    }
                }
            }
        }
        for (y, idx) in self.by_label.iter().enumerate() {
            let subjects: BTreeSet<&str> = idx.iter().map(|&i| self.items[i].subject_id.as_str()).collect();
            if subjects.len() < 2 {
                problems.push(format!("property {y} has fewer than two subjects"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Unsatisfiable(problems.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Draws positives, negatives and targets for the given anchors.
    pub fn triplets_for<R: Rng + ?Sized>(&self, anchors: &[usize], rng: &mut R) -> TripletBatch {
        let mut b = TripletBatch {
            anchors: anchors.to_vec(),
            positives: Vec::with_capacity(anchors.len()),
            negatives: Vec::with_capacity(anchors.len()),
            targets: Vec::with_capacity(anchors.len()),
            target_items: Vec::with_capacity(anchors.len()),
        };
        for &a in anchors {
            let it = &self.items[a];
            let pos: Vec<usize> = self.by_subject[&it.subject_id]
                .iter()
                .copied()
                .filter(|&i| self.items[i].label != it.label)
                .collect();
            let neg: Vec<usize> = self.by_label[it.label]
                .iter()
                .copied()
                .filter(|&i| self.items[i].subject_id != it.subject_id)
                .collect();
            b.positives.push(*pos.choose(rng).expect("checked at construction"));
            b.negatives.push(*neg.choose(rng).expect("checked at construction"));
            let y = rng.random_range(0..self.classes);
            b.targets.push(y);
            b.target_items.push(self.by_key[&(it.subject_id.clone(), it.trial, y)]);
        }
        b
    }
}

/// A batch of uniformly drawn anchors with their triplets and targets.
pub fn sample_triplets<R: Rng + ?Sized>(corpus: &TransferCorpus, batch: usize, rng: &mut R) -> TripletBatch {
    let anchors: Vec<usize> = (0..batch).map(|_| rng.random_range(0..corpus.len())).collect();
    corpus.triplets_for(&anchors, rng)
}
