use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::skeleton::frame::rotate_z;
use crate::skeleton::motion::MotionSequence;

pub const ROTATIONS: usize = 10;
pub const CROPS: usize = 10;
pub const MIN_CROP_RATIO: f64 = 0.9;

/// One sampled augmentation: rotate about world `z`, then keep
/// `len` frames starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub angle: f64,
    pub ratio: f64,
    pub start: usize,
    pub len: usize,
}

impl AugmentDraw {
    pub fn identity(t: usize) -> Self {
        AugmentDraw {
            angle: 0.0,
            ratio: 1.0,
            start: 0,
            len: t,
        }
    }
}

/// Crop length for a ratio: `round(ratio · T)`, at least 2 frames.
pub fn crop_len(t: usize, ratio: f64) -> usize {
    ((ratio * t as f64).round() as usize).clamp(2.min(t), t)
}

/// Samples `n_rot` angles in `[0, π)` and, for each, `n_crop` crops with
/// ratio in `[0.9, 1]` and a uniform start over the feasible range.
pub fn draw_augmentations<R: Rng + ?Sized>(
    t: usize,
    n_rot: usize,
    n_crop: usize,
    rng: &mut R,
) -> Vec<AugmentDraw> {
    let mut out = Vec::with_capacity(n_rot * n_crop);
    for _ in 0..n_rot {
        let angle = rng.random_range(0.0..PI);
        for _ in 0..n_crop {
            let ratio = rng.random_range(MIN_CROP_RATIO..=1.0);
            let len = crop_len(t, ratio);
            let start = rng.random_range(0..=t - len);
            out.push(AugmentDraw {
                angle,
                ratio,
                start,
                len,
            });
        }
    }
    out
}

pub fn apply_augmentation(seq: &MotionSequence, draw: &AugmentDraw) -> MotionSequence {
    let cropped = &seq.frames[draw.start..draw.start + draw.len];
    let frames = if draw.angle == 0.0 {
        cropped.to_vec()
    } else {
        rotate_z(cropped, draw.angle)
    };
    seq.with_frames(frames, seq.fps)
}

/// `n_rot × n_crop` rotated and cropped copies.
pub fn augment_with<R: Rng + ?Sized>(
    seq: &MotionSequence,
    n_rot: usize,
    n_crop: usize,
    rng: &mut R,
) -> Vec<(AugmentDraw, MotionSequence)> {
    draw_augmentations(seq.num_frames(), n_rot, n_crop, rng)
        .into_iter()
        .map(|d| (d, apply_augmentation(seq, &d)))
        .collect()
}

/// The standard 10 rotations × 10 crops.
pub fn augment<R: Rng + ?Sized>(seq: &MotionSequence, rng: &mut R) -> Vec<MotionSequence> {
    augment_with(seq, ROTATIONS, CROPS, rng)
        .into_iter()
        .map(|(_, s)| s)
        .collect()
}
