use crate::error::{Error, Result};
use crate::skeleton::motion::MotionSequence;

/// Linear interpolation of `frames` onto `t_target` uniformly spaced samples
/// spanning the same interval. End points are copied exactly.
pub fn resample_frames<const N: usize>(frames: &[Vec<[f64; N]>], t_target: usize) -> Vec<Vec<[f64; N]>> {
    let t = frames.len();
    assert!(t >= 2 && t_target >= 2, "resampling needs at least two frames on both grids");
    let span = (t - 1) as f64;
    let steps = (t_target - 1) as f64;
    (0..t_target)
        .map(|k| {
            let u = k as f64 * span / steps;
            let i0 = u.floor() as usize;
            if i0 >= t - 1 {
                return frames[t - 1].clone();
            }
            let w = u - i0 as f64;
            if w == 0.0 {
                return frames[i0].clone();
            }
            frames[i0]
                .iter()
                .zip(&frames[i0 + 1])
                .map(|(a, b)| std::array::from_fn(|c| a[c] + w * (b[c] - a[c])))
                .collect()
        })
        .collect()
}

/// Resamples to `t_target` frames over the original duration; `fps` is
/// updated so that `(T − 1) / fps` is unchanged.
pub fn resample(seq: &MotionSequence, t_target: usize) -> Result<MotionSequence> {
    if seq.num_frames() < 2 || t_target < 2 {
        return Err(Error::arg(format!(
            "resampling needs T ≥ 2 and a target ≥ 2 (T = {}, target = {t_target})",
            seq.num_frames()
        )));
    }
    let fps = seq.fps * (t_target - 1) as f64 / (seq.num_frames() - 1) as f64;
    Ok(seq.with_frames(resample_frames(&seq.frames, t_target), fps))
}
