use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

/// Zero crossings of the sinc kernel on each side, at the output cutoff.
const HALF_ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// The kernel is symmetric around each output instant (linear phase) and its
/// cutoff sits at the lower of the two Nyquist frequencies. Each output sample
/// is divided by the sum of the kernel taps it used, so DC passes with unit
/// gain everywhere, including near the clip edges.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = ((clip.len() as f64) * ratio).round().max(1.0) as usize;
    let cutoff = ratio.min(1.0);
    let half_width = HALF_ZERO_CROSSINGS / cutoff;
    let n = clip.len() as isize;

    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 / ratio;
            let lo = (pos - half_width).ceil().max(0.0) as isize;
            let hi = ((pos + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for k in lo..=hi {
                let d = pos - k as f64;
                let w = cutoff * sinc(cutoff * d) * hann(d / half_width);
                acc += w * clip.samples[k as usize] as f64;
                norm += w;
            }
            if norm.abs() > 1e-12 {
                (acc / norm) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hann taper on `[-1, 1]`.
fn hann(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * x).cos())
    }
}
