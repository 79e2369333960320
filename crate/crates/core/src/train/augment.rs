//! Seeded waveform and spectrogram augmentations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{AudioClip, LogMelSpectrogram};

/// Waveform operations. Ranges are sampled uniformly; equal bounds fix the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WaveOp {
    Gain { min_db: f64, max_db: f64 },
    /// First-order RC high-pass.
    HighPass { min_hz: f64, max_hz: f64 },
    /// First-order RC low-pass.
    LowPass { min_hz: f64, max_hz: f64 },
    WhiteNoise { min_snr_db: f64, max_snr_db: f64 },
    /// Zeroes `[start_s, end_s)`.
    TimeDropout { start_s: f64, end_s: f64 },
    /// Zeroes one span of random position and length up to `max_s`.
    RandomDropout { max_s: f64 },
    /// Mixes in a looped noise recording at a random offset.
    NoiseInjection { noise: AudioClip, min_snr_db: f64, max_snr_db: f64 },
    PitchShift { semitones: f64 },
    Reverb { rt60_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SpecOp {
    TimeMask { min_width: usize, max_width: usize, count: usize },
    FreqMask { min_width: usize, max_width: usize, count: usize },
    /// Piecewise-constant gain over `bands` random mel bands.
    FilterAugment { min_db: f64, max_db: f64, min_bands: usize, max_bands: usize },
    FreqStretch { min_factor: f64, max_factor: f64 },
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64, what: &str) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParam(format!("{what}: empty range [{lo}, {hi}]")));
    }
    Ok(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
}

fn draw_usize(rng: &mut ChaCha8Rng, lo: usize, hi: usize, what: &str) -> Result<usize> {
    if lo > hi {
        return Err(Error::InvalidParam(format!("{what}: empty range [{lo}, {hi}]")));
    }
    Ok(rng.gen_range(lo..=hi))
}

fn rc_coefficient(cutoff: f64, rate: u32, what: &str) -> Result<(f64, f64)> {
    let nyquist = rate as f64 / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(Error::InvalidParam(format!("{what} cutoff {cutoff} Hz outside (0, {nyquist})")));
    }
    let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff);
    let dt = 1.0 / rate as f64;
    Ok((rc, dt))
}

fn high_pass(x: &mut [f32], cutoff: f64, rate: u32) -> Result<()> {
    let (rc, dt) = rc_coefficient(cutoff, rate, "high-pass")?;
    let a = rc / (rc + dt);
    let (mut prev_x, mut prev_y) = (0.0f64, 0.0f64);
    for s in x.iter_mut() {
        let xi = *s as f64;
        let y = a * (prev_y + xi - prev_x);
        prev_x = xi;
        prev_y = y;
        *s = y as f32;
    }
    Ok(())
}

fn low_pass(x: &mut [f32], cutoff: f64, rate: u32) -> Result<()> {
    let (rc, dt) = rc_coefficient(cutoff, rate, "low-pass")?;
    let a = dt / (rc + dt);
    let mut y = 0.0f64;
    for s in x.iter_mut() {
        y += a * (*s as f64 - y);
        *s = y as f32;
    }
    Ok(())
}

fn noise_scale(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    if noise_power <= 0.0 {
        return 0.0;
    }
    (signal_power / 10f64.powf(snr_db / 10.0) / noise_power).sqrt()
}

fn zero_span(x: &mut [f32], start: usize, end: usize) {
    let end = end.min(x.len());
    if start < end {
        x[start..end].iter_mut().for_each(|s| *s = 0.0);
    }
}

/// Applies `ops` in order. The sample count never changes.
pub fn augment_wave(clip: &AudioClip, ops: &[WaveOp], seed: u64) -> Result<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = clip.sample_rate;
    let mut x = clip.samples.clone();
    for op in ops {
        match op {
            WaveOp::Gain { min_db, max_db } => {
                let g = 10f64.powf(draw(&mut rng, *min_db, *max_db, "gain")? / 20.0);
                x.iter_mut().for_each(|s| *s = (*s as f64 * g) as f32);
            }
            WaveOp::HighPass { min_hz, max_hz } => {
                high_pass(&mut x, draw(&mut rng, *min_hz, *max_hz, "high-pass")?, rate)?
            }
            WaveOp::LowPass { min_hz, max_hz } => {
                low_pass(&mut x, draw(&mut rng, *min_hz, *max_hz, "low-pass")?, rate)?
            }
            WaveOp::WhiteNoise { min_snr_db, max_snr_db } => {
                let snr = draw(&mut rng, *min_snr_db, *max_snr_db, "white noise")?;
                let power = AudioClip { samples: x.clone(), sample_rate: rate }.power();
                let scale = noise_scale(power, 1.0, snr);
                for s in x.iter_mut() {
                    let n: f64 = rng.sample(StandardNormal);
                    *s = (*s as f64 + scale * n) as f32;
                }
            }
            WaveOp::TimeDropout { start_s, end_s } => {
                if !(*start_s >= 0.0 && end_s >= start_s) {
                    return Err(Error::InvalidParam(format!("dropout span [{start_s}, {end_s})")));
                }
                let start = (start_s * rate as f64).round() as usize;
                let end = (end_s * rate as f64).round() as usize;
                zero_span(&mut x, start, end);
            }
            WaveOp::RandomDropout { max_s } => {
                let len = (draw(&mut rng, 0.0, *max_s, "dropout length")? * rate as f64).round() as usize;
                let len = len.min(x.len());
                let start = rng.gen_range(0..=x.len() - len);
                zero_span(&mut x, start, start + len);
            }
            WaveOp::NoiseInjection { noise, min_snr_db, max_snr_db } => {
                if noise.sample_rate != rate {
                    return Err(Error::RateMismatch {
                        clip: noise.sample_rate,
                        expected: rate,
                    });
                }
                if noise.is_empty() {
                    return Err(Error::InvalidParam("noise clip is empty".into()));
                }
                let snr = draw(&mut rng, *min_snr_db, *max_snr_db, "noise injection")?;
                let power = AudioClip { samples: x.clone(), sample_rate: rate }.power();
                let scale = noise_scale(power, noise.power(), snr);
                let offset = rng.gen_range(0..noise.len());
                for (i, s) in x.iter_mut().enumerate() {
                    let n = noise.samples[(offset + i) % noise.len()] as f64;
                    *s = (*s as f64 + scale * n) as f32;
                }
            }
            WaveOp::PitchShift { .. } => return Err(Error::UnsupportedAugment("pitch_shift".into())),
            WaveOp::Reverb { .. } => return Err(Error::UnsupportedAugment("reverb".into())),
        }
    }
    Ok(AudioClip {
        samples: x,
        sample_rate: rate,
    })
}

/// Applies `ops` in order. The matrix shape never changes.
pub fn augment_spec(x: &LogMelSpectrogram, ops: &[SpecOp], seed: u64) -> Result<LogMelSpectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = x.values.clone();
    let (n_frames, n_mels) = v.dim();
    for op in ops {
        match *op {
            SpecOp::TimeMask { min_width, max_width, count } | SpecOp::FreqMask { min_width, max_width, count } => {
                let time = matches!(op, SpecOp::TimeMask { .. });
                let axis_len = if time { n_frames } else { n_mels };
                if max_width > axis_len {
                    return Err(Error::InvalidParam(format!("mask width {max_width} exceeds axis length {axis_len}")));
                }
                let fill = v.mean().unwrap_or(0.0);
                for _ in 0..count {
                    let w = draw_usize(&mut rng, min_width, max_width, "mask width")?;
                    let start = rng.gen_range(0..=axis_len - w);
                    let axis = if time { ndarray::Axis(0) } else { ndarray::Axis(1) };
                    v.slice_axis_mut(axis, ndarray::Slice::from(start..start + w)).fill(fill);
                }
            }
            SpecOp::FilterAugment { min_db, max_db, min_bands, max_bands } => {
                let bands = draw_usize(&mut rng, min_bands.max(1), max_bands.max(1), "filter bands")?.min(n_mels);
                // band edges: 0, sorted interior cut points, n_mels
                let mut edges: Vec<usize> = (0..bands - 1).map(|_| rng.gen_range(1..n_mels.max(2))).collect();
                edges.sort_unstable();
                edges.insert(0, 0);
                edges.push(n_mels);
                for pair in edges.windows(2) {
                    let db = draw(&mut rng, min_db, max_db, "filter gain")?;
                    let shift = (db / 10.0 * std::f64::consts::LN_10) as f32;
                    if shift != 0.0 {
                        v.slice_mut(ndarray::s![.., pair[0]..pair[1]]).mapv_inplace(|c| c + shift);
                    }
                }
            }
            SpecOp::FreqStretch { min_factor, max_factor } => {
                if !(0.9..=1.1).contains(&min_factor) || !(0.9..=1.1).contains(&max_factor) {
                    return Err(Error::InvalidParam(format!(
                        "stretch factors [{min_factor}, {max_factor}] outside [0.9, 1.1]"
                    )));
                }
                let s = draw(&mut rng, min_factor, max_factor, "stretch")?;
                if s != 1.0 {
                    let src = v.clone();
                    for m in 0..n_mels {
                        let pos = (m as f64 / s).min((n_mels - 1) as f64);
                        let lo = pos.floor() as usize;
                        let hi = (lo + 1).min(n_mels - 1);
                        let frac = (pos - lo as f64) as f32;
                        for t in 0..n_frames {
                            v[[t, m]] = src[[t, lo]] * (1.0 - frac) + src[[t, hi]] * frac;
                        }
                    }
                }
            }
        }
    }
    Ok(LogMelSpectrogram {
        values: v,
        frame_duration: x.frame_duration,
    })
}
