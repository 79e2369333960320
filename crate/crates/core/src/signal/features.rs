use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

/// Mel frequency warping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelScale {
    /// `2595 * log10(1 + f / 700)`
    #[default]
    Htk,
    /// Linear below 1 kHz, logarithmic above.
    Slaney,
}

/// Triangle normalization of the mel filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelNorm {
    /// Every triangle peaks at 1.
    #[default]
    Peak,
    /// Every triangle has unit area in Hz (`2 / (f_hi - f_lo)` peak).
    Area,
}

/// Front-end parameters. Defaults give 622 x 64 features for 10 s at 4 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub log_floor: f64,
    pub fmin: f64,
    /// `None` means `sample_rate / 2`.
    pub fmax: Option<f64>,
    pub mel_scale: MelScale,
    pub mel_norm: MelNorm,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 4000,
            window_len: 256,
            hop_len: 64,
            n_mels: 64,
            log_floor: 1e-10,
            fmin: 0.0,
            fmax: None,
            mel_scale: MelScale::Htk,
            mel_norm: MelNorm::Peak,
        }
    }
}

impl FeatureConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    /// Seconds between consecutive frames.
    pub fn frame_duration(&self) -> f64 {
        self.hop_len as f64 / self.sample_rate as f64
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of samples covered by `n_frames` frames.
    pub fn samples_for_frames(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            self.window_len + (n_frames - 1) * self.hop_len
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let fmax = self.fmax();
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.window_len < 2 {
            return bad("window_len must be at least 2");
        }
        if self.hop_len == 0 || self.hop_len > self.window_len {
            return bad("hop_len must be in 1..=window_len");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return bad("need 0 <= fmin < fmax <= sample_rate / 2");
        }
        Ok(())
    }
}

/// Frames produced by sliding `window_len` over `n_samples` in steps of
/// `hop_len`, without padding.
pub fn frame_count(n_samples: usize, window_len: usize, hop_len: usize) -> Result<usize> {
    if hop_len == 0 || window_len == 0 {
        return Err(Error::InvalidConfig("window and hop must be positive".into()));
    }
    if n_samples < window_len {
        return Err(Error::TooShort {
            len: n_samples,
            needed: window_len,
        });
    }
    Ok(1 + (n_samples - window_len) / hop_len)
}

/// Frame-by-mel matrix of natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    /// `n_frames x n_mels`
    pub values: Array2<f32>,
    pub frame_duration: f64,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

fn hz_to_mel(f: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 2595.0 * (1.0 + f / 700.0).log10(),
        MelScale::Slaney => {
            let f_sp = 200.0 / 3.0;
            let min_log_hz = 1000.0;
            let min_log_mel = min_log_hz / f_sp;
            let logstep = 6.4f64.ln() / 27.0;
            if f >= min_log_hz {
                min_log_mel + (f / min_log_hz).ln() / logstep
            } else {
                f / f_sp
            }
        }
    }
}

fn mel_to_hz(m: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * (10f64.powf(m / 2595.0) - 1.0),
        MelScale::Slaney => {
            let f_sp = 200.0 / 3.0;
            let min_log_hz = 1000.0;
            let min_log_mel = min_log_hz / f_sp;
            let logstep = 6.4f64.ln() / 27.0;
            if m >= min_log_mel {
                min_log_hz * (logstep * (m - min_log_mel)).exp()
            } else {
                f_sp * m
            }
        }
    }
}

/// Lower edge, center and upper edge (Hz) of every mel band.
pub(crate) fn mel_band_edges(cfg: &FeatureConfig) -> Vec<(f64, f64, f64)> {
    let lo = hz_to_mel(cfg.fmin, cfg.mel_scale);
    let hi = hz_to_mel(cfg.fmax(), cfg.mel_scale);
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    let pts: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64, cfg.mel_scale))
        .collect();
    pts.windows(3).map(|w| (w[0], w[1], w[2])).collect()
}

/// Triangular mel filters over the one-sided FFT bins, `n_mels x (window_len/2 + 1)`.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.window_len as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for (m, &(f_lo, f_c, f_hi)) in mel_band_edges(cfg).iter().enumerate() {
        let scale = match cfg.mel_norm {
            MelNorm::Peak => 1.0,
            MelNorm::Area => 2.0 / (f_hi - f_lo),
        };
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > f_lo && f <= f_c {
                (f - f_lo) / (f_c - f_lo)
            } else if f > f_c && f < f_hi {
                (f_hi - f) / (f_hi - f_c)
            } else {
                0.0
            };
            fb[[m, k]] = w * scale;
        }
    }
    Ok(fb)
}

/// Periodic Hann window.
fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann window, power spectrum, mel filterbank, natural log with a floor.
/// No centering, padding, or per-clip normalization.
pub fn log_mel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<LogMelSpectrogram> {
    cfg.validate()?;
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::RateMismatch {
            clip: clip.sample_rate,
            expected: cfg.sample_rate,
        });
    }
    let n_frames = frame_count(clip.len(), cfg.window_len, cfg.hop_len)?;
    let fb = mel_filterbank(cfg)?;
    let window = hann_window(cfg.window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.window_len);
    let n_bins = cfg.n_bins();

    let mut values = Array2::<f32>::zeros((n_frames, cfg.n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.window_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0f64; n_bins];
    for t in 0..n_frames {
        let start = t * cfg.hop_len;
        let frame = &clip.samples[start..start + cfg.window_len];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(s as f64 * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for (m, out) in values.row_mut(t).iter_mut().enumerate() {
            let e: f64 = fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            *out = e.max(cfg.log_floor).ln() as f32;
        }
    }
    Ok(LogMelSpectrogram {
        values,
        frame_duration: cfg.frame_duration(),
    })
}

pub const FEATURE_DUMP_MAGIC: &[u8; 4] = b"LMEL";

/// Writes `LMEL`, `n_frames`, `n_mels`, a reserved zero word, then row-major
/// little-endian f32 values.
pub fn write_feature_dump(path: impl AsRef<Path>, spec: &LogMelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + 4 * spec.values.len());
    bytes.extend_from_slice(FEATURE_DUMP_MAGIC);
    bytes.extend_from_slice(&(spec.n_frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(spec.n_mels() as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for v in spec.values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads a feature dump. The frame duration is not stored and must be supplied.
pub fn read_feature_dump(path: impl AsRef<Path>, frame_duration: f64) -> Result<LogMelSpectrogram> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != FEATURE_DUMP_MAGIC {
        return Err(Error::CorruptHeader(format!("{}: not a feature dump", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    if bytes.len() != 16 + 4 * rows * cols {
        return Err(Error::CorruptHeader(format!(
            "{}: expected {} values",
            path.display(),
            rows * cols
        )));
    }
    let data: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(LogMelSpectrogram {
        values,
        frame_duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, n: usize, sr: u32) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn frame_count_cases() {
        assert_eq!(frame_count(40000, 256, 64).unwrap(), 622);
        assert_eq!(frame_count(256, 256, 64).unwrap(), 1);
        assert!(matches!(
            frame_count(255, 256, 64),
            Err(Error::TooShort { len: 255, needed: 256 })
        ));
    }

    #[test]
    fn default_shapes() {
        let cfg = FeatureConfig::default();
        assert!((cfg.frame_duration() - 0.016).abs() < 1e-15);
        let fb = mel_filterbank(&cfg).unwrap();
        assert_eq!(fb.dim(), (64, 129));
        assert!(fb.iter().all(|&w| w >= 0.0));
        let spec = log_mel(&tone(300.0, 40000, 4000), &cfg).unwrap();
        assert_eq!(spec.values.dim(), (622, 64));
    }

    #[test]
    fn filterbank_covers_interior_bins() {
        for scale in [MelScale::Htk, MelScale::Slaney] {
            for norm in [MelNorm::Peak, MelNorm::Area] {
                let cfg = FeatureConfig {
                    mel_scale: scale,
                    mel_norm: norm,
                    ..Default::default()
                };
                let fb = mel_filterbank(&cfg).unwrap();
                // bins strictly between fmin (bin 0) and fmax (bin 128)
                for k in 1..128 {
                    assert!(fb.column(k).sum() > 0.0, "{scale:?}/{norm:?} bin {k}");
                }
                for m in 0..64 {
                    assert!(fb.row(m).sum() > 0.0, "{scale:?}/{norm:?} row {m}");
                }
            }
        }
    }

    #[test]
    fn filterbank_rows_are_triangles() {
        let fb = mel_filterbank(&FeatureConfig::default()).unwrap();
        for row in fb.rows() {
            let nz: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            let (first, last) = (nz[0], *nz.last().unwrap());
            assert_eq!(nz.len(), last - first + 1, "support is contiguous");
            let peak = (first..=last).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            for k in first..peak {
                assert!(row[k] <= row[k + 1]);
            }
            for k in peak..last {
                assert!(row[k] >= row[k + 1]);
            }
        }
    }

    #[test]
    fn silence_hits_floor() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::new(vec![0.0; 4000], 4000).unwrap();
        let spec = log_mel(&clip, &cfg).unwrap();
        let floor = (1e-10f64).ln() as f32;
        assert!(spec.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn tone_at_band_center_peaks_in_that_band() {
        let cfg = FeatureConfig::default();
        let bands = mel_band_edges(&cfg);
        for m in [10usize, 25, 40, 55] {
            let spec = log_mel(&tone(bands[m].1, 8000, 4000), &cfg).unwrap();
            let mean = spec.values.mean_axis(ndarray::Axis(0)).unwrap();
            let arg = (0..64).max_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap();
            assert_eq!(arg, m, "center {} Hz", bands[m].1);
        }
    }

    #[test]
    fn errors() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::new(vec![0.0; 100], 4000).unwrap();
        assert!(matches!(log_mel(&clip, &cfg), Err(Error::TooShort { .. })));
        let clip = AudioClip::new(vec![0.0; 1000], 8000).unwrap();
        assert!(matches!(log_mel(&clip, &cfg), Err(Error::RateMismatch { .. })));
        let bad = FeatureConfig {
            hop_len: 512,
            ..Default::default()
        };
        assert!(matches!(mel_filterbank(&bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.lmel");
        let spec = log_mel(&tone(500.0, 1000, 4000), &FeatureConfig::default()).unwrap();
        write_feature_dump(&p, &spec).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[..4], b"LMEL");
        assert_eq!(u32::from_le_bytes(raw[4..8].try_into().unwrap()), 12);
        assert_eq!(u32::from_le_bytes(raw[8..12].try_into().unwrap()), 64);
        assert_eq!(raw.len(), 16 + 12 * 64 * 4);
        assert_eq!(read_feature_dump(&p, 0.016).unwrap(), spec);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn shape_floor_and_determinism(
            len in 256usize..3000,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let clip = AudioClip::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 4000).unwrap();
            let cfg = FeatureConfig::default();
            let a = log_mel(&clip, &cfg).unwrap();
            let b = log_mel(&clip, &cfg).unwrap();
            prop_assert_eq!(a.values.dim(), (frame_count(len, 256, 64).unwrap(), 64));
            let floor = (1e-10f64).ln() as f32;
            prop_assert!(a.values.iter().all(|&v| v >= floor));
            prop_assert!(a.values.iter().zip(b.values.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        #[test]
        fn gain_never_lowers_energy(seed in any::<u64>(), gain in 1.1f32..8.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let base: Vec<f32> = (0..1024).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let loud: Vec<f32> = base.iter().map(|s| s * gain).collect();
            let cfg = FeatureConfig::default();
            let a = log_mel(&AudioClip::new(base, 4000).unwrap(), &cfg).unwrap();
            let b = log_mel(&AudioClip::new(loud, 4000).unwrap(), &cfg).unwrap();
            let floor = (1e-10f64).ln() as f32;
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                if *x > floor {
                    prop_assert!(y >= x);
                }
            }
        }
    }
}
