//! Synthetic auscultation recordings with exact strong labels.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{write_labels, DatasetManifest, EventList, ManifestEntry, Origin, SoundClass, SoundEvent, Split, Task};
use crate::signal::{save_audio, AudioClip, WavEncoding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Beats per minute; 0 disables heart sounds.
    pub heart_rate: f64,
    /// Breaths per minute; 0 disables breath sounds.
    pub respiratory_rate: f64,
    pub s1_duration: f64,
    pub s2_duration: f64,
    /// S2 onset as a fraction of the cardiac cycle after S1 onset.
    pub systole_fraction: f64,
    /// Inspiration length as a fraction of the breath cycle.
    pub inspiration_fraction: f64,
    /// Expiration length as a fraction of the breath cycle (follows inspiration).
    pub expiration_fraction: f64,
    /// Peak amplitude of heart sounds.
    pub heart_gain: f64,
    /// RMS amplitude of inspiration noise; expiration is quieter.
    pub lung_gain: f64,
    /// Wheeze fundamental over the middle of each expiration.
    pub wheeze_hz: Option<f64>,
    /// Expected crackles per second of breath phase.
    pub crackle_density: f64,
    /// White background noise level in dBFS.
    pub noise_floor_db: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            sample_rate: 4000,
            heart_rate: 72.0,
            respiratory_rate: 15.0,
            s1_duration: 0.10,
            s2_duration: 0.08,
            systole_fraction: 0.35,
            inspiration_fraction: 0.4,
            expiration_fraction: 0.5,
            heart_gain: 0.5,
            lung_gain: 0.08,
            wheeze_hz: None,
            crackle_density: 0.0,
            noise_floor_db: -50.0,
            seed: 0,
        }
    }
}

/// Generator limits on the rates.
pub const HR_RANGE: (f64, f64) = (20.0, 300.0);
pub const RR_RANGE: (f64, f64) = (0.0, 60.0);
const CRACKLE_LEN: f64 = 0.010;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if !(self.duration_s > 0.0) || self.sample_rate < 1000 {
            return bad("duration must be positive and sample rate at least 1 kHz".into());
        }
        if self.heart_rate != 0.0 && !(HR_RANGE.0..=HR_RANGE.1).contains(&self.heart_rate) {
            return bad(format!("heart rate {} outside {:?}", self.heart_rate, HR_RANGE));
        }
        if !(RR_RANGE.0..=RR_RANGE.1).contains(&self.respiratory_rate) {
            return bad(format!("respiratory rate {} outside {:?}", self.respiratory_rate, RR_RANGE));
        }
        if self.heart_rate > 0.0 {
            let t = 60.0 / self.heart_rate;
            let sys = self.systole_fraction * t;
            if !(self.s1_duration > 0.0 && self.s2_duration > 0.0) {
                return bad("heart sound durations must be positive".into());
            }
            if self.s1_duration >= sys || sys + self.s2_duration >= t {
                return bad(format!(
                    "S1 {} s and S2 {} s do not fit a {t:.3} s cycle with systole {sys:.3} s",
                    self.s1_duration, self.s2_duration
                ));
            }
            if t > self.duration_s {
                return bad("clip shorter than one cardiac cycle".into());
            }
        }
        if self.respiratory_rate > 0.0 {
            let (i, e) = (self.inspiration_fraction, self.expiration_fraction);
            if !(i > 0.0 && e > 0.0 && i + e <= 1.0) {
                return bad("breath phase fractions must be positive and sum to at most 1".into());
            }
            if 60.0 / self.respiratory_rate > self.duration_s {
                return bad("clip shorter than one breath cycle".into());
            }
        }
        if let Some(f) = self.wheeze_hz {
            if !(f > 0.0 && 2.0 * f < self.sample_rate as f64 / 2.0) {
                return bad(format!("wheeze {f} Hz not representable"));
            }
        }
        if self.crackle_density < 0.0 || !(self.heart_gain >= 0.0 && self.lung_gain >= 0.0) {
            return bad("densities and gains must be non-negative".into());
        }
        Ok(())
    }
}

/// `n` whole cycles of length `period` with a random phase inside the slack.
fn cycle_onsets(duration: f64, period: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (duration / period + 1e-9).floor() as usize;
    let slack = (duration - n as f64 * period).max(0.0);
    let phase = if slack > 0.0 { rng.gen_range(0.0..slack) } else { 0.0 };
    (0..n).map(|k| phase + k as f64 * period).collect()
}

/// Flat-top window with raised-cosine ramps of `ramp` seconds.
fn tukey(t: f64, len: f64, ramp: f64) -> f64 {
    let ramp = ramp.min(len / 2.0);
    if t < 0.0 || t >= len {
        0.0
    } else if t < ramp {
        0.5 - 0.5 * (PI * t / ramp).cos()
    } else if t > len - ramp {
        0.5 - 0.5 * (PI * (len - t) / ramp).cos()
    } else {
        1.0
    }
}

fn span(onset: f64, offset: f64, sr: f64, n: usize) -> std::ops::Range<usize> {
    let a = ((onset * sr).round() as usize).min(n);
    let b = ((offset * sr).round() as usize).min(n);
    a..b
}

/// Damped sinusoid burst with a few harmonics.
fn add_heart_sound(x: &mut [f64], onset: f64, len: f64, freq: f64, amp: f64, sr: f64) {
    for i in span(onset, onset + len, sr, x.len()) {
        let t = i as f64 / sr - onset;
        let env = tukey(t, len, 0.008) * (0.55 + 0.45 * (-3.0 * t / len).exp());
        let s = (2.0 * PI * freq * t).sin() + 0.35 * (2.0 * PI * 2.0 * freq * t).sin();
        x[i] += amp * env * s;
    }
}

/// Band-limited noise as a sum of random-phase partials in `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
fn add_band_noise(x: &mut [f64], onset: f64, len: f64, lo: f64, hi: f64, rms: f64, sr: f64, rng: &mut ChaCha8Rng) {
    const PARTIALS: usize = 24;
    let partials: Vec<(f64, f64)> = (0..PARTIALS)
        .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    // each unit-amplitude partial has power 1/2
    let norm = rms * (2.0 / PARTIALS as f64).sqrt();
    let ramp = (0.15 * len).min(0.08);
    for i in span(onset, onset + len, sr, x.len()) {
        let t = i as f64 / sr - onset;
        let env = tukey(t, len, ramp);
        let s: f64 = partials.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum();
        x[i] += norm * env * s;
    }
}

fn add_tone(x: &mut [f64], onset: f64, len: f64, freq: f64, amp: f64, sr: f64) {
    for i in span(onset, onset + len, sr, x.len()) {
        let t = i as f64 / sr - onset;
        let env = tukey(t, len, 0.03);
        x[i] += amp * env * ((2.0 * PI * freq * t).sin() + 0.3 * (2.0 * PI * 2.0 * freq * t).sin());
    }
}

fn add_crackle(x: &mut [f64], onset: f64, amp: f64, sr: f64, rng: &mut ChaCha8Rng) {
    let f = rng.gen_range(250.0..600.0);
    for i in span(onset, onset + CRACKLE_LEN, sr, x.len()) {
        let t = i as f64 / sr - onset;
        x[i] += amp * (-t / 0.002).exp() * (2.0 * PI * f * t).sin();
    }
}

/// Renders the recording and its exact ground-truth events.
pub fn synth_clip(spec: &SynthSpec) -> Result<(AudioClip, EventList)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let mut x = vec![0.0f64; n];
    let mut events = Vec::new();

    if spec.heart_rate > 0.0 {
        let period = 60.0 / spec.heart_rate;
        for onset in cycle_onsets(spec.duration_s, period, &mut rng) {
            let s2_on = onset + spec.systole_fraction * period;
            let j1 = rng.gen_range(0.9..1.1);
            let j2 = rng.gen_range(0.9..1.1);
            add_heart_sound(&mut x, onset, spec.s1_duration, 60.0 * j1, spec.heart_gain * j2, sr);
            let j3 = rng.gen_range(0.9..1.1);
            let j4 = rng.gen_range(0.8..1.0);
            add_heart_sound(&mut x, s2_on, spec.s2_duration, 130.0 * j3, spec.heart_gain * j4, sr);
            events.push(SoundEvent::new(SoundClass::S1, onset, onset + spec.s1_duration));
            events.push(SoundEvent::new(SoundClass::S2, s2_on, s2_on + spec.s2_duration));
        }
    }

    if spec.respiratory_rate > 0.0 {
        let period = 60.0 / spec.respiratory_rate;
        let ti = spec.inspiration_fraction * period;
        let te = spec.expiration_fraction * period;
        let mut last_crackle = f64::NEG_INFINITY;
        for onset in cycle_onsets(spec.duration_s, period, &mut rng) {
            let ex_on = onset + ti;
            let level = spec.lung_gain * rng.gen_range(0.85..1.15);
            add_band_noise(&mut x, onset, ti, 250.0, 700.0, level, sr, &mut rng);
            add_band_noise(&mut x, ex_on, te, 120.0, 380.0, 0.6 * level, sr, &mut rng);
            events.push(SoundEvent::new(SoundClass::Inspiration, onset, ex_on));
            events.push(SoundEvent::new(SoundClass::Expiration, ex_on, ex_on + te));
            if let Some(f) = spec.wheeze_hz {
                let (w_on, w_len) = (ex_on + 0.2 * te, 0.6 * te);
                add_tone(&mut x, w_on, w_len, f, 1.5 * spec.lung_gain, sr);
                events.push(SoundEvent::new(SoundClass::Wheeze, w_on, w_on + w_len));
            }
            if spec.crackle_density > 0.0 {
                let expected = spec.crackle_density * ti;
                let count = (expected.floor() as usize) + usize::from(rng.gen_bool(expected.fract()));
                let mut times: Vec<f64> = (0..count).map(|_| onset + rng.gen_range(0.0..ti - CRACKLE_LEN)).collect();
                times.sort_by(f64::total_cmp);
                for t in times {
                    if t < last_crackle + 2.0 * CRACKLE_LEN {
                        continue;
                    }
                    last_crackle = t;
                    add_crackle(&mut x, t, 4.0 * spec.lung_gain, sr, &mut rng);
                    events.push(SoundEvent::new(SoundClass::Crackle, t, t + CRACKLE_LEN));
                }
            }
        }
    }

    let floor = 10f64.powf(spec.noise_floor_db / 20.0);
    let samples = x
        .iter()
        .map(|&v| {
            let noise: f64 = rng.sample(StandardNormal);
            (v + floor * noise).clamp(-1.0, 1.0) as f32
        })
        .collect();
    let clip = AudioClip::new(samples, spec.sample_rate)?;
    let labels = EventList::new(events, spec.duration_s)?;
    Ok((clip, labels))
}

/// How one synthetic corpus is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub name: String,
    pub n_clips: usize,
    pub base: SynthSpec,
    pub heart_rate_range: (f64, f64),
    pub respiratory_rate_range: (f64, f64),
    /// Annotated organ system; labels of other classes are not written.
    pub task: Task,
    pub split: Split,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            n_clips: 10,
            base: SynthSpec::default(),
            heart_rate_range: (60.0, 110.0),
            respiratory_rate_range: (12.0, 24.0),
            task: Task::Both,
            split: Split::Train,
            seed: 0,
        }
    }
}

/// Writes `name_NNN.wav` and `name_NNN.txt` pairs into `dir` and returns their
/// manifest entries. Rates are drawn uniformly from the configured ranges.
pub fn synth_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keep = spec.task.classes();
    let mut entries = Vec::with_capacity(spec.n_clips);
    for i in 0..spec.n_clips {
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let clip_spec = SynthSpec {
            heart_rate: draw(&mut rng, spec.heart_rate_range),
            respiratory_rate: draw(&mut rng, spec.respiratory_rate_range),
            seed: rng.gen(),
            ..spec.base.clone()
        };
        let (clip, events) = synth_clip(&clip_spec)?;
        let stem = format!("{}_{i:03}", spec.name);
        let audio = dir.join(format!("{stem}.wav"));
        let labels = dir.join(format!("{stem}.txt"));
        save_audio(&audio, &clip, WavEncoding::Float32)?;
        write_labels(&labels, &events.retain_classes(&keep), false)?;
        entries.push(ManifestEntry {
            audio,
            labels,
            split: spec.split,
            origin: Origin::Gt,
            task: spec.task,
        });
    }
    Ok(DatasetManifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{estimate_vitals, extract_events};
    use crate::labels::encode_frames;
    use crate::metrics::{macro_f1, score_events, Basis, EvalConfig};

    #[test]
    fn heart_rate_120_gives_twenty_beats() {
        let spec = SynthSpec {
            heart_rate: 120.0,
            ..SynthSpec::default()
        };
        let (clip, ev) = synth_clip(&spec).unwrap();
        assert_eq!(clip.len(), 40000);
        assert_eq!(ev.count(SoundClass::S1), 20);
        assert_eq!(ev.count(SoundClass::S2), 20);
        assert_eq!(estimate_vitals(&ev, 10.0).unwrap().heart_rate, 120.0);
    }

    #[test]
    fn respiratory_rate_12_over_30_s() {
        let spec = SynthSpec {
            duration_s: 30.0,
            respiratory_rate: 12.0,
            ..SynthSpec::default()
        };
        let (_, ev) = synth_clip(&spec).unwrap();
        assert_eq!(ev.count(SoundClass::Inspiration), 6);
        assert_eq!(ev.count(SoundClass::Expiration), 6);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SynthSpec {
            wheeze_hz: Some(400.0),
            crackle_density: 8.0,
            seed: 3,
            ..SynthSpec::default()
        };
        let a = synth_clip(&spec).unwrap();
        assert_eq!(a, synth_clip(&spec).unwrap());
        let b = synth_clip(&SynthSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a.0, b.0);
    }

    #[test]
    fn adventitious_events_sit_inside_breath_phases() {
        let spec = SynthSpec {
            wheeze_hz: Some(400.0),
            crackle_density: 10.0,
            seed: 1,
            ..SynthSpec::default()
        };
        let (_, ev) = synth_clip(&spec).unwrap();
        assert!(ev.count(SoundClass::Crackle) > 0);
        for e in ev.of_class(SoundClass::Crackle) {
            assert!(e.duration() < 0.020);
            assert!(ev
                .of_class(SoundClass::Inspiration)
                .any(|i| i.onset <= e.onset && e.offset <= i.offset));
        }
        for e in ev.of_class(SoundClass::Wheeze) {
            assert!(ev
                .of_class(SoundClass::Expiration)
                .any(|x| x.onset <= e.onset && e.offset <= x.offset));
        }
    }

    #[test]
    fn infeasible_specs() {
        for spec in [
            SynthSpec { heart_rate: 400.0, ..SynthSpec::default() },
            SynthSpec { heart_rate: 240.0, s1_duration: 0.2, ..SynthSpec::default() },
            SynthSpec { inspiration_fraction: 0.7, expiration_fraction: 0.5, ..SynthSpec::default() },
            SynthSpec { duration_s: 0.0, ..SynthSpec::default() },
            SynthSpec { respiratory_rate: 5.0, duration_s: 5.0, ..SynthSpec::default() },
        ] {
            assert!(matches!(synth_clip(&spec), Err(Error::InfeasibleSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn own_labels_score_perfectly() {
        let (_, ev) = synth_clip(&SynthSpec { seed: 8, ..SynthSpec::default() }).unwrap();
        let classes = ev.classes();
        for basis in [Basis::Event, Basis::Segment, Basis::Ji] {
            let counts = score_events(basis, &ev, &ev, 0.016, &EvalConfig::default()).unwrap();
            assert_eq!(macro_f1(&counts, &classes), 1.0, "{basis:?}");
        }
        // frame encoding keeps every event of at least one frame
        let enc = encode_frames(&ev, 625, 0.016);
        let dec = extract_events(&enc, 0.016);
        for c in classes {
            assert_eq!(dec.count(c), ev.count(c));
        }
    }

    #[test]
    fn corpus_writes_task_restricted_labels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            name: "heart".into(),
            n_clips: 3,
            base: SynthSpec { duration_s: 4.0, ..SynthSpec::default() },
            task: Task::Heart,
            ..CorpusSpec::default()
        };
        let m = synth_corpus(dir.path(), &spec).unwrap();
        assert_eq!(m.len(), 3);
        for e in &m.entries {
            let parsed = crate::labels::read_labels(&e.labels, 4.0).unwrap();
            assert!(parsed.events.count(SoundClass::S1) > 0);
            assert_eq!(parsed.events.count(SoundClass::Inspiration), 0);
            assert_eq!(e.task, Task::Heart);
        }
    }
}
