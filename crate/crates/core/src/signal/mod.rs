//! Audio ingestion and the log-mel front end.

mod features;
mod resample;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    frame_count, log_mel, mel_filterbank, read_feature_dump, write_feature_dump, FeatureConfig,
    LogMelSpectrogram, MelNorm, MelScale, FEATURE_DUMP_MAGIC,
};
pub use resample::resample;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power of the samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / self.len() as f64
    }

    /// Copies `[start, start + len)` in samples, zero-padding past the end.
    pub fn window(&self, start: usize, len: usize) -> AudioClip {
        let mut samples = vec![0.0; len];
        if start < self.samples.len() {
            let avail = (self.samples.len() - start).min(len);
            samples[..avail].copy_from_slice(&self.samples[start..start + avail]);
        }
        AudioClip {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a mono RIFF/WAV file holding 16-bit PCM or 32-bit float samples.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate == 0 {
        return Err(Error::CorruptHeader(format!("{}: zero sample rate", path.display())));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Duration in seconds from the WAV header alone.
pub fn audio_duration(path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(Error::CorruptHeader(format!("{}: zero sample rate", path.display())));
    }
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}

/// On-disk sample encoding for [`save_audio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

pub fn save_audio(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &clip.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v)
            }
            WavEncoding::Float32 => writer.write_sample(s),
        }
        .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports short reads as io errors
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other | std::io::ErrorKind::InvalidData
            ) =>
        {
            Error::CorruptHeader(format!("{}: {io}", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::CorruptHeader(format!("{}: {other}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_i16(path: &Path, channels: u16, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 4000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &d in data {
            w.write_sample(d).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn ten_second_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let mut data = vec![0i16; 40000];
        data[0] = -32768;
        write_i16(&p, 1, &data);
        let clip = load_audio(&p).unwrap();
        assert_eq!(clip.len(), 40000);
        assert_eq!(clip.sample_rate, 4000);
        assert_eq!(clip.samples[0], -1.0);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_i16(&p, 2, &[0; 200]);
        assert!(matches!(load_audio(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn missing_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_audio(dir.path().join("nope.wav")),
            Err(Error::NotFound(_))
        ));
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
        let err = load_audio(&p);
        assert!(matches!(err, Err(Error::CorruptHeader(_))), "{err:?}");
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let clip = AudioClip::new(vec![0.25, -0.5, 0.125], 4000).unwrap();
        save_audio(&p, &clip, WavEncoding::Float32).unwrap();
        assert_eq!(load_audio(&p).unwrap(), clip);
    }

    #[test]
    fn window_pads_with_zeros() {
        let clip = AudioClip::new(vec![1.0, 2.0, 3.0], 4000).unwrap();
        assert_eq!(clip.window(1, 4).samples, vec![2.0, 3.0, 0.0, 0.0]);
        assert_eq!(clip.window(5, 2).samples, vec![0.0, 0.0]);
    }
}
