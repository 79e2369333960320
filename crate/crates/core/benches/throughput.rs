//! Parallel vs. one-thread throughput of the data-parallel hot paths.
//!
//! With default features the "rayon" rows use the global pool and the
//! "one_thread" rows a single-thread pool. Run with `--no-default-features`
//! to time the plain sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sed_core::labels::{EventList, FramePosteriors};
use sed_core::metrics::{default_thresholds, pr_curve, Basis, EvalConfig};
use sed_core::model::{init_weights, predict_batch, CrnnConfig, TcnConfig};
use sed_core::par;
use sed_core::pipeline::{synth_clip, SynthSpec};
use sed_core::signal::{log_mel, AudioClip, FeatureConfig, LogMelSpectrogram};

const MODES: [(&str, usize); 2] = [("rayon", 0), ("one_thread", 1)];

fn clips(n: usize) -> Vec<(AudioClip, EventList)> {
    (0..n)
        .map(|i| {
            synth_clip(&SynthSpec {
                heart_rate: 60.0 + 5.0 * i as f64,
                seed: i as u64,
                ..SynthSpec::default()
            })
            .unwrap()
        })
        .collect()
}

fn features(clips: &[(AudioClip, EventList)]) -> Vec<LogMelSpectrogram> {
    let cfg = FeatureConfig::default();
    par::map(clips, |(c, _)| log_mel(c, &cfg).unwrap())
}

pub fn criterion_benchmark(c: &mut Criterion) {
    let data = clips(8);
    let feats = features(&data);
    let crnn = init_weights::<f32>(CrnnConfig::desk(), 0).unwrap();
    let tcn = init_weights::<f32>(TcnConfig::desk(), 0).unwrap();
    let posteriors: Vec<FramePosteriors> = predict_batch(&crnn, &feats).unwrap();
    let gts: Vec<EventList> = data.iter().map(|(_, e)| e.clone()).collect();
    let thresholds = default_thresholds();

    let mut g = c.benchmark_group("throughput");
    g.sample_size(10);
    for (mode, threads) in MODES {
        g.bench_function(BenchmarkId::new("log_mel_8x10s", mode), |b| {
            b.iter(|| par::with_threads(threads, || features(&data)))
        });
        g.bench_function(BenchmarkId::new("crnn_predict_8x10s", mode), |b| {
            b.iter(|| par::with_threads(threads, || predict_batch(&crnn, &feats).unwrap()))
        });
        g.bench_function(BenchmarkId::new("tcn_predict_8x10s", mode), |b| {
            b.iter(|| par::with_threads(threads, || predict_batch(&tcn, &feats).unwrap()))
        });
        g.bench_function(BenchmarkId::new("pr_curve_19_thresholds", mode), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    pr_curve(&posteriors, &gts, &thresholds, Basis::Event, &EvalConfig::default()).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, criterion_benchmark);
criterion_main!(benches);
