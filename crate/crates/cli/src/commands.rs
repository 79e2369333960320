use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sed_core::decode::{binarize, estimate_vitals, extract_events};
use sed_core::labels::{format_events, read_labels, DatasetManifest, EventList, SoundClass, Split};
use sed_core::metrics::{accumulate, counts_csv, default_thresholds, mape_csv, pr_csv, pr_curve, mape_curve, score_events, Basis, ClassCounts};
use sed_core::model::{load_weights, predict, ModelWeights};
use sed_core::par;
use sed_core::pipeline::{
    generate_pseudo_labels, infer_manifest, merge_datasets, run_strategy, synth_corpus, CorpusSpec,
    PseudoLabelConfig, StageOutput, StrategyConfig, SynthSpec,
};
use sed_core::signal::{audio_duration, load_audio, log_mel, resample, write_feature_dump, AudioClip, FeatureConfig};
use sed_core::train::{load_examples, train_loop, write_run, RunSnapshot, WEIGHTS_FILE};

use crate::config::RunConfig;
use crate::{Command, TaskArg};

/// Snapshot of the resolved flags and config file, written into run
/// directories so `--config` on it replays the run.
pub const RUN_CONFIG_FILE: &str = "run_config.ini";

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Featurize { out, audio } => featurize(&audio, &out, cfg),
        Command::Train { manifest, out } => train(&manifest, &out, cfg),
        Command::Infer { weights, out, audio } => infer(&weights, &audio, &out, cfg),
        Command::Eval { manifest, pred_dir, out } => {
            let csv = eval(&manifest, &pred_dir, cfg)?;
            emit(out.as_deref(), &csv)
        }
        Command::Curves { weights, manifest, out } => curves(&weights, &manifest, &out, cfg),
        Command::Pseudolabel { weights, corpus, task, out } => pseudolabel(&weights, &corpus, task, &out, cfg),
        Command::Merge { gt, pl, out } => merge(&gt, &pl, &out),
        Command::Synth {
            out,
            clips,
            name,
            duration,
            heart_rate,
            respiratory_rate,
            task,
        } => {
            let base = SynthSpec {
                duration_s: duration,
                ..SynthSpec::default()
            };
            let defaults = CorpusSpec::default();
            let spec = CorpusSpec {
                name,
                n_clips: clips,
                base,
                heart_rate_range: heart_rate.map_or(defaults.heart_rate_range, |h| (h, h)),
                respiratory_rate_range: respiratory_rate.map_or(defaults.respiratory_rate_range, |r| (r, r)),
                task: task.into(),
                split: Split::Train,
                seed: cfg.seed,
            };
            let manifest = synth_corpus(&out, &spec)?;
            manifest.save(out.join("manifest.json"))?;
            println!("{}", out.join("manifest.json").display());
            Ok(())
        }
        Command::Vitals { weights, labels, audio } => {
            let csv = vitals(weights.as_deref(), &labels, &audio, cfg)?;
            emit(None, &csv)
        }
        Command::Strategy {
            stage,
            heart,
            lung,
            run_dir,
        } => strategy(stage, heart, lung, &run_dir, cfg),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("clip")
        .to_string()
}

fn load_at_rate(path: &Path, features: &FeatureConfig) -> Result<AudioClip> {
    let clip = load_audio(path)?;
    if clip.sample_rate == features.sample_rate {
        Ok(clip)
    } else {
        Ok(resample(&clip, features.sample_rate)?)
    }
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<ModelWeights<f32>> {
    let w: ModelWeights<f32> = load_weights(path)?;
    if w.config.n_mels() != cfg.features.n_mels {
        return Err(sed_core::Error::IncompatibleModel(format!(
            "{} expects {} mel bins, features produce {}",
            path.display(),
            w.config.n_mels(),
            cfg.features.n_mels
        ))
        .into());
    }
    Ok(w)
}

fn featurize(audio: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<()> {
    if audio.is_empty() {
        return Ok(());
    }
    create_dir(out)?;
    let results = par::map(audio, |path| -> Result<String> {
        let spec = log_mel(&load_at_rate(path, &cfg.features)?, &cfg.features)?;
        let dest = out.join(format!("{}.logmel", stem(path)));
        write_feature_dump(&dest, &spec)?;
        Ok(format!("{},{},{}", path.display(), spec.n_frames(), spec.n_mels()))
    });
    let mut csv = String::from("audio,frames,mels\n");
    for r in results {
        csv.push_str(&r?);
        csv.push('\n');
    }
    emit(None, &csv)
}

fn train(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let manifest = DatasetManifest::load(manifest)?;
    let train_set = load_examples(&manifest.split(Split::Train))?;
    let val_set = load_examples(&manifest.split(Split::Val))?;
    let model = cfg.model();
    let train_cfg = cfg.train();
    let outcome = train_loop(&train_set, &val_set, &model, &train_cfg)?;
    write_run(
        out,
        &RunSnapshot {
            model,
            train: train_cfg,
        },
        &outcome,
    )?;
    write(&out.join(RUN_CONFIG_FILE), &cfg.to_ini())?;
    println!(
        "{},best_epoch={},epochs_run={}",
        out.join(WEIGHTS_FILE).display(),
        outcome.best_epoch,
        outcome.history.epochs.len()
    );
    Ok(())
}

fn decode(w: &ModelWeights<f32>, clip: &AudioClip, cfg: &RunConfig) -> Result<EventList> {
    let p = predict(w, &log_mel(clip, &cfg.features)?)?;
    let events = cfg.post().apply(&extract_events(&binarize(&p, cfg.threshold), p.frame_duration));
    Ok(EventList {
        clip_duration: clip.duration(),
        ..events
    })
}

fn infer(weights: &Path, audio: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<()> {
    let w = load_model(weights, cfg)?;
    create_dir(out)?;
    let decoded = par::map(audio, |path| -> Result<EventList> {
        decode(&w, &load_at_rate(path, &cfg.features)?, cfg)
    });
    for (path, events) in audio.iter().zip(decoded) {
        let dest = out.join(format!("{}.txt", stem(path)));
        write(&dest, &format_events(&events?, false))?;
        println!("{}", dest.display());
    }
    Ok(())
}

fn eval(manifest: &Path, pred_dir: &Path, cfg: &RunConfig) -> Result<String> {
    let manifest = DatasetManifest::load(manifest)?;
    if manifest.is_empty() {
        return Err(sed_core::Error::EmptyDataset.into());
    }
    let eval_cfg = cfg.eval();
    eval_cfg.validate()?;
    let dt = cfg.features.hop_len as f64 / cfg.features.sample_rate as f64;
    let bases = cfg.bases();
    let mut totals: Vec<(Basis, ClassCounts)> = bases.iter().map(|&b| (b, ClassCounts::new())).collect();
    for entry in &manifest.entries {
        let duration = audio_duration(&entry.audio)?;
        let gt = read_labels(&entry.labels, duration)?.events;
        let pred_path = pred_dir.join(format!("{}.txt", stem(&entry.audio)));
        if !pred_path.exists() {
            bail!(sed_core::Error::NotFound(pred_path));
        }
        let pred = read_labels(&pred_path, duration)?
            .events
            .retain_classes(&entry.task.classes());
        for (basis, total) in &mut totals {
            accumulate(total, &score_events(*basis, &gt, &pred, dt, &eval_cfg)?);
        }
    }
    Ok(counts_csv(&totals))
}

fn curves(weights: &Path, manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let w = load_model(weights, cfg)?;
    let manifest = DatasetManifest::load(manifest)?;
    let inf = infer_manifest(&w, &manifest, &cfg.features)?;
    let thresholds = default_thresholds();
    create_dir(out)?;
    let mut pr = String::new();
    for basis in cfg.bases() {
        let curve = pr_curve(&inf.posteriors, &inf.ground_truth, &thresholds, basis, &cfg.eval())?;
        let csv = pr_csv(&curve);
        let path = out.join(format!("pr_{}.csv", basis.as_str()));
        write(&path, &csv)?;
        let _ = writeln!(pr, "{}", path.display());
    }
    let mape = mape_curve(&inf.posteriors, &inf.ground_truth, &thresholds)?;
    let path = out.join("mape.csv");
    write(&path, &mape_csv(&mape))?;
    print!("{pr}");
    println!("{}", path.display());
    Ok(())
}

fn pseudo_config(cfg: &RunConfig) -> PseudoLabelConfig {
    PseudoLabelConfig {
        features: cfg.features.clone(),
        threshold: cfg.threshold,
        post: cfg.post(),
        bounds: cfg.bounds,
    }
}

fn pseudolabel(weights: &Path, corpus: &Path, task: TaskArg, out: &Path, cfg: &RunConfig) -> Result<()> {
    let w = load_model(weights, cfg)?;
    let corpus = DatasetManifest::load(corpus)?;
    let which: Vec<SoundClass> = sed_core::labels::Task::from(task).classes();
    let report = generate_pseudo_labels(&w, &corpus, &which, &pseudo_config(cfg), out)?;
    create_dir(out)?;
    report.accepted.save(out.join("manifest.json"))?;
    write(&out.join("rejections.csv"), &report.rejections_csv())?;
    write(&out.join("totals.csv"), &report.totals_csv())?;
    println!(
        "accepted={},rejected={}",
        report.accepted.len(),
        report.rejections.len()
    );
    Ok(())
}

fn merge(gt: &Path, pl: &Path, out: &Path) -> Result<()> {
    let gt = DatasetManifest::load(gt)?;
    let pl = DatasetManifest::load(pl)?;
    let report = merge_datasets(&gt, &pl, out)?;
    create_dir(out)?;
    report.manifest.save(out.join("merged.json"))?;
    let mut csv = String::from("audio,class,dropped\n");
    for c in &report.conflicts {
        let _ = writeln!(csv, "{},{},{}", c.audio.display(), c.class, c.dropped);
    }
    write(&out.join("conflicts.csv"), &csv)?;
    println!("{}", out.join("merged.json").display());
    Ok(())
}

fn vitals(weights: Option<&Path>, labels: &[PathBuf], audio: &[PathBuf], cfg: &RunConfig) -> Result<String> {
    let model = weights.map(|p| load_model(p, cfg)).transpose()?;
    if model.is_none() && labels.len() != audio.len() {
        bail!("{} label files for {} audio files", labels.len(), audio.len());
    }
    let rows = par::map_range(audio.len(), |i| -> Result<String> {
        let path = &audio[i];
        let (events, duration) = match &model {
            Some(w) => {
                let clip = load_at_rate(path, &cfg.features)?;
                (decode(w, &clip, cfg)?, clip.duration())
            }
            None => {
                let duration = audio_duration(path)?;
                (read_labels(&labels[i], duration)?.events, duration)
            }
        };
        let v = estimate_vitals(&events, duration)?;
        Ok(format!(
            "{},{},{},{}",
            path.display(),
            v.heart_rate,
            v.respiratory_rate,
            v.observed_duration
        ))
    });
    let mut csv = String::from("audio,hr,rr,duration\n");
    for r in rows {
        csv.push_str(&r?);
        csv.push('\n');
    }
    Ok(csv)
}

fn strategy(stage: u8, heart: PathBuf, lung: PathBuf, run_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let train = cfg.train();
    let sc = StrategyConfig {
        model: cfg.model(),
        specialist: train.clone(),
        unified: train,
        pseudo: pseudo_config(cfg),
        heart_corpus: heart,
        lung_corpus: lung,
    };
    create_dir(run_dir)?;
    write(&run_dir.join(RUN_CONFIG_FILE), &cfg.to_ini())?;
    match run_strategy(stage, &sc, run_dir)? {
        StageOutput::Specialists { heart, lung } => {
            println!("{}", heart.display());
            println!("{}", lung.display());
        }
        StageOutput::PseudoLabels {
            heart_on_lung,
            lung_on_heart,
            merge,
            merged_manifest,
        } => {
            println!(
                "heart_on_lung accepted={} rejected={}",
                heart_on_lung.accepted.len(),
                heart_on_lung.rejections.len()
            );
            println!(
                "lung_on_heart accepted={} rejected={}",
                lung_on_heart.accepted.len(),
                lung_on_heart.rejections.len()
            );
            println!("conflicts={}", merge.conflicts.len());
            println!("{}", merged_manifest.display());
        }
        StageOutput::Unified { weights } => println!("{}", weights.display()),
    }
    Ok(())
}
