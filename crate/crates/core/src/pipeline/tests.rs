use super::*;
use crate::decode::{estimate_vitals, plausibility_filter, RejectReason, Verdict};
use crate::error::Error;
use crate::labels::{read_labels, write_labels, DatasetManifest, EventList, ManifestEntry, Origin, SoundClass, SoundEvent, Split, Task};
use crate::model::{init_weights, ModelWeights, TcnConfig};
use crate::signal::FeatureConfig;
use crate::train::TrainConfig;

fn rigged(bias: [f32; 8]) -> ModelWeights<f32> {
    let mut w = init_weights::<f32>(
        TcnConfig {
            n_filters: 4,
            dilations: vec![1],
            ..TcnConfig::default()
        },
        0,
    )
    .unwrap();
    w.param_mut("head.kernel").unwrap().fill(0.0);
    let b = w.param_mut("head.bias").unwrap();
    for (dst, v) in b.iter_mut().zip(bias) {
        *dst = v;
    }
    w
}

fn corpus(dir: &std::path::Path, name: &str, task: Task, n: usize) -> DatasetManifest {
    synth_corpus(
        dir,
        &CorpusSpec {
            name: name.into(),
            n_clips: n,
            base: SynthSpec { duration_s: 4.0, ..SynthSpec::default() },
            task,
            ..CorpusSpec::default()
        },
    )
    .unwrap()
}

#[test]
fn empty_corpus_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let w = rigged([0.0; 8]);
    let r = generate_pseudo_labels(&w, &DatasetManifest::default(), &SoundClass::HEART, &PseudoLabelConfig::default(), dir.path())
        .unwrap();
    assert!(r.accepted.is_empty() && r.rejections.is_empty());
}

#[test]
fn missing_audio_and_incompatible_model() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest {
        entries: vec![ManifestEntry {
            audio: dir.path().join("absent.wav"),
            labels: dir.path().join("absent.txt"),
            split: Split::Train,
            origin: Origin::Gt,
            task: Task::Lung,
        }],
    };
    let w = rigged([0.0; 8]);
    let cfg = PseudoLabelConfig::default();
    assert!(matches!(
        generate_pseudo_labels(&w, &m, &SoundClass::HEART, &cfg, dir.path()),
        Err(Error::MissingAudio(_))
    ));
    let narrow = PseudoLabelConfig {
        features: FeatureConfig { n_mels: 32, ..FeatureConfig::default() },
        ..cfg
    };
    assert!(matches!(
        generate_pseudo_labels(&w, &m, &SoundClass::HEART, &narrow, dir.path()),
        Err(Error::IncompatibleModel(_))
    ));
}

#[test]
fn implausible_heart_rate_is_rejected_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let lung = corpus(&dir.path().join("lung"), "lung", Task::Lung, 2);
    // S1 on for the whole clip: one beat in 4 s is 15 bpm
    let w = rigged([10.0, -10.0, -10.0, -10.0, -10.0, -10.0, -10.0, -10.0]);
    let r = generate_pseudo_labels(&w, &lung, &SoundClass::HEART, &PseudoLabelConfig::default(), dir.path().join("pl"))
        .unwrap();
    assert!(r.accepted.is_empty());
    assert_eq!(r.rejections.len(), 2);
    assert!(r.rejections.iter().all(|x| x.reason == RejectReason::HrLow));
    let csv = r.rejections_csv();
    assert!(csv.starts_with("clip,hr,rr,reason\n"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",15.000,0.000,hr_low"));
}

#[test]
fn accepted_pseudo_labels_pass_the_gate_again() {
    let dir = tempfile::tempdir().unwrap();
    let heart = corpus(&dir.path().join("heart"), "heart", Task::Heart, 3);
    // silent lung outputs: respiratory rate 0 is inside the inclusive bounds
    let w = rigged([-10.0; 8]);
    let cfg = PseudoLabelConfig::default();
    let r = generate_pseudo_labels(&w, &heart, &SoundClass::LUNG, &cfg, dir.path().join("pl")).unwrap();
    assert_eq!(r.accepted.len(), 3);
    for e in &r.accepted.entries {
        assert_eq!(e.origin, Origin::Pseudo);
        assert_eq!(e.task, Task::Lung);
        let ev = read_labels(&e.labels, 4.0).unwrap().events;
        let v = estimate_vitals(&ev, 4.0).unwrap();
        assert_eq!(plausibility_filter(&v, Task::Lung, &cfg.bounds), Verdict::Accept);
    }
    assert_eq!(r.totals[&SoundClass::Inspiration], 0);
}

#[test]
fn merge_adds_background_pseudo_labels_and_keeps_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let heart = corpus(&dir.path().join("heart"), "heart", Task::Heart, 2);
    // hand-made pseudo-labels for the first clip: lung events plus a conflicting S1
    let pl_path = dir.path().join("pl.txt");
    let pl_events = EventList::new(
        vec![
            SoundEvent::new(SoundClass::Inspiration, 0.5, 1.5),
            SoundEvent::new(SoundClass::Expiration, 1.5, 2.5),
            SoundEvent::new(SoundClass::S1, 3.0, 3.1),
        ],
        4.0,
    )
    .unwrap()
    .with_origin(Origin::Pseudo);
    write_labels(&pl_path, &pl_events, true).unwrap();
    let pl = DatasetManifest {
        entries: vec![ManifestEntry {
            audio: heart.entries[0].audio.clone(),
            labels: pl_path,
            split: Split::Train,
            origin: Origin::Pseudo,
            task: Task::Lung,
        }],
    };
    let r = merge_datasets(&heart, &pl, dir.path().join("merged")).unwrap();
    assert_eq!(r.manifest.len(), 2);
    assert_eq!(r.conflicts.len(), 1);
    assert_eq!(r.conflicts[0].class, SoundClass::S1);
    let merged = &r.manifest.entries[0];
    assert_eq!(merged.task, Task::Both);
    let ev = read_labels(&merged.labels, 4.0).unwrap().events;
    let gt = read_labels(&heart.entries[0].labels, 4.0).unwrap().events;
    // every ground-truth event survives verbatim
    for e in &gt.events {
        assert!(ev.events.iter().any(|m| m.class == e.class
            && m.onset == e.onset
            && m.offset == e.offset
            && m.origin == Origin::Gt));
    }
    assert_eq!(ev.count(SoundClass::S1), gt.count(SoundClass::S1));
    assert!(ev.of_class(SoundClass::Inspiration).all(|e| e.origin == Origin::Pseudo));
    // untouched clip passes through
    assert_eq!(r.manifest.entries[1], heart.entries[1]);
}

#[test]
fn merge_with_no_pseudo_labels_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let heart = corpus(&dir.path().join("heart"), "heart", Task::Heart, 2);
    let r = merge_datasets(&heart, &DatasetManifest::default(), dir.path().join("merged")).unwrap();
    assert_eq!(r.manifest, heart);
    assert!(r.conflicts.is_empty());
}

#[test]
fn later_stages_need_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StrategyConfig {
        model: TcnConfig::desk().into(),
        specialist: TrainConfig::default(),
        unified: TrainConfig::default(),
        pseudo: PseudoLabelConfig::default(),
        heart_corpus: dir.path().join("h.json"),
        lung_corpus: dir.path().join("l.json"),
    };
    assert!(matches!(run_strategy(2, &cfg, dir.path()), Err(Error::MissingStageInput { stage: 2, .. })));
    assert!(matches!(run_strategy(3, &cfg, dir.path()), Err(Error::MissingStageInput { stage: 3, .. })));
    assert!(matches!(run_strategy(4, &cfg, dir.path()), Err(Error::InvalidParam(_))));
}

#[test]
fn all_three_stages_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |name: &str, task, hr_gain: f64, lung_gain: f64| {
        let m = synth_corpus(
            dir.path().join(name),
            &CorpusSpec {
                name: name.into(),
                n_clips: 2,
                base: SynthSpec {
                    duration_s: 4.0,
                    heart_gain: hr_gain,
                    lung_gain,
                    ..SynthSpec::default()
                },
                task,
                ..CorpusSpec::default()
            },
        )
        .unwrap();
        let path = dir.path().join(format!("{name}.json"));
        m.save(&path).unwrap();
        path
    };
    let train = TrainConfig {
        epochs: 1,
        batch_size: 2,
        window_s: 4.0,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let cfg = StrategyConfig {
        model: TcnConfig {
            n_filters: 4,
            dilations: vec![1, 2],
            ..TcnConfig::default()
        }
        .into(),
        specialist: train.clone(),
        unified: train,
        pseudo: PseudoLabelConfig::default(),
        heart_corpus: mk("heart", Task::Heart, 0.5, 0.02),
        lung_corpus: mk("lung", Task::Lung, 0.1, 0.08),
    };
    let run = dir.path().join("run");
    let StageOutput::Specialists { heart, lung } = run_strategy(1, &cfg, &run).unwrap() else { panic!() };
    assert!(heart.exists() && lung.exists());
    let StageOutput::PseudoLabels { merged_manifest, heart_on_lung, lung_on_heart, .. } =
        run_strategy(2, &cfg, &run).unwrap()
    else {
        panic!()
    };
    assert_eq!(heart_on_lung.accepted.len() + heart_on_lung.rejections.len(), 2);
    assert_eq!(lung_on_heart.accepted.len() + lung_on_heart.rejections.len(), 2);
    let merged = DatasetManifest::load(&merged_manifest).unwrap();
    assert_eq!(merged.len(), 4);
    assert!(run.join(PSEUDO_DIR).join("heart_pl_rejections.csv").exists());
    let StageOutput::Unified { weights } = run_strategy(3, &cfg, &run).unwrap() else { panic!() };
    assert!(weights.exists());
}
