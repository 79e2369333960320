use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sed_core::labels::{DatasetManifest, ManifestEntry, SoundClass, SoundEvent, EventList, Task, write_labels};
use sed_core::signal::read_feature_dump;

fn hlsed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlsed"))
        .args(args)
        .output()
        .expect("spawn hlsed")
}

fn ok(args: &[&str]) -> String {
    let out = hlsed(args);
    assert!(
        out.status.success(),
        "hlsed {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One synthetic clip plus its manifest.
fn synth(dir: &Path, extra: &[&str]) -> DatasetManifest {
    let out = dir.join("corpus");
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    DatasetManifest::load(out.join("manifest.json")).unwrap()
}

fn f1_rows(csv: &str) -> Vec<(String, String, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[7].parse().unwrap())
        })
        .collect()
}

#[test]
fn featurize_ten_seconds_gives_622_by_64() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--duration", "10"]);
    let out = dir.path().join("feats");
    let stdout = ok(&["featurize", "--out", s(&out), s(&m.entries[0].audio)]);
    assert!(stdout.ends_with(",622,64\n"), "{stdout}");
    let dump = read_feature_dump(out.join("clip_000.logmel"), 0.016).unwrap();
    assert_eq!(dump.values.dim(), (622, 64));
}

#[test]
fn featurize_with_no_inputs_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("feats");
    let stdout = ok(&["featurize", "--out", s(&out)]);
    assert!(stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn corrupt_wav_fails_with_one_line_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.wav");
    fs::write(&bad, b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
    let out = hlsed(&["featurize", "--out", s(&dir.path().join("f")), s(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[corrupt_header]:"), "{err}");
    assert!(err.contains("broken.wav"));
}

#[test]
fn missing_file_and_bad_config_report_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = hlsed(&["vitals", "--labels", "x.txt", "--", s(&dir.path().join("nope.wav"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[not_found]:"));

    let ini = dir.path().join("bad.ini");
    fs::write(&ini, "colour = red\n").unwrap();
    let out = hlsed(&["--config", s(&ini), "featurize", "--out", "x"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[cli]:") && err.contains("colour"), "{err}");
}

#[test]
fn evaluating_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--clips", "2", "--duration", "6"]);
    let pred_dir = dir.path().join("corpus");
    let csv = ok(&["eval", "--manifest", s(&pred_dir.join("manifest.json")), "--pred-dir", s(&pred_dir)]);
    let rows = f1_rows(&csv);
    let present: Vec<_> = rows.iter().filter(|r| ["S1", "S2", "Inspiration", "Expiration"].contains(&r.0.as_str())).collect();
    assert_eq!(present.len(), 12, "{csv}");
    for (class, basis, f1) in present {
        assert_eq!(*f1, 1.0, "{class} {basis}");
    }
    assert_eq!(m.len(), 2);
}

/// Heart classes default to a 60 ms collar: a 50 ms onset shift still
/// matches, a 70 ms shift does not, and `--collar` overrides the default.
#[test]
fn heart_collar_defaults_to_sixty_ms() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--duration", "4", "--task", "heart"]);
    let entry = &m.entries[0];
    let gt = sed_core::labels::read_labels(&entry.labels, 4.0).unwrap().events;
    let shifted = |dt: f64| {
        let events: Vec<SoundEvent> = gt
            .of_class(SoundClass::S1)
            .filter(|e| e.offset + dt < 3.95)
            .map(|e| SoundEvent::new(SoundClass::S1, e.onset + dt, e.offset + dt))
            .collect();
        EventList::new(events, 4.0).unwrap()
    };
    let s1_event_f1 = |dt: f64, extra: &[&str]| {
        let pred = dir.path().join(format!("pred_{dt}"));
        fs::create_dir_all(&pred).unwrap();
        write_labels(pred.join("clip_000.txt"), &shifted(dt), false).unwrap();
        let manifest = dir.path().join("corpus/manifest.json");
        let mut args = vec!["eval", "--basis", "event", "--manifest", s(&manifest), "--pred-dir", s(&pred)];
        args.extend_from_slice(extra);
        let csv = ok(&args);
        f1_rows(&csv).into_iter().find(|r| r.0 == "S1").unwrap().2
    };
    assert_eq!(s1_event_f1(0.05, &[]), 1.0);
    assert_eq!(s1_event_f1(0.07, &[]), 0.0);
    assert_eq!(s1_event_f1(0.07, &["--collar", "0.08"]), 1.0);
}

#[test]
fn vitals_from_ground_truth_report_exact_heart_rate() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--heart-rate", "120", "--duration", "10"]);
    let e = &m.entries[0];
    let csv = ok(&["vitals", "--labels", s(&e.labels), "--", s(&e.audio)]);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "120");
    assert_eq!(row[3], "10");
}

fn train_args<'a>(manifest: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "--deterministic", "--seed", "3", "--arch", "tcn", "train", "--manifest", manifest, "--out", out,
    ]
}

#[test]
fn deterministic_training_is_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--clips", "2", "--duration", "5"]);
    let ini = dir.path().join("run.ini");
    fs::write(&ini, "epochs = 2\nbatch_size = 2\nwindow_s = 5\nlr = 0.001\n").unwrap();
    let manifest = dir.path().join("corpus/manifest.json");
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for run in &runs {
        let mut args = vec!["--config", s(&ini)];
        args.extend(train_args(s(&manifest), s(run)));
        ok(&args);
    }
    for f in ["model.weights", "history.csv", "config.json", "run_config.ini"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    // the snapshot alone reproduces the run
    let replay = dir.path().join("replay");
    let snap = runs[0].join("run_config.ini");
    ok(&["--config", s(&snap), "train", "--manifest", s(&manifest), "--out", s(&replay)]);
    assert_eq!(
        fs::read(runs[0].join("model.weights")).unwrap(),
        fs::read(replay.join("model.weights")).unwrap()
    );
}

#[test]
fn infer_pseudolabel_merge_and_curves_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--clips", "2", "--duration", "5", "--task", "heart"]);
    let manifest = dir.path().join("corpus/manifest.json");
    let run = dir.path().join("run");
    ok(&["--config", s(&write_ini(dir.path())), "--arch", "tcn", "train", "--manifest", s(&manifest), "--out", s(&run)]);
    let weights = run.join("model.weights");

    let preds = dir.path().join("preds");
    let audio: Vec<&str> = m.entries.iter().map(|e| s(&e.audio)).collect();
    let mut args = vec!["infer", "--weights", s(&weights), "--out", s(&preds)];
    args.extend(&audio);
    assert_eq!(ok(&args).lines().count(), 2);
    let csv = ok(&["eval", "--basis", "segment", "--manifest", s(&manifest), "--pred-dir", s(&preds)]);
    assert!(csv.starts_with("class,basis,tp,fp,fn,precision,recall,f1\n"));

    let curves = dir.path().join("curves");
    ok(&["--basis", "segment", "curves", "--weights", s(&weights), "--manifest", s(&manifest), "--out", s(&curves)]);
    assert!(fs::read_to_string(curves.join("pr_segment.csv")).unwrap().starts_with("class,threshold,precision,recall\n"));
    assert!(fs::read_to_string(curves.join("mape.csv")).unwrap().starts_with("class,threshold,mape\n"));

    let pl = dir.path().join("pl");
    let line = ok(&["pseudolabel", "--weights", s(&weights), "--corpus", s(&manifest), "--task", "lung", "--out", s(&pl)]);
    assert!(line.starts_with("accepted="), "{line}");
    assert!(pl.join("rejections.csv").exists());

    let merged = dir.path().join("merged");
    ok(&["merge", "--gt", s(&manifest), "--pl", s(&pl.join("manifest.json")), "--out", s(&merged)]);
    let out = DatasetManifest::load(merged.join("merged.json")).unwrap();
    assert_eq!(out.len(), 2);
}

fn write_ini(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.ini");
    fs::write(&p, "epochs = 1\nbatch_size = 2\nwindow_s = 5\nlr = 0.001\n").unwrap();
    p
}

#[test]
fn strategy_stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = hlsed(&[
        "strategy", "--stage", "3", "--heart", "h.json", "--lung", "l.json", "--run-dir", s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[missing_stage_input]:"));
}

#[test]
fn manifest_entries_keep_their_task() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--task", "lung", "--duration", "5"]);
    assert!(m.entries.iter().all(|e: &ManifestEntry| e.task == Task::Lung));
}
