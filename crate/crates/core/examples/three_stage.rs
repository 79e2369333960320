//! Runs the three-stage strategy on synthetic heart and lung corpora and
//! scores the unified model on a held-out set.
//!
//! `cargo run --release --example three_stage -- [clips] [epochs] [lr]`

use std::path::Path;
use std::time::Instant;

use sed_core::labels::{DatasetManifest, SoundClass, Split, Task};
use sed_core::metrics::{macro_f1, Basis, EvalConfig};
use sed_core::model::{load_weights, CrnnConfig};
use sed_core::pipeline::{
    infer_manifest, run_strategy, score_inference, synth_corpus, CorpusSpec, PseudoLabelConfig, StageOutput,
    StrategyConfig,
};
use sed_core::train::{LossName, TrainConfig};

fn corpus(dir: &Path, name: &str, n: usize, task: Task, split: Split, seed: u64) -> DatasetManifest {
    synth_corpus(
        dir.join(name),
        &CorpusSpec {
            name: name.into(),
            n_clips: n,
            task,
            split,
            seed,
            ..CorpusSpec::default()
        },
    )
    .unwrap()
}

fn main() -> sed_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map_or(12, |s| s.parse().unwrap());
    let epochs: usize = args.get(2).map_or(25, |s| s.parse().unwrap());
    let lr: f64 = args.get(3).map_or(1e-3, |s| s.parse().unwrap());

    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let t0 = Instant::now();
    let mut heart = corpus(root, "heart_tr", n, Task::Heart, Split::Train, 1);
    heart.entries.extend(corpus(root, "heart_va", 2, Task::Heart, Split::Val, 2).entries);
    let mut lung = corpus(root, "lung_tr", n, Task::Lung, Split::Train, 3);
    lung.entries.extend(corpus(root, "lung_va", 2, Task::Lung, Split::Val, 4).entries);
    let held = corpus(root, "held", 8, Task::Both, Split::Test, 5);
    heart.save(root.join("heart.json"))?;
    lung.save(root.join("lung.json"))?;

    let train = TrainConfig {
        loss: LossName::Afl,
        lr,
        batch_size: 1,
        epochs,
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    let cfg = StrategyConfig {
        model: CrnnConfig::desk().into(),
        specialist: train.clone(),
        unified: train,
        pseudo: PseudoLabelConfig::default(),
        heart_corpus: root.join("heart.json"),
        lung_corpus: root.join("lung.json"),
    };
    let run = root.join("run");
    run_strategy(1, &cfg, &run)?;
    println!("stage 1 done {:.0}s", t0.elapsed().as_secs_f64());
    if let StageOutput::PseudoLabels { heart_on_lung, lung_on_heart, .. } = run_strategy(2, &cfg, &run)? {
        for (name, r) in [("heart->lung", &heart_on_lung), ("lung->heart", &lung_on_heart)] {
            println!("{name}: accepted {} rejected {}", r.accepted.len(), r.rejections.len());
            for rej in &r.rejections {
                println!("  {:?}", rej);
            }
        }
    }
    println!("stage 2 done {:.0}s", t0.elapsed().as_secs_f64());
    let StageOutput::Unified { weights } = run_strategy(3, &cfg, &run)? else { unreachable!() };
    println!("stage 3 done {:.0}s", t0.elapsed().as_secs_f64());

    let w = load_weights::<f32>(&weights)?;
    let inf = infer_manifest(&w, &held, &cfg.pseudo.features)?;
    let counts = score_inference(&inf, 0.5, &Default::default(), Basis::Segment, &EvalConfig::default())?;
    let classes = [SoundClass::S1, SoundClass::S2, SoundClass::Inspiration, SoundClass::Expiration];
    for c in classes {
        println!("{c}: {:.3}", counts.get(&c).copied().unwrap_or_default().f1());
    }
    println!("macro {:.3} total {:.0}s", macro_f1(&counts, &classes), t0.elapsed().as_secs_f64());
    Ok(())
}
