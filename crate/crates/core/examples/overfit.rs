//! Overfits a CRNN on a handful of synthetic clips and reports segment F1.
//!
//! `cargo run --release --example overfit -- [epochs] [lr] [channels,..] [gru] [convs]`

use std::time::Instant;

use sed_core::decode::{binarize, extract_events};
use sed_core::labels::{SoundClass, Task};
use sed_core::metrics::{accumulate, macro_f1, score_events, Basis, ClassCounts, EvalConfig};
use sed_core::model::{self, init_weights, CrnnConfig, Mode};
use sed_core::pipeline::{synth_clip, SynthSpec};
use sed_core::train::{adam_step, batch_loss_and_grad, prepare_window, AdamState, TrainConfig, TrainExample};

fn main() -> sed_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(60, |s| s.parse().unwrap());
    let lr: f64 = args.get(2).map_or(1e-3, |s| s.parse().unwrap());
    let channels: Vec<usize> = args
        .get(3)
        .map_or(vec![8, 16, 32], |s| s.split(',').map(|c| c.parse().unwrap()).collect());
    let gru: usize = args.get(4).map_or(32, |s| s.parse().unwrap());
    let convs: usize = args.get(5).map_or(2, |s| s.parse().unwrap());

    let examples: Vec<TrainExample> = (0..5)
        .map(|i| {
            let spec = SynthSpec {
                heart_rate: 60.0 + 12.0 * i as f64,
                respiratory_rate: 12.0 + 2.0 * i as f64,
                seed: i as u64,
                ..SynthSpec::default()
            };
            let (clip, events) = synth_clip(&spec).unwrap();
            TrainExample { clip, events, task: Task::Both }
        })
        .collect();
    let cfg = TrainConfig { lr, ..TrainConfig::default() };
    let windows: Vec<_> = examples.iter().map(|e| prepare_window(e, 0, &cfg, 0)).collect::<Result<_, _>>()?;
    let mc = CrnnConfig { channels, gru_hidden: gru, convs_per_block: convs, ..CrnnConfig::desk() };
    let mut w = init_weights::<f32>(mc, 1)?;
    println!("params {}", w.n_params());
    let mut adam = AdamState::new();
    let classes = [SoundClass::S1, SoundClass::S2, SoundClass::Inspiration, SoundClass::Expiration];
    let t0 = Instant::now();
    for epoch in 1..=epochs {
        let mut tot = 0.0;
        for win in &windows {
            let (p, cache) = model::forward(&mut w, std::slice::from_ref(&win.features), Mode::Train)?;
            let (l, dl) = batch_loss_and_grad(
                cfg.loss_kind(),
                &[p[0].values.clone()],
                std::slice::from_ref(&win.targets),
                std::slice::from_ref(&win.mask),
            )?;
            let g = model::backward(&w, &cache.unwrap(), &dl)?;
            adam_step(&mut w, &g, &mut adam, lr)?;
            tot += l;
        }
        if epoch % 5 == 0 || epoch == epochs {
            let mut counts = ClassCounts::new();
            for (win, ex) in windows.iter().zip(&examples) {
                let p = model::predict(&w, &win.features)?;
                let pred = extract_events(&binarize(&p, 0.5), p.frame_duration);
                let gt = ex.events.clone();
                accumulate(&mut counts, &score_events(Basis::Segment, &gt, &pred, p.frame_duration, &EvalConfig::default())?);
            }
            let per: Vec<String> = classes.iter().map(|c| format!("{:.3}", counts.get(c).map_or(0.0, |k| k.f1()))).collect();
            println!(
                "epoch {epoch} loss {:.5} f1 {:.4} [{}] t={:.1}s",
                tot / 5.0,
                macro_f1(&counts, &classes),
                per.join(" "),
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
