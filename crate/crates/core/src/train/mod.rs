//! Losses, optimizer, augmentation, and the windowed training loop.

mod adam;
mod augment;
mod loss;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use augment::{augment_spec, augment_wave, SpecOp, WaveOp};
pub use loss::{
    asymmetric_focal, batch_loss_and_grad, bce, cell_loss, loss_and_grad, loss_map, loss_terms, LossKind,
    LossMask, P_CLIP,
};

use crate::error::{Error, Result};
use crate::labels::{encode_frames, read_labels, ActivityMatrix, DatasetManifest, EventList, Task};
use crate::model::{self, backward, init_weights, save_weights, Mode, ModelConfig, ModelWeights};
use crate::par;
use crate::signal::{frame_count, load_audio, log_mel, AudioClip, FeatureConfig, LogMelSpectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Bce,
    #[default]
    Afl,
}

impl std::str::FromStr for LossName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossName::Bce),
            "afl" => Ok(LossName::Afl),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossName,
    pub gamma: f64,
    pub zeta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub window_s: f64,
    /// Decision threshold recorded with the run for downstream decoding.
    pub threshold: f64,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub features: FeatureConfig,
    pub wave_augment: Vec<WaveOp>,
    pub spec_augment: Vec<SpecOp>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossName::Afl,
            gamma: 0.0625,
            zeta: 1.0,
            lr: 1e-4,
            batch_size: 8,
            epochs: 25,
            window_s: 10.0,
            threshold: 0.5,
            early_stop_patience: 5,
            seed: 0,
            features: FeatureConfig::default(),
            wave_augment: Vec::new(),
            spec_augment: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            LossName::Bce => LossKind::Bce,
            LossName::Afl => LossKind::Afl {
                gamma: self.gamma,
                zeta: self.zeta,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.window_s > 0.0) {
            return bad("window_s must be positive");
        }
        self.loss_kind().validate()?;
        self.features.validate()
    }

    /// Samples per training window.
    pub fn window_samples(&self) -> usize {
        (self.window_s * self.features.sample_rate as f64).round() as usize
    }
}

/// One labeled recording held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub clip: AudioClip,
    pub events: EventList,
    /// Which classes the labels are authoritative for; others are loss-masked.
    pub task: Task,
}

/// Reads every entry's audio and labels.
pub fn load_examples(manifest: &DatasetManifest) -> Result<Vec<TrainExample>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let clip = load_audio(&e.audio).map_err(|err| match err {
                Error::NotFound(p) => Error::MissingAudio(p),
                other => other,
            })?;
            let parsed = read_labels(&e.labels, clip.duration())?;
            for d in &parsed.diagnostics {
                log::debug!("{}: {}", e.labels.display(), d.message);
            }
            Ok(TrainExample {
                clip,
                events: parsed.events,
                task: e.task,
            })
        })
        .collect()
}

/// Model input, targets, and loss mask for one window.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub features: LogMelSpectrogram,
    pub targets: ActivityMatrix,
    pub mask: LossMask,
}

/// Cuts `[start, start + window)` (zero-padded), augments, and encodes.
pub fn prepare_window(ex: &TrainExample, start: usize, cfg: &TrainConfig, seed: u64) -> Result<PreparedWindow> {
    let fc = &cfg.features;
    if ex.clip.sample_rate != fc.sample_rate {
        return Err(Error::RateMismatch {
            clip: ex.clip.sample_rate,
            expected: fc.sample_rate,
        });
    }
    let win = cfg.window_samples();
    let wave = ex.clip.window(start, win);
    let wave = if cfg.wave_augment.is_empty() {
        wave
    } else {
        augment_wave(&wave, &cfg.wave_augment, seed)?
    };
    let feats = log_mel(&wave, fc)?;
    let feats = if cfg.spec_augment.is_empty() {
        feats
    } else {
        augment_spec(&feats, &cfg.spec_augment, seed ^ 0x5bd1_e995)?
    };
    let n = feats.n_frames();
    let sr = fc.sample_rate as f64;
    let events = ex.events.slice(start as f64 / sr, win as f64 / sr);
    let targets = encode_frames(&events, n, feats.frame_duration);
    let real = ex.clip.len().saturating_sub(start).min(win);
    let valid = frame_count(real, fc.window_len, fc.hop_len).unwrap_or(0);
    let mask = LossMask::for_task(n, ex.task).with_valid_frames(valid);
    Ok(PreparedWindow {
        features: feats,
        targets,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// `epoch,train_loss,val_loss`; an empty cell when there is no validation set.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let val = r.val_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
            s.push_str(&format!("{},{:.10e},{}\n", r.epoch, r.train_loss, val));
        }
        s
    }
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Records a monitored value; returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            (true, false)
        } else {
            self.bad_epochs += 1;
            (false, self.patience > 0 && self.bad_epochs >= self.patience)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best monitored loss.
    pub weights: ModelWeights<f32>,
    pub history: History,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Per-sample RNG stream for `(epoch, position)`, independent of thread count.
fn sample_seed(seed: u64, epoch: usize, pos: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | pos as u64);
    rng.gen()
}

/// Eval-mode loss over fixed windows starting at 0, averaged per cell.
pub fn evaluate_loss(w: &ModelWeights<f32>, data: &[TrainExample], cfg: &TrainConfig) -> Result<f64> {
    let kind = cfg.loss_kind();
    let parts = par::map(data, |ex| -> Result<(f64, usize)> {
        let win = prepare_window(ex, 0, &TrainConfig { wave_augment: vec![], spec_augment: vec![], ..cfg.clone() }, 0)?;
        let p = model::predict(w, &win.features)?;
        let (total, _, cells) = loss_terms(kind, &p.values, &win.targets, &win.mask)?;
        Ok((total, cells))
    });
    let (mut total, mut cells) = (0.0, 0);
    for p in parts {
        let (t, c) = p?;
        total += t;
        cells += c;
    }
    Ok(if cells == 0 { 0.0 } else { total / cells as f64 })
}

/// Mini-batch training with seeded shuffling, one random window per clip per
/// epoch, and early stopping on validation loss (train loss when `val` is empty).
pub fn train_loop(
    train: &[TrainExample],
    val: &[TrainExample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(init_weights::<f32>(model_cfg.clone(), cfg.seed)?, train, val, cfg)
}

/// [`train_loop`] starting from existing weights.
pub fn train_from(
    mut w: ModelWeights<f32>,
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    if w.config.n_mels() != cfg.features.n_mels {
        return Err(Error::IncompatibleModel(format!(
            "model expects {} mel bins, features produce {}",
            w.config.n_mels(),
            cfg.features.n_mels
        )));
    }
    let kind = cfg.loss_kind();
    let win = cfg.window_samples();
    let mut adam = AdamState::new();
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut history = History::default();
    let mut best = w.clone();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let starts: Vec<usize> = order
            .iter()
            .map(|&i| {
                let slack = train[i].clip.len().saturating_sub(win);
                if slack == 0 { 0 } else { rng.gen_range(0..=slack) }
            })
            .collect();

        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let base = b * cfg.batch_size;
            let positions: Vec<usize> = (0..chunk.len()).collect();
            let windows: Vec<PreparedWindow> = par::map(&positions, |&j| {
                let pos = base + j;
                prepare_window(&train[chunk[j]], starts[pos], cfg, sample_seed(cfg.seed, epoch, pos))
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let xs: Vec<LogMelSpectrogram> = windows.iter().map(|w| w.features.clone()).collect();
            let (posteriors, cache) = model::forward(&mut w, &xs, Mode::Train)?;
            let cache = cache.expect("train mode returns a cache");
            let ps: Vec<_> = posteriors.into_iter().map(|p| p.values).collect();
            let ys: Vec<_> = windows.iter().map(|w| w.targets.clone()).collect();
            let masks: Vec<_> = windows.iter().map(|w| w.mask.clone()).collect();
            let (loss, dl) = batch_loss_and_grad(kind, &ps, &ys, &masks)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            let grads = backward(&w, &cache, &dl).map_err(|e| match e {
                Error::NonFiniteGradient(_) => Error::DivergedLoss { epoch },
                other => other,
            })?;
            adam_step(&mut w, &grads, &mut adam, cfg.lr)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = if val.is_empty() { None } else { Some(evaluate_loss(&w, val, cfg)?) };
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss { epoch });
        }
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let (improved, stop) = stopper.observe(epoch, val_loss.unwrap_or(train_loss));
        if improved {
            best = w.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        weights: best,
        history,
        best_epoch: stopper.best_epoch,
        stopped_early,
    })
}

/// Snapshot written next to the weights so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const WEIGHTS_FILE: &str = "model.weights";

/// Writes `config.json`, `history.csv`, and `model.weights` into `dir`.
pub fn write_run(dir: impl AsRef<Path>, snapshot: &RunSnapshot, outcome: &TrainOutcome) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(snapshot)?;
    std::fs::write(&cfg_path, text + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    let hist_path = dir.join(HISTORY_FILE);
    std::fs::write(&hist_path, outcome.history.to_csv()).map_err(|e| Error::io(&hist_path, e))?;
    save_weights(&outcome.weights, dir.join(WEIGHTS_FILE))
}
