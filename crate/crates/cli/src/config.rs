//! Run configuration: built-in defaults, then an INI file, then flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;
use sed_core::decode::{PlausibilityBounds, PostProcess};
use sed_core::metrics::{Basis, EvalConfig};
use sed_core::model::{CrnnConfig, ModelConfig, TcnConfig};
use sed_core::signal::FeatureConfig;
use sed_core::train::{LossName, TrainConfig};

/// Every tunable the commands read, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub threshold: f64,
    pub collar: Option<f64>,
    pub basis: Option<Basis>,
    pub arch: String,
    /// `desk` for the small preset, `full` for the full-size one.
    pub size: String,
    pub loss: LossName,
    pub gamma: f64,
    pub zeta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub window_s: f64,
    pub patience: usize,
    pub merge_gap: f64,
    pub min_duration: f64,
    pub bounds: PlausibilityBounds,
    pub features: FeatureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            deterministic: false,
            threshold: 0.5,
            collar: None,
            basis: None,
            arch: "crnn".into(),
            size: "desk".into(),
            loss: t.loss,
            gamma: t.gamma,
            zeta: t.zeta,
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            window_s: t.window_s,
            patience: t.early_stop_patience,
            merge_gap: 0.0,
            min_duration: 0.0,
            bounds: PlausibilityBounds::default(),
            features: FeatureConfig::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

impl RunConfig {
    /// Applies one `key = value` setting. Dashes and underscores in keys are
    /// interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        match k {
            "seed" => self.seed = num(k, v)?,
            "deterministic" => self.deterministic = num(k, v)?,
            "threshold" => self.threshold = num(k, v)?,
            "collar" => self.collar = Some(num(k, v)?),
            "basis" => self.basis = Some(v.parse()?),
            "arch" => match v {
                "crnn" | "tcn" => self.arch = v.into(),
                _ => bail!("invalid value `{v}` for `arch`: expected crnn or tcn"),
            },
            "size" => match v {
                "desk" | "full" => self.size = v.into(),
                _ => bail!("invalid value `{v}` for `size`: expected desk or full"),
            },
            "loss" => self.loss = v.parse()?,
            "gamma" => self.gamma = num(k, v)?,
            "zeta" => self.zeta = num(k, v)?,
            "lr" => self.lr = num(k, v)?,
            "epochs" => self.epochs = num(k, v)?,
            "batch_size" => self.batch_size = num(k, v)?,
            "window_s" => self.window_s = num(k, v)?,
            "patience" => self.patience = num(k, v)?,
            "merge_gap" => self.merge_gap = num(k, v)?,
            "min_duration" => self.min_duration = num(k, v)?,
            "hr_min" => self.bounds.hr_min = num(k, v)?,
            "hr_max" => self.bounds.hr_max = num(k, v)?,
            "rr_min" => self.bounds.rr_min = num(k, v)?,
            "rr_max" => self.bounds.rr_max = num(k, v)?,
            "sample_rate" => self.features.sample_rate = num(k, v)?,
            "window_len" => self.features.window_len = num(k, v)?,
            "hop_len" => self.features.hop_len = num(k, v)?,
            "n_mels" => self.features.n_mels = num(k, v)?,
            _ => bail!("unknown configuration key `{k}`"),
        }
        Ok(())
    }

    /// Defaults, overridden by the file (if any), overridden by `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let ini = Ini::load_from_file(path).with_context(|| format!("config {}", path.display()))?;
            // sections are allowed for readability but the key space is flat
            for (_, props) in ini.iter() {
                for (k, v) in props.iter() {
                    cfg.set(k, v).with_context(|| format!("config {}", path.display()))?;
                }
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Flat INI text that [`RunConfig::resolve`] reads back to `self`.
    pub fn to_ini(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("threshold", self.threshold.to_string()),
        ];
        if let Some(c) = self.collar {
            pairs.push(("collar", c.to_string()));
        }
        if let Some(b) = self.basis {
            pairs.push(("basis", b.as_str().into()));
        }
        pairs.extend([
            ("arch", self.arch.clone()),
            ("size", self.size.clone()),
            (
                "loss",
                match self.loss {
                    LossName::Bce => "bce".into(),
                    LossName::Afl => "afl".into(),
                },
            ),
            ("gamma", self.gamma.to_string()),
            ("zeta", self.zeta.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("window_s", self.window_s.to_string()),
            ("patience", self.patience.to_string()),
            ("merge_gap", self.merge_gap.to_string()),
            ("min_duration", self.min_duration.to_string()),
            ("hr_min", self.bounds.hr_min.to_string()),
            ("hr_max", self.bounds.hr_max.to_string()),
            ("rr_min", self.bounds.rr_min.to_string()),
            ("rr_max", self.bounds.rr_max.to_string()),
            ("sample_rate", self.features.sample_rate.to_string()),
            ("window_len", self.features.window_len.to_string()),
            ("hop_len", self.features.hop_len.to_string()),
            ("n_mels", self.features.n_mels.to_string()),
        ]);
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn model(&self) -> ModelConfig {
        let n_mels = self.features.n_mels;
        match (self.arch.as_str(), self.size.as_str()) {
            ("tcn", "full") => TcnConfig { n_mels, ..TcnConfig::default() }.into(),
            ("tcn", _) => TcnConfig { n_mels, ..TcnConfig::desk() }.into(),
            (_, "full") => CrnnConfig { n_mels, ..CrnnConfig::default() }.into(),
            _ => CrnnConfig { n_mels, ..CrnnConfig::desk() }.into(),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            gamma: self.gamma,
            zeta: self.zeta,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            window_s: self.window_s,
            threshold: self.threshold,
            early_stop_patience: self.patience,
            seed: self.seed,
            features: self.features.clone(),
            ..TrainConfig::default()
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            t_collar: self.collar,
            ..EvalConfig::default()
        }
    }

    pub fn post(&self) -> PostProcess {
        PostProcess {
            merge_gap: self.merge_gap,
            min_duration: self.min_duration,
        }
    }

    /// Requested basis, or all three.
    pub fn bases(&self) -> Vec<Basis> {
        match self.basis {
            Some(b) => vec![b],
            None => vec![Basis::Event, Basis::Segment, Basis::Ji],
        }
    }
}
