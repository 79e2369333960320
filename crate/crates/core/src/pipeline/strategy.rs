//! Specialists, cross pseudo-labeling, and unified retraining.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::merge::{merge_datasets, MergeReport};
use super::pseudo::{generate_pseudo_labels, PseudoLabelConfig, PseudoLabelReport};
use crate::error::{Error, Result};
use crate::labels::{DatasetManifest, SoundClass, Split};
use crate::model::{load_weights, ModelConfig, ModelWeights};
use crate::train::{load_examples, train_loop, write_run, RunSnapshot, TrainConfig, WEIGHTS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub model: ModelConfig,
    /// Training settings for both specialists.
    pub specialist: TrainConfig,
    /// Training settings for the unified model.
    pub unified: TrainConfig,
    pub pseudo: PseudoLabelConfig,
    /// Manifest of heart-annotated recordings.
    pub heart_corpus: PathBuf,
    /// Manifest of lung-annotated recordings.
    pub lung_corpus: PathBuf,
}

pub const HEART_DIR: &str = "stage1_heart";
pub const LUNG_DIR: &str = "stage1_lung";
pub const PSEUDO_DIR: &str = "stage2";
pub const MERGED_MANIFEST: &str = "merged.json";
pub const UNIFIED_DIR: &str = "stage3";

#[derive(Debug, Clone)]
pub enum StageOutput {
    Specialists {
        heart: PathBuf,
        lung: PathBuf,
    },
    PseudoLabels {
        /// Heart pseudo-labels on the lung corpus.
        heart_on_lung: PseudoLabelReport,
        /// Lung pseudo-labels on the heart corpus.
        lung_on_heart: PseudoLabelReport,
        merge: MergeReport,
        merged_manifest: PathBuf,
    },
    Unified {
        weights: PathBuf,
    },
}

fn train_split(manifest: &DatasetManifest, model: &ModelConfig, cfg: &TrainConfig, dir: &Path) -> Result<PathBuf> {
    let train = load_examples(&manifest.split(Split::Train))?;
    let val = load_examples(&manifest.split(Split::Val))?;
    let outcome = train_loop(&train, &val, model, cfg)?;
    let snapshot = RunSnapshot {
        model: model.clone(),
        train: cfg.clone(),
    };
    write_run(dir, &snapshot, &outcome)?;
    Ok(dir.join(WEIGHTS_FILE))
}

fn stage_input(stage: u8, path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingStageInput {
            stage,
            what: path.display().to_string(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one stage inside `run_dir`. Each stage reads the previous stage's
/// artifacts from the same directory.
pub fn run_strategy(stage: u8, cfg: &StrategyConfig, run_dir: impl AsRef<Path>) -> Result<StageOutput> {
    let run_dir = run_dir.as_ref();
    match stage {
        1 => {
            let heart = DatasetManifest::load(&cfg.heart_corpus)?;
            let lung = DatasetManifest::load(&cfg.lung_corpus)?;
            let heart_w = train_split(&heart, &cfg.model, &cfg.specialist, &run_dir.join(HEART_DIR))?;
            let lung_w = train_split(&lung, &cfg.model, &cfg.specialist, &run_dir.join(LUNG_DIR))?;
            Ok(StageOutput::Specialists {
                heart: heart_w,
                lung: lung_w,
            })
        }
        2 => {
            let heart_w = stage_input(2, run_dir.join(HEART_DIR).join(WEIGHTS_FILE))?;
            let lung_w = stage_input(2, run_dir.join(LUNG_DIR).join(WEIGHTS_FILE))?;
            let heart_model: ModelWeights<f32> = load_weights(heart_w)?;
            let lung_model: ModelWeights<f32> = load_weights(lung_w)?;
            let heart = DatasetManifest::load(&cfg.heart_corpus)?;
            let lung = DatasetManifest::load(&cfg.lung_corpus)?;
            let out = run_dir.join(PSEUDO_DIR);
            let heart_on_lung =
                generate_pseudo_labels(&heart_model, &lung, &SoundClass::HEART, &cfg.pseudo, out.join("heart_pl"))?;
            let lung_on_heart =
                generate_pseudo_labels(&lung_model, &heart, &SoundClass::LUNG, &cfg.pseudo, out.join("lung_pl"))?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_text(&out.join("heart_pl_rejections.csv"), &heart_on_lung.rejections_csv())?;
            write_text(&out.join("lung_pl_rejections.csv"), &lung_on_heart.rejections_csv())?;
            write_text(&out.join("heart_pl_totals.csv"), &heart_on_lung.totals_csv())?;
            write_text(&out.join("lung_pl_totals.csv"), &lung_on_heart.totals_csv())?;

            let mut gt = heart.clone();
            gt.entries.extend(lung.entries.iter().cloned());
            let mut pl = heart_on_lung.accepted.clone();
            pl.entries.extend(lung_on_heart.accepted.entries.iter().cloned());
            let merge = merge_datasets(&gt, &pl, out.join("merged"))?;
            let merged_manifest = run_dir.join(MERGED_MANIFEST);
            merge.manifest.save(&merged_manifest)?;
            Ok(StageOutput::PseudoLabels {
                heart_on_lung,
                lung_on_heart,
                merge,
                merged_manifest,
            })
        }
        3 => {
            let merged = stage_input(3, run_dir.join(MERGED_MANIFEST))?;
            let manifest = DatasetManifest::load(merged)?;
            let weights = train_split(&manifest, &cfg.model, &cfg.unified, &run_dir.join(UNIFIED_DIR))?;
            Ok(StageOutput::Unified { weights })
        }
        other => Err(Error::InvalidParam(format!("stage must be 1, 2 or 3, got {other}"))),
    }
}
