//! Background pseudo-labels gated by vital-sign plausibility.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decode::{
    binarize, estimate_vitals, extract_events, plausibility_filter, PlausibilityBounds, PostProcess,
    RejectReason, Verdict, Vitals,
};
use crate::error::{Error, Result};
use crate::labels::{write_labels, DatasetManifest, EventList, ManifestEntry, Origin, SoundClass, Task};
use crate::model::{predict, ModelWeights, Scalar};
use crate::par;
use crate::signal::{load_audio, log_mel, resample, FeatureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoLabelConfig {
    pub features: FeatureConfig,
    pub threshold: f64,
    pub post: PostProcess,
    pub bounds: PlausibilityBounds,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            threshold: 0.5,
            post: PostProcess::default(),
            bounds: PlausibilityBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub clip: PathBuf,
    pub vitals: Vitals,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelReport {
    /// Accepted clips, each pointing at its new pseudo-label file.
    pub accepted: DatasetManifest,
    pub rejections: Vec<Rejection>,
    /// Pseudo-labeled events per class over accepted clips.
    pub totals: BTreeMap<SoundClass, usize>,
}

impl PseudoLabelReport {
    /// `clip,hr,rr,reason`
    pub fn rejections_csv(&self) -> String {
        let mut s = String::from("clip,hr,rr,reason\n");
        for r in &self.rejections {
            s.push_str(&format!(
                "{},{:.3},{:.3},{}\n",
                r.clip.display(),
                r.vitals.heart_rate,
                r.vitals.respiratory_rate,
                r.reason.as_str()
            ));
        }
        s
    }

    /// `class,events`
    pub fn totals_csv(&self) -> String {
        let mut s = String::from("class,events\n");
        for (c, n) in &self.totals {
            s.push_str(&format!("{c},{n}\n"));
        }
        s
    }
}

/// The gate to apply for a class subset: heart rate for heart classes,
/// respiratory rate for lung classes, both when mixed.
pub fn task_for_classes(classes: &[SoundClass]) -> Task {
    let heart = classes.iter().any(|c| c.is_heart());
    let lung = classes.iter().any(|c| !c.is_heart());
    match (heart, lung) {
        (true, false) => Task::Heart,
        (false, true) => Task::Lung,
        _ => Task::Both,
    }
}

enum Outcome {
    Accept(ManifestEntry, EventList),
    Reject(Rejection),
}

/// Decodes every clip with `w`, keeps `which` classes, and accepts the clip
/// when its implied vitals are plausible. Accepted label files are written to
/// `out_dir` with an origin column.
pub fn generate_pseudo_labels<F: Scalar>(
    w: &ModelWeights<F>,
    corpus: &DatasetManifest,
    which: &[SoundClass],
    cfg: &PseudoLabelConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PseudoLabelReport> {
    let out_dir = out_dir.as_ref();
    if w.config.n_mels() != cfg.features.n_mels {
        return Err(Error::IncompatibleModel(format!(
            "model expects {} mel bins, features produce {}",
            w.config.n_mels(),
            cfg.features.n_mels
        )));
    }
    if which.is_empty() || which.iter().any(|c| c.is_aggregate()) {
        return Err(Error::InvalidParam("pseudo-label classes must be non-empty and trainable".into()));
    }
    if corpus.is_empty() {
        return Ok(PseudoLabelReport::default());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let task = task_for_classes(which);
    let indexed: Vec<(usize, &ManifestEntry)> = corpus.entries.iter().enumerate().collect();
    let outcomes = par::map(&indexed, |&(i, entry)| -> Result<Outcome> {
        let clip = load_audio(&entry.audio).map_err(|e| match e {
            Error::NotFound(p) => Error::MissingAudio(p),
            other => other,
        })?;
        let clip = if clip.sample_rate == cfg.features.sample_rate {
            clip
        } else {
            resample(&clip, cfg.features.sample_rate)?
        };
        let feats = log_mel(&clip, &cfg.features)?;
        let post = predict(w, &feats)?;
        let events = cfg.post.apply(&extract_events(&binarize(&post, cfg.threshold), post.frame_duration));
        let events = EventList {
            clip_duration: clip.duration(),
            ..events.retain_classes(which)
        };
        let vitals = estimate_vitals(&events, clip.duration())?;
        match plausibility_filter(&vitals, task, &cfg.bounds) {
            Verdict::Reject(reason) => Ok(Outcome::Reject(Rejection {
                clip: entry.audio.clone(),
                vitals,
                reason,
            })),
            Verdict::Accept => {
                let stem = entry.audio.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
                let labels = out_dir.join(format!("{i:05}_{stem}.pl.txt"));
                let events = events.with_origin(Origin::Pseudo);
                Ok(Outcome::Accept(
                    ManifestEntry {
                        audio: entry.audio.clone(),
                        labels,
                        split: entry.split,
                        origin: Origin::Pseudo,
                        task,
                    },
                    events,
                ))
            }
        }
    });
    // label files are written serially, in corpus order
    let mut report = PseudoLabelReport::default();
    for o in outcomes {
        match o? {
            Outcome::Accept(entry, events) => {
                write_labels(&entry.labels, &events, true)?;
                for c in which {
                    *report.totals.entry(*c).or_default() += events.count(*c);
                }
                report.accepted.entries.push(entry);
            }
            Outcome::Reject(r) => {
                log::info!("pseudo-label rejected {}: {}", r.clip.display(), r.reason.as_str());
                report.rejections.push(r);
            }
        }
    }
    Ok(report)
}
