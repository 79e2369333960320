//! Model inference over a manifest and scoring against its labels.

use crate::decode::{binarize, extract_events, PostProcess};
use crate::error::{Error, Result};
use crate::labels::{read_labels, DatasetManifest, EventList, FramePosteriors, Task};
use crate::metrics::{accumulate, score_events, Basis, ClassCounts, EvalConfig};
use crate::model::{predict, ModelWeights, Scalar};
use crate::par;
use crate::signal::{load_audio, log_mel, resample, FeatureConfig};

/// Posteriors for each manifest entry next to its ground truth, both limited
/// to the span the model observed.
#[derive(Debug, Clone)]
pub struct Inference {
    pub posteriors: Vec<FramePosteriors>,
    pub ground_truth: Vec<EventList>,
    pub tasks: Vec<Task>,
}

pub fn infer_manifest<F: Scalar>(
    w: &ModelWeights<F>,
    manifest: &DatasetManifest,
    features: &FeatureConfig,
) -> Result<Inference> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = par::map(&manifest.entries, |e| -> Result<(FramePosteriors, EventList, Task)> {
        let clip = load_audio(&e.audio).map_err(|err| match err {
            Error::NotFound(p) => Error::MissingAudio(p),
            other => other,
        })?;
        let clip = if clip.sample_rate == features.sample_rate {
            clip
        } else {
            resample(&clip, features.sample_rate)?
        };
        let gt = read_labels(&e.labels, clip.duration())?.events;
        let p = predict(w, &log_mel(&clip, features)?)?;
        let observed = p.n_frames() as f64 * p.frame_duration;
        Ok((p, gt.slice(0.0, observed), e.task))
    });
    let mut out = Inference {
        posteriors: Vec::new(),
        ground_truth: Vec::new(),
        tasks: Vec::new(),
    };
    for r in rows {
        let (p, g, t) = r?;
        out.posteriors.push(p);
        out.ground_truth.push(g);
        out.tasks.push(t);
    }
    Ok(out)
}

/// Decodes at `threshold` and pools counts over recordings. Predictions are
/// restricted to the classes each recording's labels cover.
pub fn score_inference(
    inf: &Inference,
    threshold: f64,
    post: &PostProcess,
    basis: Basis,
    cfg: &EvalConfig,
) -> Result<ClassCounts> {
    let mut total = ClassCounts::new();
    for ((p, gt), task) in inf.posteriors.iter().zip(&inf.ground_truth).zip(&inf.tasks) {
        let pred = post
            .apply(&extract_events(&binarize(p, threshold), p.frame_duration))
            .retain_classes(&task.classes());
        accumulate(&mut total, &score_events(basis, gt, &pred, p.frame_duration, cfg)?);
    }
    Ok(total)
}
