use std::collections::BTreeMap;

use super::{accumulate, score_events, Basis, ClassCounts, EvalConfig};
use crate::decode::{binarize, extract_events};
use crate::error::{Error, Result};
use crate::labels::{EventList, FramePosteriors, SoundClass};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapePoint {
    pub threshold: f64,
    pub mape: f64,
}

/// `0.05, 0.10, ..., 0.95`
pub fn default_thresholds() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

fn check_inputs(posteriors: &[FramePosteriors], gts: &[EventList], thresholds: &[f64]) -> Result<()> {
    if posteriors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if posteriors.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} posterior matrices for {} label sets",
            posteriors.len(),
            gts.len()
        )));
    }
    if let Some(t) = thresholds.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidParam(format!("threshold {t} outside (0, 1)")));
    }
    Ok(())
}

fn decode_at(p: &FramePosteriors, threshold: f64) -> EventList {
    extract_events(&binarize(p, threshold), p.frame_duration)
}

/// Precision and recall per trainable class at each threshold, with counts
/// pooled over all recordings.
pub fn pr_curve(
    posteriors: &[FramePosteriors],
    gts: &[EventList],
    thresholds: &[f64],
    basis: Basis,
    cfg: &EvalConfig,
) -> Result<BTreeMap<SoundClass, Vec<PrPoint>>> {
    check_inputs(posteriors, gts, thresholds)?;
    let per_threshold: Vec<Result<ClassCounts>> = par::map(thresholds, |&thr| {
        let mut total = ClassCounts::new();
        for (p, gt) in posteriors.iter().zip(gts) {
            let pred = decode_at(p, thr);
            let gt = EventList {
                events: gt.events.clone(),
                clip_duration: pred.clip_duration,
            };
            accumulate(&mut total, &score_events(basis, &gt, &pred, p.frame_duration, cfg)?);
        }
        Ok(total)
    });
    let mut out: BTreeMap<SoundClass, Vec<PrPoint>> = BTreeMap::new();
    for (&thr, counts) in thresholds.iter().zip(per_threshold) {
        let counts = counts?;
        for class in SoundClass::TRAINABLE {
            let c = counts.get(&class).copied().unwrap_or_default();
            out.entry(class).or_default().push(PrPoint {
                threshold: thr,
                precision: c.precision(),
                recall: c.recall(),
            });
        }
    }
    Ok(out)
}

/// Mean absolute percentage error of the per-recording event count, each
/// recording's error capped at 1. Recordings without ground-truth events of a
/// class are skipped for that class; classes with no eligible recording are
/// omitted.
pub fn mape_curve(
    posteriors: &[FramePosteriors],
    gts: &[EventList],
    thresholds: &[f64],
) -> Result<BTreeMap<SoundClass, Vec<MapePoint>>> {
    check_inputs(posteriors, gts, thresholds)?;
    let eligible: Vec<SoundClass> = SoundClass::TRAINABLE
        .into_iter()
        .filter(|&c| gts.iter().any(|g| g.count(c) > 0))
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleRecordings);
    }
    let per_threshold: Vec<Vec<f64>> = par::map(thresholds, |&thr| {
        let preds: Vec<EventList> = posteriors.iter().map(|p| decode_at(p, thr)).collect();
        eligible
            .iter()
            .map(|&class| {
                let errs: Vec<f64> = gts
                    .iter()
                    .zip(&preds)
                    .filter(|(g, _)| g.count(class) > 0)
                    .map(|(g, p)| {
                        let n = g.count(class) as f64;
                        ((p.count(class) as f64 - n).abs() / n).min(1.0)
                    })
                    .collect();
                errs.iter().sum::<f64>() / errs.len() as f64
            })
            .collect()
    });
    let mut out: BTreeMap<SoundClass, Vec<MapePoint>> = BTreeMap::new();
    for (&thr, row) in thresholds.iter().zip(per_threshold) {
        for (&class, mape) in eligible.iter().zip(row) {
            out.entry(class).or_default().push(MapePoint {
                threshold: thr,
                mape,
            });
        }
    }
    Ok(out)
}
