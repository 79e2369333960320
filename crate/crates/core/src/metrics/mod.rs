//! Event-based (collared), segment-based and Jaccard-index scoring, plus
//! threshold sweeps.

mod curves;
mod event;
mod report;
mod segment;

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{encode_frames, EventList, SoundClass};

pub use curves::{default_thresholds, mape_curve, pr_curve, MapePoint, PrPoint};
pub use event::{jaccard, ji_scores, match_events_collar};
pub use report::{counts_csv, mape_csv, pr_csv};
pub use segment::segment_scores;

/// Collar used for heart classes when no override is given.
pub const HEART_COLLAR: f64 = 0.060;
/// Collar used for lung classes when no override is given.
pub const LUNG_COLLAR: f64 = 0.500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

/// `2tp / (2tp + fp + fn)`, zero when nothing was counted.
pub fn f1(c: &Counts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// Per-class counts.
pub type ClassCounts = BTreeMap<SoundClass, Counts>;

/// Unweighted mean F1 over `classes` (classes missing from `counts` score 0).
pub fn macro_f1(counts: &ClassCounts, classes: &[SoundClass]) -> f64 {
    if classes.is_empty() {
        return 0.0;
    }
    classes
        .iter()
        .map(|c| counts.get(c).map_or(0.0, f1))
        .sum::<f64>()
        / classes.len() as f64
}

/// Adds `other` into `total` class by class.
pub fn accumulate(total: &mut ClassCounts, other: &ClassCounts) {
    for (c, n) in other {
        *total.entry(*c).or_default() += *n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Collar override in seconds; `None` keys it on the class (heart 60 ms,
    /// lung 500 ms).
    pub t_collar: Option<f64>,
    pub offset_ratio: f64,
    /// Segment length in seconds; `None` means one frame.
    pub segment_length: Option<f64>,
    pub ji_tp_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            t_collar: None,
            offset_ratio: 0.5,
            segment_length: None,
            ji_tp_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn with_collar(collar: f64) -> Self {
        Self {
            t_collar: Some(collar),
            ..Self::default()
        }
    }

    pub fn collar_for(&self, class: SoundClass) -> f64 {
        self.t_collar.unwrap_or(if class.is_heart() {
            HEART_COLLAR
        } else {
            LUNG_COLLAR
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.t_collar {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("t_collar must be positive".into()));
            }
        }
        if !(self.ji_tp_threshold > 0.0 && self.ji_tp_threshold < 1.0) {
            return Err(Error::InvalidConfig("ji_tp_threshold must be in (0, 1)".into()));
        }
        if !(self.offset_ratio >= 0.0) {
            return Err(Error::InvalidConfig("offset_ratio must be non-negative".into()));
        }
        Ok(())
    }
}

/// Scoring protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Event,
    Segment,
    Ji,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Event => "event",
            Basis::Segment => "segment",
            Basis::Ji => "ji",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event" => Ok(Basis::Event),
            "segment" => Ok(Basis::Segment),
            "ji" => Ok(Basis::Ji),
            _ => Err(Error::InvalidParam(format!("unknown basis `{s}`"))),
        }
    }
}

/// Scores one recording's event lists on `basis`. Segment scoring encodes both
/// lists at `frame_duration`, spanning the longer of the two clips.
pub fn score_events(
    basis: Basis,
    gt: &EventList,
    pred: &EventList,
    frame_duration: f64,
    cfg: &EvalConfig,
) -> Result<ClassCounts> {
    match basis {
        Basis::Event => Ok(match_events_collar(gt, pred, cfg)),
        Basis::Ji => Ok(ji_scores(gt, pred, cfg)),
        Basis::Segment => {
            let span = gt.clip_duration.max(pred.clip_duration);
            let n = (span / frame_duration).round().max(1.0) as usize;
            segment_scores(
                &encode_frames(gt, n, frame_duration),
                &encode_frames(pred, n, frame_duration),
                cfg,
            )
        }
    }
}
