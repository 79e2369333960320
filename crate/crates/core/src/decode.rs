//! Posteriors to events, vital-sign estimates, and the plausibility gate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{
    sort_events, ActivityMatrix, EventList, FramePosteriors, SoundClass, SoundEvent, Task,
    N_CLASSES,
};

/// `1` where the posterior is strictly greater than `threshold`.
pub fn binarize(p: &FramePosteriors, threshold: f64) -> ActivityMatrix {
    ActivityMatrix {
        values: p.values.mapv(|v| u8::from(v > threshold)),
        frame_duration: p.frame_duration,
    }
}

/// Every maximal run of active frames `[i, j]` becomes the event
/// `(i * dt, (j + 1) * dt)`. No gap merging or duration filtering.
pub fn extract_events(a: &ActivityMatrix, frame_duration: f64) -> EventList {
    let n = a.n_frames();
    let mut events = Vec::new();
    for c in 0..N_CLASSES.min(a.values.ncols()) {
        let class = SoundClass::from_index(c).expect("trainable column");
        let col = a.values.column(c);
        let mut t = 0;
        while t < n {
            if col[t] != 0 {
                let start = t;
                while t < n && col[t] != 0 {
                    t += 1;
                }
                events.push(SoundEvent::new(
                    class,
                    start as f64 * frame_duration,
                    t as f64 * frame_duration,
                ));
            } else {
                t += 1;
            }
        }
    }
    sort_events(&mut events);
    EventList {
        events,
        clip_duration: n as f64 * frame_duration,
    }
}

/// Optional clean-up applied after [`extract_events`]; off unless requested.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PostProcess {
    /// Same-class events separated by at most this many seconds are joined.
    pub merge_gap: f64,
    /// Events shorter than this are removed (after merging).
    pub min_duration: f64,
}

impl PostProcess {
    pub fn apply(&self, events: &EventList) -> EventList {
        let mut out: Vec<SoundEvent> = Vec::with_capacity(events.len());
        let mut by_class = events.events.clone();
        by_class.sort_by(|a, b| a.class.cmp(&b.class).then(a.onset.total_cmp(&b.onset)));
        for e in by_class {
            match out.last_mut() {
                Some(last) if last.class == e.class && e.onset - last.offset <= self.merge_gap => {
                    last.offset = last.offset.max(e.offset)
                }
                _ => out.push(e),
            }
        }
        out.retain(|e| e.duration() >= self.min_duration);
        sort_events(&mut out);
        EventList {
            events: out,
            clip_duration: events.clip_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    /// Beats per minute, from the S1 count.
    pub heart_rate: f64,
    /// Breaths per minute, from the inspiration count.
    pub respiratory_rate: f64,
    pub observed_duration: f64,
}

pub fn estimate_vitals(events: &EventList, duration: f64) -> Result<Vitals> {
    if !(duration > 0.0) {
        return Err(Error::NonPositiveClipDuration(duration));
    }
    Ok(Vitals {
        heart_rate: events.count(SoundClass::S1) as f64 * 60.0 / duration,
        respiratory_rate: events.count(SoundClass::Inspiration) as f64 * 60.0 / duration,
        observed_duration: duration,
    })
}

/// Inclusive physiological ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlausibilityBounds {
    pub hr_min: f64,
    pub hr_max: f64,
    pub rr_min: f64,
    pub rr_max: f64,
}

impl Default for PlausibilityBounds {
    fn default() -> Self {
        Self {
            hr_min: 40.0,
            hr_max: 240.0,
            rr_min: 0.0,
            rr_max: 35.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    HrLow,
    HrHigh,
    RrLow,
    RrHigh,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::HrLow => "hr_low",
            RejectReason::HrHigh => "hr_high",
            RejectReason::RrLow => "rr_low",
            RejectReason::RrHigh => "rr_high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}

/// Heart checks the heart rate, lung the respiratory rate, both checks both
/// (heart first).
pub fn plausibility_filter(v: &Vitals, task: Task, bounds: &PlausibilityBounds) -> Verdict {
    let heart = || {
        if v.heart_rate < bounds.hr_min {
            Some(RejectReason::HrLow)
        } else if v.heart_rate > bounds.hr_max {
            Some(RejectReason::HrHigh)
        } else {
            None
        }
    };
    let lung = || {
        if v.respiratory_rate < bounds.rr_min {
            Some(RejectReason::RrLow)
        } else if v.respiratory_rate > bounds.rr_max {
            Some(RejectReason::RrHigh)
        } else {
            None
        }
    };
    let reason = match task {
        Task::Heart => heart(),
        Task::Lung => lung(),
        Task::Both => heart().or_else(lung),
    };
    reason.map_or(Verdict::Accept, Verdict::Reject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::encode_frames;
    use ndarray::{array, Array2};

    fn post(values: Array2<f64>) -> FramePosteriors {
        FramePosteriors {
            values,
            frame_duration: 0.016,
        }
    }

    #[test]
    fn strict_threshold() {
        let mut v = Array2::from_elem((3, 8), 1e-9);
        v[[0, 0]] = 0.51;
        v[[1, 0]] = 0.50;
        let b = binarize(&post(v), 0.5);
        assert_eq!(b.values[[0, 0]], 1);
        assert_eq!(b.values[[1, 0]], 0);
        assert_eq!(b.values[[2, 0]], 0);
    }

    #[test]
    fn runs_to_events() {
        let mut a = ActivityMatrix::zeros(8, 0.016);
        for t in 2..5 {
            a.values[[t, 0]] = 1;
        }
        let ev = extract_events(&a, 0.016);
        assert_eq!(ev.len(), 1);
        assert!((ev.events[0].onset - 0.032).abs() < 1e-12);
        assert!((ev.events[0].offset - 0.080).abs() < 1e-12);

        assert!(extract_events(&ActivityMatrix::zeros(8, 0.016), 0.016).is_empty());

        let mut a = ActivityMatrix::zeros(4, 0.016);
        a.values[[0, 3]] = 1;
        let ev = extract_events(&a, 0.016);
        assert_eq!(ev.events[0].onset, 0.0);
        assert_eq!(ev.events[0].offset, 0.016);
        assert_eq!(ev.events[0].class, SoundClass::Expiration);
    }

    #[test]
    fn event_count_matches_rising_edges() {
        let col = array![0u8, 1, 1, 0, 1, 0, 0, 1, 1, 1];
        let mut a = ActivityMatrix::zeros(col.len(), 0.016);
        a.values.column_mut(5).assign(&col);
        let rising = col
            .iter()
            .enumerate()
            .filter(|&(i, &v)| v == 1 && (i == 0 || col[i - 1] == 0))
            .count();
        assert_eq!(extract_events(&a, 0.016).len(), rising);
    }

    #[test]
    fn vitals_arithmetic() {
        let s1: Vec<_> = (0..20)
            .map(|k| SoundEvent::new(SoundClass::S1, k as f64 * 0.5, k as f64 * 0.5 + 0.1))
            .collect();
        let v = estimate_vitals(&EventList::new(s1, 10.0).unwrap(), 10.0).unwrap();
        assert_eq!(v.heart_rate, 120.0);
        assert_eq!(v.respiratory_rate, 0.0);

        let insp: Vec<_> = (0..5)
            .map(|k| SoundEvent::new(SoundClass::Inspiration, k as f64 * 6.0, k as f64 * 6.0 + 2.0))
            .collect();
        let v = estimate_vitals(&EventList::new(insp, 30.0).unwrap(), 30.0).unwrap();
        assert_eq!(v.respiratory_rate, 10.0);
        assert!(estimate_vitals(&EventList::empty(0.0), 0.0).is_err());
    }

    #[test]
    fn gate_bounds_inclusive() {
        let b = PlausibilityBounds::default();
        let v = |hr, rr| Vitals {
            heart_rate: hr,
            respiratory_rate: rr,
            observed_duration: 10.0,
        };
        assert_eq!(plausibility_filter(&v(120.0, 0.0), Task::Heart, &b), Verdict::Accept);
        assert_eq!(
            plausibility_filter(&v(30.0, 0.0), Task::Heart, &b),
            Verdict::Reject(RejectReason::HrLow)
        );
        assert_eq!(
            plausibility_filter(&v(0.0, 36.0), Task::Lung, &b),
            Verdict::Reject(RejectReason::RrHigh)
        );
        assert_eq!(plausibility_filter(&v(120.0, 14.0), Task::Both, &b), Verdict::Accept);
        assert_eq!(
            plausibility_filter(&v(120.0, 40.0), Task::Both, &b),
            Verdict::Reject(RejectReason::RrHigh)
        );
    }

    #[test]
    fn post_process_is_opt_in() {
        let mut a = ActivityMatrix::zeros(10, 0.1);
        a.values[[0, 0]] = 1;
        a.values[[2, 0]] = 1;
        a.values[[3, 0]] = 1;
        let ev = extract_events(&a, 0.1);
        assert_eq!(ev.len(), 2);
        let pp = PostProcess {
            merge_gap: 0.15,
            min_duration: 0.0,
        };
        assert_eq!(pp.apply(&ev).len(), 1);
        let pp = PostProcess {
            merge_gap: 0.0,
            min_duration: 0.15,
        };
        assert_eq!(pp.apply(&ev).len(), 1);
        assert_eq!(PostProcess::default().apply(&ev), ev);
    }

    #[test]
    fn encode_extract_round_trip_simple() {
        let dt = 0.016;
        let ev = EventList::new(
            vec![
                SoundEvent::new(SoundClass::S1, 3.0 * dt, 9.0 * dt),
                SoundEvent::new(SoundClass::Inspiration, 0.0, 40.0 * dt),
            ],
            50.0 * dt,
        )
        .unwrap();
        let back = extract_events(&encode_frames(&ev, 50, dt), dt);
        assert_eq!(back.events, ev.events);
    }
}
