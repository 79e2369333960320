use super::{ClassCounts, Counts, EvalConfig};
use crate::error::{Error, Result};
use crate::labels::{EventList, SoundClass, SoundEvent};

/// Slack for floating-point noise in "equal or smaller than the collar".
const TOLERANCE_EPS: f64 = 1e-9;

fn union_classes(gt: &EventList, pred: &EventList) -> Vec<SoundClass> {
    let mut c = gt.classes();
    c.extend(pred.classes());
    c.sort();
    c.dedup();
    c
}

fn sorted_class(list: &EventList, class: SoundClass) -> Vec<&SoundEvent> {
    let mut v: Vec<&SoundEvent> = list.of_class(class).collect();
    v.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    v
}

/// Whether `pred` lies within the onset collar and the offset tolerance
/// `max(collar, offset_ratio * gt_duration)` of `gt`.
pub(crate) fn collar_hit(gt: &SoundEvent, pred: &SoundEvent, collar: f64, offset_ratio: f64) -> bool {
    let off_tol = collar.max(offset_ratio * gt.duration());
    (pred.onset - gt.onset).abs() <= collar + TOLERANCE_EPS
        && (pred.offset - gt.offset).abs() <= off_tol + TOLERANCE_EPS
}

/// One-to-one collar matching. Ground-truth events are visited by onset and
/// each takes the earliest-onset unmatched prediction that satisfies both
/// boundary conditions.
pub fn match_events_collar(gt: &EventList, pred: &EventList, cfg: &EvalConfig) -> ClassCounts {
    let mut out = ClassCounts::new();
    for class in union_classes(gt, pred) {
        let g = sorted_class(gt, class);
        let p = sorted_class(pred, class);
        let collar = cfg.collar_for(class);
        let mut used = vec![false; p.len()];
        let mut tp = 0;
        for ge in &g {
            if let Some(j) =
                (0..p.len()).find(|&j| !used[j] && collar_hit(ge, p[j], collar, cfg.offset_ratio))
            {
                used[j] = true;
                tp += 1;
            }
        }
        out.insert(
            class,
            Counts {
                tp,
                fp: p.len() - tp,
                fn_: g.len() - tp,
            },
        );
    }
    out
}

/// Intersection over union of two intervals.
pub fn jaccard(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for &(lo, hi) in &[a, b] {
        if !(hi > lo) {
            return Err(Error::DegenerateInterval(lo, hi));
        }
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    Ok(inter / union)
}

/// Jaccard-index protocol.
///
/// Each prediction is paired with the same-class ground-truth event of highest
/// JI (ties go to the earlier onset). JI above the threshold is a true positive
/// and consumes that event; a second prediction reaching an already consumed
/// event is a false positive. Partial overlaps count one false negative each.
/// Predictions without overlap are false positives. Ground-truth events that
/// were neither consumed nor partially hit add one false negative each.
pub fn ji_scores(gt: &EventList, pred: &EventList, cfg: &EvalConfig) -> ClassCounts {
    let mut out = ClassCounts::new();
    for class in union_classes(gt, pred) {
        let g = sorted_class(gt, class);
        let p = sorted_class(pred, class);
        let mut consumed = vec![false; g.len()];
        let mut touched = vec![false; g.len()];
        let mut c = Counts::default();
        for pe in &p {
            let mut best: Option<(usize, f64)> = None;
            for (i, ge) in g.iter().enumerate() {
                let ji = jaccard((ge.onset, ge.offset), (pe.onset, pe.offset)).unwrap_or(0.0);
                if best.is_none_or(|(_, b)| ji > b) {
                    best = Some((i, ji));
                }
            }
            match best {
                Some((i, ji)) if ji > cfg.ji_tp_threshold => {
                    if consumed[i] {
                        c.fp += 1;
                    } else {
                        consumed[i] = true;
                        c.tp += 1;
                    }
                }
                Some((i, ji)) if ji > 0.0 => {
                    touched[i] = true;
                    c.fn_ += 1;
                }
                _ => c.fp += 1,
            }
        }
        c.fn_ += (0..g.len()).filter(|&i| !consumed[i] && !touched[i]).count();
        out.insert(class, c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(events: &[(SoundClass, f64, f64)]) -> EventList {
        EventList::new(
            events.iter().map(|&(c, a, b)| SoundEvent::new(c, a, b)).collect(),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn collar_examples() {
        let cfg = EvalConfig::with_collar(0.060);
        let gt = list(&[(SoundClass::S1, 1.000, 1.100)]);
        let hit = match_events_collar(&gt, &list(&[(SoundClass::S1, 1.050, 1.140)]), &cfg);
        assert_eq!(hit[&SoundClass::S1], Counts { tp: 1, fp: 0, fn_: 0 });
        let miss = match_events_collar(&gt, &list(&[(SoundClass::S1, 1.080, 1.180)]), &cfg);
        assert_eq!(miss[&SoundClass::S1], Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn collar_identity() {
        let gt = list(&[
            (SoundClass::S1, 0.0, 0.1),
            (SoundClass::S1, 0.5, 0.6),
            (SoundClass::Inspiration, 0.2, 1.5),
        ]);
        let c = match_events_collar(&gt, &gt, &EvalConfig::default());
        assert_eq!(c[&SoundClass::S1], Counts { tp: 2, fp: 0, fn_: 0 });
        assert_eq!(c[&SoundClass::Inspiration], Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn offset_tolerance_scales_with_duration() {
        // 2 s event: offset tolerance is 1 s even with a 0.5 s collar.
        let cfg = EvalConfig::default();
        let gt = list(&[(SoundClass::Inspiration, 1.0, 3.0)]);
        let pred = list(&[(SoundClass::Inspiration, 1.2, 3.9)]);
        assert_eq!(match_events_collar(&gt, &pred, &cfg)[&SoundClass::Inspiration].tp, 1);
        let pred = list(&[(SoundClass::Inspiration, 1.2, 4.1)]);
        assert_eq!(match_events_collar(&gt, &pred, &cfg)[&SoundClass::Inspiration].tp, 0);
    }

    #[test]
    fn jaccard_cases() {
        assert!((jaccard((0.0, 1.0), (0.5, 1.5)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard((0.0, 1.0), (0.0, 4.0)).unwrap(), 0.25);
        assert_eq!(jaccard((0.2, 0.7), (0.2, 0.7)).unwrap(), 1.0);
        assert_eq!(jaccard((0.0, 1.0), (2.0, 3.0)).unwrap(), 0.0);
        assert!(matches!(jaccard((1.0, 1.0), (0.0, 2.0)), Err(Error::DegenerateInterval(..))));
    }

    #[test]
    fn ji_protocol_cases() {
        let cfg = EvalConfig::default();
        let gt = list(&[(SoundClass::Inspiration, 0.5, 1.5)]);
        let exact = ji_scores(&gt, &gt, &cfg);
        assert_eq!(exact[&SoundClass::Inspiration], Counts { tp: 1, fp: 0, fn_: 0 });
        let partial = ji_scores(&gt, &list(&[(SoundClass::Inspiration, 0.0, 1.0)]), &cfg);
        assert_eq!(partial[&SoundClass::Inspiration], Counts { tp: 0, fp: 0, fn_: 1 });
        let stray = ji_scores(&gt, &list(&[(SoundClass::Inspiration, 3.0, 4.0)]), &cfg);
        assert_eq!(stray[&SoundClass::Inspiration], Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn ji_tie_goes_to_earlier_onset() {
        let cfg = EvalConfig::default();
        let gt = list(&[(SoundClass::Expiration, 0.0, 1.0), (SoundClass::Expiration, 2.0, 3.0)]);
        // identical JI (1/3) with both; earlier one is touched, later one missed
        let pred = list(&[(SoundClass::Expiration, 0.5, 2.5)]);
        let c = ji_scores(&gt, &pred, &cfg)[&SoundClass::Expiration];
        assert_eq!(c, Counts { tp: 0, fp: 0, fn_: 2 });
    }
}
