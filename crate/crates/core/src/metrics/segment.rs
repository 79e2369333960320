use super::{ClassCounts, Counts, EvalConfig};
use crate::error::{Error, Result};
use crate::labels::{ActivityMatrix, SoundClass};

/// Segment-level counts. Frames are first pooled into segments of
/// `segment_length` (any active frame makes the segment active), then each
/// segment is compared cell by cell.
pub fn segment_scores(
    gt: &ActivityMatrix,
    pred: &ActivityMatrix,
    cfg: &EvalConfig,
) -> Result<ClassCounts> {
    if gt.values.dim() != pred.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "ground truth {:?} vs prediction {:?}",
            gt.values.dim(),
            pred.values.dim()
        )));
    }
    let k = cfg
        .segment_length
        .map(|s| (s / gt.frame_duration).round().max(1.0) as usize)
        .unwrap_or(1);
    let (n, m) = gt.values.dim();
    let mut out = ClassCounts::new();
    for c in 0..m {
        let class = SoundClass::from_index(c).expect("trainable column");
        let mut counts = Counts::default();
        for start in (0..n).step_by(k) {
            let end = (start + k).min(n);
            let g = (start..end).any(|t| gt.values[[t, c]] != 0);
            let p = (start..end).any(|t| pred.values[[t, c]] != 0);
            match (g, p) {
                (true, true) => counts.tp += 1,
                (false, true) => counts.fp += 1,
                (true, false) => counts.fn_ += 1,
                (false, false) => {}
            }
        }
        out.insert(class, counts);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn mat(col: &[u8]) -> ActivityMatrix {
        let mut v = Array2::zeros((col.len(), 8));
        for (t, &x) in col.iter().enumerate() {
            v[[t, 0]] = x;
        }
        ActivityMatrix {
            values: v,
            frame_duration: 0.016,
        }
    }

    #[test]
    fn cellwise() {
        let c = segment_scores(&mat(&[1, 1, 0]), &mat(&[0, 1, 1]), &EvalConfig::default()).unwrap();
        assert_eq!(c[&SoundClass::S1], Counts { tp: 1, fp: 1, fn_: 1 });
        let c = segment_scores(&mat(&[1, 1, 0]), &mat(&[1, 1, 0]), &EvalConfig::default()).unwrap();
        assert_eq!(c[&SoundClass::S1], Counts { tp: 2, fp: 0, fn_: 0 });
        let c = segment_scores(&mat(&[0, 0, 0]), &mat(&[1, 0, 1]), &EvalConfig::default()).unwrap();
        assert_eq!(c[&SoundClass::S1], Counts { tp: 0, fp: 2, fn_: 0 });
    }

    #[test]
    fn pooled_segments() {
        let cfg = EvalConfig {
            segment_length: Some(0.032),
            ..Default::default()
        };
        // segments: [1,0] [0,0] [0,1] vs [0,1] [0,0] [0,0]
        let c = segment_scores(&mat(&[1, 0, 0, 0, 0, 1]), &mat(&[0, 1, 0, 0, 0, 0]), &cfg).unwrap();
        assert_eq!(c[&SoundClass::S1], Counts { tp: 1, fp: 0, fn_: 1 });
    }

    #[test]
    fn shape_mismatch() {
        assert!(segment_scores(&mat(&[1]), &mat(&[1, 0]), &EvalConfig::default()).is_err());
    }
}
