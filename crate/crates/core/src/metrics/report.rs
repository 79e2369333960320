use std::collections::BTreeMap;
use std::fmt::Write;

use super::{Basis, ClassCounts, MapePoint, PrPoint};
use crate::labels::SoundClass;

/// `class,basis,tp,fp,fn,precision,recall,f1`
pub fn counts_csv(rows: &[(Basis, ClassCounts)]) -> String {
    let mut s = String::from("class,basis,tp,fp,fn,precision,recall,f1\n");
    for (basis, counts) in rows {
        for (class, c) in counts {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6}",
                class,
                basis.as_str(),
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
    }
    s
}

/// `class,threshold,precision,recall`
pub fn pr_csv(curves: &BTreeMap<SoundClass, Vec<PrPoint>>) -> String {
    let mut s = String::from("class,threshold,precision,recall\n");
    for (class, pts) in curves {
        for p in pts {
            let _ = writeln!(s, "{},{:.2},{:.6},{:.6}", class, p.threshold, p.precision, p.recall);
        }
    }
    s
}

/// `class,threshold,mape`
pub fn mape_csv(curves: &BTreeMap<SoundClass, Vec<MapePoint>>) -> String {
    let mut s = String::from("class,threshold,mape\n");
    for (class, pts) in curves {
        for p in pts {
            let _ = writeln!(s, "{},{:.2},{:.6}", class, p.threshold, p.mape);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Counts;

    #[test]
    fn counts_header_and_row() {
        let mut c = ClassCounts::new();
        c.insert(SoundClass::S1, Counts { tp: 1, fp: 1, fn_: 1 });
        let csv = counts_csv(&[(Basis::Segment, c)]);
        assert_eq!(
            csv,
            "class,basis,tp,fp,fn,precision,recall,f1\nS1,segment,1,1,1,0.500000,0.500000,0.500000\n"
        );
    }
}
