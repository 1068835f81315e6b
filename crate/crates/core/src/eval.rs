//! Precision, recall and F-score for detections, stem matching and
//! element-wise mask comparison.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{argument, Result};

/// Default stem matching radius in metres.
pub const DEFAULT_MATCH_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        EvalCounts { tp, fp, fn_ }
    }
}

impl std::ops::Add for EvalCounts {
    type Output = EvalCounts;
    fn add(self, o: EvalCounts) -> EvalCounts {
        EvalCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub counts: EvalCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Ratios with a zero denominator are reported as 0.
pub fn prf(counts: EvalCounts) -> EvalReport {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EvalReport { counts, precision, recall, f_score }
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "tp,fp,fn,precision,recall,f_score";

    pub fn csv_row(&self) -> String {
        let c = self.counts;
        format!("{},{},{},{:.6},{:.6},{:.6}", c.tp, c.fp, c.fn_, self.precision, self.recall, self.f_score)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.counts;
        writeln!(f, "true positives   {:>10}", c.tp)?;
        writeln!(f, "false positives  {:>10}", c.fp)?;
        writeln!(f, "false negatives  {:>10}", c.fn_)?;
        writeln!(f, "precision        {:>10.4}", self.precision)?;
        writeln!(f, "recall           {:>10.4}", self.recall)?;
        write!(f, "f-score          {:>10.4}", self.f_score)
    }
}

/// Result of one-to-one stem matching. Pairs are `(predicted, truth)`
/// indices in acceptance order.
#[derive(Debug, Clone, PartialEq)]
pub struct StemMatch {
    pub counts: EvalCounts,
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy one-to-one matching: candidate pairs within `radius` are taken in
/// ascending distance order (then predicted index, then truth index),
/// skipping any whose endpoint is already matched.
pub fn match_stems(predicted: &[[f64; 2]], truth: &[[f64; 2]], radius: f64) -> Result<StemMatch> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(argument(format!("match radius must be > 0, got {radius}")));
    }
    let r2 = radius * radius;
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (p, a) in predicted.iter().enumerate() {
        for (t, b) in truth.iter().enumerate() {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            if d2 <= r2 {
                cand.push((d2, p, t));
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_p = vec![false; predicted.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (_, p, t) in cand {
        if !used_p[p] && !used_t[t] {
            used_p[p] = true;
            used_t[t] = true;
            pairs.push((p, t));
        }
    }
    let tp = pairs.len() as u64;
    let counts = EvalCounts::new(tp, predicted.len() as u64 - tp, truth.len() as u64 - tp);
    Ok(StemMatch { counts, pairs })
}

/// Element-wise tallies; true negatives are not counted.
pub fn mask_eval(predicted: &[bool], truth: &[bool]) -> Result<EvalCounts> {
    if predicted.len() != truth.len() {
        return Err(argument(format!("mask lengths differ: {} vs {}", predicted.len(), truth.len())));
    }
    Ok(predicted
        .par_chunks(8192)
        .zip(truth.par_chunks(8192))
        .map(|(p, t)| {
            let mut c = EvalCounts::default();
            for (&a, &b) in p.iter().zip(t) {
                match (a, b) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => {}
                }
            }
            c
        })
        .reduce(EvalCounts::default, |a, b| a + b))
}
