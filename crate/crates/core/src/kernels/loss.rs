use crate::error::{argument, Result};

/// Per-class sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    counts: Vec<u64>,
}

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(argument("need at least two classes"));
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(argument(format!("class {c} has no samples")));
        }
        Ok(ClassCounts { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }
}

/// Inverse-frequency weights normalized so the most frequent class gets 1.
pub fn class_weights(counts: &ClassCounts) -> Vec<f64> {
    let max = *counts.counts.iter().max().unwrap() as f64;
    counts.counts.iter().map(|&n| max / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossInput {
    pub logits: Vec<f64>,
    pub target: usize,
    pub weights: Vec<f64>,
}

/// `w_c * (log(sum_j exp(o_j)) - o_c)`, evaluated with the maximum logit
/// factored out.
pub fn weighted_cross_entropy(input: &LossInput) -> Result<f64> {
    let LossInput { logits, target, weights } = input;
    if logits.is_empty() {
        return Err(argument("no logits"));
    }
    if weights.len() != logits.len() {
        return Err(argument(format!("{} weights for {} logits", weights.len(), logits.len())));
    }
    if *target >= logits.len() {
        return Err(argument(format!("target {target} out of range")));
    }
    if let Some(j) = logits.iter().position(|o| !o.is_finite()) {
        return Err(argument(format!("logit {j} is not finite")));
    }
    let w = weights[*target];
    if !(w.is_finite() && w > 0.0) {
        return Err(argument("class weight must be positive"));
    }
    // The leading term contributes exactly 1 to the shifted sum; ln_1p
    // keeps small losses accurate.
    let lead = (0..logits.len()).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
    let max = logits[lead];
    let rest: f64 = logits.iter().enumerate().filter(|&(j, _)| j != lead).map(|(_, o)| (o - max).exp()).sum();
    Ok(w * ((max - logits[*target]) + rest.ln_1p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ce(logits: &[f64], target: usize, w: f64) -> f64 {
        let weights = vec![w; logits.len()];
        weighted_cross_entropy(&LossInput { logits: logits.to_vec(), target, weights }).unwrap()
    }

    /// `w * ln(1 + sum_{j != c} exp(o_j - o_c))`, with the largest gap
    /// pulled out when it would overflow.
    fn rearranged(logits: &[f64], target: usize, w: f64) -> f64 {
        let gaps: Vec<f64> = logits.iter().enumerate().filter(|&(j, _)| j != target).map(|(_, o)| o - logits[target]).collect();
        let top = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top <= 0.0 {
            w * gaps.iter().map(|g| g.exp()).sum::<f64>().ln_1p()
        } else {
            w * (top + ((-top).exp() + gaps.iter().map(|g| (g - top).exp()).sum::<f64>()).ln())
        }
    }

    #[test]
    fn weights_examples() {
        assert_eq!(class_weights(&ClassCounts::new(vec![100, 100]).unwrap()), vec![1.0, 1.0]);
        assert_eq!(class_weights(&ClassCounts::new(vec![850, 150]).unwrap()), vec![1.0, 850.0 / 150.0]);
        assert_eq!(class_weights(&ClassCounts::new(vec![60, 30, 10]).unwrap()), vec![1.0, 2.0, 6.0]);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(ClassCounts::new(vec![5, 0]).is_err());
        assert!(ClassCounts::new(vec![5]).is_err());
    }

    #[test]
    fn symmetric_logits() {
        assert!((ce(&[0.0, 0.0], 0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((ce(&[0.0, 0.0], 0, 2.0) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let hit = ce(&[1000.0, 0.0], 0, 1.0);
        assert!((0.0..1e-300).contains(&hit));
        assert!((ce(&[1000.0, 0.0], 1, 1.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn confident_hit_keeps_relative_accuracy() {
        let want = (-20f64).exp().ln_1p();
        assert!((ce(&[20.0, 0.0], 0, 1.0) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn non_finite_rejected() {
        let input = LossInput { logits: vec![f64::NAN, 0.0], target: 0, weights: vec![1.0, 1.0] };
        assert!(weighted_cross_entropy(&input).is_err());
    }

    proptest! {
        #[test]
        fn matches_rearranged_form(logits in prop::collection::vec(-1000.0f64..1000.0, 2..6), t in 0usize..6, w in 0.1f64..10.0) {
            let t = t % logits.len();
            let got = ce(&logits, t, w);
            let want = rearranged(&logits, t, w);
            prop_assert!(got >= 0.0);
            prop_assert!(want.is_finite());
            prop_assert!((got - want).abs() <= 1e-9 * want.abs() || got == want);
        }

        #[test]
        fn linear_in_weight(logits in prop::collection::vec(-20.0f64..20.0, 2..6), w in 0.1f64..10.0) {
            let base = ce(&logits, 0, 1.0);
            prop_assert!((ce(&logits, 0, w) - w * base).abs() <= 1e-12 * (w * base).max(1.0));
        }

        #[test]
        fn max_count_classes_get_unit_weight(counts in prop::collection::vec(1u64..50, 2..8)) {
            let w = class_weights(&ClassCounts::new(counts.clone()).unwrap());
            let max = *counts.iter().max().unwrap();
            for (c, wc) in counts.iter().zip(&w) {
                prop_assert!(*wc >= 1.0);
                prop_assert_eq!(*c == max, *wc == 1.0);
            }
        }
    }
}
