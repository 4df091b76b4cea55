use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::binomial::clopper_pearson;
use super::compare::Interval;
use crate::dataset::Label;
use crate::{Error, Result};

/// Binary confusion counts; the positive class is `Abnormal`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// A metric value. Zero denominators give `value = 0` with `degenerate` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub degenerate: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric { value: 0.0, degenerate: true }
        } else {
            Metric { value: num as f64 / den as f64, degenerate: false }
        }
    }
}

pub fn balanced_accuracy_from_rates(recall: f64, specificity: f64) -> f64 {
    (recall + specificity) / 2.0
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score_from_rates(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Metric {
        Metric::ratio(self.tn, self.tn + self.fp)
    }

    pub fn balanced_accuracy(&self) -> Metric {
        let (r, s) = (self.recall(), self.specificity());
        Metric { value: balanced_accuracy_from_rates(r.value, s.value), degenerate: r.degenerate || s.degenerate }
    }

    pub fn f_score(&self) -> Metric {
        let (p, r) = (self.precision(), self.recall());
        let degenerate = p.degenerate || r.degenerate || p.value + r.value == 0.0;
        Metric { value: f_score_from_rates(p.value, r.value), degenerate }
    }

    pub fn mcc(&self) -> Metric {
        let (tp, fp, tn, fn_) = (self.tp as u128, self.fp as u128, self.tn as u128, self.fn_ as u128);
        // Pairing the factors this way keeps the value bit-identical under a
        // swap of the class designation.
        let a = ((tp + fp) * (tn + fn_)) as f64;
        let b = ((tp + fn_) * (tn + fp)) as f64;
        if a == 0.0 || b == 0.0 {
            return Metric { value: 0.0, degenerate: true };
        }
        let num = (tp * tn) as f64 - (fp * fn_) as f64;
        Metric { value: num / (libm::sqrt(a) * libm::sqrt(b)), degenerate: false }
    }

    /// Counts with the positive and negative classes exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, tn: self.tp, fp: self.fn_, fn_: self.fp }
    }
}

fn check_inputs(probs: &[f64], labels: &[Label]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch { expected: probs.len(), got: labels.len() });
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Predicts positive iff `prob >= threshold`.
pub fn confusion_at_threshold(probs: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionMatrix> {
    check_inputs(probs, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (p, y) in probs.iter().zip(labels) {
        match (*p >= threshold, y.is_positive()) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// The smallest threshold among `{0, 1} ∪ probs` that maximizes the F-score.
/// F-scores are compared exactly as rationals `2TP / (2TP + FP + FN)`.
pub fn select_threshold_max_f(probs: &[f64], labels: &[Label]) -> Result<f64> {
    check_inputs(probs, labels)?;
    let total_pos = labels.iter().filter(|y| y.is_positive()).count() as u128;
    let total_neg = labels.len() as u128 - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::InvalidInput("threshold selection needs both classes".into()));
    }
    let mut sorted: Vec<(f64, bool)> = probs.iter().copied().zip(labels.iter().map(|y| y.is_positive())).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Positives strictly below each position.
    let mut pos_below = Vec::with_capacity(sorted.len() + 1);
    pos_below.push(0u128);
    for (_, pos) in &sorted {
        pos_below.push(pos_below.last().unwrap() + u128::from(*pos));
    }

    let mut candidates: Vec<f64> = sorted.iter().map(|s| s.0).chain([0.0, 1.0]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // (numerator, denominator) of the best F so far.
    let mut best: Option<(f64, u128, u128)> = None;
    for t in candidates {
        let below = sorted.partition_point(|s| s.0 < t);
        let fn_ = pos_below[below];
        let tp = total_pos - fn_;
        let fp = total_neg - (below as u128 - fn_);
        let (num, den) = (2 * tp, 2 * tp + fp + fn_);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    Ok(best.map(|b| b.0).unwrap_or(0.0))
}

/// The six metrics at one threshold, plus the exact 95% recall interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub counts: ConfusionMatrix,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f_score: f64,
    pub mcc: f64,
    /// Absent when there are no positives.
    pub recall_ci: Option<Interval>,
    /// Names of metrics whose denominator was zero.
    pub degenerate: Vec<String>,
}

impl MetricReport {
    pub fn new(counts: ConfusionMatrix, threshold: f64) -> Result<Self> {
        let metrics = [
            ("balanced_accuracy", counts.balanced_accuracy()),
            ("precision", counts.precision()),
            ("recall", counts.recall()),
            ("specificity", counts.specificity()),
            ("f_score", counts.f_score()),
            ("mcc", counts.mcc()),
        ];
        let degenerate = metrics.iter().filter(|(_, m)| m.degenerate).map(|(n, _)| String::from(*n)).collect();
        let recall_ci = match counts.positives() {
            0 => None,
            n => Some(clopper_pearson(counts.tp, n, 0.05)?),
        };
        Ok(Self {
            threshold,
            counts,
            balanced_accuracy: metrics[0].1.value,
            precision: metrics[1].1.value,
            recall: metrics[2].1.value,
            specificity: metrics[3].1.value,
            f_score: metrics[4].1.value,
            mcc: metrics[5].1.value,
            recall_ci,
            degenerate,
        })
    }

    pub fn evaluate(probs: &[f64], labels: &[Label], threshold: f64) -> Result<Self> {
        Self::new(confusion_at_threshold(probs, labels, threshold)?, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn labels(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&b| if b == 1 { Label::Abnormal } else { Label::NoFinding }).collect()
    }

    #[test]
    fn published_rate_identities() {
        assert!((balanced_accuracy_from_rates(0.6597, 0.7668) - 0.7132).abs() < 5e-4);
        assert!((f_score_from_rates(0.7077, 0.6597) - 0.6829).abs() < 5e-4);
    }

    #[test]
    fn no_association_and_perfection() {
        let cm = ConfusionMatrix { tp: 25, fp: 25, tn: 25, fn_: 25 };
        assert_eq!(cm.mcc().value, 0.0);
        let perfect = ConfusionMatrix { tp: 7, fp: 0, tn: 3, fn_: 0 };
        let r = MetricReport::new(perfect, 0.5).unwrap();
        for v in [r.balanced_accuracy, r.precision, r.recall, r.specificity, r.f_score, r.mcc] {
            assert_eq!(v, 1.0);
        }
        assert!(r.degenerate.is_empty());
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let cm = ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 5 };
        assert_eq!(cm.precision(), Metric { value: 0.0, degenerate: true });
        assert_eq!(cm.mcc(), Metric { value: 0.0, degenerate: true });
        let r = MetricReport::new(cm, 0.9).unwrap();
        assert!(r.degenerate.iter().any(|d| d == "precision"));
        assert!(!r.precision.is_nan() && !r.mcc.is_nan() && !r.f_score.is_nan());
        let r = MetricReport::new(ConfusionMatrix { tp: 0, fp: 2, tn: 3, fn_: 0 }, 0.5).unwrap();
        assert_eq!(r.recall_ci, None);
    }

    #[test]
    fn threshold_boundaries() {
        let y = labels(&[1, 0, 1, 0, 0]);
        let p = [0.2, 0.9, 0.0, 1.0, 0.4];
        let all = confusion_at_threshold(&p, &y, 0.0).unwrap();
        assert_eq!((all.tp, all.fp, all.tn, all.fn_), (2, 3, 0, 0));
        let none = confusion_at_threshold(&p, &y, 1.0 + f64::EPSILON).unwrap();
        assert_eq!((none.tp, none.fp, none.tn, none.fn_), (0, 0, 3, 2));
        assert!(confusion_at_threshold(&p, &y[..3], 0.5).is_err());
    }

    #[test]
    fn confusion_matches_loop() {
        let mut rng = crate::rng::rng_from_seed(21);
        let p: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..=1.0)).collect();
        let y: Vec<Label> =
            (0..200).map(|_| if rng.random::<bool>() { Label::Abnormal } else { Label::NoFinding }).collect();
        let t = 0.37;
        let cm = confusion_at_threshold(&p, &y, t).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for i in 0..200 {
            let pred = p[i] >= t;
            let pos = y[i] == Label::Abnormal;
            if pred && pos {
                tp += 1
            } else if pred {
                fp += 1
            } else if pos {
                fn_ += 1
            } else {
                tn += 1
            }
        }
        assert_eq!(cm, ConfusionMatrix { tp, fp, tn, fn_ });
    }

    #[test]
    fn separable_threshold_reaches_f_one() {
        let y = labels(&[0, 0, 0, 1, 1]);
        let p = [0.1, 0.2, 0.3, 0.7, 0.8];
        let t = select_threshold_max_f(&p, &y).unwrap();
        assert!(t > 0.3 && t <= 0.7);
        assert_eq!(confusion_at_threshold(&p, &y, t).unwrap().f_score().value, 1.0);
    }

    #[test]
    fn identical_probabilities_pick_zero() {
        let y = labels(&[0, 1, 1, 0]);
        let p = [0.4; 4];
        let t = select_threshold_max_f(&p, &y).unwrap();
        assert_eq!(t, 0.0);
        let all_pos = confusion_at_threshold(&p, &y, 0.0).unwrap().f_score().value;
        assert_eq!(confusion_at_threshold(&p, &y, t).unwrap().f_score().value, all_pos);
    }

    #[test]
    fn threshold_is_exhaustively_optimal() {
        let mut rng = crate::rng::rng_from_seed(33);
        for _ in 0..20 {
            let n = rng.random_range(5..80);
            // Quantized probabilities create ties.
            let p: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..=20u8)) / 20.0).collect();
            let mut y: Vec<Label> =
                (0..n).map(|_| if rng.random::<bool>() { Label::Abnormal } else { Label::NoFinding }).collect();
            y[0] = Label::Abnormal;
            y[1] = Label::NoFinding;
            let t = select_threshold_max_f(&p, &y).unwrap();
            let f_at = |t: f64| confusion_at_threshold(&p, &y, t).unwrap().f_score().value;
            let best = f_at(t);
            let mut cands = p.clone();
            cands.extend([0.0, 1.0]);
            for c in &cands {
                assert!(best >= f_at(*c) - 1e-15);
                if f_at(*c) >= best - 1e-15 {
                    assert!(t <= *c);
                }
            }
        }
    }

    #[test]
    fn single_class_threshold_rejected() {
        assert!(select_threshold_max_f(&[0.2, 0.3], &labels(&[1, 1])).is_err());
    }

    #[test]
    fn report_identities_are_exact() {
        let cm = ConfusionMatrix { tp: 87, fp: 9, tn: 317, fn_: 249 };
        let r = MetricReport::new(cm, 0.5).unwrap();
        assert_eq!(r.balanced_accuracy, (r.recall + r.specificity) / 2.0);
        assert_eq!(r.f_score, 2.0 * r.precision * r.recall / (r.precision + r.recall));
        assert_eq!(cm.mcc().value, cm.swapped().mcc().value);
        let ci = r.recall_ci.unwrap();
        assert!(ci.contains(r.recall));
    }
}
