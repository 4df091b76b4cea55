use serde::{Deserialize, Serialize};

use super::normal::two_sided_p;
use crate::{Error, Result};

/// Two-sided 95% normal quantile as used for CI-derived standard errors.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Standard error recovered from a 95% interval: width / (2 · 1.96).
    pub fn standard_error(&self) -> f64 {
        self.width() / (2.0 * Z_95)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// CI-based two-proportion Z test of model 2 against model 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallComparison {
    pub recall1: f64,
    pub ci1: Interval,
    pub recall2: f64,
    pub ci2: Interval,
    pub se1: f64,
    pub se2: f64,
    pub delta_recall: f64,
    pub delta_se: f64,
    pub z: f64,
    pub p: f64,
    pub significant: bool,
}

pub fn compare_recall(recall1: f64, ci1: Interval, recall2: f64, ci2: Interval) -> Result<RecallComparison> {
    for (r, ci) in [(recall1, ci1), (recall2, ci2)] {
        if !(r.is_finite() && ci.lower.is_finite() && ci.upper.is_finite()) || !ci.contains(r) {
            return Err(Error::InvalidInput("each value must lie inside its interval".into()));
        }
    }
    let (se1, se2) = (ci1.standard_error(), ci2.standard_error());
    let delta_recall = recall2 - recall1;
    let delta_se = libm::sqrt(se1 * se1 + se2 * se2);
    if delta_se == 0.0 {
        return Err(Error::UndefinedZ);
    }
    let z = delta_recall / delta_se;
    let p = two_sided_p(z);
    Ok(RecallComparison { recall1, ci1, recall2, ci2, se1, se2, delta_recall, delta_se, z, p, significant: p < 0.05 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lower: f64, upper: f64) -> Interval {
        Interval { lower, upper }
    }

    #[test]
    fn external_row() {
        let c = compare_recall(0.2589, iv(0.2255, 0.2923), 0.3185, iv(0.2830, 0.3540)).unwrap();
        assert!((c.z - 2.3966).abs() < 1e-3, "z = {}", c.z);
        assert!((c.p - 0.0165).abs() < 5e-4, "p = {}", c.p);
        assert!(c.significant);
        assert_eq!(c.se1, (0.2923 - 0.2255) / 3.92);
        assert_eq!(c.z, c.delta_recall / c.delta_se);
    }

    #[test]
    fn redundant_row() {
        let c = compare_recall(0.6675, iv(0.6625, 0.6725), 0.7300, iv(0.7253, 0.7347)).unwrap();
        assert!((c.z - 17.8514).abs() < 1e-2, "z = {}", c.z);
        assert!(c.p < 1e-6);
    }

    #[test]
    fn null_comparison() {
        let c = compare_recall(0.5, iv(0.4, 0.6), 0.5, iv(0.4, 0.6)).unwrap();
        assert_eq!((c.delta_recall, c.z, c.p), (0.0, 0.0, 1.0));
        assert!(!c.significant);
    }

    #[test]
    fn antisymmetric() {
        let a = compare_recall(0.61, iv(0.55, 0.66), 0.7, iv(0.64, 0.75)).unwrap();
        let b = compare_recall(0.7, iv(0.64, 0.75), 0.61, iv(0.55, 0.66)).unwrap();
        assert_eq!(a.z, -b.z);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn degenerate_intervals() {
        assert_eq!(compare_recall(0.5, iv(0.5, 0.5), 0.6, iv(0.6, 0.6)), Err(Error::UndefinedZ));
        assert!(compare_recall(0.9, iv(0.1, 0.2), 0.5, iv(0.4, 0.6)).is_err());
    }
}
