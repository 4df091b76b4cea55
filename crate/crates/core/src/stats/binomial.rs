use super::compare::Interval;
use crate::{Error, Result};

fn ln_choose(n: u64, i: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(i as f64 + 1.0) - libm::lgamma((n - i) as f64 + 1.0)
}

/// `ln P(lo <= X <= hi)` for `X ~ Binomial(n, p)`, `0 < p < 1`, by
/// log-sum-exp over the log pmf.
fn ln_binomial_range(n: u64, lo: u64, hi: u64, p: f64) -> f64 {
    let (lp, lq) = (libm::log(p), libm::log1p(-p));
    let term = |i: u64| ln_choose(n, i) + i as f64 * lp + (n - i) as f64 * lq;
    let max = (lo..=hi).map(term).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (lo..=hi).map(|i| libm::exp(term(i) - max)).sum();
    max + libm::log(sum)
}

/// Root of a monotone function on (0, 1) by bisection. `increasing` tells
/// which side `f(p) < target` lies on.
fn bisect(target: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper–Pearson exact interval for `k` successes in `n` trials at
/// confidence `1 - alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Result<Interval> {
    if n == 0 {
        return Err(Error::InvalidInput("clopper_pearson needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(alloc::format!("k = {k} exceeds n = {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    let ln_target = libm::log(alpha / 2.0);
    let lower = if k == 0 { 0.0 } else { bisect(ln_target, true, |p| ln_binomial_range(n, k, n, p)) };
    let upper = if k == n { 1.0 } else { bisect(ln_target, false, |p| ln_binomial_range(n, 0, k, p)) };
    Ok(Interval { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes_closed_form() {
        let ci = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(ci.lower, 0.0);
        let closed = 1.0 - libm::pow(0.025, 0.1);
        assert!((ci.upper - closed).abs() < 1e-10);
        assert!((ci.upper - 0.30850).abs() < 5e-6);
    }

    #[test]
    fn all_successes_closed_form() {
        let ci = clopper_pearson(10, 10, 0.05).unwrap();
        assert_eq!(ci.upper, 1.0);
        assert!((ci.lower - libm::pow(0.025, 0.1)).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid() {
        assert!(clopper_pearson(3, 2, 0.05).is_err());
        assert!(clopper_pearson(0, 0, 0.05).is_err());
        assert!(clopper_pearson(1, 2, 1.5).is_err());
    }

    #[test]
    fn large_n_is_finite_and_ordered() {
        let ci = clopper_pearson(7971, 12083, 0.05).unwrap();
        let p = 7971.0 / 12083.0;
        assert!(ci.lower < p && p < ci.upper);
        assert!(ci.width() < 0.02);
    }
}
