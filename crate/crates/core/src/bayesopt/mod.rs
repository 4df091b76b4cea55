//! Sequential minimization of a scalar objective over a 1-D interval with a
//! Gaussian-process surrogate and expected improvement.

mod gp;

pub use gp::{gp_fit, log_marginal_likelihood, matern52, GpHyper, GpSurrogate, HyperGrid};

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::stats::{normal_cdf, normal_pdf};
use crate::{Error, Result};

/// Closed-form expected improvement for minimization.
pub fn expected_improvement(mean: f64, std_dev: f64, best_y: f64, xi: f64) -> f64 {
    let improvement = best_y - mean - xi;
    if !(std_dev > 0.0) {
        return improvement.max(0.0);
    }
    let z = improvement / std_dev;
    (improvement * normal_cdf(z) + std_dev * normal_pdf(z)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: f64,
    pub upper: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { lower: 0.5, upper: 0.9 }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::InvalidConfig("search space needs 0 < lower < upper <= 1".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    fn normalize(&self, x: f64) -> f64 {
        (x - self.lower) / (self.upper - self.lower)
    }

    fn denormalize(&self, u: f64) -> f64 {
        (self.lower + u * (self.upper - self.lower)).clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub total_calls: usize,
    pub random_starts: usize,
    pub seed: u64,
    /// Exploration offset, in standardized objective units.
    pub xi: f64,
    pub candidate_grid_size: usize,
    pub hyper_grid: HyperGrid,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            total_calls: 50,
            random_starts: 15,
            seed: 0,
            xi: 0.01,
            candidate_grid_size: 1001,
            hyper_grid: HyperGrid::default(),
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_calls == 0 || self.random_starts > self.total_calls {
            return Err(Error::InvalidConfig("need 1 <= total_calls and random_starts <= total_calls".into()));
        }
        if self.candidate_grid_size < 2 || !(self.xi >= 0.0) {
            return Err(Error::InvalidConfig("candidate grid needs 2+ points and xi >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Random,
    ModelGuided,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Random => "random",
            Phase::ModelGuided => "model_guided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based call index.
    pub call: usize,
    pub phase: Phase,
    pub proportion: f64,
    pub objective: f64,
    /// The objective failed and `objective` holds the worst observed value.
    pub failed: bool,
    /// Surrogate hyperparameters used to propose this point.
    pub hyper: Option<GpHyper>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub entries: Vec<TraceEntry>,
    pub best_x: f64,
    pub best_y: f64,
}

impl OptimizationTrace {
    /// Running minimum over successful calls after each call; infinite
    /// until the first success.
    pub fn incumbents(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.entries
            .iter()
            .map(|e| {
                if !e.failed {
                    best = best.min(e.objective);
                }
                best
            })
            .collect()
    }

    /// Whether each call succeeded and strictly improved on every earlier
    /// successful one.
    pub fn improvements(&self) -> Vec<bool> {
        let mut best = f64::INFINITY;
        self.entries
            .iter()
            .map(|e| {
                let better = !e.failed && e.objective < best;
                if better {
                    best = e.objective;
                }
                better
            })
            .collect()
    }
}

const DUPLICATE_TOL: f64 = 1e-6;
const MAX_CONSECUTIVE_FAILURES: usize = 3;

fn propose(observed: &[(f64, f64)], space: &SearchSpace, cfg: &BoConfig) -> Result<(f64, GpHyper)> {
    let xs: Vec<f64> = observed.iter().map(|(x, _)| space.normalize(*x)).collect();
    let ys: Vec<f64> = observed.iter().map(|(_, y)| *y).collect();
    let gp = gp_fit(&xs, &ys, &cfg.hyper_grid)?;
    let best = gp.standardize(ys.iter().copied().fold(f64::INFINITY, f64::min));

    let g = cfg.candidate_grid_size;
    let grid: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let midpoints = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1]));

    let mut choice = (f64::NEG_INFINITY, 0.0);
    for u in grid.iter().copied().chain(midpoints) {
        let (m, v) = gp.posterior_standardized(u);
        let ei = expected_improvement(m, libm::sqrt(v), best, cfg.xi);
        if ei > choice.0 {
            choice = (ei, u);
        }
    }
    let mut x = space.denormalize(choice.1);
    let near_prior = |x: f64| observed.iter().any(|(p, _)| libm::fabs(p - x) <= DUPLICATE_TOL);
    if near_prior(x) {
        let mut widest = (f64::NEG_INFINITY, x);
        for &u in &grid {
            let cand = space.denormalize(u);
            if near_prior(cand) {
                continue;
            }
            let var = gp.posterior_standardized(u).1;
            if var > widest.0 {
                widest = (var, cand);
            }
        }
        x = widest.1;
    }
    Ok((x, gp.hyper))
}

/// Minimizes `objective` over `space`. The first `random_starts` calls are
/// uniform draws; later calls maximize expected improvement over a fixed
/// grid plus midpoints of evaluated points. Failed calls take the worst
/// observed value; three failures in a row abort.
pub fn minimize<E>(
    mut objective: impl FnMut(f64) -> core::result::Result<f64, E>,
    space: &SearchSpace,
    cfg: &BoConfig,
) -> Result<OptimizationTrace> {
    space.validate()?;
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, "bo-random");
    let mut entries: Vec<TraceEntry> = Vec::with_capacity(cfg.total_calls);
    let mut pending_failures: Vec<usize> = Vec::new();
    let mut consecutive_failures = 0;

    for call in 1..=cfg.total_calls {
        let observed: Vec<(f64, f64)> = entries
            .iter()
            .enumerate()
            .filter(|(i, _)| !pending_failures.contains(i))
            .map(|(_, e)| (e.proportion, e.objective))
            .collect();
        let distinct = {
            let mut xs: Vec<f64> = observed.iter().map(|o| o.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs.len()
        };
        let (phase, x, hyper) = if call <= cfg.random_starts || distinct < 2 {
            let x = space.lower + rng.random::<f64>() * (space.upper - space.lower);
            (Phase::Random, x, None)
        } else {
            let (x, h) = propose(&observed, space, cfg)?;
            (Phase::ModelGuided, x, Some(h))
        };

        let (objective_value, failed) = match objective(x) {
            Ok(y) if y.is_finite() => {
                consecutive_failures = 0;
                (y, false)
            }
            _ => {
                consecutive_failures += 1;
                if consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                    return Err(Error::ObjectiveFailures(consecutive_failures));
                }
                let worst = observed.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
                (worst, true)
            }
        };
        entries.push(TraceEntry { call, phase, proportion: x, objective: objective_value, failed, hyper });
        if failed && !objective_value.is_finite() {
            pending_failures.push(entries.len() - 1);
        } else if !failed && !pending_failures.is_empty() {
            // First success after failures with nothing to substitute yet.
            for i in pending_failures.drain(..) {
                entries[i].objective = objective_value;
            }
        }
    }

    // First minimum among successful calls wins; a failed call only carries
    // a substitute value and has nothing to restore.
    let best = entries
        .iter()
        .filter(|e| !e.failed)
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .ok_or(Error::ObjectiveFailures(entries.len()))?;
    let (best_x, best_y) = (best.proportion, best.objective);
    Ok(OptimizationTrace { entries, best_x, best_y })
}
