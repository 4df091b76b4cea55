//! One-dimensional Gaussian-process regression with a Matérn 5/2 kernel.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const MAX_JITTER: f64 = 1e-4;

/// Matérn ν = 5/2 covariance at distance `r`.
pub fn matern52(r: f64, length_scale: f64, signal_variance: f64) -> f64 {
    let s = SQRT5 * libm::fabs(r) / length_scale;
    signal_variance * (1.0 + s + s * s / 3.0) * libm::exp(-s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scale: f64,
    /// Relative to the (standardized) target variance.
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Candidate hyperparameters searched by marginal likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub length_scales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        // 21 log-spaced length scales over [1e-2, 1e1].
        let length_scales = (0..21).map(|i| libm::pow(10.0, -2.0 + 3.0 * i as f64 / 20.0)).collect();
        Self { length_scales, signal_variances: vec![0.25, 1.0, 4.0], noise_variances: vec![1e-8, 1e-4, 1e-2] }
    }
}

impl HyperGrid {
    /// Grid cells in search order: length scale outermost, noise innermost.
    pub fn cells(&self, fixed_signal: bool) -> Vec<GpHyper> {
        let signals: &[f64] = if fixed_signal { &[1.0] } else { &self.signal_variances };
        let mut out = Vec::new();
        for &length_scale in &self.length_scales {
            for &signal_variance in signals {
                for &noise_variance in &self.noise_variances {
                    out.push(GpHyper { length_scale, signal_variance, noise_variance });
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a row-major `n × n` matrix.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let (done, rest) = l.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            row_i[j] = (a[i * n + j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
        }
        let d = a[i * n + i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        row_i[i] = libm::sqrt(d);
    }
    Some(l)
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        x[i] = (x[i] - dot(&row[..i], &x[..i])) / row[i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

/// Unit-variance kernel matrix for `length_scale`, row-major.
fn correlation_matrix(points: &[f64], length_scale: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = matern52(points[i] - points[j], length_scale, 1.0);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Factorizes `σ_f² R + σ_n² I`, escalating diagonal jitter ×10 from 1e-10
/// up to 1e-4 on failure. Returns the factor and the jitter used.
fn factorize(corr: &[f64], n: usize, hyper: &GpHyper) -> Result<(Vec<f64>, f64)> {
    let mut k: Vec<f64> = corr.iter().map(|c| hyper.signal_variance * c).collect();
    for i in 0..n {
        k[i * n + i] += hyper.noise_variance;
    }
    if let Some(l) = cholesky(&k, n) {
        return Ok((l, 0.0));
    }
    let mut jitter = 1e-10;
    while jitter <= MAX_JITTER * 1.000_001 {
        let mut kj = k.clone();
        for i in 0..n {
            kj[i * n + i] += jitter;
        }
        if let Some(l) = cholesky(&kj, n) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter: MAX_JITTER })
}

fn lml_from_factor(l: &[f64], n: usize, targets: &[f64]) -> f64 {
    let alpha = solve_upper_t(l, n, &solve_lower(l, n, targets));
    let fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let log_det: f64 = (0..n).map(|i| libm::log(l[i * n + i])).sum();
    -0.5 * fit - log_det - 0.5 * n as f64 * libm::log(2.0 * core::f64::consts::PI)
}

/// Log marginal likelihood of standardized targets under `hyper`.
pub fn log_marginal_likelihood(points: &[f64], targets: &[f64], hyper: &GpHyper) -> Result<f64> {
    let n = points.len();
    let (l, _) = factorize(&correlation_matrix(points, hyper.length_scale), n, hyper)?;
    Ok(lml_from_factor(&l, n, targets))
}

/// A fitted surrogate over inputs normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSurrogate {
    pub hyper: GpHyper,
    pub log_marginal_likelihood: f64,
    pub jitter: f64,
    points: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

/// Fits hyperparameters by exhaustive marginal-likelihood search over
/// `grid`. Targets are standardized; all-equal targets are only centered and
/// use unit signal variance.
pub fn gp_fit(points: &[f64], targets: &[f64], grid: &HyperGrid) -> Result<GpSurrogate> {
    if points.len() != targets.len() {
        return Err(Error::ShapeMismatch { expected: points.len(), got: targets.len() });
    }
    if points.len() < 2 {
        return Err(Error::InvalidInput("GP fit needs at least 2 points".into()));
    }
    if points.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("GP inputs must be finite".into()));
    }
    let n = targets.len() as f64;
    let y_mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n;
    let degenerate = !(var > 1e-300) || libm::sqrt(var) <= 1e-12 * libm::fabs(y_mean);
    let y_scale = if degenerate { 1.0 } else { libm::sqrt(var) };
    let ys: Vec<f64> = targets.iter().map(|y| (y - y_mean) / y_scale).collect();

    let m = points.len();
    let mut best: Option<(f64, GpHyper)> = None;
    let mut corr: (f64, Vec<f64>) = (f64::NAN, Vec::new());
    for cell in grid.cells(degenerate) {
        if corr.0 != cell.length_scale {
            corr = (cell.length_scale, correlation_matrix(points, cell.length_scale));
        }
        let Ok((l, _)) = factorize(&corr.1, m, &cell) else { continue };
        let lml = lml_from_factor(&l, m, &ys);
        if best.is_none_or(|(b, _)| lml > b) {
            best = Some((lml, cell));
        }
    }
    let (lml, hyper) = best.ok_or(Error::NotPositiveDefinite { jitter: MAX_JITTER })?;
    let (chol, jitter) = factorize(&correlation_matrix(points, hyper.length_scale), m, &hyper)?;
    let alpha = solve_upper_t(&chol, m, &solve_lower(&chol, m, &ys));
    Ok(GpSurrogate {
        hyper,
        log_marginal_likelihood: lml,
        jitter,
        points: points.to_vec(),
        y_mean,
        y_scale,
        chol,
        alpha,
    })
}

impl GpSurrogate {
    /// Posterior mean and latent variance in standardized target units.
    pub fn posterior_standardized(&self, x: f64) -> (f64, f64) {
        let n = self.points.len();
        let k: Vec<f64> =
            self.points.iter().map(|p| matern52(x - p, self.hyper.length_scale, self.hyper.signal_variance)).collect();
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &k);
        let var = self.hyper.signal_variance - v.iter().map(|e| e * e).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Posterior mean and latent variance in target units.
    pub fn posterior(&self, x: f64) -> (f64, f64) {
        let (m, v) = self.posterior_standardized(x);
        (self.y_mean + self.y_scale * m, self.y_scale * self.y_scale * v)
    }

    /// Prior signal variance in target units.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_variance * self.y_scale * self.y_scale
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}
