//! Weighted Lasso initial estimator and the residual noise-level estimate.
//!
//! Minimizes `(1/2n)||Y - X b||^2 + A sqrt(log p / n) sum_j W_j |b_j|` by
//! cyclic coordinate descent on the cached Gram matrix ("covariance updates").

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{design_stats, DesignStats, GroupSample};
use crate::error::{HitsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Penalty multiplier `A`.
    pub a: f64,
    pub max_iter: usize,
    /// Convergence tolerance on the largest coordinate change in a full sweep.
    pub tol: f64,
    pub cv_folds: Option<usize>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            a: 1.1 * std::f64::consts::SQRT_2,
            max_iter: 10_000,
            tol: 1e-7,
            cv_folds: None,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(HitsError::Config(format!("penalty multiplier A must be positive, got {}", self.a)));
        }
        if !(self.tol > 0.0) {
            return Err(HitsError::Config("lasso tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(HitsError::Config("lasso max_iter must be at least 1".into()));
        }
        if let Some(k) = self.cv_folds {
            if !(2..=20).contains(&k) {
                return Err(HitsError::Config(format!("cv_folds must be in [2, 20], got {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub beta_hat: DVector<f64>,
    /// `||Y - X beta_hat||^2 / n`, no degrees-of-freedom correction.
    pub sigma2_hat: f64,
    /// Realized per-coordinate penalties `A sqrt(log p / n) W_j`.
    pub lambda_used: DVector<f64>,
    pub residuals: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` sweeps ran out before the tolerance was met.
    pub converged: bool,
}

/// `log p`, floored at `log 2` so that `p = 1` still gets a positive penalty.
pub fn log_p(p: usize) -> f64 {
    (p.max(2) as f64).ln()
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn penalties(stats: &DesignStats, a: f64) -> DVector<f64> {
    let base = a * (log_p(stats.p()) / stats.n as f64).sqrt();
    stats.weights.map(|w| base * w)
}

/// Multiples of the configured `A` searched when `cv_folds` is set.
pub const CV_GRID: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

/// Fits the Lasso; with `cv_folds` set, `A` is first chosen by
/// cross-validation over `CV_GRID * a`.
pub fn lasso_fit(g: &GroupSample, stats: &DesignStats, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate()?;
    match cfg.cv_folds {
        Some(folds) => {
            let base = LassoConfig { cv_folds: None, ..*cfg };
            let grid: Vec<f64> = CV_GRID.iter().map(|m| m * cfg.a).collect();
            let a = cross_validate_a(g, &grid, folds, &base)?;
            lasso_fit_from(g, stats, &LassoConfig { a, ..base }, None)
        }
        None => lasso_fit_from(g, stats, cfg, None),
    }
}

/// Lasso fit with an optional warm start. The result does not depend on the
/// start beyond the convergence tolerance.
pub fn lasso_fit_from(
    g: &GroupSample,
    stats: &DesignStats,
    cfg: &LassoConfig,
    start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    cfg.validate()?;
    let p = g.p();
    let n = g.n() as f64;
    if stats.p() != p || stats.n != g.n() {
        return Err(HitsError::Dimension("design stats do not match the sample".into()));
    }
    let gram = &stats.gram;
    let lambda = penalties(stats, cfg.a);

    let mut beta = match start {
        Some(b) if b.len() == p => b.clone(),
        Some(_) => return Err(HitsError::Dimension("warm start has wrong length".into())),
        None => DVector::zeros(p),
    };
    // grad = X'Y/n - Gram * beta
    let xty = g.x().tr_mul(g.y()) / n;
    let mut grad = &xty - gram * &beta;

    let update = |j: usize, beta: &mut DVector<f64>, grad: &mut DVector<f64>| -> f64 {
        let gjj = gram[(j, j)];
        let old = beta[j];
        let new = if gjj > 0.0 {
            soft_threshold(grad[j] + gjj * old, lambda[j]) / gjj
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            grad.axpy(-delta, &gram.column(j), 1.0);
        }
        delta.abs()
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut active: Vec<usize> = Vec::new();
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut max_change = 0.0_f64;
        for j in 0..p {
            max_change = max_change.max(update(j, &mut beta, &mut grad));
        }
        if max_change < cfg.tol {
            converged = true;
            break;
        }
        // Iterate on the support until it settles, then re-check all coordinates.
        active.clear();
        active.extend((0..p).filter(|&j| beta[j] != 0.0));
        while iterations < cfg.max_iter {
            iterations += 1;
            let mut change = 0.0_f64;
            for &j in &active {
                change = change.max(update(j, &mut beta, &mut grad));
            }
            if change < 0.1 * cfg.tol {
                break;
            }
        }
    }

    let residuals = g.y() - g.x() * &beta;
    let rss = residuals.norm_squared();
    let objective = rss / (2.0 * n) + lambda.component_mul(&beta).abs().sum();
    Ok(LassoFit {
        sigma2_hat: rss / n,
        beta_hat: beta,
        lambda_used: lambda,
        residuals,
        objective,
        iterations,
        converged,
    })
}

/// Picks the penalty multiplier with the smallest mean held-out squared error.
/// Folds are assigned round-robin by row index; ties go to the larger `A`.
pub fn cross_validate_a(g: &GroupSample, grid: &[f64], folds: usize, base: &LassoConfig) -> Result<f64> {
    if grid.is_empty() {
        return Err(HitsError::Config("CV grid is empty".into()));
    }
    if folds < 2 {
        return Err(HitsError::Config("CV needs at least 2 folds".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let n = g.n();
    let mut errors = vec![0.0; grid.len()];
    for fold in 0..folds {
        let test: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
        let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
        if test.len() < 2 || train.len() < 2 {
            return Err(HitsError::InsufficientData(format!(
                "CV fold {fold} has {} held-out and {} training rows",
                test.len(),
                train.len()
            )));
        }
        let train_sample = g.select_rows(&train)?;
        let test_sample = g.select_rows(&test)?;
        let stats = design_stats(&train_sample);
        let mut start: Option<DVector<f64>> = None;
        for (k, &a) in grid.iter().enumerate() {
            let cfg = LassoConfig { a, ..*base };
            let fit = lasso_fit_from(&train_sample, &stats, &cfg, start.as_ref())?;
            let pred = test_sample.x() * &fit.beta_hat;
            errors[k] += (test_sample.y() - pred).norm_squared() / test.len() as f64;
            start = Some(fit.beta_hat);
        }
    }
    let mut best = 0;
    for k in 1..grid.len() {
        let (e, eb) = (errors[k], errors[best]);
        if e < eb - 1e-12 * eb.abs() || ((e - eb).abs() <= 1e-12 * eb.abs() && grid[k] > grid[best]) {
            best = k;
        }
    }
    Ok(grid[best])
}
