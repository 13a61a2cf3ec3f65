//! Debiased point estimates, variance estimates, confidence intervals and
//! one-sided tests for linear contrasts.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{design_stats, DesignStats, GroupSample, TwoGroupDataset};
use crate::error::{HitsError, Result};
use crate::lasso::{lasso_fit, LassoConfig, LassoFit};
use crate::normal::upper_quantile;
use crate::projection::{direction_enhanced, direction_relaxed, ProjectionConfig, ProjectionDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    /// `x'(beta1 - beta2)`
    Ite,
    /// `mean(X2)'(beta2 - beta1)`
    Ate,
    SingleArm,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastInference {
    pub delta_hat: f64,
    pub v_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub z_stat: f64,
    /// Decision for `H0: contrast <= 0` at level `alpha`.
    pub reject: bool,
    pub alpha: f64,
    pub kind: ContrastKind,
    /// Set when both the estimate and its variance are exactly zero.
    pub no_decision: bool,
}

impl ContrastInference {
    /// Assembles the interval and test from an estimate and its variance.
    pub fn from_estimate(delta_hat: f64, v_hat: f64, alpha: f64, kind: ContrastKind) -> Result<Self> {
        check_alpha(alpha)?;
        if !(v_hat >= 0.0) || !v_hat.is_finite() || !delta_hat.is_finite() {
            return Err(HitsError::Config(format!(
                "non-finite estimate ({delta_hat}) or variance ({v_hat})"
            )));
        }
        if v_hat == 0.0 {
            if delta_hat != 0.0 {
                return Err(HitsError::DegenerateVariance { delta_hat });
            }
            return Ok(Self {
                delta_hat,
                v_hat,
                ci_lower: 0.0,
                ci_upper: 0.0,
                z_stat: 0.0,
                reject: false,
                alpha,
                kind,
                no_decision: true,
            });
        }
        let se = v_hat.sqrt();
        let half = upper_quantile(alpha / 2.0) * se;
        Ok(Self {
            delta_hat,
            v_hat,
            ci_lower: delta_hat - half,
            ci_upper: delta_hat + half,
            z_stat: delta_hat / se,
            reject: delta_hat - upper_quantile(alpha) * se > 0.0,
            alpha,
            kind,
            no_decision: false,
        })
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }

    pub fn ci_length(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    /// Machine-readable form: `{delta_hat, v_hat, ci, z, reject, alpha, kind, diagnostics}`.
    pub fn to_json(&self, diagnostics: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "delta_hat": self.delta_hat,
            "v_hat": self.v_hat,
            "ci": [self.ci_lower, self.ci_upper],
            "z": self.z_stat,
            "reject": self.reject,
            "alpha": self.alpha,
            "kind": self.kind,
            "no_decision": self.no_decision,
            "diagnostics": diagnostics,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(HitsError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Solver settings shared by every pipeline entry point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub lasso: LassoConfig,
    pub projection: ProjectionConfig,
    /// Add the design-row constraint (heavy-tailed errors).
    pub relaxed: bool,
}

/// `x'b + u' X'(Y - X b) / n`
pub fn debias_single_arm(fit: &LassoFit, dir: &ProjectionDirection, g: &GroupSample, x_new: &DVector<f64>) -> f64 {
    debias_with(fit, &dir.u, g, x_new)
}

/// Same correction for an arbitrary direction `u`.
pub fn debias_with(fit: &LassoFit, u: &DVector<f64>, g: &GroupSample, x_new: &DVector<f64>) -> f64 {
    let plug_in = x_new.dot(&fit.beta_hat);
    if u.iter().all(|&v| v == 0.0) {
        return plug_in;
    }
    let xu = g.x() * u;
    plug_in + xu.dot(&fit.residuals) / g.n() as f64
}

/// `sigma2 u'Su / n` for one arm.
pub fn arm_variance(fit: &LassoFit, dir: &ProjectionDirection, n: usize) -> f64 {
    fit.sigma2_hat * dir.variance_quadform / n as f64
}

/// One arm's fitted pieces for a given loading.
#[derive(Debug, Clone)]
pub struct ArmFit {
    pub stats: DesignStats,
    pub fit: LassoFit,
    pub direction: ProjectionDirection,
    pub estimate: f64,
    pub variance: f64,
}

impl ArmFit {
    pub fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma2_hat": self.fit.sigma2_hat,
            "lasso_iterations": self.fit.iterations,
            "lasso_converged": self.fit.converged,
            "lasso_objective": self.fit.objective,
            "nonzero_coefficients": self.fit.beta_hat.iter().filter(|b| **b != 0.0).count(),
            "estimate": self.estimate,
            "variance": self.variance,
            "direction": self.direction.diagnostics(),
        })
    }
}

pub fn direction_for(
    g: &GroupSample,
    stats: &DesignStats,
    x_new: &DVector<f64>,
    cfg: &InferenceConfig,
) -> Result<ProjectionDirection> {
    if cfg.relaxed {
        direction_relaxed(g, stats, x_new, &cfg.projection)
    } else {
        direction_enhanced(stats, x_new, &cfg.projection)
    }
}

/// Fits the Lasso and the projection direction for one arm.
pub fn fit_arm(g: &GroupSample, x_new: &DVector<f64>, cfg: &InferenceConfig) -> Result<ArmFit> {
    let stats = design_stats(g);
    let fit = lasso_fit(g, &stats, &cfg.lasso)?;
    fit_arm_with(g, stats, fit, x_new, cfg)
}

/// Same as [`fit_arm`] with the Lasso fit supplied by the caller.
pub fn fit_arm_with(
    g: &GroupSample,
    stats: DesignStats,
    fit: LassoFit,
    x_new: &DVector<f64>,
    cfg: &InferenceConfig,
) -> Result<ArmFit> {
    let direction = direction_for(g, &stats, x_new, cfg)?;
    let estimate = debias_single_arm(&fit, &direction, g, x_new);
    let variance = arm_variance(&fit, &direction, g.n());
    Ok(ArmFit {
        stats,
        fit,
        direction,
        estimate,
        variance,
    })
}

/// ITE inference from already-fitted arms.
pub fn ite_inference(
    ds: &TwoGroupDataset,
    fits: [&LassoFit; 2],
    dirs: [&ProjectionDirection; 2],
    alpha: f64,
) -> Result<ContrastInference> {
    let e1 = debias_single_arm(fits[0], dirs[0], &ds.group1, &ds.x_new);
    let e2 = debias_single_arm(fits[1], dirs[1], &ds.group2, &ds.x_new);
    let v = arm_variance(fits[0], dirs[0], ds.group1.n()) + arm_variance(fits[1], dirs[1], ds.group2.n());
    ContrastInference::from_estimate(e1 - e2, v, alpha, ContrastKind::Ite)
}

/// Full ITE pipeline with both arms' intermediate results.
#[derive(Debug, Clone)]
pub struct TwoArmResult {
    pub inference: ContrastInference,
    pub arm1: ArmFit,
    pub arm2: ArmFit,
    pub loading: DVector<f64>,
}

impl TwoArmResult {
    pub fn to_json(&self, diagnostics: bool) -> serde_json::Value {
        let diag = if diagnostics {
            serde_json::json!({ "arm1": self.arm1.diagnostics(), "arm2": self.arm2.diagnostics() })
        } else {
            serde_json::Value::Null
        };
        self.inference.to_json(diag)
    }
}

pub fn ite(ds: &TwoGroupDataset, cfg: &InferenceConfig, alpha: f64) -> Result<TwoArmResult> {
    check_alpha(alpha)?;
    let arm1 = fit_arm(&ds.group1, &ds.x_new, cfg)?;
    let arm2 = fit_arm(&ds.group2, &ds.x_new, cfg)?;
    let inference = ite_inference(ds, [&arm1.fit, &arm2.fit], [&arm1.direction, &arm2.direction], alpha)?;
    Ok(TwoArmResult {
        inference,
        arm1,
        arm2,
        loading: ds.x_new.clone(),
    })
}

/// ATE over the treated arm: the loading is arm 2's covariate mean and the
/// contrast is oriented as `beta2 - beta1`.
pub fn ate_inference(ds: &TwoGroupDataset, cfg: &InferenceConfig, alpha: f64) -> Result<TwoArmResult> {
    check_alpha(alpha)?;
    let x_bar = ds.group2.x().row_mean().transpose();
    let arm1 = fit_arm(&ds.group1, &x_bar, cfg)?;
    let arm2 = fit_arm(&ds.group2, &x_bar, cfg)?;
    let inference = ContrastInference::from_estimate(
        arm2.estimate - arm1.estimate,
        arm1.variance + arm2.variance,
        alpha,
        ContrastKind::Ate,
    )?;
    Ok(TwoArmResult {
        inference,
        arm1,
        arm2,
        loading: x_bar,
    })
}

/// One-sample inference for `x'beta` (prediction at `x_new`).
pub fn predict_inference(
    g: &GroupSample,
    x_new: &DVector<f64>,
    cfg: &InferenceConfig,
    alpha: f64,
) -> Result<(ContrastInference, ArmFit)> {
    check_alpha(alpha)?;
    if x_new.len() != g.p() {
        return Err(HitsError::Dimension(format!(
            "loading has length {} but p = {}",
            x_new.len(),
            g.p()
        )));
    }
    let arm = fit_arm(g, x_new, cfg)?;
    let inf = ContrastInference::from_estimate(arm.estimate, arm.variance, alpha, ContrastKind::Prediction)?;
    Ok((inf, arm))
}
