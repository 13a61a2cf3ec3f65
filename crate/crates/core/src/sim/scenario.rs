use serde::{Deserialize, Serialize};

use crate::error::{HitsError, Result};

/// Coefficient generator for the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CoefficientRule {
    /// Ten nonzero slopes in arm 1, five in arm 2, plus intercepts.
    ExactSparse,
    /// Exact-sparse head with polynomially decaying tails `(j-1)^-delta1`.
    Decaying { delta1: f64 },
    /// Exact-sparse head with a flat block `delta2 * lambda0` on indices 11..=50.
    CappedL1 { delta2: f64 },
}

/// Loading generator. Indices below are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LoadingRule {
    /// `x_j = scale * 1(j >= 12) * basis_j`
    DenseShrunk { scale: f64 },
    /// `x_1 = 1`, `x_2` solved so the true contrast is exactly zero, tail as above.
    DenseNull { scale: f64 },
    /// `x_1 = 1`, `x_2 = second`, tail as above.
    DenseOffset {
        scale: f64,
        #[serde(default = "default_second")]
        second: f64,
    },
    /// `x_j = ratio * j^-delta`
    Decaying { ratio: f64, delta: f64 },
}

fn default_second() -> f64 {
    -2.0 / 3.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    Gaussian,
    /// Student t with 6 degrees of freedom rescaled to unit variance.
    StudentT6,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.05
}
fn default_reps() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p: usize,
    /// Sample size of each arm.
    pub n: usize,
    pub coefficients: CoefficientRule,
    pub loading: LoadingRule,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Covariance of the non-intercept columns is `rho^(1 + |j - l|)`.
    #[serde(default = "default_rho")]
    pub rho_base: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Use the direction with the additional design-row constraint.
    #[serde(default)]
    pub relaxed: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HitsError::Config(m));
        if self.p < 2 {
            return fail(format!("p must be at least 2, got {}", self.p));
        }
        if self.n < 10 {
            return fail(format!("n must be at least 10, got {}", self.n));
        }
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if !(self.rho_base > 0.0 && self.rho_base < 1.0) {
            return fail(format!("rho_base must lie in (0, 1), got {}", self.rho_base));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match self.loading {
            LoadingRule::DenseShrunk { scale } | LoadingRule::DenseNull { scale } | LoadingRule::DenseOffset { scale, .. }
                if !(scale > 0.0 && scale.is_finite()) =>
            {
                return fail(format!("loading scale must be positive, got {scale}"));
            }
            LoadingRule::Decaying { ratio, delta } if !(ratio > 0.0 && ratio.is_finite() && delta >= 0.0) => {
                return fail(format!("invalid decaying loading (ratio {ratio}, delta {delta})"));
            }
            _ => {}
        }
        match self.coefficients {
            CoefficientRule::Decaying { delta1 } if !(delta1 >= 0.0 && delta1.is_finite()) => {
                fail(format!("delta1 must be nonnegative, got {delta1}"))
            }
            CoefficientRule::CappedL1 { delta2 } if !delta2.is_finite() => fail(format!("delta2 must be finite, got {delta2}")),
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(text).map_err(|e| HitsError::Config(format!("invalid scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Dense alternative rows: intercept and second coordinate set, shrunk tail.
    pub fn table2_row(scale: f64, n: usize) -> Self {
        Self::dense(LoadingRule::DenseOffset { scale, second: default_second() }, n)
    }

    /// Dense null rows: second coordinate solved for a zero contrast.
    pub fn table3_row(scale: f64, n: usize) -> Self {
        Self::dense(LoadingRule::DenseNull { scale }, n)
    }

    fn dense(loading: LoadingRule, n: usize) -> Self {
        Self {
            p: 501,
            n,
            coefficients: CoefficientRule::ExactSparse,
            loading,
            sigma: 1.0,
            rho_base: 0.5,
            reps: default_reps(),
            seed: 0,
            alpha: 0.05,
            noise: NoiseModel::Gaussian,
            relaxed: false,
        }
    }
}

/// Parses presets of the form `S=0.1,n=400`.
pub fn parse_row_spec(spec: &str) -> Result<(f64, usize)> {
    let mut scale = None;
    let mut n = None;
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| HitsError::Config(format!("expected key=value in '{part}'")))?;
        let bad = || HitsError::Config(format!("invalid value in '{part}'"));
        match k.trim() {
            "S" | "s" | "scale" => scale = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            "n" => n = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
            other => return Err(HitsError::Config(format!("unknown preset key '{other}'"))),
        }
    }
    match (scale, n) {
        (Some(s), Some(n)) => Ok((s, n)),
        _ => Err(HitsError::Config(format!("preset '{spec}' needs both S and n"))),
    }
}
