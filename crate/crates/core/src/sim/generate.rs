use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, StudentT};

use super::scenario::{CoefficientRule, LoadingRule, NoiseModel};
use crate::error::{HitsError, Result};

/// `rho^(1 + |j - l|)` on a `dim x dim` grid.
pub fn covariance(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |j, l| rho.powi(1 + j.abs_diff(l) as i32))
}

/// Draws designs whose first column is an intercept and whose remaining
/// columns are Gaussian with covariance [`covariance`]. The Cholesky factor
/// is computed once per generator.
#[derive(Debug, Clone)]
pub struct DesignGenerator {
    p: usize,
    /// Upper-triangular `L'` so that `Z L'` has rows `~ N(0, Sigma)`.
    factor_t: DMatrix<f64>,
}

impl DesignGenerator {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        if p < 2 {
            return Err(HitsError::Config(format!("p must be at least 2, got {p}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(HitsError::Config(format!("rho_base must lie in (0, 1), got {rho}")));
        }
        let chol = covariance(p - 1, rho)
            .cholesky()
            .ok_or_else(|| HitsError::Config("covariance is not positive definite".into()))?;
        Ok(Self {
            p,
            factor_t: chol.l().transpose(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let z = DMatrix::from_fn(n, self.p - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tail = z * &self.factor_t;
        let mut x = DMatrix::zeros(n, self.p);
        x.column_mut(0).fill(1.0);
        x.columns_mut(1, self.p - 1).copy_from(&tail);
        x
    }
}

/// Coefficient vectors for both arms.
pub fn gen_coefficients(rule: CoefficientRule, p: usize, n: usize) -> (DVector<f64>, DVector<f64>) {
    // 1-based index j lives at slot j - 1.
    let mut b1 = DVector::zeros(p);
    let mut b2 = DVector::zeros(p);
    b1[0] = -0.1;
    b2[0] = -0.5;
    for j in 2..=11.min(p) {
        b1[j - 1] = -0.4 * (j - 1) as f64;
    }
    for j in 2..=6.min(p) {
        b2[j - 1] = 0.2 * (j - 1) as f64;
    }
    match rule {
        CoefficientRule::ExactSparse => {}
        CoefficientRule::Decaying { delta1 } => {
            for j in 12..=p {
                b1[j - 1] = ((j - 1) as f64).powf(-delta1);
            }
            for j in 7..=p {
                b2[j - 1] = 0.5 * ((j - 1) as f64).powf(-delta1);
            }
        }
        CoefficientRule::CappedL1 { delta2 } => {
            let lambda0 = (2.0 * (p as f64).ln() / n as f64).sqrt();
            for j in 11..=50.min(p) {
                b1[j - 1] = delta2 * lambda0;
                b2[j - 1] = b1[j - 1] / 2.0;
            }
        }
    }
    (b1, b2)
}

/// Loading vector and its exact contrast `x'(beta1 - beta2)`.
///
/// `basis` is only read by the dense rules; it must have length `p`.
pub fn gen_loading(rule: LoadingRule, basis: &DVector<f64>, beta1: &DVector<f64>, beta2: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let p = beta1.len();
    let d = beta1 - beta2;
    let shrunk = |scale: f64| DVector::from_fn(p, |j, _| if j >= 11 { scale * basis[j] } else { 0.0 });
    let x = match rule {
        LoadingRule::DenseShrunk { scale } => shrunk(scale),
        LoadingRule::DenseOffset { scale, second } => {
            let mut x = shrunk(scale);
            x[0] = 1.0;
            x[1] = second;
            x
        }
        LoadingRule::DenseNull { scale } => {
            let mut x = shrunk(scale);
            x[0] = 1.0;
            if d[1] == 0.0 {
                return Err(HitsError::Config("null loading needs beta1_2 != beta2_2".into()));
            }
            let rest = x.dot(&d);
            x[1] = -rest / d[1];
            x
        }
        LoadingRule::Decaying { ratio, delta } => DVector::from_fn(p, |j, _| ratio * ((j + 1) as f64).powf(-delta)),
    };
    let delta_true = x.dot(&d);
    Ok((x, delta_true))
}

/// Noise vector of length `n` with standard deviation `sigma`.
pub fn gen_noise<R: Rng + ?Sized>(model: NoiseModel, sigma: f64, n: usize, rng: &mut R) -> DVector<f64> {
    match model {
        NoiseModel::Gaussian => DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal)),
        NoiseModel::StudentT6 => {
            let t = StudentT::new(6.0).expect("valid degrees of freedom");
            let unit = (2.0f64 / 3.0).sqrt();
            DVector::from_fn(n, |_, _| sigma * unit * rng.sample(t))
        }
    }
}
