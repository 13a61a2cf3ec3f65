use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{gen_coefficients, gen_loading, gen_noise, DesignGenerator};
use super::report::SimReport;
use super::scenario::Scenario;
use crate::data::{design_stats, GroupSample};
use crate::error::{HitsError, Result};
use crate::inference::{debias_with, direction_for, ContrastInference, ContrastKind, InferenceConfig};
use crate::lasso::lasso_fit;
use crate::normal::upper_quantile;
use crate::projection::ProjectionConfig;
use crate::sparse::coordinate_directions;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "HITS")]
    Hits,
    /// Plug-in `x'(b1 - b2)` from the Lasso fits.
    Lasso,
    /// Plug-in of coordinatewise debiased coefficient vectors.
    Deb,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hits => "HITS",
            Self::Lasso => "Lasso",
            Self::Deb => "Deb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hits" => Ok(Self::Hits),
            "lasso" => Ok(Self::Lasso),
            "deb" => Ok(Self::Deb),
            _ => Err(HitsError::Config(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub estimators: Vec<Estimator>,
    pub inference: InferenceConfig,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Record wall-clock time per estimator. Off by default so that reports
    /// are reproducible byte for byte.
    pub timing: bool,
    /// Constraint level of the coordinatewise directions used by Deb. `None`
    /// selects `z_{0.1/p^2} / sqrt(n)`, the customary choice for
    /// coordinatewise debiasing.
    pub deb_lambda: Option<f64>,
}

impl RunOptions {
    fn deb_projection(&self, p: usize, n: usize, base: &ProjectionConfig) -> ProjectionConfig {
        let lambda = self
            .deb_lambda
            .unwrap_or_else(|| upper_quantile(0.1 / (p * p) as f64) / (n as f64).sqrt());
        base.with_lambda(lambda)
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            estimators: vec![Estimator::Hits, Estimator::Lasso],
            inference: InferenceConfig::default(),
            threads: None,
            timing: false,
            deb_lambda: None,
        }
    }
}

/// One estimator's result in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub estimate: f64,
    /// Absent for the plug-in Lasso, which carries no interval.
    pub inference: Option<ContrastInference>,
    pub runtime_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub delta_true: f64,
    pub outcomes: Vec<(Estimator, Outcome)>,
}

impl RepRecord {
    pub fn get(&self, e: Estimator) -> Option<&Outcome> {
        self.outcomes.iter().find(|(k, _)| *k == e).map(|(_, o)| o)
    }
}

struct Stopwatch(Option<Instant>);

impl Stopwatch {
    fn start(on: bool) -> Self {
        Self(on.then(Instant::now))
    }

    fn secs(&self) -> Option<f64> {
        self.0.map(|t| t.elapsed().as_secs_f64())
    }
}

/// Replication `rep` of the scenario. Its random stream depends only on
/// `(seed, rep)`.
pub fn run_replication(
    sc: &Scenario,
    generator: &DesignGenerator,
    coefficients: &(DVector<f64>, DVector<f64>),
    opts: &RunOptions,
    rep: usize,
) -> Result<RepRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(rep as u64);
    let (b1, b2) = coefficients;

    let basis = generator.sample(1, &mut rng).row(0).transpose();
    let (x, delta_true) = gen_loading(sc.loading, &basis, b1, b2)?;
    let mut arm = |beta: &DVector<f64>, label| {
        let design = generator.sample(sc.n, &mut rng);
        let noise = gen_noise(sc.noise, sc.sigma, sc.n, &mut rng);
        let y = &design * beta + noise;
        GroupSample::new(design, y, label)
    };
    let g = [arm(b1, 1)?, arm(b2, 2)?];

    let cfg = InferenceConfig { relaxed: sc.relaxed || opts.inference.relaxed, ..opts.inference };
    let clock = Stopwatch::start(opts.timing);
    let stats = [design_stats(&g[0]), design_stats(&g[1])];
    let fits = [lasso_fit(&g[0], &stats[0], &cfg.lasso)?, lasso_fit(&g[1], &stats[1], &cfg.lasso)?];
    let lasso_secs = clock.secs();

    let mut outcomes = Vec::with_capacity(opts.estimators.len());
    for &est in &opts.estimators {
        let clock = Stopwatch::start(opts.timing);
        let outcome = match est {
            Estimator::Lasso => Outcome {
                estimate: x.dot(&(&fits[0].beta_hat - &fits[1].beta_hat)),
                inference: None,
                runtime_secs: None,
            },
            Estimator::Hits => {
                let mut parts = [(0.0, 0.0); 2];
                for k in 0..2 {
                    let dir = direction_for(&g[k], &stats[k], &x, &cfg)?;
                    parts[k] = (
                        debias_with(&fits[k], &dir.u, &g[k], &x),
                        fits[k].sigma2_hat * dir.variance_quadform / sc.n as f64,
                    );
                }
                let inf = ContrastInference::from_estimate(
                    parts[0].0 - parts[1].0,
                    parts[0].1 + parts[1].1,
                    sc.alpha,
                    ContrastKind::Ite,
                )?;
                Outcome {
                    estimate: inf.delta_hat,
                    inference: Some(inf),
                    runtime_secs: None,
                }
            }
            Estimator::Deb => {
                let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
                let deb_cfg = opts.deb_projection(sc.p, sc.n, &cfg.projection);
                let mut parts = [(0.0, 0.0); 2];
                for k in 0..2 {
                    // x' b~ = x' b^ + w' X' r / n with w = sum_j x_j u_j.
                    let dirs = coordinate_directions(&stats[k], &support, &deb_cfg)?;
                    let mut w = DVector::zeros(x.len());
                    for (&j, d) in support.iter().zip(&dirs) {
                        w.axpy(x[j], &d.u, 1.0);
                    }
                    let quad = w.dot(&(&stats[k].gram * &w));
                    parts[k] = (
                        debias_with(&fits[k], &w, &g[k], &x),
                        fits[k].sigma2_hat * quad / sc.n as f64,
                    );
                }
                let inf = ContrastInference::from_estimate(
                    parts[0].0 - parts[1].0,
                    parts[0].1 + parts[1].1,
                    sc.alpha,
                    ContrastKind::Ite,
                )?;
                Outcome {
                    estimate: inf.delta_hat,
                    inference: Some(inf),
                    runtime_secs: None,
                }
            }
        };
        let runtime_secs = match (clock.secs(), lasso_secs) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        outcomes.push((est, Outcome { runtime_secs, ..outcome }));
    }
    Ok(RepRecord { rep, delta_true, outcomes })
}

/// Runs every replication and aggregates in replication order.
///
/// Replications that fail are excluded and counted; more than
/// [`MAX_FAILURE_RATE`] of them fails the whole run.
pub fn run_monte_carlo(sc: &Scenario, opts: &RunOptions) -> Result<SimReport> {
    sc.validate()?;
    opts.inference.lasso.validate()?;
    opts.inference.projection.validate()?;
    let mut estimators = opts.estimators.clone();
    estimators.sort_unstable();
    estimators.dedup();
    if estimators.is_empty() {
        return Err(HitsError::Config("no estimators requested".into()));
    }
    let opts = RunOptions { estimators, ..opts.clone() };

    let generator = DesignGenerator::new(sc.p, sc.rho_base)?;
    let coefficients = gen_coefficients(sc.coefficients, sc.p, sc.n);
    let work = || -> Vec<Result<RepRecord>> {
        (0..sc.reps)
            .into_par_iter()
            .map(|rep| run_replication(sc, &generator, &coefficients, &opts, rep))
            .collect()
    };
    let results = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HitsError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut records = Vec::with_capacity(sc.reps);
    let mut failures = 0;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(_) => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * sc.reps as f64 || records.is_empty() {
        return Err(HitsError::SimulationFailed { failed: failures, reps: sc.reps });
    }
    Ok(SimReport::from_records(*sc, &opts.estimators, records, failures))
}
