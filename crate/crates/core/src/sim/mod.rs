//! Scenario generators, the Monte Carlo engine and report aggregation.

pub mod generate;
pub mod monte_carlo;
pub mod report;
pub mod scenario;

pub use generate::{covariance, gen_coefficients, gen_loading, gen_noise, DesignGenerator};
pub use monte_carlo::{run_monte_carlo, run_replication, Estimator, Outcome, RepRecord, RunOptions};
pub use report::{asymptotic_power, ks_critical_1pct, ks_statistic_normal, EstimatorRow, SimReport};
pub use scenario::{parse_row_spec, CoefficientRule, LoadingRule, NoiseModel, Scenario};
