use serde::Serialize;

use super::monte_carlo::{Estimator, RepRecord};
use super::scenario::Scenario;
use crate::error::{HitsError, Result};
use crate::normal::{cdf, upper_quantile};

/// Aggregate performance of one estimator.
///
/// `se` is the population standard deviation of the errors, so that
/// `rmse^2 = bias^2 + se^2` holds exactly up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub estimator: Estimator,
    pub replications: usize,
    pub err: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_len: Option<f64>,
    pub rmse: f64,
    pub bias: f64,
    pub se: f64,
    pub mean_runtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub scenario: Scenario,
    pub version: &'static str,
    pub completed: usize,
    pub failures: usize,
    pub mean_delta_true: f64,
    /// Average asymptotic rejection probability `1 - Phi(z_alpha - delta / sqrt(V))`
    /// over the HITS replications.
    pub predicted_err: Option<f64>,
    pub rows: Vec<EstimatorRow>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Asymptotic power of the one-sided test at true contrast `delta`.
pub fn asymptotic_power(delta: f64, v: f64, alpha: f64) -> f64 {
    1.0 - cdf(upper_quantile(alpha) - delta / v.sqrt())
}

impl SimReport {
    pub fn from_records(scenario: Scenario, estimators: &[Estimator], records: Vec<RepRecord>, failures: usize) -> Self {
        let rows = estimators
            .iter()
            .map(|&e| {
                let outcomes: Vec<_> = records.iter().filter_map(|r| r.get(e).map(|o| (r.delta_true, o))).collect();
                let errors: Vec<f64> = outcomes.iter().map(|(t, o)| o.estimate - t).collect();
                let bias = mean(errors.iter().copied()).unwrap_or(f64::NAN);
                let se = mean(errors.iter().map(|d| (d - bias).powi(2))).unwrap_or(f64::NAN).sqrt();
                let rmse = mean(errors.iter().map(|d| d * d)).unwrap_or(f64::NAN).sqrt();
                let inferences: Vec<_> = outcomes
                    .iter()
                    .filter_map(|(t, o)| o.inference.as_ref().map(|i| (*t, i)))
                    .collect();
                let indicator = |b: bool| if b { 1.0 } else { 0.0 };
                EstimatorRow {
                    estimator: e,
                    replications: outcomes.len(),
                    err: mean(inferences.iter().map(|(_, i)| indicator(i.reject))),
                    coverage: mean(inferences.iter().map(|(t, i)| indicator(i.covers(*t)))),
                    mean_len: mean(inferences.iter().map(|(_, i)| i.ci_length())),
                    rmse,
                    bias,
                    se,
                    mean_runtime: if outcomes.iter().all(|(_, o)| o.runtime_secs.is_some()) {
                        mean(outcomes.iter().filter_map(|(_, o)| o.runtime_secs))
                    } else {
                        None
                    },
                }
            })
            .collect();
        let predicted_err = mean(records.iter().filter_map(|r| {
            let i = r.get(Estimator::Hits)?.inference.as_ref()?;
            (i.v_hat > 0.0).then(|| asymptotic_power(r.delta_true, i.v_hat, i.alpha))
        }));
        Self {
            scenario,
            version: env!("CARGO_PKG_VERSION"),
            completed: records.len(),
            failures,
            mean_delta_true: mean(records.iter().map(|r| r.delta_true)).unwrap_or(f64::NAN),
            predicted_err,
            rows,
            records,
        }
    }

    pub fn row(&self, e: Estimator) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == e)
    }

    /// One CSV row per estimator.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| HitsError::Config(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| HitsError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-replication estimates and intervals, for external plotting.
    pub fn plot_data_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Line {
            rep: usize,
            estimator: Estimator,
            delta_true: f64,
            estimate: f64,
            ci_lower: Option<f64>,
            ci_upper: Option<f64>,
            reject: Option<bool>,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            for (e, o) in &r.outcomes {
                w.serialize(Line {
                    rep: r.rep,
                    estimator: *e,
                    delta_true: r.delta_true,
                    estimate: o.estimate,
                    ci_lower: o.inference.as_ref().map(|i| i.ci_lower),
                    ci_upper: o.inference.as_ref().map(|i| i.ci_upper),
                    reject: o.inference.as_ref().map(|i| i.reject),
                })
                .map_err(|e| HitsError::Config(format!("csv: {e}")))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| HitsError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Studentized errors `(estimate - truth) / sqrt(V)` of one estimator.
    pub fn studentized(&self, e: Estimator) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| {
                let i = r.get(e)?.inference.as_ref()?;
                (i.v_hat > 0.0).then(|| (i.delta_hat - r.delta_true) / i.v_hat.sqrt())
            })
            .collect()
    }
}

/// Kolmogorov-Smirnov distance between the sample and `N(0, 1)`.
pub fn ks_statistic_normal(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic with the
/// Stephens small-sample adjustment.
pub fn ks_critical_1pct(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.627_62 / (s + 0.12 + 0.11 / s)
}
