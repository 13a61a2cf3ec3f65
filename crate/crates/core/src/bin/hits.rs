use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hits::data::{design_stats, load_csv, load_single_csv, read_loading, CsvSchema, TwoGroupDataset};
use hits::inference::{ate_inference, ite, predict_inference, ContrastInference, InferenceConfig};
use hits::lasso::{lasso_fit, LassoConfig};
use hits::projection::ProjectionConfig;
use hits::sim::{parse_row_spec, run_monte_carlo, Estimator, RunOptions, Scenario};
use hits::sparse::{sparsity_assisted_test, SparsityConfig};
use hits::{HitsError, Result};

#[derive(Parser)]
#[command(name = "hits", version, about = "Debiased inference for linear contrasts in high-dimensional two-arm linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Lasso in each arm and report coefficients and noise levels.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Inference for x'(beta1 - beta2) at a covariate profile x.
    Ite {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        loading: LoadingArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Inference for mean(X2)'(beta2 - beta1), the effect averaged over arm 2.
    Ate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// One-sample inference for x'beta; any arm column is ignored.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        loading: LoadingArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Truncated-loading test with coordinatewise tail screening.
    SparseTest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        loading: LoadingArgs,
        /// Upper bound on the number of non-negligible coefficients.
        #[arg(long = "s-u")]
        s_u: usize,
        /// Number of leading loading entries kept (default floor(s_u^2 log p)).
        #[arg(long)]
        q: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo study; writes <output>.csv and <output>.json.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    /// Arm column with values 1 and 2.
    #[arg(long, default_value = "arm")]
    arm: String,
    /// Comma-separated covariate columns (default: all remaining columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Prepend an intercept column; loadings then include it as entry 1.
    #[arg(long)]
    intercept: bool,
}

#[derive(Args)]
struct LoadingArgs {
    /// Inline JSON array, a .json file, or a one-column CSV file.
    #[arg(long)]
    loading: String,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Projection constraint multiplier c in c sqrt(log p / n).
    #[arg(long)]
    lambda_mult: Option<f64>,
    /// Lasso penalty multiplier A.
    #[arg(long = "a")]
    a: Option<f64>,
    /// Choose A by k-fold cross-validation.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Bound on |X u| for the heavy-tail variant.
    #[arg(long)]
    tau_mult: Option<f64>,
    /// Use the heavy-tail variant of the projection direction.
    #[arg(long)]
    relaxed: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the JSON result here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the JSON result on stdout instead of the summary line.
    #[arg(long)]
    json: bool,
    /// Include solver diagnostics in the JSON result.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with_all = ["table2_row", "table3_row"])]
    scenario: Option<PathBuf>,
    /// Dense alternative preset, e.g. "S=0.1,n=400".
    #[arg(long, conflicts_with = "table3_row")]
    table2_row: Option<String>,
    /// Dense null preset, e.g. "S=0.2,n=400".
    #[arg(long)]
    table3_row: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "HITS_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated subset of hits,lasso,deb.
    #[arg(long, value_delimiter = ',', default_value = "hits,lasso")]
    estimators: Vec<String>,
    /// Output prefix for the CSV and JSON reports.
    #[arg(long, default_value = "hits_sim")]
    output: PathBuf,
    /// Also write per-replication estimates to this CSV file.
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
    /// Record wall-clock time per estimator (reports are then not reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    lambda_mult: Option<f64>,
    #[arg(long = "a")]
    a: Option<f64>,
    #[arg(long)]
    tau_mult: Option<f64>,
}

fn inference_config(lambda_mult: Option<f64>, a: Option<f64>, cv_folds: Option<usize>, tau_mult: Option<f64>, relaxed: bool) -> Result<InferenceConfig> {
    let mut lasso = LassoConfig { cv_folds, ..LassoConfig::default() };
    if let Some(a) = a {
        lasso.a = a;
    }
    let mut projection = ProjectionConfig::default();
    if let Some(c) = lambda_mult {
        projection.lambda_mult = c;
    }
    if let Some(t) = tau_mult {
        projection.tau_mult = t;
    }
    lasso.validate()?;
    projection.validate()?;
    Ok(InferenceConfig { lasso, projection, relaxed })
}

impl SolverArgs {
    fn config(&self) -> Result<InferenceConfig> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HitsError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        inference_config(self.lambda_mult, self.a, self.cv_folds, self.tau_mult, self.relaxed)
    }
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            response: self.response.clone(),
            arm: self.arm.clone(),
            covariates: self.covariates.clone(),
            intercept: self.intercept,
        }
    }

    fn two_arm(&self) -> Result<TwoGroupDataset> {
        load_csv(&self.data, &self.schema())
    }
}

/// Prints a line to stdout; a closed pipe is not an error.
fn say(line: &str) -> Result<()> {
    match writeln!(io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(HitsError::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| HitsError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit(out: &OutputArgs, value: &Value, summary: String) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    if let Some(path) = &out.output {
        write_file(path, &text)?;
    }
    say(if out.json { &text } else { &summary })
}

fn summary(label: &str, r: &ContrastInference) -> String {
    let decision = if r.no_decision {
        "no decision (zero variance)"
    } else if r.reject {
        "reject H0: contrast <= 0"
    } else {
        "do not reject H0: contrast <= 0"
    };
    format!(
        "{label}: estimate {:.4}, {:.0}% CI [{:.4}, {:.4}], z = {:.3}, {decision} at alpha = {}",
        r.delta_hat,
        100.0 * (1.0 - r.alpha),
        r.ci_lower,
        r.ci_upper,
        r.z_stat,
        r.alpha
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { data, solver, out } => {
            let cfg = solver.config()?;
            let ds = data.two_arm()?;
            let mut arms = Vec::new();
            let mut line = Vec::new();
            for g in [&ds.group1, &ds.group2] {
                let fit = lasso_fit(g, &design_stats(g), &cfg.lasso)?;
                let nonzero = fit.beta_hat.iter().filter(|b| **b != 0.0).count();
                line.push(format!("arm {}: n = {}, {} nonzero, sigma2 = {:.4}", g.label(), g.n(), nonzero, fit.sigma2_hat));
                let mut v = json!({
                    "arm": g.label(),
                    "n": g.n(),
                    "beta_hat": fit.beta_hat.as_slice(),
                    "sigma2_hat": fit.sigma2_hat,
                });
                if out.diagnostics {
                    v["diagnostics"] = json!({
                        "lambda_used": fit.lambda_used.as_slice(),
                        "objective": fit.objective,
                        "iterations": fit.iterations,
                        "converged": fit.converged,
                    });
                }
                arms.push(v);
            }
            emit(&out, &json!({ "p": ds.p(), "arms": arms }), line.join("; "))
        }
        Command::Ite { data, loading, solver, out } => {
            let cfg = solver.config()?;
            let ds = data.two_arm()?.with_loading(read_loading(&loading.loading)?)?;
            let r = ite(&ds, &cfg, solver.alpha)?;
            emit(&out, &r.to_json(out.diagnostics), summary("ITE", &r.inference))
        }
        Command::Ate { data, solver, out } => {
            let cfg = solver.config()?;
            let r = ate_inference(&data.two_arm()?, &cfg, solver.alpha)?;
            emit(&out, &r.to_json(out.diagnostics), summary("ATE", &r.inference))
        }
        Command::Predict { data, loading, solver, out } => {
            let cfg = solver.config()?;
            let g = load_single_csv(&data.data, &data.response, data.covariates.as_deref(), data.intercept, Some(&data.arm))?;
            let x = read_loading(&loading.loading)?;
            let (r, arm) = predict_inference(&g, &x, &cfg, solver.alpha)?;
            let diag = if out.diagnostics { arm.diagnostics() } else { Value::Null };
            emit(&out, &r.to_json(diag), summary("prediction", &r))
        }
        Command::SparseTest { data, loading, s_u, q, solver, out } => {
            let cfg = solver.config()?;
            let ds = data.two_arm()?.with_loading(read_loading(&loading.loading)?)?;
            let p = ds.p();
            let r = sparsity_assisted_test(&ds, &SparsityConfig { s_u, q, alpha: solver.alpha }, &cfg)?;
            if r.q_clamped {
                eprintln!("warning: q exceeds p = {p}; using q = {p}");
            }
            let line = format!(
                "sparse test: estimate {:.4}, CI [{:.4}, {:.4}], q = {}, |G1| = {}, S = {:.4}, {}",
                r.delta_check,
                r.ci_lower,
                r.ci_upper,
                r.q_used,
                r.g1.len(),
                r.s_term,
                if r.reject { "reject H0: contrast <= 0" } else { "do not reject H0: contrast <= 0" }
            );
            emit(&out, &serde_json::to_value(&r).expect("result serializes"), line)
        }
        Command::Simulate(args) => simulate(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut sc = if let Some(path) = &args.scenario {
        let text = fs::read_to_string(path).map_err(|source| HitsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text)?
    } else if let Some(spec) = &args.table2_row {
        let (s, n) = parse_row_spec(spec)?;
        Scenario::table2_row(s, n)
    } else if let Some(spec) = &args.table3_row {
        let (s, n) = parse_row_spec(spec)?;
        Scenario::table3_row(s, n)
    } else {
        return Err(HitsError::Config("one of --scenario, --table2-row or --table3-row is required".into()));
    };
    if let Some(r) = args.reps {
        sc.reps = r;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    sc.validate()?;
    if args.threads == Some(0) {
        return Err(HitsError::Config("--threads must be at least 1".into()));
    }
    let estimators = args.estimators.iter().map(|s| Estimator::parse(s.trim())).collect::<Result<Vec<_>>>()?;
    let opts = RunOptions {
        estimators,
        inference: inference_config(args.lambda_mult, args.a, None, args.tau_mult, false)?,
        threads: args.threads,
        timing: args.timing,
        deb_lambda: None,
    };
    let report = run_monte_carlo(&sc, &opts)?;

    let prefix = args.output.display().to_string();
    write_file(Path::new(&format!("{prefix}.csv")), &report.to_csv()?)?;
    write_file(Path::new(&format!("{prefix}.json")), &report.to_json())?;
    if let Some(path) = &args.emit_plot_data {
        write_file(path, &report.plot_data_csv()?)?;
    }
    for row in &report.rows {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        say(&format!(
            "{:<6} ERR {:>6}  coverage {:>6}  len {:>6}  RMSE {:.3}  bias {:+.3}  SE {:.3}",
            row.estimator.name(),
            opt(row.err),
            opt(row.coverage),
            opt(row.mean_len),
            row.rmse,
            row.bias,
            row.se
        ))?;
    }
    if report.failures > 0 {
        eprintln!("{} of {} replications failed and were excluded", report.failures, sc.reps);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let HitsError::SolverFailure(slacks) = &e {
                eprintln!("{}", json!({ "error": "solver_failure", "slacks": slacks }));
            }
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
