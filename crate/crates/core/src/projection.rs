//! Projection directions for bias correction.
//!
//! All three variants are computed through their Lagrangian duals, which are
//! l1-penalized quadratics `min_v (1/4) v'Kv + b'v + sum_j r_j |v_j|` solved
//! by cyclic coordinate descent with a maintained gradient `g = Kv`. For the
//! variance-enhanced direction `K = H' S H` with `H = [x/||x||, I]` and
//! `b = H'x`, and the primal direction is recovered as `u = -(1/2) H v`.
//!
//! Every returned direction has been checked for primal feasibility. When the
//! check fails the bias tolerance `lambda` is inflated geometrically and the
//! dual is re-solved.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{standardize_loading, DesignStats, GroupSample};
use crate::error::{HitsError, Result, SolverSlacks};
use crate::lasso::{log_p, soft_threshold};

/// Feasibility slack accepted on top of the nominal constraint level.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// `c` in `lambda_k = c sqrt(log p / n_k)`.
    pub lambda_mult: f64,
    /// Fixed `lambda_k`, overriding `lambda_mult` when set.
    pub lambda: Option<f64>,
    pub escalation_factor: f64,
    pub max_escalations: usize,
    /// Relative objective decrease over a sweep below which the dual is converged.
    pub tol: f64,
    pub max_iter: usize,
    /// `tau_k = tau_mult sqrt(log n_k)` for the relaxed direction.
    pub tau_mult: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            // Start small and let escalation raise it when infeasible.
            lambda_mult: 0.3,
            lambda: None,
            escalation_factor: 1.25,
            max_escalations: 8,
            tol: 1e-8,
            max_iter: 20_000,
            tau_mult: 2.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lambda_mult) || !positive(self.tol) || !positive(self.tau_mult) {
            return Err(HitsError::Config(
                "lambda_mult, tol and tau_mult must be positive".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if !positive(l) {
                return Err(HitsError::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.escalation_factor > 1.0) {
            return Err(HitsError::Config("escalation_factor must exceed 1".into()));
        }
        if self.max_iter == 0 {
            return Err(HitsError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..self
        }
    }

    /// Initial `lambda_k` for a design with `p` columns and `n` rows.
    pub fn initial_lambda(&self, p: usize, n: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| self.lambda_mult * (log_p(p) / n as f64).sqrt())
    }

    pub fn tau(&self, n: usize) -> f64 {
        self.tau_mult * (n.max(2) as f64).ln().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Baseline,
    Enhanced,
    Relaxed,
}

/// Which dual-to-primal map produced the accepted direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryConvention {
    /// `u = -(1/2) H v`
    NegHalf,
    /// `u = H v`
    Unscaled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionDirection {
    pub kind: DirectionKind,
    pub u: DVector<f64>,
    /// Dual solution. Coordinate 0 multiplies `x/||x||`; for the baseline
    /// direction it is always zero. The relaxed variant appends `n` design-row
    /// multipliers.
    pub dual_v: DVector<f64>,
    pub dual_objective: f64,
    pub slack_inf: f64,
    pub slack_quad: f64,
    pub slack_linf_design: Option<f64>,
    pub lambda_final: f64,
    pub tau: Option<f64>,
    /// `u' S u`.
    pub variance_quadform: f64,
    pub escalations: usize,
    pub iterations: usize,
    pub convention: RecoveryConvention,
}

impl ProjectionDirection {
    pub fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "slack_inf": self.slack_inf,
            "slack_quad": self.slack_quad,
            "slack_linf_design": self.slack_linf_design,
            "lambda_final": self.lambda_final,
            "tau": self.tau,
            "variance_quadform": self.variance_quadform,
            "escalations": self.escalations,
            "iterations": self.iterations,
            "convention": self.convention,
            "dual_objective": self.dual_objective,
        })
    }
}

/// Column access to the dual Hessian `K`.
trait DualForm {
    fn dim(&self) -> usize;
    fn diag(&self, j: usize) -> f64;
    /// `g += delta * K[:, j]`
    fn add_column(&self, j: usize, delta: f64, g: &mut DVector<f64>);
}

/// `K = S` (baseline: constraints on `S u - x` only).
struct GramForm<'a> {
    gram: &'a DMatrix<f64>,
}

impl DualForm for GramForm<'_> {
    fn dim(&self) -> usize {
        self.gram.nrows()
    }
    fn diag(&self, j: usize) -> f64 {
        self.gram[(j, j)]
    }
    fn add_column(&self, j: usize, delta: f64, g: &mut DVector<f64>) {
        g.axpy(delta, &self.gram.column(j), 1.0);
    }
}

/// `K = H' S H` with `H = [x_unit, I]`, never materialized.
struct EnhancedForm<'a> {
    gram: &'a DMatrix<f64>,
    /// `S x_unit`
    sx: DVector<f64>,
    /// `x_unit' S x_unit`
    xsx: f64,
}

impl<'a> EnhancedForm<'a> {
    fn new(gram: &'a DMatrix<f64>, unit: &DVector<f64>) -> Self {
        let sx = gram * unit;
        let xsx = unit.dot(&sx);
        Self { gram, sx, xsx }
    }
}

impl DualForm for EnhancedForm<'_> {
    fn dim(&self) -> usize {
        self.gram.nrows() + 1
    }
    fn diag(&self, j: usize) -> f64 {
        if j == 0 {
            self.xsx
        } else {
            self.gram[(j - 1, j - 1)]
        }
    }
    fn add_column(&self, j: usize, delta: f64, g: &mut DVector<f64>) {
        let p = self.gram.nrows();
        if j == 0 {
            g[0] += delta * self.xsx;
            g.rows_mut(1, p).axpy(delta, &self.sx, 1.0);
        } else {
            g[0] += delta * self.sx[j - 1];
            g.rows_mut(1, p).axpy(delta, &self.gram.column(j - 1), 1.0);
        }
    }
}

struct DenseForm {
    k: DMatrix<f64>,
}

impl DualForm for DenseForm {
    fn dim(&self) -> usize {
        self.k.nrows()
    }
    fn diag(&self, j: usize) -> f64 {
        self.k[(j, j)]
    }
    fn add_column(&self, j: usize, delta: f64, g: &mut DVector<f64>) {
        g.axpy(delta, &self.k.column(j), 1.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DualStatus {
    Converged,
    MaxIter,
    Unbounded,
}

struct DualSolution {
    v: DVector<f64>,
    g: DVector<f64>,
    objective: f64,
    iterations: usize,
    status: DualStatus,
}

/// Largest normalized violation of the dual optimality conditions.
fn kkt_violation(v: &DVector<f64>, g: &DVector<f64>, b: &DVector<f64>, r: &DVector<f64>, skip: &[bool]) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..v.len() {
        if skip[j] {
            continue;
        }
        let grad = 0.5 * g[j] + b[j];
        let viol = if v[j] != 0.0 {
            (grad + r[j] * v[j].signum()).abs()
        } else {
            (grad.abs() - r[j]).max(0.0)
        };
        worst = worst.max(viol / r[j].max(f64::MIN_POSITIVE));
    }
    worst
}

fn dual_objective(v: &DVector<f64>, g: &DVector<f64>, b: &DVector<f64>, r: &DVector<f64>) -> f64 {
    0.25 * v.dot(g) + b.dot(v) + r.component_mul(&v.abs()).sum()
}

/// Recomputes `K v` from scratch, touching only nonzero coordinates.
fn exact_gradient(form: &dyn DualForm, v: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(form.dim());
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            form.add_column(j, vj, &mut g);
        }
    }
    g
}

fn coordinate_descent(
    form: &dyn DualForm,
    b: &DVector<f64>,
    r: &DVector<f64>,
    cfg: &ProjectionConfig,
    start: Option<&DVector<f64>>,
) -> DualSolution {
    let dim = form.dim();
    let diag: Vec<f64> = (0..dim).map(|j| form.diag(j)).collect();
    let skip: Vec<bool> = diag.iter().map(|&d| !(d > 0.0)).collect();
    let mut v = match start {
        Some(s) => {
            let mut s = s.clone();
            for j in 0..dim {
                if skip[j] {
                    s[j] = 0.0;
                }
            }
            s
        }
        None => DVector::zeros(dim),
    };
    let mut g = exact_gradient(form, &v);
    let mut objective = dual_objective(&v, &g, b, r);
    let blowup = 1e12 * (1.0 + b.amax());

    let mut iterations = 0;
    let mut status = DualStatus::MaxIter;
    while iterations < cfg.max_iter {
        iterations += 1;
        for j in 0..dim {
            if skip[j] {
                continue;
            }
            let kjj = diag[j];
            let old = v[j];
            // Partial objective in v_j: (kjj/4) v_j^2 + (c/2 + b_j) v_j + r_j |v_j|,
            // with c = (K v)_j - kjj v_j.
            let lin = 0.5 * (g[j] - kjj * old) + b[j];
            let new = -2.0 * soft_threshold(lin, r[j]) / kjj;
            let delta = new - old;
            if delta != 0.0 {
                v[j] = new;
                form.add_column(j, delta, &mut g);
            }
        }
        let next = dual_objective(&v, &g, b, r);
        if !next.is_finite() || v.amax() > blowup {
            status = DualStatus::Unbounded;
            objective = next;
            break;
        }
        let decrease = objective - next;
        objective = next;
        if decrease.abs() <= cfg.tol * objective.abs().max(f64::MIN_POSITIVE)
            && kkt_violation(&v, &g, b, r, &skip) <= 0.1 * FEASIBILITY_TOL
        {
            status = DualStatus::Converged;
            break;
        }
    }

    if status != DualStatus::Unbounded {
        g = exact_gradient(form, &v);
        objective = dual_objective(&v, &g, b, r);
    }
    DualSolution {
        v,
        g,
        objective,
        iterations,
        status,
    }
}

/// Everything the primal side needs from one dual solve.
struct Candidate {
    u: DVector<f64>,
    su: DVector<f64>,
    slack_inf: f64,
    slack_quad: f64,
    slack_design: Option<f64>,
}

impl Candidate {
    fn feasible(&self, check_quad: bool) -> bool {
        let ok = |s: f64| s.is_finite() && s <= 1.0 + FEASIBILITY_TOL;
        ok(self.slack_inf) && (!check_quad || ok(self.slack_quad)) && self.slack_design.map_or(true, ok)
    }
}

fn slacks(
    u: DVector<f64>,
    su: DVector<f64>,
    x: &DVector<f64>,
    norm: f64,
    lambda: f64,
    design: Option<(&DMatrix<f64>, f64)>,
) -> Candidate {
    let slack_inf = (&su - x).amax() / (norm * lambda);
    let slack_quad = (x.dot(&su) - norm * norm).abs() / (norm * norm * lambda);
    let slack_design = design.map(|(xmat, tau)| (xmat * &u).amax() / (norm * tau));
    Candidate {
        u,
        su,
        slack_inf,
        slack_quad,
        slack_design,
    }
}

enum Variant<'a> {
    Baseline,
    Enhanced,
    Relaxed { sample: &'a GroupSample, tau: f64 },
}

/// Relaxed-variant pieces: the dense dual Hessian and the map from design-row
/// multipliers back to `u`.
struct RelaxedSystem {
    form: DenseForm,
    /// `n X' (X X')^+`, p x n.
    row_map: DMatrix<f64>,
}

fn relaxed_system(sample: &GroupSample, stats: &DesignStats, unit: &DVector<f64>) -> RelaxedSystem {
    let x = sample.x();
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;

    let xxt = x * x.transpose();
    let eig = xxt.symmetric_eigen();
    let cutoff = eig.eigenvalues.amax() * 1e-10 * n as f64;
    let inv_vals = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let keep = eig.eigenvalues.map(|l| if l > cutoff { 1.0 } else { 0.0 });
    let q = &eig.eigenvectors;
    let pinv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    let proj = q * DMatrix::from_diagonal(&keep) * q.transpose();

    let sx = &stats.gram * unit;
    let xsx = unit.dot(&sx);
    let xu = x * unit;

    let dim = p + 1 + n;
    let mut k = DMatrix::zeros(dim, dim);
    k[(0, 0)] = xsx;
    for j in 0..p {
        k[(0, j + 1)] = sx[j];
        k[(j + 1, 0)] = sx[j];
    }
    k.view_mut((1, 1), (p, p)).copy_from(&stats.gram);
    // Cross block H'X' and its transpose X H.
    for i in 0..n {
        k[(0, p + 1 + i)] = xu[i];
        k[(p + 1 + i, 0)] = xu[i];
        for j in 0..p {
            k[(j + 1, p + 1 + i)] = x[(i, j)];
            k[(p + 1 + i, j + 1)] = x[(i, j)];
        }
    }
    k.view_mut((p + 1, p + 1), (n, n)).copy_from(&(proj * nf));

    let row_map = x.transpose() * pinv * nf;
    RelaxedSystem {
        form: DenseForm { k },
        row_map,
    }
}

fn solve_direction(
    stats: &DesignStats,
    x_new: &DVector<f64>,
    cfg: &ProjectionConfig,
    variant: Variant<'_>,
) -> Result<ProjectionDirection> {
    cfg.validate()?;
    let p = stats.p();
    if x_new.len() != p {
        return Err(HitsError::Dimension(format!(
            "loading has length {} but p = {p}",
            x_new.len()
        )));
    }
    let (unit, norm) = standardize_loading(x_new)?;
    let gram = &stats.gram;

    let (kind, tau) = match &variant {
        Variant::Baseline => (DirectionKind::Baseline, None),
        Variant::Enhanced => (DirectionKind::Enhanced, None),
        Variant::Relaxed { tau, .. } => (DirectionKind::Relaxed, Some(*tau)),
    };

    // b = H'x (or x for the baseline); design rows have no linear term.
    let b = match &variant {
        Variant::Baseline => x_new.clone(),
        Variant::Enhanced => x_new.clone().insert_row(0, norm),
        Variant::Relaxed { sample, .. } => {
            let mut b = DVector::zeros(p + 1 + sample.n());
            b[0] = norm;
            b.rows_mut(1, p).copy_from(x_new);
            b
        }
    };

    let enhanced_form;
    let gram_form;
    if let Variant::Relaxed { sample, .. } = &variant {
        if sample.p() != p {
            return Err(HitsError::Dimension("sample and stats disagree on p".into()));
        }
    }
    let relaxed = match &variant {
        Variant::Relaxed { sample, .. } => Some(relaxed_system(sample, stats, &unit)),
        _ => None,
    };
    let form: &dyn DualForm = match &variant {
        Variant::Baseline => {
            gram_form = GramForm { gram };
            &gram_form
        }
        Variant::Enhanced => {
            enhanced_form = EnhancedForm::new(gram, &unit);
            &enhanced_form
        }
        Variant::Relaxed { .. } => &relaxed.as_ref().expect("built above").form,
    };

    // Primal map u = scale * (H eta + row_map gamma), and S u from the gradient:
    // rows 1..=p of K v equal S (H eta + row_map gamma).
    let recover = |v: &DVector<f64>, g: &DVector<f64>, scale: f64| -> (DVector<f64>, DVector<f64>) {
        match &variant {
            Variant::Baseline => (v * scale, g * scale),
            Variant::Enhanced => {
                let mut hv = v.rows(1, p).into_owned();
                hv.axpy(v[0], &unit, 1.0);
                (hv * scale, g.rows(1, p) * scale)
            }
            Variant::Relaxed { sample, .. } => {
                let mut hv = v.rows(1, p).into_owned();
                hv.axpy(v[0], &unit, 1.0);
                hv += &relaxed.as_ref().expect("built above").row_map * v.rows(p + 1, sample.n());
                (hv * scale, g.rows(1, p) * scale)
            }
        }
    };

    let mut lambda = cfg.initial_lambda(p, stats.n);
    let mut start: Option<DVector<f64>> = None;
    let mut total_iters = 0;
    let mut last = None;
    for escalation in 0..=cfg.max_escalations {
        let bias_level = norm * lambda;
        let r = match &variant {
            Variant::Relaxed { sample, tau } => DVector::from_fn(p + 1 + sample.n(), |j, _| {
                if j <= p {
                    bias_level
                } else {
                    norm * tau
                }
            }),
            _ => DVector::from_element(b.len(), bias_level),
        };
        let sol = coordinate_descent(form, &b, &r, cfg, start.as_ref());
        total_iters += sol.iterations;
        let design = match &variant {
            Variant::Relaxed { sample, tau } => Some((sample.x(), *tau)),
            _ => None,
        };
        let check_quad = !matches!(variant, Variant::Baseline);

        let mut accepted = None;
        if sol.status != DualStatus::Unbounded {
            for (convention, scale) in [(RecoveryConvention::NegHalf, -0.5), (RecoveryConvention::Unscaled, 1.0)] {
                let (u, su) = recover(&sol.v, &sol.g, scale);
                let cand = slacks(u, su, x_new, norm, lambda, design);
                let ok = cand.feasible(check_quad);
                if ok {
                    accepted = Some((cand, convention));
                    break;
                }
                if convention == RecoveryConvention::NegHalf {
                    last = Some(SolverSlacks {
                        slack_inf: cand.slack_inf,
                        slack_quad: cand.slack_quad,
                        slack_linf_design: cand.slack_design,
                        lambda_final: lambda,
                        escalations: escalation,
                    });
                }
            }
        } else {
            last = Some(SolverSlacks {
                slack_inf: f64::INFINITY,
                slack_quad: f64::INFINITY,
                slack_linf_design: design.map(|_| f64::INFINITY),
                lambda_final: lambda,
                escalations: escalation,
            });
        }

        if let Some((cand, convention)) = accepted {
            let variance_quadform = cand.u.dot(&cand.su).max(0.0);
            let dual_v = match &variant {
                Variant::Baseline => sol.v.clone().insert_row(0, 0.0),
                _ => sol.v.clone(),
            };
            return Ok(ProjectionDirection {
                kind,
                u: cand.u,
                dual_v,
                dual_objective: sol.objective,
                slack_inf: cand.slack_inf,
                slack_quad: cand.slack_quad,
                slack_linf_design: cand.slack_design,
                lambda_final: lambda,
                tau,
                variance_quadform,
                escalations: escalation,
                iterations: total_iters,
                convention,
            });
        }
        if sol.status != DualStatus::Unbounded {
            start = Some(sol.v);
        }
        lambda *= cfg.escalation_factor;
    }
    Err(HitsError::SolverFailure(last.expect("at least one attempt")))
}

/// Variance-enhanced direction: minimize `u'Su` subject to
/// `||Su - x||_inf <= ||x|| lambda` and `|x'Su - ||x||^2| <= ||x||^2 lambda`.
pub fn direction_enhanced(stats: &DesignStats, x_new: &DVector<f64>, cfg: &ProjectionConfig) -> Result<ProjectionDirection> {
    solve_direction(stats, x_new, cfg, Variant::Enhanced)
}

/// Baseline direction with only the sup-norm bias constraint. Returns exactly
/// zero for sufficiently dense loadings; kept for diagnostics and comparison.
pub fn direction_baseline(stats: &DesignStats, x_new: &DVector<f64>, cfg: &ProjectionConfig) -> Result<ProjectionDirection> {
    solve_direction(stats, x_new, cfg, Variant::Baseline)
}

/// Enhanced direction plus `||X u||_inf <= ||x|| tau`, for non-Gaussian errors.
pub fn direction_relaxed(
    g: &GroupSample,
    stats: &DesignStats,
    x_new: &DVector<f64>,
    cfg: &ProjectionConfig,
) -> Result<ProjectionDirection> {
    let tau = cfg.tau(g.n());
    solve_direction(stats, x_new, cfg, Variant::Relaxed { sample: g, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::design_stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn identity_stats(p: usize, n: usize) -> DesignStats {
        DesignStats {
            gram: DMatrix::identity(p, p),
            weights: DVector::from_element(p, 1.0),
            col_means: DVector::zeros(p),
            n,
        }
    }

    fn randn(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn identity_gram_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ProjectionConfig::default().with_lambda(0.3);
        let x = randn(&mut rng, 12);
        let d = direction_enhanced(&identity_stats(12, 100), &x, &cfg).unwrap();
        assert!((&d.u - &x * 0.7).amax() < 1e-6);
        assert_eq!(d.convention, RecoveryConvention::NegHalf);
        assert_eq!(d.escalations, 0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut e1 = DVector::zeros(6);
        e1[0] = 1.0;
        let cfg = ProjectionConfig::default().with_lambda(1.0);
        let d = direction_enhanced(&identity_stats(6, 50), &e1, &cfg).unwrap();
        assert_eq!(d.u, DVector::zeros(6));
        assert_eq!(d.dual_objective, 0.0);
    }

    #[test]
    fn baseline_scalar_case() {
        let cfg = ProjectionConfig::default().with_lambda(0.25);
        let d = direction_baseline(&identity_stats(1, 10), &DVector::from_element(1, 1.0), &cfg).unwrap();
        assert!((d.u[0] - 0.75).abs() < 1e-9);
        assert_eq!(d.dual_v.len(), 2);
    }

    #[test]
    fn baseline_zero_for_dense_loading() {
        let p = 100;
        let x = DVector::from_element(p, 1.0);
        // ||x||_2 / ||x||_inf = 10 >= 1 / 0.2
        let cfg = ProjectionConfig::default().with_lambda(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = DMatrix::from_fn(300, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = GroupSample::new(xs, DVector::zeros(300), 1).unwrap();
        let stats = design_stats(&g);
        let d = direction_baseline(&stats, &x, &cfg).unwrap();
        assert!(d.u.iter().all(|&v| v == 0.0));
        let e = direction_enhanced(&stats, &x, &cfg).unwrap();
        assert!(e.variance_quadform >= 0.04 * x.norm_squared());
    }

    #[test]
    fn zero_loading_rejected() {
        let r = direction_enhanced(&identity_stats(3, 10), &DVector::zeros(3), &ProjectionConfig::default());
        assert!(matches!(r, Err(HitsError::DegenerateLoading)));
    }

    #[test]
    fn escalates_when_infeasible() {
        // A zero column with a nonzero loading coordinate cannot meet the
        // constraint until lambda ||x|| >= |x_j|.
        let mut gram = DMatrix::identity(3, 3);
        gram[(2, 2)] = 0.0;
        let stats = DesignStats {
            gram,
            weights: DVector::from_vec(vec![1.0, 1.0, 0.0]),
            col_means: DVector::zeros(3),
            n: 10,
        };
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        // need lambda >= 1/sqrt(3) = 0.577; 0.3 * 1.25^k crosses it at k = 3.
        let cfg = ProjectionConfig::default().with_lambda(0.3);
        let d = direction_enhanced(&stats, &x, &cfg).unwrap();
        assert_eq!(d.escalations, 3);
        assert!(d.slack_inf <= 1.0 + FEASIBILITY_TOL);

        let strict = ProjectionConfig { max_escalations: 1, ..cfg };
        match direction_enhanced(&stats, &x, &strict) {
            Err(HitsError::SolverFailure(s)) => {
                assert!(s.slack_inf > 1.0);
                assert_eq!(s.escalations, 1);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    #[test]
    fn relaxed_with_inactive_design_constraint_matches_enhanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, p) = (20, 10);
        let xs = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = GroupSample::new(xs, DVector::zeros(n), 1).unwrap();
        let stats = design_stats(&g);
        let x = randn(&mut rng, p);
        let cfg = ProjectionConfig { tau_mult: 1e9, ..ProjectionConfig::default() }.with_lambda(0.3);
        let a = direction_enhanced(&stats, &x, &cfg).unwrap();
        let b = direction_relaxed(&g, &stats, &x, &cfg).unwrap();
        assert!((&a.u - &b.u).amax() < 1e-6);
        assert_eq!(b.dual_v.len(), p + 1 + n);
    }

    #[test]
    fn relaxed_respects_design_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, p) = (60, 30);
        // Bounded entries.
        let xs = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let g = GroupSample::new(xs, DVector::zeros(n), 1).unwrap();
        let stats = design_stats(&g);
        let x = randn(&mut rng, p);
        let cfg = ProjectionConfig { tau_mult: 2.0, ..ProjectionConfig::default() };
        let d = direction_relaxed(&g, &stats, &x, &cfg).unwrap();
        let tau = d.tau.unwrap();
        assert!((g.x() * &d.u).amax() <= x.norm() * tau * (1.0 + 1e-8));
        assert!(d.slack_inf <= 1.0 + FEASIBILITY_TOL);
        assert!(d.slack_quad <= 1.0 + FEASIBILITY_TOL);
    }
}
