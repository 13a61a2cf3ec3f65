//! C interface to the `hits` library.
//!
//! Matrices are passed row-major. Every fallible function returns a
//! [`HitsStatus`]; on failure [`hits_last_error`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hits::inference::{ate_inference, ite, ContrastInference, InferenceConfig};
use hits::lasso::LassoConfig;
use hits::nalgebra::{DMatrix, DVector};
use hits::projection::ProjectionConfig;
use hits::sim::{run_monte_carlo, Estimator, RunOptions, Scenario};
use hits::{GroupSample, HitsError, TwoGroupDataset};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Malformed data, dimensions or configuration.
    InvalidInput = 2,
    /// The loading vector is zero.
    DegenerateLoading = 3,
    /// The projection problem stayed infeasible or the variance collapsed.
    SolverFailure = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

/// Two-arm data plus the current loading vector.
pub struct HitsDataset {
    inner: TwoGroupDataset,
}

/// Tuning parameters. Obtain defaults from [`hits_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HitsConfig {
    pub alpha: f64,
    /// Lasso penalty multiplier.
    pub lasso_a: f64,
    /// Projection constraint multiplier.
    pub lambda_mult: f64,
    /// Bound multiplier for the design-row constraint.
    pub tau_mult: f64,
    /// Use the direction with the design-row constraint.
    pub relaxed: bool,
    /// Worker threads for simulations; 0 uses all cores.
    pub threads: usize,
}

/// Point estimate, variance, two-sided interval and one-sided decision.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HitsInference {
    pub delta_hat: f64,
    pub v_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub z_stat: f64,
    pub reject: bool,
    /// Set when both the estimate and its variance are exactly zero.
    pub no_decision: bool,
}

impl From<&ContrastInference> for HitsInference {
    fn from(r: &ContrastInference) -> Self {
        Self {
            delta_hat: r.delta_hat,
            v_hat: r.v_hat,
            ci_lower: r.ci_lower,
            ci_upper: r.ci_upper,
            z_stat: r.z_stat,
            reject: r.reject,
            no_decision: r.no_decision,
        }
    }
}

impl HitsConfig {
    fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            lasso: LassoConfig {
                a: self.lasso_a,
                ..LassoConfig::default()
            },
            projection: ProjectionConfig {
                lambda_mult: self.lambda_mult,
                tau_mult: self.tau_mult,
                ..ProjectionConfig::default()
            },
            relaxed: self.relaxed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Hits(HitsError),
}

impl From<HitsError> for Failure {
    fn from(e: HitsError) -> Self {
        Failure::Hits(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HitsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HitsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            HitsStatus::NullArgument
        }
        Ok(Err(Failure::Hits(e))) => {
            set_error(e.to_string());
            match e {
                HitsError::DegenerateLoading => HitsStatus::DegenerateLoading,
                e if e.is_solver_failure() => HitsStatus::SolverFailure,
                _ => HitsStatus::InvalidInput,
            }
        }
        Err(_) => {
            set_error("internal panic");
            HitsStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `x` must point to `n * p` doubles and `y` to `n` doubles.
unsafe fn arm(x: *const f64, y: *const f64, n: usize, p: usize, label: u8) -> Result<GroupSample, Failure> {
    let x = non_null(x, "design matrix")?;
    let y = non_null(y, "response")?;
    let len = n
        .checked_mul(p)
        .ok_or_else(|| HitsError::Dimension(format!("{n} x {p} overflows")))?;
    let xs = std::slice::from_raw_parts(x, len);
    let ys = std::slice::from_raw_parts(y, n);
    Ok(GroupSample::new(
        DMatrix::from_row_slice(n, p, xs),
        DVector::from_column_slice(ys),
        label,
    )?)
}

/// Message of the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hits_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn hits_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn hits_config_default() -> HitsConfig {
    let cfg = InferenceConfig::default();
    HitsConfig {
        alpha: 0.05,
        lasso_a: cfg.lasso.a,
        lambda_mult: cfg.projection.lambda_mult,
        tau_mult: cfg.projection.tau_mult,
        relaxed: cfg.relaxed,
        threads: 0,
    }
}

/// Copies both arms into a new dataset. The loading starts at zero; set it
/// with [`hits_dataset_set_loading`] before calling [`hits_ite`].
///
/// # Safety
/// `x1` holds `n1 * p` doubles row-major, `y1` holds `n1`; likewise for arm 2.
/// `out` must be a valid pointer. Free the handle with [`hits_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn hits_dataset_new(
    x1: *const f64,
    y1: *const f64,
    n1: usize,
    x2: *const f64,
    y2: *const f64,
    n2: usize,
    p: usize,
    out: *mut *mut HitsDataset,
) -> HitsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        let g1 = arm(x1, y1, n1, p, 1)?;
        let g2 = arm(x2, y2, n2, p, 2)?;
        let inner = TwoGroupDataset::new(g1, g2, DVector::zeros(p))?;
        *out = Box::into_raw(Box::new(HitsDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`hits_dataset_new`] and not be used afterwards.
/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn hits_dataset_free(ds: *mut HitsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of covariates, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hits_dataset_p(ds: *const HitsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.p())
}

/// # Safety
/// `ds` must be a live handle and `x_new` must point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn hits_dataset_set_loading(ds: *mut HitsDataset, x_new: *const f64, p: usize) -> HitsStatus {
    guard(|| {
        let d = ds.as_mut().ok_or(Failure::Null("dataset"))?;
        let x = non_null(x_new, "loading")?;
        d.inner = d.inner.with_loading(DVector::from_column_slice(std::slice::from_raw_parts(x, p)))?;
        Ok(())
    })
}

/// # Safety
/// `ds` and `out` must be valid; `cfg` may be null for defaults.
unsafe fn contrast(
    ds: *const HitsDataset,
    cfg: *const HitsConfig,
    out: *mut HitsInference,
    run: fn(&TwoGroupDataset, &InferenceConfig, f64) -> hits::Result<hits::inference::TwoArmResult>,
) -> HitsStatus {
    guard(|| {
        let d = ds.as_ref().ok_or(Failure::Null("dataset"))?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let cfg = cfg.as_ref().copied().unwrap_or_else(|| hits_config_default());
        let r = run(&d.inner, &cfg.inference(), cfg.alpha)?;
        *out = HitsInference::from(&r.inference);
        Ok(())
    })
}

/// Inference for `x_new'(beta1 - beta2)`.
///
/// # Safety
/// `ds` and `out` must be valid; `cfg` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn hits_ite(ds: *const HitsDataset, cfg: *const HitsConfig, out: *mut HitsInference) -> HitsStatus {
    contrast(ds, cfg, out, ite)
}

/// Inference for the effect averaged over arm 2's covariates,
/// `mean(X2)'(beta2 - beta1)`. The loading is ignored.
///
/// # Safety
/// `ds` and `out` must be valid; `cfg` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn hits_ate(ds: *const HitsDataset, cfg: *const HitsConfig, out: *mut HitsInference) -> HitsStatus {
    contrast(ds, cfg, out, ate_inference)
}

/// Runs a Monte Carlo study described by a scenario JSON document and
/// returns the report as JSON in `*out_json`.
///
/// `estimators` is a comma-separated subset of `hits,lasso,deb`, or null for
/// `hits,lasso`.
///
/// # Safety
/// String arguments must be nul-terminated. Release `*out_json` with
/// [`hits_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hits_simulate_json(
    scenario_json: *const c_char,
    estimators: *const c_char,
    cfg: *const HitsConfig,
    out_json: *mut *mut c_char,
) -> HitsStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(Failure::Null("out_json"));
        }
        *out_json = ptr::null_mut();
        let text = CStr::from_ptr(non_null(scenario_json, "scenario_json")?)
            .to_str()
            .map_err(|_| HitsError::Config("scenario is not valid UTF-8".into()))?;
        let sc = Scenario::from_json(text)?;
        let estimators = if estimators.is_null() {
            RunOptions::default().estimators
        } else {
            CStr::from_ptr(estimators)
                .to_str()
                .map_err(|_| HitsError::Config("estimators is not valid UTF-8".into()))?
                .split(',')
                .map(|s| Estimator::parse(s.trim()))
                .collect::<hits::Result<_>>()?
        };
        let cfg = cfg.as_ref().copied().unwrap_or_else(|| hits_config_default());
        let opts = RunOptions {
            estimators,
            inference: cfg.inference(),
            threads: (cfg.threads > 0).then_some(cfg.threads),
            ..RunOptions::default()
        };
        let report = run_monte_carlo(&sc, &opts)?;
        let json = CString::new(report.to_json()).expect("json has no nul bytes");
        *out_json = json.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn hits_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
