//! C ABI over `ppsel`.
//!
//! Objects are opaque handles created by `ppsel_*_new`/`ppsel_simulate_*`/
//! `ppsel_fit`/`ppsel_select` and released with the matching `*_free`.
//! Every fallible function returns a [`PpselStatus`]; on failure the message
//! is available from [`ppsel_last_error`] on the same thread. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use ppsel::covariates::{synth_covariates, CovariateField, CovariateSet};
use ppsel::criteria::{criteria, p_star, t2_matrix, Criterion};
use ppsel::likelihood::{fit, FitResult};
use ppsel::second_order::PcfModel;
use ppsel::selection::{select, PcfFitting, SelectOptions, SelectionResult};
use ppsel::simulate::{calibrate_omega, sim_poisson, sim_thomas, IntensitySpec, ThomasParams};
use ppsel::{Error, ModelSpec, PointPattern, Window};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidWindow = 3,
    OutOfWindow = 4,
    DegenerateCovariate = 5,
    Parse = 6,
    Dimension = 7,
    EmptyPattern = 8,
    SingularSensitivity = 9,
    BoundViolation = 10,
    OptimFailure = 11,
    QuadratureFailure = 12,
    TooManyCovariates = 13,
    Config = 14,
    Io = 15,
    BufferTooSmall = 16,
    Panic = 99,
}

/// Pair correlation assumed when computing effective degrees of freedom.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpselPcf {
    Poisson = 0,
    Thomas = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpselCriterion {
    Aic = 0,
    BicN = 1,
    BicW = 2,
    BicNm = 3,
    Cic = 4,
    Cbic = 5,
}

impl From<PpselCriterion> for Criterion {
    fn from(c: PpselCriterion) -> Self {
        match c {
            PpselCriterion::Aic => Criterion::Aic,
            PpselCriterion::BicN => Criterion::BicN,
            PpselCriterion::BicW => Criterion::BicW,
            PpselCriterion::BicNm => Criterion::BicNm,
            PpselCriterion::Cic => Criterion::Cic,
            PpselCriterion::Cbic => Criterion::Cbic,
        }
    }
}

/// Rectangular observation window `[x_min, x_max] × [y_min, y_max]`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PpselWindow {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Information criteria of one fitted model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PpselCriteria {
    pub loglik: f64,
    pub p_l: u32,
    pub p_star: f64,
    pub aic: f64,
    pub bic_n: f64,
    pub bic_w: f64,
    pub bic_nm: f64,
    pub cic: f64,
    pub cbic: f64,
}

/// Opaque covariate set.
pub struct PpselCovariates(Arc<CovariateSet>);
/// Opaque point pattern.
pub struct PpselPattern(PointPattern);
/// Opaque fitted model.
pub struct PpselFit(FitResult);
/// Opaque selection result.
pub struct PpselSelection(SelectionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PpselStatus {
    match e {
        Error::InvalidWindow(_) => PpselStatus::InvalidWindow,
        Error::OutOfWindow { .. } => PpselStatus::OutOfWindow,
        Error::DegenerateCovariate(_) => PpselStatus::DegenerateCovariate,
        Error::Parse(_) | Error::Csv(_) => PpselStatus::Parse,
        Error::Dimension(_) | Error::DimensionMismatch { .. } => PpselStatus::Dimension,
        Error::EmptyPattern => PpselStatus::EmptyPattern,
        Error::SingularSensitivity { .. } => PpselStatus::SingularSensitivity,
        Error::BoundViolation { .. } => PpselStatus::BoundViolation,
        Error::OptimFailure(_) => PpselStatus::OptimFailure,
        Error::QuadratureFailure(_) => PpselStatus::QuadratureFailure,
        Error::TooManyCovariates(_) => PpselStatus::TooManyCovariates,
        Error::Config(_) => PpselStatus::Config,
        Error::Io(_) => PpselStatus::Io,
    }
}

enum Failure {
    Status(PpselStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null() -> Failure {
    Failure::Status(PpselStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PpselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpselStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PpselStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn window(w: PpselWindow) -> Result<Window, Failure> {
    Ok(Window::new(w.x_min, w.x_max, w.y_min, w.y_max)?)
}

/// Last error message on this thread, or null. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ppsel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Seeded smooth synthetic covariates on an `nx × ny` lattice, standardized.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn ppsel_covariates_synth(
    seed: u64,
    p: usize,
    win: PpselWindow,
    nx: usize,
    ny: usize,
    out: *mut *mut PpselCovariates,
) -> PpselStatus {
    guard(|| {
        let cov = synth_covariates(seed, p, window(win)?, (nx, ny))?;
        put(out, PpselCovariates(Arc::new(cov)))
    })
}

/// Covariates from `p` lattices of `nx × ny` node values stored field after
/// field, each row-major with rows at increasing y. Standardized on load.
///
/// # Safety
/// `values` must point to `p * nx * ny` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppsel_covariates_from_grids(
    win: PpselWindow,
    nx: usize,
    ny: usize,
    p: usize,
    values: *const f64,
    out: *mut *mut PpselCovariates,
) -> PpselStatus {
    guard(|| {
        let w = window(win)?;
        let n = nx.checked_mul(ny).and_then(|k| k.checked_mul(p)).ok_or_else(|| {
            Failure::Status(PpselStatus::InvalidArgument, "grid size overflows".into())
        })?;
        let v = as_slice(values, n)?;
        let fields = (0..p)
            .map(|k| CovariateField::new(format!("z{}", k + 1), w, nx, ny, v[k * nx * ny..(k + 1) * nx * ny].to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, PpselCovariates(Arc::new(CovariateSet::new(fields)?.standardize()?)))
    })
}

/// Number of covariates in the set, or 0 for a null handle.
///
/// # Safety
/// `cov` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ppsel_covariates_len(cov: *const PpselCovariates) -> usize {
    cov.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cov` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ppsel_covariates_free(cov: *mut PpselCovariates) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// Pattern from coordinate arrays; every point must lie in the window.
///
/// # Safety
/// `xs` and `ys` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppsel_pattern_new(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    win: PpselWindow,
    out: *mut *mut PpselPattern,
) -> PpselStatus {
    guard(|| {
        let (xs, ys) = (as_slice(xs, n)?, as_slice(ys, n)?);
        let pts = xs.iter().copied().zip(ys.iter().copied()).collect();
        put(out, PpselPattern(PointPattern::new(pts, window(win)?)?))
    })
}

/// # Safety
/// `pattern` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ppsel_pattern_len(pattern: *const PpselPattern) -> usize {
    pattern.as_ref().map_or(0, |p| p.0.len())
}

/// Copy the coordinates into caller buffers of capacity `cap`.
///
/// # Safety
/// `xs` and `ys` must point to at least `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ppsel_pattern_coords(
    pattern: *const PpselPattern,
    xs: *mut f64,
    ys: *mut f64,
    cap: usize,
) -> PpselStatus {
    guard(|| {
        let p = &as_ref(pattern)?.0;
        if cap < p.len() {
            return Err(Failure::Status(PpselStatus::BufferTooSmall, format!("need {} slots, got {cap}", p.len())));
        }
        if p.is_empty() {
            return Ok(());
        }
        if xs.is_null() || ys.is_null() {
            return Err(null());
        }
        for (i, &(x, y)) in p.points().iter().enumerate() {
            *xs.add(i) = x;
            *ys.add(i) = y;
        }
        Ok(())
    })
}

/// # Safety
/// `pattern` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ppsel_pattern_free(pattern: *mut PpselPattern) {
    if !pattern.is_null() {
        drop(Box::from_raw(pattern));
    }
}

unsafe fn calibrated(cov: *const PpselCovariates, beta: *const f64, mu: f64) -> Result<IntensitySpec, Failure> {
    let cov = as_ref(cov)?.0.clone();
    let beta = as_slice(beta, cov.len())?.to_vec();
    let spec = IntensitySpec::new(1.0, beta, cov)?;
    Ok(spec.with_omega(calibrate_omega(&spec, mu)?)?)
}

/// Inhomogeneous Poisson pattern on the covariate window with intensity
/// `ω exp(β·z)`, `ω` chosen so the expected count is `mu`.
///
/// # Safety
/// `beta` must point to one double per covariate; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppsel_simulate_poisson(
    cov: *const PpselCovariates,
    beta: *const f64,
    mu: f64,
    seed: u64,
    out: *mut *mut PpselPattern,
) -> PpselStatus {
    guard(|| {
        let spec = calibrated(cov, beta, mu)?;
        let w = *spec.covariates().window();
        put(out, PpselPattern(sim_poisson(&spec, &w, seed)?))
    })
}

/// Inhomogeneous Thomas pattern with parent intensity `kappa` and
/// dispersal scale `gamma`.
///
/// # Safety
/// As [`ppsel_simulate_poisson`].
#[no_mangle]
pub unsafe extern "C" fn ppsel_simulate_thomas(
    cov: *const PpselCovariates,
    beta: *const f64,
    mu: f64,
    kappa: f64,
    gamma: f64,
    seed: u64,
    out: *mut *mut PpselPattern,
) -> PpselStatus {
    guard(|| {
        let spec = calibrated(cov, beta, mu)?;
        let w = *spec.covariates().window();
        put(out, PpselPattern(sim_thomas(&spec, ThomasParams::new(kappa, gamma)?, &w, seed)?))
    })
}

/// Fit the model with the given 1-based covariate indices (plus intercept)
/// using `m` dummy points.
///
/// # Safety
/// `subset` must point to `k` integers (may be null when `k == 0`).
#[no_mangle]
pub unsafe extern "C" fn ppsel_fit(
    pattern: *const PpselPattern,
    cov: *const PpselCovariates,
    subset: *const u32,
    k: usize,
    m: usize,
    out: *mut *mut PpselFit,
) -> PpselStatus {
    guard(|| {
        let (p, c) = (&as_ref(pattern)?.0, &as_ref(cov)?.0);
        let idx: Vec<usize> = as_slice(subset, k)?.iter().map(|&j| j as usize).collect();
        if let Some(&j) = idx.iter().find(|&&j| j == 0 || j > c.len()) {
            return Err(Failure::Status(PpselStatus::InvalidArgument, format!("covariate index {j} out of range")));
        }
        put(out, PpselFit(fit(p, &ModelSpec::new(idx)?, c, m)?))
    })
}

/// Number of coefficients (intercept included).
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ppsel_fit_dim(f: *const PpselFit) -> usize {
    f.as_ref().map_or(0, |f| f.0.beta_hat.len())
}

/// Copy `β̂` (intercept first) into a buffer of capacity `cap` and report the
/// maximised log-likelihood.
///
/// # Safety
/// `beta` must point to `cap` writable doubles; `loglik` may be null.
#[no_mangle]
pub unsafe extern "C" fn ppsel_fit_coefficients(
    f: *const PpselFit,
    beta: *mut f64,
    cap: usize,
    loglik: *mut f64,
) -> PpselStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        if cap < f.beta_hat.len() {
            return Err(Failure::Status(PpselStatus::BufferTooSmall, format!("need {} slots", f.beta_hat.len())));
        }
        if beta.is_null() {
            return Err(null());
        }
        ptr::copy_nonoverlapping(f.beta_hat.as_ptr(), beta, f.beta_hat.len());
        if !loglik.is_null() {
            *loglik = f.loglik;
        }
        Ok(())
    })
}

/// Criteria of a fitted model under the given pair correlation; `kappa` and
/// `gamma` are ignored for [`PpselPcf::Poisson`].
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppsel_fit_criteria(
    f: *const PpselFit,
    cov: *const PpselCovariates,
    pcf: PpselPcf,
    kappa: f64,
    gamma: f64,
    out: *mut PpselCriteria,
) -> PpselStatus {
    guard(|| {
        let (f, c) = (&as_ref(f)?.0, &as_ref(cov)?.0);
        if out.is_null() {
            return Err(null());
        }
        let ps = match pcf {
            PpselPcf::Poisson => f.model.dim() as f64,
            PpselPcf::Thomas => {
                let pm = PcfModel::Thomas(ThomasParams::new(kappa, gamma)?);
                p_star(f, &t2_matrix(f, &f.model, c, &pm)?)?
            }
        };
        let r = criteria(f, ps, f.n_points(), f.scheme.window().area(), f.scheme.m());
        *out = PpselCriteria {
            loglik: r.loglik,
            p_l: r.p_l as u32,
            p_star: r.p_star,
            aic: r.aic,
            bic_n: r.bic_n,
            bic_w: r.bic_w,
            bic_nm: r.bic_nm,
            cic: r.cic,
            cbic: r.cbic,
        };
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ppsel_fit_free(f: *mut PpselFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Fit and score all `2^p` covariate subsets.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppsel_select(
    pattern: *const PpselPattern,
    cov: *const PpselCovariates,
    pcf: PpselPcf,
    m: usize,
    r_max: f64,
    out: *mut *mut PpselSelection,
) -> PpselStatus {
    guard(|| {
        let (p, c) = (&as_ref(pattern)?.0, &as_ref(cov)?.0);
        let fitting = match pcf {
            PpselPcf::Poisson => PcfFitting::Poisson,
            PpselPcf::Thomas => PcfFitting::Thomas,
        };
        put(out, PpselSelection(select(p, c, &SelectOptions::new(fitting, m, r_max))?))
    })
}

/// Chosen model under `criterion` as a bitmask (bit `j-1` set when
/// covariate `j` is included), with its effective degrees of freedom.
///
/// # Safety
/// `sel` must be live; `mask` must be writable; `p_star` may be null.
#[no_mangle]
pub unsafe extern "C" fn ppsel_selection_chosen(
    sel: *const PpselSelection,
    criterion: PpselCriterion,
    mask: *mut u32,
    p_star: *mut f64,
) -> PpselStatus {
    guard(|| {
        let s = &as_ref(sel)?.0;
        if mask.is_null() {
            return Err(null());
        }
        let o = s.chosen_outcome(criterion.into()).ok_or_else(|| {
            Failure::Status(PpselStatus::InvalidArgument, "criterion was not evaluated".into())
        })?;
        *mask = o.report.model.mask();
        if !p_star.is_null() {
            *p_star = o.report.p_star;
        }
        Ok(())
    })
}

/// Number of models that were scored (failed fits are excluded).
///
/// # Safety
/// `sel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ppsel_selection_len(sel: *const PpselSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.0.outcomes.len())
}

/// # Safety
/// `sel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ppsel_selection_free(sel: *mut PpselSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}
