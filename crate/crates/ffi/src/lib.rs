//! C ABI over `star-rz`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a
//! [`StarRzStatus`]; on failure [`star_rz_last_error`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DVector;
use star_rz::convergence_analysis::{frobenius_power_bounds, spectral_radius_modal};
use star_rz::star_solver::{
    discretize, solve_operator, solve_vector, OperatorSolution, SolveStats, SolverConfig, StarDiscretization,
    StateSolution,
};
use star_rz::{Case, Error, RZModel, C64};

pub const STAR_RZ_CASE_A: u32 = 0;
pub const STAR_RZ_CASE_B: u32 = 1;
pub const STAR_RZ_CASE_C: u32 = 2;
pub const STAR_RZ_CASE_D: u32 = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarRzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Refused = 3,
    Divergence = 4,
    Stiffness = 5,
    Io = 6,
    Panic = 7,
}

/// Discretized problem: coefficient matrices and factorizations.
pub struct StarRzDiscretization(StarDiscretization);

/// Factored state solution `ψ(t)`.
pub struct StarRzState(StateSolution);

/// Factored operator solution `U(t)`.
pub struct StarRzOperator(OperatorSolution);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StarRzSolverOptions {
    pub tol: f64,
    pub trunc: f64,
    pub max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StarRzSolveInfo {
    pub iterations: usize,
    pub max_rank: usize,
    pub converged: bool,
    pub final_estimate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> StarRzStatus {
    match err {
        Error::InvalidArgument(_) => StarRzStatus::InvalidArgument,
        Error::Refused(_) => StarRzStatus::Refused,
        Error::Divergence { .. } => StarRzStatus::Divergence,
        Error::Stiffness { .. } => StarRzStatus::Stiffness,
        Error::Io(_) | Error::Json(_) => StarRzStatus::Io,
    }
}

/// Runs `f`, mapping errors and panics onto a status code.
fn guard(f: impl FnOnce() -> Result<(), StarRzStatus>) -> StarRzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            StarRzStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            StarRzStatus::Panic
        }
    }
}

fn fail(err: Error) -> StarRzStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null(what: &str) -> StarRzStatus {
    set_error(&format!("{what} is null"));
    StarRzStatus::NullPointer
}

fn config_of(opts: *const StarRzSolverOptions) -> SolverConfig {
    let d = SolverConfig::default();
    // SAFETY: callers pass either null or a valid options pointer.
    match unsafe { opts.as_ref() } {
        Some(o) => SolverConfig { tol: o.tol, trunc: o.trunc, max_iter: o.max_iter, ..d },
        None => d,
    }
}

fn info_of(stats: &SolveStats) -> StarRzSolveInfo {
    StarRzSolveInfo {
        iterations: stats.iterations,
        max_rank: stats.max_rank(),
        converged: stats.converged,
        final_estimate: stats.final_estimate(),
    }
}

/// Library version, a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn star_rz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread (empty after a
/// success). Valid until the next call into the library on this thread.
#[unsafe(no_mangle)]
pub extern "C" fn star_rz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default solver options (`tol = 1e-7`, `trunc = 1e-6`, `max_iter = 200`).
#[unsafe(no_mangle)]
pub extern "C" fn star_rz_solver_options_default() -> StarRzSolverOptions {
    let d = SolverConfig::default();
    StarRzSolverOptions { tol: d.tol, trunc: d.trunc, max_iter: d.max_iter }
}

/// Builds the discretization of preset `case_id` (`STAR_RZ_CASE_*`) with
/// `n` levels on `[t0, tf]`, truncated at order `m`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_discretize(
    case_id: u32,
    n: usize,
    m: usize,
    t0: f64,
    tf: f64,
    out: *mut *mut StarRzDiscretization,
) -> StarRzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let case = *Case::ALL.get(case_id as usize).ok_or_else(|| {
            fail(Error::InvalidArgument(format!("case id {case_id} out of range")))
        })?;
        let model = RZModel::preset(case, n).and_then(|md| md.with_interval(t0, tf)).map_err(fail)?;
        let disc = discretize(&model, m).map_err(fail)?;
        // SAFETY: checked non-null above; the caller guarantees validity.
        unsafe { *out = Box::into_raw(Box::new(StarRzDiscretization(disc))) };
        Ok(())
    })
}

/// # Safety
/// `disc` must be null or a handle from [`star_rz_discretize`] not yet freed.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_discretization_free(disc: *mut StarRzDiscretization) {
    if !disc.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(disc) });
    }
}

/// System size `N`, order `M` and quadrature size of a discretization.
///
/// # Safety
/// `disc` must be a live handle; each output pointer may be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_discretization_shape(
    disc: *const StarRzDiscretization,
    n: *mut usize,
    m: *mut usize,
    quad_points: *mut usize,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let d = &unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?.0;
        // SAFETY: each pointer is null or writable.
        unsafe {
            if let Some(p) = n.as_mut() {
                *p = d.n();
            }
            if let Some(p) = m.as_mut() {
                *p = d.m;
            }
            if let Some(p) = quad_points.as_mut() {
                *p = d.quad_points;
            }
        }
        Ok(())
    })
}

/// Solves for `ψ(t)` from `ψ0 = psi0_re + i psi0_im` (length `n`).
/// `opts` and `info` may be null.
///
/// # Safety
/// `disc` must be a live handle, `psi0_re`/`psi0_im` must point to `n`
/// readable doubles and `out` to writable storage for one handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_solve_vector(
    disc: *const StarRzDiscretization,
    psi0_re: *const f64,
    psi0_im: *const f64,
    n: usize,
    opts: *const StarRzSolverOptions,
    out: *mut *mut StarRzState,
    info: *mut StarRzSolveInfo,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let d = &unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?.0;
        if psi0_re.is_null() || psi0_im.is_null() {
            return Err(null("psi0"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: both arrays hold `n` doubles.
        let (re, im) = unsafe { (std::slice::from_raw_parts(psi0_re, n), std::slice::from_raw_parts(psi0_im, n)) };
        let psi0 = nalgebra_vector(re, im);
        let (sol, stats) = solve_vector(d, &psi0, &config_of(opts)).map_err(fail)?;
        // SAFETY: checked non-null; `info` may be null.
        unsafe {
            if let Some(p) = info.as_mut() {
                *p = info_of(&stats);
            }
            *out = Box::into_raw(Box::new(StarRzState(sol)));
        }
        Ok(())
    })
}

fn nalgebra_vector(re: &[f64], im: &[f64]) -> DVector<C64> {
    DVector::from_iterator(re.len(), re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)))
}

fn write_split(values: &[C64], out_re: *mut f64, out_im: *mut f64) {
    // SAFETY: the callers checked both pointers for `values.len()` doubles.
    let (re, im) = unsafe {
        (std::slice::from_raw_parts_mut(out_re, values.len()), std::slice::from_raw_parts_mut(out_im, values.len()))
    };
    for (k, z) in values.iter().enumerate() {
        re[k] = z.re;
        im[k] = z.im;
    }
}

/// Writes `ψ(t)` into `out_re`/`out_im` (length `n`, which must equal `N`).
///
/// # Safety
/// `sol` must be a live handle and the outputs must hold `n` doubles each.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_state_evaluate(
    sol: *const StarRzState,
    t: f64,
    out_re: *mut f64,
    out_im: *mut f64,
    n: usize,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let s = &unsafe { sol.as_ref() }.ok_or_else(|| null("sol"))?.0;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        if n != s.model.n() {
            return Err(fail(Error::InvalidArgument(format!("buffer length {n}, expected {}", s.model.n()))));
        }
        let psi = s.evaluate_state(t).map_err(fail)?;
        write_split(psi.as_slice(), out_re, out_im);
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle from [`star_rz_solve_vector`] not yet freed.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_state_free(sol: *mut StarRzState) {
    if !sol.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sol) });
    }
}

/// Solves for the propagator `U(t)`. `opts` and `info` may be null.
///
/// # Safety
/// `disc` must be a live handle and `out` writable storage for one handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_solve_operator(
    disc: *const StarRzDiscretization,
    opts: *const StarRzSolverOptions,
    out: *mut *mut StarRzOperator,
    info: *mut StarRzSolveInfo,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let d = &unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let (sol, stats) = solve_operator(d, &config_of(opts)).map_err(fail)?;
        // SAFETY: checked non-null; `info` may be null.
        unsafe {
            if let Some(p) = info.as_mut() {
                *p = info_of(&stats);
            }
            *out = Box::into_raw(Box::new(StarRzOperator(sol)));
        }
        Ok(())
    })
}

/// Writes column `j` of `U(t)` into `out_re`/`out_im` (length `n == N`).
///
/// # Safety
/// `sol` must be a live handle and the outputs must hold `n` doubles each.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_operator_column(
    sol: *const StarRzOperator,
    t: f64,
    j: usize,
    out_re: *mut f64,
    out_im: *mut f64,
    n: usize,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let s = &unsafe { sol.as_ref() }.ok_or_else(|| null("sol"))?.0;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        if n != s.model.n() {
            return Err(fail(Error::InvalidArgument(format!("buffer length {n}, expected {}", s.model.n()))));
        }
        let col = s.evaluate_operator(t, j).map_err(fail)?;
        write_split(col.as_slice(), out_re, out_im);
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle from [`star_rz_solve_operator`] not yet freed.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_operator_free(sol: *mut StarRzOperator) {
    if !sol.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(sol) });
    }
}

/// `‖A^ℓ‖_F^{1/ℓ}` for the iteration matrix of `disc`.
///
/// # Safety
/// `disc` must be a live handle and `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_frobenius_bound(
    disc: *const StarRzDiscretization,
    ell: usize,
    out: *mut f64,
) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let d = &unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let b = frobenius_power_bounds(d, &[ell]).map_err(fail)?;
        // SAFETY: checked non-null.
        unsafe { *out = b[0] };
        Ok(())
    })
}

/// Spectral radius of the iteration matrix of `disc`.
///
/// # Safety
/// `disc` must be a live handle and `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn star_rz_spectral_radius(disc: *const StarRzDiscretization, out: *mut f64) -> StarRzStatus {
    guard(|| {
        // SAFETY: caller contract.
        let d = &unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = spectral_radius_modal(d);
        if !r.converged {
            return Err(fail(Error::Refused("eigenvalue iteration did not converge".into())));
        }
        // SAFETY: checked non-null.
        unsafe { *out = r.value };
        Ok(())
    })
}
