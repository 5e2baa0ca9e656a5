//! C ABI over the degenctrl numerics.
//!
//! Conventions: every fallible call returns a [`DcStatus`]; results come back
//! through out-pointers. On failure the message is kept per thread and can be
//! read with [`dc_last_error`]. Handles are opaque and must be released with
//! their `*_free` function. Panics never cross the boundary.
//!
//! Coefficient arrays are row-major `n_modes × n_radial`, modes in the order
//! cos 0, cos 1, …, cos N, sin 1, …, sin N.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use degenctrl::control::{hum_control, ControlRegion, HumOptions, HumResult};
use degenctrl::model::{build_model, ModeCoeffs, Model, ModelConfig};
use degenctrl::Error;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonConvergence = 3,
    NumericalFailure = 4,
    Panic = 5,
}

/// Assembled discrete model.
pub struct DcModel {
    inner: Model,
}

/// Outcome of a penalized HUM solve.
pub struct DcHumResult {
    inner: HumResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::NonConvergence { .. } => DcStatus::NonConvergence,
        Error::AlphaOutOfRange(_)
        | Error::InvalidConfig(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::TooManyEigenpairs { .. }
        | Error::EmptySet(_) => DcStatus::InvalidArgument,
        _ => DcStatus::NumericalFailure,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DcStatus, String)>) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (DcStatus, String) {
    (DcStatus::NullPointer, format!("{name} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model. Zero sizes select the defaults.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dc_model_new(
    alpha: f64,
    t_horizon: f64,
    n_theta_max: usize,
    n_r: usize,
    n_time: usize,
    out: *mut *mut DcModel,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = ModelConfig::new(alpha, t_horizon);
        let d = cfg.clone();
        cfg = cfg.with_sizes(
            if n_theta_max == 0 { d.n_theta_max } else { n_theta_max },
            if n_r == 0 { d.n_r } else { n_r },
            if n_time == 0 { d.n_time } else { n_time },
        );
        let model = build_model(cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DcModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`dc_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_model_free(model: *mut DcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of angular modes and of radial unknowns per mode.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_model_dims(model: *const DcModel, n_modes: *mut usize, n_radial: *mut usize) -> DcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if n_modes.is_null() || n_radial.is_null() {
            return Err(null("output"));
        }
        *n_modes = m.inner.n_modes();
        *n_radial = m.inner.grid.n_interior();
        Ok(())
    })
}

/// Lowest `k` eigenvalues of the discrete radial operator.
///
/// # Safety
/// `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_radial_eigenvalues(model: *const DcModel, k: usize, out: *mut f64) -> DcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = m.inner.radial_spectrum();
        if k > spec.len() {
            return Err(lib_err(Error::TooManyEigenpairs {
                requested: k,
                available: spec.len(),
            }));
        }
        std::slice::from_raw_parts_mut(out, k).copy_from_slice(&spec.values[..k]);
        Ok(())
    })
}

/// Reference eigenvalues from Bessel zeros for exponent `alpha`.
///
/// # Safety
/// `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_bessel_eigenvalues(alpha: f64, k: usize, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = degenctrl::bessel::bessel_oracle(alpha, k).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, k).copy_from_slice(&v);
        Ok(())
    })
}

/// Smallest eigenvalue of the angular Gram matrix for frequencies ≤ `k_cap`
/// on the arc (c, d).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_torus_lambda_min(k_cap: usize, c: f64, d: f64, out: *mut f64) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = degenctrl::spectral_obs::torus_smallest_gram_eigenvalue(k_cap, c, d).map_err(lib_err)?;
        *out = g.lambda_min;
        Ok(())
    })
}

/// Penalized HUM control on the cylinder 𝕋 × (a,b) × (0,T). `phi0` holds
/// `n_modes × n_radial` coefficients. A non-converged solve still returns a
/// handle together with `DcStatus::NonConvergence`.
///
/// # Safety
/// `model` and `out` must be valid; `phi0` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_solve(
    model: *const DcModel,
    a: f64,
    b: f64,
    phi0: *const f64,
    len: usize,
    epsilon: f64,
    cg_tol: f64,
    max_iter: usize,
    out: *mut *mut DcHumResult,
) -> DcStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if phi0.is_null() {
            return Err(null("phi0"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let mut c = ModeCoeffs::zeros(m);
        let want = c.data.len() * c.n_radial;
        if len != want {
            return Err(lib_err(Error::DimensionMismatch {
                what: "phi0 coefficients",
                expected: want,
                got: len,
            }));
        }
        let src = std::slice::from_raw_parts(phi0, len);
        for (row, chunk) in c.data.iter_mut().zip(src.chunks(c.n_radial)) {
            row.copy_from_slice(chunk);
        }
        let region = ControlRegion::cylinder(a, b).map_err(lib_err)?;
        let opts = HumOptions {
            epsilon,
            cg_tol,
            max_iter,
        };
        let res = hum_control(m, &c, &region, &opts).map_err(lib_err)?;
        let converged = res.converged;
        let iterations = res.iterations;
        *out = Box::into_raw(Box::new(DcHumResult { inner: res }));
        if converged {
            Ok(())
        } else {
            Err((DcStatus::NonConvergence, format!("HUM did not converge in {iterations} iterations")))
        }
    })
}

/// ‖φ(T; f)‖ / ‖φ⁰‖ (zero for a zero datum).
///
/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_relative_residual(result: *const DcHumResult) -> f64 {
    match result.as_ref() {
        Some(r) if r.inner.phi0_norm > 0.0 => r.inner.terminal_residual / r.inner.phi0_norm,
        Some(_) => 0.0,
        None => f64::NAN,
    }
}

/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_iterations(result: *const DcHumResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.iterations)
}

/// ‖φ(T; f) + ε yᵀ‖ / ‖φ⁰‖.
///
/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_identity_defect(result: *const DcHumResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.identity_defect)
}

/// Copies the terminal adjoint datum yᵀ (`n_modes × n_radial` doubles).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_terminal_adjoint(result: *const DcHumResult, out: *mut f64, len: usize) -> DcStatus {
    guard(|| {
        let r = &result.as_ref().ok_or_else(|| null("result"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let flat: Vec<f64> = r.y_terminal.data.iter().flatten().copied().collect();
        if len != flat.len() {
            return Err(lib_err(Error::DimensionMismatch {
                what: "output buffer",
                expected: flat.len(),
                got: len,
            }));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&flat);
        Ok(())
    })
}

/// # Safety
/// `result` must come from [`dc_hum_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_hum_free(result: *mut DcHumResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
