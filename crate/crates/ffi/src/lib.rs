//! C interface: opaque case and model handles, power-flow solves, model
//! prediction and the envelope sample-bound helpers.
//!
//! Every fallible call returns a [`GkStatus`]; on failure the message is
//! available from [`gk_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gridkernel::acpf::{solve_nr, InjectionVector, PfOptions};
use gridkernel::gpr::GpModel;
use gridkernel::netcase::{self, GridCase, Topology};
use gridkernel::pve;
use gridkernel::Error;

/// Opaque grid case.
pub struct GkCase(GridCase);

/// Opaque trained GP model.
pub struct GkModel(GpModel);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed case or model file.
    Format = 3,
    /// Solver or factorization failure.
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GkStatus {
    match e {
        _ if e.is_numerical() => GkStatus::Numerical,
        Error::Io { .. } => GkStatus::Io,
        Error::Parse { .. } | Error::Format { .. } | Error::Validation(_) => GkStatus::Format,
        _ => GkStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (GkStatus, String)>) -> GkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GkStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            GkStatus::Panic
        }
    }
}

fn lib(e: Error) -> (GkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GkStatus, String) {
    (GkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (GkStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (GkStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library.
#[no_mangle]
pub extern "C" fn gk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a MATPOWER or JSON case file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_case_load(path: *const c_char, out: *mut *mut GkCase) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let case = GridCase::from_file(path_arg(path)?).map_err(lib)?;
        *out = Box::into_raw(Box::new(GkCase(case)));
        Ok(())
    })
}

/// The bundled IEEE 30-bus case.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_case_ieee30(out: *mut *mut GkCase) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(GkCase(netcase::case30())));
        Ok(())
    })
}

/// # Safety
/// `case` must come from a `gk_case_*` constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn gk_case_free(case: *mut GkCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Number of buses, 0 for a null handle.
///
/// # Safety
/// `case` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_case_bus_count(case: *const GkCase) -> usize {
    case.as_ref().map_or(0, |c| c.0.bus_count())
}

/// Number of branches, 0 for a null handle.
///
/// # Safety
/// `case` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_case_branch_count(case: *const GkCase) -> usize {
    case.as_ref().map_or(0, |c| c.0.branch_count())
}

/// Base-load Newton-Raphson solve with the listed branch ids out of
/// service. Writes one magnitude per bus, in case order, into `v_mag`
/// (length `len` must equal the bus count) and the iteration count into
/// `iterations` when non-null. Non-convergence returns `Numerical`.
///
/// # Safety
/// `outages` must point to `n_outages` ids (may be null when zero);
/// `v_mag` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_pf_solve(
    case: *const GkCase,
    outages: *const usize,
    n_outages: usize,
    v_mag: *mut f64,
    len: usize,
    iterations: *mut usize,
) -> GkStatus {
    guard(|| {
        let case = &case.as_ref().ok_or_else(|| null("case"))?.0;
        if v_mag.is_null() {
            return Err(null("v_mag"));
        }
        if len != case.bus_count() {
            return Err((
                GkStatus::InvalidArgument,
                format!("buffer holds {len} values, case has {} buses", case.bus_count()),
            ));
        }
        let ids: &[usize] = if n_outages == 0 {
            &[]
        } else if outages.is_null() {
            return Err(null("outages"));
        } else {
            std::slice::from_raw_parts(outages, n_outages)
        };
        let topo = Topology::with_outages(case, ids).map_err(lib)?;
        let sol = solve_nr(case, &topo, &InjectionVector::base_case(case), &PfOptions::default())
            .map_err(lib)?;
        if !sol.converged {
            return Err((
                GkStatus::Numerical,
                format!("no convergence: {}", sol.reason.unwrap_or_default()),
            ));
        }
        std::slice::from_raw_parts_mut(v_mag, len).copy_from_slice(&sol.v_mag);
        if !iterations.is_null() {
            *iterations = sol.iterations;
        }
        Ok(())
    })
}

/// Loads a model JSON file written by the library or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_model_load(path: *const c_char, out: *mut *mut GkModel) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = GpModel::load(path_arg(path)?).map_err(lib)?;
        *out = Box::into_raw(Box::new(GkModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `gk_model_load` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn gk_model_free(model: *mut GkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature length a prediction expects (`2 × buses`), 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_model_input_dim(model: *const GkModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.input_dim())
}

/// Predictive mean and latent variance at one injection given as
/// interleaved per-unit `[p1, q1, p2, q2, ...]`.
///
/// # Safety
/// `x` must hold `len` doubles; `mean` and `var` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_model_predict(
    model: *const GkModel,
    x: *const f64,
    len: usize,
    mean: *mut f64,
    var: *mut f64,
) -> GkStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if x.is_null() || mean.is_null() || var.is_null() {
            return Err(null("buffer"));
        }
        if len != model.input_dim() {
            return Err((
                GkStatus::InvalidArgument,
                format!("input has {len} values, model expects {}", model.input_dim()),
            ));
        }
        let row = std::slice::from_raw_parts(x, len).to_vec();
        let (m, v) = model.predict_batch(&[row]).map_err(lib)?;
        *mean = m[0];
        *var = v[0];
        Ok(())
    })
}

/// Scenario count needed for violation level `epsilon` at confidence
/// `1 - delta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_required_samples(epsilon: f64, delta: f64, out: *mut usize) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = pve::required_samples(epsilon, delta).map_err(lib)?;
        Ok(())
    })
}

/// Upper standard-normal tail probability at `kappa`.
#[no_mangle]
pub extern "C" fn gk_gamma_tail(kappa: f64) -> f64 {
    pve::gamma_tail(kappa)
}

/// Envelope confidence after accounting for `t` GP evaluations at `kappa`.
#[no_mangle]
pub extern "C" fn gk_adjusted_confidence(delta: f64, kappa: f64, t: usize) -> f64 {
    pve::adjusted_confidence(delta, kappa, t)
}
