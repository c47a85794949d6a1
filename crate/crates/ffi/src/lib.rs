//! C ABI for the workbench.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! `*_build` function and released by the matching `*_free`. Every
//! fallible function returns a [`PerfhomStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`perfhom_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use perfhom::cell::{build_corrector_set, CorrectorSet};
use perfhom::cli::{run_studies, write_outputs, StudyConfig};
use perfhom::coefficient::CoefficientField;
use perfhom::fem::mesh::mesh_macro;
use perfhom::geometry::{build_macro_domain, OuterDomain, PerforationSpec};
use perfhom::solve::{solve_eps_problem, solve_homogenized, ProblemData};
use perfhom::twoscale::{error_report, FirstOrderCorrector, HomogenizedField, SmoothingKernel};
use perfhom::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerfhomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geometry = 3,
    Mesh = 4,
    ResolutionGate = 5,
    Coefficient = 6,
    Singular = 7,
    NotConverged = 8,
    Config = 9,
    StudyFailed = 10,
    Io = 11,
    Panic = 12,
    Other = 13,
}

impl From<&Error> for PerfhomStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Geometry(_) => PerfhomStatus::Geometry,
            Error::Mesh(_) => PerfhomStatus::Mesh,
            Error::ResolutionGate { .. } => PerfhomStatus::ResolutionGate,
            Error::Coefficient(_) => PerfhomStatus::Coefficient,
            Error::Singular(_) => PerfhomStatus::Singular,
            Error::NotConverged { .. } => PerfhomStatus::NotConverged,
            Error::InvalidArgument(_) => PerfhomStatus::InvalidArgument,
            Error::Config { .. } => PerfhomStatus::Config,
            Error::StudyFailed { .. } => PerfhomStatus::StudyFailed,
            Error::Io(_) => PerfhomStatus::Io,
            Error::Cache(_) | Error::Json(_) => PerfhomStatus::Other,
        }
    }
}

/// Opaque cell-problem solution: correctors, `Â`, `θ` and diagnostics.
pub struct PerfhomCorrectorSet {
    inner: CorrectorSet,
}

/// Opaque parsed study configuration.
pub struct PerfhomConfig {
    inner: StudyConfig,
}

/// Residual checks of a cell solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PerfhomCellDiagnostics {
    pub chi_residual: f64,
    pub chi_mean: f64,
    pub b_mean: f64,
    pub flux_weak_residual: f64,
    pub flux_dual_residual: f64,
    pub psi_mean: f64,
}

/// Error functionals of one `ε`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PerfhomErrorReport {
    pub epsilon: f64,
    pub h: f64,
    pub h1_w: f64,
    pub l2_err: f64,
    pub lp_err_tau: f64,
    pub l4_err: f64,
    pub sqfn: f64,
    pub normalizer_g: f64,
}

/// Outcome of a study run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PerfhomRunOutcome {
    /// The CLI exit code: 0 all gates pass, 1 a gate fails, 3 a study failed.
    pub exit_code: i32,
    pub gates: usize,
    pub failed_gates: usize,
    pub gaps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// Runs `f`, mapping errors and panics to a status and the last-error slot.
fn guarded(f: impl FnOnce() -> Result<(), (PerfhomStatus, String)>) -> PerfhomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PerfhomStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PerfhomStatus::Panic
        }
    }
}

fn lift(e: Error) -> (PerfhomStatus, String) {
    (PerfhomStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (PerfhomStatus, String) {
    (PerfhomStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, (PerfhomStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| (PerfhomStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn perfhom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`, truncated and
/// NUL-terminated. Returns the full message length without the NUL, or 0
/// when the last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn perfhom_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Solves the cell problems for disk holes of radius `hole_radius` (0 for
/// no holes), Lamé constants `lambda`, `mu` and cell mesh size `h`.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn perfhom_corrector_set_build(
    hole_radius: f64,
    lambda: f64,
    mu: f64,
    h: f64,
    out: *mut *mut PerfhomCorrectorSet,
) -> PerfhomStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let spec = if hole_radius == 0.0 { PerforationSpec::none() } else { PerforationSpec::disk(hole_radius) };
        let coeff = CoefficientField::isotropic(lambda, mu);
        let inner = build_corrector_set(&spec, &coeff, h).map_err(lift)?;
        *out = Box::into_raw(Box::new(PerfhomCorrectorSet { inner }));
        Ok(())
    })
}

/// Releases a corrector set; null is ignored.
///
/// # Safety
/// `set` must be null or a handle from [`perfhom_corrector_set_build`] not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn perfhom_corrector_set_free(set: *mut PerfhomCorrectorSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Writes the 16 entries of `Â`, index `((i*2+j)*2+α)*2+β`, to `out`.
///
/// # Safety
/// `set` must be a live handle and `out` valid for 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn perfhom_corrector_set_effective_tensor(set: *const PerfhomCorrectorSet, out: *mut f64) -> PerfhomStatus {
    guarded(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(set.inner.a_hat.entries.0.as_ptr(), out, 16);
        Ok(())
    })
}

/// Material area fraction `θ` of the cell.
///
/// # Safety
/// `set` must be a live handle and `out` valid for one double.
#[no_mangle]
pub unsafe extern "C" fn perfhom_corrector_set_theta(set: *const PerfhomCorrectorSet, out: *mut f64) -> PerfhomStatus {
    guarded(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = set.inner.theta;
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle and `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn perfhom_corrector_set_diagnostics(
    set: *const PerfhomCorrectorSet,
    out: *mut PerfhomCellDiagnostics,
) -> PerfhomStatus {
    guarded(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = set.inner.diagnostics;
        *out = PerfhomCellDiagnostics {
            chi_residual: d.chi_residual,
            chi_mean: d.chi_mean,
            b_mean: d.b_mean,
            flux_weak_residual: d.flux_weak_residual,
            flux_dual_residual: d.flux_dual_residual,
            psi_mean: d.psi_mean,
        };
        Ok(())
    })
}

/// Solves the `ε = 1/n` problem with boundary data only at `h = ε/h_per_eps`
/// and reports the error functionals. The set's cell mesh size must be
/// `1/h_per_eps`.
///
/// # Safety
/// `set` must be a live handle and `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn perfhom_error_report(
    set: *const PerfhomCorrectorSet,
    n: usize,
    h_per_eps: usize,
    tau: f64,
    out: *mut PerfhomErrorReport,
) -> PerfhomStatus {
    guarded(|| {
        let set = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if h_per_eps == 0 {
            return Err((PerfhomStatus::InvalidArgument, "h_per_eps must be positive".into()));
        }
        let d = build_macro_domain(OuterDomain::UnitSquare, n, set.spec).map_err(lift)?;
        let mm = mesh_macro(&d, d.epsilon / h_per_eps as f64).map_err(lift)?;
        let data = ProblemData::boundary_only();
        let u = solve_eps_problem(&mm, set, &data).map_err(lift)?;
        let u0 = HomogenizedField::new(solve_homogenized(&set.a_hat, &data, mm.h()).map_err(lift)?).map_err(lift)?;
        let kernel = SmoothingKernel::default();
        let corr = FirstOrderCorrector::new(&mm, set, &u0, &kernel).map_err(lift)?;
        let r = error_report(&corr, &u, &data, tau).map_err(lift)?;
        *out = PerfhomErrorReport {
            epsilon: r.epsilon,
            h: r.h,
            h1_w: r.h1_w,
            l2_err: r.l2_err,
            lp_err_tau: r.lp_err_tau,
            l4_err: r.l4_err,
            sqfn: r.sqfn,
            normalizer_g: r.normalizer_g,
        };
        Ok(())
    })
}

/// Parses and validates a TOML study configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn perfhom_config_parse(toml: *const c_char, out: *mut *mut PerfhomConfig) -> PerfhomStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let inner = StudyConfig::from_toml(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(PerfhomConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`perfhom_config_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn perfhom_config_free(cfg: *mut PerfhomConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured studies, writing reports to `out_dir` and using
/// `cache_dir` for cell solves. Null directories keep the configured ones.
///
/// # Safety
/// `cfg` must be a live handle, the directories null or NUL-terminated and
/// `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn perfhom_run(
    cfg: *const PerfhomConfig,
    out_dir: *const c_char,
    cache_dir: *const c_char,
    out: *mut PerfhomRunOutcome,
) -> PerfhomStatus {
    guarded(|| {
        let mut cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?.inner.clone();
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if !out_dir.is_null() {
            cfg.run.out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        if !cache_dir.is_null() {
            cfg.run.cache = PathBuf::from(str_arg(cache_dir, "cache_dir")?);
        }
        let summary = run_studies(&cfg, &cfg.run.cache).map_err(lift)?;
        write_outputs(&summary, &cfg.run.out).map_err(lift)?;
        *out = PerfhomRunOutcome {
            exit_code: summary.exit_code(),
            gates: summary.gates.len(),
            failed_gates: summary.gates.iter().filter(|g| !g.pass).count(),
            gaps: summary.gaps.len(),
        };
        Ok(())
    })
}
