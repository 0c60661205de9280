//! C ABI for `penning-phases`.
//!
//! Conventions:
//! * every fallible function returns a [`PpStatus`]; results go through
//!   out-pointers, which are left untouched on failure;
//! * `PpParams` and `PpSpectrum` are opaque handles owned by the caller and
//!   released with their `_free` function (passing NULL is a no-op);
//! * after a failure, [`pp_last_error_message`] describes it. The string is
//!   owned by the library and valid until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use penning_phases::model::{build_g, build_lambda, BindingPotential, SystemParams};
use penning_phases::phases::{self, FockLabel, PhaseReport};
use penning_phases::spectral::{classify, Classification, ModeSpectrum};
use penning_phases::sweep;
use penning_phases::Error;

/// Status codes; the nonzero values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    Io = 1,
    Domain = 2,
    Numerical = 3,
    NoCyclicStates = 4,
    NullPointer = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpBinding {
    PenningQuadrupole = 0,
    IsotropicOscillator = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpClassification {
    Confined = 0,
    Unconfined = 1,
    Boundary = 2,
}

/// Parameter point together with its binding potential.
pub struct PpParams {
    params: SystemParams,
    binding: BindingPotential,
}

/// Classified spectrum of one parameter point.
pub struct PpSpectrum {
    spectrum: ModeSpectrum,
}

/// Phase report of a Fock state. `has_phase_l3` is 0 at `omega = 0`, where
/// only the adiabatic route exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpPhase {
    pub quasienergy: f64,
    pub has_phase_l3: i32,
    pub phase_l3: f64,
    pub phase_freq: f64,
    pub dfreq_domega: [f64; 3],
    pub frequencies: [f64; 3],
    pub krein_signs: [i32; 3],
    pub method_spread: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpKcr {
    pub k_cr: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub tol: f64,
    pub iterations: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> PpStatus {
    match err.exit_code() {
        1 => PpStatus::Io,
        2 => PpStatus::Domain,
        4 => PpStatus::NoCyclicStates,
        _ => PpStatus::Numerical,
    }
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (PpStatus, String)>) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            PpStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PpStatus::Panic
        }
    }
}

fn lib<T>(r: penning_phases::Result<T>) -> Result<T, (PpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), (PpStatus, String)> {
    if p.is_null() {
        Err((PpStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

fn binding_of(b: PpBinding) -> BindingPotential {
    match b {
        PpBinding::PenningQuadrupole => BindingPotential::PenningQuadrupole,
        PpBinding::IsotropicOscillator => BindingPotential::IsotropicOscillator,
    }
}

unsafe fn emit_params(
    out: *mut *mut PpParams,
    params: penning_phases::Result<SystemParams>,
    binding: BindingPotential,
) -> Result<(), (PpStatus, String)> {
    non_null(out, "out")?;
    let params = lib(params)?;
    *out = Box::into_raw(Box::new(PpParams { params, binding }));
    Ok(())
}

/// Physical parameters: fields `b`, `b0`, trap frequency `w0`, rotation `omega`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn pp_params_new(
    b: f64,
    b0: f64,
    w0: f64,
    omega: f64,
    binding: PpBinding,
    out: *mut *mut PpParams,
) -> PpStatus {
    guard(|| {
        emit_params(
            out,
            SystemParams::new(b, b0, w0, omega),
            binding_of(binding),
        )
    })
}

/// Adiabatic-sweep point `b0 = 1`, `b = k`, `w0 = 4/3`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn pp_params_adiabatic(
    k: f64,
    omega: f64,
    binding: PpBinding,
    out: *mut *mut PpParams,
) -> PpStatus {
    guard(|| emit_params(out, SystemParams::adiabatic(k, omega), binding_of(binding)))
}

/// Dimensionless point with `omega = 1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn pp_params_dimensionless(
    alpha: f64,
    alpha0: f64,
    w: f64,
    binding: PpBinding,
    out: *mut *mut PpParams,
) -> PpStatus {
    guard(|| {
        emit_params(
            out,
            SystemParams::from_dimensionless(alpha, alpha0, w),
            binding_of(binding),
        )
    })
}

/// Replaces the binding by `V = ½(w1² x₁² + w2² x₂² + w3² x₃²)`.
///
/// # Safety
/// `params` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pp_params_set_diagonal_binding(
    params: *mut PpParams,
    w1: f64,
    w2: f64,
    w3: f64,
) -> PpStatus {
    guard(|| {
        non_null(params, "params")?;
        if ![w1, w2, w3].iter().all(|w| w.is_finite()) {
            return Err((
                PpStatus::Domain,
                "binding frequencies must be finite".into(),
            ));
        }
        (*params).binding = BindingPotential::DiagonalQuadratic([w1, w2, w3]);
        Ok(())
    })
}

/// # Safety
/// `params` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_params_free(params: *mut PpParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Classifies the point; the spectrum handle is created even when the point
/// is not confined.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_classify(
    params: *const PpParams,
    out: *mut *mut PpSpectrum,
) -> PpStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let p = &*params;
        let spectrum = lib(classify(&build_lambda(&build_g(&p.params, &p.binding))))?;
        *out = Box::into_raw(Box::new(PpSpectrum { spectrum }));
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_spectrum_classification(
    spectrum: *const PpSpectrum,
    out: *mut PpClassification,
) -> PpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        non_null(out, "out")?;
        *out = match (*spectrum).spectrum.classification {
            Classification::Confined => PpClassification::Confined,
            Classification::Unconfined => PpClassification::Unconfined,
            Classification::Boundary => PpClassification::Boundary,
        };
        Ok(())
    })
}

/// Number of normal modes: 3 when confined, 0 otherwise.
///
/// # Safety
/// `spectrum` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn pp_spectrum_mode_count(spectrum: *const PpSpectrum) -> usize {
    if spectrum.is_null() {
        0
    } else {
        let s = &*spectrum;
        s.spectrum.modes.len()
    }
}

/// Frequency and Krein sign (`+1` or `−1`) of mode `index`, by descending
/// frequency.
///
/// # Safety
/// `spectrum` must be a live handle; `freq` and `krein_sign` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_spectrum_mode(
    spectrum: *const PpSpectrum,
    index: usize,
    freq: *mut f64,
    krein_sign: *mut i32,
) -> PpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        non_null(freq, "freq")?;
        non_null(krein_sign, "krein_sign")?;
        let s = &*spectrum;
        let mode = s.spectrum.modes.get(index).ok_or_else(|| {
            (
                PpStatus::OutOfRange,
                format!("mode index {index} out of range"),
            )
        })?;
        *freq = mode.freq;
        *krein_sign = mode.krein_sign.value() as i32;
        Ok(())
    })
}

/// Eigenvalue `index` (0..6) of the dynamical matrix, by descending
/// imaginary part.
///
/// # Safety
/// `spectrum` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_spectrum_eigenvalue(
    spectrum: *const PpSpectrum,
    index: usize,
    re: *mut f64,
    im: *mut f64,
) -> PpStatus {
    guard(|| {
        non_null(spectrum, "spectrum")?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let s = &*spectrum;
        let ev = s.spectrum.raw_eigenvalues.get(index).ok_or_else(|| {
            (
                PpStatus::OutOfRange,
                format!("eigenvalue index {index} out of range"),
            )
        })?;
        *re = ev.re;
        *im = ev.im;
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_spectrum_free(spectrum: *mut PpSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

fn to_phase(r: &PhaseReport) -> PpPhase {
    PpPhase {
        quasienergy: r.quasienergy,
        has_phase_l3: i32::from(r.aa_phase_l3.is_some()),
        phase_l3: r.aa_phase_l3.unwrap_or(f64::NAN),
        phase_freq: r.aa_phase_freq,
        dfreq_domega: r.dfreq_domega,
        frequencies: r.frequencies,
        krein_signs: r.krein_signs.map(i32::from),
        method_spread: r.method_spread,
    }
}

/// Quasienergy and geometric phase of `|n1,n2,n3⟩`. Uses the cyclic
/// (Aharonov–Anandan) route when `omega > 0` and the adiabatic limit at
/// `omega = 0`.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_phase(
    params: *const PpParams,
    n1: u32,
    n2: u32,
    n3: u32,
    out: *mut PpPhase,
) -> PpStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let p = &*params;
        let n = FockLabel::new(n1, n2, n3);
        let report = if p.params.omega() > 0.0 {
            phases::aa_phase(&p.params, &p.binding, &n)
        } else {
            phases::berry_phase_static(&p.params, &p.binding, &n)
        };
        *out = to_phase(&lib(report)?);
        Ok(())
    })
}

/// Adiabatic phase at field ratio `k` (`b0 = 1`, `w0 = 4/3`, `omega = 0`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_berry_phase(
    k: f64,
    binding: PpBinding,
    n1: u32,
    n2: u32,
    n3: u32,
    out: *mut PpPhase,
) -> PpStatus {
    guard(|| {
        non_null(out, "out")?;
        let report =
            phases::berry_phase_adiabatic(k, &binding_of(binding), &FockLabel::new(n1, n2, n3));
        *out = to_phase(&lib(report)?);
        Ok(())
    })
}

/// Critical field ratio of the static Penning loop, bisected to `tol`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_find_kcr(tol: f64, out: *mut PpKcr) -> PpStatus {
    guard(|| {
        non_null(out, "out")?;
        let r = lib(sweep::find_kcr(tol))?;
        *out = PpKcr {
            k_cr: r.k_cr,
            bracket_lo: r.bracket[0],
            bracket_hi: r.bracket[1],
            tol: r.tol,
            iterations: r.iterations as u64,
        };
        Ok(())
    })
}

/// `(1 + k²)^{-1/2}`
#[no_mangle]
pub extern "C" fn pp_cos_theta(k: f64) -> f64 {
    phases::cos_theta(k)
}

/// Message for the last failed call on this thread (empty after success).
#[no_mangle]
pub extern "C" fn pp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
