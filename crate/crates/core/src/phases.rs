//! Quasienergies and geometric phases of the cyclic states `|n₁,n₂,n₃⟩`.
//!
//! In the confined domain `G = Σ εᵢωᵢ(Aᵢ†Aᵢ + εᵢ/2)`, so the eigenstates of
//! `G` return to themselves after one field period `T = 2π/ω` up to the
//! phase `e^{−iET}`. Their Aharonov–Anandan phase is computed two ways:
//!
//! * `2π⟨L₃⟩`, the expectation of the angular momentum in the Fock state;
//! * `−2π ∂E/∂ω = −2π Σ εᵢ(nᵢ + ½) ∂ωᵢ/∂ω`, with `∂/∂ω` at fixed fields.
//!
//! The two agree by the Hellmann–Feynman theorem because `∂G/∂ω = −L₃`.
//! The Berry phase is the `ω → 0` limit of the second form.

use std::f64::consts::PI;

use nalgebra::SMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    build_g, build_l3_form, build_lambda, g_matrix, lambda_omega_derivative, BindingPotential,
    DynamicalMatrix, QuadraticForm, SystemParams,
};
use crate::spectral::{
    classify, left_eigenvector, normal_mode_basis, track_modes, CMat6, Classification, Complex64,
    KreinSign, Mode, ModeSpectrum, NormalModeBasis,
};

/// Methods must agree to this relative tolerance (floored at unit scale).
pub const DERIVATIVE_AGREEMENT: f64 = 1e-6;
/// The two phase routes must satisfy `|a − b| ≤ PHASE_AGREEMENT·(1 + |b|)`.
pub const PHASE_AGREEMENT: f64 = 1e-6;
/// Relative finite-difference step, scaled by `max(1, ω)`.
pub const FINITE_DIFF_STEP: f64 = 1e-5;

/// Quanta per mode, in the (descending-frequency) mode order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct FockLabel {
    pub n: [u32; 3],
}

impl FockLabel {
    pub fn new(n1: u32, n2: u32, n3: u32) -> Self {
        Self { n: [n1, n2, n3] }
    }

    pub fn ground() -> Self {
        Self::default()
    }

    fn half(&self, i: usize) -> f64 {
        f64::from(self.n[i]) + 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// Implicit differentiation of `det(λI − Λ(ω)) = 0`.
    Implicit,
    /// First-order perturbation theory with left and right eigenvectors.
    Perturbative,
    /// Central differences with one Richardson step.
    FiniteDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeSet {
    pub implicit: [f64; 3],
    pub perturbative: [f64; 3],
    pub finite_diff: [f64; 3],
}

impl DerivativeSet {
    /// Largest pairwise disagreement, `|a − b| / max(1, |a|, |b|)`.
    pub fn spread(&self) -> f64 {
        let sets = [self.implicit, self.perturbative, self.finite_diff];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                worst = worst.max(relative_difference(sets[a][i], sets[b][i]));
            }
        }
        worst
    }
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub label: FockLabel,
    pub quasienergy: f64,
    /// `2π⟨L₃⟩`; `None` at `ω = 0`, where there is no cyclic evolution.
    pub aa_phase_l3: Option<f64>,
    /// `−2π Σ εᵢ(nᵢ + ½) ∂ωᵢ/∂ω`
    pub aa_phase_freq: f64,
    /// `∂ωᵢ/∂ω` from the perturbative route.
    pub dfreq_domega: [f64; 3],
    pub frequencies: [f64; 3],
    pub krein_signs: [i8; 3],
    pub derivatives: DerivativeSet,
    pub method_spread: f64,
}

/// `Σ εᵢ ωᵢ (nᵢ + ½)`
pub fn quasienergy(basis: &NormalModeBasis, n: &FockLabel) -> f64 {
    basis
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| m.krein_sign.value() * m.freq * n.half(i))
        .sum()
}

fn spectrum_quasienergy(spectrum: &ModeSpectrum, n: &FockLabel) -> f64 {
    spectrum
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| m.krein_sign.value() * m.freq * n.half(i))
        .sum()
}

/// `⟨n| ½uᵀQu |n⟩` (symmetric operator ordering). Writing
/// `u = Σᵢ (dᵢAᵢ + d̄ᵢAᵢ†)`, only the number-conserving terms survive and
/// the result is `Σᵢ (nᵢ + ½) dᵢᴴ Q dᵢ`.
pub fn expectation_quadratic(q: &QuadraticForm, basis: &NormalModeBasis, n: &FockLabel) -> f64 {
    let qc = q.matrix().map(|x| Complex64::new(x, 0.0));
    basis
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| n.half(i) * m.displacement.dotc(&(qc * m.displacement)).re)
        .sum()
}

/// `(1 + k²)^{-1/2}`, the cosine of the precession cone half-angle.
pub fn cos_theta(k: f64) -> f64 {
    1.0 / k.hypot(1.0)
}

fn describe(params: &SystemParams, binding: &BindingPotential) -> String {
    format!(
        "b={}, b0={}, w0={}, omega={}, binding={binding}",
        params.b(),
        params.b0(),
        params.w0(),
        params.omega()
    )
}

/// Classifies the point and insists on a confined spectrum.
fn confined_spectrum(
    dm: &DynamicalMatrix,
    params: &SystemParams,
    binding: &BindingPotential,
) -> Result<ModeSpectrum> {
    let spectrum = classify(dm)
        .map_err(|e| Error::Numerical(format!("{e} (at {})", describe(params, binding))))?;
    match spectrum.classification {
        Classification::Confined => Ok(spectrum),
        Classification::Unconfined => Err(Error::NoCyclicStates(format!(
            "unconfined spectrum at {}",
            describe(params, binding)
        ))),
        Classification::Boundary => Err(Error::Degenerate(format!(
            "degenerate or zero mode at {}; evaluate at k > 0 or at an omega > 0 offset",
            describe(params, binding)
        ))),
    }
}

/// `∂ωᵢ/∂ω` of a single stable mode, `Im(wᴴΛ′v / wᴴv)` with `w` the
/// left eigenvector.
pub fn mode_derivative(dm: &DynamicalMatrix, mode: &Mode) -> f64 {
    let dl = lambda_omega_derivative().map(|x| Complex64::new(x, 0.0));
    let w = left_eigenvector(dm.lambda(), Complex64::new(0.0, mode.freq));
    let v = &mode.eigvec;
    (w.dotc(&(dl * v)) / w.dotc(v)).im
}

fn perturbative(dm: &DynamicalMatrix, spectrum: &ModeSpectrum) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (slot, mode) in out.iter_mut().zip(&spectrum.modes) {
        *slot = mode_derivative(dm, mode);
    }
    out
}

/// Cofactor expansion of the adjugate; well defined even where `m` is singular.
fn adjugate(m: &CMat6) -> CMat6 {
    let mut adj = CMat6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            let minor = SMatrix::<Complex64, 5, 5>::from_fn(|r, c| {
                let rr = if r < i { r } else { r + 1 };
                let cc = if c < j { c } else { c + 1 };
                m[(rr, cc)]
            });
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = minor.determinant() * sign;
        }
    }
    adj
}

/// `dλ/dω = −(∂D/∂ω)/(∂D/∂λ)` with `D = det(λI − Λ)`. By Jacobi's formula
/// `∂D/∂λ = tr adj(λI − Λ)` and `∂D/∂ω = −tr(adj(λI − Λ) Λ′)`.
fn implicit(dm: &DynamicalMatrix, spectrum: &ModeSpectrum) -> Result<[f64; 3]> {
    let lambda = dm.lambda().map(|x| Complex64::new(x, 0.0));
    let dl = lambda_omega_derivative().map(|x| Complex64::new(x, 0.0));
    let mut out = [0.0; 3];
    for (slot, mode) in out.iter_mut().zip(&spectrum.modes) {
        let ev = Complex64::new(0.0, mode.freq);
        let adj = adjugate(&(CMat6::identity() * ev - lambda));
        let d_lambda = adj.trace();
        if d_lambda.norm() <= f64::EPSILON * adj.norm() {
            return Err(Error::Degenerate(format!(
                "∂D/∂λ vanishes at frequency {}; eigenvalue is not simple",
                mode.freq
            )));
        }
        *slot = ((adj * dl).trace() / d_lambda).im;
    }
    Ok(out)
}

fn finite_diff(
    params: &SystemParams,
    binding: &BindingPotential,
    spectrum: &ModeSpectrum,
) -> Result<[f64; 3]> {
    let h = FINITE_DIFF_STEP * params.omega().max(1.0);
    let freqs_at = |omega: f64| -> Result<[f64; 3]> {
        let form = QuadraticForm::from_matrix(g_matrix(params, binding, omega));
        let dm = build_lambda(&form);
        let shifted = classify(&dm)?;
        if !shifted.is_confined() {
            return Err(Error::Degenerate(format!(
                "finite-difference stencil at omega={omega} left the confined domain"
            )));
        }
        let perm = track_modes(spectrum, &shifted)?;
        Ok([0, 1, 2].map(|i| shifted.modes[perm[i]].freq))
    };
    let omega = params.omega();
    let central = |step: f64| -> Result<[f64; 3]> {
        let plus = freqs_at(omega + step)?;
        let minus = freqs_at(omega - step)?;
        Ok([0, 1, 2].map(|i| (plus[i] - minus[i]) / (2.0 * step)))
    };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok([0, 1, 2].map(|i| (4.0 * fine[i] - coarse[i]) / 3.0))
}

fn derivatives_at(
    dm: &DynamicalMatrix,
    spectrum: &ModeSpectrum,
    params: &SystemParams,
    binding: &BindingPotential,
) -> Result<DerivativeSet> {
    Ok(DerivativeSet {
        implicit: implicit(dm, spectrum)?,
        perturbative: perturbative(dm, spectrum),
        finite_diff: finite_diff(params, binding, spectrum)?,
    })
}

/// `∂ωᵢ/∂ω` at fixed `(b, b0, w0)`, in descending-frequency mode order.
pub fn dmode_domega(
    params: &SystemParams,
    binding: &BindingPotential,
    method: DerivativeMethod,
) -> Result<[f64; 3]> {
    let dm = build_lambda(&build_g(params, binding));
    let spectrum = confined_spectrum(&dm, params, binding)?;
    match method {
        DerivativeMethod::Implicit => implicit(&dm, &spectrum),
        DerivativeMethod::Perturbative => Ok(perturbative(&dm, &spectrum)),
        DerivativeMethod::FiniteDiff => finite_diff(params, binding, &spectrum),
    }
}

/// All three derivative routes at one point.
pub fn dmode_domega_all(
    params: &SystemParams,
    binding: &BindingPotential,
) -> Result<DerivativeSet> {
    let dm = build_lambda(&build_g(params, binding));
    let spectrum = confined_spectrum(&dm, params, binding)?;
    derivatives_at(&dm, &spectrum, params, binding)
}

fn freq_phase(spectrum: &ModeSpectrum, dfreq: &[f64; 3], n: &FockLabel) -> f64 {
    let slope: f64 = spectrum
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| m.krein_sign.value() * n.half(i) * dfreq[i])
        .sum();
    -2.0 * PI * slope
}

fn signs(spectrum: &ModeSpectrum) -> [i8; 3] {
    let mut out = [0; 3];
    for (slot, m) in out.iter_mut().zip(&spectrum.modes) {
        *slot = match m.krein_sign {
            KreinSign::Positive => 1,
            KreinSign::Negative => -1,
        };
    }
    out
}

fn freqs(spectrum: &ModeSpectrum) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (slot, m) in out.iter_mut().zip(&spectrum.modes) {
        *slot = m.freq;
    }
    out
}

/// Aharonov–Anandan phase of the cyclic state `|n⟩` for `ω > 0`, by both
/// routes. Fails if the routes disagree beyond [`PHASE_AGREEMENT`].
pub fn aa_phase(
    params: &SystemParams,
    binding: &BindingPotential,
    n: &FockLabel,
) -> Result<PhaseReport> {
    if params.omega() <= 0.0 {
        return Err(Error::Domain(
            "the cyclic AA phase needs omega > 0; use the adiabatic Berry phase at omega = 0"
                .into(),
        ));
    }
    let form = build_g(params, binding);
    let dm = build_lambda(&form);
    let spectrum = confined_spectrum(&dm, params, binding)?;
    let basis = normal_mode_basis(&spectrum, &form)?;
    let derivatives = derivatives_at(&dm, &spectrum, params, binding)?;
    let dfreq = derivatives.perturbative;

    let from_l3 = 2.0 * PI * expectation_quadratic(&build_l3_form(), &basis, n);
    let from_freq = freq_phase(&spectrum, &dfreq, n);
    if (from_l3 - from_freq).abs() > PHASE_AGREEMENT * (1.0 + from_freq.abs()) {
        return Err(Error::Numerical(format!(
            "2π⟨L₃⟩ = {from_l3} disagrees with −2π∂E/∂ω = {from_freq} at {}",
            describe(params, binding)
        )));
    }
    Ok(PhaseReport {
        label: *n,
        quasienergy: quasienergy(&basis, n),
        aa_phase_l3: Some(from_l3),
        aa_phase_freq: from_freq,
        dfreq_domega: dfreq,
        frequencies: freqs(&spectrum),
        krein_signs: signs(&spectrum),
        method_spread: derivatives.spread(),
        derivatives,
    })
}

/// Adiabatic (Berry) phase at field ratio `k = B/B₀` with `b0 = 1`,
/// `w0 = 4/3`, evaluated directly at `ω = 0`.
pub fn berry_phase_adiabatic(
    k: f64,
    binding: &BindingPotential,
    n: &FockLabel,
) -> Result<PhaseReport> {
    let params = SystemParams::adiabatic(k, 0.0)?;
    berry_phase_static(&params, binding, n).map_err(|e| match e {
        Error::NoCyclicStates(msg) => Error::NoCyclicStates(format!(
            "{msg}: at least one mode is unconfined for k={k}, the Berry phase is undefined"
        )),
        other => other,
    })
}

/// `ω → 0` limit of the second phase route at an arbitrary static point.
pub fn berry_phase_static(
    params: &SystemParams,
    binding: &BindingPotential,
    n: &FockLabel,
) -> Result<PhaseReport> {
    if params.omega() != 0.0 {
        return Err(Error::Domain(format!(
            "the adiabatic limit is taken at omega = 0, got omega = {}",
            params.omega()
        )));
    }
    let dm = build_lambda(&build_g(params, binding));
    let spectrum = confined_spectrum(&dm, params, binding)?;
    let derivatives = derivatives_at(&dm, &spectrum, params, binding)?;
    let dfreq = derivatives.perturbative;
    Ok(PhaseReport {
        label: *n,
        quasienergy: spectrum_quasienergy(&spectrum, n),
        aa_phase_l3: None,
        aa_phase_freq: freq_phase(&spectrum, &dfreq, n),
        dfreq_domega: dfreq,
        frequencies: freqs(&spectrum),
        krein_signs: signs(&spectrum),
        method_spread: derivatives.spread(),
        derivatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceShift {
    /// `E_n − E_n′` at the unperturbed rotation rate.
    pub omega_p: f64,
    /// `ω_p − (β_n − β_n′) δω / 2π`
    pub predicted: f64,
    /// `E_n − E_n′` recomputed at `ω + δω`.
    pub exact: f64,
    pub linearization_error: f64,
    pub beta_n: f64,
    pub beta_n_prime: f64,
}

/// First-order shift of the resonance between two quasienergy levels when
/// the rotation rate changes by `delta_omega`.
pub fn resonance_shift(
    params: &SystemParams,
    binding: &BindingPotential,
    n: &FockLabel,
    n_prime: &FockLabel,
    delta_omega: f64,
) -> Result<ResonanceShift> {
    if !delta_omega.is_finite() {
        return Err(Error::Domain("delta_omega must be finite".into()));
    }
    let dm = build_lambda(&build_g(params, binding));
    let spectrum = confined_spectrum(&dm, params, binding)?;
    let dfreq = perturbative(&dm, &spectrum);
    let beta_n = freq_phase(&spectrum, &dfreq, n);
    let beta_n_prime = freq_phase(&spectrum, &dfreq, n_prime);
    let omega_p = spectrum_quasienergy(&spectrum, n) - spectrum_quasienergy(&spectrum, n_prime);
    let predicted = omega_p - (beta_n - beta_n_prime) / (2.0 * PI) * delta_omega;

    let exact = if delta_omega == 0.0 {
        omega_p
    } else {
        let omega = params.omega() + delta_omega;
        let shifted_dm = build_lambda(&QuadraticForm::from_matrix(g_matrix(
            params, binding, omega,
        )));
        let shifted = classify(&shifted_dm)?;
        if !shifted.is_confined() {
            return Err(Error::NoCyclicStates(format!(
                "shifted rotation rate omega={omega} leaves the confined domain"
            )));
        }
        let perm = track_modes(&spectrum, &shifted)?;
        let energy = |label: &FockLabel| -> Result<f64> {
            let mut e = 0.0;
            for i in 0..3 {
                let m = &shifted.modes[perm[i]];
                if m.krein_sign != spectrum.modes[i].krein_sign {
                    return Err(Error::Degenerate(
                        "Krein sign changed under the shift".into(),
                    ));
                }
                e += m.krein_sign.value() * m.freq * label.half(i);
            }
            Ok(e)
        };
        energy(n)? - energy(n_prime)?
    };
    Ok(ResonanceShift {
        omega_p,
        predicted,
        exact,
        linearization_error: (predicted - exact).abs(),
        beta_n,
        beta_n_prime,
    })
}
