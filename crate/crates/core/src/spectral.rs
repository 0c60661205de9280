//! Eigenanalysis of the dynamical matrix `Λ = J S`.
//!
//! A point is *confined* when all six eigenvalues are purely imaginary,
//! simple and nonzero. Each conjugate pair `±iωᵢ` is then a normal mode with
//! a Krein sign `εᵢ = sign(v̄ᵀ S v)`, which decides whether the mode adds
//! `+ωᵢ` or `−ωᵢ` per quantum to the quasienergy.

use std::f64::consts::PI;

use faer::complex_native::c64;
use nalgebra::{Complex, SMatrix, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{symplectic_unit, DynamicalMatrix, Mat6, QuadraticForm, Vec6};

pub type Complex64 = Complex<f64>;
pub type CVec6 = SVector<Complex64, 6>;
pub type CMat6 = SMatrix<Complex64, 6, 6>;

/// Relative factor of the real-part tolerance, `τ_re = 1e-9·(1 + ‖Λ‖)`.
pub const RE_TOLERANCE_FACTOR: f64 = 1e-9;
/// Relative factor of the gap tolerance, `τ_gap = 1e-7·(1 + ‖Λ‖)`.
pub const GAP_TOLERANCE_FACTOR: f64 = 1e-7;
/// Relative residual bound on computed eigenvectors.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Pairings whose total overlaps differ by less than this are ambiguous.
pub const TRACKING_AMBIGUITY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub re: f64,
    pub gap: f64,
}

impl Tolerances {
    pub fn for_matrix(dm: &DynamicalMatrix) -> Self {
        let scale = 1.0 + dm.norm();
        Self {
            re: RE_TOLERANCE_FACTOR * scale,
            gap: GAP_TOLERANCE_FACTOR * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Classification {
    Confined,
    Unconfined,
    /// Imaginary spectrum with a degeneracy or a zero mode.
    Boundary,
}

impl Classification {
    /// One-letter code used in CSV output.
    pub fn code(self) -> char {
        match self {
            Classification::Confined => 'C',
            Classification::Unconfined => 'U',
            Classification::Boundary => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum KreinSign {
    Positive,
    Negative,
}

impl KreinSign {
    pub fn value(self) -> f64 {
        match self {
            KreinSign::Positive => 1.0,
            KreinSign::Negative => -1.0,
        }
    }

    fn from_value(x: f64) -> Self {
        if x > 0.0 {
            KreinSign::Positive
        } else {
            KreinSign::Negative
        }
    }
}

/// One normal mode: `Λ v = i·freq·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub freq: f64,
    pub krein_sign: KreinSign,
    /// Unit-norm eigenvector, largest component real and positive.
    pub eigvec: CVec6,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub classification: Classification,
    /// Exactly three modes, by descending frequency, when confined; empty otherwise.
    pub modes: Vec<Mode>,
    /// All six eigenvalues, by descending imaginary part.
    pub raw_eigenvalues: [Complex64; 6],
    pub tolerances: Tolerances,
}

impl ModeSpectrum {
    pub fn is_confined(&self) -> bool {
        self.classification == Classification::Confined
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.freq).collect()
    }

    pub fn krein_signs(&self) -> Vec<KreinSign> {
        self.modes.iter().map(|m| m.krein_sign).collect()
    }

    /// Krein signs in descending-frequency order; constant on any confined
    /// region that is not crossed by a collision.
    pub fn signature(&self) -> Option<[KreinSign; 3]> {
        match self.modes.as_slice() {
            [a, b, c] if self.is_confined() => Some([a.krein_sign, b.krein_sign, c.krein_sign]),
            _ => None,
        }
    }

    pub fn krein_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.krein_sign.value()).sum()
    }

    /// Largest real part over the spectrum (the growth exponent).
    pub fn max_real_part(&self) -> f64 {
        self.raw_eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn to_complex(m: &Mat6) -> CMat6 {
    m.map(|x| Complex64::new(x, 0.0))
}

fn faer_eigenvalues(m: &Mat6) -> Option<Vec<Complex64>> {
    let fm = faer::Mat::<f64>::from_fn(6, 6, |i, j| m[(i, j)]);
    Some(
        fm.eigenvalues::<c64>()
            .into_iter()
            .map(|z| Complex64::new(z.re, z.im))
            .collect(),
    )
}

fn schur_eigenvalues(m: &Mat6) -> Option<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(*m, 1e-15, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of `Λ` sorted by descending imaginary part, ties by real part.
///
/// faer's real Schur iteration occasionally fails to converge on matrices of
/// this structure; nalgebra's Schur and then faer on an orthogonally similar
/// matrix are tried before giving up.
pub fn eigenvalues(dm: &DynamicalMatrix) -> Result<[Complex64; 6]> {
    let lambda = dm.lambda();
    let reflected = || {
        let v = Vec6::from_fn(|i, _| 1.0 + 0.37 * i as f64).normalize();
        let q = Mat6::identity() - v * v.transpose() * 2.0;
        faer_eigenvalues(&(q * lambda * q))
    };
    let valid = |ev: &Vec<Complex64>| {
        ev.len() == 6 && ev.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    };
    let ev = faer_eigenvalues(lambda)
        .filter(valid)
        .or_else(|| schur_eigenvalues(lambda).filter(valid))
        .or_else(|| reflected().filter(valid))
        .ok_or_else(|| Error::Numerical(format!("eigenvalue solver failed for Λ ={lambda}")))?;
    let mut out = [Complex64::new(0.0, 0.0); 6];
    out.copy_from_slice(&ev);
    out.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
    Ok(out)
}

fn fix_phase(v: CVec6) -> CVec6 {
    let norm = v.norm();
    let v = v.unscale(norm);
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // first component within rounding of the maximum
    let pivot = v
        .iter()
        .find(|z| z.norm() >= max * (1.0 - 1e-12))
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    v * (pivot.conj() / pivot.norm())
}

/// Null vector of `m` from its smallest singular value.
fn null_vector(m: &CMat6) -> CVec6 {
    let fm = faer::Mat::<c64>::from_fn(6, 6, |i, j| {
        let z = m[(i, j)];
        c64::new(z.re, z.im)
    });
    let svd = fm.svd();
    let s = svd.s_diagonal();
    let idx = (0..6)
        .min_by(|&a, &b| s.read(a).re.total_cmp(&s.read(b).re))
        .expect("six singular values");
    let v = svd.v();
    CVec6::from_fn(|i, _| {
        let z = v.read(i, idx);
        Complex64::new(z.re, z.im)
    })
}

/// Right eigenvector for the eigenvalue `ev`, unit norm with a fixed phase.
pub fn right_eigenvector(lambda: &Mat6, ev: Complex64) -> CVec6 {
    let m = to_complex(lambda) - CMat6::identity() * ev;
    fix_phase(null_vector(&m))
}

/// Left eigenvector `w` with `wᴴ Λ = ev·wᴴ`.
pub fn left_eigenvector(lambda: &Mat6, ev: Complex64) -> CVec6 {
    right_eigenvector(&lambda.transpose(), ev.conj())
}

/// `‖Λ v − λ v‖`
pub fn residual(lambda: &Mat6, ev: Complex64, v: &CVec6) -> f64 {
    (to_complex(lambda) * v - v * ev).norm()
}

/// Krein sign of a stable mode from its energy form `v̄ᵀ S v`.
pub fn krein_sign(v: &CVec6, form: &QuadraticForm) -> Result<KreinSign> {
    let energy = energy_form(v, form);
    let floor = 1e-10 * form.matrix().norm() * v.norm_squared();
    if energy.norm() <= floor {
        return Err(Error::Degenerate(format!(
            "mode energy {:.3e} below {floor:.3e}; the mode sits on a Krein collision",
            energy.norm()
        )));
    }
    Ok(KreinSign::from_value(energy.re))
}

/// `v̄ᵀ S v`, real up to rounding for symmetric `S`.
pub fn energy_form(v: &CVec6, form: &QuadraticForm) -> Complex64 {
    v.dotc(&(to_complex(form.matrix()) * v))
}

/// Sign of the symplectic pairing `i vᵀ J v̄`. For an eigenvector of
/// `J S` with eigenvalue `iω`, ω > 0, this equals the energy-form sign.
pub fn symplectic_pairing_sign(v: &CVec6) -> KreinSign {
    let j = to_complex(&symplectic_unit());
    let pairing = (v.transpose() * j * v.map(|z| z.conj()))[(0, 0)] * Complex64::i();
    KreinSign::from_value(pairing.re)
}

/// Raw stability data of one eigenvalue slot (one of the three eigenvalues
/// with largest imaginary part).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub eigenvalue: Complex64,
    /// `Re λ` within `τ_re`, `Im λ > τ_gap`, and separated by `τ_gap` from
    /// every other eigenvalue.
    pub stable_simple: bool,
}

/// The three eigenvalues with largest imaginary part, in that order, with a
/// per-slot stability flag. A point is confined exactly when all three are
/// stable and simple.
pub fn slots(eigs: &[Complex64; 6], tol: &Tolerances) -> [Slot; 3] {
    let mut out = [Slot {
        eigenvalue: Complex64::new(0.0, 0.0),
        stable_simple: false,
    }; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let ev = eigs[i];
        let separated = eigs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .all(|(_, other)| (other - ev).norm() > tol.gap);
        *slot = Slot {
            eigenvalue: ev,
            stable_simple: ev.re.abs() <= tol.re && ev.im > tol.gap && separated,
        };
    }
    out
}

/// Builds the mode for a stable simple eigenvalue.
pub fn mode_for(dm: &DynamicalMatrix, ev: Complex64) -> Result<Mode> {
    let v = right_eigenvector(dm.lambda(), ev);
    let res = residual(dm.lambda(), ev, &v);
    if res > RESIDUAL_TOLERANCE * dm.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "eigenvector residual {res:.3e} too large for λ = {ev}"
        )));
    }
    Ok(Mode {
        freq: ev.im,
        krein_sign: krein_sign(&v, dm.form())?,
        eigvec: v,
    })
}

pub fn classify(dm: &DynamicalMatrix) -> Result<ModeSpectrum> {
    classify_with(dm, Tolerances::for_matrix(dm))
}

pub fn classify_with(dm: &DynamicalMatrix, tolerances: Tolerances) -> Result<ModeSpectrum> {
    let eigs = eigenvalues(dm)?;
    let mut spectrum = ModeSpectrum {
        classification: Classification::Unconfined,
        modes: Vec::new(),
        raw_eigenvalues: eigs,
        tolerances,
    };
    if eigs.iter().any(|l| l.re.abs() > tolerances.re) {
        return Ok(spectrum);
    }
    let mut im: Vec<f64> = eigs.iter().map(|l| l.im).collect();
    im.sort_by(f64::total_cmp);
    let min_gap = im
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let min_abs = im.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if min_gap <= tolerances.gap || min_abs <= tolerances.gap {
        spectrum.classification = Classification::Boundary;
        return Ok(spectrum);
    }
    let mut modes = Vec::with_capacity(3);
    for ev in &eigs[..3] {
        match mode_for(dm, *ev) {
            Ok(mode) => modes.push(mode),
            Err(Error::Degenerate(_)) => {
                spectrum.classification = Classification::Boundary;
                return Ok(spectrum);
            }
            Err(e) => return Err(e),
        }
    }
    modes.sort_by(|a, b| {
        b.freq
            .total_cmp(&a.freq)
            .then(a.krein_sign.cmp(&b.krein_sign))
    });
    spectrum.classification = Classification::Confined;
    spectrum.modes = modes;
    Ok(spectrum)
}

/// Ladder-operator data of one mode: `A = cᵀ u` and
/// `u = Σᵢ (dᵢ Aᵢ + d̄ᵢ Aᵢ†)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderMode {
    pub freq: f64,
    pub krein_sign: KreinSign,
    pub coeff: CVec6,
    pub displacement: CVec6,
}

/// Normal-mode decomposition `G = Σ εᵢ ωᵢ (Aᵢ†Aᵢ + εᵢ/2)` with
/// `[Aᵢ, Aⱼ†] = εⱼ δᵢⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeBasis {
    pub modes: Vec<LadderMode>,
}

impl NormalModeBasis {
    /// `[Aᵢ, Aⱼ†] = cᵢᵀ (iJ) c̄ⱼ`, using `[u_a, u_b] = i J_ab`.
    pub fn commutator(&self, i: usize, j: usize) -> Complex64 {
        let jm = to_complex(&symplectic_unit()) * Complex64::i();
        let ci = &self.modes[i].coeff;
        let cj = self.modes[j].coeff.map(|z| z.conj());
        (ci.transpose() * jm * cj)[(0, 0)]
    }

    /// `[Aᵢ, Aⱼ] = cᵢᵀ (iJ) cⱼ`
    pub fn commutator_aa(&self, i: usize, j: usize) -> Complex64 {
        let jm = to_complex(&symplectic_unit()) * Complex64::i();
        (self.modes[i].coeff.transpose() * jm * self.modes[j].coeff)[(0, 0)]
    }

    /// Classical flow through the modal expansion,
    /// `u(t) = Σᵢ 2 Re(dᵢ e^{−iωᵢt} cᵢᵀ u₀)`.
    pub fn propagate(&self, u0: &Vec6, t: f64) -> Vec6 {
        let u0c = u0.map(|x| Complex64::new(x, 0.0));
        let mut out = Vec6::zeros();
        for m in &self.modes {
            let amplitude = m.coeff.dot(&u0c) * Complex64::from_polar(1.0, -m.freq * t);
            out += (m.displacement * amplitude).map(|z| 2.0 * z.re);
        }
        out
    }
}

pub fn normal_mode_basis(spectrum: &ModeSpectrum, form: &QuadraticForm) -> Result<NormalModeBasis> {
    if !spectrum.is_confined() {
        return Err(Error::Precondition(format!(
            "normal modes need a confined spectrum, got {:?}",
            spectrum.classification
        )));
    }
    let j = to_complex(&symplectic_unit());
    let modes = spectrum
        .modes
        .iter()
        .map(|mode| {
            let energy = energy_form(&mode.eigvec, form).re;
            if energy.abs() <= 1e-10 * form.matrix().norm() {
                return Err(Error::Degenerate(format!(
                    "normalization pivot {energy:.3e} for mode at frequency {}",
                    mode.freq
                )));
            }
            let scale = (mode.freq / energy.abs()).sqrt();
            let coeff =
                fix_phase(j * mode.eigvec) * Complex64::new(scale * mode.eigvec.norm(), 0.0);
            let eps = mode.krein_sign.value();
            let displacement = j * coeff.map(|z| z.conj()) * Complex64::new(0.0, eps);
            Ok(LadderMode {
                freq: mode.freq,
                krein_sign: mode.krein_sign,
                coeff,
                displacement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalModeBasis { modes })
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Pairing of modes between two nearby confined spectra maximizing the total
/// eigenvector overlap. `result[i]` is the index in `next` of `prev.modes[i]`.
///
/// Overlaps use the symplectic product `aᴴJb`, under which distinct modes
/// of one spectrum are exactly orthogonal; Euclidean overlaps of distinct
/// modes can approach one where the dynamics is strongly non-normal.
pub fn track_modes(prev: &ModeSpectrum, next: &ModeSpectrum) -> Result<[usize; 3]> {
    if !prev.is_confined() || !next.is_confined() {
        return Err(Error::Precondition(
            "mode tracking needs two confined spectra".into(),
        ));
    }
    let j = to_complex(&symplectic_unit());
    let pairing = |a: &CVec6, b: &CVec6| a.dotc(&(j * b)).norm();
    let overlap = |i: usize, k: usize| {
        let (a, b) = (&prev.modes[i].eigvec, &next.modes[k].eigvec);
        pairing(a, b) / (pairing(a, a) * pairing(b, b)).sqrt()
    };
    let mut scored: Vec<(f64, [usize; 3])> = PERMUTATIONS
        .iter()
        .map(|p| ((0..3).map(|i| overlap(i, p[i])).sum(), *p))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (best, runner_up) = (scored[0].0, scored[1].0);
    if best - runner_up < TRACKING_AMBIGUITY {
        return Err(Error::AmbiguousTracking { best, runner_up });
    }
    Ok(scored[0].1)
}

fn saturation(dm: &DynamicalMatrix) -> Error {
    let exponent = eigenvalues(dm)
        .map(|e| e.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::INFINITY);
    Error::Saturation { exponent }
}

/// `e^{Λt}` by scaling and squaring.
pub fn propagator(dm: &DynamicalMatrix, t: f64) -> Result<Mat6> {
    let m = (dm.lambda() * t).exp();
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(saturation(dm))
    }
}

pub fn propagate(dm: &DynamicalMatrix, u0: &Vec6, t: f64) -> Result<Vec6> {
    let u = propagator(dm, t)? * u0;
    if u.iter().all(|x| x.is_finite()) {
        Ok(u)
    } else {
        Err(saturation(dm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub bounded: bool,
    /// Least-squares slope of `ln‖u(t)‖` over the second half of the horizon.
    pub growth_exponent: f64,
    /// `ln(sup ‖u(t)‖ / ‖u₀‖)` over the horizon.
    pub log_max_ratio: f64,
    /// `ln` of the peak norm over the second half of the horizon relative to
    /// the peak over the first half.
    pub late_growth: f64,
    pub period: f64,
}

/// The late peak norm may exceed the early one by at most this factor; linear
/// growth doubles it, exponential growth far more.
pub const BOUNDED_RATIO: f64 = 1.5;

/// Integrates `u₀` for `horizon` periods of the fastest eigenfrequency and
/// reports the trajectory bounded when the peak of `‖u(t)‖` over the second
/// half of the horizon is within [`BOUNDED_RATIO`] of the peak over the first
/// half. Comparing against `‖u₀‖` instead would misjudge confined points with
/// strongly non-orthogonal modes, whose norm can swing by large factors.
/// The state is renormalized each period, so strongly unstable points do
/// not overflow.
pub fn boundedness_probe(dm: &DynamicalMatrix, u0: &Vec6, horizon: usize) -> Result<ProbeResult> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least one period".into()));
    }
    if u0.norm() == 0.0 || !u0.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain(
            "initial vector must be finite and nonzero".into(),
        ));
    }
    let eigs = eigenvalues(dm)?;
    let tol = Tolerances::for_matrix(dm);
    let fastest = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let period = if fastest > tol.gap {
        2.0 * PI / fastest
    } else {
        2.0 * PI
    };
    let step = propagator(dm, period)?;

    let mut u = u0.unscale(u0.norm());
    let mut log_norm = 0.0;
    let mut log_max: f64 = 0.0;
    let mut early_max: f64 = 0.0;
    let mut samples = Vec::with_capacity(horizon);
    for i in 1..=horizon {
        u = step * u;
        let n = u.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Numerical(format!("trajectory norm became {n}")));
        }
        log_norm += n.ln();
        u.unscale_mut(n);
        log_max = log_max.max(log_norm);
        if i == horizon.div_ceil(2) {
            early_max = log_max;
        }
        samples.push((i as f64 * period, log_norm));
    }
    let late_max = samples[horizon.div_ceil(2)..]
        .iter()
        .map(|s| s.1)
        .fold(early_max, f64::max);
    let tail = &samples[samples.len() / 2..];
    let growth_exponent = if tail.len() >= 2 {
        let n = tail.len() as f64;
        let mean_t = tail.iter().map(|s| s.0).sum::<f64>() / n;
        let mean_y = tail.iter().map(|s| s.1).sum::<f64>() / n;
        let cov: f64 = tail.iter().map(|s| (s.0 - mean_t) * (s.1 - mean_y)).sum();
        let var: f64 = tail.iter().map(|s| (s.0 - mean_t).powi(2)).sum();
        cov / var
    } else {
        log_norm / period
    };
    Ok(ProbeResult {
        bounded: late_max - early_max <= BOUNDED_RATIO.ln(),
        growth_exponent,
        log_max_ratio: log_max,
        late_growth: late_max - early_max,
        period,
    })
}
