//! Parameters, binding potentials and the quadratic forms of the problem.
//!
//! Units: ħ = m = 1. Magnetic fields enter only through their Larmor
//! frequencies `b = |e|B/(2mc)` (transverse, rotating) and `b0 = |e|B₀/(2mc)`
//! (axial). The canonical vector is always ordered `u = (x₁, x₂, x₃, p₁, p₂, p₃)`
//! and every quadratic form is stored as the symmetric matrix `S` with
//! `G(u) = ½ uᵀ S u`.
//!
//! In the frame co-rotating with the field `B(t) = (B cos ωt, B sin ωt, B₀)`
//! the generator is time independent, `G = H(0) − ω L₃`, and the classical
//! (equivalently Heisenberg) flow of `u` is `u̇ = Λ u` with `Λ = J S`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SMatrix, SVector};

use crate::error::{Error, Result};

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec6 = SVector<f64, 6>;

/// Ratio `w0 / b0` of the simplest Penning loop.
pub const PENNING_LOOP_RATIO: f64 = 4.0 / 3.0;

/// Symplectic unit `[[0, I₃], [−I₃, 0]]` in the `(x, p)` ordering.
pub fn symplectic_unit() -> Mat6 {
    let mut j = Mat6::zeros();
    for i in 0..3 {
        j[(i, i + 3)] = 1.0;
        j[(i + 3, i)] = -1.0;
    }
    j
}

/// Physical parameter bundle. Frequencies are stored, not the dimensionless
/// ratios, so that derivatives with respect to `omega` are taken at fixed
/// fields and fixed trap strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    b: f64,
    b0: f64,
    w0: f64,
    omega: f64,
}

fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}

fn check_non_negative(name: &str, value: f64) -> Result<()> {
    check_finite(name, value)?;
    if value < 0.0 {
        return Err(Error::Domain(format!("{name} must be >= 0, got {value}")));
    }
    Ok(())
}

impl SystemParams {
    /// Field magnitudes are normalized to their absolute values (the charge
    /// sign is absorbed into `|e|`); `w0` and `omega` must be non-negative.
    pub fn new(b: f64, b0: f64, w0: f64, omega: f64) -> Result<Self> {
        check_finite("b", b)?;
        check_finite("b0", b0)?;
        check_non_negative("w0", w0)?;
        check_non_negative("omega", omega)?;
        Ok(Self {
            b: b.abs(),
            b0: b0.abs(),
            w0,
            omega,
        })
    }

    /// Penning loop: `w0 = (4/3)·b0` exactly.
    pub fn penning_loop(b: f64, b0: f64, omega: f64) -> Result<Self> {
        check_finite("b0", b0)?;
        Self::new(b, b0, PENNING_LOOP_RATIO * b0.abs(), omega)
    }

    /// Dimensionless parameterization with `omega` as the time unit.
    pub fn from_dimensionless(alpha: f64, alpha0: f64, w: f64) -> Result<Self> {
        check_non_negative("alpha", alpha)?;
        check_non_negative("alpha0", alpha0)?;
        check_non_negative("w", w)?;
        Ok(Self {
            b: alpha,
            b0: alpha0,
            w0: w,
            omega: 1.0,
        })
    }

    /// Adiabatic-sweep point: `b0 = 1` is the field unit, `b = k`, Penning loop.
    pub fn adiabatic(k: f64, omega: f64) -> Result<Self> {
        check_finite("k", k)?;
        if k <= 0.0 {
            return Err(Error::Domain(format!("k must be > 0, got {k}")));
        }
        check_non_negative("omega", omega)?;
        Ok(Self {
            b: k,
            b0: 1.0,
            w0: PENNING_LOOP_RATIO,
            omega,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alpha(&self) -> Option<f64> {
        (self.omega > 0.0).then(|| self.b / self.omega)
    }

    pub fn alpha0(&self) -> Option<f64> {
        (self.omega > 0.0).then(|| self.b0 / self.omega)
    }

    pub fn w(&self) -> Option<f64> {
        (self.omega > 0.0).then(|| self.w0 / self.omega)
    }

    /// Field ratio `B/B₀`.
    pub fn k(&self) -> Option<f64> {
        (self.b0 > 0.0).then(|| self.b / self.b0)
    }

    pub fn is_penning_loop(&self) -> bool {
        (self.w0 - PENNING_LOOP_RATIO * self.b0).abs() <= 1e-12 * (1.0 + self.w0)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.b, self.b0, self.w0, omega)
    }

    /// Serializes as `key=value` lines (keys `b`, `b0`, `w0`, `omega`, `binding`).
    /// Values use the shortest representation that round-trips exactly.
    pub fn to_key_values(&self, binding: &BindingPotential) -> String {
        format!(
            "b={:?}\nb0={:?}\nw0={:?}\nomega={:?}\nbinding={}\n",
            self.b, self.b0, self.w0, self.omega, binding
        )
    }

    /// Parses the format written by [`SystemParams::to_key_values`]. Blank
    /// lines and `#` comments are ignored, unknown keys are rejected, and a
    /// missing `binding` defaults to the Penning quadrupole.
    pub fn from_key_values(text: &str) -> Result<(Self, BindingPotential)> {
        let mut values: [Option<f64>; 4] = [None; 4];
        let mut binding = BindingPotential::PenningQuadrupole;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let slot = match key {
                "b" => 0,
                "b0" => 1,
                "w0" => 2,
                "omega" => 3,
                "binding" => {
                    binding = value.parse()?;
                    continue;
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            };
            let parsed: f64 = value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: not a number: {value:?}")))?;
            values[slot] = Some(parsed);
        }
        let get = |i: usize, name: &str| {
            values[i].ok_or_else(|| Error::Config(format!("missing key {name:?}")))
        };
        let params = Self::new(get(0, "b")?, get(1, "b0")?, get(2, "w0")?, get(3, "omega")?)?;
        Ok((params, binding))
    }
}

/// Binding potential added to the magnetic Hamiltonian.
///
/// `PenningQuadrupole` and `IsotropicOscillator` take their frequency from
/// [`SystemParams::w0`]. `DiagonalQuadratic` is an extension for
/// symmetry-dependence experiments and carries its own three frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BindingPotential {
    /// `V = ½ w0² (x₃² − (x₁² + x₂²)/2)`
    PenningQuadrupole,
    /// `V = ½ w0² (x₁² + x₂² + x₃²)`
    IsotropicOscillator,
    /// `V = ½ (w₁² x₁² + w₂² x₂² + w₃² x₃²)`
    DiagonalQuadratic([f64; 3]),
}

impl BindingPotential {
    /// Diagonal curvatures `∂²V/∂xᵢ²`.
    pub fn curvatures(&self, w0: f64) -> [f64; 3] {
        let w2 = w0 * w0;
        match self {
            BindingPotential::PenningQuadrupole => [-0.5 * w2, -0.5 * w2, w2],
            BindingPotential::IsotropicOscillator => [w2; 3],
            BindingPotential::DiagonalQuadratic(w) => [w[0] * w[0], w[1] * w[1], w[2] * w[2]],
        }
    }
}

impl fmt::Display for BindingPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingPotential::PenningQuadrupole => write!(f, "penning"),
            BindingPotential::IsotropicOscillator => write!(f, "oscillator"),
            BindingPotential::DiagonalQuadratic(w) => {
                write!(f, "diagonal:{:?},{:?},{:?}", w[0], w[1], w[2])
            }
        }
    }
}

impl FromStr for BindingPotential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "penning" => Ok(BindingPotential::PenningQuadrupole),
            "oscillator" => Ok(BindingPotential::IsotropicOscillator),
            other => {
                let list = other.strip_prefix("diagonal:").ok_or_else(|| {
                    Error::Config(format!(
                        "unknown binding {other:?} (expected penning, oscillator or diagonal:w1,w2,w3)"
                    ))
                })?;
                let parts = list
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Config(format!("bad diagonal frequencies {list:?}")))?;
                match parts.as_slice() {
                    [a, b, c] if parts.iter().all(|w| w.is_finite()) => {
                        Ok(BindingPotential::DiagonalQuadratic([*a, *b, *c]))
                    }
                    _ => Err(Error::Config(format!(
                        "diagonal binding needs three finite frequencies, got {list:?}"
                    ))),
                }
            }
        }
    }
}

/// Real symmetric 6×6 matrix `S` of the form `½ uᵀ S u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm(Mat6);

impl QuadraticForm {
    /// Symmetrizes the input, `(m + mᵀ)/2`.
    pub fn from_matrix(m: Mat6) -> Self {
        Self((m + m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Mat6 {
        &self.0
    }

    /// `½ uᵀ S u`
    pub fn value(&self, u: &Vec6) -> f64 {
        0.5 * u.dot(&(self.0 * u))
    }
}

/// Kinetic momentum is `p + M x` with `M x = B(0)×r` in Larmor units.
fn vector_potential_map(b: f64, b0: f64) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -b0, 0.0, //
        b0, 0.0, -b, //
        0.0, b, 0.0,
    )
}

/// `S(ω)` for an arbitrary real rotation rate. Negative rates are used by
/// the finite-difference derivative around `omega = 0`.
pub(crate) fn g_matrix(params: &SystemParams, binding: &BindingPotential, omega: f64) -> Mat6 {
    let m = vector_potential_map(params.b, params.b0);
    let xx = m.transpose() * m + Matrix3::from_diagonal(&binding.curvatures(params.w0).into());
    let xp = m.transpose();
    let mut s = Mat6::zeros();
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(&xx);
    s.fixed_view_mut::<3, 3>(0, 3).copy_from(&xp);
    s.fixed_view_mut::<3, 3>(3, 0).copy_from(&xp.transpose());
    s.fixed_view_mut::<3, 3>(3, 3).fill_with_identity();
    s - l3_matrix() * omega
}

fn l3_matrix() -> Mat6 {
    let mut s = Mat6::zeros();
    // x₁p₂ − x₂p₁
    s[(0, 4)] = 1.0;
    s[(4, 0)] = 1.0;
    s[(1, 3)] = -1.0;
    s[(3, 1)] = -1.0;
    s
}

/// Rotating-frame generator `G = H(0) − ω L₃` with `B(0) = (B, 0, B₀)`.
pub fn build_g(params: &SystemParams, binding: &BindingPotential) -> QuadraticForm {
    QuadraticForm(g_matrix(params, binding, params.omega))
}

/// `L₃ = x₁p₂ − x₂p₁` in the `½ uᵀ S u` convention.
pub fn build_l3_form() -> QuadraticForm {
    QuadraticForm(l3_matrix())
}

/// `Λ = J S`, together with the generating form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicalMatrix {
    lambda: Mat6,
    form: QuadraticForm,
}

impl DynamicalMatrix {
    pub fn lambda(&self) -> &Mat6 {
        &self.lambda
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    /// Frobenius norm of `Λ`, the scale used by the spectral tolerances.
    pub fn norm(&self) -> f64 {
        self.lambda.norm()
    }
}

pub fn build_lambda(form: &QuadraticForm) -> DynamicalMatrix {
    DynamicalMatrix {
        lambda: symplectic_unit() * form.matrix(),
        form: *form,
    }
}

/// `dΛ/dω` at fixed fields: `−J S_L`.
pub fn lambda_omega_derivative() -> Mat6 {
    -(symplectic_unit() * l3_matrix())
}
