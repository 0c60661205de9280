//! Normal modes, confinement regions and geometric phases of a charged
//! spinless particle in a Penning trap superposed with a rotating magnetic
//! field.
//!
//! The time-dependent problem is reduced to the static rotating-frame
//! generator `G = H(0) − ωL₃` ([`model`]), whose dynamical matrix is
//! classified and decomposed into normal modes ([`spectral`]). Quasienergies
//! and Aharonov–Anandan / Berry phases follow from the mode decomposition
//! ([`phases`]); [`sweep`] maps parameter space and [`cli`] drives it all from
//! the command line.

pub mod cli;
pub mod error;
pub mod model;
pub mod phases;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{
    build_g, build_l3_form, build_lambda, BindingPotential, DynamicalMatrix, QuadraticForm,
    SystemParams,
};
pub use phases::{FockLabel, PhaseReport};
pub use spectral::{classify, Classification, KreinSign, Mode, ModeSpectrum, NormalModeBasis};
