//! Quasienergies, Aharonov–Anandan phases and their derivative routes.

mod common;

use common::*;
use penning_phases::model::{build_g, build_lambda, BindingPotential, SystemParams};
use penning_phases::phases::{
    aa_phase, berry_phase_adiabatic, cos_theta, dmode_domega, dmode_domega_all, quasienergy,
    resonance_shift, DerivativeMethod, FockLabel, DERIVATIVE_AGREEMENT, PHASE_AGREEMENT,
};
use penning_phases::spectral::{classify, normal_mode_basis};
use penning_phases::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn labels() -> impl Strategy<Value = FockLabel> {
    (0u32..4, 0u32..4, 0u32..4).prop_map(|(a, b, c)| FockLabel::new(a, b, c))
}

/// Confined points at least 0.1% in `ω` from the stability boundary, where
/// the frequency derivatives diverge.
fn confined_point() -> impl Strategy<Value = SystemParams> {
    (0.2f64..2.0, 0.0f64..3.0, 0.05f64..3.0)
        .prop_map(|(omega, b, b0)| {
            SystemParams::penning_loop(b * omega, b0 * omega, omega).unwrap()
        })
        .prop_filter("confined, separated, off the boundary", |p| {
            let s = spectrum_of(p, &BindingPotential::PenningQuadrupole);
            let margin = 1e-3 * p.omega();
            s.is_confined()
                && separation(&s) > 1e-3
                && [p.omega() - margin, p.omega() + margin].iter().all(|&w| {
                    spectrum_of(
                        &p.with_omega(w).unwrap(),
                        &BindingPotential::PenningQuadrupole,
                    )
                    .is_confined()
                })
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn expectation_and_frequency_routes_agree(p in confined_point(), n in labels()) {
        let r = aa_phase(&p, &BindingPotential::PenningQuadrupole, &n).unwrap();
        let from_l3 = r.aa_phase_l3.unwrap();
        prop_assert!((from_l3 - r.aa_phase_freq).abs() <= PHASE_AGREEMENT * (1.0 + r.aa_phase_freq.abs()));
    }

    #[test]
    fn derivative_routes_agree(p in confined_point()) {
        let set = dmode_domega_all(&p, &BindingPotential::PenningQuadrupole).unwrap();
        prop_assert!(set.spread() < DERIVATIVE_AGREEMENT, "{set:?}");
    }

    /// The frequency-derivative phase is `−2π ∂E/∂ω` of the quasienergy,
    /// here by Richardson-extrapolated central differences.
    #[test]
    fn phase_is_quasienergy_slope(p in confined_point(), n in labels()) {
        let binding = BindingPotential::PenningQuadrupole;
        let energy = |omega: f64| {
            let q = p.with_omega(omega).unwrap();
            let s = spectrum_of(&q, &binding);
            quasienergy(&normal_mode_basis(&s, &build_g(&q, &binding)).unwrap(), &n)
        };
        let central = |h: f64| (energy(p.omega() + h) - energy(p.omega() - h)) / (2.0 * h);
        // small enough to resolve avoided crossings of width ~1e-4 ω
        let h = 1e-6 * p.omega();
        let slope = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let r = aa_phase(&p, &binding, &n).unwrap();
        prop_assert!(
            (r.aa_phase_freq + 2.0 * PI * slope).abs() < 1e-6 * (1.0 + r.aa_phase_freq.abs()),
            "{} vs {}", r.aa_phase_freq, -2.0 * PI * slope
        );
    }

    #[test]
    fn quasienergy_is_linear_in_quanta(p in confined_point(), n in labels(), axis in 0usize..3) {
        let binding = BindingPotential::PenningQuadrupole;
        let s = spectrum_of(&p, &binding);
        let basis = normal_mode_basis(&s, &build_g(&p, &binding)).unwrap();
        let mut up = n;
        up.n[axis] += 1;
        let step = quasienergy(&basis, &up) - quasienergy(&basis, &n);
        let mode = &s.modes[axis];
        prop_assert!((step - mode.krein_sign.value() * mode.freq).abs() < 1e-10 * (1.0 + step.abs()));
    }
}

#[test]
fn twenty_points_five_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = [
        FockLabel::ground(),
        FockLabel::new(1, 0, 0),
        FockLabel::new(0, 1, 0),
        FockLabel::new(0, 0, 1),
        FockLabel::new(2, 1, 3),
    ];
    for p in random_confined(&mut rng, 20, 1e-3) {
        for n in &labels {
            let r = aa_phase(&p, &BindingPotential::PenningQuadrupole, n).unwrap();
            let from_l3 = r.aa_phase_l3.unwrap();
            assert!(
                (from_l3 - r.aa_phase_freq).abs()
                    <= PHASE_AGREEMENT * (1.0 + r.aa_phase_freq.abs()),
                "{p:?} {n:?}"
            );
            assert!(r.method_spread < DERIVATIVE_AGREEMENT);
        }
    }
}

#[test]
fn each_route_is_available_alone() {
    let p = SystemParams::penning_loop(0.1, 1.2, 1.0).unwrap();
    let binding = BindingPotential::PenningQuadrupole;
    let all = dmode_domega_all(&p, &binding).unwrap();
    assert_eq!(
        dmode_domega(&p, &binding, DerivativeMethod::Implicit).unwrap(),
        all.implicit
    );
    assert_eq!(
        dmode_domega(&p, &binding, DerivativeMethod::Perturbative).unwrap(),
        all.perturbative
    );
    assert_eq!(
        dmode_domega(&p, &binding, DerivativeMethod::FiniteDiff).unwrap(),
        all.finite_diff
    );
}

#[test]
fn phases_need_rotation_and_confinement() {
    let binding = BindingPotential::PenningQuadrupole;
    let static_point = SystemParams::penning_loop(0.1, 1.0, 0.0).unwrap();
    assert!(matches!(
        aa_phase(&static_point, &binding, &FockLabel::ground()),
        Err(Error::Domain(_))
    ));
    let unconfined = SystemParams::adiabatic(0.3, 0.0).unwrap();
    assert!(!classify(&build_lambda(&build_g(&unconfined, &binding)))
        .unwrap()
        .is_confined());
    assert!(matches!(
        berry_phase_adiabatic(0.3, &binding, &FockLabel::ground()),
        Err(Error::NoCyclicStates(_))
    ));
    let r = berry_phase_adiabatic(0.2, &binding, &FockLabel::ground()).unwrap();
    assert!(r.aa_phase_l3.is_none() && r.aa_phase_freq.is_finite());
}

#[test]
fn oscillator_berry_phase_follows_cos_theta() {
    // isotropic trap: the static modes are Larmor-split and only the tilt matters
    let binding = BindingPotential::IsotropicOscillator;
    for k in [0.05, 0.3, 1.0, 3.0] {
        let r = berry_phase_adiabatic(k, &binding, &FockLabel::new(1, 0, 0)).unwrap();
        let c = cos_theta(k);
        let expected = [-c, 0.0, c];
        for (got, want) in r.dfreq_domega.iter().zip(expected) {
            assert!((got - want).abs() < 1e-8, "k={k}: {:?}", r.dfreq_domega);
        }
    }
}

#[test]
fn resonance_error_is_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let binding = BindingPotential::PenningQuadrupole;
    for p in random_confined(&mut rng, 5, 1e-2) {
        let (n, m) = (FockLabel::new(1, 0, 0), FockLabel::ground());
        let d = 1e-3 * p.omega();
        let e1 = resonance_shift(&p, &binding, &n, &m, d)
            .unwrap()
            .linearization_error
            .abs();
        let e2 = resonance_shift(&p, &binding, &n, &m, d / 2.0)
            .unwrap()
            .linearization_error
            .abs();
        let ratio = e1 / e2;
        assert!(
            (3.0..5.0).contains(&ratio) || e1 < 1e-12,
            "{p:?}: errors {e1:e}, {e2:e}"
        );
    }
}
