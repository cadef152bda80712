use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mug2::constants::ConstantsTable;
use mug2::precession::{
    bohr_to_natural, clockwise_angle, delta_ly_neutrino, delta_mu_mu, precess, precess_path,
    proper_frequency, FieldConfig, SpinState,
};
use mug2::relkin::{spin_lab_y, BoostParams};

fn unit_field() -> FieldConfig {
    FieldConfig::natural(1.0).unwrap()
}

#[test]
fn quarter_period_is_clockwise() {
    let (mu, b) = (0.37, 2.0);
    let field = FieldConfig::natural(b).unwrap();
    let s = precess(SpinState::new(0.5, 0.0, 0.0), mu, &field, PI / (4.0 * mu * b), 2000).unwrap();
    assert!(s.s.x.abs() < 1e-12);
    assert!((s.s.y + 0.5).abs() < 1e-12);
    assert_eq!(s.s.z, 0.0);
}

#[test]
fn full_period_returns_any_spin() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let s0 = SpinState::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let mu = rng.gen_range(0.1..3.0);
        let t = 2.0 * PI / (2.0 * mu);
        let s = precess(s0, mu, &unit_field(), t, 2000).unwrap();
        assert!((s.s - s0.s).norm() < 1e-8);
    }
}

#[test]
fn aligned_spin_does_not_move() {
    let s0 = SpinState::new(0.0, 0.0, 0.5);
    let s = precess(s0, 1.0, &unit_field(), 123.0, 500).unwrap();
    assert_eq!(s, s0);
}

#[test]
fn norm_and_phase_over_ten_thousand_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let s0 = SpinState::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let total = rng.gen_range(1.0..100.0);
        let mu = 0.5;
        let path = precess_path(s0, mu, &unit_field(), total, 10_000).unwrap();
        let drift = path.iter().map(|s| (s.norm() - s0.norm()).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-9, "drift {drift}");
        let angle = clockwise_angle(&path);
        assert!((angle / total - 1.0).abs() <= 1e-6, "angle {angle} vs {total}");
    }
}

#[test]
fn neutrino_step_matches_integrator_finite_difference() {
    // s0 = (1/2, 0, 0): one small precession step, then boost along x
    let (gamma_nu, mu, b) = (40.0, 0.25, 2.0);
    let dt = 1e-3 / (2.0 * mu * b);
    let field = FieldConfig::natural(b).unwrap();
    let s0 = SpinState::new(0.5, 0.0, 0.0);
    let s1 = precess(s0, mu, &field, dt, 10).unwrap();
    let boost = BoostParams::from_gamma(gamma_nu, nalgebra::Vector3::x()).unwrap();
    let ly0 = spin_lab_y(s0.s.y, &boost, 0.0).unwrap();
    let ly1 = spin_lab_y(s1.s.y, &boost, 0.0).unwrap();
    let step = delta_ly_neutrino(gamma_nu, mu, b, dt);
    assert!(!step.coarse);
    assert!(((ly1 - ly0) / step.delta - 1.0).abs() <= 1e-4);
    assert!((gamma_nu * (s1.s.y - s0.s.y) / step.delta - 1.0).abs() <= 1e-4);
}

#[test]
fn neutrino_step_examples() {
    assert_eq!(delta_ly_neutrino(2.0, 1.0, 1.0, 0.0).delta, 0.0);
    let s = delta_ly_neutrino(2.0, 1.0, 1.0, 0.001);
    assert!((s.delta + 0.002).abs() < 1e-15);
    assert!(delta_ly_neutrino(1.0, 1.0, 1.0, 0.01).coarse);
}

#[test]
fn muon_moment_examples() {
    assert_eq!(delta_mu_mu(3.0e-20, 7.0, 7.0).unwrap(), 6.0e-20);
    let a = delta_mu_mu(1.0, 10.0, 2.0).unwrap();
    assert_eq!(delta_mu_mu(1.0, 10.0, 4.0).unwrap(), a / 2.0);
    assert!(delta_mu_mu(1.0, 10.0, 0.5).is_err());
    assert!(delta_mu_mu(1.0, 0.5, 2.0).is_err());
}

#[test]
fn angular_momentum_identity_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10_000 {
        let mu_nu = 10f64.powf(rng.gen_range(-30.0..-5.0));
        let g_nu = 10f64.powf(rng.gen_range(0.0..7.0));
        let g_mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let b = 10f64.powf(rng.gen_range(-4.0..4.0));
        let dt = 10f64.powf(rng.gen_range(-4.0..4.0));
        let lhs = 2.0 * delta_ly_neutrino(g_nu, mu_nu, b, dt).delta;
        let dmu = delta_mu_mu(mu_nu, g_nu, g_mu).unwrap();
        let rhs = -g_mu * dmu * b * dt;
        assert!((lhs / rhs - 1.0).abs() <= 1e-12);
        // muon proper-frequency shift is twice the neutrino's
        let ratio = proper_frequency(dmu * g_mu, &FieldConfig::natural(b).unwrap())
            / proper_frequency(mu_nu * g_nu, &FieldConfig::natural(b).unwrap());
        assert!((ratio - 2.0).abs() <= 4.0 * f64::EPSILON);
    }
}

#[test]
fn tesla_field_gives_lab_frequency() {
    // a Bohr magneton in 1 T precesses at 2 mu_B B / hbar = 1.7588e11 rad/s
    let t = ConstantsTable::default();
    let field = FieldConfig::from_tesla(1.0, &t).unwrap();
    let mu = bohr_to_natural(1.0, &t).unwrap();
    let omega = proper_frequency(mu, &field) / t.hbar_gev_s();
    assert!((omega / 1.758_820_01e11 - 1.0).abs() < 1e-4, "{omega}");
    assert!(FieldConfig::from_tesla(-1.0, &t).is_err());
}

#[test]
fn rejects_bad_inputs() {
    assert!(precess(SpinState::new(0.5, 0.0, 0.0), 1.0, &unit_field(), 1.0, 0).is_err());
    assert!(precess(SpinState::new(f64::NAN, 0.0, 0.0), 1.0, &unit_field(), 1.0, 10).is_err());
    assert!(precess(SpinState::new(0.5, 0.0, 0.0), f64::INFINITY, &unit_field(), 1.0, 10).is_err());
    // |2 mu B dt| = 10 per step
    let err = precess(SpinState::new(0.5, 0.0, 0.0), 1.0, &unit_field(), 50.0, 10).unwrap_err();
    assert!(err.to_string().contains("at least 100 steps"), "{err}");
    assert!(precess(SpinState::new(0.5, 0.0, 0.0), 1.0, &unit_field(), 50.0, 100).is_ok());
}

proptest! {
    #[test]
    fn rotation_preserves_z_and_norm(
        s in prop::array::uniform3(-0.5f64..0.5),
        mu in 0.01f64..2.0,
        t in 0.0f64..20.0,
    ) {
        let s0 = SpinState::new(s[0], s[1], s[2]);
        let out = precess(s0, mu, &unit_field(), t, 4000).unwrap();
        prop_assert!((out.norm() - s0.norm()).abs() <= 1e-9);
        prop_assert_eq!(out.s.z, s0.s.z);
    }
}
