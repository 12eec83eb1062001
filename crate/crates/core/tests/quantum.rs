use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use wfprop::quantum::{
    coherent_state, fourier_transform, inverse_fourier_transform, propagate_H0_exact, propagate_H_numeric,
    zero_point_phase, PropagatorSpec, SpatialGrid, WaveFunction,
};
use wfprop::CoefficientField;

fn grid() -> SpatialGrid {
    SpatialGrid::uniform(1, 512, 16.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_h0_is_unitary_and_composes(s in -4.0..4.0f64, t in -4.0..4.0f64, x0 in -2.0..2.0f64, xi0 in -0.5..0.5f64) {
        let u = coherent_state(&grid(), 0.5, &[x0], &[xi0]).unwrap();
        let a = propagate_H0_exact(&[1.0], s, &propagate_H0_exact(&[1.0], t, &u).unwrap()).unwrap();
        let b = propagate_H0_exact(&[1.0], s + t, &u).unwrap();
        prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        prop_assert!(a.distance(&b).unwrap() < 1e-9);
    }

    #[test]
    fn fourier_is_an_isometry(x0 in -2.0..2.0f64, xi0 in -1.0..1.0f64) {
        let u = coherent_state(&grid(), 0.5, &[x0], &[xi0]).unwrap();
        let f = fourier_transform(&u);
        prop_assert!((f.norm() - 1.0).abs() < 1e-12);
        let back = inverse_fourier_transform(&f);
        let err: f64 = back.values().iter().zip(u.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
        prop_assert!(err.sqrt() < 1e-12);
    }
}

#[test]
fn harmonic_mean_motion_follows_the_classical_rotation() {
    let h = 0.25;
    let u = coherent_state(&grid(), h, &[1.0], &[0.5]).unwrap();
    for t in [0.4, 1.3, 2.9] {
        let v = propagate_H0_exact(&[1.0], t, &u).unwrap();
        let (x, k) = (v.position_mean()[0], v.momentum_mean()[0]);
        let (c, s) = (t.cos(), t.sin());
        assert!((x - (c * 1.0 + s * 0.5 / h)).abs() < 1e-8);
        assert!((k - (-s * 1.0 + c * 0.5 / h)).abs() < 1e-8);
    }
}

#[test]
fn numeric_propagator_matches_exact_for_potential_free_flat_field() {
    let u = coherent_state(&grid(), 0.5, &[1.0], &[0.3]).unwrap();
    let (v, report) = propagate_H_numeric(&CoefficientField::flat(1), 1.0, &u, &PropagatorSpec::with_dt(2e-3)).unwrap();
    let exact = propagate_H0_exact(&[1.0], 1.0, &u).unwrap();
    assert!(v.distance(&exact).unwrap() < 1e-5);
    assert!(report.total_drift < 1e-10);
}

#[test]
fn period_returns_up_to_the_zero_point_phase() {
    let u = coherent_state(&grid(), 0.5, &[0.5], &[0.2]).unwrap();
    let v = propagate_H0_exact(&[1.0], 2.0 * PI, &u).unwrap();
    assert!(v.distance(&u.scale(zero_point_phase(&[1.0], 2.0 * PI))).unwrap() < 1e-10);
}

#[test]
fn wavefunction_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.wf");
    let u = WaveFunction::from_fn(grid(), Some(0.125), |x| Complex64::new(x[0].cos(), (-x[0] * x[0]).exp()));
    u.save(&path).unwrap();
    let back = WaveFunction::load(&path).unwrap();
    assert_eq!(back, u);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.pop();
    assert!(WaveFunction::read_from(bytes.as_slice()).is_err());
}
