use proptest::prelude::*;
use wfprop::fields::eval_symbols;
use wfprop::scattering::{
    inverse_scattering_map, recurrence_map, recurrence_map_with, resonance_structure, scattering_map, Direction,
    InverseOptions,
};
use wfprop::{CoefficientField, PhasePoint};

#[test]
fn flat_field_has_trivial_scattering() {
    let field = CoefficientField::flat(2);
    let x = PhasePoint::new(vec![0.3, -0.2], vec![0.7, 0.4]).unwrap();
    for dir in [Direction::Forward, Direction::Backward] {
        assert!(scattering_map(&field, &x, dir).unwrap().point().distance(&x) < 1e-8);
        assert!(recurrence_map(&field, &x, dir).unwrap().distance(&x.antipode()) < 1e-8);
    }
}

#[test]
fn resonant_recurrence_reflects_odd_axes() {
    let field = CoefficientField::flat(2).with_nu(vec![1.0, 2.0]).unwrap();
    let res = resonance_structure(&[1.0, 2.0], 16, 1e-9).unwrap();
    let x = PhasePoint::new(vec![0.3, -0.2], vec![0.7, 0.4]).unwrap();
    let y = recurrence_map_with(&field, &x, Direction::Forward, Some(&res), &InverseOptions::default()).unwrap();
    let expect = PhasePoint::new(vec![-0.3, -0.2], vec![-0.7, 0.4]).unwrap();
    assert!(y.distance(&expect) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn asymptotic_momentum_carries_the_kinetic_energy(x0 in -1.0..1.0f64, xi0 in 0.5..1.5f64) {
        let field = CoefficientField::rational_bump(1, 0.4, 2.0).unwrap();
        let x = PhasePoint::new1(x0, xi0);
        let k = eval_symbols(&field, &x.x, &x.xi).unwrap().k.value;
        for dir in [Direction::Forward, Direction::Backward] {
            let s = scattering_map(&field, &x, dir).unwrap();
            prop_assert!((0.5 * s.xi_out[0].powi(2) - k).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_round_trip(x0 in -1.0..1.0f64, xi0 in 0.6..1.5f64) {
        let field = CoefficientField::rational_bump(1, 0.4, 2.0).unwrap();
        let y = PhasePoint::new1(x0, xi0);
        let x = inverse_scattering_map(&field, &y, Direction::Forward).unwrap();
        let back = scattering_map(&field, &x, Direction::Forward).unwrap().point();
        prop_assert!(back.distance(&y) < 1e-7);
    }
}
