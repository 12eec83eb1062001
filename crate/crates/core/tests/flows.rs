use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use wfprop::classflow::{check_scaling_identity, flow_exact_harmonic, flow_numeric, FlowSpec, Hamiltonian};
use wfprop::scattering::scattering_evolution;
use wfprop::{CoefficientField, PhasePoint};

fn point() -> impl Strategy<Value = PhasePoint> {
    (-2.0..2.0f64, 0.3..2.0f64).prop_map(|(x, xi)| PhasePoint::new1(x, xi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flat_numeric_flow_is_a_rotation(t in -6.0..6.0f64, x in point()) {
        let field = CoefficientField::flat(1);
        let spec = FlowSpec::new(Hamiltonian::P).with_tol(1e-12).sparse();
        let traj = flow_numeric(&field, &spec, (0.0, t), &x).unwrap();
        let exact = flow_exact_harmonic(&[1.0], 1.0, t, &x).unwrap();
        prop_assert!(traj.end().distance(&exact) < 1e-8);
        prop_assert!(traj.relative_energy_drift() < 1e-9);
    }

    #[test]
    fn harmonic_group_law(s in -4.0..4.0f64, t in -4.0..4.0f64, lambda in 1.0..8.0f64, x in point()) {
        let nu = [1.0];
        let a = flow_exact_harmonic(&nu, lambda, s, &flow_exact_harmonic(&nu, lambda, t, &x).unwrap()).unwrap();
        let b = flow_exact_harmonic(&nu, lambda, s + t, &x).unwrap();
        prop_assert!(a.distance(&b) < 1e-12 * (1.0 + x.norm() * lambda));
    }

    #[test]
    fn momentum_scaling_on_bump(lambda in 1.0..16.0f64, t in 0.0..3.0f64, x in point()) {
        let field = CoefficientField::rational_bump(1, 0.3, 2.0).unwrap();
        let r = check_scaling_identity(&field, lambda, t, &x, 1e-11).unwrap();
        prop_assert!(r.position < 1e-7 && r.momentum < 1e-7 * lambda, "{r:?}");
    }
}

#[test]
fn scaled_scattering_evolution_commutes_with_dilation() {
    let field = CoefficientField::rational_bump(1, 0.3, 2.0).unwrap();
    let x = PhasePoint::new1(0.4, 0.8);
    for (lambda, t) in [(2.0, 0.7), (8.0, 0.3), (20.0, 0.1)] {
        let lhs = scattering_evolution(&field, t, &x.scale_momentum(lambda), None, 1e-12).unwrap();
        let rhs = scattering_evolution(&field, lambda * t, &x, Some(lambda), 1e-12)
            .unwrap()
            .scale_momentum(lambda);
        assert_abs_diff_eq!(lhs.x[0], rhs.x[0], epsilon = 1e-7);
        assert_abs_diff_eq!(lhs.xi[0], rhs.xi[0], epsilon = 1e-7 * lambda);
    }
}
