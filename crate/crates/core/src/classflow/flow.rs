use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::dop853::{DenseSegment, Dop853, OdeSystem, StepFailure};
use crate::error::{check_dim, Error, Result};
use crate::fields::{eval_ell, harmonic_block, CoefficientField};
use crate::phase::PhasePoint;

/// Which symbol generates the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hamiltonian {
    /// The full symbol `p = k + harmonic + V`.
    P,
    /// The kinetic part `k`.
    K,
    /// The scaled symbol `p^lambda`.
    PLambda { lambda: f64 },
    /// The interaction-picture generator, optionally scaled.
    Ell { lambda: Option<f64> },
}

impl Hamiltonian {
    pub fn is_autonomous(&self) -> bool {
        !matches!(self, Hamiltonian::Ell { .. })
    }

    fn lambda(&self) -> f64 {
        match *self {
            Hamiltonian::PLambda { lambda } => lambda,
            Hamiltonian::Ell { lambda } => lambda.unwrap_or(1.0),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub hamiltonian: Hamiltonian,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Keep the interpolants so that [`Trajectory::at`] works between samples.
    #[serde(default = "default_dense")]
    pub dense: bool,
}

fn default_dense() -> bool {
    true
}

pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-3;

impl FlowSpec {
    pub fn new(hamiltonian: Hamiltonian) -> Self {
        Self {
            hamiltonian,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 2_000_000,
            dense: true,
        }
    }

    /// Sets `rel_tol = tol` and `abs_tol = tol / 100`, clamped to the valid range.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self.abs_tol = (tol * 1e-2).max(MIN_TOL);
        self
    }

    pub fn sparse(mut self) -> Self {
        self.dense = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(MIN_TOL..=MAX_TOL).contains(&v) {
                return Err(Error::Input(format!(
                    "{name} = {v:e} outside [{MIN_TOL:e}, {MAX_TOL:e}]"
                )));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Input("max_steps must be positive".into()));
        }
        let lam = self.hamiltonian.lambda();
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::Input(format!("lambda = {lam} must be positive")));
        }
        Ok(())
    }

    pub(crate) fn solver(&self) -> Dop853 {
        Dop853 {
            rtol: self.rel_tol,
            atol: self.abs_tol,
            max_steps: self.max_steps,
            max_step: f64::INFINITY,
            dense: self.dense,
        }
    }
}

/// Accepted samples of a numerical flow. Times are monotone in the direction
/// of integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
    pub tolerance_used: f64,
    pub segments: Vec<DenseSegment>,
}

impl Trajectory {
    pub fn end(&self) -> &PhasePoint {
        self.points.last().expect("trajectory has at least one sample")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Interpolated state; `None` outside the covered span or when the flow
    /// was computed without dense output.
    pub fn at(&self, t: f64) -> Option<PhasePoint> {
        if self.times.first() == Some(&t) {
            return self.points.first().cloned();
        }
        let forward = self.end_time() >= self.times[0];
        let idx = self.segments.partition_point(|s| {
            if forward {
                s.t < t
            } else {
                s.t > t
            }
        });
        let seg = self.segments.get(idx)?;
        seg.contains(t).then(|| PhasePoint::from_state(&seg.eval(t)))
    }

    /// `max |E(t) - E(0)| / (1 + |E(0)|)`.
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
            / (1.0 + e0.abs())
    }
}

/// Hamilton's equations for one of the [`Hamiltonian`] kinds.
pub(crate) struct HamiltonSystem<'a> {
    pub field: &'a CoefficientField,
    pub hamiltonian: Hamiltonian,
}

impl HamiltonSystem<'_> {
    /// Value and gradients `(h, dh/dx, dh/dxi)`.
    fn eval(&self, t: f64, x: &[f64], xi: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let f = self.field;
        match self.hamiltonian {
            Hamiltonian::K => f.kinetic(x, xi),
            Hamiltonian::P | Hamiltonian::PLambda { .. } => {
                let inv2 = self.hamiltonian.lambda().powi(-2);
                let (k, mut gx, gxi) = f.kinetic(x, xi);
                let (v, vg) = f.potential_with_grad(x);
                let mut w = v;
                for (j, g) in gx.iter_mut().enumerate() {
                    let nu2 = f.nu()[j] * f.nu()[j];
                    w += 0.5 * nu2 * x[j] * x[j];
                    *g += (nu2 * x[j] + vg[j]) * inv2;
                }
                (k + w * inv2, gx, gxi)
            }
            Hamiltonian::Ell { lambda } => match eval_ell(f, t, x, xi, lambda) {
                Ok(s) => (s.value, s.grad_x, s.grad_xi),
                Err(_) => (f64::NAN, vec![f64::NAN; x.len()], vec![f64::NAN; x.len()]),
            },
        }
    }

    pub fn energy(&self, t: f64, state: &[f64]) -> f64 {
        let n = state.len() / 2;
        self.eval(t, &state[..n], &state[n..]).0
    }
}

impl OdeSystem for HamiltonSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.field.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.field.dim();
        let (_, gx, gxi) = self.eval(t, &y[..n], &y[n..]);
        dy[..n].copy_from_slice(&gxi);
        for (d, g) in dy[n..].iter_mut().zip(&gx) {
            *d = -g;
        }
    }
}

/// `exp(t H_{p0^lambda})` with per-coordinate frequencies `nu`.
pub fn flow_exact_harmonic(nu: &[f64], lambda: f64, t: f64, x: &PhasePoint) -> Result<PhasePoint> {
    check_dim(nu.len(), x.dim())?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Input(format!("lambda = {lambda} must be positive")));
    }
    if nu.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Input("oscillator weights must be positive".into()));
    }
    Ok(harmonic_unchecked(nu, lambda, t, x))
}

pub(crate) fn harmonic_unchecked(nu: &[f64], lambda: f64, t: f64, x: &PhasePoint) -> PhasePoint {
    let n = nu.len();
    let mut out = PhasePoint {
        x: vec![0.0; n],
        xi: vec![0.0; n],
    };
    for j in 0..n {
        let (a, b, c, d) = harmonic_block(nu[j], lambda, t);
        out.x[j] = a * x.x[j] + b * x.xi[j];
        out.xi[j] = c * x.x[j] + d * x.xi[j];
    }
    out
}

/// `exp(t H_{k0})(x, xi) = (x + t xi, xi)`.
pub fn flow_exact_free(t: f64, x: &PhasePoint) -> PhasePoint {
    PhasePoint {
        x: x.x.iter().zip(&x.xi).map(|(a, b)| a + t * b).collect(),
        xi: x.xi.clone(),
    }
}

/// Integrates Hamilton's equations of `spec.hamiltonian` from `t_span.0` to
/// `t_span.1`.
pub fn flow_numeric(
    field: &CoefficientField,
    spec: &FlowSpec,
    t_span: (f64, f64),
    x: &PhasePoint,
) -> Result<Trajectory> {
    spec.validate()?;
    check_dim(field.dim(), x.dim())?;
    let (t0, t1) = t_span;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Input("time span must be finite".into()));
    }
    let sys = HamiltonSystem {
        field,
        hamiltonian: spec.hamiltonian,
    };
    let y0 = x.to_state();
    let e0 = sys.energy(t0, &y0);
    let mut traj = Trajectory {
        times: vec![t0],
        points: vec![x.clone()],
        energies: vec![e0],
        tolerance_used: spec.rel_tol,
        segments: Vec::new(),
    };
    let result = spec.solver().integrate(&sys, t0, &y0, t1, |step| {
        traj.times.push(step.t);
        traj.points.push(PhasePoint::from_state(step.y));
        traj.energies.push(sys.energy(step.t, step.y));
        if let Some(seg) = step.dense {
            traj.segments.push(seg.clone());
        }
        ControlFlow::Continue(())
    });
    match result {
        Ok(_) => Ok(traj),
        Err((StepFailure::MaxSteps { steps, t }, _)) => Err(Error::Divergence {
            steps,
            t,
            partial: Box::new(traj),
        }),
        Err((StepFailure::NonFinite { t }, _)) => Err(Error::Field { t }),
        Err((StepFailure::Underflow { t }, _)) => Err(Error::StepUnderflow { t }),
    }
}

/// Endpoint of the flow without recording samples.
pub(crate) fn flow_endpoint(
    field: &CoefficientField,
    spec: &FlowSpec,
    t_span: (f64, f64),
    x: &PhasePoint,
) -> Result<PhasePoint> {
    spec.validate()?;
    check_dim(field.dim(), x.dim())?;
    let sys = HamiltonSystem {
        field,
        hamiltonian: spec.hamiltonian,
    };
    let solver = Dop853 {
        dense: false,
        ..spec.solver()
    };
    match solver.integrate(&sys, t_span.0, &x.to_state(), t_span.1, |_| ControlFlow::Continue(())) {
        Ok(out) => Ok(PhasePoint::from_state(&out.y)),
        Err((StepFailure::NonFinite { t }, _)) => Err(Error::Field { t }),
        Err((StepFailure::Underflow { t }, _)) => Err(Error::StepUnderflow { t }),
        Err((StepFailure::MaxSteps { .. }, _)) => {
            flow_numeric(field, &spec.sparse(), t_span, x).map(|t| t.end().clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &PhasePoint, b: &PhasePoint, tol: f64) -> bool {
        a.max_distance(b) <= tol
    }

    #[test]
    fn exact_harmonic_examples() {
        let x = PhasePoint::new1(0.3, -1.2);
        let r = flow_exact_harmonic(&[1.0], 1.0, PI, &x).unwrap();
        assert!(close(&r, &x.antipode(), 1e-15));
        let q = flow_exact_harmonic(&[1.0], 1.0, PI / 2.0, &PhasePoint::new1(1.0, 0.0)).unwrap();
        assert!(close(&q, &PhasePoint::new1(0.0, -1.0), 1e-15));
        let s = flow_exact_harmonic(&[1.0], 2.0, PI, &x).unwrap();
        assert!(close(&s, &PhasePoint::new1(2.0 * x.xi[0], -x.x[0] / 2.0), 1e-15));
        assert!(flow_exact_harmonic(&[1.0], 0.0, 1.0, &x).is_err());
    }

    #[test]
    fn exact_free_group_law() {
        let x = PhasePoint::new1(1.0, 2.0);
        assert_eq!(flow_exact_free(3.0, &x), PhasePoint::new1(7.0, 2.0));
        assert_eq!(flow_exact_free(0.0, &x), x);
        let a = flow_exact_free(1.5, &flow_exact_free(2.5, &x));
        assert_eq!(a, flow_exact_free(4.0, &x));
    }

    #[test]
    fn flat_numeric_matches_rotation() {
        let field = CoefficientField::flat(2);
        let spec = FlowSpec::new(Hamiltonian::P).with_tol(1e-12);
        let x = PhasePoint::new(vec![0.5, -1.0], vec![1.0, 0.25]).unwrap();
        let traj = flow_numeric(&field, &spec, (0.0, PI), &x).unwrap();
        assert!(close(traj.end(), &x.antipode(), 1e-10));
        assert!(traj.relative_energy_drift() < 1e-11);
        let mid = traj.at(1.0).unwrap();
        let exact = flow_exact_harmonic(&[1.0, 1.0], 1.0, 1.0, &x).unwrap();
        assert!(close(&mid, &exact, 1e-10));
    }

    #[test]
    fn flat_kinetic_flow_is_free() {
        let field = CoefficientField::flat(1);
        let spec = FlowSpec::new(Hamiltonian::K);
        let x = PhasePoint::new1(-2.0, 0.7);
        let traj = flow_numeric(&field, &spec, (0.0, -5.0), &x).unwrap();
        assert!(close(traj.end(), &flow_exact_free(-5.0, &x), 1e-9));
    }

    #[test]
    fn bump_flow_differs_from_flat() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let spec = FlowSpec::new(Hamiltonian::P).with_tol(1e-12);
        let x = PhasePoint::new1(0.0, 1.0);
        let end = flow_numeric(&field, &spec, (0.0, 2.0 * PI), &x).unwrap();
        let d = end.end().distance(&x);
        assert!(d > 1e-3 && d < 2.0, "deviation {d}");
        assert!(end.relative_energy_drift() < 1e-10);
    }

    #[test]
    fn step_exhaustion_carries_partial() {
        let field = CoefficientField::flat(1);
        let mut spec = FlowSpec::new(Hamiltonian::P);
        spec.max_steps = 2;
        match flow_numeric(&field, &spec, (0.0, 100.0), &PhasePoint::new1(1.0, 0.0)) {
            Err(Error::Divergence { partial, steps, .. }) => {
                assert_eq!(steps, 2);
                assert_eq!(partial.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        let spec = FlowSpec::new(Hamiltonian::K).with_tol(1e-2);
        assert!(spec.validate().is_err());
        let spec = FlowSpec::new(Hamiltonian::PLambda { lambda: -1.0 });
        assert!(spec.validate().is_err());
    }
}
