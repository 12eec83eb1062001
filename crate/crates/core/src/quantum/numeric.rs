use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::GridFft;
use super::grid::SpatialGrid;
use super::wavefunction::WaveFunction;
use crate::error::{check_dim, Error, Result};
use crate::fields::CoefficientField;

const MAX_SOLVER_ITERATIONS: usize = 2000;

/// Time-stepping controls for [`propagate_H_numeric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorSpec {
    pub dt: f64,
    pub solver_tol: f64,
    /// Largest relative norm change allowed in one step.
    pub max_drift: f64,
    /// Largest boundary-shell mass fraction tolerated.
    pub boundary_tol: f64,
    /// Steps between boundary checks and observer calls.
    pub monitor_every: usize,
}

impl Default for PropagatorSpec {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            solver_tol: 1e-10,
            max_drift: 1e-8,
            boundary_tol: 1e-10,
            monitor_every: 10,
        }
    }
}

impl PropagatorSpec {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::Input(format!("dt = {} must lie in (0, 1e-2]", self.dt)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1e-3) {
            return Err(Error::Input(format!("solver tolerance {} out of range", self.solver_tol)));
        }
        if !(self.max_drift > 0.0) || !(self.boundary_tol > 0.0) {
            return Err(Error::Input("drift and boundary bounds must be positive".into()));
        }
        if self.monitor_every == 0 {
            return Err(Error::Input("monitor_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub steps: usize,
    pub dt: f64,
    pub max_step_drift: f64,
    /// `| ||u(t)|| / ||u(0)|| - 1 |`.
    pub total_drift: f64,
    pub max_boundary_mass: f64,
    pub solver_iterations: usize,
    pub max_solver_iterations: usize,
    /// Set when the observer stopped the run early.
    pub stopped_at: Option<f64>,
}

struct Stepper<'a> {
    grid: &'a SpatialGrid,
    fft: GridFft,
    half_potential: Vec<Complex64>,
    half_free: Vec<Complex64>,
    /// `a - I` per component `j * n + k`, absent for a flat metric.
    excess: Option<Vec<Vec<f64>>>,
    deriv: Vec<Vec<Complex64>>,
    /// Inverse of `I + i tau P0 / 2` in Fourier space, `P0` the constant-coefficient part of `P`.
    precond: Vec<Complex64>,
    tau: f64,
    tol: f64,
}

impl Stepper<'_> {
    fn derivative(&self, v: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut w = v.to_vec();
        self.fft.axis(&mut w, axis, false);
        let d = &self.deriv[axis];
        let inner = if axis + 1 == self.grid.dim() { 1 } else { self.grid.points(1) };
        let len = d.len();
        for (idx, x) in w.iter_mut().enumerate() {
            *x *= d[(idx / inner) % len];
        }
        self.fft.axis(&mut w, axis, true);
        w
    }

    /// `P v = -1/2 sum_jk d_j (a - I)_jk d_k v` with `d_j` the spectral `d/dx_j`.
    fn perturbation(&self, v: &[Complex64], excess: &[Vec<f64>]) -> Vec<Complex64> {
        let n = self.grid.dim();
        let dv: Vec<Vec<Complex64>> = (0..n).map(|k| self.derivative(v, k)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for j in 0..n {
            let mut flux = vec![Complex64::new(0.0, 0.0); v.len()];
            for k in 0..n {
                let a = &excess[j * n + k];
                if a.is_empty() {
                    continue;
                }
                for (i, f) in flux.iter_mut().enumerate() {
                    *f += a[i] * dv[k][i];
                }
            }
            for (o, d) in out.iter_mut().zip(self.derivative(&flux, j)) {
                *o -= 0.5 * d;
            }
        }
        out
    }

    fn precondition(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut z = r.to_vec();
        self.fft.forward(&mut z);
        for (v, m) in z.iter_mut().zip(&self.precond) {
            *v *= m;
        }
        self.fft.inverse(&mut z);
        z
    }

    /// `(I + i tau P / 2)^{-1} (I - i tau P / 2) u` by preconditioned conjugate-orthogonal CG.
    fn cayley(&self, u: &mut [Complex64], excess: &[Vec<f64>]) -> Result<usize> {
        let shift = Complex64::new(0.0, 0.5 * self.tau);
        let apply = |v: &[Complex64]| -> Vec<Complex64> {
            let pv = self.perturbation(v, excess);
            v.iter().zip(pv).map(|(a, b)| a + shift * b).collect()
        };
        let pu = self.perturbation(u, excess);
        let rhs: Vec<Complex64> = u.iter().zip(&pu).map(|(a, b)| a - shift * b).collect();
        let mut x: Vec<Complex64> = rhs.iter().zip(u.iter()).map(|(b, v)| 2.0 * b - v).collect();
        let ax = apply(&x);
        let mut r: Vec<Complex64> = rhs.iter().zip(ax).map(|(b, a)| b - a).collect();
        let bnorm = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let udot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<Complex64>();
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rho = udot(&r, &z);
        for it in 0..MAX_SOLVER_ITERATIONS {
            let res = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if res <= self.tol * bnorm {
                u.copy_from_slice(&x);
                return Ok(it);
            }
            let q = apply(&p);
            let pq = udot(&p, &q);
            if pq.norm() == 0.0 || rho.norm() == 0.0 {
                return Err(Error::SolverStall {
                    iterations: it,
                    residual: res / bnorm,
                });
            }
            let alpha = rho / pq;
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            z = self.precondition(&r);
            let rho_next = udot(&r, &z);
            let beta = rho_next / rho;
            rho = rho_next;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        let res = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        Err(Error::SolverStall {
            iterations: MAX_SOLVER_ITERATIONS,
            residual: res / bnorm,
        })
    }

    fn free_half(&self, u: &mut [Complex64]) {
        self.fft.forward(u);
        for (v, f) in u.iter_mut().zip(&self.half_free) {
            *v *= f;
        }
        self.fft.inverse(u);
    }

    fn step(&self, u: &mut [Complex64]) -> Result<usize> {
        let mul = |u: &mut [Complex64]| {
            for (v, f) in u.iter_mut().zip(&self.half_potential) {
                *v *= f;
            }
        };
        mul(u);
        self.free_half(u);
        let iters = match &self.excess {
            Some(excess) => self.cayley(u, excess)?,
            None => 0,
        };
        self.free_half(u);
        mul(u);
        Ok(iters)
    }
}

fn norm(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `e^{-itH} u` for `H = -1/2 div a grad + 1/2 sum nu_j^2 x_j^2 + V`.
///
/// Strang splitting: exact phases for the multiplication and flat kinetic
/// parts, a Cayley step for the metric excess `a - I`.
#[allow(non_snake_case)]
pub fn propagate_H_numeric(
    field: &CoefficientField,
    t: f64,
    u: &WaveFunction,
    spec: &PropagatorSpec,
) -> Result<(WaveFunction, PropagationReport)> {
    propagate_H_numeric_observed(field, t, u, spec, |_, _| ControlFlow::Continue(()))
}

/// As [`propagate_H_numeric`], calling `observer(t, u(t))` every `monitor_every` steps.
#[allow(non_snake_case)]
pub fn propagate_H_numeric_observed(
    field: &CoefficientField,
    t: f64,
    u: &WaveFunction,
    spec: &PropagatorSpec,
    mut observer: impl FnMut(f64, &WaveFunction) -> ControlFlow<()>,
) -> Result<(WaveFunction, PropagationReport)> {
    spec.validate()?;
    let grid = u.grid();
    let n = grid.dim();
    check_dim(field.dim(), n)?;
    if !t.is_finite() {
        return Err(Error::Input("time must be finite".into()));
    }
    let mass = u.boundary_mass();
    if mass > spec.boundary_tol {
        return Err(Error::DomainTooSmall {
            t: 0.0,
            mass,
            bound: spec.boundary_tol,
        });
    }
    let steps = (t.abs() / spec.dt).ceil() as usize;
    let tau = if steps == 0 { 0.0 } else { t / steps as f64 };
    let nu = field.nu();

    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let half_potential = points
        .iter()
        .map(|x| {
            let w: f64 = 0.5 * x.iter().zip(nu).map(|(xi, v)| v * v * xi * xi).sum::<f64>() + field.potential(x);
            Complex64::from_polar(1.0, -0.5 * tau * w)
        })
        .collect();
    let wavenumbers: Vec<Vec<f64>> = (0..n).map(|a| grid.wavenumbers(a)).collect();
    let half_free = (0..grid.len())
        .map(|idx| {
            let k2: f64 = grid.unravel(idx).iter().enumerate().map(|(a, &i)| wavenumbers[a][i].powi(2)).sum();
            Complex64::from_polar(1.0, -0.25 * tau * k2)
        })
        .collect();
    let excess = if field.is_flat_metric() {
        None
    } else {
        let mut comps = vec![Vec::with_capacity(grid.len()); n * n];
        for x in &points {
            let a = field.metric(x);
            for j in 0..n {
                for k in 0..n {
                    comps[j * n + k].push(a[j * n + k] - if j == k { 1.0 } else { 0.0 });
                }
            }
        }
        // identically zero components are left empty and skipped
        for c in comps.iter_mut().filter(|c| c.iter().all(|v| *v == 0.0)) {
            c.clear();
        }
        Some(comps)
    };
    let deriv = (0..n)
        .map(|a| {
            let half = grid.points(a) / 2;
            let scale = 1.0 / grid.points(a) as f64;
            wavenumbers[a]
                .iter()
                .enumerate()
                .map(|(m, &k)| if m == half { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k * scale) })
                .collect()
        })
        .collect();
    // midrange of the diagonal excess as the constant-coefficient model
    let mean_excess = excess.as_ref().map_or(0.0, |e| {
        let diag: Vec<f64> = (0..grid.len())
            .map(|i| (0..n).map(|j| e[j * n + j].get(i).copied().unwrap_or(0.0)).sum::<f64>() / n as f64)
            .collect();
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    });
    let precond = (0..grid.len())
        .map(|idx| {
            let k2: f64 = grid
                .unravel(idx)
                .iter()
                .enumerate()
                .map(|(a, &i)| if i == grid.points(a) / 2 { 0.0 } else { wavenumbers[a][i].powi(2) })
                .sum();
            Complex64::new(1.0, 0.25 * tau * mean_excess * k2).inv()
        })
        .collect();
    let stepper = Stepper {
        grid,
        fft: GridFft::new(grid),
        half_potential,
        half_free,
        excess,
        deriv,
        precond,
        tau,
        tol: spec.solver_tol,
    };

    let mut values = u.values().to_vec();
    let initial = norm(&values);
    let mut report = PropagationReport {
        steps: 0,
        dt: tau.abs(),
        max_step_drift: 0.0,
        total_drift: 0.0,
        max_boundary_mass: mass,
        solver_iterations: 0,
        max_solver_iterations: 0,
        stopped_at: None,
    };
    for step in 1..=steps {
        let before = norm(&values);
        let iters = stepper.step(&mut values)?;
        report.solver_iterations += iters;
        report.max_solver_iterations = report.max_solver_iterations.max(iters);
        let drift = if before > 0.0 { (norm(&values) / before - 1.0).abs() } else { 0.0 };
        report.max_step_drift = report.max_step_drift.max(drift);
        report.steps = step;
        if drift > spec.max_drift || !drift.is_finite() {
            return Err(Error::Stability {
                step,
                drift,
                bound: spec.max_drift,
            });
        }
        if step % spec.monitor_every == 0 || step == steps {
            let now = tau * step as f64;
            let state = WaveFunction::from_parts(grid.clone(), values.clone(), u.declared_h());
            let mass = state.boundary_mass();
            report.max_boundary_mass = report.max_boundary_mass.max(mass);
            if mass > spec.boundary_tol {
                return Err(Error::DomainTooSmall {
                    t: now,
                    mass,
                    bound: spec.boundary_tol,
                });
            }
            if observer(now, &state).is_break() {
                report.stopped_at = Some(now);
                report.total_drift = if initial > 0.0 { (norm(&values) / initial - 1.0).abs() } else { 0.0 };
                return Ok((state, report));
            }
        }
    }
    report.total_drift = if initial > 0.0 { (norm(&values) / initial - 1.0).abs() } else { 0.0 };
    Ok((WaveFunction::from_parts(grid.clone(), values, u.declared_h()), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::harmonic::propagate_H0_exact;
    use crate::quantum::wavefunction::coherent_state;
    use std::f64::consts::PI;

    #[test]
    fn flat_field_matches_exact() {
        let grid = SpatialGrid::uniform(1, 1024, 16.0).unwrap();
        let u = coherent_state(&grid, 0.25, &[1.0], &[0.5]).unwrap();
        let field = CoefficientField::flat(1);
        let (v, rep) = propagate_H_numeric(&field, PI / 2.0, &u, &PropagatorSpec::default()).unwrap();
        let exact = propagate_H0_exact(&[1.0], PI / 2.0, &u).unwrap();
        let err = v.distance(&exact).unwrap();
        assert!(err < 1e-6, "{err}");
        assert_eq!(rep.solver_iterations, 0);
        assert!(rep.total_drift < 1e-12);
    }

    #[test]
    fn bump_field_is_unitary_and_time_reversible() {
        let grid = SpatialGrid::uniform(1, 512, 14.0).unwrap();
        let u = coherent_state(&grid, 0.25, &[-1.0], &[0.5]).unwrap();
        let field = CoefficientField::rational_bump(1, 0.3, 2.0).unwrap();
        let spec = PropagatorSpec::with_dt(5e-3);
        let (v, rep) = propagate_H_numeric(&field, 1.0, &u, &spec).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-8, "{rep:?}");
        assert!(rep.solver_iterations > 0);
        let (w, _) = propagate_H_numeric(&field, -1.0, &v, &spec).unwrap();
        assert!(w.distance(&u).unwrap() < 1e-8);
    }

    #[test]
    fn observer_can_stop_and_domain_is_monitored() {
        let grid = SpatialGrid::uniform(1, 128, 6.0).unwrap();
        let u = coherent_state(&grid, 0.5, &[0.0], &[0.0]).unwrap();
        let field = CoefficientField::flat(1);
        let mut calls = 0;
        let (_, rep) = propagate_H_numeric_observed(&field, 1.0, &u, &PropagatorSpec::with_dt(1e-2), |t, _| {
            calls += 1;
            if t >= 0.5 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert!((rep.stopped_at.unwrap() - 0.5).abs() < 1e-12);
        let far = coherent_state(&grid, 0.5, &[0.0], &[1.5]).unwrap();
        let err = propagate_H_numeric(&field, 2.0, &far, &PropagatorSpec::with_dt(1e-2));
        assert!(matches!(err, Err(Error::DomainTooSmall { .. })), "{err:?}");
        assert!(PropagatorSpec::with_dt(0.1).validate().is_err());
    }
}
