use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classflow::dop853::{Dop853, OdeSystem, StepFailure};
use crate::classflow::{flow_endpoint, harmonic_unchecked, least_squares_slope, FlowSpec, Hamiltonian};
use crate::error::{check_dim, Error, Result};
use crate::fields::CoefficientField;
use crate::phase::PhasePoint;

use super::resonance::{tilde_gamma, ResonanceStructure};

/// Time direction of an asymptotic limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringOptions {
    /// Required bound on the tail estimate.
    pub tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// First checkpoint; later ones double it.
    pub t_start: f64,
    pub t_max: f64,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            rtol: 1e-12,
            atol: 1e-14,
            t_start: 8.0,
            t_max: 65536.0,
        }
    }
}

impl ScatteringOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::Input("scattering tolerances must be positive".into()));
        }
        if !(self.t_start > 0.0) || !(self.t_max >= 4.0 * self.t_start) {
            return Err(Error::Input("need 0 < t_start and t_max >= 4 t_start".into()));
        }
        Ok(())
    }
}

/// Asymptotic data `(x_out, xi_out) = S_dir(X)` with its convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringData {
    pub x_out: Vec<f64>,
    pub xi_out: Vec<f64>,
    pub direction: Direction,
    /// Last checkpoint time (signed).
    pub t_used: f64,
    /// Change of the extrapolated limit between the last two checkpoints.
    pub tail_estimate: f64,
    /// `C |T|^{1-mu} / (mu - 1)` with `C` fitted on the last decade of `|dz/dt|`.
    pub tail_bound: f64,
    pub converged: bool,
}

impl ScatteringData {
    pub fn point(&self) -> PhasePoint {
        PhasePoint {
            x: self.x_out.clone(),
            xi: self.xi_out.clone(),
        }
    }
}

/// Kinetic flow written in the free interaction frame: state `(z, eta)` with
/// position `y = z + t eta`.
struct InteractionSystem<'a> {
    field: &'a CoefficientField,
}

impl OdeSystem for InteractionSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.field.dim()
    }

    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) {
        let n = self.field.dim();
        let (z, eta) = s.split_at(n);
        let y: Vec<f64> = z.iter().zip(eta).map(|(a, b)| a + t * b).collect();
        let (_, gx, gxi) = self.field.kinetic(&y, eta);
        for j in 0..n {
            ds[j] = gxi[j] - eta[j] + t * gx[j];
            ds[n + j] = -gx[j];
        }
    }
}

struct Checkpoint {
    t: f64,
    state: Vec<f64>,
    rate: Vec<f64>,
    outgoing: bool,
}

fn checkpoint(sys: &InteractionSystem, t: f64, state: Vec<f64>) -> Checkpoint {
    let n = state.len() / 2;
    let mut rate = vec![0.0; 2 * n];
    sys.rhs(t, &state, &mut rate);
    let (z, eta) = state.split_at(n);
    let y: Vec<f64> = z.iter().zip(eta).map(|(a, b)| a + t * b).collect();
    let a = sys.field.metric(&y);
    let mut radial = 0.0;
    for j in 0..n {
        let v: f64 = (0..n).map(|k| a[j * n + k] * eta[k]).sum();
        radial += y[j] * v;
    }
    Checkpoint {
        t,
        state,
        rate,
        outgoing: radial * t.signum() > 0.0,
    }
}

/// Limit extrapolated from two checkpoints at `T/2` and `T`, assuming the
/// rates decay like `A|t|^{-m} + B|t|^{-m-1}` (`m = mu` for `z`, `mu + 1` for `eta`).
fn extrapolate(prev: &Checkpoint, cur: &Checkpoint, mu: f64) -> Vec<f64> {
    let n = cur.state.len() / 2;
    let big_t = cur.t.abs();
    let sign = cur.t.signum();
    let ratio = (cur.t / prev.t).abs();
    (0..2 * n)
        .map(|i| {
            let m = if i < n { mu } else { mu + 1.0 };
            let f1 = cur.rate[i];
            let f2 = prev.rate[i];
            // f(T) = u + v and f(T/r) = r^m u + r^{m+1} v
            let rm = ratio.powf(m);
            let u = (ratio * rm * f1 - f2) / (ratio * rm - rm);
            let v = f1 - u;
            cur.state[i] + sign * big_t * (u / (m - 1.0) + v / m)
        })
        .collect()
}

/// `S_dir(X) = lim exp(-t H_{k0}) exp(t H_k)(X)` as `t -> +-infinity`.
pub fn scattering_map(field: &CoefficientField, x: &PhasePoint, direction: Direction) -> Result<ScatteringData> {
    scattering_map_with(field, x, direction, &ScatteringOptions::default())
}

pub fn scattering_map_with(
    field: &CoefficientField,
    x: &PhasePoint,
    direction: Direction,
    opts: &ScatteringOptions,
) -> Result<ScatteringData> {
    opts.validate()?;
    check_dim(field.dim(), x.dim())?;
    if x.momentum_norm() == 0.0 {
        return Err(Error::Input("scattering data need xi != 0".into()));
    }
    let n = field.dim();
    let mu = field.decay_mu();
    let sign = direction.sign();
    let sys = InteractionSystem { field };
    let solver = Dop853 {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: 5_000_000,
        max_step: f64::INFINITY,
        dense: false,
    };
    let mut points: Vec<Checkpoint> = Vec::new();
    let mut t = 0.0;
    let mut state = x.to_state();
    let mut next = opts.t_start;
    let mut tail = f64::INFINITY;
    let mut prev_limit: Option<Vec<f64>> = None;
    while next <= opts.t_max {
        let target = sign * next;
        let out = solver
            .integrate(&sys, t, &state, target, |_| ControlFlow::Continue(()))
            .map_err(|(fail, _)| match fail {
                StepFailure::NonFinite { t } => Error::Field { t },
                StepFailure::Underflow { t } => Error::StepUnderflow { t },
                StepFailure::MaxSteps { t, .. } => Error::NonConvergence {
                    horizon: t.abs(),
                    tail,
                    tol: opts.tol,
                },
            })?;
        t = target;
        state = out.y;
        points.push(checkpoint(&sys, t, state.clone()));
        let k = points.len();
        if k >= 2 {
            let (prev, cur) = (&points[k - 2], &points[k - 1]);
            let limit = extrapolate(prev, cur, mu);
            let escaping = prev.outgoing && cur.outgoing;
            if let Some(pl) = &prev_limit {
                tail = limit
                    .iter()
                    .zip(pl)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if escaping && tail <= opts.tol {
                    let big_t = t.abs();
                    let c = points
                        .iter()
                        .filter(|p| p.t.abs() >= big_t / 10.0)
                        .map(|p| {
                            let dz = p.rate[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                            dz * p.t.abs().powf(mu)
                        })
                        .fold(0.0, f64::max);
                    return Ok(ScatteringData {
                        x_out: limit[..n].to_vec(),
                        xi_out: limit[n..].to_vec(),
                        direction,
                        t_used: t,
                        tail_estimate: tail,
                        tail_bound: c * big_t.powf(1.0 - mu) / (mu - 1.0),
                        converged: true,
                    });
                }
            }
            prev_limit = escaping.then_some(limit);
        }
        next *= 2.0;
    }
    Err(Error::NonConvergence {
        horizon: opts.t_max,
        tail,
        tol: opts.tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseOptions {
    /// Required residual `|S(X) - Y|` (max norm).
    pub tol: f64,
    pub max_iterations: usize,
    pub scattering: ScatteringOptions,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 50,
            scattering: ScatteringOptions::default(),
        }
    }
}

/// Solves `S_dir(X) = Y` by damped Newton iteration from `X = Y`.
pub fn inverse_scattering_map(field: &CoefficientField, y: &PhasePoint, direction: Direction) -> Result<PhasePoint> {
    inverse_scattering_map_with(field, y, direction, &InverseOptions::default())
}

pub fn inverse_scattering_map_with(
    field: &CoefficientField,
    y: &PhasePoint,
    direction: Direction,
    opts: &InverseOptions,
) -> Result<PhasePoint> {
    check_dim(field.dim(), y.dim())?;
    if y.momentum_norm() == 0.0 {
        return Err(Error::Input("inverse scattering needs xi != 0".into()));
    }
    let m = 2 * y.dim();
    let target = DVector::from_vec(y.to_state());
    let fd = 1e-6 * (1.0 + y.norm());
    let eval = |s: &DVector<f64>| -> Result<DVector<f64>> {
        let p = PhasePoint::from_state(s.as_slice());
        let d = scattering_map_with(field, &p, direction, &opts.scattering)?;
        Ok(DVector::from_vec(d.point().to_state()) - &target)
    };
    let mut xk = target.clone();
    let mut fk = eval(&xk)?;
    let mut best = (fk.amax(), xk.clone());
    for iter in 0..opts.max_iterations {
        if fk.amax() <= opts.tol {
            return Ok(PhasePoint::from_state(xk.as_slice()));
        }
        let cols: Vec<DVector<f64>> = (0..m)
            .into_par_iter()
            .map(|c| {
                let mut plus = xk.clone();
                let mut minus = xk.clone();
                plus[c] += fd;
                minus[c] -= fd;
                Ok((eval(&plus)? - eval(&minus)?) / (2.0 * fd))
            })
            .collect::<Result<_>>()?;
        let jac = DMatrix::from_columns(&cols);
        let Some(step) = jac.lu().solve(&(-&fk)) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &xk + &step * alpha;
            if let Ok(ft) = eval(&trial) {
                if ft.amax() < fk.amax() {
                    xk = trial;
                    fk = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if fk.amax() < best.0 {
            best = (fk.amax(), xk.clone());
        }
        if !accepted {
            return Err(Error::InversionFailure {
                iterations: iter + 1,
                residual: best.0,
                best: PhasePoint::from_state(best.1.as_slice()),
            });
        }
    }
    if fk.amax() <= opts.tol {
        return Ok(PhasePoint::from_state(xk.as_slice()));
    }
    Err(Error::InversionFailure {
        iterations: opts.max_iterations,
        residual: best.0,
        best: PhasePoint::from_state(best.1.as_slice()),
    })
}

/// `S_t(X) = exp(-t H_{p0}) exp(t H_p)(X)`, or the scaled `S_t^lambda`.
pub fn scattering_evolution(
    field: &CoefficientField,
    t: f64,
    x: &PhasePoint,
    lambda: Option<f64>,
    tol: f64,
) -> Result<PhasePoint> {
    if !t.is_finite() {
        return Err(Error::Input("time must be finite".into()));
    }
    let lam = lambda.unwrap_or(1.0);
    let spec = FlowSpec::new(Hamiltonian::PLambda { lambda: lam }).with_tol(tol).sparse();
    let moved = flow_endpoint(field, &spec, (0.0, t), x)?;
    Ok(harmonic_unchecked(field.nu(), lam, -t, &moved))
}

/// `S_t^{-1} = exp(-t H_p) exp(t H_{p0})`, the scaled variant when `lambda` is given.
pub fn scattering_evolution_inverse(
    field: &CoefficientField,
    t: f64,
    x: &PhasePoint,
    lambda: Option<f64>,
    tol: f64,
) -> Result<PhasePoint> {
    let lam = lambda.unwrap_or(1.0);
    check_dim(field.dim(), x.dim())?;
    let rotated = harmonic_unchecked(field.nu(), lam, t, x);
    let spec = FlowSpec::new(Hamiltonian::PLambda { lambda: lam }).with_tol(tol).sparse();
    flow_endpoint(field, &spec, (0.0, -t), &rotated)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighEnergyRow {
    pub lambda: f64,
    /// `S^lambda_{sigma lambda}(X)`.
    pub scaled: PhasePoint,
    /// `(pi_1, pi_2 / lambda)` of `exp(-sigma H_{p0}) exp(sigma H_p)(x, lambda xi)`.
    pub unscaled: PhasePoint,
    /// Distance from `scaled` to the scattering limit.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighEnergyTable {
    pub sigma: f64,
    pub limit: ScatteringData,
    pub rows: Vec<HighEnergyRow>,
    /// Least-squares slope of `log E` against `log lambda`.
    pub slope: f64,
    /// Errors decrease monotonically over the second half of the sequence.
    pub eventually_decreasing: bool,
}

/// Convergence of `S^lambda_{sigma lambda}` towards `S_+` (`sigma > 0`) or
/// `S_-` (`sigma < 0`) as `lambda` grows.
pub fn high_energy_limit(
    field: &CoefficientField,
    sigma: f64,
    x: &PhasePoint,
    lambdas: &[f64],
    tol: f64,
) -> Result<HighEnergyTable> {
    if !(sigma.abs() > 0.0 && sigma.abs() < std::f64::consts::PI) {
        return Err(Error::Input(format!("sigma = {sigma} must lie in (-pi, 0) or (0, pi)")));
    }
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| !(w[1] > w[0])) || lambdas[0] <= 0.0 {
        return Err(Error::Input("lambda sequence must be positive and increasing".into()));
    }
    let direction = if sigma > 0.0 { Direction::Forward } else { Direction::Backward };
    let limit = scattering_map(field, x, direction)?;
    let target = limit.point();
    let rows: Vec<HighEnergyRow> = lambdas
        .par_iter()
        .map(|&lambda| {
            let scaled = scattering_evolution(field, sigma * lambda, x, Some(lambda), tol)?;
            let big = scattering_evolution(field, sigma, &x.scale_momentum(lambda), None, tol)?;
            Ok(HighEnergyRow {
                lambda,
                error: scaled.distance(&target),
                unscaled: big.scale_momentum(1.0 / lambda),
                scaled,
            })
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.lambda.ln(), r.error.max(1e-300).ln()))
        .collect();
    let half = rows.len() / 2;
    let eventually_decreasing = rows[half..].windows(2).all(|w| w[1].error < w[0].error);
    Ok(HighEnergyTable {
        sigma,
        limit,
        slope: least_squares_slope(&pts),
        eventually_decreasing,
        rows,
    })
}

/// Recurrence correspondence at `t = +pi` (`Forward`: `S_+^{-1} G S_-`) or
/// `t = -pi` (`Backward`: `S_-^{-1} G S_+`), with `G` the antipode or the
/// partial reflection of a resonance structure.
pub fn recurrence_map(field: &CoefficientField, x: &PhasePoint, direction: Direction) -> Result<PhasePoint> {
    recurrence_map_with(field, x, direction, None, &InverseOptions::default())
}

pub fn recurrence_map_with(
    field: &CoefficientField,
    x: &PhasePoint,
    direction: Direction,
    reflection: Option<&ResonanceStructure>,
    opts: &InverseOptions,
) -> Result<PhasePoint> {
    let inner = scattering_map_with(field, x, direction.reverse(), &opts.scattering)?.point();
    let reflected = match reflection {
        Some(r) => tilde_gamma(r, &inner)?,
        None => inner.antipode(),
    };
    inverse_scattering_map_with(field, &reflected, direction, opts)
}

/// Finite-difference Jacobian of `S_dir` at `X` (columns are derivatives).
pub fn scattering_jacobian(
    field: &CoefficientField,
    x: &PhasePoint,
    direction: Direction,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let s = x.to_state();
    let cols: Vec<DVector<f64>> = (0..s.len())
        .into_par_iter()
        .map(|c| {
            let mut p = s.clone();
            let mut m = s.clone();
            p[c] += fd_step;
            m[c] -= fd_step;
            let a = scattering_map(field, &PhasePoint::from_state(&p), direction)?.point();
            let b = scattering_map(field, &PhasePoint::from_state(&m), direction)?.point();
            Ok(DVector::from_iterator(
                s.len(),
                a.to_state().iter().zip(b.to_state()).map(|(u, v)| (u - v) / (2.0 * fd_step)),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `x_+ = x0 + int_{x0}^inf (1 - a^{-1/2}) ds` for a 1D metric with
    /// `xi0 > 0`, evaluated by adaptive Simpson quadrature after `s = x0 + u/(1-u)`.
    fn metric_only_oracle(field: &CoefficientField, x0: f64, xi0: f64) -> (f64, f64) {
        let g = |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let s = x0 + u / (1.0 - u);
            let a = field.metric(&[s])[0];
            (1.0 - a.powf(-0.5)) / (1.0 - u).powi(2)
        };
        fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (g(lm), g(rm));
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(g, a, m, fa, flm, fm, tol / 2.0, depth - 1) + simpson(g, m, b, fm, frm, fb, tol / 2.0, depth - 1)
        }
        let integral = simpson(&g, 0.0, 1.0, g(0.0), g(0.5), g(1.0), 1e-14, 40);
        let e = 0.5 * field.metric(&[x0])[0] * xi0 * xi0;
        (x0 + integral, (2.0 * e).sqrt())
    }

    #[test]
    fn flat_field_is_identity() {
        let field = CoefficientField::flat(2);
        let x = PhasePoint::new(vec![0.3, -0.2], vec![1.0, 0.4]).unwrap();
        for d in [Direction::Forward, Direction::Backward] {
            let s = scattering_map(&field, &x, d).unwrap();
            assert!(s.point().max_distance(&x) < 1e-14);
            assert!(s.converged);
        }
    }

    #[test]
    fn one_dimensional_metric_matches_quadrature() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let x = PhasePoint::new1(0.0, 1.0);
        let s = scattering_map(&field, &x, Direction::Forward).unwrap();
        let (xp, xip) = metric_only_oracle(&field, 0.0, 1.0);
        assert!((s.xi_out[0] - 1.5f64.sqrt()).abs() < 1e-10, "{:?}", s);
        assert!((s.xi_out[0] - xip).abs() < 1e-10);
        assert!((s.x_out[0] - xp).abs() < 1e-8, "{} vs {}", s.x_out[0], xp);
        assert!(s.tail_estimate <= 1e-10);
    }

    #[test]
    fn incoming_orbit_is_not_certified_early() {
        let field = CoefficientField::gaussian_bump(1, 0.8, 1.0).unwrap();
        let x = PhasePoint::new1(-30.0, 1.0);
        let s = scattering_map(&field, &x, Direction::Forward).unwrap();
        let out = flow_endpoint(&field, &FlowSpec::new(Hamiltonian::K).with_tol(1e-12), (0.0, 200.0), &x).unwrap();
        let unwound = out.x[0] - 200.0 * out.xi[0];
        assert!((s.x_out[0] - unwound).abs() < 1e-8);
        assert!((s.x_out[0] - x.x[0]).abs() > 1e-3);
    }

    #[test]
    fn ring_orbit_does_not_converge() {
        let field = CoefficientField::ring(1.0, 2.0, 1.0).unwrap();
        let x = super::super::nontrapping::ring_orbit_point(&field, 1.0).unwrap();
        let opts = ScatteringOptions {
            t_max: 4096.0,
            ..Default::default()
        };
        assert!(matches!(
            scattering_map_with(&field, &x, Direction::Forward, &opts),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn inverse_round_trip() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let y = PhasePoint::new1(1.0, 1.2);
        let x = inverse_scattering_map(&field, &y, Direction::Forward).unwrap();
        let back = scattering_map(&field, &x, Direction::Forward).unwrap().point();
        assert!(back.max_distance(&y) < 1e-9);
    }

    #[test]
    fn evolution_and_inverse() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let x = PhasePoint::new1(0.2, 0.9);
        assert_eq!(scattering_evolution(&field, 0.0, &x, None, 1e-10).unwrap(), x);
        let s = scattering_evolution(&field, 1.3, &x, Some(3.0), 1e-12).unwrap();
        let back = scattering_evolution_inverse(&field, 1.3, &s, Some(3.0), 1e-12).unwrap();
        assert!(back.max_distance(&x) < 1e-9);
    }

    #[test]
    fn flat_recurrence_is_antipode() {
        let field = CoefficientField::flat(1);
        let x = PhasePoint::new1(0.7, -1.1);
        let r = recurrence_map(&field, &x, Direction::Forward).unwrap();
        assert!(r.max_distance(&x.antipode()) < 1e-12);
    }
}
