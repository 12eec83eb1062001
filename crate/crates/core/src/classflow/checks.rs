use rayon::prelude::*;
use serde::Serialize;

use super::flow::{flow_endpoint, flow_numeric, FlowSpec, Hamiltonian};
use crate::error::{check_dim, Error, Result};
use crate::fields::CoefficientField;
use crate::phase::PhasePoint;

/// Position and momentum residuals of the momentum-scaling identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingResidual {
    pub position: f64,
    pub momentum: f64,
}

impl ScalingResidual {
    pub fn max(&self) -> f64 {
        self.position.max(self.momentum)
    }
}

/// Compares `exp(t H_p)(x, lambda xi)` against `exp(lambda t H_{p^lambda})(x, xi)`
/// with the momentum of the latter multiplied by `lambda`.
pub fn check_scaling_identity(
    field: &CoefficientField,
    lambda: f64,
    t: f64,
    x: &PhasePoint,
    tol: f64,
) -> Result<ScalingResidual> {
    if !(lambda > 0.0) {
        return Err(Error::Input(format!("lambda = {lambda} must be positive")));
    }
    let lhs_spec = FlowSpec::new(Hamiltonian::P).with_tol(tol).sparse();
    let rhs_spec = FlowSpec::new(Hamiltonian::PLambda { lambda }).with_tol(tol).sparse();
    let lhs = flow_endpoint(field, &lhs_spec, (0.0, t), &x.scale_momentum(lambda))?;
    let rhs = flow_endpoint(field, &rhs_spec, (0.0, lambda * t), x)?;
    let sup = |a: &[f64], b: &[f64], s: f64| {
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - s * v).abs())
            .fold(0.0, f64::max)
    };
    Ok(ScalingResidual {
        position: sup(&lhs.x, &rhs.x, 1.0),
        momentum: sup(&lhs.xi, &rhs.xi, lambda),
    })
}

/// `max |J^T Omega J - Omega|` for the finite-difference Jacobian `J` of the
/// time-`t` flow.
pub fn symplectic_check(
    field: &CoefficientField,
    spec: &FlowSpec,
    t: f64,
    x: &PhasePoint,
    fd_step: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&fd_step) {
        return Err(Error::Input(format!("fd_step = {fd_step:e} outside [1e-7, 1e-3]")));
    }
    check_dim(field.dim(), x.dim())?;
    let spec = spec.sparse();
    let y0 = x.to_state();
    let m = y0.len();
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|c| {
            let mut plus = y0.clone();
            let mut minus = y0.clone();
            plus[c] += fd_step;
            minus[c] -= fd_step;
            let a = flow_endpoint(field, &spec, (0.0, t), &PhasePoint::from_state(&plus))?;
            let b = flow_endpoint(field, &spec, (0.0, t), &PhasePoint::from_state(&minus))?;
            Ok(a.to_state()
                .iter()
                .zip(b.to_state())
                .map(|(p, q)| (p - q) / (2.0 * fd_step))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(symplectic_defect(&columns))
}

/// Defect of a Jacobian given by columns.
pub(crate) fn symplectic_defect(columns: &[Vec<f64>]) -> f64 {
    let m = columns.len();
    let n = m / 2;
    let omega = |i: usize, j: usize| -> f64 {
        if i < n && j == i + n {
            1.0
        } else if i >= n && j + n == i {
            -1.0
        } else {
            0.0
        }
    };
    let mut defect: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            // (J^T Omega J)_ab = sum_k J_ka (Omega J)_kb = sum_{k<n} (J_ka J_{k+n,b} - J_{k+n,a} J_kb)
            let mut s = 0.0;
            for k in 0..n {
                s += columns[a][k] * columns[b][k + n] - columns[a][k + n] * columns[b][k];
            }
            defect = defect.max((s - omega(a, b)).abs());
        }
    }
    defect
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeRow {
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeViolation {
    pub lambda: f64,
    pub t: f64,
    pub sample: PhasePoint,
    pub reason: String,
}

/// Fitted linear lower envelope `|y^lambda(t)| >= c1 t - c2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeScan {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Log-log slope of the per-lambda `c1` against `lambda`.
    pub c1_slope: f64,
    /// Largest tenth of `delta` for which the envelope holds uniformly.
    pub delta_ok: f64,
    pub rows: Vec<EscapeRow>,
    pub violation: Option<EscapeViolation>,
}

const SCAN_SAMPLES: usize = 400;
const MIN_SLOPE: f64 = -0.5;
const C2_GROWTH: f64 = 0.1;

struct Radii {
    lambda: f64,
    delta: f64,
    per_sample: Vec<Vec<f64>>,
}

impl Radii {
    fn time(&self, i: usize) -> f64 {
        self.lambda * self.delta * i as f64 / SCAN_SAMPLES as f64
    }
}

/// Integrates the scaled flows over `[0, lambda delta]` for every `lambda` and
/// sample and fits the escape envelope.
pub fn escape_bound_scan(
    field: &CoefficientField,
    lambdas: &[f64],
    delta: f64,
    samples: &[PhasePoint],
    tol: f64,
) -> Result<EscapeScan> {
    if !(delta > 0.0) {
        return Err(Error::Input(format!("delta = {delta} must be positive")));
    }
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Input("need at least two positive lambda values".into()));
    }
    if samples.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    for s in samples {
        check_dim(field.dim(), s.dim())?;
    }
    let radii: Vec<Radii> = lambdas
        .par_iter()
        .map(|&lambda| {
            let spec = FlowSpec::new(Hamiltonian::PLambda { lambda }).with_tol(tol);
            let per_sample = samples
                .iter()
                .map(|s| {
                    let traj = flow_numeric(field, &spec, (0.0, lambda * delta), s)?;
                    Ok((0..=SCAN_SAMPLES)
                        .map(|i| {
                            let t = lambda * delta * i as f64 / SCAN_SAMPLES as f64;
                            let p = if i == SCAN_SAMPLES {
                                traj.end().clone()
                            } else {
                                traj.at(t).expect("dense output covers the span")
                            };
                            p.position_norm()
                        })
                        .collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(Radii {
                lambda,
                delta,
                per_sample,
            })
        })
        .collect::<Result<_>>()?;

    let mut delta_ok = 0.0;
    for k in (1..=10).rev() {
        if fit_envelope(&radii, samples, k).violation.is_none() {
            delta_ok = delta * k as f64 / 10.0;
            break;
        }
    }
    let mut scan = fit_envelope(&radii, samples, 10);
    scan.delta_ok = delta_ok;
    Ok(scan)
}

fn fit_envelope(radii: &[Radii], samples: &[PhasePoint], tenths: usize) -> EscapeScan {
    let imax = SCAN_SAMPLES * tenths / 10;
    let imin = (imax / 2).max(1);
    let mut rows = Vec::with_capacity(radii.len());
    let mut worst: Option<(f64, f64, f64, usize)> = None;
    for r in radii {
        let mut c1 = f64::INFINITY;
        let mut arg = (0.0, 0);
        for (s, rs) in r.per_sample.iter().enumerate() {
            for (i, &rad) in rs.iter().enumerate().take(imax + 1).skip(imin) {
                let t = r.time(i);
                if rad / t < c1 {
                    c1 = rad / t;
                    arg = (t, s);
                }
            }
        }
        if worst.map_or(true, |w| c1 < w.0) {
            worst = Some((c1, r.lambda, arg.0, arg.1));
        }
        rows.push(EscapeRow {
            lambda: r.lambda,
            c1,
            c2: 0.0,
        });
    }
    let c1 = rows.iter().map(|r| r.c1).fold(f64::INFINITY, f64::min);
    for (row, r) in rows.iter_mut().zip(radii) {
        row.c2 = r
            .per_sample
            .iter()
            .flat_map(|rs| rs.iter().enumerate().take(imax + 1))
            .map(|(i, &rad)| (c1 * r.time(i) - rad).max(0.0))
            .fold(0.0, f64::max);
    }
    let c1_slope = if rows.iter().all(|r| r.c1 > 0.0) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda.ln(), r.c1.ln())).collect();
        least_squares_slope(&pts)
    } else {
        f64::NEG_INFINITY
    };
    let delta = radii[0].delta * tenths as f64 / 10.0;
    let (lo, hi) = rows
        .iter()
        .fold((&rows[0], &rows[0]), |(lo, hi), r| {
            (if r.lambda < lo.lambda { r } else { lo }, if r.lambda > hi.lambda { r } else { hi })
        });
    let c2_growth = hi.c2 - lo.c2;
    let c2_bound = C2_GROWTH * c1.max(0.0) * (hi.lambda - lo.lambda) * delta;
    let (_, wl, wt, ws) = worst.expect("at least one lambda");
    let witness = |reason: String| EscapeViolation {
        lambda: wl,
        t: wt,
        sample: samples[ws].clone(),
        reason,
    };
    let violation = if !(c1 > 0.0) {
        Some(witness(format!("c1 = {c1:.3e} is not positive")))
    } else if c1_slope < MIN_SLOPE {
        Some(witness(format!(
            "c1 decays in lambda with slope {c1_slope:.3} < {MIN_SLOPE}"
        )))
    } else if c2_growth > c2_bound {
        Some(witness(format!(
            "c2 grows by {c2_growth:.3e} > {c2_bound:.3e} across the lambda range"
        )))
    } else {
        None
    };
    let c2 = rows.iter().map(|r| r.c2).fold(0.0, f64::max);
    EscapeScan {
        delta,
        c1,
        c2,
        c1_slope,
        delta_ok: 0.0,
        rows,
        violation,
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classflow::flow_exact_harmonic;
    use std::f64::consts::PI;

    #[test]
    fn scaling_identity_flat_and_unit_lambda() {
        let flat = CoefficientField::flat(1);
        let x = PhasePoint::new1(0.4, 1.1);
        let r = check_scaling_identity(&flat, 5.0, 1.3, &x, 1e-11).unwrap();
        assert!(r.max() < 1e-9, "{r:?}");
        let bump = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let r = check_scaling_identity(&bump, 1.0, 2.0, &x, 1e-10).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn exact_rotation_is_symplectic() {
        let nu = [1.0, 1.7];
        let x = PhasePoint::new(vec![0.2, -0.3], vec![1.0, 0.5]).unwrap();
        let h = 1e-4;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let mut p = x.to_state();
                let mut m = x.to_state();
                p[c] += h;
                m[c] -= h;
                let fp = flow_exact_harmonic(&nu, 1.5, 0.9, &PhasePoint::from_state(&p)).unwrap();
                let fm = flow_exact_harmonic(&nu, 1.5, 0.9, &PhasePoint::from_state(&m)).unwrap();
                fp.to_state()
                    .iter()
                    .zip(fm.to_state())
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            })
            .collect();
        assert!(symplectic_defect(&cols) < 1e-8);
    }

    #[test]
    fn bump_flow_is_symplectic() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let spec = FlowSpec::new(Hamiltonian::P).with_tol(1e-11);
        let d = symplectic_check(&field, &spec, 2.0, &PhasePoint::new1(0.0, 1.0), 1e-5).unwrap();
        assert!(d < 1e-6, "defect {d}");
        assert!(symplectic_check(&field, &spec, 2.0, &PhasePoint::new1(0.0, 1.0), 1e-2).is_err());
    }

    #[test]
    fn flat_escape_envelope() {
        let field = CoefficientField::flat(1);
        let scan = escape_bound_scan(
            &field,
            &[1.0, 2.0, 4.0],
            PI / 2.0,
            &[PhasePoint::new1(0.0, 1.0)],
            1e-10,
        )
        .unwrap();
        assert!(scan.violation.is_none());
        assert!(scan.c1 >= 2.0 / PI - 1e-9, "c1 = {}", scan.c1);
        assert!(scan.c2 < 1e-9);
        assert_eq!(scan.delta_ok, PI / 2.0);
    }
}
