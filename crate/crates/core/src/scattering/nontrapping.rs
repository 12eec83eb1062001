use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::classflow::dop853::{Dop853, StepFailure};
use crate::classflow::{FlowSpec, HamiltonSystem, Hamiltonian};
use crate::error::{check_dim, Error, Result};
use crate::fields::CoefficientField;
use crate::phase::PhasePoint;

use super::maps::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapStatus {
    Nontrapping,
    TrappedUpToHorizon,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub status: TrapStatus,
    /// Signed time at which the escape criteria first held for good.
    pub escape_time: Option<f64>,
    pub max_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NontrappingReport {
    pub forward: DirectionReport,
    pub backward: DirectionReport,
    pub horizon: f64,
    pub r_escape: f64,
}

impl NontrappingReport {
    pub fn get(&self, direction: Direction) -> &DirectionReport {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }
}

/// Classifies the kinetic orbit through `X` in both time directions.
pub fn classify_nontrapping(
    field: &CoefficientField,
    x: &PhasePoint,
    t_max: f64,
    r_escape: f64,
) -> Result<NontrappingReport> {
    check_dim(field.dim(), x.dim())?;
    if x.momentum_norm() == 0.0 {
        return Err(Error::Input("nontrapping is defined only for xi != 0".into()));
    }
    if !(t_max > 0.0) || !(r_escape > 0.0) {
        return Err(Error::Input("horizon and escape radius must be positive".into()));
    }
    let (forward, backward) = rayon::join(
        || classify_direction(field, x, t_max, r_escape, Direction::Forward),
        || classify_direction(field, x, t_max, r_escape, Direction::Backward),
    );
    Ok(NontrappingReport {
        forward: forward?,
        backward: backward?,
        horizon: t_max,
        r_escape,
    })
}

struct Kinematics {
    radius: f64,
    radial: f64,
    convexity: f64,
    energy: f64,
}

fn kinematics(field: &CoefficientField, y: &[f64], eta: &[f64]) -> Kinematics {
    let n = y.len();
    let (a, da) = field.metric_with_grad(y);
    let (k, gx, _) = field.kinetic(y, eta);
    let vel: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|m| a[j * n + m] * eta[m]).sum())
        .collect();
    let mut acc = vec![0.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for l in 0..n {
            for m in 0..n {
                s += da[l * n * n + j * n + m] * vel[l] * eta[m];
            }
            s -= a[j * n + l] * gx[l];
        }
        acc[j] = s;
    }
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    Kinematics {
        radius: dot(y, y).sqrt(),
        radial: dot(y, &vel),
        convexity: 2.0 * (dot(&vel, &vel) + dot(y, &acc)),
        energy: k,
    }
}

fn classify_direction(
    field: &CoefficientField,
    x: &PhasePoint,
    t_max: f64,
    r_escape: f64,
    direction: Direction,
) -> Result<DirectionReport> {
    let n = field.dim();
    let sign = direction.sign();
    let sys = HamiltonSystem {
        field,
        hamiltonian: Hamiltonian::K,
    };
    let solver = Dop853 {
        dense: false,
        ..FlowSpec::new(Hamiltonian::K).with_tol(1e-10).solver()
    };
    let mut max_radius = x.position_norm();
    let mut candidate: Option<(f64, f64)> = None;
    let mut last_radius = max_radius;
    let mut confirmed = None;
    let result = solver.integrate(&sys, 0.0, &x.to_state(), sign * t_max, |step| {
        let kin = kinematics(field, &step.y[..n], &step.y[n..]);
        max_radius = max_radius.max(kin.radius);
        let growing = kin.radius >= last_radius;
        last_radius = kin.radius;
        match candidate {
            None => {
                let outward = kin.radial * sign > 0.0;
                if kin.radius > r_escape && outward && kin.convexity >= 2.0 * kin.energy {
                    let speed = (2.0 * kin.energy).sqrt().max(f64::MIN_POSITIVE);
                    let window = step.t.abs().max(2.0 * r_escape / speed).max(10.0);
                    candidate = Some((step.t, step.t.abs() + window));
                }
            }
            Some((te, until)) => {
                if !growing {
                    candidate = None;
                } else if step.t.abs() >= until {
                    confirmed = Some(te);
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    });
    match result {
        Ok(_) => {}
        Err((StepFailure::NonFinite { t }, _)) => return Err(Error::Field { t }),
        Err((StepFailure::Underflow { t }, _)) => return Err(Error::StepUnderflow { t }),
        Err((StepFailure::MaxSteps { .. }, _)) => {}
    }
    let status = if confirmed.is_some() {
        TrapStatus::Nontrapping
    } else if max_radius < r_escape {
        TrapStatus::TrappedUpToHorizon
    } else {
        TrapStatus::Undetermined
    };
    Ok(DirectionReport {
        status,
        escape_time: confirmed,
        max_radius,
    })
}

/// Radius of the stable circular geodesic of an isotropic planar metric:
/// the first local minimum of `alpha(r) / r^2`.
pub fn circular_orbit_radius(field: &CoefficientField) -> Result<f64> {
    if field.dim() != 2 {
        return Err(Error::Input("circular orbits need dimension 2".into()));
    }
    let f = |r: f64| field.metric(&[r, 0.0])[0] / (r * r);
    let (lo, hi, steps) = (0.05, 20.0, 4000);
    let dr = (hi - lo) / steps as f64;
    for i in 1..steps {
        let r = lo + i as f64 * dr;
        if f(r) < f(r - dr) && f(r) <= f(r + dr) {
            // golden-section refinement on [r - dr, r + dr]
            let (mut a, mut b) = (r - dr, r + dr);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            return Ok(0.5 * (a + b));
        }
    }
    Err(Error::Input("metric has no stable circular geodesic".into()))
}

/// Phase point on the stable circular geodesic, moving counterclockwise.
pub fn ring_orbit_point(field: &CoefficientField, momentum: f64) -> Result<PhasePoint> {
    let r = circular_orbit_radius(field)?;
    PhasePoint::new(vec![r, 0.0], vec![0.0, momentum])
}
