use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::phase::PhasePoint;

pub const RESONANCE_TOL: f64 = 1e-9;

/// Smallest common recurrence time of the oscillator frequencies, if found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceStructure {
    pub resonant: bool,
    pub t0: Option<f64>,
    pub m: Vec<i64>,
    pub sigma: Vec<i8>,
    pub search_bound: u64,
}

/// Searches `t0 = p pi / nu_1` for `p = 1..=search_bound` and accepts the first
/// `p` for which every `t0 nu_j / pi` is an integer within `tol` (relative).
pub fn resonance_structure(nu: &[f64], search_bound: u64, tol: f64) -> Result<ResonanceStructure> {
    if nu.is_empty() || nu.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Input("oscillator weights must be positive".into()));
    }
    if search_bound == 0 {
        return Err(Error::Input("search bound must be at least 1".into()));
    }
    for p in 1..=search_bound {
        let ratios: Vec<f64> = nu.iter().map(|v| p as f64 * v / nu[0]).collect();
        let integral = ratios
            .iter()
            .all(|r| (r - r.round()).abs() <= tol * r.abs().max(1.0));
        if integral {
            let m: Vec<i64> = ratios.iter().map(|r| r.round() as i64).collect();
            let sigma = m.iter().map(|mj| if mj % 2 == 0 { 1 } else { -1 }).collect();
            return Ok(ResonanceStructure {
                resonant: true,
                t0: Some(p as f64 * std::f64::consts::PI / nu[0]),
                m,
                sigma,
                search_bound,
            });
        }
    }
    Ok(ResonanceStructure {
        resonant: false,
        t0: None,
        m: Vec::new(),
        sigma: Vec::new(),
        search_bound,
    })
}

/// Coordinate-wise reflection `(sigma_j x_j, sigma_j xi_j)`.
pub fn tilde_gamma(structure: &ResonanceStructure, x: &PhasePoint) -> Result<PhasePoint> {
    if !structure.resonant {
        return Err(Error::Input("frequencies are not resonant".into()));
    }
    check_dim(structure.sigma.len(), x.dim())?;
    let s = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&structure.sigma)
            .map(|(a, &sg)| a * f64::from(sg))
            .collect()
    };
    Ok(PhasePoint {
        x: s(&x.x),
        xi: s(&x.xi),
    })
}
