use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::phase::PhasePoint;

use super::maps::{scattering_evolution, scattering_evolution_inverse};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pushforward {
    /// `psi_0(t)` at the requested points.
    pub values: Vec<f64>,
    /// `J_lambda S^lambda_{lambda t}` applied to the support samples.
    pub support_image: Vec<PhasePoint>,
    /// Every requested point with a nonzero value lies in the bounding box of
    /// `support_image` (widened by `margin`).
    pub support_certified: bool,
    pub margin: f64,
}

/// `psi_0(t; x, xi) = f((S^lambda_{lambda t})^{-1}(x, xi / lambda))` on `points`.
/// `support` samples the support of `f` (its boundary and interior).
pub fn principal_symbol_pushforward<F>(
    field: &CoefficientField,
    f: F,
    support: &[PhasePoint],
    lambda: f64,
    t: f64,
    points: &[PhasePoint],
    tol: f64,
) -> Result<Pushforward>
where
    F: Fn(&PhasePoint) -> f64 + Sync,
{
    if !(lambda >= 1.0) {
        return Err(Error::Input(format!("lambda = {lambda} must be >= 1")));
    }
    if !(-std::f64::consts::PI..=0.0).contains(&t) {
        return Err(Error::Input(format!("t = {t} must lie in [-pi, 0]")));
    }
    let s = lambda * t;
    let values: Vec<f64> = points
        .par_iter()
        .map(|p| {
            let pre = scattering_evolution_inverse(field, s, &p.scale_momentum(1.0 / lambda), Some(lambda), tol)?;
            Ok(f(&pre))
        })
        .collect::<Result<_>>()?;
    let support_image: Vec<PhasePoint> = support
        .par_iter()
        .map(|w| Ok(scattering_evolution(field, s, w, Some(lambda), tol)?.scale_momentum(lambda)))
        .collect::<Result<_>>()?;
    let margin = 1e-6 * (1.0 + lambda);
    let support_certified = match support_image.first() {
        None => values.iter().all(|v| *v == 0.0),
        Some(first) => {
            let m = first.to_state().len();
            let mut lo = vec![f64::INFINITY; m];
            let mut hi = vec![f64::NEG_INFINITY; m];
            for q in &support_image {
                for (i, v) in q.to_state().into_iter().enumerate() {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                }
            }
            points.iter().zip(&values).all(|(p, v)| {
                *v == 0.0
                    || p.to_state()
                        .iter()
                        .enumerate()
                        .all(|(i, c)| *c >= lo[i] - margin && *c <= hi[i] + margin)
            })
        }
    };
    Ok(Pushforward {
        values,
        support_image,
        support_certified,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(center: PhasePoint, radius: f64) -> impl Fn(&PhasePoint) -> f64 + Sync {
        move |p: &PhasePoint| {
            let d2 = (p.distance(&center) / radius).powi(2);
            if d2 < 1.0 {
                (-1.0 / (1.0 - d2)).exp()
            } else {
                0.0
            }
        }
    }

    fn circle(center: &PhasePoint, radius: f64, k: usize) -> Vec<PhasePoint> {
        let mut out = vec![center.clone()];
        out.extend((0..k).map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            PhasePoint::new1(center.x[0] + radius * a.cos(), center.xi[0] + radius * a.sin())
        }));
        out
    }

    #[test]
    fn time_zero_rescales_momentum() {
        let field = CoefficientField::rational_bump(1, 0.5, 2.0).unwrap();
        let c = PhasePoint::new1(0.0, 1.0);
        let f = bump(c.clone(), 0.5);
        let pts = vec![PhasePoint::new1(0.1, 8.0), PhasePoint::new1(0.0, 16.0)];
        let r = principal_symbol_pushforward(&field, &f, &circle(&c, 0.5, 32), 8.0, 0.0, &pts, 1e-10).unwrap();
        assert!((r.values[0] - f(&PhasePoint::new1(0.1, 1.0))).abs() < 1e-12);
        assert_eq!(r.values[1], 0.0);
        assert!(r.support_certified);
    }

    #[test]
    fn flat_field_is_rigid() {
        let field = CoefficientField::flat(1);
        let c = PhasePoint::new1(0.5, 1.0);
        let f = bump(c.clone(), 0.3);
        let p = PhasePoint::new1(0.6, 4.0 * 1.1);
        let r = principal_symbol_pushforward(&field, &f, &circle(&c, 0.3, 16), 4.0, -1.0, &[p], 1e-11).unwrap();
        assert!((r.values[0] - f(&PhasePoint::new1(0.6, 1.1))).abs() < 1e-9);
    }
}
