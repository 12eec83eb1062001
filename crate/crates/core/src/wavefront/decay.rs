use serde::{Deserialize, Serialize};

use super::fbi::{fbi_with_floor, FbiNormalization, PhaseGrid};
use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::quantum::WaveFunction;

/// Absolute magnitude floor below which samples are not fitted.
pub const MAGNITUDE_FLOOR: f64 = 1e-15;

/// Least-squares fit of `log10 |T_h u| = c + s log10 h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    /// RMS of the fit residuals, in decades.
    pub residual: f64,
    pub magnitudes: Vec<f64>,
    pub used: usize,
    /// Fewer than two samples cleared the floor; treated as rapid decay.
    pub floor_limited: bool,
}

pub(crate) fn check_h_sequence(hs: &[f64]) -> Result<()> {
    if hs.len() < 4 {
        return Err(Error::Input(format!("need at least 4 values of h, got {}", hs.len())));
    }
    if hs.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
        return Err(Error::Input("every h must lie in (0, 1]".into()));
    }
    let ratio = hs[1] / hs[0];
    let geometric = hs
        .windows(2)
        .all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9 && (w[1] / w[0] - 1.0).abs() > 1e-9);
    if !geometric {
        return Err(Error::Input("h values must form a geometric sequence".into()));
    }
    Ok(())
}

/// Fits the decay slope from magnitudes sampled at `hs`, ignoring values at or below `floors`.
pub fn fit_decay(hs: &[f64], magnitudes: &[f64], floors: &[f64]) -> DecayFit {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(magnitudes)
        .zip(floors)
        .filter(|((_, m), f)| **m > **f)
        .map(|((h, m), _)| (h.log10(), m.log10()))
        .collect();
    let magnitudes = magnitudes.to_vec();
    if pts.len() < 2 {
        return DecayFit {
            slope: f64::INFINITY,
            residual: 0.0,
            magnitudes,
            used: pts.len(),
            floor_limited: true,
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    DecayFit {
        slope,
        residual,
        magnitudes,
        used: pts.len(),
        floor_limited: false,
    }
}

/// Decay slope of `|T_h u_h(point)|` over `hs`; `family` maps `h` to `u_h`.
pub fn decay_exponent<F>(family: F, point: &PhasePoint, hs: &[f64], norm: FbiNormalization) -> Result<DecayFit>
where
    F: Fn(f64) -> Result<WaveFunction>,
{
    check_h_sequence(hs)?;
    let grid = PhaseGrid::around(point, 0.0, 1)?;
    let mut mags = Vec::with_capacity(hs.len());
    let mut floors = Vec::with_capacity(hs.len());
    for &h in hs {
        let u = family(h)?;
        let (m, f) = fbi_with_floor(&u, h, &grid, norm)?;
        mags.push(m[0]);
        floors.push(f[0].max(MAGNITUDE_FLOOR));
    }
    Ok(fit_decay(hs, &mags, &floors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::SpatialGrid;
    use num_complex::Complex64;

    pub(crate) fn step() -> WaveFunction {
        let grid = SpatialGrid::uniform(1, 8192, 8.0).unwrap();
        WaveFunction::from_fn(grid, None, |x| {
            let v = if x[0] > 0.0 {
                1.0
            } else if x[0] == 0.0 {
                0.5
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
    }

    fn hs(k0: i32, k1: i32) -> Vec<f64> {
        (k0..=k1).map(|k| 2f64.powi(-k)).collect()
    }

    fn step_oracle(h: f64) -> f64 {
        // Simpson quadrature of int_0^inf e^{-y^2/2h - i y/h} dy on [0, 40 sqrt h]
        let n = 200_000;
        let b = 40.0 * h.sqrt();
        let dy = b / n as f64;
        let f = |y: f64| Complex64::from_polar((-y * y / (2.0 * h)).exp(), -y / h);
        let mut s = f(0.0) + f(b);
        for k in 1..n {
            s += f(k as f64 * dy) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        (s * dy / 3.0).norm() / (2.0 * std::f64::consts::PI * h).sqrt()
    }

    #[test]
    fn step_jump_matches_quadrature_oracle() {
        let u = step();
        let h_seq = hs(3, 7);
        let fit = decay_exponent(|_| Ok(u.clone()), &PhasePoint::new1(0.0, 1.0), &h_seq, FbiNormalization::Raw).unwrap();
        let oracle: Vec<f64> = h_seq.iter().map(|&h| step_oracle(h)).collect();
        for (m, o) in fit.magnitudes.iter().zip(&oracle) {
            assert!((m / o - 1.0).abs() < 1e-2, "{m} {o}");
        }
        let expect = fit_decay(&h_seq, &oracle, &[0.0; 5]);
        assert!((fit.slope - expect.slope).abs() < 5e-3, "{} {}", fit.slope, expect.slope);
        assert!((fit.slope - 0.5).abs() < 0.15 && fit.residual < 0.05);
        let away = decay_exponent(|_| Ok(u.clone()), &PhasePoint::new1(1.0, 1.0), &h_seq, FbiNormalization::Raw).unwrap();
        assert!(away.floor_limited || away.slope >= 4.0, "{away:?}");
    }

    #[test]
    fn gaussian_decays_rapidly() {
        let grid = SpatialGrid::uniform(1, 4096, 10.0).unwrap();
        let u = WaveFunction::from_fn(grid, None, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
        for p in [PhasePoint::new1(0.0, 1.0), PhasePoint::new1(0.5, -1.5), PhasePoint::new1(-1.0, 2.0)] {
            let fit = decay_exponent(|_| Ok(u.clone()), &p, &hs(3, 7), FbiNormalization::Raw).unwrap();
            assert!(fit.floor_limited || fit.slope >= 4.0, "{fit:?}");
        }
    }

    #[test]
    fn zero_is_floor_limited() {
        let u = WaveFunction::zeros(SpatialGrid::uniform(1, 256, 6.0).unwrap());
        let fit = decay_exponent(|_| Ok(u.clone()), &PhasePoint::new1(0.0, 1.0), &hs(3, 6), FbiNormalization::Raw).unwrap();
        assert!(fit.floor_limited && fit.used == 0);
    }

    #[test]
    fn h_sequence_validation() {
        assert!(check_h_sequence(&[0.5, 0.25, 0.125]).is_err());
        assert!(check_h_sequence(&[0.5, 0.25, 0.1, 0.05]).is_err());
        assert!(check_h_sequence(&[0.5, 0.5, 0.5, 0.5]).is_err());
        assert!(check_h_sequence(&[0.1, 0.05, 0.025, 0.0125]).is_ok());
    }
}
