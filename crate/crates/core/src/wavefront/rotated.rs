use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decay::{check_h_sequence, fit_decay, DecayFit, MAGNITUDE_FLOOR};
use super::detect::{Classification, WfParams};
use crate::error::{Error, Result};
use crate::quantum::{apply_weyl, PhaseSymbol, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotatedReport {
    pub t: f64,
    pub fit: DecayFit,
    pub classification: Classification,
}

/// `a(cos t x + sin t eta / h, -h sin t x + cos t eta)`: the symbol of
/// `e^{itH0} a^w(x, hD) e^{-itH0}` in the `(x, hD)` calculus.
struct Rotated<'a> {
    a: &'a dyn PhaseSymbol,
    c: f64,
    s: f64,
    h: f64,
}

impl PhaseSymbol for Rotated<'_> {
    fn eval(&self, x: f64, eta: f64) -> Complex64 {
        self.a.eval(self.c * x + self.s * eta / self.h, -self.h * self.s * x + self.c * eta)
    }

    fn decays_in_xi(&self) -> bool {
        self.a.decays_in_xi()
    }
}

/// Decay of `||(e^{itH0} a^w e^{-itH0}) u_h||` over the h-sequence, for
/// detecting wavefront points of `e^{-itH0} u_h` without propagating.
pub fn rotated_symbol_test<F>(family: F, a: &dyn PhaseSymbol, t: f64, params: &WfParams) -> Result<RotatedReport>
where
    F: Fn(f64) -> Result<WaveFunction> + Sync,
{
    params.validate()?;
    check_h_sequence(&params.h_sequence)?;
    if !t.is_finite() {
        return Err(Error::Input("time must be finite".into()));
    }
    let (s, c) = t.sin_cos();
    let results: Vec<(f64, f64)> = params
        .h_sequence
        .par_iter()
        .map(|&h| {
            let u = family(h)?;
            if u.dim() != 1 {
                return Err(Error::Input("rotated symbol test is one-dimensional".into()));
            }
            let v = apply_weyl(&Rotated { a, c, s, h }, h, &u)?;
            // rounding in the 2N-node quadrature scales with the kernel sum
            let floor = (1e3 * f64::EPSILON * u.norm()).max(MAGNITUDE_FLOOR);
            Ok((v.norm(), floor))
        })
        .collect::<Result<_>>()?;
    let mags: Vec<f64> = results.iter().map(|r| r.0).collect();
    let floors: Vec<f64> = results.iter().map(|r| r.1).collect();
    let fit = fit_decay(&params.h_sequence, &mags, &floors);
    Ok(RotatedReport {
        t,
        classification: params.classify(&fit),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::phase::PhasePoint;
    use crate::quantum::{coherent_state, fourier_transform, CompactBump, SpatialGrid};
    use crate::wavefront::detect::wf_detect;
    use crate::wavefront::fbi::PhaseGrid;

    fn params() -> WfParams {
        WfParams::default().with_h_sequence(vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0])
    }

    fn bump(x0: f64, xi0: f64) -> CompactBump {
        CompactBump { x0, xi0, radius: 0.3 }
    }

    #[test]
    fn zero_and_half_turn() {
        let grid = SpatialGrid::uniform(1, 1024, 8.0).unwrap();
        let fam = |h: f64| coherent_state(&grid, h, &[1.0], &[0.5]);
        let p = params();
        let at = rotated_symbol_test(fam, &bump(1.0, 0.5), 0.0, &p).unwrap();
        assert_eq!(at.classification, Classification::InWf);
        let off = rotated_symbol_test(fam, &bump(0.0, 0.5), 0.0, &p).unwrap();
        assert_eq!(off.classification, Classification::Smooth);
        let flipped = rotated_symbol_test(fam, &bump(-1.0, -0.5), PI, &p).unwrap();
        assert_eq!(flipped.classification, Classification::InWf);
        assert!((flipped.fit.slope - at.fit.slope).abs() < 1e-8);
        let same = rotated_symbol_test(fam, &bump(1.0, 0.5), PI, &p).unwrap();
        assert_eq!(same.classification, Classification::Smooth);
    }

    #[test]
    fn quarter_turn_agrees_with_propagation() {
        // a family whose quarter-turn image is the coherent state at (x0, xi0)
        let (x0, xi0) = (0.5, 0.5);
        let grid = SpatialGrid::uniform(1, 1024, 160.0).unwrap();
        let rotated_family = |h: f64| {
            // e^{+i pi/2 H0} c_h(x0, xi0) is a Gaussian at (-xi0/h, x0) in (x, D)
            let s = 1.0 / h;
            WaveFunction::from_fn(grid.clone(), Some(h), |y| {
                let d = y[0] + xi0 / h;
                Complex64::from_polar((PI * s).powf(-0.25) * (-d * d / (2.0 * s)).exp(), x0 * y[0])
            })
            .normalized()
        };
        let p = params();
        for (a, expect) in [(bump(x0, xi0), Classification::InWf), (bump(-x0, xi0), Classification::Smooth)] {
            let r = rotated_symbol_test(rotated_family, &a, PI / 2.0, &p).unwrap();
            assert_eq!(r.classification, expect, "{:?}", r.fit);
            let centre = PhasePoint::new1(a.x0, a.xi0);
            let region = PhaseGrid::around(&centre, 0.0, 1).unwrap();
            // the quarter turn is the Fourier transform up to a constant phase,
            // landing on the dual grid where the image is resolved
            let w = wf_detect(|h| Ok(fourier_transform(&rotated_family(h)?)), &region, &p).unwrap();
            assert_eq!(w.classification[0], expect);
        }
    }
}
