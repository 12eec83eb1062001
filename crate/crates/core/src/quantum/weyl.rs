use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::wavefunction::WaveFunction;
use crate::error::{Error, Result};

/// Relative size of a decaying symbol at the edge of the momentum window
/// above which the quadrature is rejected.
pub const CUTOFF_TOL: f64 = 1e-10;

/// A function on `R^2` phase space, quantized by [`apply_weyl`].
pub trait PhaseSymbol: Sync {
    fn eval(&self, x: f64, xi: f64) -> Complex64;

    /// Whether the symbol should vanish at the momentum window edge.
    fn decays_in_xi(&self) -> bool {
        true
    }
}

impl<F: Fn(f64, f64) -> Complex64 + Sync> PhaseSymbol for F {
    fn eval(&self, x: f64, xi: f64) -> Complex64 {
        self(x, xi)
    }
}

/// Wraps a symbol that grows or stays bounded in `xi` (e.g. `1`, `x`).
pub struct Polynomial<F>(pub F);

impl<F: Fn(f64, f64) -> Complex64 + Sync> PhaseSymbol for Polynomial<F> {
    fn eval(&self, x: f64, xi: f64) -> Complex64 {
        (self.0)(x, xi)
    }

    fn decays_in_xi(&self) -> bool {
        false
    }
}

/// `exp(-((x - x0)^2 + (xi - xi0)^2) / (2 w^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSymbol {
    pub x0: f64,
    pub xi0: f64,
    pub width: f64,
}

impl PhaseSymbol for GaussianSymbol {
    fn eval(&self, x: f64, xi: f64) -> Complex64 {
        let r2 = (x - self.x0).powi(2) + (xi - self.xi0).powi(2);
        Complex64::new((-r2 / (2.0 * self.width * self.width)).exp(), 0.0)
    }
}

/// `exp(1 - 1 / (1 - r^2 / R^2))` inside the disc of radius `R` about
/// `(x0, xi0)`, zero outside; equals 1 at the centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBump {
    pub x0: f64,
    pub xi0: f64,
    pub radius: f64,
}

impl PhaseSymbol for CompactBump {
    fn eval(&self, x: f64, xi: f64) -> Complex64 {
        let q = ((x - self.x0).powi(2) + (xi - self.xi0).powi(2)) / (self.radius * self.radius);
        let v = if q < 1.0 { (1.0 - 1.0 / (1.0 - q)).exp() } else { 0.0 };
        Complex64::new(v, 0.0)
    }
}

/// `a^w(x, hD) u` in one dimension by direct kernel quadrature.
///
/// Midpoints `(x_i + x_j) / 2` sit on the half-spacing lattice, and the
/// momentum integral over `[-pi h / dx, pi h / dx)` uses `2N` nodes, which is
/// exact for symbols independent of `xi`.
pub fn apply_weyl(symbol: &dyn PhaseSymbol, h: f64, u: &WaveFunction) -> Result<WaveFunction> {
    let grid = u.grid();
    if grid.dim() != 1 {
        return Err(Error::Input("Weyl quantization is implemented for n = 1".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Input("h must be positive".into()));
    }
    let n = grid.points(0);
    let m = 2 * n;
    let dx = grid.dx(0);
    let l = grid.extent(0);
    let xi_min = -std::f64::consts::PI * h / dx;
    let dxi = 2.0 * std::f64::consts::PI * h / (m as f64 * dx);
    let fft = FftPlanner::new().plan_fft_inverse(m);
    let values = u.values();
    let decays = symbol.decays_in_xi();

    // fixed blocks summed in order keep the result independent of scheduling
    let total = 2 * n - 1;
    let block = total.div_ceil(64);
    let partials: Vec<(Vec<Complex64>, f64, f64)> = (0..total.div_ceil(block))
        .into_par_iter()
        .map(|b| {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            let (mut edge, mut peak) = (0.0f64, 0.0f64);
            let mut g = vec![Complex64::new(0.0, 0.0); m];
            for s in b * block..((b + 1) * block).min(total) {
                let mid = -l + 0.5 * s as f64 * dx;
                for (k, slot) in g.iter_mut().enumerate() {
                    *slot = symbol.eval(mid, xi_min + k as f64 * dxi);
                }
                if decays {
                    edge = edge.max(g[0].norm()).max(g[m - 1].norm());
                    peak = peak.max(g.iter().map(|v| v.norm()).fold(0.0, f64::max));
                }
                fft.process(&mut g);
                let lo = s.saturating_sub(n - 1);
                let hi = s.min(n - 1);
                for i in lo..=hi {
                    let j = s - i;
                    let d = i as isize - j as isize;
                    let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    out[i] += g[d.rem_euclid(m as isize) as usize] * (sign / m as f64) * values[j];
                }
            }
            (out, edge, peak)
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let (mut edge, mut peak) = (0.0f64, 0.0f64);
    for (part, e, p) in partials {
        for (x, y) in out.iter_mut().zip(part) {
            *x += y;
        }
        edge = edge.max(e);
        peak = peak.max(p);
    }
    if decays && edge > CUTOFF_TOL * peak {
        return Err(Error::Quadrature(format!(
            "symbol is {:.2e} of its peak at the momentum cutoff {:.3}; refine the grid",
            edge / peak.max(f64::MIN_POSITIVE),
            -xi_min
        )));
    }
    Ok(WaveFunction::from_parts(grid.clone(), out, u.declared_h()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::grid::SpatialGrid;
    use crate::quantum::wavefunction::coherent_state;

    fn state() -> WaveFunction {
        coherent_state(&SpatialGrid::uniform(1, 128, 8.0).unwrap(), 0.25, &[0.5], &[0.3]).unwrap()
    }

    #[test]
    fn identity_and_position() {
        let u = state();
        let one = apply_weyl(&Polynomial(|_: f64, _: f64| Complex64::new(1.0, 0.0)), 0.25, &u).unwrap();
        assert!(one.distance(&u).unwrap() < 1e-12);
        let x = apply_weyl(&Polynomial(|x: f64, _: f64| Complex64::new(x, 0.0)), 0.25, &u).unwrap();
        let exact = WaveFunction::from_fn(u.grid().clone(), None, |p| Complex64::new(p[0], 0.0));
        let expect = WaveFunction::from_parts(
            u.grid().clone(),
            u.values().iter().zip(exact.values()).map(|(a, b)| a * b).collect(),
            u.declared_h(),
        );
        assert!(x.distance(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn real_symbols_act_hermitian() {
        let u = state();
        let v = coherent_state(u.grid(), 0.25, &[-0.3], &[-0.2]).unwrap();
        let a = GaussianSymbol {
            x0: 0.2,
            xi0: 0.1,
            width: 0.6,
        };
        let au = apply_weyl(&a, 0.25, &u).unwrap();
        let av = apply_weyl(&a, 0.25, &v).unwrap();
        let lhs = v.inner(&au).unwrap();
        let rhs = av.inner(&u).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn momentum_symbol_is_derivative() {
        let h = 0.25;
        let u = coherent_state(&SpatialGrid::uniform(1, 256, 8.0).unwrap(), h, &[0.5], &[0.3]).unwrap();
        let cut = |_: f64, xi: f64| Complex64::new(xi * (-(xi / 5.0).powi(12)).exp(), 0.0);
        let du = apply_weyl(&cut, h, &u).unwrap();
        let mean = u.inner(&du).unwrap().re;
        assert!((mean - 0.3).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn truncated_symbol_is_rejected() {
        let u = state();
        let wide = GaussianSymbol {
            x0: 0.0,
            xi0: 0.0,
            width: 10.0,
        };
        assert!(matches!(apply_weyl(&wide, 0.25, &u), Err(Error::Quadrature(_))));
    }
}
