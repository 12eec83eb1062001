use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::GridFft;
use super::grid::SpatialGrid;
use super::wavefunction::WaveFunction;
use crate::error::{check_dim, Error, Result};

/// Constant `e^{-it sum nu_j / 2}` from the ground-state energy of `H0`.
///
/// Period, parity and Fourier identities of `e^{-itH0}` hold up to this factor.
pub fn zero_point_phase(nu: &[f64], t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -0.5 * t * nu.iter().sum::<f64>())
}

/// Multiplies by `e^{-i alpha x_axis^2 / 2}`.
pub(crate) fn chirp(grid: &SpatialGrid, data: &mut [Complex64], axis: usize, alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    let factors: Vec<Complex64> = grid
        .coordinates(axis)
        .iter()
        .map(|x| Complex64::from_polar(1.0, -0.5 * alpha * x * x))
        .collect();
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= factors[grid.unravel(idx)[axis]];
    }
}

/// Free evolution `e^{-i beta D_axis^2 / 2}`, spectrally.
pub(crate) fn free_step(grid: &SpatialGrid, fft: &GridFft, data: &mut [Complex64], axis: usize, beta: f64) {
    if beta == 0.0 {
        return;
    }
    let factors: Vec<Complex64> = grid
        .wavenumbers(axis)
        .iter()
        .map(|k| Complex64::from_polar(1.0 / grid.points(axis) as f64, -0.5 * beta * k * k))
        .collect();
    fft.axis(data, axis, false);
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= factors[grid.unravel(idx)[axis]];
    }
    fft.axis(data, axis, true);
}

fn reflect_axis(grid: &SpatialGrid, data: &[Complex64], axis: usize) -> Vec<Complex64> {
    let shape = grid.shape();
    (0..data.len())
        .map(|idx| {
            let mut mi = grid.unravel(idx);
            mi[axis] = (shape[axis] - mi[axis]) % shape[axis];
            if shape.len() == 1 {
                data[mi[0]]
            } else {
                data[mi[0] * shape[1] + mi[1]]
            }
        })
        .collect()
}

/// `e^{-itH0}` with `H0 = -1/2 Delta + 1/2 sum nu_j^2 x_j^2`, exactly per axis.
///
/// Each axis angle `nu t` splits as `k pi + r` with `|r| <= pi/2`; the `k pi`
/// part is a reflection power and the remainder a chirp / free / chirp product.
#[allow(non_snake_case)]
pub fn propagate_H0_exact(nu: &[f64], t: f64, u: &WaveFunction) -> Result<WaveFunction> {
    let grid = u.grid();
    check_dim(grid.dim(), nu.len())?;
    if nu.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Input("harmonic weights must be positive".into()));
    }
    if !t.is_finite() {
        return Err(Error::Input("time must be finite".into()));
    }
    let fft = GridFft::new(grid);
    let mut data = u.values().to_vec();
    let mut phase = Complex64::new(1.0, 0.0);
    for (axis, &w) in nu.iter().enumerate() {
        let theta = w * t;
        let k = (theta / PI).round();
        let r = theta - k * PI;
        let alpha = w * (0.5 * r).tan();
        let beta = r.sin() / w;
        if alpha.abs() * grid.extent(axis) > grid.nyquist(axis) {
            return Err(Error::Grid(format!(
                "axis {axis}: chirp rate {alpha:.3} aliases on extent {}",
                grid.extent(axis)
            )));
        }
        chirp(grid, &mut data, axis, alpha);
        free_step(grid, &fft, &mut data, axis, beta);
        chirp(grid, &mut data, axis, alpha);
        let ki = k as i64;
        if ki.rem_euclid(2) == 1 {
            data = reflect_axis(grid, &data, axis);
        }
        phase *= match ki.rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    if phase != Complex64::new(1.0, 0.0) {
        data.iter_mut().for_each(|v| *v *= phase);
    }
    Ok(WaveFunction::from_parts(grid.clone(), data, u.declared_h()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::fft::{fourier_transform, fourier_transform_onto};
    use crate::quantum::wavefunction::coherent_state;

    fn hermite(n: usize, nu: f64, x: f64) -> f64 {
        // normalized eigenfunctions of -1/2 d^2 + 1/2 nu^2 x^2 by recurrence
        let y = nu.sqrt() * x;
        let g = (nu / PI).powf(0.25) * (-0.5 * y * y).exp();
        let (mut p0, mut p1) = (g, 2f64.sqrt() * y * g);
        if n == 0 {
            return p0;
        }
        for m in 1..n {
            let p2 = (2.0 / (m + 1) as f64).sqrt() * y * p1 - (m as f64 / (m + 1) as f64).sqrt() * p0;
            p0 = p1;
            p1 = p2;
        }
        p1
    }

    #[test]
    fn eigenfunctions_pick_up_energy_phase() {
        let grid = SpatialGrid::uniform(1, 256, 12.0).unwrap();
        let nu = 1.3;
        for n in [0usize, 1, 4, 7] {
            let u = WaveFunction::from_fn(grid.clone(), None, |x| Complex64::new(hermite(n, nu, x[0]), 0.0));
            assert!((u.norm() - 1.0).abs() < 1e-10);
            for t in [0.3, 1.9, -2.7, 5.0] {
                let v = propagate_H0_exact(&[nu], t, &u).unwrap();
                let expect = u.scale(Complex64::from_polar(1.0, -(n as f64 + 0.5) * nu * t));
                assert!(v.distance(&expect).unwrap() < 1e-10, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn special_times() {
        let grid = SpatialGrid::uniform(1, 1024, 20.0).unwrap();
        let u = coherent_state(&grid, 0.25, &[1.5], &[-0.7]).unwrap();
        let nu = [1.0];
        let p = propagate_H0_exact(&nu, 2.0 * PI, &u).unwrap();
        assert!(p.distance(&u.scale(zero_point_phase(&nu, 2.0 * PI))).unwrap() < 1e-10);
        let r = propagate_H0_exact(&nu, PI, &u).unwrap();
        assert!(r.distance(&u.reflect().scale(zero_point_phase(&nu, PI))).unwrap() < 1e-10);
        let f = propagate_H0_exact(&nu, PI / 2.0, &u).unwrap();
        let fu = fourier_transform_onto(&u, &grid).unwrap();
        let phase = zero_point_phase(&nu, PI / 2.0);
        let err = f.distance(&fu.scale(phase)).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn quarter_period_is_fft_on_self_dual_grid() {
        let n = 64;
        let grid = SpatialGrid::uniform(1, n, (PI * n as f64 / 2.0).sqrt()).unwrap();
        assert!((grid.dual().extent(0) - grid.extent(0)).abs() < 1e-12);
        let u = coherent_state(&grid, 1.0, &[0.5], &[1.0]).unwrap();
        let f = propagate_H0_exact(&[1.0], PI / 2.0, &u).unwrap();
        let fu = fourier_transform(&u);
        let fu = WaveFunction::from_parts(grid.clone(), fu.into_values(), None);
        let phase = zero_point_phase(&[1.0], PI / 2.0);
        assert!(f.distance(&fu.scale(phase)).unwrap() < 1e-10);
    }

    #[test]
    fn group_law_two_dimensions() {
        let grid = SpatialGrid::new(vec![128, 256], vec![14.0, 15.0]).unwrap();
        let u = coherent_state(&grid, 0.5, &[1.0, -1.0], &[0.5, 0.2]).unwrap();
        let nu = [1.0, 1.7];
        let a = propagate_H0_exact(&nu, 0.8, &propagate_H0_exact(&nu, 1.1, &u).unwrap()).unwrap();
        let b = propagate_H0_exact(&nu, 1.9, &u).unwrap();
        let err = a.distance(&b).unwrap();
        assert!(err < 1e-10, "{err}");
        let back = propagate_H0_exact(&nu, -1.9, &b).unwrap();
        assert!(back.distance(&u).unwrap() < 1e-10);
        assert!((b.norm() - 1.0).abs() < 1e-12);
    }
}
