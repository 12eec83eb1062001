use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::SpatialGrid;
use super::wavefunction::WaveFunction;
use crate::error::{check_dim, Result};

/// Unnormalized per-axis transforms on a row-major 1D/2D array.
pub(crate) struct GridFft {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl GridFft {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let shape = grid.shape().to_vec();
        Self {
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
            shape,
        }
    }

    pub fn axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let plan = if inverse { &self.inverse[axis] } else { &self.forward[axis] };
        if self.shape.len() == 1 || axis == 1 {
            plan.process(data);
            return;
        }
        // columns are transformed as one batch on the transpose
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        transpose(data, &mut t, rows, cols);
        plan.process(&mut t);
        transpose(&t, data, cols, rows);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.axis(data, a, false);
        }
    }

    /// Inverse including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.axis(data, a, true);
        }
        let s = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// `dst[c * rows + r] = src[r * cols + c]`, in cache-sized tiles.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// `e^{-i pi N / 2}` without rounding error.
fn quarter_turns(n: usize) -> Complex64 {
    match (n / 2) % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn alternating(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Unitary transform `(2 pi)^{-n/2} int e^{-i x xi} u(x) dx` onto the dual grid.
pub fn fourier_transform(u: &WaveFunction) -> WaveFunction {
    let grid = u.grid();
    let fft = GridFft::new(grid);
    let mut data = u.values().to_vec();
    let sign_of = |idx: usize| -> f64 { grid.unravel(idx).iter().map(|&i| alternating(i)).product() };
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= sign_of(idx);
    }
    fft.forward(&mut data);
    let mut phase = Complex64::new(1.0, 0.0);
    for a in 0..grid.dim() {
        phase *= quarter_turns(grid.points(a)) * grid.dx(a) / (2.0 * PI).sqrt();
    }
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= phase * sign_of(idx);
    }
    WaveFunction::from_parts(grid.dual(), data, u.declared_h())
}

/// Inverse of [`fourier_transform`], back onto the dual of `u`'s grid.
pub fn inverse_fourier_transform(u: &WaveFunction) -> WaveFunction {
    let conj = u.map_values(|v| v.conj());
    fourier_transform(&conj).map_values(|v| v.conj())
}

/// `out[k] = sum_j a_j exp(-i (k0 + k dk)(y0 + j dy))` for `k < m`, by Bluestein's algorithm.
pub fn czt(a: &[Complex64], y0: f64, dy: f64, k0: f64, dk: f64, m: usize) -> Vec<Complex64> {
    let n = a.len();
    if n == 0 || m == 0 {
        return vec![Complex64::new(0.0, 0.0); m];
    }
    let theta = dk * dy;
    let chirp = |j: f64| Complex64::from_polar(1.0, -0.5 * theta * j * j);
    let size = (n + m - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut b = vec![Complex64::new(0.0, 0.0); size];
    for (j, v) in a.iter().enumerate() {
        b[j] = v * Complex64::from_polar(1.0, -k0 * j as f64 * dy) * chirp(j as f64);
    }
    let mut c = vec![Complex64::new(0.0, 0.0); size];
    for k in 0..m {
        c[k] = chirp(k as f64).conj();
    }
    for j in 1..n {
        c[size - j] = chirp(j as f64).conj();
    }
    fwd.process(&mut b);
    fwd.process(&mut c);
    for (x, y) in b.iter_mut().zip(&c) {
        *x *= y;
    }
    inv.process(&mut b);
    let scale = 1.0 / size as f64;
    (0..m)
        .map(|k| {
            let kf = k as f64;
            let pre = Complex64::from_polar(1.0, -(k0 + kf * dk) * y0) * chirp(kf);
            b[k] * scale * pre
        })
        .collect()
}

/// Unitary Fourier transform evaluated on an arbitrary target grid.
pub fn fourier_transform_onto(u: &WaveFunction, target: &SpatialGrid) -> Result<WaveFunction> {
    let grid = u.grid();
    check_dim(grid.dim(), target.dim())?;
    let mut data = u.values().to_vec();
    let mut shape = grid.shape().to_vec();
    for axis in 0..grid.dim() {
        let (y0, dy) = (-grid.extent(axis), grid.dx(axis));
        let (k0, dk) = (-target.extent(axis), target.dx(axis));
        let m = target.points(axis);
        let w = dy / (2.0 * PI).sqrt();
        if grid.dim() == 1 {
            data = czt(&data, y0, dy, k0, dk, m).into_iter().map(|v| v * w).collect();
            shape[0] = m;
        } else {
            let (rows, cols) = (shape[0], shape[1]);
            let mut out;
            if axis == 0 {
                out = vec![Complex64::new(0.0, 0.0); m * cols];
                for c in 0..cols {
                    let col: Vec<Complex64> = (0..rows).map(|r| data[r * cols + c]).collect();
                    for (r, v) in czt(&col, y0, dy, k0, dk, m).into_iter().enumerate() {
                        out[r * cols + c] = v * w;
                    }
                }
                shape[0] = m;
            } else {
                out = vec![Complex64::new(0.0, 0.0); rows * m];
                for r in 0..rows {
                    let row = &data[r * cols..(r + 1) * cols];
                    for (c, v) in czt(row, y0, dy, k0, dk, m).into_iter().enumerate() {
                        out[r * m + c] = v * w;
                    }
                }
                shape[1] = m;
            }
            data = out;
        }
    }
    Ok(WaveFunction::from_parts(target.clone(), data, u.declared_h()))
}
