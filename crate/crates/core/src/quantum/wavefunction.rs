use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::fft::GridFft;
use super::grid::SpatialGrid;
use crate::error::{check_dim, Error, Result};

/// Fraction of each axis treated as the boundary shell.
pub const BOUNDARY_SHELL: f64 = 0.05;

/// Complex samples on a [`SpatialGrid`] in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    values: Vec<Complex64>,
    declared_h: Option<f64>,
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>, declared_h: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Input("wavefunction has non-finite values".into()));
        }
        Ok(Self::from_parts(grid, values, declared_h))
    }

    pub(crate) fn from_parts(grid: SpatialGrid, values: Vec<Complex64>, declared_h: Option<f64>) -> Self {
        Self {
            grid,
            values,
            declared_h,
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: SpatialGrid, declared_h: Option<f64>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_parts(grid, values, declared_h)
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        let n = grid.len();
        Self::from_parts(grid, vec![Complex64::new(0.0, 0.0); n], None)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn declared_h(&self) -> Option<f64> {
        self.declared_h
    }

    pub fn with_declared_h(mut self, h: Option<f64>) -> Self {
        self.declared_h = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn map_values(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect(), self.declared_h)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map_values(|v| v * c)
    }

    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        self.same_grid(other)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::Input("cannot normalize a zero wavefunction".into()));
        }
        Ok(self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    fn same_grid(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Grid("wavefunctions live on different grids".into()));
        }
        Ok(())
    }

    pub fn distance(&self, other: &WaveFunction) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    /// `min_c |c| = 1` distance, removing a global phase.
    pub fn distance_modulo_phase(&self, other: &WaveFunction) -> Result<f64> {
        let ip = self.inner(other)?;
        let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
        self.scale(phase).distance(other)
    }

    /// `u(-x)` on the same grid: index `j -> (N - j) mod N` per axis.
    pub fn reflect(&self) -> Self {
        self.reflect_axes(&vec![true; self.dim()])
    }

    pub fn reflect_axes(&self, axes: &[bool]) -> Self {
        let shape = self.grid.shape();
        let values = (0..self.values.len())
            .map(|idx| {
                let mi = self.grid.unravel(idx);
                let src: Vec<usize> = mi
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| if axes[a] { (shape[a] - i) % shape[a] } else { i })
                    .collect();
                self.values[flat(shape, &src)]
            })
            .collect();
        Self::from_parts(self.grid.clone(), values, self.declared_h)
    }

    /// `|u|^2 dx` on the outermost boundary shell relative to the total.
    pub fn boundary_mass(&self) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let shell: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.in_boundary_shell(*i, BOUNDARY_SHELL))
            .map(|(_, v)| v.norm_sqr())
            .sum();
        shell / total
    }

    /// Expected position per axis.
    pub fn position_mean(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        let mut m = vec![0.0; self.dim()];
        for (i, v) in self.values.iter().enumerate() {
            for (a, x) in self.grid.point(i).iter().enumerate() {
                m[a] += x * v.norm_sqr();
            }
        }
        m.iter().map(|s| s / total).collect()
    }

    /// Expected wavenumber `<u, -i d_a u> / <u, u>` per axis, spectrally.
    pub fn momentum_mean(&self) -> Vec<f64> {
        let fft = GridFft::new(&self.grid);
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (0..self.dim())
            .map(|a| {
                let k = self.grid.wavenumbers(a);
                let mut data = self.values.clone();
                fft.axis(&mut data, a, false);
                let mut s = 0.0;
                for (idx, v) in data.iter().enumerate() {
                    s += k[self.grid.unravel(idx)[a]] * v.norm_sqr();
                }
                // Parseval: sum |fft|^2 = N_a sum |u|^2
                s / (total * self.grid.points(a) as f64)
            })
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let dim = self.dim();
        w.write_all(&(dim as u64).to_le_bytes())?;
        for a in 0..dim {
            w.write_all(&(self.grid.points(a) as u64).to_le_bytes())?;
        }
        for a in 0..dim {
            w.write_all(&self.grid.extent(a).to_le_bytes())?;
        }
        w.write_all(&self.declared_h.unwrap_or(f64::NAN).to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated .wf header: {e}")))?;
            Ok(word)
        };
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        if dim == 0 || dim > 2 {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let mut n = Vec::with_capacity(dim);
        for _ in 0..dim {
            n.push(u64::from_le_bytes(next(&mut r)?) as usize);
        }
        let mut l = Vec::with_capacity(dim);
        for _ in 0..dim {
            l.push(f64::from_le_bytes(next(&mut r)?));
        }
        let h = f64::from_le_bytes(next(&mut r)?);
        let grid = SpatialGrid::new(n, l).map_err(|e| Error::Format(e.to_string()))?;
        let mut raw = vec![0u8; 16 * grid.len()];
        r.read_exact(&mut raw)
            .map_err(|e| Error::Format(format!("truncated .wf payload: {e}")))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after .wf payload".into()));
        }
        let values = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let declared_h = if h.is_nan() { None } else { Some(h) };
        WaveFunction::new(grid, values, declared_h).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn flat(shape: &[usize], idx: &[usize]) -> usize {
    match shape.len() {
        1 => idx[0],
        _ => idx[0] * shape[1] + idx[1],
    }
}

/// `(pi h)^{-n/4} exp(i xi0 (x - x0) / h - |x - x0|^2 / (2h))`, normalized on the grid.
pub fn coherent_state(grid: &SpatialGrid, h: f64, x0: &[f64], xi0: &[f64]) -> Result<WaveFunction> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::Input(format!("h = {h} must lie in (0, 1]")));
    }
    check_dim(grid.dim(), x0.len())?;
    check_dim(grid.dim(), xi0.len())?;
    let content: Vec<f64> = xi0.iter().map(|k| k.abs() / h + 3.0 / h.sqrt()).collect();
    grid.check_momentum(&content)?;
    for (a, &c) in x0.iter().enumerate() {
        if c.abs() + 6.0 * h.sqrt() > 0.9 * grid.extent(a) {
            return Err(Error::Grid(format!(
                "axis {a}: centre {c} is too close to the boundary for h = {h}"
            )));
        }
    }
    let n = grid.dim() as f64;
    let pref = (PI * h).powf(-n / 4.0);
    let u = WaveFunction::from_fn(grid.clone(), Some(h), |x| {
        let mut phase = 0.0;
        let mut r2 = 0.0;
        for a in 0..x.len() {
            let d = x[a] - x0[a];
            phase += xi0[a] * d / h;
            r2 += d * d;
        }
        Complex64::from_polar(pref * (-r2 / (2.0 * h)).exp(), phase)
    });
    Ok(u.normalized()?.with_declared_h(Some(h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::fft::{fourier_transform, inverse_fourier_transform};

    fn grid1() -> SpatialGrid {
        SpatialGrid::uniform(1, 512, 10.0).unwrap()
    }

    #[test]
    fn coherent_moments() {
        let h = 1.0 / 16.0;
        let u = coherent_state(&grid1(), h, &[0.7], &[-0.4]).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-10);
        assert!((u.position_mean()[0] - 0.7).abs() < h.sqrt() * 1e-8);
        assert!((u.momentum_mean()[0] + 0.4 / h).abs() < 1e-8);
        assert!(u.boundary_mass() < 1e-10);
    }

    #[test]
    fn coherent_rejects_aliasing() {
        let g = SpatialGrid::uniform(1, 64, 10.0).unwrap();
        assert!(matches!(coherent_state(&g, 1.0 / 64.0, &[0.0], &[2.0]), Err(Error::Grid(_))));
        assert!(matches!(coherent_state(&grid1(), 0.1, &[9.0], &[0.0]), Err(Error::Grid(_))));
    }

    #[test]
    fn fourier_gaussian_fixed_point() {
        let g = SpatialGrid::uniform(1, 256, 16.0).unwrap();
        let u = WaveFunction::from_fn(g, None, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0))
            .normalized()
            .unwrap();
        let f = fourier_transform(&u);
        let exact = WaveFunction::from_fn(f.grid().clone(), None, |k| {
            Complex64::new(PI.powf(-0.25) * (-k[0] * k[0] / 2.0).exp(), 0.0)
        });
        assert!(f.distance(&exact).unwrap() < 1e-10);
        assert!((f.norm() - 1.0).abs() < 1e-12);
        let back = inverse_fourier_transform(&f);
        assert!(back.distance(&u).unwrap() < 1e-12);
    }

    #[test]
    fn fourier_squares_to_reflection_2d() {
        let g = SpatialGrid::new(vec![64, 64], vec![8.0, 6.0]).unwrap();
        let u = coherent_state(&g, 0.5, &[1.0, -0.5], &[0.3, 0.2]).unwrap();
        let f2 = fourier_transform(&fourier_transform(&u));
        assert_eq!(f2.grid(), u.grid());
        assert!(f2.distance(&u.reflect()).unwrap() < 1e-10);
        let f4 = fourier_transform(&fourier_transform(&f2));
        assert!(f4.distance(&u).unwrap() < 1e-10);
    }

    #[test]
    fn wf_round_trip() {
        let u = coherent_state(&SpatialGrid::new(vec![64, 64], vec![7.0, 7.0]).unwrap(), 0.5, &[0.0, 0.0], &[0.1, 0.0])
            .unwrap();
        let mut buf = Vec::new();
        u.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 6 + 16 * 4096);
        let v = WaveFunction::read_from(buf.as_slice()).unwrap();
        assert_eq!(u, v);
        assert!(WaveFunction::read_from(&buf[..buf.len() - 3]).is_err());
        let none = WaveFunction::zeros(grid1());
        let mut buf = Vec::new();
        none.write_to(&mut buf).unwrap();
        assert_eq!(WaveFunction::read_from(buf.as_slice()).unwrap().declared_h(), None);
    }
}
