use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic tensor grid on `prod_j [-L_j, L_j)` with `N_j` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct SpatialGrid {
    n: Vec<usize>,
    l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
}

impl TryFrom<GridSpec> for SpatialGrid {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        SpatialGrid::new(s.points, s.extent)
    }
}

impl From<SpatialGrid> for GridSpec {
    fn from(g: SpatialGrid) -> Self {
        GridSpec {
            points: g.n,
            extent: g.l,
        }
    }
}

impl SpatialGrid {
    pub fn new(n: Vec<usize>, l: Vec<f64>) -> Result<Self> {
        if n.is_empty() || n.len() > 2 || n.len() != l.len() {
            return Err(Error::Grid(format!(
                "grid needs 1 or 2 axes with matching extents (got {} and {})",
                n.len(),
                l.len()
            )));
        }
        for (&nj, &lj) in n.iter().zip(&l) {
            if nj < 4 || !nj.is_power_of_two() {
                return Err(Error::Grid(format!("point count {nj} must be a power of two >= 4")));
            }
            if !(lj > 0.0) || !lj.is_finite() {
                return Err(Error::Grid(format!("extent {lj} must be positive")));
            }
        }
        Ok(Self { n, l })
    }

    pub fn uniform(dim: usize, n: usize, l: f64) -> Result<Self> {
        Self::new(vec![n; dim], vec![l; dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn points(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.l[axis]
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self, axis: usize) -> f64 {
        2.0 * self.l[axis] / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.dx(a)).product()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -self.l[axis] + i as f64 * self.dx(axis)
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    /// Largest representable wavenumber `pi / dx`.
    pub fn nyquist(&self, axis: usize) -> f64 {
        PI / self.dx(axis)
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let dk = 2.0 * PI / (n as f64 * self.dx(axis));
        (0..n)
            .map(|m| {
                let s = if m < n / 2 { m as isize } else { m as isize - n as isize };
                s as f64 * dk
            })
            .collect()
    }

    /// Grid of the unitary Fourier transform: same counts, extents `pi / dx`.
    pub fn dual(&self) -> SpatialGrid {
        SpatialGrid {
            n: self.n.clone(),
            l: (0..self.dim()).map(|a| self.nyquist(a)).collect(),
        }
    }

    /// Multi-index of a flat row-major index.
    pub fn unravel(&self, idx: usize) -> Vec<usize> {
        match self.dim() {
            1 => vec![idx],
            _ => vec![idx / self.n[1], idx % self.n[1]],
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coordinate(a, i))
            .collect()
    }

    /// Fails unless `nyquist >= 2 * content` on every axis.
    pub fn check_momentum(&self, content: &[f64]) -> Result<()> {
        for (a, &c) in content.iter().enumerate().take(self.dim()) {
            if self.nyquist(a) < 2.0 * c {
                return Err(Error::Grid(format!(
                    "axis {a}: Nyquist wavenumber {:.3} is below twice the momentum content {c:.3}",
                    self.nyquist(a)
                )));
            }
        }
        Ok(())
    }

    /// Points within the outermost `fraction` of any axis.
    pub fn in_boundary_shell(&self, idx: usize, fraction: f64) -> bool {
        self.unravel(idx).iter().enumerate().any(|(a, &i)| {
            let w = ((self.n[a] as f64 * fraction).ceil() as usize).max(1);
            i < w || i >= self.n[a] - w
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let g = SpatialGrid::new(vec![8], vec![4.0]).unwrap();
        assert_eq!(g.dx(0), 1.0);
        assert_eq!(g.coordinates(0), vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.dual().extent(0), PI);
        assert!((g.dual().dual().extent(0) - 4.0).abs() < 1e-15);
        let k = g.wavenumbers(0);
        assert_eq!(k[1], PI / 4.0);
        assert_eq!(k[4], -PI);
        assert!(g.in_boundary_shell(0, 0.05) && g.in_boundary_shell(7, 0.05));
        assert!(!g.in_boundary_shell(4, 0.05));
    }

    #[test]
    fn validation() {
        assert!(SpatialGrid::new(vec![12], vec![1.0]).is_err());
        assert!(SpatialGrid::new(vec![8, 8, 8], vec![1.0; 3]).is_err());
        assert!(SpatialGrid::new(vec![8], vec![-1.0]).is_err());
        let g = SpatialGrid::uniform(2, 16, 2.0).unwrap();
        assert_eq!(g.point(17), vec![-1.75, -1.75]);
        assert!(g.check_momentum(&[7.0, 5.0]).is_err());
        assert!(g.check_momentum(&[6.0, 1.0]).is_ok());
    }
}
