use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::quantum::{czt, WaveFunction};

/// Window half-width in units of `sqrt(h)`; the Gaussian is below `e^{-72}` beyond it.
const WINDOW: f64 = 12.0;

/// Constant in front of the wave-packet integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbiNormalization {
    /// `(2 pi h)^{-n/2}`; a step discontinuity decays like `h^{1/2}`.
    #[default]
    Raw,
    /// `2^{-n/2} (pi h)^{-3n/4}`; `||T_h u||_{L2(R^2n)} = ||u||`.
    Isometric,
    /// `(pi h)^{-n/4}`; normalized coherent states peak at 1.
    UnitPeak,
}

impl FbiNormalization {
    pub fn factor(self, h: f64, dim: usize) -> f64 {
        let n = dim as f64;
        match self {
            Self::Raw => (2.0 * PI * h).powf(-n / 2.0),
            Self::Isometric => 2f64.powf(-n / 2.0) * (PI * h).powf(-0.75 * n),
            Self::UnitPeak => (PI * h).powf(-n / 4.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let r = Self { min, max, count };
        r.validate()?;
        Ok(r)
    }

    /// `count` points centred on `c` with spacing `step`.
    pub fn centred(c: f64, step: f64, count: usize) -> Result<Self> {
        let half = 0.5 * step * (count.max(1) - 1) as f64;
        Self::new(c - half, c + half, count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min {
            return Err(Error::Input(format!("bad axis range {self:?}")));
        }
        if self.count == 1 && self.max != self.min {
            return Err(Error::Input("single-point axis needs min == max".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Rectangular lattice in phase space; `x[a]` and `xi[a]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub x: Vec<AxisRange>,
    pub xi: Vec<AxisRange>,
}

impl PhaseGrid {
    pub fn new(x: Vec<AxisRange>, xi: Vec<AxisRange>) -> Result<Self> {
        let g = Self { x, xi };
        g.validate()?;
        Ok(g)
    }

    pub fn around(centre: &PhasePoint, half_width: f64, count: usize) -> Result<Self> {
        let step = 2.0 * half_width / (count.max(2) - 1) as f64;
        let ax = |c: &f64| AxisRange::centred(*c, step, count);
        Self::new(
            centre.x.iter().map(ax).collect::<Result<_>>()?,
            centre.xi.iter().map(ax).collect::<Result<_>>()?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() || self.x.len() > 2 || self.x.len() != self.xi.len() {
            return Err(Error::Input("phase grid needs 1 or 2 matching axes".into()));
        }
        self.x.iter().chain(&self.xi).try_for_each(|r| r.validate())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn x_shape(&self) -> Vec<usize> {
        self.x.iter().map(|r| r.count).collect()
    }

    fn xi_shape(&self) -> Vec<usize> {
        self.xi.iter().map(|r| r.count).collect()
    }

    /// Number of lattice points; ordering is x-major, then xi, each row-major.
    pub fn len(&self) -> usize {
        self.x_shape().iter().chain(&self.xi_shape()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn multi(shape: &[usize], mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            out[a] = idx % shape[a];
            idx /= shape[a];
        }
        out
    }

    pub fn point(&self, idx: usize) -> PhasePoint {
        let nxi: usize = self.xi_shape().iter().product();
        let xi_i = Self::multi(&self.xi_shape(), idx % nxi);
        let x_i = Self::multi(&self.x_shape(), idx / nxi);
        PhasePoint {
            x: x_i.iter().enumerate().map(|(a, &i)| self.x[a].value(i)).collect(),
            xi: xi_i.iter().enumerate().map(|(a, &i)| self.xi[a].value(i)).collect(),
        }
    }

    pub fn points(&self) -> Vec<PhasePoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Fails when the lattice falls outside the transform's reach on `u`'s grid.
    pub fn check_coverage(&self, u: &WaveFunction, h: f64) -> Result<()> {
        let grid = u.grid();
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: self.dim(),
            });
        }
        let margin = 3.0 * h.sqrt();
        for a in 0..self.dim() {
            let l = grid.extent(a);
            if self.x[a].min < -l + margin || self.x[a].max > l - margin {
                return Err(Error::Input(format!(
                    "axis {a}: x range [{}, {}] leaves less than 3 sqrt(h) margin inside [-{l}, {l}]",
                    self.x[a].min, self.x[a].max
                )));
            }
            let nyq = h * grid.nyquist(a);
            if self.xi[a].min < -nyq || self.xi[a].max > nyq {
                return Err(Error::Input(format!(
                    "axis {a}: xi range exceeds the resolvable band +-{nyq:.3} at h = {h}"
                )));
            }
        }
        Ok(())
    }
}

fn window_range(u: &WaveFunction, axis: usize, x: f64, h: f64) -> (usize, usize) {
    let grid = u.grid();
    let dx = grid.dx(axis);
    let l = grid.extent(axis);
    let n = grid.points(axis) as isize;
    let reach = WINDOW * h.sqrt();
    let lo = (((x - reach + l) / dx).floor() as isize).clamp(0, n - 1) as usize;
    let hi = (((x + reach + l) / dx).ceil() as isize).clamp(0, n - 1) as usize;
    (lo, hi)
}

/// `T_h u(x, xi)` at one phase point by direct quadrature.
pub fn fbi_point(u: &WaveFunction, h: f64, point: &PhasePoint, norm: FbiNormalization) -> Result<Complex64> {
    let grid = u.grid();
    if point.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: point.dim(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::Input("h must be positive".into()));
    }
    let factor = norm.factor(h, grid.dim()) * grid.cell_volume();
    let weights: Vec<(usize, Vec<Complex64>)> = (0..grid.dim())
        .map(|a| {
            let (lo, hi) = window_range(u, a, point.x[a], h);
            let w = (lo..=hi)
                .map(|j| {
                    let y = grid.coordinate(a, j);
                    let d = point.x[a] - y;
                    Complex64::from_polar((-d * d / (2.0 * h)).exp(), -point.xi[a] * y / h)
                })
                .collect();
            (lo, w)
        })
        .collect();
    let v = u.values();
    let sum: Complex64 = match grid.dim() {
        1 => weights[0].1.iter().enumerate().map(|(k, w)| w * v[weights[0].0 + k]).sum(),
        _ => {
            let cols = grid.points(1);
            let (lo0, w0) = &weights[0];
            let (lo1, w1) = &weights[1];
            w0.iter()
                .enumerate()
                .map(|(r, wr)| {
                    let row = &v[(lo0 + r) * cols..];
                    wr * w1.iter().enumerate().map(|(c, wc)| wc * row[lo1 + c]).sum::<Complex64>()
                })
                .sum()
        }
    };
    Ok(sum * factor)
}

/// `|T_h u|` on every lattice point, in [`PhaseGrid::point`] order.
pub fn fbi_transform(u: &WaveFunction, h: f64, grid: &PhaseGrid, norm: FbiNormalization) -> Result<Vec<f64>> {
    Ok(fbi_with_floor(u, h, grid, norm)?.0)
}

/// Magnitudes plus a per-point rounding floor `64 eps * factor * sum |window * u|`.
pub(crate) fn fbi_with_floor(
    u: &WaveFunction,
    h: f64,
    grid: &PhaseGrid,
    norm: FbiNormalization,
) -> Result<(Vec<f64>, Vec<f64>)> {
    grid.validate()?;
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::Input(format!("h = {h} must lie in (0, 1]")));
    }
    grid.check_coverage(u, h)?;
    let sg = u.grid();
    let factor = norm.factor(h, sg.dim()) * sg.cell_volume();
    let v = u.values();
    let x_points: Vec<Vec<f64>> = {
        let shape = grid.x_shape();
        (0..shape.iter().product::<usize>())
            .map(|i| {
                PhaseGrid::multi(&shape, i)
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| grid.x[a].value(k))
                    .collect()
            })
            .collect()
    };
    let nxi: usize = grid.xi_shape().iter().product();
    let slices: Vec<(Vec<f64>, f64)> = x_points
        .par_iter()
        .map(|x| {
            // windowed samples over y, then a chirp-z transform onto the xi lattice
            let ranges: Vec<(usize, usize)> = (0..sg.dim()).map(|a| window_range(u, a, x[a], h)).collect();
            let gauss: Vec<Vec<f64>> = (0..sg.dim())
                .map(|a| {
                    (ranges[a].0..=ranges[a].1)
                        .map(|j| {
                            let d = x[a] - sg.coordinate(a, j);
                            (-d * d / (2.0 * h)).exp()
                        })
                        .collect()
                })
                .collect();
            let spec = |a: usize| {
                let r = &grid.xi[a];
                (sg.coordinate(a, ranges[a].0), sg.dx(a), r.min / h, r.step() / h, r.count)
            };
            match sg.dim() {
                1 => {
                    let seg: Vec<Complex64> = gauss[0]
                        .iter()
                        .enumerate()
                        .map(|(k, g)| v[ranges[0].0 + k] * g)
                        .collect();
                    let (y0, dy, k0, dk, m) = spec(0);
                    let mass: f64 = seg.iter().map(|c| c.norm()).sum();
                    let mags = czt(&seg, y0, dy, k0, dk, m).iter().map(|c| c.norm() * factor).collect();
                    (mags, mass)
                }
                _ => {
                    let cols = sg.points(1);
                    let (y1, dy1, k1, dk1, m1) = spec(1);
                    let mut mass = 0.0;
                    let rows: Vec<Vec<Complex64>> = gauss[0]
                        .iter()
                        .enumerate()
                        .map(|(r, g0)| {
                            let base = (ranges[0].0 + r) * cols + ranges[1].0;
                            let seg: Vec<Complex64> =
                                gauss[1].iter().enumerate().map(|(c, g1)| v[base + c] * g0 * g1).collect();
                            mass += seg.iter().map(|c| c.norm()).sum::<f64>();
                            czt(&seg, y1, dy1, k1, dk1, m1)
                        })
                        .collect();
                    let (y0, dy0, k0, dk0, m0) = spec(0);
                    let mut out = vec![0.0; m0 * m1];
                    for c in 0..m1 {
                        let col: Vec<Complex64> = rows.iter().map(|row| row[c]).collect();
                        for (r, val) in czt(&col, y0, dy0, k0, dk0, m0).iter().enumerate() {
                            out[r * m1 + c] = val.norm() * factor;
                        }
                    }
                    (out, mass)
                }
            }
        })
        .collect();
    let mut mags = Vec::with_capacity(grid.len());
    let mut floors = Vec::with_capacity(grid.len());
    for (m, mass) in slices {
        mags.extend(m);
        floors.extend(std::iter::repeat(64.0 * f64::EPSILON * factor * mass).take(nxi));
    }
    Ok((mags, floors))
}

/// Lattice argmax refined by a parabola through `ln |T|` along each coordinate.
pub fn refine_peak(grid: &PhaseGrid, magnitudes: &[f64]) -> Option<PhasePoint> {
    let (best, &peak) = magnitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let mut p = grid.point(best);
    let n = grid.dim();
    let shape: Vec<usize> = grid.x_shape().into_iter().chain(grid.xi_shape()).collect();
    let idx = PhaseGrid::multi(&shape, best);
    let flat = |m: &[usize]| m.iter().zip(&shape).fold(0, |acc, (i, s)| acc * s + i);
    for c in 0..2 * n {
        let i = idx[c];
        if i == 0 || i + 1 >= shape[c] {
            continue;
        }
        let at = |k: usize| {
            let mut m = idx.clone();
            m[c] = k;
            magnitudes[flat(&m)].max(f64::MIN_POSITIVE).ln()
        };
        let (fm, f0, fp) = (at(i - 1), at(i), at(i + 1));
        let curv = fm - 2.0 * f0 + fp;
        if curv < 0.0 {
            let offset = 0.5 * (fm - fp) / curv;
            let range = if c < n { &grid.x[c] } else { &grid.xi[c - n] };
            let v = range.value(i) + offset.clamp(-0.5, 0.5) * range.step();
            if c < n {
                p.x[c] = v;
            } else {
                p.xi[c - n] = v;
            }
        }
    }
    Some(p)
}
