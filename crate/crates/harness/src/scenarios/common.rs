use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfprop::fields::FieldSpec;
use wfprop::quantum::SpatialGrid;
use wfprop::{CoefficientField, PhasePoint, Result};

use crate::report::num;

pub fn spec(field: wfprop::Result<CoefficientField>) -> FieldSpec {
    FieldSpec::from(field.expect("built-in field is valid"))
}

pub fn pt(x: &[f64], xi: &[f64]) -> PhasePoint {
    PhasePoint {
        x: x.to_vec(),
        xi: xi.to_vec(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn point_header(prefix: &str, dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|a| format!("{prefix}x{a}")).collect();
    h.extend((0..dim).map(|a| format!("{prefix}xi{a}")));
    h
}

pub fn point_cells(p: &PhasePoint) -> Vec<String> {
    p.x.iter().chain(&p.xi).map(|v| num(*v)).collect()
}

pub fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Periodic grid holding an h-coherent family for all times under the
/// oscillator with frequencies `nu`, starting anywhere in `centres`.
///
/// An h-coherent state has width `sqrt h` in x and `1 / sqrt h` in D; the
/// rotation trades the two, so each axis gets the orbit radius plus six
/// D-widths of room, and a Nyquist momentum twice the orbit's momentum
/// radius plus three widths.
pub fn auto_grid(centres: &[PhasePoint], h: f64, nu: &[f64]) -> Result<SpatialGrid> {
    let n = nu.len();
    let s = 1.0 / h.sqrt();
    let mut points = Vec::with_capacity(n);
    let mut extents = Vec::with_capacity(n);
    for a in 0..n {
        let (rx, rk) = centres.iter().fold((0.0f64, 0.0f64), |(rx, rk), c| {
            let k = c.xi[a] / h;
            let x = c.x[a];
            (rx.max(x.hypot(k / nu[a])), rk.max((nu[a] * x).hypot(k)))
        });
        // ten percent headroom for momentum exchanged with the perturbation
        let (rx, rk) = (1.1 * rx, 1.1 * rk);
        let l = rx + 6.0 * s / nu[a].min(1.0) + 2.0;
        let k_need = 2.0 * (rk + 3.0 * s);
        let mut count = 64usize;
        while std::f64::consts::PI * count as f64 / (2.0 * l) < k_need {
            count *= 2;
        }
        points.push(count);
        extents.push(l);
    }
    SpatialGrid::new(points, extents)
}
