//! Scenarios with closed-form answers: free-oscillator identities, exact
//! Egorov conjugation and calibration of the wavefront detector.

use std::f64::consts::PI;

use num_complex::Complex64;
use wfprop::quantum::{
    apply_weyl, coherent_state, fourier_transform_onto, propagate_H0_exact, zero_point_phase, GaussianSymbol,
    GridSpec, PhaseSymbol, SpatialGrid, WaveFunction,
};
use wfprop::wavefront::{wf_detect, Classification, PhaseGrid, WfParams};
use wfprop::{PhasePoint, Result};

use super::common::{max_of, pt};
use crate::config::{Defaults, Resolved};
use crate::report::{num, Criterion, Outcome, Table, Threshold};

pub fn h0_defaults() -> Defaults {
    Defaults {
        points: Some(vec![pt(&[1.0], &[0.5])]),
        h_list: Some(vec![0.25]),
        grid: Some(Some(GridSpec {
            points: vec![4096],
            extent: vec![20.0],
        })),
        tolerances: vec![("identity", 1e-8)],
        ..Defaults::default()
    }
}

fn relative_gap(a: &WaveFunction, b: &WaveFunction) -> Result<f64> {
    Ok(a.distance(b)? / b.norm())
}

pub fn h0_identities(r: &Resolved) -> Result<Outcome> {
    let grid = r.grid().expect("grid has a default").clone();
    let nu = vec![1.0; grid.dim()];
    let mut table = Table::new("identities", &["state", "identity", "residual"]);
    let mut worst = [0.0f64; 3];
    for (i, c) in r.points().iter().enumerate() {
        for &h in r.h_list() {
            let u = coherent_state(&grid, h, &c.x, &c.xi)?;
            let period = propagate_H0_exact(&nu, 2.0 * PI, &u)?;
            let e0 = relative_gap(&period, &u.scale(zero_point_phase(&nu, 2.0 * PI)))?;
            let half = propagate_H0_exact(&nu, PI, &u)?;
            let e1 = relative_gap(&half, &u.reflect().scale(zero_point_phase(&nu, PI)))?;
            let quarter = propagate_H0_exact(&nu, PI / 2.0, &u)?;
            let fourier = fourier_transform_onto(&u, &grid)?.scale(zero_point_phase(&nu, PI / 2.0));
            let e2 = relative_gap(&quarter, &fourier)?;
            for (k, (name, e)) in [("period", e0), ("parity", e1), ("fourier", e2)].into_iter().enumerate() {
                table.push(vec![format!("{i}:h={h}"), name.into(), num(e)]);
                worst[k] = worst[k].max(e);
            }
        }
    }

    // resonant frequencies (1, 2): at t = pi only the odd axis is reflected
    let nu2 = [1.0, 2.0];
    let g2 = SpatialGrid::uniform(2, 256, 10.0)?;
    let u2 = coherent_state(&g2, 0.25, &[0.8, -0.5], &[0.3, 0.4])?;
    let at_pi = propagate_H0_exact(&nu2, PI, &u2)?;
    let partial = u2.reflect_axes(&[true, false]).scale(zero_point_phase(&nu2, PI));
    let e3 = relative_gap(&at_pi, &partial)?;
    table.push(vec!["resonant_2d".into(), "partial_parity".into(), num(e3)]);

    let tol = Threshold::AtMost(r.tol("identity"));
    let mut o = Outcome::default();
    o.check(Criterion::new("period_2pi", worst[0], tol));
    o.check(Criterion::new("parity_pi", worst[1], tol));
    o.check(Criterion::new("fourier_half_pi", worst[2], tol));
    o.check(Criterion::new("resonant_partial_parity", e3, tol));
    o.note("each identity holds modulo the zero-point phase exp(-i t sum nu / 2)");
    o.tables.push(table);
    Ok(o)
}

pub fn egorov_defaults() -> Defaults {
    Defaults {
        points: Some(vec![pt(&[1.0], &[0.5])]),
        h_list: Some(vec![1.0 / 32.0]),
        times: Some(vec![PI / 3.0]),
        grid: Some(Some(GridSpec {
            points: vec![2048],
            extent: vec![16.0],
        })),
        tolerances: vec![("residual", 1e-6), ("min_signal", 1e-2)],
        ..Defaults::default()
    }
}

/// Symbol of the conjugated operator in the `(x, hD)` calculus.
struct Rotated<'a> {
    a: &'a GaussianSymbol,
    c: f64,
    s: f64,
    h: f64,
}

impl PhaseSymbol for Rotated<'_> {
    fn eval(&self, x: f64, eta: f64) -> Complex64 {
        self.a.eval(self.c * x + self.s * eta / self.h, -self.h * self.s * x + self.c * eta)
    }
}

pub fn egorov(r: &Resolved) -> Result<Outcome> {
    let grid = r.grid().expect("grid has a default").clone();
    let symbol = GaussianSymbol {
        x0: 0.8,
        xi0: 0.0,
        width: 0.5,
    };
    let mut table = Table::new("conjugation", &["h", "t", "residual", "signal"]);
    let (mut worst, mut weakest) = (0.0f64, f64::INFINITY);
    for c in r.points() {
        // a unit-width state keeps its shape under the unit oscillator
        let u = coherent_state(&grid, 1.0, &c.x, &c.xi)?;
        for &h in r.h_list() {
            for &t in r.times() {
                let moved = propagate_H0_exact(&[1.0], t, &u)?;
                let lhs = propagate_H0_exact(&[1.0], -t, &apply_weyl(&symbol, h, &moved)?)?;
                let (s, co) = t.sin_cos();
                let rot = Rotated {
                    a: &symbol,
                    c: co,
                    s,
                    h,
                };
                let rhs = apply_weyl(&rot, h, &u)?;
                let e = lhs.distance(&rhs)?;
                table.push(vec![num(h), num(t), num(e), num(rhs.norm())]);
                worst = worst.max(e);
                weakest = weakest.min(rhs.norm());
            }
        }
    }
    let mut o = Outcome::default();
    o.check(Criterion::new("conjugation_residual", worst, Threshold::AtMost(r.tol("residual"))));
    o.check(Criterion::new("signal_norm", weakest, Threshold::AtLeast(r.tol("min_signal"))));
    o.tables.push(table);
    Ok(o)
}

pub fn calibration_defaults() -> Defaults {
    Defaults {
        h_list: Some((3..=7).map(|k| 2f64.powi(-k)).collect()),
        grid: Some(Some(GridSpec {
            points: vec![16384],
            extent: vec![8.0],
        })),
        tolerances: vec![("step_slope_min", 0.35), ("step_slope_max", 0.65), ("smooth_slope", 3.0)],
        ..Defaults::default()
    }
}

/// Every run of at least four consecutive entries.
fn windows(hs: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for len in 4..=hs.len() {
        for w in hs.windows(len) {
            out.push(w.to_vec());
        }
    }
    out
}

pub fn calibration(r: &Resolved) -> Result<Outcome> {
    let grid = r.grid().expect("grid has a default").clone();
    let step = WaveFunction::from_fn(grid.clone(), None, |x| {
        let v = if x[0] > 0.0 {
            1.0
        } else if x[0] == 0.0 {
            0.5
        } else {
            0.0
        };
        Complex64::new(v, 0.0)
    });
    let gauss = WaveFunction::from_fn(grid, None, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
    let cases: [(&str, &WaveFunction, PhasePoint); 5] = [
        ("step_jump", &step, PhasePoint::new1(0.0, 1.0)),
        ("step_away", &step, PhasePoint::new1(1.0, 1.0)),
        ("gaussian", &gauss, PhasePoint::new1(0.0, 1.0)),
        ("gaussian", &gauss, PhasePoint::new1(0.5, -1.5)),
        ("gaussian", &gauss, PhasePoint::new1(-1.0, 2.0)),
    ];
    let hs = r.h_list();
    let mut table = Table::new(
        "calibration",
        &["h_max", "h_min", "case", "x", "xi", "exponent", "residual", "classification"],
    );
    let mut jump_slopes = Vec::new();
    let (mut jump_ok, mut away_ok) = (true, true);
    let mut smooth_min = f64::INFINITY;
    for w in windows(hs) {
        let params = WfParams::default().with_h_sequence(w.clone());
        for (name, u, p) in &cases {
            let region = PhaseGrid::around(p, 0.0, 1)?;
            let report = wf_detect(|_| Ok((*u).clone()), &region, &params)?;
            let (fit, class) = (&report.fits[0], report.classification[0]);
            match *name {
                "step_jump" => {
                    jump_slopes.push(fit.slope);
                    jump_ok &= class == Classification::InWf;
                }
                "step_away" => away_ok &= class == Classification::Smooth,
                _ => {
                    smooth_min = smooth_min.min(fit.slope);
                    away_ok &= class == Classification::Smooth;
                }
            }
            table.push(vec![
                num(w[0]),
                num(w[w.len() - 1]),
                name.to_string(),
                num(p.x[0]),
                num(p.xi[0]),
                if fit.floor_limited { "inf".into() } else { num(fit.slope) },
                num(fit.residual),
                class.to_string(),
            ]);
        }
    }
    let lo = jump_slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_of(jump_slopes.iter().copied());
    let mut o = Outcome::default();
    o.check(Criterion::new("step_slope_min", lo, Threshold::AtLeast(r.tol("step_slope_min"))));
    o.check(Criterion::new("step_slope_max", hi, Threshold::AtMost(r.tol("step_slope_max"))));
    o.check(Criterion::holds("step_jump_in_wf", jump_ok));
    o.check(Criterion::holds("smooth_points_smooth", away_ok));
    o.check(Criterion::new("smooth_min_slope", smooth_min, Threshold::AtLeast(r.tol("smooth_slope"))));
    o.note("floor-limited fits count as infinitely fast decay");
    o.tables.push(table);
    Ok(o)
}
