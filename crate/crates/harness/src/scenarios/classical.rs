//! Scenarios on classical flows and scattering maps.

use std::f64::consts::PI;

use rand::Rng;
use wfprop::classflow::{
    check_scaling_identity, escape_bound_scan, flow_exact_harmonic, flow_numeric, symplectic_check, FlowSpec,
    Hamiltonian,
};
use wfprop::fields::{check_assumption_a, eval_symbols, MetricFamily, PotentialFamily, Profile};
use wfprop::scattering::{
    high_energy_limit, inverse_scattering_map, recurrence_map, ring_orbit_point, scattering_evolution,
    scattering_map, Direction,
};
use wfprop::{CoefficientField, PhasePoint, Result};

use super::common::{max_of, point_cells, point_header, pt, rng, spec};
use crate::config::{Defaults, Resolved};
use crate::report::{num, Criterion, Outcome, Table, Threshold};

const FLOW_TOL: f64 = 1e-12;
const SCALING_TOL: f64 = 1e-11;
const FD_STEP: f64 = 1e-5;

fn random_point<R: Rng>(r: &mut R, dim: usize, x_max: f64, xi: (f64, f64)) -> PhasePoint {
    let x = (0..dim).map(|_| r.gen_range(-x_max..x_max)).collect();
    let xi = (0..dim)
        .map(|_| {
            let m = r.gen_range(xi.0..xi.1);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    PhasePoint { x, xi }
}

pub fn flat_flow_defaults() -> Defaults {
    Defaults {
        field: Some(Some(spec(Ok(CoefficientField::flat(2))))),
        samples: Some(20),
        seed: Some(1),
        tolerances: vec![("position", 1e-8), ("energy_drift", 1e-9), ("symplectic", 1e-6)],
        ..Defaults::default()
    }
}

pub fn flat_flow(r: &Resolved) -> Result<Outcome> {
    let field = r.field();
    let n = field.dim();
    let spec = FlowSpec::new(Hamiltonian::P).with_tol(FLOW_TOL).sparse();
    let mut g = rng(r.seed());
    let draws: Vec<(f64, PhasePoint)> = (0..r.samples())
        .map(|_| (g.gen_range(-2.0 * PI..2.0 * PI), random_point(&mut g, n, 2.0, (0.0, 2.0))))
        .collect();
    let mut header = vec!["t".to_string()];
    header.extend(point_header("", n));
    header.extend(["error", "energy_drift", "symplectic"].map(String::from));
    let mut table = Table::with_header("draws", header);
    let (mut err, mut drift, mut symp) = (Vec::new(), Vec::new(), Vec::new());
    for (t, x) in &draws {
        let traj = flow_numeric(field, &spec, (0.0, *t), x)?;
        let exact = flow_exact_harmonic(field.nu(), 1.0, *t, x)?;
        let e = traj.end().max_distance(&exact);
        let d = traj.relative_energy_drift();
        let s = symplectic_check(field, &spec, *t, x, FD_STEP)?;
        let mut row = vec![num(*t)];
        row.extend(point_cells(x));
        row.extend([num(e), num(d), num(s)]);
        table.push(row);
        err.push(e);
        drift.push(d);
        symp.push(s);
    }
    let mut o = Outcome::default();
    o.check(Criterion::new("max_position_error", max_of(err), Threshold::AtMost(r.tol("position"))));
    o.check(Criterion::new("max_energy_drift", max_of(drift), Threshold::AtMost(r.tol("energy_drift"))));
    o.check(Criterion::new("max_symplectic_defect", max_of(symp), Threshold::AtMost(r.tol("symplectic"))));
    o.record("draws", draws.len());
    o.tables.push(table);
    Ok(o)
}

pub fn scaling_defaults() -> Defaults {
    Defaults {
        field: Some(None),
        samples: Some(50),
        seed: Some(2),
        tolerances: vec![("residual", 1e-7)],
        ..Defaults::default()
    }
}

/// One of four perturbation families with a random coupling.
fn random_field<R: Rng>(g: &mut R, k: usize) -> Result<CoefficientField> {
    let c = g.gen_range(0.1..0.4);
    match k % 4 {
        0 => CoefficientField::rational_bump(1, c, 2.0),
        1 => CoefficientField::rational_bump(2, c, 2.0),
        2 => CoefficientField::new(
            2,
            MetricFamily::OffDiagonal {
                profile: Profile::Rational {
                    coupling: c,
                    exponent: 2.0,
                },
            },
            PotentialFamily::None,
            2.0,
            vec![1.0, 1.0],
        ),
        _ => CoefficientField::gaussian_bump(1, c, 1.0)?.with_potential(PotentialFamily::Radial {
            profile: Profile::Rational {
                coupling: c,
                exponent: 1.0,
            },
        }),
    }
}

/// Largest coordinate gap between `a` and the momentum dilation of `b`,
/// with momentum gaps measured in units of `lambda`.
fn dilation_gap(a: &PhasePoint, b: &PhasePoint, lambda: f64) -> f64 {
    let dx = a.x.iter().zip(&b.x).map(|(u, v)| (u - v).abs());
    let dxi = a.xi.iter().zip(&b.xi).map(|(u, v)| (u - lambda * v).abs() / lambda);
    max_of(dx.chain(dxi))
}

pub fn scaling_identities(r: &Resolved) -> Result<Outcome> {
    let mut g = rng(r.seed());
    let mut table = Table::new(
        "draws",
        &["draw", "dim", "lambda", "t", "p_flow", "p0_flow", "scattering_evolution"],
    );
    let (mut w1, mut w2, mut w6) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..r.samples() {
        let field = match r.field_opt() {
            Some(f) => f.clone(),
            None => random_field(&mut g, k)?,
        };
        let n = field.dim();
        let lambda = g.gen_range(1.0..32.0);
        let t = g.gen_range(0.0..PI);
        let x = random_point(&mut g, n, 2.0, (0.3, 2.0));

        let res = check_scaling_identity(&field, lambda, t, &x, SCALING_TOL)?;
        let e1 = res.position.max(res.momentum / lambda);

        // free oscillator: closed form on one side, numerical p0^lambda flow on the other
        let flat = CoefficientField::flat(n).with_nu(field.nu().to_vec())?;
        let lhs = flow_exact_harmonic(field.nu(), 1.0, t, &x.scale_momentum(lambda))?;
        let spec = FlowSpec::new(Hamiltonian::PLambda { lambda }).with_tol(SCALING_TOL).sparse();
        let rhs = flow_numeric(&flat, &spec, (0.0, lambda * t), &x)?;
        let e2 = dilation_gap(&lhs, rhs.end(), lambda);

        let lhs = scattering_evolution(&field, t, &x.scale_momentum(lambda), None, SCALING_TOL)?;
        let rhs = scattering_evolution(&field, lambda * t, &x, Some(lambda), SCALING_TOL)?;
        let e6 = dilation_gap(&lhs, &rhs, lambda);

        table.push(vec![
            k.to_string(),
            n.to_string(),
            num(lambda),
            num(t),
            num(e1),
            num(e2),
            num(e6),
        ]);
        w1.push(e1);
        w2.push(e2);
        w6.push(e6);
    }
    let tol = r.tol("residual");
    let mut o = Outcome::default();
    o.check(Criterion::new("p_flow_dilation", max_of(w1), Threshold::AtMost(tol)));
    o.check(Criterion::new("p0_flow_dilation", max_of(w2), Threshold::AtMost(tol)));
    o.check(Criterion::new("scattering_evolution_dilation", max_of(w6), Threshold::AtMost(tol)));
    o.note("momentum residuals are divided by lambda, i.e. measured in unscaled units");
    o.tables.push(table);
    Ok(o)
}

pub fn escape_defaults() -> Defaults {
    Defaults {
        field: Some(Some(spec(CoefficientField::rational_bump(1, 0.5, 2.0)))),
        points: Some(vec![pt(&[0.0], &[1.0])]),
        times: Some(vec![0.5]),
        lambdas: Some(vec![4.0, 8.0, 16.0, 32.0]),
        samples: Some(3),
        tolerances: vec![("neighbourhood", 0.05)],
        ..Defaults::default()
    }
}

/// `per_axis^(2n)` points on a cube of half-width `radius` about `c`.
fn neighbourhood(c: &PhasePoint, radius: f64, per_axis: usize) -> Vec<PhasePoint> {
    let state = c.to_state();
    let m = state.len();
    let offsets: Vec<f64> = if per_axis == 1 {
        vec![0.0]
    } else {
        (0..per_axis)
            .map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let total = per_axis.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            let mut s = state.clone();
            for v in s.iter_mut() {
                *v += offsets[idx % per_axis];
                idx /= per_axis;
            }
            PhasePoint::from_state(&s)
        })
        .collect()
}

pub fn escape(r: &Resolved) -> Result<Outcome> {
    let field = r.field();
    let delta = r.times()[0];
    let lambdas = r.lambdas();
    let samples = neighbourhood(&r.points()[0], r.tol("neighbourhood"), r.samples());
    let scan = escape_bound_scan(field, lambdas, delta, &samples, 1e-10)?;

    let ring = CoefficientField::ring(1.0, 2.0, 1.0)?;
    let orbit = ring_orbit_point(&ring, 1.0)?;
    let trapped = escape_bound_scan(&ring, lambdas, delta, &[orbit.clone()], 1e-10)?;

    let mut table = Table::new("envelope", &["field", "lambda", "c1", "c2"]);
    for (name, s) in [("bump", &scan), ("ring", &trapped)] {
        for row in &s.rows {
            table.push(vec![name.into(), num(row.lambda), num(row.c1), num(row.c2)]);
        }
    }
    let mut o = Outcome::default();
    o.check(Criterion::new("bump_c1", scan.c1, Threshold::Above(0.0)));
    o.check(Criterion::holds("bump_envelope_stable", scan.violation.is_none()));
    o.check(Criterion::holds("ring_violation_reported", trapped.violation.is_some()));
    o.record("bump_c1", scan.c1);
    o.record("bump_c2", scan.c2);
    o.record("bump_c1_slope", scan.c1_slope);
    o.record("bump_delta_ok", scan.delta_ok);
    o.record("ring_orbit_point", &orbit);
    o.record("ring_c1_slope", trapped.c1_slope);
    o.record("ring_violation", &trapped.violation);
    o.record("neighbourhood_samples", samples.len());
    o.tables.push(table.plotted("lambda", &["c1", "c2"], true, false));
    Ok(o)
}

fn sigma_label(sigma: f64) -> String {
    if sigma > 0.0 {
        "forward".into()
    } else {
        "backward".into()
    }
}

/// Convergence tables for each sigma in `times`; returns the slopes and the
/// largest disagreement between the scaled and unscaled routes.
fn convergence(r: &Resolved, o: &mut Outcome) -> Result<Vec<(f64, f64, bool)>> {
    let field = r.field();
    let x = &r.points()[0];
    let mut table = Table::new("convergence", &["sigma", "lambda", "error", "route_gap"]);
    let mut slopes = Vec::new();
    let mut gap = 0.0f64;
    for &sigma in r.times() {
        let tab = high_energy_limit(field, sigma, x, r.lambdas(), SCALING_TOL)?;
        for row in &tab.rows {
            let g = row.scaled.max_distance(&row.unscaled);
            gap = gap.max(g);
            table.push(vec![num(sigma), num(row.lambda), num(row.error), num(g)]);
        }
        o.record(&format!("{}_limit", sigma_label(sigma)), tab.limit.point());
        slopes.push((sigma, tab.slope, tab.eventually_decreasing));
    }
    o.check(Criterion::new("route_agreement", gap, Threshold::AtMost(1e-7)));
    o.tables.push(table.plotted("lambda", &["error"], true, true));
    Ok(slopes)
}

pub fn high_energy_defaults() -> Defaults {
    let field = CoefficientField::new(
        2,
        MetricFamily::OffDiagonal {
            profile: Profile::Rational {
                coupling: 0.5,
                exponent: 2.0,
            },
        },
        PotentialFamily::None,
        2.0,
        vec![1.0, 1.0],
    );
    Defaults {
        field: Some(Some(spec(field))),
        points: Some(vec![pt(&[0.0, 0.0], &[1.0, 0.5])]),
        times: Some(vec![PI / 2.0, -PI / 2.0]),
        lambdas: Some(vec![4.0, 8.0, 16.0, 32.0, 64.0]),
        tolerances: vec![("slope_min", -1.3), ("slope_max", -0.7)],
        ..Defaults::default()
    }
}

pub fn high_energy(r: &Resolved) -> Result<Outcome> {
    let mut o = Outcome::default();
    let window = Threshold::Within(r.tol("slope_min"), r.tol("slope_max"));
    for (sigma, slope, decreasing) in convergence(r, &mut o)? {
        let tag = sigma_label(sigma);
        o.check(Criterion::new(format!("{tag}_slope"), slope, window));
        o.check(Criterion::holds(format!("{tag}_decreasing"), decreasing));
    }
    Ok(o)
}

pub fn rate_defaults() -> Defaults {
    Defaults {
        field: Some(Some(spec(CoefficientField::rational_bump(1, 0.5, 1.5)))),
        points: Some(vec![pt(&[0.0], &[1.0])]),
        times: Some(vec![PI / 2.0, -PI / 2.0]),
        lambdas: Some(vec![4.0, 8.0, 16.0, 32.0, 64.0]),
        tolerances: vec![("slope_margin", 0.1)],
        ..Defaults::default()
    }
}

pub fn rate(r: &Resolved) -> Result<Outcome> {
    let mu = r.field().decay_mu();
    let bound = -(mu - 1.0) + r.tol("slope_margin");
    let mut o = Outcome::default();
    for (sigma, slope, _) in convergence(r, &mut o)? {
        o.check(Criterion::new(
            format!("{}_slope", sigma_label(sigma)),
            slope,
            Threshold::AtMost(bound),
        ));
    }
    o.record("rate_bound_exponent", -(mu - 1.0));
    Ok(o)
}

pub fn identities_defaults() -> Defaults {
    Defaults {
        field: Some(Some(spec(CoefficientField::rational_bump(1, 0.4, 2.0)))),
        points: Some(vec![
            pt(&[-1.0], &[0.8]),
            pt(&[0.0], &[1.0]),
            pt(&[0.5], &[1.2]),
            pt(&[1.0], &[-0.7]),
        ]),
        tolerances: vec![("flat", 1e-8), ("energy", 1e-8), ("round_trip", 1e-7)],
        ..Defaults::default()
    }
}

pub fn identities(r: &Resolved) -> Result<Outcome> {
    let field = r.field();
    let flat = CoefficientField::flat(field.dim());
    let n = field.dim();
    let mut header = point_header("", n);
    header.extend(
        ["direction", "flat_identity", "flat_recurrence", "energy", "round_trip"].map(String::from),
    );
    let mut table = Table::with_header("points", header);
    let (mut fi, mut fr, mut en, mut rt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for x in r.points() {
        let k = eval_symbols(field, &x.x, &x.xi)?.k.value;
        for dir in [Direction::Forward, Direction::Backward] {
            let a = scattering_map(&flat, x, dir)?.point().max_distance(x);
            let b = recurrence_map(&flat, x, dir)?.max_distance(&x.antipode());
            let s = scattering_map(field, x, dir)?;
            let e = (0.5 * s.xi_out.iter().map(|v| v * v).sum::<f64>() - k).abs();
            let pre = inverse_scattering_map(field, x, dir)?;
            let back = scattering_map(field, &pre, dir)?.point().max_distance(x);
            let mut row = point_cells(x);
            row.extend([format!("{dir:?}").to_lowercase(), num(a), num(b), num(e), num(back)]);
            table.push(row);
            fi.push(a);
            fr.push(b);
            en.push(e);
            rt.push(back);
        }
    }
    let mut o = Outcome::default();
    o.check(Criterion::new("flat_scattering_identity", max_of(fi), Threshold::AtMost(r.tol("flat"))));
    o.check(Criterion::new("flat_recurrence_antipode", max_of(fr), Threshold::AtMost(r.tol("flat"))));
    o.check(Criterion::new("kinetic_energy_identity", max_of(en), Threshold::AtMost(r.tol("energy"))));
    o.check(Criterion::new("inverse_round_trip", max_of(rt), Threshold::AtMost(r.tol("round_trip"))));
    o.tables.push(table);
    Ok(o)
}

const AUDIT_RADIUS: f64 = 40.0;
const AUDIT_ORDERS: usize = 3;

pub fn audit_defaults() -> Defaults {
    Defaults {
        field: Some(Some(spec(CoefficientField::rational_bump(2, 0.5, 2.0)))),
        ..Defaults::default()
    }
}

pub fn audit(r: &Resolved) -> Result<Outcome> {
    let field = r.field();
    let report = check_assumption_a(field, AUDIT_RADIUS, AUDIT_ORDERS)?;
    // control: the same profile decaying one order slower than declared
    let slow = CoefficientField::new(
        field.dim(),
        MetricFamily::Isotropic {
            profile: Profile::Rational {
                coupling: 0.5,
                exponent: field.decay_mu() - 1.0,
            },
        },
        PotentialFamily::None,
        field.decay_mu(),
        vec![1.0; field.dim()],
    )?;
    let control = check_assumption_a(&slow, AUDIT_RADIUS, AUDIT_ORDERS)?;
    let mut table = Table::new(
        "constants",
        &["field", "component", "multi_index", "constant", "weight", "tail_ratio", "violation"],
    );
    for (name, a) in [("configured", &report), ("slow_control", &control)] {
        for e in &a.entries {
            let idx: Vec<String> = e.multi_index.iter().map(|i| i.to_string()).collect();
            table.push(vec![
                name.into(),
                e.component.clone(),
                idx.join(" "),
                num(e.constant),
                num(e.weight),
                num(e.tail_ratio),
                e.violation.to_string(),
            ]);
        }
    }
    let mut o = Outcome::default();
    o.check(Criterion::new("violations", report.violations.len() as f64, Threshold::AtMost(0.0)));
    o.check(Criterion::new("positivity_margin", report.pd_margin, Threshold::Above(0.0)));
    o.check(Criterion::holds("slow_control_flagged", !control.passed()));
    o.record("violations", &report.violations);
    o.record("control_violations", control.violations.len());
    o.tables.push(table);
    Ok(o)
}
