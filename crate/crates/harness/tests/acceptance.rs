//! Exit gate: each test runs the scenarios behind one acceptance criterion at
//! its stated tolerance and prints a single PASS/FAIL line for it.

use std::collections::BTreeMap;
use std::sync::Mutex;

use wfprop_harness::{run_scenario, RunSummary, ScenarioConfig};

struct Gate {
    number: u32,
    title: &'static str,
    /// Scenario and the tolerance overrides that pin the criterion's thresholds.
    runs: Vec<(&'static str, Vec<(&'static str, f64)>)>,
    /// Wall-clock budget in seconds for all runs together.
    budget_s: Option<f64>,
}

/// Gates run one at a time so that wall-clock budgets are not shared.
static SERIAL: Mutex<()> = Mutex::new(());

fn describe(s: &RunSummary) -> String {
    let mut parts: Vec<String> = s.criteria.iter().map(|c| c.to_string()).collect();
    if let Some(e) = &s.error {
        parts.push(format!("error {e}"));
    }
    format!("{} [{}]", s.scenario, parts.join("; "))
}

fn check(gate: Gate) {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let mut passed = true;
    let mut lines = Vec::new();
    let mut elapsed = 0.0;
    for (name, tolerances) in &gate.runs {
        let mut config = ScenarioConfig::named(name);
        config.tolerances = tolerances.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
        let summary = run_scenario(&config, Some(dir.path())).expect("acceptance configs are valid");
        passed &= summary.passed;
        elapsed += summary.wall_time_s;
        lines.push(describe(&summary));
    }
    if let Some(budget) = gate.budget_s {
        let ok = elapsed <= budget;
        passed &= ok;
        lines.push(format!("wall time {elapsed:.1} s vs budget {budget} s"));
    }
    println!(
        "criterion {} ({}): {} {}",
        gate.number,
        gate.title,
        if passed { "PASS" } else { "FAIL" },
        lines.join(" | ")
    );
    assert!(passed, "criterion {} failed", gate.number);
}

#[test]
fn criterion_01_flow_correctness() {
    check(Gate {
        number: 1,
        title: "flat-field flow, energy and symplectic form",
        runs: vec![(
            "flat_flow",
            vec![("position", 1e-8), ("energy_drift", 1e-9), ("symplectic", 1e-6)],
        )],
        budget_s: Some(30.0),
    });
}

#[test]
fn criterion_02_scaling_identities() {
    check(Gate {
        number: 2,
        title: "momentum dilation identities",
        runs: vec![("scaling_identities", vec![("residual", 1e-7)])],
        budget_s: Some(120.0),
    });
}

#[test]
fn criterion_03_escape_envelope() {
    check(Gate {
        number: 3,
        title: "linear escape near a nontrapping point, violation on a trapped orbit",
        runs: vec![("lemma21_escape", vec![])],
        budget_s: Some(120.0),
    });
}

#[test]
fn criterion_04_high_energy_rate() {
    check(Gate {
        number: 4,
        title: "high-energy convergence slope in [-1.3, -0.7] both ways",
        runs: vec![("thm24_high_energy", vec![("slope_min", -1.3), ("slope_max", -0.7)])],
        budget_s: Some(180.0),
    });
}

#[test]
fn criterion_05_scattering_identities() {
    check(Gate {
        number: 5,
        title: "trivial flat maps, energy identity, inverse round trip",
        runs: vec![(
            "scattering_identities",
            vec![("flat", 1e-8), ("energy", 1e-8), ("round_trip", 1e-7)],
        )],
        budget_s: None,
    });
}

#[test]
fn criterion_06_free_oscillator_identities() {
    check(Gate {
        number: 6,
        title: "period, parity, Fourier and resonant partial parity",
        runs: vec![("h0_identities", vec![("identity", 1e-8)])],
        budget_s: Some(60.0),
    });
}

#[test]
fn criterion_07_exact_conjugation() {
    check(Gate {
        number: 7,
        title: "flat conjugation of a Gaussian symbol at t = pi/3, h = 1/32",
        runs: vec![("egorov_flat_exact", vec![("residual", 1e-6)])],
        budget_s: None,
    });
}

#[test]
fn criterion_08_transport_proxy() {
    let stable = vec![("c_max", 1.0), ("c_growth", 2.0)];
    check(Gate {
        number: 8,
        title: "coherent peaks track the scattering prediction at t0 = -pi/2 and pi/2",
        runs: vec![("thm11_forward", stable.clone()), ("thm11_backward", stable)],
        budget_s: Some(300.0),
    });
}

#[test]
fn criterion_09_recurrence_proxy() {
    check(Gate {
        number: 9,
        title: "peaks at t = pi sit at the antipode (flat) and the recurrence image (bump)",
        runs: vec![
            ("thm13_recurrence_flat", vec![("grid_spacings", 1.0)]),
            ("thm13_recurrence", vec![("c_max", 1.0), ("c_growth", 2.0)]),
        ],
        budget_s: Some(300.0),
    });
}

#[test]
fn criterion_10_wavefront_calibration() {
    check(Gate {
        number: 10,
        title: "step in WF with slope 0.5 +- 0.15, smooth points and Gaussians smooth",
        runs: vec![(
            "wf_calibration",
            vec![("step_slope_min", 0.35), ("step_slope_max", 0.65), ("smooth_slope", 3.0)],
        )],
        budget_s: None,
    });
}
