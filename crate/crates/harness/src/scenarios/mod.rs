//! The scenario registry and the runner that turns a config into files and a summary.

mod classical;
mod common;
mod exact;
mod transport;

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Defaults, Resolved, ScenarioConfig};
use crate::error::HarnessError;
use crate::output::{write_summary, write_table};
use crate::plot::plot_csv;
use crate::report::{Outcome, RunSummary};

pub struct Scenario {
    pub name: &'static str,
    /// One line naming the statement the scenario probes.
    pub claim: &'static str,
    defaults: fn() -> Defaults,
    run: fn(&Resolved) -> wfprop::Result<Outcome>,
}

impl Scenario {
    pub fn defaults(&self) -> Defaults {
        (self.defaults)()
    }
}

static REGISTRY: &[Scenario] = &[
    Scenario {
        name: "flat_flow",
        claim: "the numerical oscillator flow reproduces the exact rotation while conserving energy and the symplectic form",
        defaults: classical::flat_flow_defaults,
        run: classical::flat_flow,
    },
    Scenario {
        name: "scaling_identities",
        claim: "momentum dilation intertwines the flows of p, p0 and the scattering evolution with their rescaled versions",
        defaults: classical::scaling_defaults,
        run: classical::scaling_identities,
    },
    Scenario {
        name: "lemma21_escape",
        claim: "rescaled orbits near a nontrapping point escape at a linear rate, and a trapped orbit breaks that bound",
        defaults: classical::escape_defaults,
        run: classical::escape,
    },
    Scenario {
        name: "lemma23_rate",
        claim: "the rescaled scattering evolution converges at least like lambda^-(mu - 1)",
        defaults: classical::rate_defaults,
        run: classical::rate,
    },
    Scenario {
        name: "thm24_high_energy",
        claim: "at high momentum the evolution over a time in (0, pi) tends to the outgoing scattering map and over (-pi, 0) to the incoming one",
        defaults: classical::high_energy_defaults,
        run: classical::high_energy,
    },
    Scenario {
        name: "scattering_identities",
        claim: "scattering maps are trivial without perturbation, conserve the kinetic energy and invert consistently",
        defaults: classical::identities_defaults,
        run: classical::identities,
    },
    Scenario {
        name: "assumption_audit",
        claim: "the coefficients obey the short-range symbol bounds with a positive definite metric",
        defaults: classical::audit_defaults,
        run: classical::audit,
    },
    Scenario {
        name: "h0_identities",
        claim: "up to constant phases the free oscillator is periodic, reflects at half period and Fourier transforms at quarter period",
        defaults: exact::h0_defaults,
        run: exact::h0_identities,
    },
    Scenario {
        name: "egorov_flat_exact",
        claim: "conjugating a Weyl operator by the free oscillator quantizes the rotated symbol with no remainder",
        defaults: exact::egorov_defaults,
        run: exact::egorov,
    },
    Scenario {
        name: "wf_calibration",
        claim: "the decay-exponent detector finds a step's jump and passes over smooth functions",
        defaults: exact::calibration_defaults,
        run: exact::calibration,
    },
    Scenario {
        name: "thm11_backward",
        claim: "for 0 < t0 < pi the singularities at t0 are those of the free evolution pulled back through the incoming scattering map",
        defaults: transport::thm11_backward_defaults,
        run: transport::thm11,
    },
    Scenario {
        name: "thm11_forward",
        claim: "for -pi < t0 < 0 the singularities at t0 are those of the free evolution pulled back through the outgoing scattering map",
        defaults: transport::thm11_forward_defaults,
        run: transport::thm11,
    },
    Scenario {
        name: "thm13_recurrence",
        claim: "at t = pi singularities recur at the image of the initial ones under the scattering-conjugated antipodal map",
        defaults: transport::thm13_defaults,
        run: transport::thm13,
    },
    Scenario {
        name: "thm13_recurrence_flat",
        claim: "without perturbation the state at t = pi is the reflected initial state, so singularities jump to the antipode",
        defaults: transport::thm13_flat_defaults,
        run: transport::thm13_flat,
    },
    Scenario {
        name: "thm41_nonresonant",
        claim: "with nonresonant frequencies the scattering correspondence of singularities persists beyond t = pi",
        defaults: transport::thm41_defaults,
        run: transport::thm41,
    },
    Scenario {
        name: "thm42_resonant",
        claim: "with resonant frequencies singularities recur at the common period through a reflection of the odd axes",
        defaults: transport::thm42_defaults,
        run: transport::thm42,
    },
];

pub fn registry() -> &'static [Scenario] {
    REGISTRY
}

pub fn find(name: &str) -> Option<&'static Scenario> {
    REGISTRY.iter().find(|s| s.name == name)
}

/// `(name, claim)` for every scenario, in registry order.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    REGISTRY.iter().map(|s| (s.name, s.claim)).collect()
}

/// Validates `config` against its scenario and fills in defaults.
pub fn resolve(config: &ScenarioConfig) -> Result<(&'static Scenario, Resolved), HarnessError> {
    let scenario = find(&config.scenario)
        .ok_or_else(|| HarnessError::Config(format!("unknown scenario \"{}\"", config.scenario)))?;
    let resolved = Resolved::new(config, &scenario.defaults())?;
    Ok((scenario, resolved))
}

/// Runs a scenario and writes its CSV tables, optional plots and JSON summary.
///
/// Output goes to `out`, else to the config's `output_dir`, else to
/// `wfprop_out`. Configuration problems are returned as errors before any
/// computation; failures inside the scenario are recorded in the summary.
pub fn run_scenario(config: &ScenarioConfig, out: Option<&Path>) -> Result<RunSummary, HarnessError> {
    let (scenario, resolved) = resolve(config)?;
    let dir: PathBuf = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("wfprop_out"));
    std::fs::create_dir_all(&dir)?;
    let hash = resolved.config.hash();

    let start = Instant::now();
    let (outcome, error) = match (scenario.run)(&resolved) {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(e.to_string())),
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut artifacts = Vec::new();
    for table in &outcome.tables {
        let path = write_table(&dir, scenario.name, &hash, table)?;
        if resolved.config.plots == Some(true) && table.plot.is_some() {
            artifacts.push(plot_csv(&path, table.plot.as_ref())?.display().to_string());
        }
        artifacts.push(path.display().to_string());
    }
    let summary_path = dir.join(format!("{}_summary.json", scenario.name));
    artifacts.push(summary_path.display().to_string());
    artifacts.sort();

    let passed = error.is_none() && !outcome.criteria.is_empty() && outcome.criteria.iter().all(|c| c.pass);
    let summary = RunSummary {
        scenario: scenario.name.into(),
        claim: scenario.claim.into(),
        passed,
        criteria: outcome.criteria,
        numbers: outcome.numbers,
        notes: outcome.notes,
        error,
        wall_time_s,
        config_hash: hash,
        config: resolved.config,
        artifacts,
    };
    write_summary(&dir, &summary)?;
    Ok(summary)
}
