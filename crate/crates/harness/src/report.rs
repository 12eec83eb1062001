//! Pass/fail criteria, result tables and the run summary.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ScenarioConfig;

/// Non-finite floats are written as strings so that JSON keeps them.
mod float_or_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else {
            v.to_string().serialize(s)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Acceptance region for a measured value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    AtMost(f64),
    AtLeast(f64),
    /// Strictly greater than.
    Above(f64),
    Within(f64, f64),
}

impl Threshold {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Threshold::AtMost(t) => v <= t,
            Threshold::AtLeast(t) => v >= t,
            Threshold::Above(t) => v > t,
            Threshold::Within(lo, hi) => (lo..=hi).contains(&v),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Threshold::AtMost(t) => write!(f, "<= {t:e}"),
            Threshold::AtLeast(t) => write!(f, ">= {t:e}"),
            Threshold::Above(t) => write!(f, "> {t:e}"),
            Threshold::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    #[serde(with = "float_or_string")]
    pub measured: f64,
    pub threshold: Threshold,
    pub pass: bool,
}

impl Criterion {
    pub fn new(name: impl Into<String>, measured: f64, threshold: Threshold) -> Self {
        Self {
            name: name.into(),
            measured,
            pass: threshold.admits(measured),
            threshold,
        }
    }

    /// A yes/no check recorded as measured 1 (holds) or 0 against `>= 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Threshold::AtLeast(1.0))
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.4e} vs {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

/// How a table is drawn by the plot command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotHint {
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub plot: Option<PlotHint>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
        }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            header,
            rows: Vec::new(),
            plot: None,
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn plotted(mut self, x: &str, y: &[&str], log_x: bool, log_y: bool) -> Self {
        self.plot = Some(PlotHint {
            x: x.into(),
            y: y.iter().map(|s| s.to_string()).collect(),
            log_x,
            log_y,
        });
        self
    }
}

/// Shortest round-trip text of a float, used for every CSV number.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Everything a scenario produces before files are written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub criteria: Vec<Criterion>,
    pub numbers: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn check(&mut self, c: Criterion) {
        self.criteria.push(c);
    }

    pub fn record(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.numbers.insert(key.into(), v);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    /// The statement the scenario probes.
    pub claim: String,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
    pub numbers: BTreeMap<String, Value>,
    pub notes: Vec<String>,
    /// Set when the scenario stopped on an internal error.
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub artifacts: Vec<String>,
}

impl RunSummary {
    pub fn failures(&self) -> impl Iterator<Item = &Criterion> {
        self.criteria.iter().filter(|c| !c.pass)
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert!(Threshold::AtMost(1.0).admits(1.0));
        assert!(!Threshold::Above(0.0).admits(0.0));
        assert!(Threshold::Within(-1.3, -0.7).admits(-0.93));
        assert!(!Threshold::AtMost(1.0).admits(f64::NAN));
        assert!(!Criterion::holds("x", false).pass);
    }

    #[test]
    fn infinite_measurements_survive_json() {
        let c = Criterion::new("slope", f64::INFINITY, Threshold::AtLeast(3.0));
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"inf\""));
        let back: Criterion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
