//! What a command prints.

use serde::Serialize;
use timeblocks::Cost;

use crate::file::CostValue;

/// Tables longer than this are summarized unless `--full` is given.
pub const SUMMARY_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub digest: String,
    pub family: &'static str,
    pub horizon: usize,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<TableReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<PolicyReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub verification: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.status == "pass"
    }

    pub fn fail(&mut self) {
        self.status = "verification_failed";
    }

    pub fn check(&mut self, check: Check) {
        if !check.passed {
            self.fail();
        }
        self.verification.push(check);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub stage: usize,
    pub domain: &'static str,
    pub len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<CostValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub min: CostValue,
    pub max: CostValue,
    pub infinite: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyReport {
    pub stage: usize,
    /// Position of the control inside its step (`0` head, `2` tail in
    /// decision-hazard-decision layouts).
    pub depth: usize,
    pub len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<usize>>,
    /// `histogram[u]` = how many entries choose `u`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub max_delta: CostValue,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, cases: usize, max_delta: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            cases,
            max_delta: CostValue(max_delta),
            tolerance,
            passed: max_delta <= tolerance,
        }
    }
}

pub fn table(stage: usize, domain: &'static str, values: &[Cost], full: bool) -> TableReport {
    let as_values = || values.iter().map(|c| CostValue(c.get())).collect();
    if full || values.len() <= SUMMARY_THRESHOLD {
        return TableReport {
            stage,
            domain,
            len: values.len(),
            table: Some(as_values()),
            summary: None,
        };
    }
    let min = values.iter().copied().min().unwrap_or(Cost::INFINITY);
    let max = values.iter().copied().max().unwrap_or(Cost::ZERO);
    TableReport {
        stage,
        domain,
        len: values.len(),
        table: None,
        summary: Some(Summary {
            min: CostValue(min.get()),
            max: CostValue(max.get()),
            infinite: values.iter().filter(|c| c.is_infinite()).count(),
        }),
    }
}

pub fn policy(stage: usize, depth: usize, controls: &[usize], full: bool) -> PolicyReport {
    if full || controls.len() <= SUMMARY_THRESHOLD {
        return PolicyReport {
            stage,
            depth,
            len: controls.len(),
            controls: Some(controls.to_vec()),
            histogram: None,
        };
    }
    let mut histogram = vec![0; controls.iter().max().map_or(0, |m| m + 1)];
    for &u in controls {
        histogram[u] += 1;
    }
    PolicyReport {
        stage,
        depth,
        len: controls.len(),
        controls: None,
        histogram: Some(histogram),
    }
}

/// `|a - b|` with `∞ - ∞ = 0`.
pub fn delta(a: Cost, b: Cost) -> f64 {
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.0,
        (false, false) => (a.get() - b.get()).abs(),
        _ => f64::INFINITY,
    }
}
