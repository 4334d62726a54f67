//! JSON run reports. The layout is described by `docs/report.schema.json`.

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::matrix::IndexSet;
use crate::near::NearCircuit;

pub const REPORT_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Find,
    Exclude,
    Near,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixInfo {
    pub rows: usize,
    pub cols: usize,
    pub source: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Found,
    /// Random search finished with the residual probability at or below the
    /// target.
    NotFound,
    /// Exhaustive search proved no circuit of the requested size exists.
    Absent,
    /// Stopped by the trial cap before reaching the target probability.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitEntry {
    /// One-based column indices, ascending.
    pub indices: Vec<usize>,
    /// Unit vector over all columns, zero off `indices`.
    pub witness: Vec<f64>,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
}

impl From<&Circuit> for CircuitEntry {
    fn from(c: &Circuit) -> Self {
        Self {
            indices: c.indices().to_one_based(),
            witness: c.witness().to_vec(),
            size: c.size(),
            epsilon: None,
            sigma_min: None,
        }
    }
}

impl From<&NearCircuit> for CircuitEntry {
    fn from(c: &NearCircuit) -> Self {
        Self {
            indices: c.indices.to_one_based(),
            witness: c.witness.clone(),
            size: c.size(),
            epsilon: Some(c.epsilon),
            sigma_min: Some(c.sigma),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub epsilon: f64,
    pub found: bool,
    pub no_split: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub circuits: Vec<CircuitEntry>,
    /// One-based columns removed before searching because they lie in no
    /// circuit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pruned: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bisection: Vec<BisectionStep>,
}

impl Outcome {
    pub fn new(status: Status) -> Self {
        Self {
            status,
            circuits: Vec::new(),
            pruned: Vec::new(),
            bisection: Vec::new(),
        }
    }

    pub fn with_pruned(mut self, pruned: &IndexSet) -> Self {
        self.pruned = pruned.to_one_based();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub trials: u64,
    pub nullspace_evals: u64,
    /// Upper bound on the chance a circuit of the requested size was missed;
    /// zero for exhaustive answers.
    pub residual_p: f64,
    pub seconds: f64,
    #[serde(default)]
    pub rejected: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub mode: Mode,
    pub matrix: MatrixInfo,
    pub config: serde_json::Value,
    pub outcome: Outcome,
    pub stats: Stats,
    pub seed: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only finite numbers")
    }

    /// Copy with wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.stats.seconds = 0.0;
        r
    }
}

/// Manifest written next to generated matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub sizes: Vec<usize>,
    /// One-based planted column sets.
    pub plants: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    pub matrix_path: String,
}
