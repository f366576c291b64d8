//! Run directory, CSV tables, state audits and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::QuantumState;
use crate::linalg;

/// Worst-case validity figures over every state seen at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub states: usize,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Largest top-two Fock population over all modes (cutoff adequacy).
    pub max_top_population: f64,
}

impl Default for Audit {
    fn default() -> Self {
        Audit {
            states: 0,
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_top_population: 0.0,
        }
    }
}

pub const AUDIT_TRACE_TOL: f64 = 1e-6;
pub const AUDIT_HERMITIAN_TOL: f64 = 1e-8;
pub const AUDIT_EIGEN_TOL: f64 = -1e-6;
pub const CUTOFF_POPULATION_TOL: f64 = 1e-4;

impl Audit {
    pub fn of(state: &QuantumState) -> Result<Self> {
        let mut a = Audit::default();
        a.record(state)?;
        Ok(a)
    }

    pub fn record(&mut self, state: &QuantumState) -> Result<()> {
        self.states += 1;
        self.max_trace_error = self
            .max_trace_error
            .max((state.trace() - linalg::ONE).norm());
        self.max_hermiticity_error = self.max_hermiticity_error.max(state.hermiticity_error());
        self.min_eigenvalue = self.min_eigenvalue.min(state.min_eigenvalue()?);
        for slot in state.layout.mode_slots() {
            self.max_top_population = self.max_top_population.max(state.top_population(slot)?);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Audit) {
        self.states += other.states;
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_error = self.max_hermiticity_error.max(other.max_hermiticity_error);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.max_top_population = self.max_top_population.max(other.max_top_population);
    }

    pub fn checks(&self) -> Vec<Check> {
        if self.states == 0 {
            return Vec::new();
        }
        vec![
            Check::new(
                "trace",
                self.max_trace_error <= AUDIT_TRACE_TOL,
                format!("max |Tr rho - 1| = {:.3e}", self.max_trace_error),
            ),
            Check::new(
                "hermiticity",
                self.max_hermiticity_error <= AUDIT_HERMITIAN_TOL,
                format!("max |rho - rho^dag| = {:.3e}", self.max_hermiticity_error),
            ),
            Check::new(
                "positivity",
                self.min_eigenvalue >= AUDIT_EIGEN_TOL,
                format!("min eigenvalue = {:.3e}", self.min_eigenvalue),
            ),
            Check::new(
                "cutoff",
                self.max_top_population < CUTOFF_POPULATION_TOL,
                format!(
                    "max top-two Fock population = {:.3e}",
                    self.max_top_population
                ),
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_s: f64,
}

impl Manifest {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// The single writer of a run directory.
pub struct RunWriter {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        let digest = Sha256::digest(contents.as_bytes());
        self.outputs.push(OutputFile {
            name: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    pub fn finish(self, manifest: &mut Manifest) -> Result<()> {
        manifest.outputs = self.outputs;
        let text =
            serde_json::to_string_pretty(manifest).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// CSV with `#` comment lines first, then a header row and the data rows.
/// Cells may hold several comma-separated fields.
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(comments: &[String], header: &[&str]) -> Self {
        let mut text = String::new();
        for c in comments {
            let _ = writeln!(text, "# {c}");
        }
        let header = header.join(",");
        let _ = writeln!(text, "{header}");
        Table {
            text,
            columns: header.split(',').count(),
        }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let line = cells.into_iter().collect::<Vec<_>>().join(",");
        debug_assert_eq!(line.split(',').count(), self.columns);
        let _ = writeln!(self.text, "{line}");
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{canonical_state, StateKind};

    #[test]
    fn audit_of_valid_state_passes() {
        let s = canonical_state(StateKind::Fock(2), 10).unwrap();
        let a = Audit::of(&s).unwrap();
        assert!(a.checks().iter().all(|c| c.pass));
        let mut b = Audit::default();
        b.merge(&a);
        b.merge(&a);
        assert_eq!(b.states, 2);
    }

    #[test]
    fn audit_flags_high_cutoff_population() {
        let s = canonical_state(StateKind::Fock(9), 10).unwrap();
        let a = Audit::of(&s).unwrap();
        assert!(!a.checks().iter().find(|c| c.name == "cutoff").unwrap().pass);
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["x: 0..1 unit=s".into()], &["x", "y"]);
        t.row([num(0.5), num(1.0)]);
        assert_eq!(t.finish(), "# x: 0..1 unit=s\nx,y\n0.5,1\n");
    }
}
