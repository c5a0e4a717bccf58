//! Check outcomes and the versioned JSON summary.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Bump when the JSON layout changes shape.
pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of one named check: the inputs it actually ran with, every
/// measured quantity, the tolerances it was judged against, and one line
/// per violated clause. Maps are ordered so serialization is stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRecord {
    pub check: String,
    pub criterion: usize,
    pub inputs: BTreeMap<String, String>,
    pub measured: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub pass: bool,
    pub failures: Vec<String>,
    pub runtime_ms: u64,
}

impl ReportRecord {
    pub fn one_line(&self) -> String {
        let mut line = format!(
            "criterion {:2} {:<22} {}",
            self.criterion,
            self.check,
            if self.pass { "PASS" } else { "FAIL" }
        );
        if !self.pass {
            let _ = write!(line, "  [{}]", self.failures.join("; "));
        }
        line
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub records: Vec<ReportRecord>,
}

impl Summary {
    pub fn new(seed: u64, records: Vec<ReportRecord>) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let failed = records.len() - passed;
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            passed,
            failed,
            records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Collects measurements and clause verdicts for one check. Every recorded
/// bound also stores the measured value and the tolerance, so a failing
/// record carries the numbers needed to reproduce the judgment.
pub struct Judge {
    measured: BTreeMap<String, f64>,
    tolerances: BTreeMap<String, f64>,
    failures: Vec<String>,
}

impl Judge {
    pub fn new() -> Self {
        Self {
            measured: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    pub fn note(&mut self, name: &str, value: f64) {
        self.measured.insert(name.to_string(), value);
    }

    /// Clause `value <= tol`.
    pub fn le(&mut self, name: &str, value: f64, tol_name: &str, tol: f64) {
        self.measured.insert(name.to_string(), value);
        self.tolerances.insert(tol_name.to_string(), tol);
        if !(value <= tol) {
            self.failures
                .push(format!("{name} = {value:.6e} exceeds {tol_name} = {tol:.2e}"));
        }
    }

    /// Clause `value >= bound`, for shrink factors and the like.
    pub fn ge(&mut self, name: &str, value: f64, bound_name: &str, bound: f64) {
        self.measured.insert(name.to_string(), value);
        self.tolerances.insert(bound_name.to_string(), bound);
        if !(value >= bound) {
            self.failures
                .push(format!("{name} = {value:.6e} below {bound_name} = {bound:.2e}"));
        }
    }

    /// A structural clause with no single scalar, e.g. monotonicity.
    pub fn require(&mut self, ok: bool, what: &str) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    pub fn into_record(
        self,
        check: &str,
        criterion: usize,
        inputs: BTreeMap<String, String>,
        runtime_ms: u64,
    ) -> ReportRecord {
        ReportRecord {
            check: check.to_string(),
            criterion,
            inputs,
            measured: self.measured,
            tolerances: self.tolerances,
            pass: self.failures.is_empty(),
            failures: self.failures,
            runtime_ms,
        }
    }
}

impl Default for Judge {
    fn default() -> Self {
        Self::new()
    }
}
