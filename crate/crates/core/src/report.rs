//! Check results and machine-readable reports.
//!
//! A report is a deterministic list of named checks. The JSON rendering
//! excludes wall time so that identical inputs produce byte-identical
//! machine reports.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Fail => write!(f, "fail"),
            Status::Error => write!(f, "error"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl CheckResult {
    pub fn pass(check: impl Into<String>) -> Self {
        CheckResult { check: check.into(), status: Status::Pass, witness: None }
    }

    pub fn pass_with(check: impl Into<String>, witness: impl Into<String>) -> Self {
        CheckResult { check: check.into(), status: Status::Pass, witness: Some(witness.into()) }
    }

    pub fn fail(check: impl Into<String>, witness: impl Into<String>) -> Self {
        CheckResult { check: check.into(), status: Status::Fail, witness: Some(witness.into()) }
    }

    pub fn error(check: impl Into<String>, witness: impl Into<String>) -> Self {
        CheckResult { check: check.into(), status: Status::Error, witness: Some(witness.into()) }
    }

    pub fn from_outcome(check: impl Into<String>, outcome: Result<(), String>) -> Self {
        match outcome {
            Ok(()) => Self::pass(check),
            Err(w) => Self::fail(check, w),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub fixture: String,
    pub checks: Vec<CheckResult>,
    /// Milliseconds; excluded from the serialized machine report.
    #[serde(skip)]
    pub wall_ms: u128,
}

impl Report {
    pub fn new(command: impl Into<String>, fixture: impl Into<String>) -> Self {
        Report { command: command.into(), fixture: fixture.into(), checks: Vec::new(), wall_ms: 0 }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = CheckResult>) {
        self.checks.extend(checks);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.command, self.fixture));
        for c in &self.checks {
            let tag = match (c.status, color) {
                (Status::Pass, true) => "\x1b[32mPASS\x1b[0m".to_string(),
                (Status::Fail, true) => "\x1b[31mFAIL\x1b[0m".to_string(),
                (Status::Error, true) => "\x1b[33mERROR\x1b[0m".to_string(),
                (s, false) => s.to_string().to_uppercase(),
            };
            match &c.witness {
                Some(w) => out.push_str(&format!("  {tag}  {} — {w}\n", c.check)),
                None => out.push_str(&format!("  {tag}  {}\n", c.check)),
            }
        }
        let verdict = if self.all_passed() { "all checks passed" } else { "CHECKS FAILED" };
        out.push_str(&format!("{} ({} checks, {} ms)\n", verdict, self.checks.len(), self.wall_ms));
        out
    }
}
