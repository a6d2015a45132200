//! Acceptance checks, one per criterion, each reporting measured values.
//!
//! [`verify`] runs the selected criteria in order. Trial counts can be
//! scaled down for smoke runs; the full suite uses `scale = 1`.

mod audit;
mod criteria;

use std::fmt;
use std::time::Instant;

pub use audit::{audit_async_trace, audit_mapping, bfs_components, level_bound_violation};
pub use criteria::{LEVELS_MESSAGE_CONSTANT, LEVELS_TIME_CONSTANT};

use crate::error::ConfigError;

/// Criterion names, in execution order.
pub const CRITERIA: [&str; 9] = [
    "improved_ag",
    "small_id",
    "single_send",
    "las_vegas",
    "two_round",
    "async_tradeoff",
    "async_levels",
    "model",
    "capacity",
];

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Criteria to run; empty runs all of them.
    pub only: Vec<String>,
    /// Multiplies every trial count (at least one trial is always run).
    pub scale: f64,
    pub base_seed: u64,
    /// Swap in a referee rule that lets every compete win, to show the
    /// suite catches an unsafe protocol.
    pub sabotage: bool,
    /// Fail a criterion that exceeds its runtime budget.
    pub enforce_budgets: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { only: Vec::new(), scale: 1.0, base_seed: 0, sabotage: false, enforce_budgets: true }
    }
}

impl VerifyOptions {
    pub(crate) fn trials(&self, full: u64) -> u64 {
        ((full as f64 * self.scale).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub name: &'static str,
    pub passed: bool,
    /// Human-readable measurements.
    pub details: Vec<String>,
    pub seconds: f64,
    pub budget_seconds: Option<f64>,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({:.1}s", self.name, self.seconds)?;
        if let Some(b) = self.budget_seconds {
            write!(f, " of {b:.0}s")?;
        }
        write!(f, "): {}", self.details.join("; "))
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub criteria: Vec<CriterionReport>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.criteria.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Checks accumulated while running one criterion.
#[derive(Debug, Default)]
pub(crate) struct Findings {
    ok: bool,
    details: Vec<String>,
}

impl Findings {
    pub(crate) fn new() -> Self {
        Self { ok: true, details: Vec::new() }
    }

    /// Records a measurement and whether it met its bound.
    pub(crate) fn check(&mut self, ok: bool, detail: impl Into<String>) {
        let detail = detail.into();
        self.details.push(if ok { detail } else { format!("VIOLATED {detail}") });
        self.ok &= ok;
    }
}

/// Runs the selected criteria in order and prints nothing; callers render
/// the report. Unknown criterion names are a configuration error.
pub fn verify(opts: &VerifyOptions) -> Result<VerifyReport, ConfigError> {
    verify_with(opts, |_| {})
}

/// Like [`verify`], calling `progress` after each criterion.
pub fn verify_with(
    opts: &VerifyOptions,
    mut progress: impl FnMut(&CriterionReport),
) -> Result<VerifyReport, ConfigError> {
    if let Some(bad) = opts.only.iter().find(|n| !CRITERIA.contains(&n.as_str())) {
        return Err(ConfigError::Protocol(format!(
            "unknown criterion {bad:?}; expected one of {}",
            CRITERIA.join(", ")
        )));
    }
    let mut report = VerifyReport::default();
    for name in CRITERIA {
        if !opts.only.is_empty() && !opts.only.iter().any(|n| n == name) {
            continue;
        }
        let start = Instant::now();
        let (findings, budget) = criteria::run(name, opts);
        let seconds = start.elapsed().as_secs_f64();
        let mut passed = findings.ok;
        let mut details = findings.details;
        if let Some(b) = budget.filter(|_| opts.enforce_budgets) {
            if seconds > b {
                passed = false;
                details.push(format!("VIOLATED runtime {seconds:.1}s > {b:.0}s"));
            }
        }
        let c = CriterionReport { name, passed, details, seconds, budget_seconds: budget };
        progress(&c);
        report.criteria.push(c);
    }
    Ok(report)
}
