//! Run reports: per-client outcomes plus any requested consistency
//! checks, renderable as human-readable text and as JSON.

use serde::{Deserialize, Serialize};

use crate::checker::{
    build_views_whitebox, check_confirm_realtime, check_fork_linearizable, check_linearizable,
    check_promised_prefixes, verify_view_conditions,
};
use crate::simnet::{ClientSummary, Trace};

/// Which consistency checks to run over a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Exhaustive linearizability of the observed history.
    Lin,
    /// Exhaustive fork-linearizability of the observed history.
    ForkLin,
    /// Protocol-internal checks: derived views against the
    /// fork-linearizability conditions, promised-prefix equality, and
    /// confirmation real-time order.
    Whitebox,
}

impl std::str::FromStr for CheckMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lin" => Ok(CheckMode::Lin),
            "forklin" => Ok(CheckMode::ForkLin),
            "whitebox" => Ok(CheckMode::Whitebox),
            other => Err(format!("unknown check mode {other:?} (lin, forklin, whitebox)")),
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckRow {
    fn from_verdict(name: &str, verdict: crate::checker::Verdict) -> Self {
        CheckRow {
            name: name.to_string(),
            passed: verdict.ok,
            detail: verdict.to_string(),
        }
    }

    fn error(name: &str, err: impl std::fmt::Display) -> Self {
        CheckRow {
            name: name.to_string(),
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

/// Runs the requested checks against a trace. A checker refusing the
/// input (for example a history beyond the exhaustive-search bound)
/// reports as a failed row rather than a crash.
pub fn run_checks(trace: &Trace, modes: &[CheckMode]) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let workload = trace.scenario.workload;
    for mode in modes {
        match mode {
            CheckMode::Lin => {
                rows.push(
                    match check_linearizable(&trace.history(), workload, true) {
                        Ok(v) => CheckRow::from_verdict("linearizable", v),
                        Err(e) => CheckRow::error("linearizable", e),
                    },
                );
            }
            CheckMode::ForkLin => {
                rows.push(
                    match check_fork_linearizable(&trace.history(), workload) {
                        Ok(v) => CheckRow::from_verdict("fork_linearizable", v),
                        Err(e) => CheckRow::error("fork_linearizable", e),
                    },
                );
            }
            CheckMode::Whitebox => {
                match build_views_whitebox(trace) {
                    Ok(views) => rows.push(CheckRow::from_verdict(
                        "whitebox_views",
                        verify_view_conditions(&views, trace),
                    )),
                    Err(e) => rows.push(CheckRow::error("whitebox_views", e)),
                }
                rows.push(CheckRow::from_verdict(
                    "promised_prefixes",
                    check_promised_prefixes(trace),
                ));
                rows.push(CheckRow::from_verdict(
                    "confirm_realtime",
                    check_confirm_realtime(trace),
                ));
            }
        }
    }
    rows
}

/// Summary of one run: the per-client outcome rows, trace size, and any
/// check results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub clients: Vec<ClientSummary>,
    pub events: u64,
    pub halted: u64,
    pub checks: Vec<CheckRow>,
}

impl RunReport {
    pub fn new(trace: &Trace, checks: Vec<CheckRow>) -> Self {
        RunReport {
            clients: trace.summaries.clone(),
            events: trace.events.len() as u64,
            halted: trace.halted().count() as u64,
            checks,
        }
    }

    /// True when no client halted and every requested check passed: the
    /// condition behind a zero exit code.
    pub fn clean(&self) -> bool {
        self.halted == 0 && self.checks.iter().all(|c| c.passed)
    }

    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "events: {}", self.events);
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>10} {:>8} {:>10}  {:<14} halt",
            "client", "invoked", "completed", "aborted", "confirmed", "chain"
        );
        for c in &self.clients {
            let halt = match c.halt {
                Some(reason) => reason.to_string(),
                None if c.stalled => "(stalled)".to_string(),
                None => "-".to_string(),
            };
            let chain = &c.chain_digest.to_hex()[..12.min(c.chain_digest.to_hex().len())];
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>10} {:>8} {:>10}  {:<14} {}",
                c.client.to_string(),
                c.invoked,
                c.completed,
                c.aborted,
                c.confirmed,
                chain,
                halt
            );
        }
        for check in &self.checks {
            let _ = writeln!(
                out,
                "check {}: {} ({})",
                check.name,
                if check.passed { "pass" } else { "FAIL" },
                check.detail
            );
        }
        let _ = writeln!(out, "result: {}", if self.clean() { "clean" } else { "dirty" });
        out
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
