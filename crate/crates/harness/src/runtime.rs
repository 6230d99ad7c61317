//! Live-state validation with an append-only audit trail.

use ecm_core::checker::{Dimension, Finding, Severity};
use ecm_core::profiles::{evaluate_predicate, Truth};
use ecm_core::{EcmContract, SemVer, WorldState};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    /// Position in the log; the log's only clock.
    pub seq: u64,
    pub module_id: String,
    pub version: SemVer,
    pub findings: Vec<Finding>,
}

impl AuditRecord {
    pub fn passed(&self) -> bool {
        !self.findings.iter().any(|f| f.severity == Severity::Blocking)
    }

    /// One line for a release record's evidence trail.
    pub fn trail_entry(&self) -> String {
        let verdict = if self.passed() { "ok".to_string() } else { self.codes().join(",") };
        format!("runtime #{} {}@{}: {verdict}", self.seq, self.module_id, self.version)
    }

    pub fn codes(&self) -> Vec<String> {
        self.findings.iter().map(|f| f.code.clone()).collect()
    }
}

/// Single writer; records are never modified once appended.
#[derive(Debug, Default, Clone)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn append(&mut self, module_id: String, version: SemVer, findings: Vec<Finding>) -> &AuditRecord {
        let seq = self.records.len() as u64;
        self.records.push(AuditRecord { seq, module_id, version, findings });
        self.records.last().expect("just pushed")
    }

    /// Evidence trail lines for one module, oldest first.
    pub fn evidence_for(&self, module_id: &str) -> Vec<String> {
        self.records.iter().filter(|r| r.module_id == module_id).map(AuditRecord::trail_entry).collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
    }
}

/// Checks preconditions, live sensors and free locks against `w` and logs
/// the result.
pub fn runtime_validate(c: &EcmContract, w: &WorldState, log: &mut AuditLog) -> (Vec<Finding>, AuditRecord) {
    let mut findings = Vec::new();
    for (i, pre) in c.beh.preconditions.iter().enumerate() {
        let at = format!("{}: behavior.preconditions[{i}]", c.module_id);
        match evaluate_predicate(pre, w) {
            Truth::Holds => {}
            Truth::Fails => findings.push(
                Finding::new(Dimension::Beh, Severity::Blocking, "PRECOND_UNMET", format!("`{pre}` does not hold"))
                    .at(at),
            ),
            Truth::Unknown => findings.push(
                Finding::new(
                    Dimension::Beh,
                    Severity::Warning,
                    "PRECOND_UNKNOWN",
                    format!("`{pre}` cannot be evaluated"),
                )
                .at(at),
            ),
        }
    }
    for s in c.res.sensors() {
        if !w.live_sensors.contains(&s.kind) {
            findings.push(
                Finding::new(
                    Dimension::Res,
                    Severity::Blocking,
                    "SENSOR_UNAVAILABLE",
                    format!("sensor `{}` is not live", s.kind),
                )
                .at(format!("{}: resources.required_sensors.{}", c.module_id, s.kind)),
            );
        }
    }
    for lock in &c.res.exclusive_locks {
        if !w.available_locks.contains(lock) {
            findings.push(
                Finding::new(Dimension::Res, Severity::Blocking, "LOCK_UNAVAILABLE", format!("lock `{lock}` is taken"))
                    .at(format!("{}: resources.exclusive_resource_lock.{lock}", c.module_id)),
            );
        }
    }
    let record = log.append(c.module_id.to_string(), c.version(), findings.clone()).clone();
    (findings, record)
}
