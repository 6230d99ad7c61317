//! Lifecycle compatibility checks: installation, invocation, composition
//! (pairwise and chain) and upgrade.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod compose;
pub mod delta;
pub mod install;
pub mod invoke;
pub mod upgrade;

pub use compose::{check_chain, check_pair, ChainError};
pub use delta::{contract_delta, DeltaSet, ModuleMismatch};
pub use install::{check_install, dependencies_satisfied};
pub use invoke::check_invocation;
pub use upgrade::{check_upgrade, UpgradeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Sig,
    Beh,
    Res,
    Perm,
    Rec,
    Ver,
    Global,
}

impl Dimension {
    /// The six contract dimensions, in report order.
    pub const CONTRACT: [Dimension; 6] =
        [Dimension::Sig, Dimension::Beh, Dimension::Res, Dimension::Perm, Dimension::Rec, Dimension::Ver];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Sig => "Sig",
            Dimension::Beh => "Beh",
            Dimension::Res => "Res",
            Dimension::Perm => "Perm",
            Dimension::Rec => "Rec",
            Dimension::Ver => "Ver",
            Dimension::Global => "Global",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Dimension::Sig => "Signature",
            Dimension::Beh => "Behavioral",
            Dimension::Res => "Resource",
            Dimension::Perm => "Permission",
            Dimension::Rec => "Recovery",
            Dimension::Ver => "Version",
            Dimension::Global => "Global",
        }
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let dim = match lower.as_str() {
            "sig" | "signature" => Dimension::Sig,
            "beh" | "behavior" | "behaviour" | "behavioral" | "behavioural" => Dimension::Beh,
            "res" | "resource" | "resources" => Dimension::Res,
            "perm" | "permission" | "permissions" => Dimension::Perm,
            "rec" | "recovery" => Dimension::Rec,
            "ver" | "version" | "versioning" => Dimension::Ver,
            "global" => Dimension::Global,
            _ => return Err(format!("unknown dimension `{s}`")),
        };
        Ok(dim)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Blocking,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Blocking => "blocking",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub dimension: Dimension,
    pub severity: Severity,
    pub code: String,
    /// Index of the adjacent pair within a chain, when the finding came from
    /// one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<usize>,
    pub at: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl Finding {
    pub fn new(dimension: Dimension, severity: Severity, code: &str, message: impl Into<String>) -> Self {
        Self {
            dimension,
            severity,
            code: code.to_string(),
            pair: None,
            at: String::new(),
            message: message.into(),
            suggestion: None,
        }
    }

    pub fn at(mut self, at: impl Into<String>) -> Self {
        self.at = at.into();
        self
    }

    pub fn suggest(mut self, hint: impl Into<String>) -> Self {
        self.suggestion = Some(hint.into());
        self
    }

    pub fn in_pair(mut self, index: usize) -> Self {
        self.pair = Some(index);
        self
    }

    pub fn is_issue(&self) -> bool {
        self.severity >= Severity::Warning
    }

    /// Identity used when merging findings from overlapping checks; the pair
    /// index is deliberately not part of it.
    fn identity(&self) -> (Dimension, Severity, &str, &str, &str) {
        (self.dimension, self.severity, &self.code, &self.at, &self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Accept,
    AcceptWithConditions,
    Reject,
    RequireMigrationOrReview,
}

impl Outcome {
    pub fn is_accepted(self) -> bool {
        matches!(self, Outcome::Accept | Outcome::AcceptWithConditions)
    }

    /// Process exit status used by the command-line frontend.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Accept => 0,
            Outcome::AcceptWithConditions => 10,
            Outcome::RequireMigrationOrReview => 20,
            Outcome::Reject => 30,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatReport {
    pub outcome: Outcome,
    pub checked_dimensions: BTreeSet<Dimension>,
    pub findings: Vec<Finding>,
    pub conditions: Vec<String>,
}

impl CompatReport {
    /// Derives the outcome from findings. `review` lists reasons that route an
    /// otherwise admissible result to migration or review.
    pub fn build(mut findings: Vec<Finding>, checked_dimensions: BTreeSet<Dimension>, review: Vec<String>) -> Self {
        normalize(&mut findings);
        let blocking = findings.iter().any(|f| f.severity == Severity::Blocking);
        let mut conditions: Vec<String> = Vec::new();
        let mut push = |c: String| {
            if !conditions.contains(&c) {
                conditions.push(c);
            }
        };
        let outcome = if blocking {
            Outcome::Reject
        } else {
            for f in findings.iter().filter(|f| f.severity == Severity::Warning) {
                push(f.suggestion.clone().unwrap_or_else(|| f.message.clone()));
            }
            if review.is_empty() {
                if conditions.is_empty() {
                    Outcome::Accept
                } else {
                    Outcome::AcceptWithConditions
                }
            } else {
                for r in review {
                    push(r);
                }
                Outcome::RequireMigrationOrReview
            }
        };
        CompatReport { outcome, checked_dimensions, findings, conditions }
    }

    pub fn codes(&self) -> Vec<&str> {
        self.findings.iter().map(|f| f.code.as_str()).collect()
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    /// Warnings and blocking findings; info entries are not issues.
    pub fn issues(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.is_issue())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Drops repeated findings and orders them by pair index, then dimension.
fn normalize(findings: &mut Vec<Finding>) {
    let mut seen = BTreeSet::new();
    let mut kept = Vec::with_capacity(findings.len());
    for f in findings.drain(..) {
        let key = {
            let (d, s, c, a, m) = f.identity();
            (d, s, c.to_string(), a.to_string(), m.to_string())
        };
        if seen.insert(key) {
            kept.push(f);
        }
    }
    kept.sort_by_key(|f| (f.pair.unwrap_or(usize::MAX), f.dimension));
    *findings = kept;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub enabled_dimensions: BTreeSet<Dimension>,
    pub chain_latency_budget_ms: Option<u64>,
    pub lock_churn_threshold: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            enabled_dimensions: Dimension::CONTRACT.into_iter().collect(),
            chain_latency_budget_ms: None,
            lock_churn_threshold: 3,
        }
    }
}

impl CheckConfig {
    pub fn only(dims: &[Dimension]) -> Self {
        Self { enabled_dimensions: dims.iter().copied().collect(), ..Self::default() }
    }

    /// Full configuration minus one dimension (used by the ablation).
    pub fn without(dim: Dimension) -> Self {
        let mut cfg = Self::default();
        cfg.enabled_dimensions.remove(&dim);
        cfg
    }

    pub fn with_budget(mut self, budget_ms: u64) -> Self {
        self.chain_latency_budget_ms = Some(budget_ms);
        self
    }

    /// Global chain constraints are always on.
    pub fn enabled(&self, dim: Dimension) -> bool {
        dim == Dimension::Global || self.enabled_dimensions.contains(&dim)
    }

    /// Dimensions of `relevant` that this configuration evaluates.
    pub(crate) fn checked(&self, relevant: &[Dimension]) -> BTreeSet<Dimension> {
        relevant.iter().copied().filter(|d| self.enabled(*d)).collect()
    }
}

/// Prefixes each finding's location with a module id.
pub(crate) fn located(module: &str, findings: Vec<Finding>) -> Vec<Finding> {
    findings
        .into_iter()
        .map(|mut f| {
            f.at = if f.at.is_empty() { module.to_string() } else { format!("{module}: {}", f.at) };
            f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warn(code: &str) -> Finding {
        Finding::new(Dimension::Sig, Severity::Warning, code, "w").suggest("do x")
    }

    #[test]
    fn outcome_rules() {
        let none = BTreeSet::new();
        assert_eq!(CompatReport::build(vec![], none.clone(), vec![]).outcome, Outcome::Accept);
        let info = Finding::new(Dimension::Rec, Severity::Info, "NOTE", "n");
        let r = CompatReport::build(vec![info.clone()], none.clone(), vec![]);
        assert_eq!(r.outcome, Outcome::Accept);
        assert!(r.conditions.is_empty());
        let r = CompatReport::build(vec![warn("A")], none.clone(), vec![]);
        assert_eq!(r.outcome, Outcome::AcceptWithConditions);
        assert_eq!(r.conditions, vec!["do x".to_string()]);
        let block = Finding::new(Dimension::Res, Severity::Blocking, "B", "b");
        let r = CompatReport::build(vec![warn("A"), block], none.clone(), vec!["review".into()]);
        assert_eq!(r.outcome, Outcome::Reject);
        assert!(r.conditions.is_empty());
        let r = CompatReport::build(vec![], none, vec!["governance re-approval".into()]);
        assert_eq!(r.outcome, Outcome::RequireMigrationOrReview);
    }

    #[test]
    fn dedupe_and_order() {
        let a = Finding::new(Dimension::Rec, Severity::Blocking, "R", "r").in_pair(0);
        let b = Finding::new(Dimension::Sig, Severity::Blocking, "S", "s").in_pair(1);
        let c = Finding::new(Dimension::Sig, Severity::Blocking, "S0", "s").in_pair(0);
        let g = Finding::new(Dimension::Global, Severity::Blocking, "G", "g");
        let r = CompatReport::build(vec![g, b.clone(), a.clone(), c, b.clone().in_pair(2)], BTreeSet::new(), vec![]);
        assert_eq!(r.codes(), vec!["S0", "R", "S", "G"]);
    }

    #[test]
    fn dimension_names() {
        for d in Dimension::CONTRACT {
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), d);
            assert_eq!(d.long_name().parse::<Dimension>().unwrap(), d);
        }
        assert!("Vibes".parse::<Dimension>().is_err());
    }
}
