//! Oracle-driven execution model and the per-chain checkers it is compared
//! against.

use ecm_core::checker::compose::signature_findings;
use ecm_core::{check_chain, CheckConfig, CompatReport, EcmContract, EmbodimentProfile, PolicyProfile};
use serde::Serialize;

use crate::fixtures::{Library, Oracle};
use crate::generate::ChainSpec;

pub const BUDGET_CODE: &str = "LATENCY_BUDGET";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "codes", rename_all = "snake_case")]
pub enum ExecOutcome {
    Success,
    RuntimeFailure(Vec<String>),
}

impl ExecOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ExecOutcome::Success)
    }
}

/// Fails iff an adjacent pair is in the oracle or the summed timeouts
/// exceed the budget. Every matched code is reported, in chain order.
pub fn simulate_execution(
    chain: &ChainSpec,
    oracle: &Oracle,
    library: &Library,
    budget_ms: Option<u64>,
) -> ExecOutcome {
    let keys = chain.keys();
    let mut codes = Vec::new();
    for w in keys.windows(2) {
        if let Some(e) = oracle.lookup(&w[0], &w[1]) {
            codes.extend(e.labels.iter().map(|l| l.code.clone()));
        }
    }
    if let Some(budget) = budget_ms {
        let total: u64 = keys.iter().filter_map(|k| library.by_key(k)).map(EcmContract::timeout_ms).sum();
        if total > budget {
            codes.push(BUDGET_CODE.to_string());
        }
    }
    if codes.is_empty() {
        ExecOutcome::Success
    } else {
        ExecOutcome::RuntimeFailure(codes)
    }
}

/// Name and type matching only, with promotion; units, frames and the other
/// five dimensions are invisible.
pub fn schema_only_check(chain: &[EcmContract]) -> bool {
    schema_issues(chain) == 0
}

pub fn schema_issues(chain: &[EcmContract]) -> usize {
    chain.windows(2).map(|w| signature_findings(&w[0], &w[1], None).len()).sum()
}

/// Full contract chain check. Chains of one module are checked as installs
/// would be: nothing to compose, so they pass.
pub fn contract_check(
    chain: &[EcmContract],
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> CompatReport {
    match check_chain(chain, emb, pol, cfg) {
        Ok(r) => r,
        Err(_) => CompatReport::build(Vec::new(), cfg.enabled_dimensions.clone(), Vec::new()),
    }
}
