use std::collections::BTreeMap;

use thiserror::Error;

use crate::checker::{located, CheckConfig, CompatReport, Dimension, Finding, Severity};
use crate::contract::{AuditLevel, EcmContract, HandoffSemantics};
use crate::predicate::predicate_entails;
use crate::profiles::{
    frame_path_exists, permission_grantable, resource_satisfiable, EmbodimentProfile, FrameTransformRegistry,
    PolicyProfile,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("a chain needs at least two modules, got {0}")]
    ChainTooShort(usize),
}

/// Signature findings for `ei` feeding `ej`. Inputs of `ej` are matched by
/// name against the outputs of `ei`; inputs without a same-named output are
/// supplied by the task, not by the predecessor.
///
/// With `frames` set to `None` only names and types are compared, which is
/// what a plain schema checker sees.
pub fn signature_findings(ei: &EcmContract, ej: &EcmContract, frames: Option<&FrameTransformRegistry>) -> Vec<Finding> {
    let mut out = Vec::new();
    for input in ej.sig.inputs() {
        let Some(output) = ei.sig.outputs().iter().find(|o| o.name == input.name) else {
            continue;
        };
        let at = format!("{} -> {}: {}", ei.module_id, ej.module_id, input.name);
        if !output.dtype.assignable_to(input.dtype) {
            out.push(
                Finding::new(
                    Dimension::Sig,
                    Severity::Blocking,
                    "TYPE_MISMATCH",
                    format!("`{}` is produced as {} but consumed as {}", input.name, output.dtype, input.dtype),
                )
                .at(at),
            );
            continue;
        }
        let Some(frames) = frames else { continue };
        if output.unit != input.unit {
            let show = |u: Option<crate::units::Unit>| u.map_or("no unit".to_string(), |u| u.symbol().to_string());
            out.push(
                Finding::new(
                    Dimension::Sig,
                    Severity::Blocking,
                    "UNIT_MISMATCH",
                    format!(
                        "`{}` is produced in {} but consumed in {}",
                        input.name,
                        show(output.unit),
                        show(input.unit)
                    ),
                )
                .at(at.clone()),
            );
        }
        if let (Some(from), Some(to)) = (&output.frame, &input.frame) {
            if from != to {
                let f = if frame_path_exists(from, to, frames) {
                    Finding::new(
                        Dimension::Sig,
                        Severity::Warning,
                        "FRAME_MISMATCH",
                        format!("`{}` crosses frames {from} -> {to} through a registered transform", input.name),
                    )
                    .suggest(format!("apply transform {from}->{to}"))
                } else {
                    Finding::new(
                        Dimension::Sig,
                        Severity::Blocking,
                        "FRAME_MISMATCH",
                        format!("`{}` is in frame {from} but consumed in {to}, no transform registered", input.name),
                    )
                    .suggest(format!("register a transform {from}->{to}"))
                };
                out.push(f.at(at));
            }
        }
    }
    out
}

fn behavior_findings(ei: &EcmContract, ej: &EcmContract) -> Vec<Finding> {
    let mut out = Vec::new();
    let link = format!("{} -> {}", ei.module_id, ej.module_id);
    for pre in &ej.beh.preconditions {
        if ei.beh.postconditions.iter().any(|post| predicate_entails(post, pre)) {
            continue;
        }
        if pre.is_environment_scoped() {
            out.push(
                Finding::new(
                    Dimension::Beh,
                    Severity::Warning,
                    "ENV_PRECONDITION",
                    format!("`{pre}` depends on the environment"),
                )
                .at(format!("{}: behavior.preconditions", ej.module_id))
                .suggest(format!("check `{pre}` at invocation time")),
            );
        } else {
            out.push(
                Finding::new(
                    Dimension::Beh,
                    Severity::Blocking,
                    "PRECOND_UNMET",
                    format!("precondition `{pre}` of {} is not established by {}", ej.module_id, ei.module_id),
                )
                .at(link.clone()),
            );
        }
    }
    if let Some(required) = ej.beh.required_handoff {
        let given = ei.beh.handoff.unwrap_or(HandoffSemantics::NominalSuccess);
        if !given.satisfies(required) {
            out.push(
                Finding::new(
                    Dimension::Beh,
                    Severity::Blocking,
                    "HANDOFF_CONFLICT",
                    format!("{} completes as {given} but {} needs {required}", ei.module_id, ej.module_id),
                )
                .at(link),
            );
        }
    }
    out
}

fn resource_findings(ei: &EcmContract, ej: &EcmContract, emb: &EmbodimentProfile) -> Vec<Finding> {
    let mut out = located(ei.module_id.as_str(), resource_satisfiable(&ei.res, emb));
    out.extend(located(ej.module_id.as_str(), resource_satisfiable(&ej.res, emb)));
    if ei.beh.handoff == Some(HandoffSemantics::PersistentHold) {
        for lock in ei.res.exclusive_locks.iter().filter(|l| ej.res.exclusive_locks.contains(l)) {
            out.push(
                Finding::new(
                    Dimension::Res,
                    Severity::Blocking,
                    "LOCK_CONFLICT",
                    format!(
                        "{} keeps `{lock}` held across the handoff but {} needs it exclusively",
                        ei.module_id, ej.module_id
                    ),
                )
                .at(format!("{} -> {}", ei.module_id, ej.module_id))
                .suggest(format!("release `{lock}` before handing over")),
            );
        }
    }
    out
}

fn permission_findings(ei: &EcmContract, ej: &EcmContract, pol: &PolicyProfile) -> Vec<Finding> {
    // Grantability is decided claim by claim, so checking each side is the
    // same as checking the union; it keeps the module in the location.
    let mut out = located(ei.module_id.as_str(), permission_grantable(&ei.perm, pol));
    out.extend(located(ej.module_id.as_str(), permission_grantable(&ej.perm, pol)));
    out
}

fn recovery_findings(ei: &EcmContract, ej: &EcmContract) -> Vec<Finding> {
    let mut out = Vec::new();
    let link = format!("{} -> {}", ei.module_id, ej.module_id);
    if !ei.exported_states().any(|s| s == ej.rec.rollback_state) {
        out.push(
            Finding::new(
                Dimension::Rec,
                Severity::Blocking,
                "ROLLBACK_UNREACHABLE",
                format!(
                    "{} rolls back to `{}`, which {} does not leave reachable",
                    ej.module_id, ej.rec.rollback_state, ei.module_id
                ),
            )
            .at(link.clone()),
        );
    }
    let (up, down) = (ei.rec.strategy(), ej.rec.strategy());
    if down.conflicts_with_upstream(up) {
        out.push(
            Finding::new(
                Dimension::Rec,
                Severity::Blocking,
                "REC_STRATEGY_CONFLICT",
                format!("{} retries with {down} while {} recovers by {up}", ej.module_id, ei.module_id),
            )
            .at(link.clone()),
        );
    }
    for a in ei.rec.escalation.iter().flatten() {
        for b in ej.rec.escalation.iter().flatten() {
            if a.trigger == b.trigger && a.target != b.target {
                out.push(
                    Finding::new(
                        Dimension::Rec,
                        Severity::Warning,
                        "ESCALATION_INCONSISTENT",
                        format!("`{}` escalates to {} upstream and {} downstream", a.trigger, a.target, b.target),
                    )
                    .at(link.clone())
                    .suggest("align escalation targets"),
                );
            }
        }
    }
    out
}

fn version_findings(ei: &EcmContract, ej: &EcmContract) -> Vec<Finding> {
    let mut out = Vec::new();
    for (from, to) in [(ei, ej), (ej, ei)] {
        for (dep, range) in from.ver.dependencies() {
            if dep == to.module_id.as_str() && !range.matches(&to.version()) {
                out.push(
                    Finding::new(
                        Dimension::Ver,
                        Severity::Blocking,
                        "DEP_UNSAT",
                        format!("{} needs {dep} {range}, chain provides {}", from.module_id, to.version()),
                    )
                    .at(format!("{}: versioning.dependency_constraints.{dep}", from.module_id)),
                );
            }
        }
    }
    out
}

fn pair_findings(
    ei: &EcmContract,
    ej: &EcmContract,
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    if cfg.enabled(Dimension::Sig) {
        findings.extend(signature_findings(ei, ej, Some(&emb.frame_transforms)));
    }
    if cfg.enabled(Dimension::Beh) {
        findings.extend(behavior_findings(ei, ej));
    }
    if cfg.enabled(Dimension::Res) {
        findings.extend(resource_findings(ei, ej, emb));
    }
    if cfg.enabled(Dimension::Perm) {
        findings.extend(permission_findings(ei, ej, pol));
    }
    if cfg.enabled(Dimension::Rec) {
        findings.extend(recovery_findings(ei, ej));
    }
    if cfg.enabled(Dimension::Ver) {
        findings.extend(version_findings(ei, ej));
    }
    findings
}

/// Pairwise composition check of `ei` followed by `ej`.
pub fn check_pair(
    ei: &EcmContract,
    ej: &EcmContract,
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> CompatReport {
    CompatReport::build(pair_findings(ei, ej, emb, pol, cfg), cfg.checked(&Dimension::CONTRACT), Vec::new())
}

/// Chain check: every adjacent pair plus the chain-wide latency budget,
/// traced-audit requirement and lock churn.
pub fn check_chain(
    chain: &[EcmContract],
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> Result<CompatReport, ChainError> {
    if chain.len() < 2 {
        return Err(ChainError::ChainTooShort(chain.len()));
    }
    let mut findings = Vec::new();
    for (i, pair) in chain.windows(2).enumerate() {
        findings.extend(pair_findings(&pair[0], &pair[1], emb, pol, cfg).into_iter().map(|f| f.in_pair(i)));
    }
    if let Some(budget) = cfg.chain_latency_budget_ms {
        let total: u64 = chain.iter().map(EcmContract::timeout_ms).sum();
        if total > budget {
            findings.push(
                Finding::new(
                    Dimension::Global,
                    Severity::Blocking,
                    "LATENCY_BUDGET",
                    format!("summed timeouts {total} ms exceed the {budget} ms budget"),
                )
                .at("chain"),
            );
        }
    }
    if chain.iter().any(|c| c.perm.audit_req == AuditLevel::Traced) && pol.audit_mode != AuditLevel::Traced {
        findings.push(
            Finding::new(
                Dimension::Global,
                Severity::Blocking,
                "AUDIT_SHORTFALL",
                format!("chain contains a traced module but policy audit mode is {}", pol.audit_mode),
            )
            .at("chain")
            .suggest("run the chain under traced audit"),
        );
    }
    let mut lock_users: BTreeMap<&str, usize> = BTreeMap::new();
    for c in chain {
        for lock in &c.res.exclusive_locks {
            *lock_users.entry(lock).or_default() += 1;
        }
    }
    for (lock, cycles) in lock_users {
        if cycles > cfg.lock_churn_threshold {
            findings.push(
                Finding::new(
                    Dimension::Global,
                    Severity::Warning,
                    "LOCK_CHURN",
                    format!("`{lock}` is acquired and released {cycles} times"),
                )
                .at("chain")
                .suggest(format!("expect swap latency on `{lock}`")),
            );
        }
    }
    let mut checked = cfg.checked(&Dimension::CONTRACT);
    checked.insert(Dimension::Global);
    Ok(CompatReport::build(findings, checked, Vec::new()))
}
