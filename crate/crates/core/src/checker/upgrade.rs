use serde::Serialize;

use crate::checker::delta::{contract_delta, DeltaSet, ModuleMismatch, PermDelta, RecDelta, ResDelta};
use crate::checker::install::dependencies_satisfied;
use crate::checker::{check_pair, CheckConfig, CompatReport, Dimension, Finding, Outcome, Severity};
use crate::contract::EcmContract;
use crate::profiles::{resource_satisfiable, EmbodimentProfile, PolicyProfile};
use crate::release::{classify_release, CompatibilityClass};

#[derive(Debug, Clone, Serialize)]
pub struct UpgradeReport {
    pub delta: DeltaSet,
    pub class: CompatibilityClass,
    pub report: CompatReport,
}

/// Replacing `old` with `new` in place, given the modules composed with it.
/// Each dependent is checked as the successor of the module being replaced.
pub fn check_upgrade(
    old: &EcmContract,
    new: &EcmContract,
    dependents: &[EcmContract],
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> Result<UpgradeReport, ModuleMismatch> {
    let delta = contract_delta(old, new)?;
    let class = classify_release(&delta);
    let mut findings = Vec::new();
    let mut review = Vec::new();
    let id = new.module_id.as_str();

    if cfg.enabled(Dimension::Ver) {
        findings.extend(dependencies_satisfied(new, emb, dependents));
    }
    let pair_cfg = cfg.clone();
    let mut rec_blocked = false;
    for d in dependents {
        let before = check_pair(old, d, emb, pol, &pair_cfg);
        let after = check_pair(new, d, emb, pol, &pair_cfg);
        rec_blocked |= after.findings.iter().any(|f| f.dimension == Dimension::Rec && f.severity == Severity::Blocking);
        if before.outcome != Outcome::Reject && after.outcome == Outcome::Reject {
            let codes: Vec<_> = after.issues().map(|f| f.code.as_str()).collect();
            findings.push(
                Finding::new(
                    Dimension::Ver,
                    Severity::Blocking,
                    "DEP_BROKEN",
                    format!("{} stops composing with {id} ({})", d.key(), codes.join(", ")),
                )
                .at(format!("{id} -> {}", d.module_id)),
            );
        }
    }
    if cfg.enabled(Dimension::Perm) && delta.perm == PermDelta::Broadened {
        findings.push(
            Finding::new(
                Dimension::Perm,
                Severity::Warning,
                "PERM_BROADENED",
                "the new version asks for broader permissions",
            )
            .at(format!("{id}: permissions")),
        );
        review.push("governance re-approval".to_string());
    }
    if cfg.enabled(Dimension::Res) && delta.res == ResDelta::Increased {
        let unmet = resource_satisfiable(&new.res, emb);
        if unmet.is_empty() {
            findings.push(
                Finding::new(
                    Dimension::Res,
                    Severity::Warning,
                    "RES_INCREASED",
                    "the new version needs more resources",
                )
                .at(format!("{id}: resources")),
            );
        } else {
            findings.extend(crate::checker::located(id, unmet));
        }
    } else if cfg.enabled(Dimension::Res) && new.ver.resource_change == Some(true) {
        // The author marked a resource change the delta does not see (sensor
        // rates, mounts); re-verify rather than trust the class.
        let unmet = resource_satisfiable(&new.res, emb);
        if unmet.is_empty() {
            findings.push(
                Finding::new(
                    Dimension::Res,
                    Severity::Warning,
                    "RES_MARKED",
                    "resource change declared by the release; requirements re-verified",
                )
                .at(format!("{id}: versioning.resource_change_marker"))
                .suggest("re-verify resources on the target platform"),
            );
        } else {
            findings.extend(crate::checker::located(id, unmet));
        }
    }
    if cfg.enabled(Dimension::Rec) && delta.rec == RecDelta::Changed && !rec_blocked {
        findings.push(
            Finding::new(Dimension::Rec, Severity::Warning, "REC_CHANGED", "recovery semantics changed")
                .at(format!("{id}: recovery"))
                .suggest("revalidate compositions"),
        );
    }
    if class == CompatibilityClass::Breaking {
        review.push("migration required".to_string());
    }
    let report = CompatReport::build(findings, cfg.checked(&Dimension::CONTRACT), review);
    Ok(UpgradeReport { delta, class, report })
}
