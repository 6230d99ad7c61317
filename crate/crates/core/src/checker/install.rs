use crate::checker::{located, CheckConfig, CompatReport, Dimension, Finding, Severity};
use crate::completeness::check_completeness;
use crate::contract::{EcmContract, HandoffSemantics};
use crate::profiles::{permission_grantable, resource_satisfiable, EmbodimentProfile, PolicyProfile};

/// Dependency ranges of `c` checked against the runtime version, the
/// platform's services and the already admitted modules.
pub fn dependencies_satisfied(c: &EcmContract, emb: &EmbodimentProfile, admitted: &[EcmContract]) -> Vec<Finding> {
    let mut out = Vec::new();
    for (dep, range) in c.ver.dependencies() {
        let candidates: Vec<_> = if dep == "runtime" {
            vec![emb.runtime_version.clone()]
        } else if let Some(v) = emb.provided_services.get(dep) {
            vec![v.clone()]
        } else {
            admitted.iter().filter(|m| m.module_id.as_str() == dep).map(|m| m.version()).collect()
        };
        if !candidates.iter().any(|v| range.matches(v)) {
            let found = if candidates.is_empty() {
                "nothing".to_string()
            } else {
                candidates.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
            };
            out.push(
                Finding::new(
                    Dimension::Ver,
                    Severity::Blocking,
                    "DEP_UNSAT",
                    format!("dependency {dep} {range} not satisfied (found {found})"),
                )
                .at(format!("versioning.dependency_constraints.{dep}")),
            );
        }
    }
    out
}

/// Installation check: dependencies, resources, permissions, completeness
/// and exclusive locks already held persistently by admitted modules.
pub fn check_install(
    c: &EcmContract,
    emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    admitted: &[EcmContract],
    cfg: &CheckConfig,
) -> CompatReport {
    let mut findings = Vec::new();
    if cfg.enabled(Dimension::Ver) {
        findings.extend(dependencies_satisfied(c, emb, admitted));
    }
    if cfg.enabled(Dimension::Res) {
        findings.extend(resource_satisfiable(&c.res, emb));
        for lock in &c.res.exclusive_locks {
            let holders = admitted.iter().filter(|m| {
                m.module_id != c.module_id
                    && m.beh.handoff == Some(HandoffSemantics::PersistentHold)
                    && m.res.exclusive_locks.contains(lock)
            });
            for holder in holders {
                findings.push(
                    Finding::new(
                        Dimension::Res,
                        Severity::Blocking,
                        "LOCK_CONFLICT",
                        format!("lock `{lock}` is held persistently by {}", holder.key()),
                    )
                    .at(format!("resources.exclusive_resource_lock.{lock}")),
                );
            }
        }
    }
    if cfg.enabled(Dimension::Perm) {
        findings.extend(permission_grantable(&c.perm, pol));
    }
    for missing in check_completeness(c).missing_fields {
        if cfg.enabled(missing.dimension) {
            findings.push(
                Finding::new(
                    missing.dimension,
                    Severity::Blocking,
                    "INCOMPLETE_CONTRACT",
                    format!("required field `{}` is not declared", missing.field),
                )
                .at(missing.field),
            );
        }
    }
    let findings = located(c.module_id.as_str(), findings);
    CompatReport::build(findings, cfg.checked(&[Dimension::Res, Dimension::Perm, Dimension::Ver]), Vec::new())
}
