use crate::checker::{located, CheckConfig, CompatReport, Dimension, Finding, Severity};
use crate::contract::EcmContract;
use crate::profiles::{evaluate_predicate, permission_grantable, EmbodimentProfile, PolicyProfile, Truth, WorldState};

/// Whether a module can be called right now, given live state. Assumes the
/// module was already admitted for installation.
pub fn check_invocation(
    c: &EcmContract,
    w: &WorldState,
    _emb: &EmbodimentProfile,
    pol: &PolicyProfile,
    cfg: &CheckConfig,
) -> CompatReport {
    let mut findings = Vec::new();
    if cfg.enabled(Dimension::Sig) {
        if let Some(args) = &w.args {
            for input in c.sig.inputs() {
                let at = format!("signature.input_schema.{}", input.name);
                match args.iter().find(|a| a.name == input.name) {
                    None => findings.push(
                        Finding::new(
                            Dimension::Sig,
                            Severity::Blocking,
                            "FIELD_MISSING",
                            format!("caller does not supply `{}`", input.name),
                        )
                        .at(at),
                    ),
                    Some(arg) if !arg.dtype.assignable_to(input.dtype) => findings.push(
                        Finding::new(
                            Dimension::Sig,
                            Severity::Blocking,
                            "TYPE_MISMATCH",
                            format!("`{}` supplied as {}, expected {}", input.name, arg.dtype, input.dtype),
                        )
                        .at(at),
                    ),
                    Some(arg) if arg.unit != input.unit => findings.push(
                        Finding::new(
                            Dimension::Sig,
                            Severity::Blocking,
                            "UNIT_MISMATCH",
                            format!("`{}` has a different unit", input.name),
                        )
                        .at(at),
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    if cfg.enabled(Dimension::Beh) {
        for (i, pre) in c.beh.preconditions.iter().enumerate() {
            let state = match evaluate_predicate(pre, w) {
                Truth::Holds => continue,
                Truth::Fails => "does not hold",
                Truth::Unknown => "cannot be evaluated",
            };
            findings.push(
                Finding::new(
                    Dimension::Beh,
                    Severity::Blocking,
                    "PRECOND_UNMET",
                    format!("precondition `{pre}` {state}"),
                )
                .at(format!("behavior.preconditions[{i}]")),
            );
        }
    }
    if cfg.enabled(Dimension::Res) {
        for s in c.res.sensors() {
            if !w.live_sensors.contains(&s.kind) {
                findings.push(
                    Finding::new(
                        Dimension::Res,
                        Severity::Blocking,
                        "SENSOR_UNAVAILABLE",
                        format!("sensor `{}` is not live", s.kind),
                    )
                    .at(format!("resources.required_sensors.{}", s.kind)),
                );
            }
        }
        if let Some(need) = &c.res.compute {
            if !need.fits_within(&w.allocatable) {
                findings.push(
                    Finding::new(
                        Dimension::Res,
                        Severity::Blocking,
                        "RESOURCE_UNAVAILABLE",
                        "compute cannot be allocated now",
                    )
                    .at("resources.compute"),
                );
            }
        }
        for lock in &c.res.exclusive_locks {
            if !w.available_locks.contains(lock) {
                findings.push(
                    Finding::new(
                        Dimension::Res,
                        Severity::Blocking,
                        "LOCK_UNAVAILABLE",
                        format!("lock `{lock}` is taken"),
                    )
                    .at(format!("resources.exclusive_resource_lock.{lock}")),
                );
            }
        }
    }
    if cfg.enabled(Dimension::Perm) {
        findings.extend(permission_grantable(&c.perm, pol));
    }
    if cfg.enabled(Dimension::Rec) {
        findings.push(
            Finding::new(
                Dimension::Rec,
                Severity::Info,
                "COMPLETION_SEMANTICS_ASSUMED",
                "completion and failure semantics are assumed acceptable to the planner",
            )
            .at("recovery"),
        );
    }
    let findings = located(c.module_id.as_str(), findings);
    CompatReport::build(
        findings,
        cfg.checked(&[Dimension::Sig, Dimension::Beh, Dimension::Res, Dimension::Perm, Dimension::Rec]),
        Vec::new(),
    )
}
