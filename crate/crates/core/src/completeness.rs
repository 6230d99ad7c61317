//! Contract-completeness: every required field of every dimension declared.

use serde::Serialize;

use crate::checker::Dimension;
use crate::contract::EcmContract;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingField {
    pub dimension: Dimension,
    pub field: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletenessReport {
    pub complete: bool,
    pub missing_fields: Vec<MissingField>,
}

/// Required fields, in schema order.
pub const REQUIRED_FIELDS: [(Dimension, &str); 20] = [
    (Dimension::Sig, "module_id"),
    (Dimension::Sig, "input_schema"),
    (Dimension::Sig, "output_schema"),
    (Dimension::Sig, "coord_frame"),
    (Dimension::Sig, "timeout_ms"),
    (Dimension::Beh, "preconditions"),
    (Dimension::Beh, "postconditions"),
    (Dimension::Beh, "handoff_semantics"),
    (Dimension::Res, "sensors"),
    (Dimension::Res, "actuators"),
    (Dimension::Res, "compute"),
    (Dimension::Perm, "physical_perms"),
    (Dimension::Rec, "failure_modes"),
    (Dimension::Rec, "rollback_state"),
    (Dimension::Rec, "retry_policy"),
    (Dimension::Rec, "escalation"),
    (Dimension::Ver, "version"),
    (Dimension::Ver, "compat_level"),
    (Dimension::Ver, "dependencies"),
    (Dimension::Ver, "policy_change"),
];

fn declared(c: &EcmContract, field: &str) -> bool {
    match field {
        "module_id" => !c.module_id.as_str().is_empty(),
        "input_schema" => c.sig.input_schema.is_some(),
        "output_schema" => c.sig.output_schema.is_some(),
        "coord_frame" => c.sig.coord_frame.as_deref().is_some_and(|f| !f.is_empty()),
        "timeout_ms" => c.sig.timeout_ms.is_some_and(|t| t > 0),
        "preconditions" => !c.beh.preconditions.is_empty(),
        "postconditions" => !c.beh.postconditions.is_empty(),
        "handoff_semantics" => c.beh.handoff.is_some(),
        "sensors" => c.res.sensors.is_some(),
        "actuators" => c.res.actuators.is_some(),
        "compute" => c.res.compute.is_some(),
        "physical_perms" => c.perm.physical.is_some(),
        "failure_modes" => !c.rec.failure_modes.is_empty(),
        "rollback_state" => !c.rec.rollback_state.is_empty(),
        "retry_policy" => c.rec.retry_policy.is_some(),
        "escalation" => c.rec.escalation.as_ref().is_some_and(|e| !e.is_empty()),
        "version" => c.ver.version.is_some(),
        "compat_level" => c.ver.compat_level.is_some(),
        "dependencies" => c.ver.dependencies.is_some(),
        "policy_change" => c.ver.policy_change.is_some(),
        _ => false,
    }
}

pub fn check_completeness(c: &EcmContract) -> CompletenessReport {
    let missing_fields: Vec<MissingField> = REQUIRED_FIELDS
        .iter()
        .filter(|(_, field)| !declared(c, field))
        .map(|&(dimension, field)| MissingField { dimension, field })
        .collect();
    CompletenessReport { complete: missing_fields.is_empty(), missing_fields }
}

/// Removes one required field from a contract. Used by mutation tests and
/// by fixture tooling to produce deliberately partial contracts.
pub fn strip_field(c: &mut EcmContract, field: &str) -> bool {
    match field {
        "input_schema" => c.sig.input_schema = None,
        "output_schema" => c.sig.output_schema = None,
        "coord_frame" => c.sig.coord_frame = None,
        "timeout_ms" => c.sig.timeout_ms = None,
        "preconditions" => c.beh.preconditions.clear(),
        "postconditions" => c.beh.postconditions.clear(),
        "handoff_semantics" => c.beh.handoff = None,
        "sensors" => c.res.sensors = None,
        "actuators" => c.res.actuators = None,
        "compute" => c.res.compute = None,
        "physical_perms" => c.perm.physical = None,
        "failure_modes" => c.rec.failure_modes.clear(),
        "rollback_state" => c.rec.rollback_state.clear(),
        "retry_policy" => c.rec.retry_policy = None,
        "escalation" => c.rec.escalation = None,
        "version" => c.ver.version = None,
        "compat_level" => c.ver.compat_level = None,
        "dependencies" => c.ver.dependencies = None,
        "policy_change" => c.ver.policy_change = None,
        _ => return false,
    }
    true
}
