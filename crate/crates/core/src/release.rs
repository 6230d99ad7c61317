//! Release discipline: compatibility classes, embodied semver, channels,
//! promotion gates, deprecation and migration specs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::delta::{contract_delta, DeltaSet, PermDelta, RecDelta, ResDelta};
use crate::checker::{Dimension, Finding, Severity};
use crate::contract::{keyword_enum, EcmContract};
use crate::manifest::ManifestError;
use crate::profiles::PolicyProfile;
use crate::version::SemVer;

/// Release classification relative to the predecessor version. Variant
/// order is the severity order used for conservative fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompatibilityClass {
    FullyCompatible,
    ResourceSensitive,
    RecoverySensitive,
    PolicySensitive,
    Breaking,
}

impl CompatibilityClass {
    pub const ALL: [CompatibilityClass; 5] = [
        CompatibilityClass::FullyCompatible,
        CompatibilityClass::ResourceSensitive,
        CompatibilityClass::PolicySensitive,
        CompatibilityClass::RecoverySensitive,
        CompatibilityClass::Breaking,
    ];

    /// Spelling used in manifests and release records.
    pub fn manifest_name(self) -> &'static str {
        match self {
            CompatibilityClass::FullyCompatible => "fully-compatible",
            CompatibilityClass::ResourceSensitive => "resource-sensitive",
            CompatibilityClass::PolicySensitive => "policy-sensitive",
            CompatibilityClass::RecoverySensitive => "recovery-sensitive",
            CompatibilityClass::Breaking => "breaking",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            CompatibilityClass::FullyCompatible => "FC",
            CompatibilityClass::ResourceSensitive => "RS",
            CompatibilityClass::PolicySensitive => "PS",
            CompatibilityClass::RecoverySensitive => "RecS",
            CompatibilityClass::Breaking => "BRK",
        }
    }

    pub fn is_sensitive(self) -> bool {
        !matches!(self, CompatibilityClass::FullyCompatible | CompatibilityClass::Breaking)
    }
}

impl FromStr for CompatibilityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        CompatibilityClass::ALL
            .into_iter()
            .find(|c| {
                let name: String = c.manifest_name().chars().filter(|ch| *ch != '-').collect();
                name == norm || c.abbreviation().to_ascii_lowercase() == norm
            })
            .ok_or_else(|| format!("unknown compatibility class `{s}`"))
    }
}

impl fmt::Display for CompatibilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReleaseChannel {
    Sandbox,
    Beta,
    Stable,
    Certified,
}

impl ReleaseChannel {
    pub const ALL: [ReleaseChannel; 4] =
        [ReleaseChannel::Sandbox, ReleaseChannel::Beta, ReleaseChannel::Stable, ReleaseChannel::Certified];

    pub fn manifest_name(self) -> &'static str {
        match self {
            ReleaseChannel::Sandbox => "sandbox",
            ReleaseChannel::Beta => "beta",
            ReleaseChannel::Stable => "stable",
            ReleaseChannel::Certified => "certified",
        }
    }

    pub fn next(self) -> Option<ReleaseChannel> {
        match self {
            ReleaseChannel::Sandbox => Some(ReleaseChannel::Beta),
            ReleaseChannel::Beta => Some(ReleaseChannel::Stable),
            ReleaseChannel::Stable => Some(ReleaseChannel::Certified),
            ReleaseChannel::Certified => None,
        }
    }
}

impl FromStr for ReleaseChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReleaseChannel::ALL
            .into_iter()
            .find(|c| c.manifest_name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown release channel `{s}`"))
    }
}

impl fmt::Display for ReleaseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.manifest_name())
    }
}

/// Applies the class rules in order: incompatible signature or behavior,
/// then two or more sensitive deltas at once, then permission, recovery and
/// resource deltas on their own.
pub fn classify_release(delta: &DeltaSet) -> CompatibilityClass {
    if delta.sig.is_incompatible() || delta.beh.is_incompatible() {
        return CompatibilityClass::Breaking;
    }
    let res = delta.res == ResDelta::Increased;
    let perm = delta.perm == PermDelta::Broadened;
    let rec = delta.rec == RecDelta::Changed;
    match (res, perm, rec) {
        _ if [res, perm, rec].iter().filter(|f| **f).count() >= 2 => CompatibilityClass::Breaking,
        (_, true, _) => CompatibilityClass::PolicySensitive,
        (_, _, true) => CompatibilityClass::RecoverySensitive,
        (true, _, _) => CompatibilityClass::ResourceSensitive,
        _ => CompatibilityClass::FullyCompatible,
    }
}

/// Next version under embodied semver: untouched contracts get a patch,
/// compatible extensions a minor bump, everything else a major bump.
pub fn suggest_version(old: &SemVer, class: CompatibilityClass, delta: &DeltaSet) -> SemVer {
    match class {
        CompatibilityClass::FullyCompatible if delta.is_empty() => SemVer::new(old.major, old.minor, old.patch + 1),
        CompatibilityClass::FullyCompatible => SemVer::new(old.major, old.minor + 1, 0),
        _ => SemVer::new(old.major + 1, 0, 0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("version {new} does not follow {old}")]
pub struct VersionOrderError {
    pub old: SemVer,
    pub new: SemVer,
}

/// Conventional semver reading of a version bump, used as the upgrade
/// baseline: a major bump is breaking, anything else fully compatible.
pub fn semver_only_classify(old: &SemVer, new: &SemVer) -> Result<CompatibilityClass, VersionOrderError> {
    let key = |v: &SemVer| (v.major, v.minor, v.patch);
    if key(new) <= key(old) {
        return Err(VersionOrderError { old: old.clone(), new: new.clone() });
    }
    Ok(if new.major > old.major { CompatibilityClass::Breaking } else { CompatibilityClass::FullyCompatible })
}

keyword_enum!(CompatEvidence { None => "none", Limited => "limited", Verified => "verified" });
keyword_enum!(PolicyEvidence { None => "none", Limited => "limited", Reviewed => "reviewed", Strong => "strong" });
keyword_enum!(UpgradeEvidence { None => "none", Limited => "limited", Tested => "tested" });
keyword_enum!(
    RollbackEvidence {
        None => "none",
        Recommended => "recommended",
        RequiredMet => "required_met",
        RequiredTracedMet => "required_traced_met",
    }
);

/// Evidence attached to a release. Starts at the lowest level everywhere;
/// only gate runs or explicit imports raise it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceBundle {
    pub contract_complete: bool,
    pub compat_verified: CompatEvidence,
    pub policy_review: PolicyEvidence,
    pub upgrade_tested: UpgradeEvidence,
    pub rollback_ready: RollbackEvidence,
}

impl Default for EvidenceBundle {
    fn default() -> Self {
        Self {
            contract_complete: false,
            compat_verified: CompatEvidence::None,
            policy_review: PolicyEvidence::None,
            upgrade_tested: UpgradeEvidence::None,
            rollback_ready: RollbackEvidence::None,
        }
    }
}

impl EvidenceBundle {
    /// Evidence that meets every row up to and including `channel`.
    pub fn sufficient_for(channel: ReleaseChannel) -> Self {
        let req = ChannelRequirements::of(channel);
        Self {
            contract_complete: req.contract_complete,
            compat_verified: req.compat,
            policy_review: req.policy,
            upgrade_tested: req.upgrade,
            rollback_ready: req.rollback,
        }
    }
}

keyword_enum!(
    MigrationKind { Schema => "schema", Behavioral => "behavioral", Policy => "policy", Resource => "resource", Recovery => "recovery" }
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub old_path: String,
    pub new_path: String,
    #[serde(default)]
    pub transform: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationSpec {
    pub kind: BTreeSet<MigrationKind>,
    #[serde(default)]
    pub field_maps: Vec<FieldMap>,
    #[serde(default)]
    pub adapter_available: bool,
    #[serde(default)]
    pub dual_version_window: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRecord {
    pub contract: EcmContract,
    pub channel: ReleaseChannel,
    pub class_vs_predecessor: Option<CompatibilityClass>,
    pub evidence: EvidenceBundle,
    pub deprecation_notice_cycles: u32,
    pub migration_spec: Option<MigrationSpec>,
    pub environment_tags: Vec<String>,
    pub recovery_summary: Vec<String>,
    /// Gate outcomes appended on every successful promotion.
    pub evidence_trail: Vec<String>,
}

impl ReleaseRecord {
    /// A first release: sandbox channel, no predecessor class, no evidence.
    pub fn new(contract: EcmContract) -> Self {
        Self {
            contract,
            channel: ReleaseChannel::Sandbox,
            class_vs_predecessor: None,
            evidence: EvidenceBundle::default(),
            deprecation_notice_cycles: 0,
            migration_spec: None,
            environment_tags: Vec::new(),
            recovery_summary: Vec::new(),
            evidence_trail: Vec::new(),
        }
    }

    pub fn is_deprecated(&self) -> bool {
        self.contract.ver.deprecation.as_ref().is_some_and(|d| d.flag)
    }
}

/// On-disk form of the metadata half of a release record (`.release.yaml`).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReleaseFile {
    channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(default)]
    evidence: EvidenceBundle,
    #[serde(default)]
    deprecation_notice_cycles: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    migration: Option<MigrationSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    environment_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    recovery_summary: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    evidence_trail: Vec<String>,
}

/// Serializes everything in `rec` except the contract itself.
pub fn serialize_release_metadata(rec: &ReleaseRecord) -> String {
    let file = ReleaseFile {
        channel: rec.channel.manifest_name().to_string(),
        class: rec.class_vs_predecessor.map(|c| c.manifest_name().to_string()),
        evidence: rec.evidence.clone(),
        deprecation_notice_cycles: rec.deprecation_notice_cycles,
        migration: rec.migration_spec.clone(),
        environment_tags: rec.environment_tags.clone(),
        recovery_summary: rec.recovery_summary.clone(),
        evidence_trail: rec.evidence_trail.clone(),
    };
    serde_yaml::to_string(&file).expect("release metadata always serializes")
}

/// Reads a `.release.yaml` document and attaches it to `contract`.
pub fn parse_release_metadata(contract: EcmContract, text: &str) -> Result<ReleaseRecord, ManifestError> {
    let file: ReleaseFile = serde_yaml::from_str(text)
        .map_err(|e| ManifestError::Parse { line: e.location().map_or(0, |l| l.line()), message: e.to_string() })?;
    let channel = file.channel.parse().map_err(|m| crate::manifest::schema("channel", m))?;
    let class = file.class.map(|c| c.parse()).transpose().map_err(|m| crate::manifest::schema("class", m))?;
    Ok(ReleaseRecord {
        contract,
        channel,
        class_vs_predecessor: class,
        evidence: file.evidence,
        deprecation_notice_cycles: file.deprecation_notice_cycles,
        migration_spec: file.migration,
        environment_tags: file.environment_tags,
        recovery_summary: file.recovery_summary,
        evidence_trail: file.evidence_trail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    Contract,
    Compatibility,
    Policy,
    Upgrade,
    Rollback,
    Migration,
    Channel,
}

impl Gate {
    pub fn label(self) -> &'static str {
        match self {
            Gate::Contract => "contract completeness gate",
            Gate::Compatibility => "compatibility gate",
            Gate::Policy => "policy gate",
            Gate::Upgrade => "upgrade gate",
            Gate::Rollback => "rollback gate",
            Gate::Migration => "migration gate",
            Gate::Channel => "channel gate",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub target: ReleaseChannel,
    pub pass: bool,
    pub failed_gates: Vec<Gate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReleaseError {
    #[error("cannot promote from {from} to {to}: channels must be promoted one step at a time")]
    ChannelSkip { from: ReleaseChannel, to: ReleaseChannel },
    #[error("removal needs at least one deprecation notice cycle (have {cycles})")]
    DeprecationWindow { cycles: u32 },
}

/// Minimum evidence per channel.
#[derive(Debug, Clone, Copy)]
struct ChannelRequirements {
    contract_complete: bool,
    compat: CompatEvidence,
    policy: PolicyEvidence,
    upgrade: UpgradeEvidence,
    rollback: RollbackEvidence,
}

impl ChannelRequirements {
    fn of(channel: ReleaseChannel) -> Self {
        use ReleaseChannel::*;
        match channel {
            Sandbox => Self {
                contract_complete: false,
                compat: CompatEvidence::None,
                policy: PolicyEvidence::None,
                upgrade: UpgradeEvidence::None,
                rollback: RollbackEvidence::None,
            },
            Beta => Self {
                contract_complete: true,
                compat: CompatEvidence::Limited,
                policy: PolicyEvidence::Limited,
                upgrade: UpgradeEvidence::Limited,
                rollback: RollbackEvidence::Recommended,
            },
            Stable => Self {
                contract_complete: true,
                compat: CompatEvidence::Verified,
                policy: PolicyEvidence::Reviewed,
                upgrade: UpgradeEvidence::Tested,
                rollback: RollbackEvidence::RequiredMet,
            },
            Certified => Self {
                contract_complete: true,
                compat: CompatEvidence::Verified,
                policy: PolicyEvidence::Strong,
                upgrade: UpgradeEvidence::Tested,
                rollback: RollbackEvidence::RequiredTracedMet,
            },
        }
    }
}

/// Evaluates every gate for a one-step promotion and lists those that fail.
pub fn evaluate_gate(
    rec: &ReleaseRecord,
    target: ReleaseChannel,
    pol: &PolicyProfile,
) -> Result<GateResult, ReleaseError> {
    if rec.channel.next() != Some(target) {
        return Err(ReleaseError::ChannelSkip { from: rec.channel, to: target });
    }
    let req = ChannelRequirements::of(target);
    let ev = &rec.evidence;
    let mut failed = Vec::new();
    if req.contract_complete && !ev.contract_complete {
        failed.push(Gate::Contract);
    }
    if ev.compat_verified < req.compat {
        failed.push(Gate::Compatibility);
    }
    let unresolved_policy_delta = target >= ReleaseChannel::Stable
        && rec.class_vs_predecessor == Some(CompatibilityClass::PolicySensitive)
        && ev.policy_review < PolicyEvidence::Reviewed;
    if ev.policy_review < req.policy || unresolved_policy_delta {
        failed.push(Gate::Policy);
    }
    if ev.upgrade_tested < req.upgrade {
        failed.push(Gate::Upgrade);
    }
    if ev.rollback_ready < req.rollback {
        failed.push(Gate::Rollback);
    }
    if target >= ReleaseChannel::Stable
        && rec.class_vs_predecessor == Some(CompatibilityClass::Breaking)
        && rec.migration_spec.is_none()
    {
        failed.push(Gate::Migration);
    }
    if !pol.allowed_channels.contains(&target) {
        failed.push(Gate::Channel);
    }
    Ok(GateResult { target, pass: failed.is_empty(), failed_gates: failed })
}

keyword_enum!(DeprecationAction { Flag => "flag", Remove => "remove" });

/// Applies a deprecation action. Flagging is idempotent and resets nothing;
/// removal needs at least one notice cycle.
pub fn validate_deprecation(rec: &ReleaseRecord, action: DeprecationAction) -> Result<ReleaseRecord, ReleaseError> {
    match action {
        DeprecationAction::Flag => {
            let mut out = rec.clone();
            if !rec.is_deprecated() {
                out.contract.ver.deprecation.get_or_insert_with(Default::default).flag = true;
                out.deprecation_notice_cycles = 0;
            }
            Ok(out)
        }
        DeprecationAction::Remove => {
            if rec.is_deprecated() && rec.deprecation_notice_cycles >= 1 {
                Ok(rec.clone())
            } else {
                Err(ReleaseError::DeprecationWindow {
                    cycles: if rec.is_deprecated() { rec.deprecation_notice_cycles } else { 0 },
                })
            }
        }
    }
}

/// Migration kinds needed to cover the incompatible parts of a delta.
pub fn required_migration_kinds(delta: &DeltaSet) -> BTreeSet<MigrationKind> {
    let mut kinds = BTreeSet::new();
    if delta.sig.is_incompatible() {
        kinds.insert(MigrationKind::Schema);
    }
    if delta.beh.is_incompatible() {
        kinds.insert(MigrationKind::Behavioral);
    }
    if delta.perm == PermDelta::Broadened {
        kinds.insert(MigrationKind::Policy);
    }
    if delta.res == ResDelta::Increased {
        kinds.insert(MigrationKind::Resource);
    }
    if delta.rec == RecDelta::Changed {
        kinds.insert(MigrationKind::Recovery);
    }
    kinds
}

pub fn validate_migration_spec(spec: &MigrationSpec, old: &EcmContract, new: &EcmContract) -> Vec<Finding> {
    let mut out = Vec::new();
    if spec.kind.is_empty() {
        out.push(Finding::new(
            Dimension::Ver,
            Severity::Blocking,
            "MIGRATION_KIND_GAP",
            "migration kind list is empty",
        ));
    }
    let (old_paths, new_paths) = (old.paths(), new.paths());
    for (i, map) in spec.field_maps.iter().enumerate() {
        for (path, paths, side) in [(&map.old_path, &old_paths, "old"), (&map.new_path, &new_paths, "new")] {
            if !paths.contains(path) {
                out.push(
                    Finding::new(
                        Dimension::Ver,
                        Severity::Blocking,
                        "MIGRATION_PATH_INVALID",
                        format!("{side} path `{path}` does not exist in the {side} contract"),
                    )
                    .at(format!("field_maps[{i}]")),
                );
            }
        }
    }
    if let Ok(delta) = contract_delta(old, new) {
        for kind in required_migration_kinds(&delta) {
            let strict = matches!(kind, MigrationKind::Schema | MigrationKind::Behavioral);
            if strict && !spec.kind.contains(&kind) {
                out.push(
                    Finding::new(
                        Dimension::Ver,
                        Severity::Blocking,
                        "MIGRATION_KIND_GAP",
                        format!("incompatible delta needs a `{kind}` migration"),
                    )
                    .suggest(format!("add `{kind}` to the migration kind list")),
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names() {
        for c in CompatibilityClass::ALL {
            assert_eq!(c.manifest_name().parse::<CompatibilityClass>().unwrap(), c);
            assert_eq!(c.abbreviation().parse::<CompatibilityClass>().unwrap(), c);
            assert_eq!(format!("{c}").parse::<CompatibilityClass>().unwrap(), c);
        }
        assert_eq!("resource_sensitive".parse::<CompatibilityClass>().unwrap(), CompatibilityClass::ResourceSensitive);
        assert!("kinda-compatible".parse::<CompatibilityClass>().is_err());
    }

    #[test]
    fn severity_order() {
        use CompatibilityClass::*;
        assert!(FullyCompatible < ResourceSensitive);
        assert!(ResourceSensitive < RecoverySensitive);
        assert!(RecoverySensitive < PolicySensitive);
        assert!(PolicySensitive < Breaking);
    }

    #[test]
    fn semver_baseline() {
        let v = |a, b, c| SemVer::new(a, b, c);
        assert_eq!(semver_only_classify(&v(1, 0, 0), &v(2, 0, 0)).unwrap(), CompatibilityClass::Breaking);
        assert_eq!(semver_only_classify(&v(1, 0, 0), &v(1, 1, 0)).unwrap(), CompatibilityClass::FullyCompatible);
        assert_eq!(semver_only_classify(&v(1, 0, 0), &v(1, 0, 1)).unwrap(), CompatibilityClass::FullyCompatible);
        assert!(semver_only_classify(&v(1, 1, 0), &v(1, 1, 0)).is_err());
        assert!(semver_only_classify(&v(1, 1, 0), &v(1, 0, 9)).is_err());
    }

    #[test]
    fn channel_ladder() {
        assert_eq!(ReleaseChannel::Sandbox.next(), Some(ReleaseChannel::Beta));
        assert_eq!(ReleaseChannel::Certified.next(), None);
        assert_eq!("Stable".parse::<ReleaseChannel>().unwrap(), ReleaseChannel::Stable);
    }
}
