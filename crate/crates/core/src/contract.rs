//! The six-dimensional contract carried by every released capability module.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::predicate::Predicate;
use crate::release::{CompatibilityClass, ReleaseChannel};
use crate::units::{Quantity, Unit};
use crate::version::{SemVer, VersionRange};

/// Dotted module identifier such as `ecm.grasp.basic`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModuleId(String);

impl ModuleId {
    pub fn new(id: impl Into<String>) -> Result<Self, String> {
        let id = id.into();
        let mut segments = id.split('.');
        let valid = id.contains('.')
            && segments
                .all(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'));
        if valid {
            Ok(Self(id))
        } else {
            Err(format!("`{id}` is not a dotted lowercase module identifier"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Second segment of the id (`ecm.navigation.precise` -> `navigation`).
    pub fn family_hint(&self) -> &str {
        self.0.split('.').nth(1).unwrap_or(&self.0)
    }
}

impl TryFrom<String> for ModuleId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ModuleId::new(value)
    }
}

impl From<ModuleId> for String {
    fn from(value: ModuleId) -> Self {
        value.0
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.trim().replace('-', "_");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(&wanted))
                    .ok_or_else(|| format!("unknown {} `{}`", stringify!($name), s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}
pub(crate) use keyword_enum;

keyword_enum!(
    /// Closed catalog of semantic field types.
    DType {
        Pose2D => "Pose2D",
        Pose3D => "Pose3D",
        Point3D => "Point3D",
        Float => "Float",
        Int => "Int",
        Bool => "Bool",
        String => "String",
        NavStatus => "NavStatus",
        GraspState => "GraspState",
        ObjectId => "ObjectId",
        Confidence => "Confidence",
    }
);

impl DType {
    pub fn is_spatial(self) -> bool {
        matches!(self, DType::Pose2D | DType::Pose3D | DType::Point3D)
    }

    /// One-step promotion lattice: identity plus `Pose2D -> Pose3D`,
    /// `Int -> Float` and `Confidence -> Float`.
    pub fn assignable_to(self, target: DType) -> bool {
        self == target
            || matches!(
                (self, target),
                (DType::Pose2D, DType::Pose3D) | (DType::Int, DType::Float) | (DType::Confidence, DType::Float)
            )
    }
}

keyword_enum!(InvocationMode { Sync => "sync", Async => "async", Event => "event" });

keyword_enum!(
    HandoffSemantics {
        PersistentHold => "persistent_hold",
        Stabilized => "stabilized",
        TransferReady => "transfer_ready",
        NominalSuccess => "nominal_success",
        StableArrival => "stable_arrival",
    }
);

impl HandoffSemantics {
    /// Whether an upstream completion state meets a downstream minimum.
    ///
    /// `nominal_success < stabilized < {stable_arrival ~ transfer_ready}`;
    /// `persistent_hold` sits above `stabilized` but is incomparable with
    /// `transfer_ready` and `stable_arrival`.
    pub fn satisfies(self, required: HandoffSemantics) -> bool {
        use HandoffSemantics::*;
        match required {
            NominalSuccess => true,
            Stabilized => self != NominalSuccess,
            StableArrival | TransferReady => matches!(self, StableArrival | TransferReady),
            PersistentHold => self == PersistentHold,
        }
    }
}

keyword_enum!(AuditLevel { None => "none", Standard => "standard", Traced => "traced" });

#[allow(clippy::derivable_impls)]
impl Default for AuditLevel {
    fn default() -> Self {
        AuditLevel::None
    }
}

keyword_enum!(
    FailureSeverity { Transient => "transient", Degraded => "degraded", Critical => "critical", Fatal => "fatal" }
);

keyword_enum!(
    RetryStrategy {
        SamePoseMoreForce => "same_pose_more_force",
        NewPose => "new_pose",
        RetryOnce => "retry_once",
        Retreat => "retreat",
        None => "none",
    }
);

impl RetryStrategy {
    /// Downstream strategies that clash with an upstream strategy.
    pub fn conflicts_with_upstream(self, upstream: RetryStrategy) -> bool {
        matches!(self, RetryStrategy::SamePoseMoreForce | RetryStrategy::NewPose) && upstream == RetryStrategy::Retreat
    }

    pub fn default_attempts(self) -> u32 {
        match self {
            RetryStrategy::RetryOnce => 1,
            RetryStrategy::None => 0,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub dtype: DType,
    pub unit: Option<Unit>,
    pub frame: Option<String>,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, dtype: DType) -> Self {
        Self { name: name.into(), dtype, unit: None, frame: None }
    }

    pub fn with_frame(mut self, frame: impl Into<String>) -> Self {
        self.frame = Some(frame.into());
        self
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = Some(unit.canonical().0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signature {
    pub input_schema: Option<Vec<FieldSpec>>,
    pub output_schema: Option<Vec<FieldSpec>>,
    pub coord_frame: Option<String>,
    pub timeout_ms: Option<u32>,
    pub invocation_mode: Option<InvocationMode>,
    pub state_objects: Vec<String>,
}

impl Signature {
    pub fn inputs(&self) -> &[FieldSpec] {
        self.input_schema.as_deref().unwrap_or_default()
    }

    pub fn outputs(&self) -> &[FieldSpec] {
        self.output_schema.as_deref().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Behavior {
    pub preconditions: Vec<Predicate>,
    pub postconditions: Vec<Predicate>,
    pub invariants: Vec<Predicate>,
    pub semantic_assumptions: Vec<String>,
    pub handoff: Option<HandoffSemantics>,
    /// Minimum completion state this module expects from its predecessor.
    pub required_handoff: Option<HandoffSemantics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub kind: String,
    pub mount: Option<String>,
    pub min_rate_hz: Option<f64>,
}

impl SensorSpec {
    pub fn kind(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), mount: None, min_rate_hz: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorSpec {
    pub kind: String,
    pub dof: Option<u32>,
    pub control_mode: Option<String>,
}

impl ActuatorSpec {
    pub fn kind(kind: impl Into<String>) -> Self {
        Self { kind: kind.into(), dof: None, control_mode: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub cpu_cores: f64,
    pub gpu_gb: f64,
    pub mem_gb: f64,
}

impl ComputeSpec {
    pub fn new(cpu_cores: f64, gpu_gb: f64, mem_gb: f64) -> Self {
        Self { cpu_cores, gpu_gb, mem_gb }
    }

    pub fn fits_within(&self, capacity: &ComputeSpec) -> bool {
        self.cpu_cores <= capacity.cpu_cores && self.gpu_gb <= capacity.gpu_gb && self.mem_gb <= capacity.mem_gb
    }

    pub fn components(&self) -> [(&'static str, f64); 3] {
        [("cpu_cores", self.cpu_cores), ("gpu_gb", self.gpu_gb), ("mem_gb", self.mem_gb)]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Resources {
    pub sensors: Option<Vec<SensorSpec>>,
    pub actuators: Option<Vec<ActuatorSpec>>,
    pub compute: Option<ComputeSpec>,
    pub control_frequency_hz: Option<f64>,
    pub exclusive_locks: Vec<String>,
    pub comm: Vec<String>,
}

impl Resources {
    pub fn sensors(&self) -> &[SensorSpec] {
        self.sensors.as_deref().unwrap_or_default()
    }

    pub fn actuators(&self) -> &[ActuatorSpec] {
        self.actuators.as_deref().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PermBound {
    Flag(bool),
    Limit(Quantity),
    /// Named scope such as the `object_db` in `read: object_db`.
    Scope(String),
}

impl fmt::Display for PermBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PermBound::Flag(b) => write!(f, "{b}"),
            PermBound::Limit(q) => write!(f, "{q}"),
            PermBound::Scope(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermClaim {
    pub key: String,
    pub bound: PermBound,
}

impl PermClaim {
    pub fn flag(key: impl Into<String>, value: bool) -> Self {
        Self { key: key.into(), bound: PermBound::Flag(value) }
    }

    pub fn limit(key: impl Into<String>, value: Quantity) -> Self {
        Self { key: key.into(), bound: PermBound::Limit(value.normalized()) }
    }
}

keyword_enum!(
    PermCategory { Physical => "physical_perms", Data => "data_perms", Network => "network_perms", Operational => "operational_perms" }
);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Permissions {
    pub physical: Option<Vec<PermClaim>>,
    pub data: Vec<PermClaim>,
    pub network: Vec<PermClaim>,
    pub operational: Vec<PermClaim>,
    pub audit_req: AuditLevel,
}

impl Permissions {
    pub fn claims(&self) -> impl Iterator<Item = (PermCategory, &PermClaim)> {
        self.physical
            .iter()
            .flatten()
            .map(|c| (PermCategory::Physical, c))
            .chain(self.data.iter().map(|c| (PermCategory::Data, c)))
            .chain(self.network.iter().map(|c| (PermCategory::Network, c)))
            .chain(self.operational.iter().map(|c| (PermCategory::Operational, c)))
    }

    /// Claims of both sets; identical claims appear once.
    pub fn union(&self, other: &Permissions) -> Permissions {
        fn merge(a: &[PermClaim], b: &[PermClaim]) -> Vec<PermClaim> {
            let mut out = a.to_vec();
            for claim in b {
                if !out.contains(claim) {
                    out.push(claim.clone());
                }
            }
            out
        }
        let physical = match (&self.physical, &other.physical) {
            (None, None) => None,
            (a, b) => Some(merge(a.as_deref().unwrap_or_default(), b.as_deref().unwrap_or_default())),
        };
        Permissions {
            physical,
            data: merge(&self.data, &other.data),
            network: merge(&self.network, &other.network),
            operational: merge(&self.operational, &other.operational),
            audit_req: self.audit_req.max(other.audit_req),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureMode {
    pub mode: String,
    pub severity: FailureSeverity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub strategy: RetryStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EscalationTrigger {
    /// Escalate after this many consecutive failures.
    Count(u32),
    Condition(Predicate),
}

impl fmt::Display for EscalationTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EscalationTrigger::Count(n) => write!(f, "{n} failures"),
            EscalationTrigger::Condition(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Escalation {
    pub trigger: EscalationTrigger,
    pub target: String,
}

impl fmt::Display for Escalation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.trigger, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recovery {
    pub failure_modes: Vec<FailureMode>,
    pub rollback_state: String,
    pub retry_policy: Option<RetryPolicy>,
    pub safe_stop_action: Option<String>,
    pub escalation: Option<Vec<Escalation>>,
}

impl Recovery {
    pub fn strategy(&self) -> RetryStrategy {
        self.retry_policy.map_or(RetryStrategy::None, |p| p.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Deprecation {
    pub flag: bool,
    pub end_of_support: Option<chrono::NaiveDate>,
    pub migration_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Versioning {
    pub version: Option<SemVer>,
    pub compat_level: Option<CompatibilityClass>,
    pub dependencies: Option<BTreeMap<String, VersionRange>>,
    pub deprecation: Option<Deprecation>,
    pub policy_change: Option<bool>,
    pub resource_change: Option<bool>,
}

impl Versioning {
    pub fn dependencies(&self) -> impl Iterator<Item = (&String, &VersionRange)> {
        self.dependencies.iter().flatten()
    }
}

/// Unknown manifest keys, kept verbatim. Keys are `section.key` for keys
/// inside a known section and bare names for unknown top-level sections.
pub type Extensions = BTreeMap<String, serde_yaml::Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct EcmContract {
    pub module_id: ModuleId,
    pub release_channel: Option<ReleaseChannel>,
    pub family: Option<String>,
    pub tags: Vec<String>,
    pub sig: Signature,
    pub beh: Behavior,
    pub res: Resources,
    pub perm: Permissions,
    pub rec: Recovery,
    pub ver: Versioning,
    pub extensions: Extensions,
}

impl EcmContract {
    pub fn new(module_id: ModuleId) -> Self {
        Self {
            module_id,
            release_channel: None,
            family: None,
            tags: Vec::new(),
            sig: Signature::default(),
            beh: Behavior::default(),
            res: Resources::default(),
            perm: Permissions::default(),
            rec: Recovery::default(),
            ver: Versioning::default(),
            extensions: Extensions::new(),
        }
    }

    pub fn version(&self) -> SemVer {
        self.ver.version.clone().unwrap_or_else(|| SemVer::new(0, 0, 0))
    }

    pub fn family(&self) -> &str {
        self.family.as_deref().unwrap_or_else(|| self.module_id.family_hint())
    }

    /// Whether a template slot tag selects this module.
    pub fn has_tag(&self, tag: &str) -> bool {
        self.family() == tag || self.tags.iter().any(|t| t == tag)
    }

    /// `module_id@version`, the key used by oracles and registries.
    pub fn key(&self) -> String {
        format!("{}@{}", self.module_id, self.version())
    }

    /// Timeout used for latency accounting; absent timeouts count as zero.
    pub fn timeout_ms(&self) -> u64 {
        self.sig.timeout_ms.unwrap_or(0) as u64
    }

    /// States this module leaves reachable for a successor's rollback.
    pub fn exported_states(&self) -> impl Iterator<Item = &str> {
        self.sig.state_objects.iter().map(String::as_str).chain(std::iter::once(self.rec.rollback_state.as_str()))
    }

    /// Every addressable dotted path of the contract, used to validate
    /// migration field maps.
    pub fn paths(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        let mut add = |p: String| {
            out.insert(p);
        };
        add("ecm.module_id".into());
        for f in self.sig.inputs() {
            add(format!("signature.input_schema.{}", f.name));
        }
        for f in self.sig.outputs() {
            add(format!("signature.output_schema.{}", f.name));
        }
        add("signature.coordinate_frame".into());
        add("signature.timeout_ms".into());
        for s in &self.sig.state_objects {
            add(format!("signature.state_objects.{s}"));
        }
        for p in self.beh.preconditions.iter() {
            add(format!("behavior.preconditions.{}", p.path()));
        }
        for p in self.beh.postconditions.iter() {
            add(format!("behavior.postconditions.{}", p.path()));
        }
        add("behavior.completion_semantics".into());
        for s in self.res.sensors() {
            add(format!("resources.required_sensors.{}", s.kind));
        }
        for a in self.res.actuators() {
            add(format!("resources.required_actuators.{}", a.kind));
        }
        add("resources.compute".into());
        for (cat, c) in self.perm.claims() {
            add(format!("permissions.{}.{}", cat, c.key));
        }
        for m in &self.rec.failure_modes {
            add(format!("recovery.failure_modes.{}", m.mode));
        }
        add("recovery.rollback_state".into());
        add("recovery.retry_policy".into());
        for (dep, _) in self.ver.dependencies() {
            add(format!("versioning.dependency_constraints.{dep}"));
        }
        out
    }
}
