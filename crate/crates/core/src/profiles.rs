//! Deployment context: embodiment and policy profiles, frame transforms and
//! live world state, plus the satisfiability primitives built on them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde_yaml::Value;

use crate::checker::{Dimension, Finding, Severity};
use crate::contract::{
    ActuatorSpec, AuditLevel, ComputeSpec, FieldSpec, PermBound, Permissions, Resources, SensorSpec,
};
use crate::manifest::{self, ManifestError, Section};
use crate::predicate::Predicate;
use crate::release::ReleaseChannel;
use crate::units::{Quantity, Unit};
use crate::version::{parse_version, SemVer};

/// Directed frame graph; availability is its reflexive-transitive closure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameTransformRegistry {
    pub edges: BTreeSet<(String, String)>,
}

impl FrameTransformRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, from: impl Into<String>, to: impl Into<String>) {
        self.edges.insert((from.into(), to.into()));
    }

    pub fn with(mut self, from: &str, to: &str) -> Self {
        self.register(from, to);
        self
    }

    /// Parses `from->to`.
    pub fn parse_edge(text: &str) -> Option<(String, String)> {
        let (a, b) = text.split_once("->")?;
        let (a, b) = (a.trim(), b.trim());
        (!a.is_empty() && !b.is_empty()).then(|| (a.to_string(), b.to_string()))
    }
}

pub fn frame_path_exists(from: &str, to: &str, reg: &FrameTransformRegistry) -> bool {
    if from == to {
        return true;
    }
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(frame) = queue.pop_front() {
        for (a, b) in &reg.edges {
            if a == frame && seen.insert(b.as_str()) {
                if b == to {
                    return true;
                }
                queue.push_back(b);
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodimentProfile {
    pub profile_id: String,
    pub sensors: Vec<SensorSpec>,
    pub actuators: Vec<ActuatorSpec>,
    pub compute_capacity: ComputeSpec,
    pub max_control_rate_hz: f64,
    pub runtime_version: SemVer,
    pub provided_services: BTreeMap<String, SemVer>,
    pub frame_transforms: FrameTransformRegistry,
}

impl EmbodimentProfile {
    /// A platform with nothing on it.
    pub fn empty(profile_id: &str) -> Self {
        Self {
            profile_id: profile_id.to_string(),
            sensors: Vec::new(),
            actuators: Vec::new(),
            compute_capacity: ComputeSpec::default(),
            max_control_rate_hz: 1.0,
            runtime_version: SemVer::new(0, 0, 0),
            provided_services: BTreeMap::new(),
            frame_transforms: FrameTransformRegistry::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProfile {
    pub profile_id: String,
    pub granted: BTreeMap<String, PermBound>,
    pub allowed_channels: BTreeSet<ReleaseChannel>,
    pub audit_mode: AuditLevel,
}

impl PolicyProfile {
    /// Grants nothing and admits every channel.
    pub fn empty(profile_id: &str) -> Self {
        Self {
            profile_id: profile_id.to_string(),
            granted: BTreeMap::new(),
            allowed_channels: ReleaseChannel::ALL.into_iter().collect(),
            audit_mode: AuditLevel::None,
        }
    }

    pub fn grant(mut self, key: &str, bound: PermBound) -> Self {
        self.granted.insert(key.to_string(), bound);
        self
    }
}

/// Direction of a quantity limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    /// The claim is a minimum the module keeps (proximity, clearance).
    AtLeast,
    /// The claim is a maximum the module may use (force, speed).
    AtMost,
}

pub fn limit_kind(key: &str) -> LimitKind {
    if key.contains("prox") || key.contains("clearance") || key.starts_with("min_") {
        LimitKind::AtLeast
    } else {
        LimitKind::AtMost
    }
}

/// Whether `claim` stays inside `granted` for permission `key`.
pub fn bound_within(key: &str, claim: &PermBound, granted: &PermBound) -> bool {
    match (claim, granted) {
        (PermBound::Flag(false), _) => true,
        (PermBound::Flag(true), PermBound::Flag(g)) => *g,
        (PermBound::Limit(c), PermBound::Limit(g)) => {
            let (c, g) = (c.normalized(), g.normalized());
            c.unit == g.unit
                && match limit_kind(key) {
                    LimitKind::AtLeast => c.magnitude >= g.magnitude,
                    LimitKind::AtMost => c.magnitude <= g.magnitude,
                }
        }
        (PermBound::Scope(c), PermBound::Scope(g)) => c == g,
        (PermBound::Scope(_), PermBound::Flag(g)) => *g,
        _ => false,
    }
}

/// One value in a world state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fact {
    Bool(bool),
    Quantity(Quantity),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldState {
    pub facts: BTreeMap<String, Fact>,
    pub available_locks: BTreeSet<String>,
    pub allocatable: ComputeSpec,
    pub live_sensors: BTreeSet<String>,
    /// Argument schema supplied by the caller (the reserved `__args` fact).
    pub args: Option<Vec<FieldSpec>>,
}

impl WorldState {
    pub fn with_fact(mut self, path: &str, fact: Fact) -> Self {
        self.facts.insert(path.to_string(), fact);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Holds,
    Fails,
    Unknown,
}

pub fn evaluate_predicate(p: &Predicate, w: &WorldState) -> Truth {
    let Some(fact) = w.facts.get(p.path()) else {
        return Truth::Unknown;
    };
    let verdict = |b: bool| if b { Truth::Holds } else { Truth::Fails };
    match (p, fact) {
        (Predicate::Atom { .. }, Fact::Bool(b)) => verdict(*b),
        (Predicate::Atom { .. }, Fact::Quantity(_)) => Truth::Unknown,
        (Predicate::Compare { op, value, .. }, Fact::Quantity(q)) => {
            let (q, v) = (q.normalized(), value.normalized());
            if q.unit == v.unit {
                verdict(op.holds(q.magnitude, v.magnitude))
            } else {
                Truth::Unknown
            }
        }
        (Predicate::Compare { .. }, Fact::Bool(_)) => Truth::Unknown,
    }
}

fn res_finding(code: &str, message: String) -> Finding {
    Finding::new(Dimension::Res, Severity::Blocking, code, message)
}

pub fn resource_satisfiable(res: &Resources, emb: &EmbodimentProfile) -> Vec<Finding> {
    let mut out = Vec::new();
    for need in res.sensors() {
        let same_kind: Vec<&SensorSpec> = emb
            .sensors
            .iter()
            .filter(|s| s.kind == need.kind && (need.mount.is_none() || s.mount == need.mount))
            .collect();
        if same_kind.is_empty() {
            out.push(
                res_finding("SENSOR_MISSING", format!("required sensor `{}` is not on {}", need.kind, emb.profile_id))
                    .at(format!("resources.required_sensors.{}", need.kind)),
            );
            continue;
        }
        if let Some(rate) = need.min_rate_hz {
            if !same_kind.iter().any(|s| s.min_rate_hz.is_some_and(|r| r >= rate)) {
                out.push(
                    res_finding("SENSOR_RATE", format!("sensor `{}` cannot deliver {rate} Hz", need.kind))
                        .at(format!("resources.required_sensors.{}", need.kind)),
                );
            }
        }
    }
    for need in res.actuators() {
        let same_kind: Vec<&ActuatorSpec> = emb.actuators.iter().filter(|a| a.kind == need.kind).collect();
        if same_kind.is_empty() {
            out.push(
                res_finding(
                    "ACTUATOR_MISSING",
                    format!("required actuator `{}` is not on {}", need.kind, emb.profile_id),
                )
                .at(format!("resources.required_actuators.{}", need.kind)),
            );
        } else if let Some(dof) = need.dof {
            if !same_kind.iter().any(|a| a.dof.is_some_and(|d| d >= dof)) {
                out.push(
                    res_finding("ACTUATOR_DOF", format!("actuator `{}` has fewer than {dof} DoF", need.kind))
                        .at(format!("resources.required_actuators.{}", need.kind)),
                );
            }
        }
    }
    if let Some(need) = &res.compute {
        for ((name, want), (_, have)) in need.components().into_iter().zip(emb.compute_capacity.components()) {
            if want > have {
                out.push(
                    res_finding("COMPUTE_EXCEEDED", format!("{name} {want} exceeds capacity {have}"))
                        .at(format!("resources.compute.{name}")),
                );
            }
        }
    }
    if let Some(hz) = res.control_frequency_hz {
        if hz > emb.max_control_rate_hz {
            out.push(
                res_finding(
                    "CONTROL_RATE_EXCEEDED",
                    format!("control rate {hz} Hz exceeds platform maximum {} Hz", emb.max_control_rate_hz),
                )
                .at("resources.control_frequency_hz"),
            );
        }
    }
    out
}

pub fn permission_grantable(perm: &Permissions, pol: &PolicyProfile) -> Vec<Finding> {
    let mut out = Vec::new();
    for (category, claim) in perm.claims() {
        let ok = match pol.granted.get(&claim.key) {
            Some(granted) => bound_within(&claim.key, &claim.bound, granted),
            None => claim.bound == PermBound::Flag(false),
        };
        if !ok {
            let granted = pol.granted.get(&claim.key).map_or("nothing".to_string(), |g| g.to_string());
            out.push(
                Finding::new(
                    Dimension::Perm,
                    Severity::Blocking,
                    "PERM_GAP",
                    format!(
                        "claim {}: {} is not covered by policy {} (grants {granted})",
                        claim.key, claim.bound, pol.profile_id
                    ),
                )
                .at(format!("permissions.{category}.{}", claim.key))
                .suggest(format!("grant `{}` in the policy profile", claim.key)),
            );
        }
    }
    if perm.audit_req > pol.audit_mode {
        out.push(
            Finding::new(
                Dimension::Perm,
                Severity::Blocking,
                "AUDIT_SHORTFALL",
                format!("audit level {} required, policy runs {}", perm.audit_req, pol.audit_mode),
            )
            .at("permissions.audit_req")
            .suggest(format!("set policy audit_mode to {}", perm.audit_req)),
        );
    }
    out
}

// ---- profile documents ----

fn parse_embodiment(v: &Value) -> manifest::Result<EmbodimentProfile> {
    let mut sec = Section::new("embodiment", v)?;
    let mut emb = EmbodimentProfile::empty("embodiment");
    if let Some((p, v)) = sec.take(&["profile_id"]) {
        emb.profile_id = manifest::identifier(v, &p)?;
    }
    if let Some((p, v)) = sec.take(&["sensors"]) {
        emb.sensors = manifest::seq_of(v, &p, manifest::sensor)?;
    }
    if let Some((p, v)) = sec.take(&["actuators"]) {
        emb.actuators = manifest::seq_of(v, &p, manifest::actuator)?;
    }
    if let Some((p, v)) = sec.take(&["compute", "compute_capacity"]) {
        emb.compute_capacity = manifest::compute(v, &p)?;
    }
    if let Some((p, v)) = sec.take(&["max_control_rate_hz", "control_rate_hz"]) {
        emb.max_control_rate_hz = manifest::quantity_in(v, &p, Unit::Hertz)?;
        if emb.max_control_rate_hz <= 0.0 {
            return Err(manifest::schema(p, "control rate must be positive"));
        }
    }
    if let Some((p, v)) = sec.take(&["runtime_version", "runtime"]) {
        emb.runtime_version =
            parse_version(&manifest::scalar_string(v, &p)?).map_err(|e| manifest::schema(&p, e.to_string()))?;
    }
    if let Some((p, v)) = sec.take(&["services", "provided_services"]) {
        let services = Section::new(&p, v)?;
        for (k, ver) in services.remaining() {
            let vp = format!("{p}.{k}");
            let parsed =
                parse_version(&manifest::scalar_string(ver, &vp)?).map_err(|e| manifest::schema(&vp, e.to_string()))?;
            emb.provided_services.insert(k.to_string(), parsed);
        }
    }
    if let Some((p, v)) = sec.take(&["frames", "frame_transforms"]) {
        for edge in manifest::string_list(v, &p)? {
            let (a, b) = FrameTransformRegistry::parse_edge(&edge)
                .ok_or_else(|| manifest::schema(&p, format!("frame edge `{edge}` must look like `from->to`")))?;
            emb.frame_transforms.register(a, b);
        }
    }
    if let Some((k, _)) = sec.remaining().first() {
        return Err(manifest::schema(sec.path(k), "unknown embodiment key"));
    }
    Ok(emb)
}

fn parse_policy(v: &Value) -> manifest::Result<PolicyProfile> {
    let mut sec = Section::new("policy", v)?;
    let mut pol = PolicyProfile::empty("policy");
    if let Some((p, v)) = sec.take(&["profile_id"]) {
        pol.profile_id = manifest::identifier(v, &p)?;
    }
    if let Some((p, v)) = sec.take(&["granted"]) {
        let granted = Section::new(&p, v)?;
        for (k, b) in granted.remaining() {
            pol.granted.insert(k.to_string(), manifest::perm_bound(b, &format!("{p}.{k}"))?);
        }
    }
    if let Some((p, v)) = sec.take(&["allowed_channels"]) {
        pol.allowed_channels = manifest::string_list(v, &p)?
            .iter()
            .map(|c| c.parse().map_err(|e: String| manifest::schema(&p, e)))
            .collect::<manifest::Result<_>>()?;
    }
    if let Some((p, v)) = sec.take(&["audit_mode"]) {
        pol.audit_mode = manifest::keyword(v, &p)?;
    }
    if let Some((k, _)) = sec.remaining().first() {
        return Err(manifest::schema(sec.path(k), "unknown policy key"));
    }
    Ok(pol)
}

/// Contents of a `.profile.yaml` document; either section may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDocument {
    pub embodiment: Option<EmbodimentProfile>,
    pub policy: Option<PolicyProfile>,
}

pub fn parse_profile(text: &str) -> Result<ProfileDocument, ManifestError> {
    let doc: Value = serde_yaml::from_str(text)
        .map_err(|e| ManifestError::Parse { line: e.location().map_or(0, |l| l.line()), message: e.to_string() })?;
    let mut top = Section::new("", &doc).map_err(|_| manifest::schema("/", "profile must be a mapping"))?;
    let embodiment = top.take(&["embodiment"]).map(|(_, v)| parse_embodiment(v)).transpose()?;
    let policy = top.take(&["policy"]).map(|(_, v)| parse_policy(v)).transpose()?;
    if let Some((k, _)) = top.remaining().first() {
        return Err(manifest::schema(*k, "unknown profile section"));
    }
    if embodiment.is_none() && policy.is_none() {
        return Err(manifest::schema("/", "profile needs an `embodiment` or `policy` section"));
    }
    Ok(ProfileDocument { embodiment, policy })
}

pub fn load_profile(path: &Path) -> Result<ProfileDocument, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_profile(&text).map_err(|e| crate::Error::Manifest { path: path.display().to_string(), source: e })
}

fn fact(v: &Value, path: &str) -> manifest::Result<Fact> {
    match v {
        Value::Bool(b) => Ok(Fact::Bool(*b)),
        Value::Number(_) => Ok(Fact::Quantity(Quantity::dimensionless(manifest::number(v, path)?))),
        Value::String(s) => Quantity::parse(s).map(Fact::Quantity).map_err(|e| manifest::schema(path, e.to_string())),
        _ => Err(manifest::schema(path, "expected a flag or quantity")),
    }
}

/// Parses a `.world.yaml` document: `facts` (with the reserved `__args`
/// field list), `available_locks`, `allocatable` and `live_sensors`.
pub fn parse_world(text: &str) -> Result<WorldState, ManifestError> {
    let doc: Value = serde_yaml::from_str(text)
        .map_err(|e| ManifestError::Parse { line: e.location().map_or(0, |l| l.line()), message: e.to_string() })?;
    world_from_value(&doc, "world")
}

pub fn world_from_value(doc: &Value, name: &str) -> Result<WorldState, ManifestError> {
    let mut sec = Section::new(name, doc)?;
    let mut w = WorldState::default();
    if let Some((p, v)) = sec.take(&["facts"]) {
        let facts = Section::new(&p, v)?;
        for (k, val) in facts.remaining() {
            let fp = format!("{p}.{k}");
            if k == "__args" {
                w.args = Some(manifest::fields(val, &fp, None)?);
            } else {
                w.facts.insert(k.to_string(), fact(val, &fp)?);
            }
        }
    }
    if let Some((p, v)) = sec.take(&["available_locks"]) {
        w.available_locks = manifest::string_list(v, &p)?.into_iter().collect();
    }
    if let Some((p, v)) = sec.take(&["allocatable"]) {
        w.allocatable = manifest::compute(v, &p)?;
    }
    if let Some((p, v)) = sec.take(&["live_sensors"]) {
        w.live_sensors = manifest::string_list(v, &p)?.into_iter().collect();
    }
    if let Some((k, _)) = sec.remaining().first() {
        return Err(manifest::schema(sec.path(k), "unknown world-state key"));
    }
    Ok(w)
}

pub fn load_world(path: &Path) -> Result<WorldState, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_world(&text).map_err(|e| crate::Error::Manifest { path: path.display().to_string(), source: e })
}
