//! `.ecm.yaml` manifest reading and writing.
//!
//! The document has seven top-level sections (`ecm`, `signature`,
//! `behavior`, `resources`, `permissions`, `recovery`, `versioning`).
//! Several shorthands are accepted on input:
//!
//! * fields as `{name: Type}`; spatial fields without a frame take the
//!   signature's `coordinate_frame`
//! * sensors as `kind` or `kind@30Hz`
//! * flat permission keys directly under `permissions:` are physical claims
//! * `retry_policy: retry_once` for a strategy with its default attempt count
//! * escalation entries as `"3 failures -> human_takeover"`
//!
//! Keys that this module does not know about are kept in
//! [`EcmContract::extensions`] and written back unchanged.
//!
//! A few required fields have conservative defaults when the section is
//! present but the key is omitted: `timeout_ms` (30000), `compute`
//! (1 core, no GPU, 1 GB), `escalation` (`3 failures -> human_takeover`)
//! and `policy_change_marker` (false).

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::contract::*;
use crate::predicate::{parse_predicate, Predicate, PredicateError};
use crate::release::{CompatibilityClass, ReleaseChannel};
use crate::units::{Quantity, Unit};
use crate::version::{parse_version, VersionRange};

pub const DEFAULT_TIMEOUT_MS: u32 = 30_000;
pub const DEFAULT_ESCALATION: &str = "3 failures -> human_takeover";

pub const SECTIONS: [&str; 7] = ["ecm", "signature", "behavior", "resources", "permissions", "recovery", "versioning"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Predicate {
        path: String,
        #[source]
        source: PredicateError,
    },
}

pub(crate) type Result<T> = std::result::Result<T, ManifestError>;

pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Schema { path: path.into(), message: message.into() }
}

pub fn default_compute() -> ComputeSpec {
    ComputeSpec::new(1.0, 0.0, 1.0)
}

pub fn default_escalation() -> Vec<Escalation> {
    vec![parse_escalation(DEFAULT_ESCALATION, "recovery.escalation").expect("default escalation parses")]
}

/// Keys of one mapping, tracking which ones were consumed.
pub(crate) struct Section<'a> {
    name: String,
    map: &'a Mapping,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    pub(crate) fn new(name: &str, value: &'a Value) -> Result<Self> {
        let map = match value {
            Value::Mapping(m) => m,
            Value::Null => {
                static EMPTY: std::sync::OnceLock<Mapping> = std::sync::OnceLock::new();
                EMPTY.get_or_init(Mapping::new)
            }
            _ => return Err(schema(name, "expected a mapping")),
        };
        for key in map.keys() {
            if !key.is_string() {
                return Err(schema(name, format!("non-string key {key:?}")));
            }
        }
        Ok(Self { name: name.to_string(), map, used: BTreeSet::new() })
    }

    pub(crate) fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    pub(crate) fn take(&mut self, keys: &[&str]) -> Option<(String, &'a Value)> {
        for key in keys {
            if let Some(v) = self.map.get(*key) {
                self.used.insert(key.to_string());
                return Some((self.path(key), v));
            }
        }
        None
    }

    pub(crate) fn remaining(&self) -> Vec<(&'a str, &'a Value)> {
        self.map
            .iter()
            .filter_map(|(k, v)| k.as_str().map(|k| (k, v)))
            .filter(|(k, _)| !self.used.contains(*k))
            .collect()
    }

    fn stash_rest(&self, ext: &mut Extensions) {
        for (k, v) in self.remaining() {
            ext.insert(format!("{}.{}", self.name, k), v.clone());
        }
    }
}

pub(crate) fn scalar_string(v: &Value, path: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(schema(path, "expected a scalar")),
    }
}

pub(crate) fn identifier(v: &Value, path: &str) -> Result<String> {
    let s = scalar_string(v, path)?;
    if s.trim().is_empty() {
        return Err(schema(path, "empty identifier"));
    }
    Ok(s.trim().to_string())
}

pub(crate) fn string_list(v: &Value, path: &str) -> Result<Vec<String>> {
    match v {
        Value::Sequence(items) => {
            items.iter().enumerate().map(|(i, item)| identifier(item, &format!("{path}[{i}]"))).collect()
        }
        Value::Null => Ok(Vec::new()),
        other => Ok(vec![identifier(other, path)?]),
    }
}

pub(crate) fn number(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| schema(path, "expected a number")),
        Value::String(s) => s.trim().parse().map_err(|_| schema(path, "expected a number")),
        _ => Err(schema(path, "expected a number")),
    }
}

pub(crate) fn quantity_in(v: &Value, path: &str, unit: Unit) -> Result<f64> {
    match v {
        Value::Number(_) => number(v, path),
        Value::String(s) => {
            let q = Quantity::parse(s).map_err(|e| schema(path, e.to_string()))?;
            if q.unit == unit || q.unit == Unit::Dimensionless {
                Ok(q.magnitude)
            } else {
                Err(schema(path, format!("expected a quantity in {unit}, got {}", q.unit)))
            }
        }
        _ => Err(schema(path, "expected a quantity")),
    }
}

pub(crate) fn boolean(v: &Value, path: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| schema(path, "expected true or false"))
}

pub(crate) fn keyword<T: FromStr<Err = String>>(v: &Value, path: &str) -> Result<T> {
    let s = scalar_string(v, path)?;
    s.parse().map_err(|e: String| schema(path, e))
}

fn predicates(v: &Value, path: &str) -> Result<Vec<Predicate>> {
    string_list(v, path)?
        .iter()
        .map(|text| parse_predicate(text).map_err(|source| ManifestError::Predicate { path: path.to_string(), source }))
        .collect()
}

fn parse_escalation(text: &str, path: &str) -> Result<Escalation> {
    let (lhs, target) = text
        .split_once("->")
        .or_else(|| text.split_once('→'))
        .ok_or_else(|| schema(path, format!("escalation `{text}` needs `condition -> target`")))?;
    let target = target.trim();
    if target.is_empty() {
        return Err(schema(path, "escalation target is empty"));
    }
    let lhs = lhs.trim();
    let count =
        lhs.strip_suffix("failures").or_else(|| lhs.strip_suffix("failure")).and_then(|n| n.trim().parse::<u32>().ok());
    let trigger = match count {
        Some(n) => EscalationTrigger::Count(n),
        None => EscalationTrigger::Condition(
            parse_predicate(lhs).map_err(|source| ManifestError::Predicate { path: path.to_string(), source })?,
        ),
    };
    Ok(Escalation { trigger, target: target.to_string() })
}

pub(crate) fn fields(v: &Value, path: &str, coord_frame: Option<&str>) -> Result<Vec<FieldSpec>> {
    let Value::Sequence(items) = v else {
        if v.is_null() {
            return Ok(Vec::new());
        }
        return Err(schema(path, "expected a list of fields"));
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let ipath = format!("{path}[{i}]");
        let Value::Mapping(m) = item else {
            return Err(schema(&ipath, "expected `{name: Type}` or a field mapping"));
        };
        let detail = |m: &Mapping, name: String| -> Result<FieldSpec> {
            let get = |k: &str| m.get(k);
            let dtype = get("type").or_else(|| get("dtype")).ok_or_else(|| schema(&ipath, "field without a type"))?;
            let mut f = FieldSpec::new(name, keyword(dtype, &ipath)?);
            if let Some(u) = get("unit") {
                let u: Unit = scalar_string(u, &ipath)?
                    .parse()
                    .map_err(|e: crate::units::UnitError| schema(&ipath, e.to_string()))?;
                f.unit = Some(u.canonical().0);
            }
            if let Some(fr) = get("frame") {
                f.frame = Some(identifier(fr, &ipath)?);
            }
            Ok(f)
        };
        let mut f = if m.contains_key("type") || m.contains_key("dtype") {
            let name = m.get("name").ok_or_else(|| schema(&ipath, "field without a name"))?;
            detail(m, identifier(name, &ipath)?)?
        } else if m.len() == 1 {
            let (k, val) = m.iter().next().expect("one entry");
            let name = identifier(k, &ipath)?;
            match val {
                Value::Mapping(inner) => detail(inner, name)?,
                other => FieldSpec::new(name, keyword(other, &ipath)?),
            }
        } else {
            return Err(schema(&ipath, "expected `{name: Type}` or a field mapping"));
        };
        if f.dtype.is_spatial() && f.frame.is_none() {
            f.frame = coord_frame.map(str::to_string);
        }
        out.push(f);
    }
    Ok(out)
}

pub(crate) fn sensor(v: &Value, path: &str) -> Result<SensorSpec> {
    match v {
        Value::Mapping(m) => {
            let kind = m.get("kind").ok_or_else(|| schema(path, "sensor without a kind"))?;
            let mut s = SensorSpec::kind(identifier(kind, path)?);
            if let Some(mount) = m.get("mount") {
                s.mount = Some(identifier(mount, path)?);
            }
            if let Some(rate) = m.get("min_rate_hz").or_else(|| m.get("rate")) {
                s.min_rate_hz = Some(quantity_in(rate, path, Unit::Hertz)?);
            }
            Ok(s)
        }
        other => {
            let text = identifier(other, path)?;
            match text.split_once('@') {
                Some((kind, rate)) => Ok(SensorSpec {
                    kind: kind.trim().to_string(),
                    mount: None,
                    min_rate_hz: Some(quantity_in(&Value::String(rate.to_string()), path, Unit::Hertz)?),
                }),
                None => Ok(SensorSpec::kind(text)),
            }
        }
    }
}

pub(crate) fn actuator(v: &Value, path: &str) -> Result<ActuatorSpec> {
    match v {
        Value::Mapping(m) => {
            let kind = m.get("kind").ok_or_else(|| schema(path, "actuator without a kind"))?;
            let mut a = ActuatorSpec::kind(identifier(kind, path)?);
            if let Some(dof) = m.get("dof") {
                a.dof = Some(number(dof, path)? as u32);
            }
            if let Some(mode) = m.get("control_mode") {
                a.control_mode = Some(identifier(mode, path)?);
            }
            Ok(a)
        }
        other => Ok(ActuatorSpec::kind(identifier(other, path)?)),
    }
}

pub(crate) fn seq_of<T>(v: &Value, path: &str, item: impl Fn(&Value, &str) -> Result<T>) -> Result<Vec<T>> {
    match v {
        Value::Sequence(items) => items.iter().enumerate().map(|(i, x)| item(x, &format!("{path}[{i}]"))).collect(),
        Value::Null => Ok(Vec::new()),
        other => Ok(vec![item(other, path)?]),
    }
}

pub(crate) fn compute(v: &Value, path: &str) -> Result<ComputeSpec> {
    let sec = Section::new(path, v)?;
    let mut c = ComputeSpec::default();
    for (key, val) in sec.remaining() {
        let p = format!("{path}.{key}");
        let amount = match key {
            "cpu_cores" | "cpu" => quantity_in(val, &p, Unit::Core)?,
            "gpu_gb" | "gpu" => quantity_in(val, &p, Unit::Gigabyte)?,
            "mem_gb" | "mem" => quantity_in(val, &p, Unit::Gigabyte)?,
            _ => return Err(schema(p, "unknown compute component")),
        };
        if amount < 0.0 {
            return Err(schema(p, "compute amounts must be non-negative"));
        }
        match key {
            "cpu_cores" | "cpu" => c.cpu_cores = amount,
            "gpu_gb" | "gpu" => c.gpu_gb = amount,
            _ => c.mem_gb = amount,
        }
    }
    Ok(c)
}

pub fn perm_bound(v: &Value, path: &str) -> Result<PermBound> {
    match v {
        Value::Bool(b) => Ok(PermBound::Flag(*b)),
        Value::Number(_) => Ok(PermBound::Limit(Quantity::dimensionless(number(v, path)?))),
        Value::String(s) => match Quantity::parse(s) {
            Ok(q) => Ok(PermBound::Limit(q)),
            Err(_) if crate::predicate::is_dotted_path(s.trim()) => Ok(PermBound::Scope(s.trim().to_string())),
            Err(e) => Err(schema(path, e.to_string())),
        },
        _ => Err(schema(path, "expected a flag, quantity or scope")),
    }
}

fn claims(v: &Value, path: &str) -> Result<Vec<PermClaim>> {
    let sec = Section::new(path, v)?;
    sec.remaining()
        .into_iter()
        .map(|(k, val)| Ok(PermClaim { key: k.to_string(), bound: perm_bound(val, &format!("{path}.{k}"))? }))
        .collect()
}

fn retry_policy(v: &Value, path: &str) -> Result<RetryPolicy> {
    let policy = match v {
        Value::Mapping(m) => {
            let strategy: RetryStrategy = match m.get("strategy") {
                Some(s) => keyword(s, path)?,
                None => return Err(schema(path, "retry policy without a strategy")),
            };
            let max = match m.get("max").or_else(|| m.get("max_attempts")) {
                Some(n) => number(n, path)?,
                None => strategy.default_attempts() as f64,
            };
            if max < 0.0 || max.fract() != 0.0 {
                return Err(schema(path, "max attempts must be a non-negative integer"));
            }
            RetryPolicy { max_attempts: max as u32, strategy }
        }
        other => {
            let strategy: RetryStrategy = keyword(other, path)?;
            RetryPolicy { max_attempts: strategy.default_attempts(), strategy }
        }
    };
    if policy.max_attempts > 10 {
        return Err(schema(path, "max attempts above 10"));
    }
    Ok(policy)
}

fn failure_modes(v: &Value, path: &str) -> Result<Vec<FailureMode>> {
    let mut out = Vec::new();
    let items: Vec<&Value> = match v {
        Value::Sequence(items) => items.iter().collect(),
        Value::Null => Vec::new(),
        other => vec![other],
    };
    for item in items {
        match item {
            Value::Mapping(m) => {
                for (k, sev) in m {
                    out.push(FailureMode { mode: identifier(k, path)?, severity: keyword(sev, path)? });
                }
            }
            other => {
                let text = identifier(other, path)?;
                let mode = match text.split_once(':') {
                    Some((mode, sev)) => FailureMode {
                        mode: mode.trim().to_string(),
                        severity: sev.parse().map_err(|e: String| schema(path, e))?,
                    },
                    None => FailureMode { mode: text, severity: FailureSeverity::Transient },
                };
                out.push(mode);
            }
        }
    }
    Ok(out)
}

fn deprecation(v: &Value, path: &str) -> Result<Deprecation> {
    let mut sec = Section::new(path, v)?;
    let mut d = Deprecation::default();
    if let Some((p, f)) = sec.take(&["flag", "deprecated"]) {
        d.flag = boolean(f, &p)?;
    }
    if let Some((p, date)) = sec.take(&["end_of_support"]) {
        let text = scalar_string(date, &p)?;
        d.end_of_support =
            Some(chrono::NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|e| schema(&p, e.to_string()))?);
    }
    if let Some((p, r)) = sec.take(&["migration_ref"]) {
        d.migration_ref = Some(identifier(r, &p)?);
    }
    if let Some((k, _)) = sec.remaining().first() {
        return Err(schema(sec.path(k), "unknown deprecation key"));
    }
    Ok(d)
}

fn yaml_line(err: &serde_yaml::Error) -> usize {
    err.location().map_or(0, |l| l.line())
}

/// Parses a manifest document into a contract.
pub fn parse_manifest(text: &str) -> Result<EcmContract> {
    let doc: Value =
        serde_yaml::from_str(text).map_err(|e| ManifestError::Parse { line: yaml_line(&e), message: e.to_string() })?;
    let top = Section::new("", &doc).map_err(|_| schema("/", "manifest must be a mapping"))?;
    let mut extensions = Extensions::new();
    let section =
        |name: &str| -> Result<&Value> { top.map.get(name).ok_or_else(|| schema(name, "missing required section")) };
    for name in SECTIONS {
        section(name)?;
    }
    for (k, v) in top.remaining() {
        if !SECTIONS.contains(&k) {
            extensions.insert(k.to_string(), v.clone());
        }
    }

    // ecm
    let mut ecm = Section::new("ecm", section("ecm")?)?;
    let (p, id) = ecm.take(&["module_id"]).ok_or_else(|| schema("ecm.module_id", "missing module_id"))?;
    let module_id = ModuleId::new(scalar_string(id, &p)?).map_err(|e| schema(&p, e))?;
    let mut c = EcmContract::new(module_id);
    if let Some((p, v)) = ecm.take(&["version"]) {
        c.ver.version = Some(parse_version(&scalar_string(v, &p)?).map_err(|e| schema(&p, e.to_string()))?);
    }
    if let Some((p, v)) = ecm.take(&["release_channel"]) {
        c.release_channel = Some(keyword::<ReleaseChannel>(v, &p)?);
    }
    if let Some((p, v)) = ecm.take(&["compatibility_class", "compat_level"]) {
        c.ver.compat_level = Some(keyword::<CompatibilityClass>(v, &p)?);
    }
    if let Some((p, v)) = ecm.take(&["family"]) {
        c.family = Some(identifier(v, &p)?);
    }
    if let Some((p, v)) = ecm.take(&["tags"]) {
        c.tags = string_list(v, &p)?;
    }
    ecm.stash_rest(&mut extensions);

    // signature
    let mut sig = Section::new("signature", section("signature")?)?;
    if let Some((p, v)) = sig.take(&["coordinate_frame", "coord_frame"]) {
        c.sig.coord_frame = Some(identifier(v, &p)?);
    }
    let frame = c.sig.coord_frame.clone();
    if let Some((p, v)) = sig.take(&["input_schema"]) {
        c.sig.input_schema = Some(fields(v, &p, frame.as_deref())?);
    }
    if let Some((p, v)) = sig.take(&["output_schema"]) {
        c.sig.output_schema = Some(fields(v, &p, frame.as_deref())?);
    }
    c.sig.timeout_ms = Some(DEFAULT_TIMEOUT_MS);
    if let Some((p, v)) = sig.take(&["timeout_ms"]) {
        let ms = quantity_in(v, &p, Unit::Millisecond)?;
        if ms <= 0.0 || ms.fract() != 0.0 || ms > u32::MAX as f64 {
            return Err(schema(p, "timeout must be a positive integer number of milliseconds"));
        }
        c.sig.timeout_ms = Some(ms as u32);
    }
    if let Some((p, v)) = sig.take(&["invocation_mode"]) {
        c.sig.invocation_mode = Some(keyword(v, &p)?);
    }
    if let Some((p, v)) = sig.take(&["state_objects"]) {
        c.sig.state_objects = string_list(v, &p)?;
    }
    sig.stash_rest(&mut extensions);

    // behavior
    let mut beh = Section::new("behavior", section("behavior")?)?;
    if let Some((p, v)) = beh.take(&["preconditions"]) {
        c.beh.preconditions = predicates(v, &p)?;
    }
    if let Some((p, v)) = beh.take(&["postconditions"]) {
        c.beh.postconditions = predicates(v, &p)?;
    }
    if let Some((p, v)) = beh.take(&["invariants"]) {
        c.beh.invariants = predicates(v, &p)?;
    }
    if let Some((p, v)) = beh.take(&["semantic_assumptions"]) {
        c.beh.semantic_assumptions = string_list(v, &p)?;
    }
    if let Some((p, v)) = beh.take(&["completion_semantics", "handoff_semantics"]) {
        c.beh.handoff = Some(keyword(v, &p)?);
    }
    if let Some((p, v)) = beh.take(&["required_handoff"]) {
        c.beh.required_handoff = Some(keyword(v, &p)?);
    }
    beh.stash_rest(&mut extensions);

    // resources
    let mut res = Section::new("resources", section("resources")?)?;
    if let Some((p, v)) = res.take(&["required_sensors", "sensors"]) {
        c.res.sensors = Some(seq_of(v, &p, sensor)?);
    }
    if let Some((p, v)) = res.take(&["required_actuators", "actuators"]) {
        c.res.actuators = Some(seq_of(v, &p, actuator)?);
    }
    c.res.compute = Some(default_compute());
    if let Some((p, v)) = res.take(&["compute"]) {
        c.res.compute = Some(compute(v, &p)?);
    }
    if let Some((p, v)) = res.take(&["control_frequency_hz"]) {
        let hz = quantity_in(v, &p, Unit::Hertz)?;
        if hz <= 0.0 {
            return Err(schema(p, "control frequency must be positive"));
        }
        c.res.control_frequency_hz = Some(hz);
    }
    if let Some((p, v)) = res.take(&["exclusive_resource_lock", "exclusive_locks"]) {
        c.res.exclusive_locks = string_list(v, &p)?;
    }
    if let Some((p, v)) = res.take(&["comm"]) {
        c.res.comm = string_list(v, &p)?;
    }
    res.stash_rest(&mut extensions);

    // permissions: grouped keys first, remaining flat keys are physical claims
    let mut perm = Section::new("permissions", section("permissions")?)?;
    let mut physical = None;
    if let Some((p, v)) = perm.take(&["physical_perms"]) {
        physical = Some(claims(v, &p)?);
    }
    if let Some((p, v)) = perm.take(&["data_perms"]) {
        c.perm.data = claims(v, &p)?;
    }
    if let Some((p, v)) = perm.take(&["network_perms"]) {
        c.perm.network = claims(v, &p)?;
    }
    if let Some((p, v)) = perm.take(&["operational_perms"]) {
        c.perm.operational = claims(v, &p)?;
    }
    if let Some((p, v)) = perm.take(&["audit_req"]) {
        c.perm.audit_req = keyword(v, &p)?;
    }
    for (k, v) in perm.remaining() {
        let claim = PermClaim { key: k.to_string(), bound: perm_bound(v, &perm.path(k))? };
        physical.get_or_insert_with(Vec::new).push(claim);
    }
    c.perm.physical = physical;

    // recovery
    let mut rec = Section::new("recovery", section("recovery")?)?;
    if let Some((p, v)) = rec.take(&["failure_modes"]) {
        c.rec.failure_modes = failure_modes(v, &p)?;
    }
    if let Some((p, v)) = rec.take(&["rollback_state"]) {
        c.rec.rollback_state = identifier(v, &p)?;
    }
    if let Some((p, v)) = rec.take(&["retry_policy"]) {
        c.rec.retry_policy = Some(retry_policy(v, &p)?);
    }
    if let Some((p, v)) = rec.take(&["safe_stop_action"]) {
        c.rec.safe_stop_action = Some(identifier(v, &p)?);
    }
    c.rec.escalation = Some(default_escalation());
    if let Some((p, v)) = rec.take(&["escalation"]) {
        let entries = string_list(v, &p)?;
        c.rec.escalation = Some(entries.iter().map(|e| parse_escalation(e, &p)).collect::<Result<_>>()?);
    }
    rec.stash_rest(&mut extensions);

    // versioning
    let mut ver = Section::new("versioning", section("versioning")?)?;
    if let Some((p, v)) = ver.take(&["dependency_constraints", "dependencies"]) {
        let deps = Section::new(&p, v)?;
        let mut map = BTreeMap::new();
        for (k, range) in deps.remaining() {
            let rp = format!("{p}.{k}");
            let text = scalar_string(range, &rp)?;
            map.insert(k.to_string(), VersionRange::parse(&text).map_err(|e| schema(&rp, e.to_string()))?);
        }
        c.ver.dependencies = Some(map);
    }
    if let Some((p, v)) = ver.take(&["deprecation"]) {
        c.ver.deprecation = Some(deprecation(v, &p)?);
    }
    c.ver.policy_change = Some(false);
    if let Some((p, v)) = ver.take(&["policy_change_marker", "policy_change"]) {
        c.ver.policy_change = Some(boolean(v, &p)?);
    }
    if let Some((p, v)) = ver.take(&["resource_change_marker", "resource_change"]) {
        c.ver.resource_change = Some(boolean(v, &p)?);
    }
    ver.stash_rest(&mut extensions);

    c.extensions = extensions;
    Ok(c)
}

fn s(text: impl Into<String>) -> Value {
    Value::String(text.into())
}

fn f(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        Value::Number((x as i64).into())
    } else {
        Value::Number(x.into())
    }
}

fn list<T>(items: &[T], each: impl Fn(&T) -> Value) -> Value {
    Value::Sequence(items.iter().map(each).collect())
}

fn field_value(field: &FieldSpec, coord_frame: Option<&str>) -> Value {
    let inherited = if field.dtype.is_spatial() { coord_frame } else { None };
    let mut m = Mapping::new();
    if field.unit.is_none() && field.frame.as_deref() == inherited {
        m.insert(s(&field.name), s(field.dtype.as_str()));
        return Value::Mapping(m);
    }
    m.insert(s("name"), s(&field.name));
    m.insert(s("type"), s(field.dtype.as_str()));
    if let Some(u) = field.unit {
        m.insert(s("unit"), s(u.symbol()));
    }
    if let Some(fr) = &field.frame {
        m.insert(s("frame"), s(fr));
    }
    Value::Mapping(m)
}

fn sensor_value(sensor: &SensorSpec) -> Value {
    match (&sensor.mount, sensor.min_rate_hz) {
        (None, None) => s(&sensor.kind),
        (None, Some(hz)) => s(format!("{}@{}Hz", sensor.kind, hz)),
        (Some(mount), rate) => {
            let mut m = Mapping::new();
            m.insert(s("kind"), s(&sensor.kind));
            m.insert(s("mount"), s(mount));
            if let Some(hz) = rate {
                m.insert(s("min_rate_hz"), f(hz));
            }
            Value::Mapping(m)
        }
    }
}

fn actuator_value(a: &ActuatorSpec) -> Value {
    if a.dof.is_none() && a.control_mode.is_none() {
        return s(&a.kind);
    }
    let mut m = Mapping::new();
    m.insert(s("kind"), s(&a.kind));
    if let Some(d) = a.dof {
        m.insert(s("dof"), Value::Number(d.into()));
    }
    if let Some(mode) = &a.control_mode {
        m.insert(s("control_mode"), s(mode));
    }
    Value::Mapping(m)
}

fn bound_value(b: &PermBound) -> Value {
    match b {
        PermBound::Flag(v) => Value::Bool(*v),
        PermBound::Limit(q) if q.unit == Unit::Dimensionless => f(q.magnitude),
        PermBound::Limit(q) => s(q.to_string()),
        PermBound::Scope(scope) => s(scope),
    }
}

fn claims_value(claims: &[PermClaim]) -> Value {
    let mut m = Mapping::new();
    for c in claims {
        m.insert(s(&c.key), bound_value(&c.bound));
    }
    Value::Mapping(m)
}

fn append_extensions(section: &str, m: &mut Mapping, ext: &Extensions) {
    let prefix = format!("{section}.");
    for (k, v) in ext {
        if let Some(key) = k.strip_prefix(&prefix) {
            m.insert(s(key), v.clone());
        }
    }
}

/// Builds the document tree for a contract. Absent optional fields are
/// omitted.
pub fn manifest_value(c: &EcmContract) -> Value {
    let ext = &c.extensions;
    let mut ecm = Mapping::new();
    ecm.insert(s("module_id"), s(c.module_id.as_str()));
    if let Some(v) = &c.ver.version {
        ecm.insert(s("version"), s(v.to_string()));
    }
    if let Some(ch) = c.release_channel {
        ecm.insert(s("release_channel"), s(ch.manifest_name()));
    }
    if let Some(cl) = c.ver.compat_level {
        ecm.insert(s("compatibility_class"), s(cl.manifest_name()));
    }
    if let Some(fam) = &c.family {
        ecm.insert(s("family"), s(fam));
    }
    if !c.tags.is_empty() {
        ecm.insert(s("tags"), list(&c.tags, |t| s(t)));
    }
    append_extensions("ecm", &mut ecm, ext);

    let frame = c.sig.coord_frame.as_deref();
    let mut sig = Mapping::new();
    if let Some(fields) = &c.sig.input_schema {
        sig.insert(s("input_schema"), list(fields, |x| field_value(x, frame)));
    }
    if let Some(fields) = &c.sig.output_schema {
        sig.insert(s("output_schema"), list(fields, |x| field_value(x, frame)));
    }
    if let Some(fr) = frame {
        sig.insert(s("coordinate_frame"), s(fr));
    }
    if let Some(t) = c.sig.timeout_ms {
        sig.insert(s("timeout_ms"), Value::Number(t.into()));
    }
    if let Some(m) = c.sig.invocation_mode {
        sig.insert(s("invocation_mode"), s(m.as_str()));
    }
    if !c.sig.state_objects.is_empty() {
        sig.insert(s("state_objects"), list(&c.sig.state_objects, |x| s(x)));
    }
    append_extensions("signature", &mut sig, ext);

    let preds = |ps: &[Predicate]| list(ps, |p| s(p.to_string()));
    let mut beh = Mapping::new();
    if !c.beh.preconditions.is_empty() {
        beh.insert(s("preconditions"), preds(&c.beh.preconditions));
    }
    if !c.beh.postconditions.is_empty() {
        beh.insert(s("postconditions"), preds(&c.beh.postconditions));
    }
    if !c.beh.invariants.is_empty() {
        beh.insert(s("invariants"), preds(&c.beh.invariants));
    }
    if !c.beh.semantic_assumptions.is_empty() {
        beh.insert(s("semantic_assumptions"), list(&c.beh.semantic_assumptions, |x| s(x)));
    }
    if let Some(h) = c.beh.handoff {
        beh.insert(s("completion_semantics"), s(h.as_str()));
    }
    if let Some(h) = c.beh.required_handoff {
        beh.insert(s("required_handoff"), s(h.as_str()));
    }
    append_extensions("behavior", &mut beh, ext);

    let mut res = Mapping::new();
    if let Some(sensors) = &c.res.sensors {
        res.insert(s("required_sensors"), list(sensors, sensor_value));
    }
    if let Some(acts) = &c.res.actuators {
        res.insert(s("required_actuators"), list(acts, actuator_value));
    }
    if let Some(cs) = &c.res.compute {
        let mut m = Mapping::new();
        for (k, v) in cs.components() {
            m.insert(s(k), f(v));
        }
        res.insert(s("compute"), Value::Mapping(m));
    }
    if let Some(hz) = c.res.control_frequency_hz {
        res.insert(s("control_frequency_hz"), f(hz));
    }
    if !c.res.exclusive_locks.is_empty() {
        res.insert(s("exclusive_resource_lock"), list(&c.res.exclusive_locks, |x| s(x)));
    }
    if !c.res.comm.is_empty() {
        res.insert(s("comm"), list(&c.res.comm, |x| s(x)));
    }
    append_extensions("resources", &mut res, ext);

    let mut perm = Mapping::new();
    if let Some(ph) = &c.perm.physical {
        perm.insert(s("physical_perms"), claims_value(ph));
    }
    for (key, group) in
        [("data_perms", &c.perm.data), ("network_perms", &c.perm.network), ("operational_perms", &c.perm.operational)]
    {
        if !group.is_empty() {
            perm.insert(s(key), claims_value(group));
        }
    }
    if c.perm.audit_req != AuditLevel::None {
        perm.insert(s("audit_req"), s(c.perm.audit_req.as_str()));
    }

    let mut rec = Mapping::new();
    if !c.rec.failure_modes.is_empty() {
        rec.insert(
            s("failure_modes"),
            list(&c.rec.failure_modes, |m| match m.severity {
                FailureSeverity::Transient => s(&m.mode),
                sev => {
                    let mut e = Mapping::new();
                    e.insert(s(&m.mode), s(sev.as_str()));
                    Value::Mapping(e)
                }
            }),
        );
    }
    if let Some(rp) = c.rec.retry_policy {
        let v = if rp.max_attempts == rp.strategy.default_attempts() {
            s(rp.strategy.as_str())
        } else {
            let mut m = Mapping::new();
            m.insert(s("max"), Value::Number(rp.max_attempts.into()));
            m.insert(s("strategy"), s(rp.strategy.as_str()));
            Value::Mapping(m)
        };
        rec.insert(s("retry_policy"), v);
    }
    if !c.rec.rollback_state.is_empty() {
        rec.insert(s("rollback_state"), s(&c.rec.rollback_state));
    }
    if let Some(a) = &c.rec.safe_stop_action {
        rec.insert(s("safe_stop_action"), s(a));
    }
    if let Some(esc) = &c.rec.escalation {
        rec.insert(s("escalation"), list(esc, |e| s(e.to_string())));
    }
    append_extensions("recovery", &mut rec, ext);

    let mut ver = Mapping::new();
    if let Some(deps) = &c.ver.dependencies {
        let mut m = Mapping::new();
        for (k, r) in deps {
            m.insert(s(k), s(r.as_str()));
        }
        ver.insert(s("dependency_constraints"), Value::Mapping(m));
    }
    if let Some(d) = &c.ver.deprecation {
        let mut m = Mapping::new();
        m.insert(s("flag"), Value::Bool(d.flag));
        if let Some(date) = d.end_of_support {
            m.insert(s("end_of_support"), s(date.format("%Y-%m-%d").to_string()));
        }
        if let Some(r) = &d.migration_ref {
            m.insert(s("migration_ref"), s(r));
        }
        ver.insert(s("deprecation"), Value::Mapping(m));
    }
    if let Some(pc) = c.ver.policy_change {
        ver.insert(s("policy_change_marker"), Value::Bool(pc));
    }
    if let Some(rc) = c.ver.resource_change {
        ver.insert(s("resource_change_marker"), Value::Bool(rc));
    }
    append_extensions("versioning", &mut ver, ext);

    let mut doc = Mapping::new();
    for (name, body) in [
        ("ecm", ecm),
        ("signature", sig),
        ("behavior", beh),
        ("resources", res),
        ("permissions", perm),
        ("recovery", rec),
        ("versioning", ver),
    ] {
        doc.insert(s(name), Value::Mapping(body));
    }
    for (k, v) in ext {
        if !k.contains('.') {
            doc.insert(s(k), v.clone());
        }
    }
    Value::Mapping(doc)
}

/// Writes a contract as a manifest document with a fixed key order.
pub fn serialize_manifest(c: &EcmContract) -> String {
    serde_yaml::to_string(&manifest_value(c)).expect("manifest values always serialize")
}

/// Reads and parses a manifest file.
pub fn load_manifest(path: &std::path::Path) -> std::result::Result<EcmContract, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_manifest(&text).map_err(|e| crate::Error::Manifest { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::version::SemVer;

    pub(crate) const NAV_LISTING: &str = r#"
ecm:
  module_id: ecm.navigation.precise
  version: 1.3.0
  release_channel: beta
  compatibility_class: resource-sensitive
signature:
  input_schema: [{target_pose: Pose3D}, {tolerance: Float}]
  output_schema: [{nav_status: NavStatus}, {final_pose: Pose3D}]
  coordinate_frame: map
behavior:
  preconditions: [localization_confidence >= 0.90, base_ready]
  postconditions: [goal_reached, orientation_stable]
  completion_semantics: stable_arrival
resources:
  required_sensors: [lidar, imu]
  required_actuators: [mobile_base]
  control_frequency_hz: 20
  exclusive_resource_lock: [base_controller]
permissions:
  motion_permission: true
  restricted_zone_access: false
recovery:
  failure_modes: [timeout, path_blocked, localization_drop]
  retry_policy: retry_once
  rollback_state: last_safe_waypoint
  safe_stop_action: brake_and_hold
versioning:
  dependency_constraints: {runtime: ">=2.1,<3.0"}
  resource_change_marker: true
"#;

    #[test]
    fn navigation_listing() {
        let c = parse_manifest(NAV_LISTING).unwrap();
        assert_eq!(c.module_id.as_str(), "ecm.navigation.precise");
        assert_eq!(c.version(), SemVer::new(1, 3, 0));
        assert_eq!(c.rec.retry_policy.unwrap().strategy, RetryStrategy::RetryOnce);
        assert_eq!(c.rec.retry_policy.unwrap().max_attempts, 1);
        assert_eq!(c.release_channel, Some(ReleaseChannel::Beta));
        assert_eq!(c.ver.compat_level, Some(CompatibilityClass::ResourceSensitive));
        assert_eq!(c.sig.inputs()[0].frame.as_deref(), Some("map"));
        assert_eq!(c.sig.inputs()[1].frame, None);
        assert_eq!(c.beh.handoff, Some(HandoffSemantics::StableArrival));
        assert_eq!(c.res.exclusive_locks, vec!["base_controller".to_string()]);
        assert_eq!(c.perm.physical.as_ref().unwrap().len(), 2);
        assert_eq!(c.rec.failure_modes.len(), 3);
        assert_eq!(c.ver.resource_change, Some(true));
        assert!(c.extensions.is_empty());
    }

    #[test]
    fn ecm_block_order() {
        let out = serialize_manifest(&parse_manifest(NAV_LISTING).unwrap());
        let keys: Vec<&str> = out
            .lines()
            .skip_while(|l| *l != "ecm:")
            .skip(1)
            .take_while(|l| l.starts_with("  "))
            .map(|l| l.trim().split(':').next().unwrap())
            .collect();
        assert_eq!(keys, ["module_id", "version", "release_channel", "compatibility_class"]);
    }

    #[test]
    fn round_trip_and_idempotence() {
        let c = parse_manifest(NAV_LISTING).unwrap();
        let once = serialize_manifest(&c);
        let again = parse_manifest(&once).unwrap();
        assert_eq!(again, c);
        assert_eq!(serialize_manifest(&again), once);
    }

    #[test]
    fn minimal_document() {
        let text = "ecm: {module_id: ecm.x.y}\nsignature: {}\nbehavior: {}\nresources: {}\npermissions: {}\nrecovery: {}\nversioning: {}\n";
        let c = parse_manifest(text).unwrap();
        assert!(c.res.exclusive_locks.is_empty());
        assert_eq!(c.perm.audit_req, AuditLevel::None);
        let out = serialize_manifest(&c);
        assert!(!out.contains("exclusive_resource_lock"));
        assert!(!out.contains("audit_req"));
        assert!(!out.contains("invariants"));
        assert_eq!(parse_manifest(&out).unwrap(), c);
    }

    #[test]
    fn unknown_keys_survive() {
        let text = format!("{NAV_LISTING}  vendor_note: keep me\nprovenance:\n  built_by: ci\n");
        let c = parse_manifest(&text).unwrap();
        assert_eq!(c.extensions.get("versioning.vendor_note"), Some(&Value::String("keep me".into())));
        assert!(c.extensions.contains_key("provenance"));
        let again = parse_manifest(&serialize_manifest(&c)).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_manifest("ecm: [unclosed"), Err(ManifestError::Parse { .. })));
        let missing = NAV_LISTING.replace("recovery:", "recovery_x:");
        assert!(matches!(parse_manifest(&missing), Err(ManifestError::Schema { path, .. }) if path == "recovery"));
        let bad_pred = NAV_LISTING.replace("base_ready]", "base ready ~ 3]");
        assert!(matches!(parse_manifest(&bad_pred), Err(ManifestError::Predicate { .. })));
        let bad_type = NAV_LISTING.replace("{tolerance: Float}", "{tolerance: Quaternion}");
        assert!(matches!(parse_manifest(&bad_type), Err(ManifestError::Schema { .. })));
        let bad_range = NAV_LISTING.replace(">=2.1,<3.0", ">=two");
        assert!(matches!(parse_manifest(&bad_range), Err(ManifestError::Schema { .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "ecm:\n  module_id: ecm.a.b\nsignature: {\n";
        match parse_manifest(text) {
            Err(ManifestError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn long_forms() {
        let text = r#"
ecm: {module_id: ecm.grasp.basic, version: 2.0.0}
signature:
  input_schema:
    - {name: approach, type: Pose3D, frame: base_link}
    - {width: {type: Float, unit: cm}}
  output_schema: [{grasp_state: GraspState}]
  coordinate_frame: base_link
  timeout_ms: 5 s
behavior:
  preconditions: [gripper.is_open, dist < 1m]
  postconditions: [object.is_grasped]
  completion_semantics: persistent_hold
resources:
  required_sensors: ["wrist_rgbd@30Hz", {kind: ft_sensor, mount: wrist}]
  required_actuators: [{kind: arm, dof: 6}, parallel_gripper]
  compute: {gpu_gb: 4GB, cpu_cores: 2 cores}
permissions:
  physical_perms: {human_prox: 0.5m, max_force: 40 N}
  data_perms: {read: object_db}
  audit_req: standard
recovery:
  failure_modes: [{slip: transient}, {collision: critical}]
  rollback_state: pre_grasp_pose
  retry_policy: {max: 3, strategy: new_pose}
  escalation: ["3 failures -> human_takeover", "force > 60 N -> safe_stop"]
versioning:
  dependency_constraints: {arm_driver: ">=3.0"}
"#;
        let c = parse_manifest(text).unwrap();
        assert_eq!(c.sig.timeout_ms, Some(5000));
        assert_eq!(c.sig.inputs()[1].unit, Some(Unit::Meter));
        assert_eq!(c.res.sensors()[0].min_rate_hz, Some(30.0));
        assert_eq!(c.res.actuators()[0].dof, Some(6));
        assert_eq!(c.res.compute, Some(ComputeSpec::new(2.0, 4.0, 0.0)));
        assert_eq!(c.perm.data[0].bound, PermBound::Scope("object_db".into()));
        assert_eq!(c.rec.failure_modes[1].severity, FailureSeverity::Critical);
        assert_eq!(c.rec.escalation.as_ref().unwrap().len(), 2);
        let out = serialize_manifest(&c);
        assert_eq!(parse_manifest(&out).unwrap(), c);
        assert_eq!(serialize_manifest(&parse_manifest(&out).unwrap()), out);
    }

    #[test]
    fn retry_bound() {
        let text = NAV_LISTING.replace("retry_policy: retry_once", "retry_policy: {max: 11, strategy: new_pose}");
        assert!(matches!(parse_manifest(&text), Err(ManifestError::Schema { .. })));
    }
}
