//! Loading and integrity checks for the benchmark fixture tree.
//!
//! ```text
//! fixtures/
//!   SHA256SUMS
//!   library/*.ecm.yaml
//!   profiles/*.profile.yaml
//!   oracle.yaml
//!   templates.yaml
//!   upgrades/*.case.yaml
//!   longhorizon/{A,B,C}.chain.yaml
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ecm_core::checker::Dimension;
use ecm_core::profiles::{parse_profile, world_from_value};
use ecm_core::{parse_manifest, CompatibilityClass, EcmContract, EmbodimentProfile, PolicyProfile, SemVer, WorldState};
use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const LIBRARY_SIZE: usize = 24;
pub const TEMPLATE_COUNT: usize = 13;
pub const ORACLE_PAIRS: usize = 42;
pub const SCHEMA_DETECTABLE: usize = 5;
pub const UPGRADE_CASES: usize = 24;
pub const LONG_TASKS: [&str; 3] = ["A", "B", "C"];
pub const BENCH_PROFILE: &str = "lab";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture corrupt: {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn corrupt(path: impl AsRef<Path>, reason: impl Into<String>) -> FixtureError {
    FixtureError::Corrupt { path: path.as_ref().display().to_string(), reason: reason.into() }
}

fn read(path: &Path) -> Result<String, FixtureError> {
    fs::read_to_string(path).map_err(|source| FixtureError::Io { path: path.display().to_string(), source })
}

/// The fixture tree shipped with the repository.
pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Library contracts indexed by `module_id@version`.
#[derive(Debug, Clone)]
pub struct Library {
    modules: Vec<EcmContract>,
    by_key: BTreeMap<String, usize>,
}

impl Library {
    pub fn new(mut modules: Vec<EcmContract>) -> Self {
        modules.sort_by(|a, b| (a.module_id.as_str(), a.version()).cmp(&(b.module_id.as_str(), b.version())));
        let by_key = modules.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
        Self { modules, by_key }
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EcmContract> {
        self.modules.iter()
    }

    pub fn get(&self, module_id: &str, version: &SemVer) -> Option<&EcmContract> {
        self.by_key(&format!("{module_id}@{version}"))
    }

    pub fn by_key(&self, key: &str) -> Option<&EcmContract> {
        self.by_key.get(key).map(|&i| &self.modules[i])
    }

    pub fn by_id(&self, module_id: &str) -> Option<&EcmContract> {
        self.modules.iter().rev().find(|c| c.module_id.as_str() == module_id)
    }

    /// Modules a template slot accepts, in `module_id` then version order.
    /// A slot is a family, optionally narrowed by a tag: `manipulation:grasp`.
    pub fn candidates(&self, slot: &str) -> Vec<&EcmContract> {
        self.modules.iter().filter(|c| slot_accepts(slot, c)).collect()
    }
}

pub fn slot_accepts(slot: &str, c: &EcmContract) -> bool {
    let (family, tag) = match slot.split_once(':') {
        Some((f, t)) => (f, Some(t)),
        None => (slot, None),
    };
    c.family() == family && tag.is_none_or(|t| c.tags.iter().any(|x| x == t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTemplate {
    pub template_id: String,
    pub slots: Vec<String>,
    pub latency_budget_ms: Option<u64>,
    pub world_init: WorldState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub dimension: Dimension,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleEntry {
    pub upstream: String,
    pub downstream: String,
    pub labels: Vec<Label>,
    #[serde(default)]
    pub schema_detectable: bool,
}

impl OracleEntry {
    /// The dimension the pair is counted under.
    pub fn dimension(&self) -> Dimension {
        self.labels[0].dimension
    }
}

/// Ground-truth incompatible pairs, keyed by ordered `module@version` keys.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    entries: Vec<OracleEntry>,
    index: BTreeMap<(String, String), usize>,
}

impl Oracle {
    pub fn new(entries: Vec<OracleEntry>) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| ((e.upstream.clone(), e.downstream.clone()), i)).collect();
        Self { entries, index }
    }

    pub fn lookup(&self, upstream: &str, downstream: &str) -> Option<&OracleEntry> {
        self.index.get(&(upstream.to_string(), downstream.to_string())).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[OracleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn schema_detectable(&self) -> usize {
        self.entries.iter().filter(|e| e.schema_detectable).count()
    }

    pub fn dimension_counts(&self) -> BTreeMap<Dimension, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.dimension()).or_default() += 1;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct UpgradeCase {
    pub case_id: String,
    pub truth: CompatibilityClass,
    pub old: EcmContract,
    pub new: EcmContract,
    /// Library modules composed after the upgraded one.
    pub dependents: Vec<EcmContract>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    /// Index of the upstream module of the failing pair.
    pub pair: usize,
    pub codes: Vec<String>,
    pub mitigated_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    pub module: usize,
    /// `section.key` inside the module's manifest.
    pub path: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mitigation {
    pub name: String,
    #[serde(default)]
    pub register_transform: Option<String>,
    #[serde(default)]
    pub grant: BTreeMap<String, Value>,
    #[serde(default)]
    pub patch: Vec<Patch>,
}

/// A fixed long-horizon chain with its runtime faults and the mitigations
/// that resolve them.
#[derive(Debug, Clone)]
pub struct LongChain {
    pub task: String,
    pub title: String,
    pub profile: String,
    pub modules: Vec<Value>,
    pub faults: Vec<Fault>,
    pub mitigations: Vec<Mitigation>,
}

#[derive(Debug, Clone)]
pub struct Profile {
    pub embodiment: EmbodimentProfile,
    pub policy: PolicyProfile,
}

#[derive(Debug, Clone)]
pub struct Fixtures {
    pub root: PathBuf,
    pub library: Library,
    pub oracle: Oracle,
    pub templates: Vec<TaskTemplate>,
    pub profiles: BTreeMap<String, Profile>,
    pub upgrades: Vec<UpgradeCase>,
    pub long_chains: Vec<LongChain>,
}

impl Fixtures {
    pub fn load_default() -> Result<Self, FixtureError> {
        Self::load(&default_fixture_dir())
    }

    pub fn load(root: &Path) -> Result<Self, FixtureError> {
        verify_checksums(root)?;
        let library = Library::new(
            yaml_files(&root.join("library"), ".ecm.yaml")?
                .iter()
                .map(|p| manifest_file(p))
                .collect::<Result<_, _>>()?,
        );
        let mut profiles = BTreeMap::new();
        for p in yaml_files(&root.join("profiles"), ".profile.yaml")? {
            let name = file_stem(&p, ".profile.yaml");
            let doc = parse_profile(&read(&p)?).map_err(|e| corrupt(&p, e.to_string()))?;
            match (doc.embodiment, doc.policy) {
                (Some(embodiment), Some(policy)) => {
                    profiles.insert(name, Profile { embodiment, policy });
                }
                _ => return Err(corrupt(&p, "needs both an embodiment and a policy section")),
            }
        }
        let fx = Fixtures {
            oracle: load_oracle(&root.join("oracle.yaml"))?,
            templates: load_templates(&root.join("templates.yaml"))?,
            upgrades: yaml_files(&root.join("upgrades"), ".case.yaml")?
                .iter()
                .map(|p| load_case(p, &library))
                .collect::<Result<_, _>>()?,
            long_chains: LONG_TASKS
                .iter()
                .map(|t| load_long_chain(&root.join("longhorizon").join(format!("{t}.chain.yaml"))))
                .collect::<Result<_, _>>()?,
            root: root.to_path_buf(),
            library,
            profiles,
        };
        fx.validate()?;
        Ok(fx)
    }

    /// The deployment every experiment except the long-horizon one runs on.
    pub fn bench_profile(&self) -> &Profile {
        &self.profiles[BENCH_PROFILE]
    }

    pub fn template(&self, id: &str) -> Option<&TaskTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    fn validate(&self) -> Result<(), FixtureError> {
        let count = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(corrupt(&self.root, format!("expected {want} {what}, found {got}")))
            }
        };
        count("library modules", self.library.len(), LIBRARY_SIZE)?;
        count("templates", self.templates.len(), TEMPLATE_COUNT)?;
        count("oracle pairs", self.oracle.len(), ORACLE_PAIRS)?;
        count("schema-detectable oracle pairs", self.oracle.schema_detectable(), SCHEMA_DETECTABLE)?;
        count("upgrade cases", self.upgrades.len(), UPGRADE_CASES)?;
        if !self.profiles.contains_key(BENCH_PROFILE) {
            return Err(corrupt(self.root.join("profiles"), format!("missing {BENCH_PROFILE}.profile.yaml")));
        }
        for e in self.oracle.entries() {
            for key in [&e.upstream, &e.downstream] {
                if self.library.by_key(key).is_none() {
                    return Err(corrupt(self.root.join("oracle.yaml"), format!("unknown module {key}")));
                }
            }
            if e.labels.is_empty() {
                return Err(corrupt(
                    self.root.join("oracle.yaml"),
                    format!("{} -> {} has no labels", e.upstream, e.downstream),
                ));
            }
        }
        for t in &self.templates {
            if !(2..=5).contains(&t.slots.len()) {
                return Err(corrupt(
                    self.root.join("templates.yaml"),
                    format!("{} has {} slots", t.template_id, t.slots.len()),
                ));
            }
        }
        for lc in &self.long_chains {
            if !self.profiles.contains_key(&lc.profile) {
                return Err(corrupt(&self.root, format!("task {} uses unknown profile {}", lc.task, lc.profile)));
            }
            for f in &lc.faults {
                if f.pair + 1 >= lc.modules.len() || !lc.mitigations.iter().any(|m| m.name == f.mitigated_by) {
                    return Err(corrupt(&self.root, format!("task {}: bad fault at pair {}", lc.task, f.pair)));
                }
            }
        }
        Ok(())
    }
}

fn file_stem(p: &Path, suffix: &str) -> String {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.strip_suffix(suffix).unwrap_or(name).to_string()
}

fn yaml_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, FixtureError> {
    let entries = fs::read_dir(dir).map_err(|source| FixtureError::Io { path: dir.display().to_string(), source })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    out.sort();
    Ok(out)
}

fn manifest_file(p: &Path) -> Result<EcmContract, FixtureError> {
    parse_manifest(&read(p)?).map_err(|e| corrupt(p, e.to_string()))
}

pub fn manifest_from_value(v: &Value) -> Result<EcmContract, String> {
    let text = serde_yaml::to_string(v).map_err(|e| e.to_string())?;
    parse_manifest(&text).map_err(|e| e.to_string())
}

fn yaml_doc<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T, FixtureError> {
    serde_yaml::from_str(&read(p)?).map_err(|e| corrupt(p, e.to_string()))
}

fn load_oracle(p: &Path) -> Result<Oracle, FixtureError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        pairs: Vec<OracleEntry>,
    }
    let file: File = yaml_doc(p)?;
    let oracle = Oracle::new(file.pairs);
    if oracle.index.len() != oracle.entries.len() {
        return Err(corrupt(p, "duplicate pair"));
    }
    Ok(oracle)
}

fn load_templates(p: &Path) -> Result<Vec<TaskTemplate>, FixtureError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        template_id: String,
        slots: Vec<String>,
        #[serde(default)]
        latency_budget_ms: Option<u64>,
        #[serde(default)]
        world_init: Value,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        templates: Vec<Raw>,
    }
    let file: File = yaml_doc(p)?;
    file.templates
        .into_iter()
        .map(|r| {
            let world_init = world_from_value(&r.world_init, &format!("{}.world_init", r.template_id))
                .map_err(|e| corrupt(p, e.to_string()))?;
            Ok(TaskTemplate {
                template_id: r.template_id,
                slots: r.slots,
                latency_budget_ms: r.latency_budget_ms,
                world_init,
            })
        })
        .collect()
}

fn load_case(p: &Path, library: &Library) -> Result<UpgradeCase, FixtureError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        case_id: String,
        truth: String,
        #[serde(default)]
        dependents: Vec<String>,
        old: Value,
        new: Value,
    }
    let raw: Raw = yaml_doc(p)?;
    let truth = raw.truth.parse().map_err(|e: String| corrupt(p, e))?;
    let dependents = raw
        .dependents
        .iter()
        .map(|id| library.by_id(id).cloned().ok_or_else(|| corrupt(p, format!("unknown dependent {id}"))))
        .collect::<Result<_, _>>()?;
    Ok(UpgradeCase {
        case_id: raw.case_id,
        truth,
        old: manifest_from_value(&raw.old).map_err(|e| corrupt(p, format!("old: {e}")))?,
        new: manifest_from_value(&raw.new).map_err(|e| corrupt(p, format!("new: {e}")))?,
        dependents,
    })
}

fn load_long_chain(p: &Path) -> Result<LongChain, FixtureError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        task: String,
        title: String,
        profile: String,
        modules: Vec<Value>,
        faults: Vec<Fault>,
        mitigations: Vec<Mitigation>,
    }
    let raw: Raw = yaml_doc(p)?;
    for (i, m) in raw.modules.iter().enumerate() {
        manifest_from_value(m).map_err(|e| corrupt(p, format!("modules[{i}]: {e}")))?;
    }
    Ok(LongChain {
        task: raw.task,
        title: raw.title,
        profile: raw.profile,
        modules: raw.modules,
        faults: raw.faults,
        mitigations: raw.mitigations,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Every line of `SHA256SUMS` must match, and every YAML file under the
/// root must be listed.
pub fn verify_checksums(root: &Path) -> Result<(), FixtureError> {
    let sums_path = root.join("SHA256SUMS");
    let sums = read(&sums_path)?;
    let mut listed = BTreeMap::new();
    for (n, line) in sums.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| corrupt(&sums_path, format!("line {}: expected `<sha256>  <path>`", n + 1)))?;
        listed.insert(name.trim().to_string(), hash.trim().to_string());
    }
    for (name, want) in &listed {
        let path = root.join(name);
        let bytes = fs::read(&path).map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
        if sha256_hex(&bytes) != *want {
            return Err(corrupt(&path, "checksum mismatch"));
        }
    }
    for name in fixture_files(root)? {
        if !listed.contains_key(&name) {
            return Err(corrupt(root.join(&name), "not listed in SHA256SUMS"));
        }
    }
    Ok(())
}

/// YAML files under `root`, as sorted `/`-separated relative paths.
pub fn fixture_files(root: &Path) -> Result<Vec<String>, FixtureError> {
    fn walk(dir: &Path, prefix: &str, out: &mut Vec<String>) -> Result<(), FixtureError> {
        let entries =
            fs::read_dir(dir).map_err(|source| FixtureError::Io { path: dir.display().to_string(), source })?;
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            let rel = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
            let path = e.path();
            if path.is_dir() {
                walk(&path, &rel, out)?;
            } else if name.ends_with(".yaml") {
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    out.sort();
    Ok(out)
}
