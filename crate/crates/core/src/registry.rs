//! Release registry: an in-memory index with the admissibility queries and
//! resolver, and a directory store that persists it.
//!
//! Store layout under the registry root:
//!
//! ```text
//! <module_id>/<version>/manifest.ecm.yaml
//! <module_id>/<version>/release.release.yaml
//! index.json            (derived, rebuilt on every mutation)
//! ```

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::checker::delta::{contract_delta, RecDelta};
use crate::checker::{check_install, CheckConfig, Outcome};
use crate::completeness::check_completeness;
use crate::contract::EcmContract;
use crate::manifest::{parse_manifest, serialize_manifest};
use crate::profiles::{EmbodimentProfile, PolicyProfile};
use crate::release::{
    evaluate_gate, parse_release_metadata, serialize_release_metadata, Gate, GateResult, ReleaseChannel, ReleaseError,
    ReleaseRecord,
};
use crate::version::{SemVer, VersionRange};

/// Families that are valid query targets even while nothing is indexed
/// under them.
pub const KNOWN_FAMILIES: [&str; 4] = ["navigation", "manipulation", "perception", "interaction"];

pub const MANIFEST_FILE: &str = "manifest.ecm.yaml";
pub const RELEASE_FILE: &str = "release.release.yaml";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{module_id}@{version} is already registered")]
    DuplicateRelease { module_id: String, version: SemVer },
    #[error("{module_id} cannot be published at {channel}: missing {}", missing.join(", "))]
    IncompleteForChannel { module_id: String, channel: ReleaseChannel, missing: Vec<String> },
    #[error("unknown family or module `{0}`")]
    UnknownFamily(String),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("{module_id}@{version} is not registered")]
    UnknownRelease { module_id: String, version: SemVer },
    #[error(transparent)]
    ChannelSkip(#[from] ReleaseError),
    #[error("promotion blocked by {}", .0.iter().map(|g| g.label()).collect::<Vec<_>>().join(", "))]
    GateFailure(Vec<Gate>),
    #[error("registry root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("corrupt registry entry {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] crate::Error),
}

/// A registered dependency edge: `dependent@version` requires the module
/// within `range`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ReverseDep {
    pub dependent: String,
    pub version: SemVer,
    pub range: String,
}

#[derive(Debug, Clone, Default)]
pub struct RegistryIndex {
    entries: BTreeMap<(String, SemVer), ReleaseRecord>,
    family_index: BTreeMap<String, BTreeSet<String>>,
    reverse_deps: BTreeMap<String, BTreeSet<ReverseDep>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    StillSatisfied,
    RangeViolated,
    CompositionAtRisk,
}

impl Impact {
    pub fn as_str(self) -> &'static str {
        match self {
            Impact::StillSatisfied => "still_satisfied",
            Impact::RangeViolated => "range_violated",
            Impact::CompositionAtRisk => "composition_at_risk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Affected {
    pub dependent: String,
    pub version: SemVer,
    pub range: String,
    pub impact: Impact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub module_id: String,
    pub version: SemVer,
    pub channel: ReleaseChannel,
    pub rank_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolveRequest {
    pub target: String,
    pub range: Option<VersionRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub request: ResolveRequest,
    pub candidates: Vec<Candidate>,
    pub selected: Option<Candidate>,
}

impl RegistryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from records in any order.
    pub fn from_records(records: impl IntoIterator<Item = ReleaseRecord>) -> Result<Self, RegistryError> {
        let mut idx = Self::new();
        for rec in records {
            idx.add_release(rec)?;
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ReleaseRecord> {
        self.entries.values()
    }

    pub fn get(&self, module_id: &str, version: &SemVer) -> Option<&ReleaseRecord> {
        self.entries.get(&(module_id.to_string(), version.clone()))
    }

    pub fn versions_of(&self, module_id: &str) -> impl Iterator<Item = &ReleaseRecord> {
        let id = module_id.to_string();
        self.entries.iter().filter(move |((m, _), _)| *m == id).map(|(_, r)| r)
    }

    pub fn family_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.family_index
    }

    pub fn reverse_deps(&self) -> &BTreeMap<String, BTreeSet<ReverseDep>> {
        &self.reverse_deps
    }

    pub fn add_release(&mut self, mut rec: ReleaseRecord) -> Result<(), RegistryError> {
        let key = (rec.contract.module_id.to_string(), rec.contract.version());
        if self.entries.contains_key(&key) {
            return Err(RegistryError::DuplicateRelease { module_id: key.0, version: key.1 });
        }
        if rec.channel > ReleaseChannel::Sandbox {
            let report = check_completeness(&rec.contract);
            if !report.complete {
                return Err(RegistryError::IncompleteForChannel {
                    module_id: key.0,
                    channel: rec.channel,
                    missing: report.missing_fields.iter().map(|m| m.field.to_string()).collect(),
                });
            }
        }
        rec.contract.release_channel = Some(rec.channel);
        self.entries.insert(key, rec);
        self.rebuild();
        Ok(())
    }

    /// Recomputes the family and reverse-dependency indices from entries.
    fn rebuild(&mut self) {
        self.family_index.clear();
        self.reverse_deps.clear();
        for ((id, version), rec) in &self.entries {
            self.family_index.entry(rec.contract.family().to_string()).or_default().insert(id.clone());
            for (dep, range) in rec.contract.ver.dependencies() {
                self.reverse_deps.entry(dep.clone()).or_default().insert(ReverseDep {
                    dependent: id.clone(),
                    version: version.clone(),
                    range: range.to_string(),
                });
            }
        }
    }

    fn targets(&self, family_or_id: &str) -> Result<BTreeSet<String>, RegistryError> {
        if let Some(ids) = self.family_index.get(family_or_id) {
            return Ok(ids.clone());
        }
        if KNOWN_FAMILIES.contains(&family_or_id) {
            return Ok(BTreeSet::new());
        }
        if self.entries.keys().any(|(id, _)| id == family_or_id) {
            return Ok(BTreeSet::from([family_or_id.to_string()]));
        }
        Err(RegistryError::UnknownFamily(family_or_id.to_string()))
    }

    /// Admissible releases with the install report's conditions, ranked.
    fn admissible(
        &self,
        family_or_id: &str,
        emb: &EmbodimentProfile,
        pol: &PolicyProfile,
    ) -> Result<Vec<(&ReleaseRecord, Vec<String>)>, RegistryError> {
        let targets = self.targets(family_or_id)?;
        let cfg = CheckConfig::default();
        let mut out = Vec::new();
        for ((id, _), rec) in &self.entries {
            if !targets.contains(id) || !pol.allowed_channels.contains(&rec.channel) {
                continue;
            }
            // Module dependencies are satisfiable by anything in the registry.
            let providers: Vec<EcmContract> = rec
                .contract
                .ver
                .dependencies()
                .flat_map(|(dep, _)| self.versions_of(dep).map(|r| r.contract.clone()))
                .collect();
            let report = check_install(&rec.contract, emb, pol, &providers, &cfg);
            if report.outcome != Outcome::Reject {
                out.push((rec, report.conditions));
            }
        }
        out.sort_by_key(|(r, _)| (Reverse(r.channel), Reverse(r.contract.version()), r.contract.module_id.to_string()));
        Ok(out)
    }

    /// Releases of a family (or one module) that the policy admits and that
    /// install on the embodiment, best first.
    pub fn query_admissible(
        &self,
        family_or_id: &str,
        emb: &EmbodimentProfile,
        pol: &PolicyProfile,
    ) -> Result<Vec<(String, SemVer)>, RegistryError> {
        Ok(self
            .admissible(family_or_id, emb, pol)?
            .into_iter()
            .map(|(r, _)| (r.contract.module_id.to_string(), r.contract.version()))
            .collect())
    }

    pub fn resolve(
        &self,
        request: &ResolveRequest,
        emb: &EmbodimentProfile,
        pol: &PolicyProfile,
    ) -> Result<Resolution, RegistryError> {
        let candidates: Vec<Candidate> = self
            .admissible(&request.target, emb, pol)?
            .into_iter()
            .filter(|(r, _)| request.range.as_ref().is_none_or(|range| range.matches(&r.contract.version())))
            .map(|(r, conditions)| {
                let mut reason = format!("{} channel, version {}", r.channel, r.contract.version());
                if !conditions.is_empty() {
                    reason.push_str(&format!("; conditions: {}", conditions.join("; ")));
                }
                Candidate {
                    module_id: r.contract.module_id.to_string(),
                    version: r.contract.version(),
                    channel: r.channel,
                    rank_reason: reason,
                }
            })
            .collect();
        Ok(Resolution { request: request.clone(), selected: candidates.first().cloned(), candidates })
    }

    /// Impact of replacing `module_id` with `proposed` on every registered
    /// dependent.
    pub fn affected_dependents(&self, module_id: &str, proposed: &EcmContract) -> Result<Vec<Affected>, RegistryError> {
        let mut versions: Vec<&ReleaseRecord> = self.versions_of(module_id).collect();
        if versions.is_empty() {
            return Err(RegistryError::UnknownModule(module_id.to_string()));
        }
        versions.sort_by_key(|r| Reverse(r.contract.version()));
        let new_version = proposed.version();
        let mut out = Vec::new();
        for rd in self.reverse_deps.get(module_id).into_iter().flatten() {
            let range = VersionRange::parse(&rd.range).expect("ranges in the index were parsed on the way in");
            let impact = if !range.matches(&new_version) {
                Impact::RangeViolated
            } else {
                // Compare against the release the dependent currently binds to.
                let current = versions.iter().find(|r| range.matches(&r.contract.version())).unwrap_or(&versions[0]);
                match contract_delta(&current.contract, proposed) {
                    Ok(d) if d.rec == RecDelta::Changed || d.beh.is_incompatible() => Impact::CompositionAtRisk,
                    Ok(_) => Impact::StillSatisfied,
                    Err(_) => Impact::CompositionAtRisk,
                }
            };
            out.push(Affected {
                dependent: rd.dependent.clone(),
                version: rd.version.clone(),
                range: rd.range.clone(),
                impact,
            });
        }
        Ok(out)
    }

    /// Promotes one release a single channel step. Leaves the index untouched
    /// unless every gate passes.
    pub fn promote(
        &mut self,
        module_id: &str,
        version: &SemVer,
        target: ReleaseChannel,
        pol: &PolicyProfile,
    ) -> Result<GateResult, RegistryError> {
        let key = (module_id.to_string(), version.clone());
        let rec = self
            .entries
            .get(&key)
            .ok_or_else(|| RegistryError::UnknownRelease { module_id: key.0.clone(), version: key.1.clone() })?;
        let result = evaluate_gate(rec, target, pol)?;
        if !result.pass {
            return Err(RegistryError::GateFailure(result.failed_gates));
        }
        let rec = self.entries.get_mut(&key).expect("checked above");
        rec.evidence_trail.push(format!("{} -> {}: all gates passed", rec.channel, target));
        rec.channel = target;
        rec.contract.release_channel = Some(target);
        Ok(result)
    }
}

#[derive(Debug, Serialize)]
struct IndexEntry<'a> {
    module_id: &'a str,
    version: String,
    channel: &'static str,
    class: Option<&'static str>,
    family: &'a str,
    deps: BTreeMap<&'a str, &'a str>,
}

#[derive(Debug, Serialize)]
struct IndexFile<'a> {
    entries: Vec<IndexEntry<'a>>,
    built_at: String,
}

/// Directory-backed registry. The tree is the source of truth; `index.json`
/// is a cache rewritten after every mutation.
#[derive(Debug, Clone)]
pub struct RegistryStore {
    root: PathBuf,
}

impl RegistryStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(RegistryError::MissingRoot(root));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn release_dir(&self, module_id: &str, version: &SemVer) -> PathBuf {
        self.root.join(module_id).join(version.to_string())
    }

    /// Scans the tree and builds a fresh index.
    pub fn load(&self) -> Result<RegistryIndex, RegistryError> {
        let mut records = Vec::new();
        for module in sorted_dirs(&self.root)? {
            for version in sorted_dirs(&module)? {
                records.push(read_release(&version)?);
            }
        }
        RegistryIndex::from_records(records)
    }

    pub fn add(&self, rec: ReleaseRecord) -> Result<RegistryIndex, RegistryError> {
        let mut idx = self.load()?;
        idx.add_release(rec.clone())?;
        let id = rec.contract.module_id.to_string();
        let rec = idx.get(&id, &rec.contract.version()).expect("just added").clone();
        let module_dir = self.root.join(&id);
        fs::create_dir_all(&module_dir).map_err(|e| crate::Error::io(&module_dir, e))?;
        let staging = tempfile::TempDir::new_in(&module_dir).map_err(|e| crate::Error::io(&module_dir, e))?;
        write_release(staging.path(), &rec)?;
        let dest = self.release_dir(&id, &rec.contract.version());
        let staged = staging.keep();
        fs::rename(&staged, &dest).map_err(|e| crate::Error::io(&dest, e))?;
        self.write_index(&idx)?;
        Ok(idx)
    }

    pub fn promote(
        &self,
        module_id: &str,
        version: &SemVer,
        target: ReleaseChannel,
        pol: &PolicyProfile,
    ) -> Result<(RegistryIndex, GateResult), RegistryError> {
        let mut idx = self.load()?;
        let result = idx.promote(module_id, version, target, pol)?;
        let rec = idx.get(module_id, version).expect("promoted entry exists");
        let dir = self.release_dir(module_id, version);
        atomic_write(&dir.join(MANIFEST_FILE), &serialize_manifest(&rec.contract))?;
        atomic_write(&dir.join(RELEASE_FILE), &serialize_release_metadata(rec))?;
        self.write_index(&idx)?;
        Ok((idx, result))
    }

    /// Rewrites `index.json` from `idx`.
    pub fn write_index(&self, idx: &RegistryIndex) -> Result<(), RegistryError> {
        let entries = idx
            .records()
            .map(|r| IndexEntry {
                module_id: r.contract.module_id.as_str(),
                version: r.contract.version().to_string(),
                channel: r.channel.manifest_name(),
                class: r.class_vs_predecessor.map(|c| c.manifest_name()),
                family: r.contract.family(),
                deps: r.contract.ver.dependencies().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            })
            .collect();
        let file = IndexFile { entries, built_at: chrono::Utc::now().to_rfc3339() };
        let text = serde_json::to_string_pretty(&file).expect("index always serializes");
        atomic_write(&self.root.join(INDEX_FILE), &text)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, RegistryError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| crate::Error::io(dir, e))? {
        let entry = entry.map_err(|e| crate::Error::io(dir, e))?;
        let name = entry.file_name();
        if entry.path().is_dir() && !name.to_string_lossy().starts_with('.') {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn read_release(dir: &Path) -> Result<ReleaseRecord, RegistryError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| crate::Error::io(&path, e))
    };
    let corrupt = |message: String| RegistryError::Corrupt { path: dir.to_path_buf(), message };
    let contract = parse_manifest(&read(MANIFEST_FILE)?).map_err(|e| corrupt(e.to_string()))?;
    let rec = parse_release_metadata(contract, &read(RELEASE_FILE)?).map_err(|e| corrupt(e.to_string()))?;
    let expected = dir.strip_prefix(dir.parent().and_then(Path::parent).unwrap_or(dir)).ok();
    let actual = Path::new(rec.contract.module_id.as_str()).join(rec.contract.version().to_string());
    if expected.is_some_and(|p| p != actual) {
        return Err(corrupt(format!("directory does not match contract {}", rec.contract.key())));
    }
    Ok(rec)
}

fn write_release(dir: &Path, rec: &ReleaseRecord) -> Result<(), RegistryError> {
    for (name, text) in
        [(MANIFEST_FILE, serialize_manifest(&rec.contract)), (RELEASE_FILE, serialize_release_metadata(rec))]
    {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| crate::Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes through a sibling temp file and renames it into place.
fn atomic_write(path: &Path, text: &str) -> Result<(), RegistryError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| crate::Error::io(dir, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| crate::Error::io(path, e))?;
    tmp.persist(path).map_err(|e| crate::Error::io(path, e.error))?;
    Ok(())
}
