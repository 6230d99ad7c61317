//! Contracts for embodied capability modules: the six-dimension manifest
//! model, deployment profiles, lifecycle compatibility checks, release
//! discipline and a file-backed registry.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod checker;
pub mod completeness;
pub mod contract;
pub mod manifest;
pub mod predicate;
pub mod profiles;
pub mod registry;
pub mod release;
pub mod units;
pub mod version;

pub use checker::{
    check_chain, check_install, check_invocation, check_pair, check_upgrade, contract_delta, CheckConfig, CompatReport,
    DeltaSet, Dimension, Finding, Outcome, Severity,
};
pub use completeness::{check_completeness, CompletenessReport};
pub use contract::{EcmContract, ModuleId};
pub use manifest::{load_manifest, parse_manifest, serialize_manifest, ManifestError};
pub use profiles::{EmbodimentProfile, PolicyProfile, WorldState};
pub use release::{classify_release, CompatibilityClass, ReleaseChannel, ReleaseRecord};
pub use version::{SemVer, VersionRange};

/// Errors from loading documents off disk.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Manifest { path: String, source: ManifestError },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}
