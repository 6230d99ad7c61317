//! Semantic versions and dependency ranges (`">=2.1,<3.0"`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use semver::Version as SemVer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed version range `{text}`: {reason}")]
pub struct RangeError {
    pub text: String,
    pub reason: String,
}

/// A conjunction of comparators. The original text is kept so manifests
/// re-serialize exactly as written.
#[derive(Debug, Clone)]
pub struct VersionRange {
    raw: String,
    req: semver::VersionReq,
}

impl VersionRange {
    pub fn parse(text: &str) -> Result<Self, RangeError> {
        let raw = text.trim().to_string();
        if raw.is_empty() {
            return Err(RangeError { text: raw, reason: "empty range".into() });
        }
        let req =
            semver::VersionReq::parse(&raw).map_err(|e| RangeError { text: raw.clone(), reason: e.to_string() })?;
        Ok(Self { raw, req })
    }

    pub fn matches(&self, version: &SemVer) -> bool {
        self.req.matches(version)
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

impl PartialEq for VersionRange {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

impl Eq for VersionRange {}

impl FromStr for VersionRange {
    type Err = RangeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for VersionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for VersionRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for VersionRange {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        VersionRange::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses `MAJOR.MINOR.PATCH`; two-component forms like `2.4` are accepted
/// for profile convenience and read as `2.4.0`.
pub fn parse_version(text: &str) -> Result<SemVer, semver::Error> {
    let text = text.trim();
    match text.matches('.').count() {
        1 => SemVer::parse(&format!("{text}.0")),
        _ => SemVer::parse(text),
    }
}
