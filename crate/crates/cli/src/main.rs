//! `ecm`: compatibility checks, release management, registry operations and
//! the benchmark harness from the command line.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecm_core::profiles::load_profile;
use ecm_core::registry::RegistryError;
use ecm_core::{CheckConfig, Dimension, EcmContract, EmbodimentProfile, PolicyProfile};
use ecm_harness::{ExperimentError, FixtureError};

mod bench;
mod check;
mod registry;
mod release;

/// Exit statuses other than the check outcomes (0/10/20/30).
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_REJECT: u8 = 30;
pub const EXIT_UNKNOWN: u8 = 40;
pub const EXIT_FIXTURE: u8 = 50;

#[derive(Debug, Parser)]
#[command(
    name = "ecm",
    version,
    about = "Contracts, compatibility checks and releases for embodied capability modules"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Global {
    /// Embodiment profile (`.profile.yaml`). Its policy section is used when
    /// `--pol` is not given.
    #[arg(long, global = true, value_name = "PATH")]
    pub emb: Option<PathBuf>,
    /// Policy profile (`.profile.yaml`).
    #[arg(long, global = true, value_name = "PATH")]
    pub pol: Option<PathBuf>,
    #[arg(long, global = true, env = "ECM_REGISTRY_ROOT", value_name = "DIR")]
    pub registry_root: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub output: Format,
    /// Skip one contract dimension during checks (repeatable).
    #[arg(long = "disable-dim", global = true, value_name = "DIM", value_parser = parse_dimension)]
    pub disable_dim: Vec<Dimension>,
    /// Chain latency budget for compose checks.
    #[arg(long, global = true, value_name = "MS")]
    pub budget_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compatibility checks.
    #[command(subcommand)]
    Check(check::CheckCmd),
    /// Release classification, versioning, gates and deprecation.
    #[command(subcommand)]
    Release(release::ReleaseCmd),
    /// Registry operations.
    #[command(subcommand)]
    Registry(registry::RegistryCmd),
    /// Benchmark experiments.
    #[command(subcommand)]
    Bench(bench::BenchCmd),
}

fn parse_dimension(s: &str) -> Result<Dimension, String> {
    let d: Dimension = s.parse()?;
    if d == Dimension::Global {
        return Err("the global chain constraints cannot be disabled".into());
    }
    Ok(d)
}

/// A failed command: the exit status and the message printed on stderr.
#[derive(Debug)]
pub struct Failure {
    pub status: u8,
    pub message: String,
}

impl Failure {
    pub fn new(status: u8, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ecm_core::Error> for Failure {
    fn from(e: ecm_core::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::UnknownFamily(_)
            | RegistryError::UnknownModule(_)
            | RegistryError::UnknownRelease { .. } => EXIT_UNKNOWN,
            RegistryError::GateFailure(_)
            | RegistryError::ChannelSkip(_)
            | RegistryError::DuplicateRelease { .. }
            | RegistryError::IncompleteForChannel { .. } => EXIT_REJECT,
            _ => EXIT_USAGE,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<FixtureError> for Failure {
    fn from(e: FixtureError) -> Self {
        Failure::new(EXIT_FIXTURE, e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Fixture(f) => f.into(),
            other => Failure::new(1, other.to_string()),
        }
    }
}

pub type Outcome = Result<u8, Failure>;

impl Global {
    pub fn config(&self) -> CheckConfig {
        let mut cfg = CheckConfig::default();
        for d in &self.disable_dim {
            cfg.enabled_dimensions.remove(d);
        }
        cfg.chain_latency_budget_ms = self.budget_ms;
        cfg
    }

    pub fn disabled(&self) -> BTreeSet<Dimension> {
        self.disable_dim.iter().copied().collect()
    }

    /// Loads the embodiment and policy profiles; both must be present.
    pub fn profiles(&self) -> Result<(EmbodimentProfile, PolicyProfile), Failure> {
        let emb_path =
            self.emb.as_deref().ok_or_else(|| Failure::usage("an embodiment profile is required (--emb)"))?;
        let emb_doc = load_profile(emb_path)?;
        let emb = emb_doc
            .embodiment
            .ok_or_else(|| Failure::usage(format!("{}: no embodiment section", emb_path.display())))?;
        let pol = match &self.pol {
            Some(p) => {
                load_profile(p)?.policy.ok_or_else(|| Failure::usage(format!("{}: no policy section", p.display())))?
            }
            None => emb_doc.policy.ok_or_else(|| {
                Failure::usage(format!("{}: no policy section; pass a policy profile with --pol", emb_path.display()))
            })?,
        };
        Ok((emb, pol))
    }

    /// Loads only the policy profile, from `--pol` or else `--emb`.
    pub fn policy(&self) -> Result<PolicyProfile, Failure> {
        let path = self
            .pol
            .as_deref()
            .or(self.emb.as_deref())
            .ok_or_else(|| Failure::usage("a policy profile is required (--pol)"))?;
        load_profile(path)?.policy.ok_or_else(|| Failure::usage(format!("{}: no policy section", path.display())))
    }

    pub fn registry_root(&self) -> Result<&Path, Failure> {
        self.registry_root
            .as_deref()
            .ok_or_else(|| Failure::usage("a registry root is required (--registry-root or ECM_REGISTRY_ROOT)"))
    }

    pub fn json(&self) -> bool {
        self.output == Format::Json
    }
}

pub fn manifest(path: &Path) -> Result<EcmContract, Failure> {
    Ok(ecm_core::load_manifest(path)?)
}

pub fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values always serialize"));
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check(cmd) => check::run(cmd, &cli.global),
        Command::Release(cmd) => release::run(cmd, &cli.global),
        Command::Registry(cmd) => registry::run(cmd, &cli.global),
        Command::Bench(cmd) => bench::run(cmd, &cli.global),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status),
        Err(f) => {
            eprintln!("ecm: {f}");
            ExitCode::from(f.status)
        }
    }
}
