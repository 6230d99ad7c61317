use std::fs;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use ecm_core::release::{
    evaluate_gate, parse_release_metadata, serialize_release_metadata, suggest_version, validate_deprecation,
    DeprecationAction,
};
use ecm_core::{classify_release, contract_delta, serialize_manifest, EcmContract, ReleaseChannel, ReleaseRecord};
use serde_json::json;

use crate::{manifest, print_json, Failure, Global, Outcome, EXIT_REJECT};

#[derive(Debug, Subcommand)]
pub enum ReleaseCmd {
    /// Compatibility class of `new` relative to `old`.
    Classify { old: PathBuf, new: PathBuf },
    /// Next version for `new` given its delta from `old`.
    SuggestVersion { old: PathBuf, new: PathBuf },
    /// Evaluate a one-step promotion.
    Gate {
        manifest: PathBuf,
        /// Release metadata (`.release.yaml`); without it the release is a
        /// fresh sandbox entry with no evidence.
        #[arg(long, value_name = "PATH")]
        release: Option<PathBuf>,
        #[arg(long, value_name = "CHANNEL", value_parser = parse_channel)]
        to: ReleaseChannel,
    },
    /// Flag a release as deprecated, or check that it may be removed.
    Deprecate {
        manifest: PathBuf,
        #[arg(long, value_name = "PATH")]
        release: Option<PathBuf>,
        #[arg(long, value_parser = parse_action)]
        action: DeprecationAction,
    },
}

fn parse_channel(s: &str) -> Result<ReleaseChannel, String> {
    s.parse()
}

fn parse_action(s: &str) -> Result<DeprecationAction, String> {
    s.parse()
}

fn record(manifest_path: &Path, release: Option<&Path>) -> Result<ReleaseRecord, Failure> {
    let c = manifest(manifest_path)?;
    match release {
        None => Ok(ReleaseRecord::new(c)),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            parse_release_metadata(c, &text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        }
    }
}

fn pair(old: &Path, new: &Path) -> Result<(EcmContract, EcmContract), Failure> {
    Ok((manifest(old)?, manifest(new)?))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn run(cmd: ReleaseCmd, g: &Global) -> Outcome {
    match cmd {
        ReleaseCmd::Classify { old, new } => {
            let (old, new) = pair(&old, &new)?;
            let delta = contract_delta(&old, &new).map_err(|e| Failure::usage(e.to_string()))?;
            let class = classify_release(&delta);
            if g.json() {
                print_json(&json!({ "class": class.manifest_name(), "delta": delta }));
            } else {
                println!("{class}");
                println!("delta: {delta}");
            }
            Ok(0)
        }
        ReleaseCmd::SuggestVersion { old, new } => {
            let (old, new) = pair(&old, &new)?;
            let delta = contract_delta(&old, &new).map_err(|e| Failure::usage(e.to_string()))?;
            let class = classify_release(&delta);
            let next = suggest_version(&old.version(), class, &delta);
            if g.json() {
                print_json(
                    &json!({ "from": old.version().to_string(), "class": class.manifest_name(), "suggested": next.to_string() }),
                );
            } else {
                println!("{next}");
                if new.version() != next {
                    eprintln!(
                        "note: {} declares {}, suggested {next} for a {} release",
                        new.module_id,
                        new.version(),
                        class.manifest_name()
                    );
                }
            }
            Ok(0)
        }
        ReleaseCmd::Gate { manifest, release, to } => {
            let rec = record(&manifest, release.as_deref())?;
            let pol = g.policy()?;
            let result = evaluate_gate(&rec, to, &pol).map_err(|e| Failure::new(EXIT_REJECT, e.to_string()))?;
            if g.json() {
                print_json(&json!(result));
            } else if result.pass {
                println!("{} -> {to}: all gates pass", rec.channel);
            } else {
                println!("{} -> {to}: blocked", rec.channel);
                for gate in &result.failed_gates {
                    println!("  failed: {gate}");
                }
            }
            Ok(if result.pass { 0 } else { EXIT_REJECT })
        }
        ReleaseCmd::Deprecate { manifest: path, release, action } => {
            let rec = record(&path, release.as_deref())?;
            let out = validate_deprecation(&rec, action).map_err(|e| Failure::new(EXIT_REJECT, e.to_string()))?;
            if action == DeprecationAction::Flag && out != rec {
                write(&path, &serialize_manifest(&out.contract))?;
                if let Some(r) = &release {
                    write(r, &serialize_release_metadata(&out))?;
                }
            }
            let summary = match action {
                DeprecationAction::Flag => {
                    format!("{}@{} flagged deprecated", out.contract.module_id, out.contract.version())
                }
                DeprecationAction::Remove => format!(
                    "{}@{} may be removed after {} notice cycle(s)",
                    out.contract.module_id,
                    out.contract.version(),
                    out.deprecation_notice_cycles
                ),
            };
            if g.json() {
                print_json(&json!({ "action": action.as_str(), "ok": true, "message": summary }));
            } else {
                println!("{summary}");
            }
            Ok(0)
        }
    }
}
