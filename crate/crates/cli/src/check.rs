use std::path::PathBuf;

use clap::Subcommand;
use ecm_core::profiles::load_world;
use ecm_core::{check_chain, check_install, check_invocation, check_upgrade, CompatReport};
use serde_json::json;

use crate::{manifest, print_json, Failure, Global, Outcome};

#[derive(Debug, Subcommand)]
pub enum CheckCmd {
    /// Can the module be installed on the embodiment under the policy?
    Install {
        manifest: PathBuf,
        /// Modules already installed (repeatable).
        #[arg(long, value_name = "MANIFEST")]
        admitted: Vec<PathBuf>,
    },
    /// Can the module be called in the given world state?
    Invoke {
        manifest: PathBuf,
        #[arg(long, value_name = "WORLD")]
        world: PathBuf,
    },
    /// Do the modules compose in the given order?
    Compose {
        #[arg(required = true, num_args = 2..)]
        manifests: Vec<PathBuf>,
    },
    /// Can `old` be replaced by `new` in place?
    Upgrade {
        old: PathBuf,
        new: PathBuf,
        /// Modules composed after the one being replaced (repeatable).
        #[arg(long, value_name = "MANIFEST")]
        dependent: Vec<PathBuf>,
    },
}

pub fn render(report: &CompatReport) -> String {
    let mut out = format!("outcome: {} (exit {})\n", report.outcome, report.outcome.exit_code());
    let dims: Vec<&str> = report.checked_dimensions.iter().map(|d| d.as_str()).collect();
    out.push_str(&format!("checked: {}\n", dims.join(" ")));
    for f in &report.findings {
        let pair = f.pair.map(|p| format!(" [pair {p}]")).unwrap_or_default();
        let at = if f.at.is_empty() { String::new() } else { format!(" at {}", f.at) };
        out.push_str(&format!("  {:<8} {:<6} {}{pair}{at}: {}\n", f.severity, f.dimension.as_str(), f.code, f.message));
        if let Some(s) = &f.suggestion {
            out.push_str(&format!("           hint: {s}\n"));
        }
    }
    for c in &report.conditions {
        out.push_str(&format!("  condition: {c}\n"));
    }
    out
}

fn emit(report: &CompatReport, g: &Global) -> u8 {
    if g.json() {
        println!("{}", report.to_json());
    } else {
        print!("{}", render(report));
    }
    report.outcome.exit_code() as u8
}

fn manifests(paths: &[PathBuf]) -> Result<Vec<ecm_core::EcmContract>, Failure> {
    paths.iter().map(|p| manifest(p)).collect()
}

pub fn run(cmd: CheckCmd, g: &Global) -> Outcome {
    let cfg = g.config();
    match cmd {
        CheckCmd::Install { manifest: path, admitted } => {
            let c = manifest(&path)?;
            let admitted = manifests(&admitted)?;
            let (emb, pol) = g.profiles()?;
            Ok(emit(&check_install(&c, &emb, &pol, &admitted, &cfg), g))
        }
        CheckCmd::Invoke { manifest: path, world } => {
            let c = manifest(&path)?;
            let w = load_world(&world)?;
            let (emb, pol) = g.profiles()?;
            Ok(emit(&check_invocation(&c, &w, &emb, &pol, &cfg), g))
        }
        CheckCmd::Compose { manifests: paths } => {
            let chain = manifests(&paths)?;
            let (emb, pol) = g.profiles()?;
            let report = check_chain(&chain, &emb, &pol, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
            Ok(emit(&report, g))
        }
        CheckCmd::Upgrade { old, new, dependent } => {
            let (old, new) = (manifest(&old)?, manifest(&new)?);
            let dependents = manifests(&dependent)?;
            let (emb, pol) = g.profiles()?;
            let up =
                check_upgrade(&old, &new, &dependents, &emb, &pol, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
            if g.json() {
                print_json(&json!({ "class": up.class.manifest_name(), "delta": up.delta, "report": up.report }));
            } else {
                println!("class: {} ({})", up.class.manifest_name(), up.delta);
                print!("{}", render(&up.report));
            }
            Ok(up.report.outcome.exit_code() as u8)
        }
    }
}
