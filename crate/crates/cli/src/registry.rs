use std::fs;
use std::path::PathBuf;

use clap::Subcommand;
use ecm_core::registry::{RegistryStore, ResolveRequest};
use ecm_core::release::parse_release_metadata;
use ecm_core::{ReleaseChannel, ReleaseRecord, SemVer, VersionRange};
use serde_json::json;

use crate::{manifest, print_json, Failure, Global, Outcome};

#[derive(Debug, Subcommand)]
pub enum RegistryCmd {
    /// Publish a release.
    Add {
        manifest: PathBuf,
        /// Release metadata (`.release.yaml`).
        #[arg(long, value_name = "PATH")]
        release: Option<PathBuf>,
        /// Channel for a release without metadata (default sandbox).
        #[arg(long, value_parser = parse_channel)]
        channel: Option<ReleaseChannel>,
    },
    /// List every release.
    List,
    /// Releases of a family or module admissible under the profiles.
    Query { target: String },
    /// Pick the best admissible release of a family or module.
    Resolve {
        target: String,
        #[arg(long, value_name = "RANGE")]
        range: Option<String>,
    },
    /// Impact of a proposed release on registered dependents.
    Affected {
        module_id: String,
        #[arg(long, value_name = "MANIFEST")]
        proposed: PathBuf,
    },
    /// Promote a release one channel step.
    Promote {
        module_id: String,
        version: String,
        #[arg(long, value_parser = parse_channel)]
        to: ReleaseChannel,
    },
}

fn parse_channel(s: &str) -> Result<ReleaseChannel, String> {
    s.parse()
}

fn version(s: &str) -> Result<SemVer, Failure> {
    s.parse().map_err(|e| Failure::usage(format!("bad version `{s}`: {e}")))
}

pub fn run(cmd: RegistryCmd, g: &Global) -> Outcome {
    let store = RegistryStore::open(g.registry_root()?)?;
    match cmd {
        RegistryCmd::Add { manifest: path, release, channel } => {
            let c = manifest(&path)?;
            let mut rec = match &release {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
                    parse_release_metadata(c, &text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
                }
                None => ReleaseRecord::new(c),
            };
            if let Some(ch) = channel {
                rec.channel = ch;
            }
            let (id, v, ch) = (rec.contract.module_id.to_string(), rec.contract.version(), rec.channel);
            store.add(rec)?;
            if g.json() {
                print_json(
                    &json!({ "added": { "module_id": id, "version": v.to_string(), "channel": ch.manifest_name() } }),
                );
            } else {
                println!("added {id}@{v} ({ch})");
            }
            Ok(0)
        }
        RegistryCmd::List => {
            let idx = store.load()?;
            if g.json() {
                let entries: Vec<_> = idx
                    .records()
                    .map(|r| {
                        json!({
                            "module_id": r.contract.module_id.as_str(),
                            "version": r.contract.version().to_string(),
                            "channel": r.channel.manifest_name(),
                            "class": r.class_vs_predecessor.map(|c| c.manifest_name()),
                        })
                    })
                    .collect();
                print_json(&json!({ "entries": entries }));
            } else {
                println!("{:<36}{:<12}{:<12}CLASS", "MODULE", "VERSION", "CHANNEL");
                for r in idx.records() {
                    println!(
                        "{:<36}{:<12}{:<12}{}",
                        r.contract.module_id,
                        r.contract.version(),
                        r.channel,
                        r.class_vs_predecessor.map_or("-", |c| c.manifest_name())
                    );
                }
            }
            Ok(0)
        }
        RegistryCmd::Query { target } => {
            let (emb, pol) = g.profiles()?;
            let found = store.load()?.query_admissible(&target, &emb, &pol)?;
            if g.json() {
                let list: Vec<_> =
                    found.iter().map(|(id, v)| json!({ "module_id": id, "version": v.to_string() })).collect();
                print_json(&json!({ "target": target, "admissible": list }));
            } else {
                for (id, v) in &found {
                    println!("{id}@{v}");
                }
            }
            Ok(0)
        }
        RegistryCmd::Resolve { target, range } => {
            let range = range
                .map(|r| VersionRange::parse(&r).map_err(|e| Failure::usage(format!("bad range `{r}`: {e}"))))
                .transpose()?;
            let (emb, pol) = g.profiles()?;
            let res = store.load()?.resolve(&ResolveRequest { target, range }, &emb, &pol)?;
            if g.json() {
                print_json(&json!(res));
            } else {
                for (i, c) in res.candidates.iter().enumerate() {
                    println!("{:>2}. {}@{}  ({})", i + 1, c.module_id, c.version, c.rank_reason);
                }
                match &res.selected {
                    Some(c) => println!("selected: {}@{}", c.module_id, c.version),
                    None => println!("selected: none"),
                }
            }
            Ok(0)
        }
        RegistryCmd::Affected { module_id, proposed } => {
            let proposed = manifest(&proposed)?;
            let affected = store.load()?.affected_dependents(&module_id, &proposed)?;
            if g.json() {
                print_json(
                    &json!({ "module_id": module_id, "proposed": proposed.version().to_string(), "dependents": affected }),
                );
            } else {
                for a in &affected {
                    println!("{}@{}  requires {}  {}", a.dependent, a.version, a.range, a.impact.as_str());
                }
            }
            Ok(0)
        }
        RegistryCmd::Promote { module_id, version: v, to } => {
            let pol = g.policy()?;
            let (_, result) = store.promote(&module_id, &version(&v)?, to, &pol)?;
            if g.json() {
                print_json(&json!(result));
            } else {
                println!("promoted {module_id}@{v} to {to}");
            }
            Ok(0)
        }
    }
}
