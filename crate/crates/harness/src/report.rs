//! Plain-text tables and result files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ecm_core::CompatibilityClass;
use serde::Serialize;

use crate::experiments::{AblationRow, Exp1Report, Exp2Report, Exp3Report};

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn exp1_table(r: &Exp1Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Chain distribution (seed {}, {} chains)", r.seed, r.chains);
    let _ = writeln!(s, "{:<14}{:>7}{:>7}{:>9}{:>11}", "Chain length", "Count", "Valid", "Invalid", "Invalid %");
    let (mut n, mut v, mut i) = (0, 0, 0);
    for row in &r.by_length {
        let _ = writeln!(
            s,
            "{:<14}{:>7}{:>7}{:>9}{:>10.1}%",
            format!("{} modules", row.length),
            row.count,
            row.valid,
            row.invalid,
            pct(row.invalid, row.count)
        );
        n += row.count;
        v += row.valid;
        i += row.invalid;
    }
    let _ = writeln!(s, "{:<14}{:>7}{:>7}{:>9}{:>10.1}%", "Total", n, v, i, pct(i, n));
    let _ = writeln!(s);
    let _ = writeln!(s, "Composition stability");
    let _ = writeln!(
        s,
        "{:<10}{:>10}{:>19}{:>18}{:>16}{:>16}",
        "Method", "Accepted", "Post-accept fail", "Exec. success %", "False acc.", "False rej."
    );
    for m in &r.results {
        let opt = |x: Option<usize>| x.map_or("-".to_string(), |x| format!("{x} ({:.1}%)", pct(x, r.chains)));
        let _ = writeln!(
            s,
            "{:<10}{:>10}{:>19}{:>18.1}{:>16}{:>16}",
            m.method.label(),
            m.accepted,
            m.post_accept_failures,
            m.success_rate,
            opt(m.false_accepts),
            opt(m.false_rejects)
        );
    }
    s
}

pub fn exp2_table(r: &Exp2Report) -> String {
    let mut s = String::new();
    let n = r.cases.len();
    let _ = writeln!(s, "Upgrade classification ({n} cases)");
    let _ = writeln!(s, "contract-aware: {}/{n} correct ({:.1}%)", r.contract_correct, pct(r.contract_correct, n));
    let _ = writeln!(s, "semver-only:    {}/{n} correct ({:.1}%)", r.semver_correct, pct(r.semver_correct, n));
    let _ = writeln!(
        s,
        "rollbacks: contract {}/{n}, semver {}, ad hoc {}",
        r.rollbacks.contract, r.rollbacks.semver, r.rollbacks.ad_hoc
    );
    let _ = writeln!(s);
    let _ = write!(s, "{:<24}", "Truth \\ Predicted");
    for c in CompatibilityClass::ALL {
        let _ = write!(s, "{:>6}", c.abbreviation());
    }
    let _ = writeln!(s);
    for (i, c) in CompatibilityClass::ALL.iter().enumerate() {
        let total: usize = r.confusion[i].iter().sum();
        let _ = write!(s, "{:<24}", format!("{} ({total})", c.manifest_name()));
        for x in r.confusion[i] {
            let _ = write!(s, "{x:>6}");
        }
        let _ = writeln!(s);
    }
    s
}

pub fn exp3_table(r: &Exp3Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Long-horizon chains");
    let _ = writeln!(
        s,
        "{:<28}{:<10}{:>16}{:>14}{:>13}{:>12}",
        "Task", "Method", "Issues pre-run", "Runtime fail", "Manual int.", "Task succ."
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<28}{:<10}{:>16}{:>14}{:>13}{:>12}",
            format!("{}: {}", row.task, row.title),
            row.method.label(),
            row.issues_pre_run,
            format!("{}/{}", row.runtime_failures, row.runs),
            row.manual_interventions,
            format!("{}/{}", row.task_successes, row.runs)
        );
    }
    let _ = writeln!(s, "contract-only vs schema-detectable issues: {} to {}", r.contract_only_issues, r.schema_issues);
    s
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18}{:>14}{:>14}{:>12}", "Configuration", "Comp. success", "Failure red.", "Unsafe act.");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18}{:>13.1}%{:>13.1}%{:>12}",
            r.configuration, r.success_rate, r.failure_reduction, r.unsafe_acceptances
        );
    }
    s
}

/// Writes `dir/<name>.json`, creating `dir` as needed.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(dir.join(format!("{name}.json")), text + "\n")
}
