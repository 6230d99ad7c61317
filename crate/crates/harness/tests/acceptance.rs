//! Acceptance run: one line per criterion, each with its own time limit.
//! Built without the libtest harness so the lines are never captured.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ecm_core::checker::delta::{BehChange, BehDelta, PermDelta, RecDelta, ResDelta, SigDelta, VerDelta};
use ecm_core::checker::{check_pair, CheckConfig, DeltaSet, Dimension};
use ecm_core::completeness::{check_completeness, strip_field, REQUIRED_FIELDS};
use ecm_core::release::{
    evaluate_gate, suggest_version, validate_deprecation, DeprecationAction, EvidenceBundle, ReleaseError,
};
use ecm_core::{
    classify_release, parse_manifest, serialize_manifest, CompatibilityClass, ReleaseChannel, ReleaseRecord, SemVer,
};
use ecm_harness::experiments::{ablation_on, experiment1_on};
use ecm_harness::{run_experiment2, run_experiment3, Fixtures, Method, Population, POPULATION, SEED_PRIMARY};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eq<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Check {
    ensure(got == want, || format!("{what}: got {got:?}, want {want:?}"))
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol + 1e-9, || format!("{what}: got {got}, want {want} ± {tol}"))
}

fn pct(part: usize, whole: usize) -> f64 {
    100.0 * part as f64 / whole as f64
}

fn run(n: u32, name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = f();
    let took = start.elapsed();
    let verdict = match (&result, took <= limit) {
        (Ok(()), true) => "PASS".to_string(),
        (Ok(()), false) => format!("FAIL (took {took:.2?}, limit {limit:?})"),
        (Err(e), _) => format!("FAIL ({e})"),
    };
    println!("criterion {n} [{name}]: {verdict} in {took:.2?}");
    result.is_ok() && took <= limit
}

fn fixture_integrity() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let mut families: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for c in fx.library.iter() {
        let e = families.entry(c.family().to_string()).or_default();
        match c.release_channel {
            Some(ReleaseChannel::Stable) => e.0 += 1,
            Some(ReleaseChannel::Beta) => e.1 += 1,
            other => return Err(format!("{} is on channel {other:?}", c.key())),
        }
    }
    for (family, want) in
        [("navigation", (4, 2)), ("manipulation", (5, 3)), ("perception", (3, 2)), ("interaction", (4, 1))]
    {
        eq(family, families.get(family).copied(), Some(want))?;
    }
    eq("library size", fx.library.len(), 24)?;
    eq("oracle pairs", fx.oracle.len(), 42)?;
    eq("schema-detectable pairs", fx.oracle.schema_detectable(), 5)?;
    let counts = fx.oracle.dimension_counts();
    for (d, want) in [
        (Dimension::Sig, 13),
        (Dimension::Beh, 5),
        (Dimension::Res, 6),
        (Dimension::Perm, 8),
        (Dimension::Rec, 8),
        (Dimension::Ver, 1),
    ] {
        eq(&format!("oracle {d:?} pairs"), counts.get(&d).copied().unwrap_or(0), want)?;
    }
    Ok(())
}

fn experiment1() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let pop = Population::generate(&fx, SEED_PRIMARY, POPULATION).map_err(|e| e.to_string())?;
    let r = experiment1_on(&fx, &pop);
    eq("chains", r.chains, 500)?;
    let golden = [
        (Method::Naive, 500, 369, 26.2, None, None),
        (Method::SchemaOnly, 299, 173, 65.4, Some(173), Some(5)),
        (Method::Contract, 100, 9, 98.2, Some(9), Some(40)),
    ];
    for (m, acc, fail, success, fa, fr) in golden {
        let got = r.result(m);
        let label = m.label();
        eq(&format!("{label} accepted"), got.accepted, acc)?;
        eq(&format!("{label} failures"), got.post_accept_failures, fail)?;
        eq(&format!("{label} false accepts"), got.false_accepts, fa)?;
        eq(&format!("{label} false rejects"), got.false_rejects, fr)?;
        close(&format!("{label} success %"), got.success_rate, success, 0.1)?;
        // Independent recomputation from the counts.
        close(&format!("{label} success % from counts"), got.success_rate, pct(500 - fail, 500), 0.1)?;
    }
    Ok(())
}

fn experiment2() -> Check {
    use CompatibilityClass::*;
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let r = run_experiment2(&fx).map_err(|e| e.to_string())?;
    eq("cases", r.cases.len(), 24)?;
    eq("contract correct", r.contract_correct, 20)?;
    eq("semver correct", r.semver_correct, 12)?;
    for c in &r.cases {
        let should = matches!(c.truth, FullyCompatible | Breaking);
        ensure((c.semver == c.truth) == should, || format!("{}: semver says {} for {}", c.case_id, c.semver, c.truth))?;
    }
    // Rows are truth, columns predicted, both in FC RS PS RecS BRK order.
    let want = [[7, 0, 0, 1, 0], [2, 3, 0, 0, 1], [0, 0, 3, 0, 0], [0, 0, 0, 3, 0], [0, 0, 0, 0, 4]];
    eq("confusion matrix", r.confusion, want)?;
    eq(
        "rollbacks (contract, semver, ad hoc)",
        (r.rollbacks.contract, r.rollbacks.semver, r.rollbacks.ad_hoc),
        (0, 12, 16),
    )
}

fn experiment3() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let r = run_experiment3(&fx).map_err(|e| e.to_string())?;
    for (task, contract, schema) in [("A", 7, 1), ("B", 6, 2), ("C", 9, 2)] {
        let row = |m| r.row(task, m).ok_or_else(|| format!("no row for task {task} / {m:?}"));
        eq(&format!("{task} contract issues"), row(Method::Contract)?.issues_pre_run, contract)?;
        eq(&format!("{task} schema issues"), row(Method::SchemaOnly)?.issues_pre_run, schema)?;
        eq(&format!("{task} naive issues"), row(Method::Naive)?.issues_pre_run, 0)?;
        for (m, succ) in [(Method::Naive, 0), (Method::SchemaOnly, 0), (Method::Contract, 10)] {
            let row = row(m)?;
            eq(&format!("{task} {} successes", m.label()), (row.task_successes, row.runs), (succ, 10))?;
            eq(&format!("{task} {} manual interventions", m.label()), row.manual_interventions, 10 - succ)?;
        }
    }
    eq("contract-only vs schema issues", (r.contract_only_issues, r.schema_issues), (17, 5))
}

fn ablation() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let pop = Population::generate(&fx, SEED_PRIMARY, POPULATION).map_err(|e| e.to_string())?;
    let naive = pop.failures();
    let golden = [
        (None, 9, 98.2),
        (Some(Dimension::Sig), 152, 69.6),
        (Some(Dimension::Beh), 9, 98.2),
        (Some(Dimension::Res), 16, 96.8),
        (Some(Dimension::Perm), 20, 96.0),
        (Some(Dimension::Rec), 28, 94.4),
        (Some(Dimension::Ver), 9, 98.2),
    ];
    for (removed, unsafe_acc, success) in golden {
        let row = ablation_on(&fx, &pop, removed);
        eq(&format!("{} unsafe acceptances", row.configuration), row.unsafe_acceptances, unsafe_acc)?;
        close(&format!("{} success %", row.configuration), row.success_rate, success, 0.1)?;
        let reduction = pct(naive - unsafe_acc, naive);
        close(&format!("{} failure reduction %", row.configuration), row.failure_reduction, reduction, 0.1)?;
    }
    Ok(())
}

fn properties() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let p = fx.bench_profile();
    for seed in [1, 2, 3, 5, 8, SEED_PRIMARY] {
        let pop = Population::generate(&fx, seed, POPULATION).map_err(|e| e.to_string())?;
        let r = experiment1_on(&fx, &pop);
        let (schema, contract) = (r.result(Method::SchemaOnly), r.result(Method::Contract));
        ensure(contract.false_accepts <= schema.false_accepts, || format!("seed {seed}: contract FA above schema FA"))?;
        let full = ablation_on(&fx, &pop, None).unsafe_acceptances;
        let full_acc = pop.contract_accepts(&fx, &CheckConfig::default());
        for d in Dimension::CONTRACT {
            let less = pop.contract_accepts(&fx, &CheckConfig::without(d));
            ensure(full_acc.iter().zip(&less).all(|(f, l)| !f || *l), || {
                format!("seed {seed}: enabling {d:?} turned a reject into an accept")
            })?;
            let unsafe_without = ablation_on(&fx, &pop, Some(d)).unsafe_acceptances;
            ensure(unsafe_without >= full, || format!("seed {seed}: removing {d:?} lowered unsafe acceptances"))?;
        }
        let again = Population::generate(&fx, seed, POPULATION).map_err(|e| e.to_string())?;
        let bytes = |r| serde_json::to_vec(&r).expect("reports serialize");
        ensure(bytes(experiment1_on(&fx, &again)) == bytes(r), || format!("seed {seed}: report is not deterministic"))?;
    }
    for e in fx.oracle.entries() {
        let (a, b) = (fx.library.by_key(&e.upstream), fx.library.by_key(&e.downstream));
        let (Some(a), Some(b)) = (a, b) else {
            return Err(format!("oracle pair {} -> {} not in library", e.upstream, e.downstream));
        };
        let report = check_pair(a, b, &p.embodiment, &p.policy, &CheckConfig::default());
        ensure(!report.outcome.is_accepted(), || {
            format!("checker accepts oracle pair {} -> {}", e.upstream, e.downstream)
        })?;
    }
    Ok(())
}

fn delta(sig: SigDelta, beh: &[BehChange], res: ResDelta, perm: PermDelta, rec: RecDelta) -> DeltaSet {
    DeltaSet {
        sig,
        beh: BehDelta(beh.iter().copied().collect()),
        res,
        perm,
        rec,
        ver: VerDelta { old: SemVer::new(1, 3, 0), new: SemVer::new(1, 3, 0) },
    }
}

fn release_discipline() -> Check {
    use CompatibilityClass::*;
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let pol = &fx.bench_profile().policy;
    let rows = [
        (
            delta(SigDelta::Unchanged, &[], ResDelta::Unchanged, PermDelta::Unchanged, RecDelta::Unchanged),
            FullyCompatible,
        ),
        (
            delta(SigDelta::Unchanged, &[], ResDelta::Increased, PermDelta::Unchanged, RecDelta::Unchanged),
            ResourceSensitive,
        ),
        (
            delta(SigDelta::CompatibleExtension, &[], ResDelta::Unchanged, PermDelta::Broadened, RecDelta::Unchanged),
            PolicySensitive,
        ),
        (
            delta(
                SigDelta::Unchanged,
                &[BehChange::StrengthenedPost],
                ResDelta::Unchanged,
                PermDelta::Unchanged,
                RecDelta::Changed,
            ),
            RecoverySensitive,
        ),
        (delta(SigDelta::Incompatible, &[], ResDelta::Unchanged, PermDelta::Unchanged, RecDelta::Unchanged), Breaking),
        (
            delta(
                SigDelta::Unchanged,
                &[BehChange::WeakenedPost],
                ResDelta::Unchanged,
                PermDelta::Unchanged,
                RecDelta::Unchanged,
            ),
            Breaking,
        ),
    ];
    let old = SemVer::new(1, 3, 0);
    for (d, want) in &rows {
        eq(&format!("class of [{d}]"), classify_release(d), *want)?;
        let next = suggest_version(&old, *want, d);
        if want.is_sensitive() || *want == Breaking {
            eq(&format!("{want} bump"), next, SemVer::new(2, 0, 0))?;
        }
    }
    eq("patch bump", suggest_version(&old, FullyCompatible, &rows[0].0), SemVer::new(1, 3, 1))?;

    let module = fx.library.iter().next().ok_or("empty library")?.clone();
    let ladder = [ReleaseChannel::Sandbox, ReleaseChannel::Beta, ReleaseChannel::Stable, ReleaseChannel::Certified];
    for w in ladder.windows(2) {
        let mut rec = ReleaseRecord::new(module.clone());
        rec.channel = w[0];
        rec.evidence = EvidenceBundle::sufficient_for(w[1]);
        let ok = evaluate_gate(&rec, w[1], pol).map_err(|e| e.to_string())?;
        ensure(ok.pass, || format!("{} -> {} fails with sufficient evidence: {:?}", w[0], w[1], ok.failed_gates))?;
        if w[0] != ReleaseChannel::Sandbox {
            rec.evidence = EvidenceBundle::sufficient_for(w[0]);
            let short = evaluate_gate(&rec, w[1], pol).map_err(|e| e.to_string())?;
            ensure(!short.pass, || format!("{} -> {} passes on {} evidence", w[0], w[1], w[0]))?;
        }
    }
    for (from, to) in
        [(ReleaseChannel::Sandbox, ReleaseChannel::Stable), (ReleaseChannel::Beta, ReleaseChannel::Certified)]
    {
        let mut rec = ReleaseRecord::new(module.clone());
        rec.channel = from;
        rec.evidence = EvidenceBundle::sufficient_for(ReleaseChannel::Certified);
        ensure(matches!(evaluate_gate(&rec, to, pol), Err(ReleaseError::ChannelSkip { .. })), || {
            format!("{from} -> {to} is not refused as a skip")
        })?;
    }
    let flagged =
        validate_deprecation(&ReleaseRecord::new(module), DeprecationAction::Flag).map_err(|e| e.to_string())?;
    ensure(validate_deprecation(&flagged, DeprecationAction::Remove).is_err(), || {
        "removal allowed with 0 notice cycles".into()
    })?;
    let mut served = flagged;
    served.deprecation_notice_cycles = 1;
    ensure(validate_deprecation(&served, DeprecationAction::Remove).is_ok(), || {
        "removal refused after one cycle".into()
    })
}

const LISTING: &str = include_str!("../../core/tests/data/navigation.ecm.yaml");

fn parser_round_trip() -> Check {
    let fx = Fixtures::load_default().map_err(|e| e.to_string())?;
    let mut texts: Vec<(String, String)> = Vec::new();
    for c in fx.library.iter() {
        let path = fx.root.join("library").join(format!("{}.ecm.yaml", c.module_id));
        texts.push((c.key(), std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?));
    }
    texts.push(("listing".into(), LISTING.to_string()));
    eq("manifests", texts.len(), 25)?;
    for (name, text) in &texts {
        let parsed = parse_manifest(text).map_err(|e| format!("{name}: {e}"))?;
        let again = parse_manifest(&serialize_manifest(&parsed)).map_err(|e| format!("{name} re-parse: {e}"))?;
        ensure(again == parsed, || format!("{name} does not round-trip"))?;
    }
    let listing = parse_manifest(LISTING).map_err(|e| e.to_string())?;
    ensure(check_completeness(&listing).complete, || "the listing is not contract-complete".into())?;
    for (dim, field) in REQUIRED_FIELDS.iter().filter(|(_, f)| *f != "module_id") {
        let mut c = listing.clone();
        ensure(strip_field(&mut c, field), || format!("cannot strip {field}"))?;
        let report = check_completeness(&c);
        let flagged: Vec<_> = report.missing_fields.iter().map(|m| (m.dimension, m.field)).collect();
        eq(&format!("missing after stripping {field}"), flagged, vec![(*dim, *field)])?;
    }
    let no_id = LISTING.replacen("module_id: ecm.navigation.precise", "", 1);
    ensure(no_id != LISTING && parse_manifest(&no_id).is_err(), || "a manifest without module_id parses".into())
}

fn main() -> std::process::ExitCode {
    let results = [
        run(1, "fixture integrity", Duration::from_secs(1), fixture_integrity),
        run(2, "experiment 1 golden", Duration::from_secs(30), experiment1),
        run(3, "experiment 2 golden", Duration::from_secs(5), experiment2),
        run(4, "experiment 3 golden", Duration::from_secs(5), experiment3),
        run(5, "ablation golden", Duration::from_secs(60), ablation),
        run(6, "property suite", Duration::from_secs(120), properties),
        run(7, "release discipline", Duration::from_secs(1), release_discipline),
        run(8, "parser round-trip and completeness", Duration::from_secs(5), parser_round_trip),
    ];
    let failed: Vec<_> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria pass", results.len(), results.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
