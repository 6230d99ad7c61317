use std::collections::BTreeSet;

use ecm_core::checker::delta::{BehChange, BehDelta, PermDelta, RecDelta, ResDelta, SigDelta, VerDelta};
use ecm_core::release::{
    evaluate_gate, parse_release_metadata, semver_only_classify, serialize_release_metadata, suggest_version,
    validate_deprecation, validate_migration_spec, CompatEvidence, DeprecationAction, EvidenceBundle, FieldMap, Gate,
    MigrationKind, MigrationSpec, PolicyEvidence, ReleaseError, RollbackEvidence, UpgradeEvidence,
};
use ecm_core::{
    classify_release, parse_manifest, CompatibilityClass, DeltaSet, EcmContract, PolicyProfile, ReleaseChannel,
    ReleaseRecord, SemVer,
};
use proptest::prelude::*;

const NAV: &str = include_str!("data/navigation.ecm.yaml");

const BEH: [BehChange; 5] = [
    BehChange::WeakenedPre,
    BehChange::StrengthenedPost,
    BehChange::StrengthenedPre,
    BehChange::WeakenedPost,
    BehChange::HandoffChanged,
];

fn delta(sig: SigDelta, beh: &[BehChange], res: ResDelta, perm: PermDelta, rec: RecDelta) -> DeltaSet {
    DeltaSet {
        sig,
        beh: BehDelta(beh.iter().copied().collect()),
        res,
        perm,
        rec,
        ver: VerDelta { old: SemVer::new(1, 3, 0), new: SemVer::new(1, 3, 1) },
    }
}

fn empty() -> DeltaSet {
    delta(SigDelta::Unchanged, &[], ResDelta::Unchanged, PermDelta::Unchanged, RecDelta::Unchanged)
}

/// Class table written out row by row: which sensitive deltas are present
/// decides the class unless the interface itself broke.
fn class_oracle(d: &DeltaSet) -> CompatibilityClass {
    use CompatibilityClass::*;
    let broke = d.sig == SigDelta::Incompatible
        || d.beh.0.contains(&BehChange::StrengthenedPre)
        || d.beh.0.contains(&BehChange::WeakenedPost)
        || d.beh.0.contains(&BehChange::HandoffChanged);
    if broke {
        return Breaking;
    }
    let key = (d.res == ResDelta::Increased, d.perm == PermDelta::Broadened, d.rec == RecDelta::Changed);
    match key {
        (false, false, false) => FullyCompatible,
        (true, false, false) => ResourceSensitive,
        (false, true, false) => PolicySensitive,
        (false, false, true) => RecoverySensitive,
        _ => Breaking,
    }
}

fn all_deltas() -> Vec<DeltaSet> {
    let mut out = Vec::new();
    for sig in [SigDelta::Unchanged, SigDelta::CompatibleExtension, SigDelta::Incompatible] {
        for mask in 0..32u32 {
            let beh: Vec<BehChange> =
                BEH.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, b)| *b).collect();
            for res in [ResDelta::Unchanged, ResDelta::Decreased, ResDelta::Increased] {
                for perm in [PermDelta::Unchanged, PermDelta::Narrowed, PermDelta::Broadened] {
                    for rec in [RecDelta::Unchanged, RecDelta::Changed] {
                        out.push(delta(sig, &beh, res, perm, rec));
                    }
                }
            }
        }
    }
    out
}

#[test]
fn classification_matches_the_class_table_on_every_delta() {
    let all = all_deltas();
    assert_eq!(all.len(), 3 * 32 * 3 * 3 * 2);
    for d in &all {
        assert_eq!(classify_release(d), class_oracle(d), "{d}");
    }
}

#[test]
fn named_deltas() {
    use CompatibilityClass::*;
    assert_eq!(classify_release(&empty()), FullyCompatible);
    let mut d = empty();
    d.perm = PermDelta::Broadened;
    assert_eq!(classify_release(&d), PolicySensitive);
    let mut d = empty();
    d.res = ResDelta::Increased;
    d.rec = RecDelta::Changed;
    assert_eq!(classify_release(&d), Breaking);
    let mut d = empty();
    d.res = ResDelta::Decreased;
    d.perm = PermDelta::Narrowed;
    d.sig = SigDelta::CompatibleExtension;
    d.beh = BehDelta([BehChange::WeakenedPre, BehChange::StrengthenedPost].into());
    assert_eq!(classify_release(&d), FullyCompatible);
}

#[test]
fn version_suggestions() {
    let v = SemVer::new(1, 3, 0);
    assert_eq!(suggest_version(&v, CompatibilityClass::FullyCompatible, &empty()), SemVer::new(1, 3, 1));
    let mut ext = empty();
    ext.sig = SigDelta::CompatibleExtension;
    assert_eq!(suggest_version(&v, classify_release(&ext), &ext), SemVer::new(1, 4, 0));
    let mut res = empty();
    res.res = ResDelta::Increased;
    assert_eq!(suggest_version(&v, CompatibilityClass::ResourceSensitive, &res), SemVer::new(2, 0, 0));
}

#[test]
fn every_non_compatible_class_takes_a_major_bump() {
    let v = SemVer::new(0, 9, 4);
    for d in all_deltas() {
        let class = classify_release(&d);
        let next = suggest_version(&v, class, &d);
        assert!(next > v);
        // The semver reading of the suggested bump must not hide the change.
        let reading = semver_only_classify(&v, &next).unwrap();
        assert_eq!(reading == CompatibilityClass::Breaking, class != CompatibilityClass::FullyCompatible, "{d}");
    }
}

#[test]
fn plain_semver_reading() {
    let v = |a, b, c| SemVer::new(a, b, c);
    assert_eq!(semver_only_classify(&v(1, 0, 0), &v(2, 0, 0)).unwrap(), CompatibilityClass::Breaking);
    assert_eq!(semver_only_classify(&v(1, 0, 0), &v(1, 1, 0)).unwrap(), CompatibilityClass::FullyCompatible);
}

fn nav() -> EcmContract {
    parse_manifest(NAV).unwrap()
}

fn record(channel: ReleaseChannel, evidence: EvidenceBundle) -> ReleaseRecord {
    let mut rec = ReleaseRecord::new(nav());
    rec.channel = channel;
    rec.evidence = evidence;
    rec
}

fn open_policy() -> PolicyProfile {
    let mut pol = PolicyProfile::empty("open");
    pol.allowed_channels = ReleaseChannel::ALL.into_iter().collect();
    pol
}

#[test]
fn beta_with_stable_evidence_promotes() {
    let rec = record(ReleaseChannel::Beta, EvidenceBundle::sufficient_for(ReleaseChannel::Stable));
    let r = evaluate_gate(&rec, ReleaseChannel::Stable, &open_policy()).unwrap();
    assert!(r.pass, "{:?}", r.failed_gates);
}

#[test]
fn partial_contract_fails_the_beta_contract_gate() {
    let mut ev = EvidenceBundle::sufficient_for(ReleaseChannel::Beta);
    ev.contract_complete = false;
    let r = evaluate_gate(&record(ReleaseChannel::Sandbox, ev), ReleaseChannel::Beta, &open_policy()).unwrap();
    assert!(!r.pass);
    assert_eq!(r.failed_gates, vec![Gate::Contract]);
}

#[test]
fn certification_needs_traced_rollback() {
    let mut ev = EvidenceBundle::sufficient_for(ReleaseChannel::Certified);
    ev.rollback_ready = RollbackEvidence::RequiredMet;
    let r = evaluate_gate(&record(ReleaseChannel::Stable, ev), ReleaseChannel::Certified, &open_policy()).unwrap();
    assert_eq!(r.failed_gates, vec![Gate::Rollback]);
}

#[test]
fn skipping_a_channel_is_an_error() {
    let rec = record(ReleaseChannel::Sandbox, EvidenceBundle::sufficient_for(ReleaseChannel::Certified));
    for target in [ReleaseChannel::Stable, ReleaseChannel::Certified, ReleaseChannel::Sandbox] {
        assert!(matches!(evaluate_gate(&rec, target, &open_policy()), Err(ReleaseError::ChannelSkip { .. })));
    }
}

#[test]
fn channel_outside_policy_fails_the_channel_gate() {
    let mut pol = open_policy();
    pol.allowed_channels.remove(&ReleaseChannel::Stable);
    let rec = record(ReleaseChannel::Beta, EvidenceBundle::sufficient_for(ReleaseChannel::Stable));
    assert_eq!(evaluate_gate(&rec, ReleaseChannel::Stable, &pol).unwrap().failed_gates, vec![Gate::Channel]);
}

#[test]
fn breaking_release_needs_a_migration_spec_for_stable() {
    let mut rec = record(ReleaseChannel::Beta, EvidenceBundle::sufficient_for(ReleaseChannel::Stable));
    rec.class_vs_predecessor = Some(CompatibilityClass::Breaking);
    assert_eq!(
        evaluate_gate(&rec, ReleaseChannel::Stable, &open_policy()).unwrap().failed_gates,
        vec![Gate::Migration]
    );
    rec.migration_spec = Some(MigrationSpec {
        kind: [MigrationKind::Schema].into(),
        field_maps: Vec::new(),
        adapter_available: true,
        dual_version_window: 1,
    });
    assert!(evaluate_gate(&rec, ReleaseChannel::Stable, &open_policy()).unwrap().pass);
}

#[test]
fn limited_policy_review_blocks_a_policy_sensitive_release() {
    let mut ev = EvidenceBundle::sufficient_for(ReleaseChannel::Stable);
    ev.policy_review = PolicyEvidence::Limited;
    let mut rec = record(ReleaseChannel::Beta, ev);
    rec.class_vs_predecessor = Some(CompatibilityClass::PolicySensitive);
    let r = evaluate_gate(&rec, ReleaseChannel::Stable, &open_policy()).unwrap();
    assert!(r.failed_gates.contains(&Gate::Policy));
}

fn evidence() -> impl Strategy<Value = EvidenceBundle> {
    (
        any::<bool>(),
        proptest::sample::select(CompatEvidence::ALL),
        proptest::sample::select(PolicyEvidence::ALL),
        proptest::sample::select(UpgradeEvidence::ALL),
        proptest::sample::select(RollbackEvidence::ALL),
    )
        .prop_map(|(c, compat, policy, upgrade, rollback)| EvidenceBundle {
            contract_complete: c,
            compat_verified: compat,
            policy_review: policy,
            upgrade_tested: upgrade,
            rollback_ready: rollback,
        })
}

proptest! {
    #[test]
    fn gate_passes_iff_evidence_dominates_the_channel_row(ev in evidence(), step in 0usize..3) {
        let from = ReleaseChannel::ALL[step];
        let to = ReleaseChannel::ALL[step + 1];
        let need = EvidenceBundle::sufficient_for(to);
        let dominates = (ev.contract_complete || !need.contract_complete)
            && ev.compat_verified >= need.compat_verified
            && ev.policy_review >= need.policy_review
            && ev.upgrade_tested >= need.upgrade_tested
            && ev.rollback_ready >= need.rollback_ready;
        let r = evaluate_gate(&record(from, ev), to, &open_policy()).unwrap();
        prop_assert_eq!(r.pass, dominates);
        prop_assert_eq!(r.failed_gates.is_empty(), r.pass);
    }

    #[test]
    fn sufficient_evidence_is_monotone_up_the_ladder(step in 0usize..3) {
        let lower = EvidenceBundle::sufficient_for(ReleaseChannel::ALL[step]);
        let upper = EvidenceBundle::sufficient_for(ReleaseChannel::ALL[step + 1]);
        prop_assert!(upper.compat_verified >= lower.compat_verified);
        prop_assert!(upper.policy_review >= lower.policy_review);
        prop_assert!(upper.upgrade_tested >= lower.upgrade_tested);
        prop_assert!(upper.rollback_ready >= lower.rollback_ready);
    }
}

#[test]
fn deprecation_window() {
    let rec = ReleaseRecord::new(nav());
    assert!(matches!(
        validate_deprecation(&rec, DeprecationAction::Remove),
        Err(ReleaseError::DeprecationWindow { cycles: 0 })
    ));
    let flagged = validate_deprecation(&rec, DeprecationAction::Flag).unwrap();
    assert!(flagged.is_deprecated());
    assert!(validate_deprecation(&flagged, DeprecationAction::Remove).is_err());
    let mut aged = flagged.clone();
    aged.deprecation_notice_cycles = 1;
    assert!(validate_deprecation(&aged, DeprecationAction::Remove).is_ok());
    let again = validate_deprecation(&aged, DeprecationAction::Flag).unwrap();
    assert_eq!(again.deprecation_notice_cycles, 1);
    assert_eq!(again, aged);
}

fn breaking_pair() -> (EcmContract, EcmContract) {
    let new = NAV.replace("{tolerance: Float}", "{tolerance_m: Float}").replace("1.3.0", "2.0.0");
    (nav(), parse_manifest(&new).unwrap())
}

fn spec(kinds: &[MigrationKind], maps: &[(&str, &str)]) -> MigrationSpec {
    MigrationSpec {
        kind: kinds.iter().copied().collect::<BTreeSet<_>>(),
        field_maps: maps
            .iter()
            .map(|(o, n)| FieldMap { old_path: o.to_string(), new_path: n.to_string(), transform: None })
            .collect(),
        adapter_available: false,
        dual_version_window: 1,
    }
}

#[test]
fn migration_spec_coverage() {
    let (old, new) = breaking_pair();
    let maps = [("signature.input_schema.tolerance", "signature.input_schema.tolerance_m")];
    assert!(validate_migration_spec(&spec(&[MigrationKind::Schema], &maps), &old, &new).is_empty());

    let gap = validate_migration_spec(&spec(&[MigrationKind::Policy], &maps), &old, &new);
    assert!(gap.iter().any(|f| f.code == "MIGRATION_KIND_GAP"));

    let bad = [("signature.input_schema.slack", "signature.input_schema.tolerance_m")];
    let invalid = validate_migration_spec(&spec(&[MigrationKind::Schema], &bad), &old, &new);
    assert_eq!(invalid.iter().map(|f| f.code.as_str()).collect::<Vec<_>>(), vec!["MIGRATION_PATH_INVALID"]);
}

#[test]
fn release_metadata_round_trips() {
    let mut rec = record(ReleaseChannel::Stable, EvidenceBundle::sufficient_for(ReleaseChannel::Stable));
    rec.class_vs_predecessor = Some(CompatibilityClass::PolicySensitive);
    rec.deprecation_notice_cycles = 2;
    rec.migration_spec = Some(spec(&[MigrationKind::Schema, MigrationKind::Recovery], &[("a", "b")]));
    rec.environment_tags = vec!["indoor".into()];
    rec.evidence_trail = vec!["beta -> stable: all gates passed".into()];
    let text = serialize_release_metadata(&rec);
    assert_eq!(parse_release_metadata(rec.contract.clone(), &text).unwrap(), rec);
    assert!(parse_release_metadata(nav(), "channel: gold\n").is_err());
}
