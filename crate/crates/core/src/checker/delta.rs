//! Per-dimension difference between two versions of one module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::contract::{EcmContract, FieldSpec, HandoffSemantics, PermBound, PermCategory, Resources};
use crate::predicate::{predicate_entails, Predicate};
use crate::profiles::bound_within;
use crate::version::SemVer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot diff {old} against {new}: different modules")]
pub struct ModuleMismatch {
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigDelta {
    Unchanged,
    /// Outputs added or inputs dropped; existing callers keep working.
    CompatibleExtension,
    Incompatible,
}

impl SigDelta {
    pub fn is_incompatible(self) -> bool {
        self == SigDelta::Incompatible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BehChange {
    WeakenedPre,
    StrengthenedPost,
    StrengthenedPre,
    WeakenedPost,
    HandoffChanged,
}

impl BehChange {
    pub fn is_incompatible(self) -> bool {
        matches!(self, BehChange::StrengthenedPre | BehChange::WeakenedPost | BehChange::HandoffChanged)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BehDelta(pub BTreeSet<BehChange>);

impl BehDelta {
    pub fn is_incompatible(&self) -> bool {
        self.0.iter().any(|c| c.is_incompatible())
    }

    pub fn contains(&self, c: BehChange) -> bool {
        self.0.contains(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResDelta {
    Unchanged,
    Decreased,
    Increased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PermDelta {
    Unchanged,
    Narrowed,
    Broadened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecDelta {
    Unchanged,
    Changed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerDelta {
    pub old: SemVer,
    pub new: SemVer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaSet {
    pub sig: SigDelta,
    pub beh: BehDelta,
    pub res: ResDelta,
    pub perm: PermDelta,
    pub rec: RecDelta,
    pub ver: VerDelta,
}

impl DeltaSet {
    /// True when no contract dimension changed (the version may have).
    pub fn is_empty(&self) -> bool {
        self.sig == SigDelta::Unchanged
            && self.beh.0.is_empty()
            && self.res == ResDelta::Unchanged
            && self.perm == PermDelta::Unchanged
            && self.rec == RecDelta::Unchanged
    }
}

impl fmt::Display for DeltaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let beh: Vec<_> = self.beh.0.iter().map(|c| format!("{c:?}")).collect();
        write!(
            f,
            "Sig {:?}, Beh [{}], Res {:?}, Perm {:?}, Rec {:?}, Ver {} -> {}",
            self.sig,
            beh.join(", "),
            self.res,
            self.perm,
            self.rec,
            self.ver.old,
            self.ver.new
        )
    }
}

pub fn contract_delta(old: &EcmContract, new: &EcmContract) -> Result<DeltaSet, ModuleMismatch> {
    if old.module_id != new.module_id {
        return Err(ModuleMismatch { old: old.module_id.to_string(), new: new.module_id.to_string() });
    }
    Ok(DeltaSet {
        sig: sig_delta(old, new),
        beh: beh_delta(old, new),
        res: res_delta(&old.res, &new.res),
        perm: perm_delta(old, new),
        rec: rec_delta(old, new),
        ver: VerDelta { old: old.version(), new: new.version() },
    })
}

fn sig_delta(old: &EcmContract, new: &EcmContract) -> SigDelta {
    let (o, n) = (&old.sig, &new.sig);
    if o.coord_frame != n.coord_frame || o.invocation_mode != n.invocation_mode {
        return SigDelta::Incompatible;
    }
    let same = |a: &FieldSpec, b: &FieldSpec| a == b;
    // Every input the new version asks for must already have been supplied.
    let inputs_kept = n.inputs().iter().all(|ni| o.inputs().iter().any(|oi| same(oi, ni)));
    let outputs_kept = o.outputs().iter().all(|oo| n.outputs().iter().any(|no| same(oo, no)));
    if !inputs_kept || !outputs_kept {
        return SigDelta::Incompatible;
    }
    if n.outputs().len() > o.outputs().len() || n.inputs().len() < o.inputs().len() {
        SigDelta::CompatibleExtension
    } else {
        SigDelta::Unchanged
    }
}

/// Whether some predicate in `to` is not implied by any predicate in `from`.
fn gains(from: &[Predicate], to: &[Predicate]) -> bool {
    to.iter().any(|q| !from.iter().any(|p| predicate_entails(p, q)))
}

fn handoff_shift(old: Option<HandoffSemantics>, new: Option<HandoffSemantics>) -> (bool, bool) {
    let ok = |h: HandoffSemantics, req: Option<HandoffSemantics>| req.is_none_or(|r| h.satisfies(r));
    let stronger = HandoffSemantics::ALL.iter().any(|&h| ok(h, old) && !ok(h, new));
    let weaker = HandoffSemantics::ALL.iter().any(|&h| ok(h, new) && !ok(h, old));
    (stronger, weaker)
}

fn beh_delta(old: &EcmContract, new: &EcmContract) -> BehDelta {
    let (o, n) = (&old.beh, &new.beh);
    let mut set = BTreeSet::new();
    let assumptions_added = n.semantic_assumptions.iter().any(|a| !o.semantic_assumptions.contains(a));
    let assumptions_dropped = o.semantic_assumptions.iter().any(|a| !n.semantic_assumptions.contains(a));
    let (req_stronger, req_weaker) = handoff_shift(o.required_handoff, n.required_handoff);
    if gains(&o.preconditions, &n.preconditions) || assumptions_added || req_stronger {
        set.insert(BehChange::StrengthenedPre);
    }
    if gains(&n.preconditions, &o.preconditions) || assumptions_dropped || req_weaker {
        set.insert(BehChange::WeakenedPre);
    }
    let (o_post, n_post): (Vec<_>, Vec<_>) = (
        o.postconditions.iter().chain(&o.invariants).cloned().collect(),
        n.postconditions.iter().chain(&n.invariants).cloned().collect(),
    );
    if gains(&n_post, &o_post) {
        set.insert(BehChange::WeakenedPost);
    }
    if gains(&o_post, &n_post) {
        set.insert(BehChange::StrengthenedPost);
    }
    if o.handoff.unwrap_or(HandoffSemantics::NominalSuccess) != n.handoff.unwrap_or(HandoffSemantics::NominalSuccess) {
        set.insert(BehChange::HandoffChanged);
    }
    BehDelta(set)
}

fn res_delta(o: &Resources, n: &Resources) -> ResDelta {
    let mut up = false;
    let mut down = false;
    let mut cmp = |a: f64, b: f64| {
        up |= b > a;
        down |= b < a;
    };
    let zero = crate::contract::ComputeSpec::new(0.0, 0.0, 0.0);
    let (oc, nc) = (o.compute.as_ref().unwrap_or(&zero), n.compute.as_ref().unwrap_or(&zero));
    for ((_, a), (_, b)) in oc.components().into_iter().zip(nc.components()) {
        cmp(a, b);
    }
    cmp(o.control_frequency_hz.unwrap_or(0.0), n.control_frequency_hz.unwrap_or(0.0));
    let sets: [(BTreeSet<&str>, BTreeSet<&str>); 3] = [
        (o.sensors().iter().map(|s| s.kind.as_str()).collect(), n.sensors().iter().map(|s| s.kind.as_str()).collect()),
        (
            o.actuators().iter().map(|a| a.kind.as_str()).collect(),
            n.actuators().iter().map(|a| a.kind.as_str()).collect(),
        ),
        (
            o.exclusive_locks.iter().map(String::as_str).collect(),
            n.exclusive_locks.iter().map(String::as_str).collect(),
        ),
    ];
    for (a, b) in sets {
        up |= !b.is_subset(&a);
        down |= !a.is_subset(&b);
    }
    match (up, down) {
        (true, _) => ResDelta::Increased,
        (false, true) => ResDelta::Decreased,
        _ => ResDelta::Unchanged,
    }
}

fn perm_delta(old: &EcmContract, new: &EcmContract) -> PermDelta {
    let index = |c: &EcmContract| -> BTreeMap<(PermCategory, String), PermBound> {
        c.perm.claims().map(|(cat, claim)| ((cat, claim.key.clone()), claim.bound.clone())).collect()
    };
    let (o, n) = (index(old), index(new));
    let mut broadened = new.perm.audit_req > old.perm.audit_req;
    let mut narrowed = new.perm.audit_req < old.perm.audit_req;
    for (k, nb) in &n {
        match o.get(k) {
            Some(ob) => {
                broadened |= !bound_within(&k.1, nb, ob);
                narrowed |= !bound_within(&k.1, ob, nb);
            }
            None => broadened |= *nb != PermBound::Flag(false),
        }
    }
    for (k, ob) in &o {
        if !n.contains_key(k) {
            narrowed |= *ob != PermBound::Flag(false);
        }
    }
    if broadened {
        PermDelta::Broadened
    } else if narrowed {
        PermDelta::Narrowed
    } else {
        PermDelta::Unchanged
    }
}

fn rec_delta(old: &EcmContract, new: &EcmContract) -> RecDelta {
    let (o, n) = (&old.rec, &new.rec);
    if o.failure_modes != n.failure_modes
        || o.rollback_state != n.rollback_state
        || o.retry_policy != n.retry_policy
        || o.safe_stop_action != n.safe_stop_action
        || o.escalation != n.escalation
    {
        RecDelta::Changed
    } else {
        RecDelta::Unchanged
    }
}
