//! World-state predicates: bare atoms (`gripper.is_open`) and single-literal
//! comparisons (`dist < 100cm`). Lists of predicates are implicit conjunctions.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::units::{Quantity, UnitError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse predicate `{text}`: {reason}")]
pub struct PredicateError {
    pub text: String,
    pub reason: String,
}

impl PredicateError {
    fn new(text: &str, reason: impl Into<String>) -> Self {
        Self { text: text.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Eq => "==",
            CompareOp::Ge => ">=",
            CompareOp::Gt => ">",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Gt => lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Atom { path: String },
    Compare { path: String, op: CompareOp, value: Quantity },
}

impl Predicate {
    pub fn atom(path: impl Into<String>) -> Self {
        Predicate::Atom { path: path.into() }
    }

    pub fn compare(path: impl Into<String>, op: CompareOp, value: Quantity) -> Self {
        Predicate::Compare { path: path.into(), op, value: value.normalized() }
    }

    pub fn path(&self) -> &str {
        match self {
            Predicate::Atom { path } | Predicate::Compare { path, .. } => path,
        }
    }

    /// Ambient facts that no upstream module establishes.
    pub fn is_environment_scoped(&self) -> bool {
        self.path().starts_with("env.")
    }
}

pub fn is_dotted_path(path: &str) -> bool {
    !path.is_empty()
        && path.split('.').all(|seg| {
            let mut chars = seg.chars();
            matches!(chars.next(), Some(c) if c.is_ascii_alphanumeric() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        })
}

pub fn parse_predicate(text: &str) -> Result<Predicate, PredicateError> {
    let trimmed = text.trim();
    let Some(op_start) = trimmed.find(['<', '>', '=', '!']) else {
        if is_dotted_path(trimmed) {
            return Ok(Predicate::atom(trimmed));
        }
        return Err(PredicateError::new(text, "expected a dotted path"));
    };
    let path = trimmed[..op_start].trim();
    let rest = &trimmed[op_start..];
    let op_len = rest.find(|c: char| !matches!(c, '<' | '>' | '=' | '!')).unwrap_or(rest.len());
    let op = match &rest[..op_len] {
        "<" => CompareOp::Lt,
        "<=" => CompareOp::Le,
        "==" => CompareOp::Eq,
        ">=" => CompareOp::Ge,
        ">" => CompareOp::Gt,
        other => return Err(PredicateError::new(text, format!("unknown operator `{other}`"))),
    };
    if !is_dotted_path(path) {
        return Err(PredicateError::new(text, "expected a dotted path before the operator"));
    }
    let literal = rest[op_len..].trim();
    let value = Quantity::parse(literal).map_err(|e| match e {
        UnitError::Unknown(u) => PredicateError::new(text, format!("unknown unit `{u}`")),
        UnitError::Malformed(_) => PredicateError::new(text, "malformed literal"),
    })?;
    Ok(Predicate::compare(path, op, value))
}

impl FromStr for Predicate {
    type Err = PredicateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_predicate(s)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Atom { path } => f.write_str(path),
            Predicate::Compare { path, op, value } => write!(f, "{path} {} {value}", op.symbol()),
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_predicate(&text).map_err(serde::de::Error::custom)
    }
}

/// One end of the set of magnitudes satisfying a comparison.
#[derive(Debug, Clone, Copy)]
struct Bound {
    value: f64,
    inclusive: bool,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lower: Option<Bound>,
    upper: Option<Bound>,
}

impl Interval {
    fn of(op: CompareOp, v: f64) -> Self {
        let closed = |inclusive| Some(Bound { value: v, inclusive });
        match op {
            CompareOp::Lt => Interval { lower: None, upper: closed(false) },
            CompareOp::Le => Interval { lower: None, upper: closed(true) },
            CompareOp::Eq => Interval { lower: closed(true), upper: closed(true) },
            CompareOp::Ge => Interval { lower: closed(true), upper: None },
            CompareOp::Gt => Interval { lower: closed(false), upper: None },
        }
    }

    fn within(&self, outer: &Interval) -> bool {
        let lower_ok = match (self.lower, outer.lower) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => match a.value.partial_cmp(&b.value) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => b.inclusive || !a.inclusive,
                _ => false,
            },
        };
        let upper_ok = match (self.upper, outer.upper) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => match a.value.partial_cmp(&b.value) {
                Some(Ordering::Less) => true,
                Some(Ordering::Equal) => b.inclusive || !a.inclusive,
                _ => false,
            },
        };
        lower_ok && upper_ok
    }
}

/// Whether `p` guarantees `q`: identical atoms, or comparisons on the same
/// path whose satisfying interval is contained in `q`'s. Different paths
/// never entail.
pub fn predicate_entails(p: &Predicate, q: &Predicate) -> bool {
    match (p, q) {
        (Predicate::Atom { path: a }, Predicate::Atom { path: b }) => a == b,
        (Predicate::Compare { path: pa, op: oa, value: va }, Predicate::Compare { path: pb, op: ob, value: vb }) => {
            let (va, vb) = (va.normalized(), vb.normalized());
            pa == pb && va.unit == vb.unit && Interval::of(*oa, va.magnitude).within(&Interval::of(*ob, vb.magnitude))
        }
        _ => false,
    }
}
