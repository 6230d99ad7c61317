//! Physical quantities and the unit alias table.
//!
//! Every quantity that enters a contract is normalized onto one of the
//! canonical units (`m`, `rad`, `N`, `Hz`, `ms`, `core`, `GB`) or is
//! dimensionless. Aliases are rescaled exactly when parsed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("unknown unit `{0}`")]
    Unknown(String),
    #[error("malformed quantity `{0}`")]
    Malformed(String),
}

/// Unit symbols accepted in manifests, canonical ones first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    Meter,
    Radian,
    Newton,
    Hertz,
    Millisecond,
    Core,
    Gigabyte,
    Dimensionless,
    Centimeter,
    Millimeter,
    Degree,
    Second,
    Kilohertz,
    Megabyte,
}

impl Unit {
    pub const CANONICAL: [Unit; 8] = [
        Unit::Meter,
        Unit::Radian,
        Unit::Newton,
        Unit::Hertz,
        Unit::Millisecond,
        Unit::Core,
        Unit::Gigabyte,
        Unit::Dimensionless,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::Radian => "rad",
            Unit::Newton => "N",
            Unit::Hertz => "Hz",
            Unit::Millisecond => "ms",
            Unit::Core => "core",
            Unit::Gigabyte => "GB",
            Unit::Dimensionless => "",
            Unit::Centimeter => "cm",
            Unit::Millimeter => "mm",
            Unit::Degree => "deg",
            Unit::Second => "s",
            Unit::Kilohertz => "kHz",
            Unit::Megabyte => "MB",
        }
    }

    pub fn is_canonical(self) -> bool {
        Self::CANONICAL.contains(&self)
    }

    /// Canonical unit and the exact factor that converts a magnitude in `self`
    /// into the canonical unit.
    pub fn canonical(self) -> (Unit, f64) {
        match self {
            Unit::Centimeter => (Unit::Meter, 0.01),
            Unit::Millimeter => (Unit::Meter, 0.001),
            Unit::Degree => (Unit::Radian, std::f64::consts::PI / 180.0),
            Unit::Second => (Unit::Millisecond, 1000.0),
            Unit::Kilohertz => (Unit::Hertz, 1000.0),
            Unit::Megabyte => (Unit::Gigabyte, 0.001),
            other => (other, 1.0),
        }
    }
}

impl FromStr for Unit {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "" => Unit::Dimensionless,
            "m" => Unit::Meter,
            "rad" => Unit::Radian,
            "N" => Unit::Newton,
            "Hz" => Unit::Hertz,
            "ms" => Unit::Millisecond,
            "core" | "cores" => Unit::Core,
            "GB" => Unit::Gigabyte,
            "cm" => Unit::Centimeter,
            "mm" => Unit::Millimeter,
            "deg" => Unit::Degree,
            "s" => Unit::Second,
            "kHz" => Unit::Kilohertz,
            "MB" => Unit::Megabyte,
            other => return Err(UnitError::Unknown(other.to_string())),
        })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub magnitude: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(magnitude: f64, unit: Unit) -> Self {
        Self { magnitude, unit }
    }

    pub fn dimensionless(magnitude: f64) -> Self {
        Self::new(magnitude, Unit::Dimensionless)
    }

    pub fn normalized(self) -> Self {
        normalize_quantity(self)
    }

    /// Parses `"100cm"`, `"0.5 m"`, `"0.90"` and normalizes the result.
    pub fn parse(text: &str) -> Result<Self, UnitError> {
        let text = text.trim();
        let (number, unit) = text.split_at(number_prefix_len(text));
        if number.is_empty() {
            return Err(UnitError::Malformed(text.to_string()));
        }
        let magnitude: f64 = number.parse().map_err(|_| UnitError::Malformed(text.to_string()))?;
        if !magnitude.is_finite() {
            return Err(UnitError::Malformed(text.to_string()));
        }
        let unit: Unit = unit.trim().parse()?;
        Ok(Quantity::new(magnitude, unit).normalized())
    }
}

/// Length of the leading numeric literal (sign, digits, point, exponent).
fn number_prefix_len(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'-' | b'+')) {
        i += 1;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if matches!(bytes.get(j), Some(b'-' | b'+')) {
            j += 1;
        }
        if bytes.get(j).is_some_and(u8::is_ascii_digit) {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            Unit::Dimensionless => write!(f, "{}", self.magnitude),
            unit => write!(f, "{} {}", self.magnitude, unit),
        }
    }
}

/// Rescales a quantity onto its canonical unit.
pub fn normalize_quantity(q: Quantity) -> Quantity {
    let (unit, factor) = q.unit.canonical();
    if factor == 1.0 {
        Quantity::new(q.magnitude, unit)
    } else {
        Quantity::new(q.magnitude * factor, unit)
    }
}
