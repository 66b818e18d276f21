//! Quantities with explicit units at the file boundary.
//!
//! Files may write `"12.5 GHz"`, `"256 GB"`, `"1 Gbps"`, `"4.8 Mcycles"` or a
//! bare number already in canonical units (Hz, bytes, bits per second,
//! cycles). Byte prefixes are decimal (`KB` = 1000 bytes); `KiB`, `MiB`,
//! `GiB` are binary.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Bytes,
    BitRate,
    Cycles,
}

impl Dimension {
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Dimension::Frequency => "Hz",
            Dimension::Bytes => "B",
            Dimension::BitRate => "bps",
            Dimension::Cycles => "cycles",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        let u = unit.to_ascii_lowercase();
        let u = u.as_str();
        let s = match self {
            Dimension::Frequency => match u {
                "hz" => 1.0,
                "khz" => 1e3,
                "mhz" => 1e6,
                "ghz" => 1e9,
                _ => return None,
            },
            Dimension::Bytes => match u {
                "b" | "byte" | "bytes" => 1.0,
                "kb" => 1e3,
                "mb" => 1e6,
                "gb" => 1e9,
                "tb" => 1e12,
                "kib" => 1024.0,
                "mib" => 1024.0 * 1024.0,
                "gib" => 1024.0 * 1024.0 * 1024.0,
                _ => return None,
            },
            Dimension::BitRate => match u {
                "bps" | "bit/s" => 1.0,
                "kbps" => 1e3,
                "mbps" => 1e6,
                "gbps" => 1e9,
                _ => return None,
            },
            Dimension::Cycles => match u {
                "cycles" | "cycle" => 1.0,
                "kcycles" => 1e3,
                "mcycles" => 1e6,
                "gcycles" => 1e9,
                _ => return None,
            },
        };
        Some(s)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Frequency => "frequency",
            Dimension::Bytes => "size",
            Dimension::BitRate => "bit rate",
            Dimension::Cycles => "cycle count",
        };
        f.write_str(name)
    }
}

/// A quantity as written in a file: a bare number or a `"<number> <unit>"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Integer(i64),
    Float(f64),
    Text(String),
}

impl Quantity {
    /// Canonical-unit rendering of an integral quantity, e.g. `"12000000000 Hz"`.
    pub fn integral(value: u64, dim: Dimension) -> Self {
        Quantity::Text(format!("{value} {}", dim.canonical_unit()))
    }

    /// Canonical-unit rendering that round-trips `value` exactly.
    pub fn real(value: f64, dim: Dimension) -> Self {
        Quantity::Text(format!("{value} {}", dim.canonical_unit()))
    }

    /// Value in canonical units.
    pub fn to_canonical(&self, dim: Dimension) -> Result<f64, String> {
        let v = match self {
            Quantity::Integer(i) => *i as f64,
            Quantity::Float(x) => *x,
            Quantity::Text(t) => parse_quantity(t, dim)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{dim} must be finite"))
        }
    }

    /// Value in canonical units, rounded to an integer and required positive.
    pub fn to_positive_integer(&self, dim: Dimension) -> Result<u64, String> {
        let v = self.to_canonical(dim)?.round();
        if v < 1.0 || v > u64::MAX as f64 {
            return Err(format!("{dim} must be positive, found {v}"));
        }
        Ok(v as u64)
    }
}

/// Parses `"<number>[ ]<unit>"` (or a bare number) into canonical units.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = number_end(text);
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot read a number from {text:?}"))?;
    let unit: String = unit.chars().filter(|c| !c.is_whitespace()).collect();
    if unit.is_empty() {
        return Ok(value);
    }
    let scale = dim
        .scale(&unit)
        .ok_or_else(|| format!("unknown {dim} unit {unit:?} in {text:?}"))?;
    Ok(value * scale)
}

/// Byte offset where the numeric prefix of `text` ends. An `e`/`E` counts as
/// an exponent marker only when followed by a digit or sign.
fn number_end(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let numeric = c.is_ascii_digit() || matches!(c, b'.' | b'+' | b'-');
        let exponent = matches!(c, b'e' | b'E')
            && bytes
                .get(i + 1)
                .is_some_and(|n| n.is_ascii_digit() || matches!(n, b'+' | b'-'));
        if !(numeric || exponent) {
            break;
        }
        i += 1;
    }
    i
}
