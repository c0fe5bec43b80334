use serde::{Deserialize, Serialize};

use crate::error::{PatError, Result};

/// A config value: a bare number in SI units, or a string such as `"330 pJ"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Si(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Si(v)
    }
}

impl From<&str> for Quantity {
    fn from(v: &str) -> Self {
        Quantity::Text(v.to_string())
    }
}

impl Quantity {
    /// Value in SI units, checked against the expected `unit` symbol.
    pub fn si(&self, unit: &str) -> Result<f64> {
        match self {
            Quantity::Si(v) => Ok(*v),
            Quantity::Text(s) => parse_quantity(s, unit),
        }
    }

    /// Like [`Quantity::si`] but rejects zero, negative and non-finite values.
    pub fn positive(&self, field: &str, unit: &str) -> Result<f64> {
        let v = self.si(unit)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(PatError::Config(format!("{field} must be positive, got {v}")))
        }
    }
}

fn prefix_exponent(p: &str) -> Option<i32> {
    Some(match p {
        "" => 0,
        "a" => -18,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" | "µ" | "μ" => -6,
        "m" => -3,
        "c" => -2,
        "k" => 3,
        "M" => 6,
        "G" => 9,
        "T" => 12,
        "P" => 15,
        _ => return None,
    })
}

/// Parses `"<number> <prefix><unit>"`. The number is rescaled by editing its
/// decimal exponent, so `"330 pJ"` gives exactly the double nearest 330e-12.
pub fn parse_quantity(text: &str, unit: &str) -> Result<f64> {
    let bad = |why: &str| PatError::Config(format!("invalid quantity {text:?} (expected {unit}): {why}"));
    let t = text.trim();
    let (num, sym) = match t.find(|c: char| c.is_whitespace()) {
        Some(i) => (&t[..i], t[i..].trim()),
        None => (t, ""),
    };
    let exp = if sym.is_empty() {
        0
    } else {
        let prefix = sym.strip_suffix(unit).ok_or_else(|| bad("wrong unit"))?;
        prefix_exponent(prefix).ok_or_else(|| bad("unknown prefix"))?
    };
    let (mantissa, e0) = match num.find(['e', 'E']) {
        Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| bad("bad exponent"))?),
        None => (num, 0),
    };
    mantissa.parse::<f64>().map_err(|_| bad("not a number"))?;
    format!("{mantissa}e{}", e0 + exp).parse().map_err(|_| bad("not a number"))
}
