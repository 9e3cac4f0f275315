//! Scalar values and their types.
//!
//! A [`Value`] has two notions of comparison. The structural one (`Eq`, `Ord`,
//! `Hash`) is total and is what set semantics, grouping and sorting use: null
//! equals null, values of different types are ordered by type tag. The
//! semantic one, [`Value::compare`], is what predicates use: it refuses to
//! compare values of unrelated types and reports null as incomparable.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueType {
    #[serde(rename = "str")]
    Str,
    #[serde(rename = "i64")]
    Int,
    #[serde(rename = "f64")]
    Float,
    #[serde(rename = "date")]
    Date,
    #[serde(rename = "bool")]
    Bool,
}

impl ValueType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Int | ValueType::Float)
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueType::Str => "str",
            ValueType::Int => "i64",
            ValueType::Float => "f64",
            ValueType::Date => "date",
            ValueType::Bool => "bool",
        }
    }

    /// Whether values of the two types may be compared with each other.
    pub fn comparable_with(self, other: ValueType) -> bool {
        self == other
            || (self.is_numeric() && other.is_numeric())
            || matches!(
                (self, other),
                (ValueType::Str, ValueType::Date) | (ValueType::Date, ValueType::Str)
            )
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Str(String),
    Int(i64),
    Float(f64),
    Date(NaiveDate),
    Bool(bool),
}

pub const DATE_FORMAT: &str = "%Y-%m-%d";

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    /// Parses an ISO-8601 `YYYY-MM-DD` date. Panics on malformed input; meant
    /// for literals in code and tests.
    pub fn date(s: &str) -> Self {
        Value::Date(NaiveDate::parse_from_str(s, DATE_FORMAT).expect("valid date literal"))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn value_type(&self) -> Option<ValueType> {
        match self {
            Value::Null => None,
            Value::Str(_) => Some(ValueType::Str),
            Value::Int(_) => Some(ValueType::Int),
            Value::Float(_) => Some(ValueType::Float),
            Value::Date(_) => Some(ValueType::Date),
            Value::Bool(_) => Some(ValueType::Bool),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Semantic comparison for predicates.
    ///
    /// Returns `Ok(None)` when either side is null. Integers and floats
    /// compare numerically; a string compares with a date by parsing it as
    /// one. Any other pair of distinct types is a [`Error::TypeMismatch`].
    pub fn compare(&self, other: &Value) -> Result<Option<Ordering>> {
        use Value::*;
        let ord = match (self, other) {
            (Null, _) | (_, Null) => return Ok(None),
            (Str(a), Str(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Int(a), Float(b)) => (*a as f64).total_cmp(b),
            (Float(a), Int(b)) => a.total_cmp(&(*b as f64)),
            (Date(a), Date(b)) => a.cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            (Date(a), Str(s)) => a.cmp(&parse_date_operand(s)?),
            (Str(s), Date(b)) => parse_date_operand(s)?.cmp(b),
            (a, b) => {
                return Err(Error::TypeMismatch(format!(
                    "cannot compare {} with {}",
                    a.type_name(),
                    b.type_name()
                )))
            }
        };
        Ok(Some(ord))
    }

    pub fn type_name(&self) -> &'static str {
        self.value_type().map_or("null", ValueType::name)
    }

    /// Checks that this value may be stored in a column of type `ty`.
    pub fn conforms_to(&self, ty: ValueType) -> bool {
        match self.value_type() {
            None => true,
            Some(t) => t == ty,
        }
    }

    /// Converts a value into the representation of a column of type `ty`,
    /// widening integers to floats and parsing date strings.
    pub fn coerce_to(self, ty: ValueType) -> Result<Value> {
        match (self, ty) {
            (Value::Null, _) => Ok(Value::Null),
            (Value::Int(i), ValueType::Float) => Ok(Value::Float(i as f64)),
            (Value::Str(s), ValueType::Date) => Ok(Value::Date(parse_date_operand(&s)?)),
            (v, ty) if v.conforms_to(ty) => Ok(v),
            (v, ty) => Err(Error::TypeMismatch(format!(
                "value {v} does not fit a {ty} column"
            ))),
        }
    }

    /// Parses a textual cell (CSV) as a value of type `ty`. Empty text is null.
    pub fn parse_typed(text: &str, ty: ValueType) -> Result<Value> {
        if text.is_empty() {
            return Ok(Value::Null);
        }
        let bad = || Error::InvalidValue(format!("`{text}` is not a valid {ty}"));
        Ok(match ty {
            ValueType::Str => Value::Str(text.to_string()),
            ValueType::Int => Value::Int(text.trim().parse().map_err(|_| bad())?),
            ValueType::Float => Value::Float(text.trim().parse().map_err(|_| bad())?),
            ValueType::Date => Value::Date(
                NaiveDate::parse_from_str(text.trim(), DATE_FORMAT).map_err(|_| bad())?,
            ),
            ValueType::Bool => match text.trim() {
                "true" | "TRUE" | "True" => Value::Bool(true),
                "false" | "FALSE" | "False" => Value::Bool(false),
                _ => return Err(bad()),
            },
        })
    }

    /// Text form used for CSV cells. Null renders as the empty string.
    pub fn to_cell(&self) -> String {
        match self {
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Float(_) => 3,
            Value::Str(_) => 4,
            Value::Date(_) => 5,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(x) => serde_json::Number::from_f64(*x)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Date(d) => serde_json::Value::String(d.format(DATE_FORMAT).to_string()),
            Value::Bool(b) => serde_json::Value::Bool(*b),
        }
    }

    /// Untyped conversion from JSON: integers become `Int`, other numbers
    /// `Float`, strings stay strings (dates are recovered by coercion).
    pub fn from_json(v: &serde_json::Value) -> Result<Value> {
        Ok(match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => Value::Float(n.as_f64().ok_or_else(|| {
                    Error::InvalidValue(format!("number {n} out of range"))
                })?),
            },
            serde_json::Value::String(s) => Value::Str(s.clone()),
            other => return Err(Error::InvalidValue(format!("unsupported literal {other}"))),
        })
    }
}

fn parse_date_operand(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| Error::TypeMismatch(format!("cannot compare date with string `{s}`")))
}

fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else if x.is_nan() {
        f64::NAN.to_bits()
    } else {
        x.to_bits()
    }
}

fn canonical_f64(x: f64) -> f64 {
    f64::from_bits(canonical_bits(x))
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => canonical_f64(*a).total_cmp(&canonical_f64(*b)),
            (Str(a), Str(b)) => a.cmp(b),
            (Date(a), Date(b)) => a.cmp(b),
            (a, b) => a.tag().cmp(&b.tag()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Null => {}
            Value::Bool(b) => b.hash(state),
            Value::Int(i) => i.hash(state),
            Value::Float(x) => canonical_bits(*x).hash(state),
            Value::Str(s) => s.hash(state),
            Value::Date(d) => d.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Str(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            // Debug keeps a trailing `.0` so floats stay recognisable.
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Value::from_json(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_type_comparison_is_an_error() {
        assert!(Value::from("a").compare(&Value::Int(1)).is_err());
        assert!(Value::Bool(true).compare(&Value::Int(1)).is_err());
    }

    #[test]
    fn null_is_incomparable_but_structurally_equal() {
        assert_eq!(Value::Null.compare(&Value::Int(1)).unwrap(), None);
        assert_eq!(Value::Null, Value::Null);
    }

    #[test]
    fn numeric_and_date_comparisons() {
        assert_eq!(
            Value::Int(2).compare(&Value::Float(1.5)).unwrap(),
            Some(Ordering::Greater)
        );
        assert_eq!(
            Value::date("2025-01-02").compare(&Value::from("2025-01-01")).unwrap(),
            Some(Ordering::Greater)
        );
    }

    #[test]
    fn negative_zero_is_structurally_zero() {
        assert_eq!(Value::Float(-0.0), Value::Float(0.0));
    }

    #[test]
    fn cells_round_trip() {
        for (v, ty) in [
            (Value::Int(-3), ValueType::Int),
            (Value::Float(7.0), ValueType::Float),
            (Value::Float(6.428571428571429), ValueType::Float),
            (Value::date("2025-01-01"), ValueType::Date),
            (Value::Bool(true), ValueType::Bool),
            (Value::from("Pixel"), ValueType::Str),
            (Value::Null, ValueType::Int),
        ] {
            assert_eq!(Value::parse_typed(&v.to_cell(), ty).unwrap(), v);
        }
    }
}
