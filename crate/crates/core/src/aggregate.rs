//! Grouped aggregation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lex::{Cursor, Tok};
use crate::relation::{Relation, Row};
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Sum(String),
    /// `COUNT()` counts rows; `COUNT(a)` counts non-null values of `a`.
    Count(Option<String>),
    Min(String),
    Max(String),
    Avg(String),
    /// `SUM(num) / SUM(den)`.
    Ratio(String, String),
}

impl AggFunc {
    /// Parses `SUM(a)`, `COUNT()`, `COUNT(*)`, `AVG(a)`, `SUM(a)/SUM(b)`, or a
    /// bare function name applied to `default_attr`.
    pub fn parse(src: &str, default_attr: &str) -> Result<AggFunc> {
        let mut c = Cursor::new(src)?;
        let first = parse_call(&mut c, default_attr)?;
        if c.eat_sym("/") {
            let second = parse_call(&mut c, default_attr)?;
            c.expect_end()?;
            return match (first, second) {
                (AggFunc::Sum(a), AggFunc::Sum(b)) => Ok(AggFunc::Ratio(a, b)),
                _ => Err(crate::lex::err(src, 0, "only SUM(a)/SUM(b) ratios are supported")),
            };
        }
        c.expect_end()?;
        Ok(first)
    }

    pub fn inputs(&self) -> AttrSet {
        match self {
            AggFunc::Sum(a) | AggFunc::Min(a) | AggFunc::Max(a) | AggFunc::Avg(a) => {
                [a.as_str()].into_iter().collect()
            }
            AggFunc::Count(a) => a.iter().map(String::as_str).collect(),
            AggFunc::Ratio(a, b) => [a.as_str(), b.as_str()].into_iter().collect(),
        }
    }

    /// Output type given the input schema.
    pub fn output_type(&self, schema: &Schema) -> Result<ValueType> {
        let ty = |a: &str| schema.type_of(a).ok_or_else(|| Error::UnknownAttribute(a.into()));
        let numeric = |a: &str| -> Result<ValueType> {
            let t = ty(a)?;
            if t.is_numeric() {
                Ok(t)
            } else {
                Err(Error::TypeMismatch(format!("{self} needs a numeric input, `{a}` is {t}")))
            }
        };
        Ok(match self {
            AggFunc::Sum(a) => numeric(a)?,
            AggFunc::Count(a) => {
                if let Some(a) = a {
                    ty(a)?;
                }
                ValueType::Int
            }
            AggFunc::Min(a) | AggFunc::Max(a) => ty(a)?,
            AggFunc::Avg(a) => {
                numeric(a)?;
                ValueType::Float
            }
            AggFunc::Ratio(a, b) => {
                numeric(a)?;
                numeric(b)?;
                ValueType::Float
            }
        })
    }

    /// Aggregates the rows of `rel` (all of them; grouping happens outside).
    pub fn apply<'a>(&self, schema: &Schema, rows: impl IntoIterator<Item = &'a Row>) -> Result<Value> {
        let col = |a: &str| schema.require(a);
        match self {
            AggFunc::Sum(a) => sum(rows.into_iter().map(|r| &r[0..]), col(a)?),
            AggFunc::Count(None) => Ok(Value::Int(rows.into_iter().count() as i64)),
            AggFunc::Count(Some(a)) => {
                let i = col(a)?;
                Ok(Value::Int(rows.into_iter().filter(|r| !r[i].is_null()).count() as i64))
            }
            AggFunc::Min(a) | AggFunc::Max(a) => {
                let i = col(a)?;
                let want_max = matches!(self, AggFunc::Max(_));
                let mut best: Option<&Value> = None;
                for r in rows {
                    let v = &r[i];
                    if v.is_null() {
                        continue;
                    }
                    best = match best {
                        None => Some(v),
                        Some(b) => {
                            let ord = v.compare(b)?.expect("non-null");
                            let better = if want_max { ord.is_gt() } else { ord.is_lt() };
                            Some(if better { v } else { b })
                        }
                    };
                }
                Ok(best.cloned().unwrap_or(Value::Null))
            }
            AggFunc::Avg(a) => {
                let i = col(a)?;
                let (mut total, mut n) = (0.0, 0usize);
                for r in rows {
                    if let Some(x) = r[i].as_f64() {
                        total += x;
                        n += 1;
                    }
                }
                Ok(if n == 0 { Value::Null } else { Value::Float(total / n as f64) })
            }
            AggFunc::Ratio(a, b) => {
                let rows: Vec<&Row> = rows.into_iter().collect();
                let num = sum(rows.iter().map(|r| &r[0..]), col(a)?)?;
                let den = sum(rows.iter().map(|r| &r[0..]), col(b)?)?;
                Ok(match (num.as_f64(), den.as_f64()) {
                    (Some(n), Some(d)) if d != 0.0 => Value::Float(n / d),
                    _ => Value::Null,
                })
            }
        }
    }
}

fn sum<'a>(rows: impl Iterator<Item = &'a [Value]>, i: usize) -> Result<Value> {
    let mut acc = Value::Null;
    for r in rows {
        acc = match (&acc, &r[i]) {
            (_, Value::Null) => acc,
            (Value::Null, v) => v.clone(),
            (Value::Int(a), Value::Int(b)) => Value::Int(
                a.checked_add(*b)
                    .ok_or_else(|| Error::Overflow("SUM".into()))?,
            ),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => Value::Float(x + y),
                _ => {
                    return Err(Error::TypeMismatch(format!(
                        "SUM over {} values",
                        b.type_name()
                    )))
                }
            },
        };
    }
    Ok(acc)
}

fn parse_call(c: &mut Cursor, default_attr: &str) -> Result<AggFunc> {
    let name = c.expect_ident()?.to_ascii_uppercase();
    let arg = if c.eat_sym("(") {
        let arg = match c.peek() {
            Some(Tok::Sym(")")) => None,
            Some(Tok::Sym("*")) | Some(Tok::Int(1)) => {
                c.next();
                None
            }
            _ => Some(c.expect_ident()?),
        };
        c.expect_sym(")")?;
        arg
    } else if name == "COUNT" {
        None
    } else {
        Some(default_attr.to_string())
    };
    let need = |arg: Option<String>| arg.ok_or_else(|| c.error(&format!("{name} needs an attribute")));
    Ok(match name.as_str() {
        "SUM" => AggFunc::Sum(need(arg)?),
        "COUNT" => AggFunc::Count(arg),
        "MIN" => AggFunc::Min(need(arg)?),
        "MAX" => AggFunc::Max(need(arg)?),
        "AVG" => AggFunc::Avg(need(arg)?),
        _ => return Err(c.error(&format!("unknown aggregate `{name}`"))),
    })
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use crate::expr::ident_text as id;
        match self {
            AggFunc::Sum(a) => write!(f, "SUM({})", id(a)),
            AggFunc::Count(None) => f.write_str("COUNT()"),
            AggFunc::Count(Some(a)) => write!(f, "COUNT({})", id(a)),
            AggFunc::Min(a) => write!(f, "MIN({})", id(a)),
            AggFunc::Max(a) => write!(f, "MAX({})", id(a)),
            AggFunc::Avg(a) => write!(f, "AVG({})", id(a)),
            AggFunc::Ratio(a, b) => write!(f, "SUM({})/SUM({})", id(a), id(b)),
        }
    }
}

/// One aggregate with its output attribute name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggSpec {
    pub alias: String,
    #[serde(with = "agg_text")]
    pub func: AggFunc,
}

mod agg_text {
    use super::AggFunc;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &AggFunc, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&f.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AggFunc, D::Error> {
        let s = String::deserialize(d)?;
        AggFunc::parse(&s, "").map_err(serde::de::Error::custom)
    }
}

impl AggSpec {
    pub fn new(alias: impl Into<String>, func: AggFunc) -> Self {
        AggSpec { alias: alias.into(), func }
    }

    /// Parses one entry of an aggregation map such as `Cost: "SUM"` or
    /// `Cpc: "SUM(Cost)/SUM(Clicks)"`.
    pub fn parse(alias: &str, text: &str) -> Result<AggSpec> {
        Ok(AggSpec::new(alias, AggFunc::parse(text, alias)?))
    }
}

/// Groups `r` by `keys` and computes `aggs` per group. An empty input has no
/// groups, even when `keys` is empty.
pub fn group_aggregate(r: &Relation, keys: &AttrSet, aggs: &[AggSpec]) -> Result<Relation> {
    let schema = r.schema();
    let key_schema = schema.restrict(keys)?;
    let mut out_schema = key_schema.clone();
    for a in aggs {
        out_schema.push(a.alias.clone(), a.func.output_type(schema)?)?;
    }
    let key_idx: Vec<usize> = key_schema.names().map(|n| schema.index_of(n).unwrap()).collect();
    let mut groups: BTreeMap<Row, Vec<&Row>> = BTreeMap::new();
    for row in r.rows() {
        groups
            .entry(key_idx.iter().map(|&i| row[i].clone()).collect())
            .or_default()
            .push(row);
    }
    let mut out = Relation::empty(out_schema);
    for (mut key, rows) in groups {
        for a in aggs {
            key.push(a.func.apply(schema, rows.iter().copied())?);
        }
        out.insert(key)?;
    }
    Ok(out)
}
