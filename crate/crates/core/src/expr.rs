//! Row-level scalar expressions: arithmetic, comparisons and boolean
//! connectives over the attributes of one tuple.
//!
//! Expressions serialize as their infix text. The printer fully
//! parenthesizes compound terms so that printing and re-parsing is a fixpoint.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lex::{Cursor, Tok};
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        Some(match s {
            "=" | "==" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// Compares two values; a null on either side makes the comparison false.
    pub fn apply(self, l: &Value, r: &Value) -> Result<bool> {
        Ok(l.compare(r)?.is_some_and(|o| self.holds(o)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    Literal(Value),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(name.to_string())
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
        Expr::Cmp(op, Box::new(l), Box::new(r))
    }

    pub fn arith(op: ArithOp, l: Expr, r: Expr) -> Expr {
        Expr::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let mut cur = Cursor::new(src)?;
        let e = parse_or(&mut cur)?;
        cur.expect_end()?;
        Ok(e)
    }

    /// Attributes referenced anywhere in the expression.
    pub fn columns(&self) -> AttrSet {
        let mut out = AttrSet::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut AttrSet) {
        match self {
            Expr::Column(c) => {
                out.insert(c.clone());
            }
            Expr::Literal(_) => {}
            Expr::Neg(e) | Expr::Not(e) => e.collect_columns(out),
            Expr::Arith(_, l, r) | Expr::Cmp(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) => {
                l.collect_columns(out);
                r.collect_columns(out);
            }
        }
    }

    /// Static type of the expression under `schema`; `None` for an untyped
    /// null literal. Fails on unknown attributes and ill-typed operands.
    pub fn infer_type(&self, schema: &Schema) -> Result<Option<ValueType>> {
        match self {
            Expr::Column(c) => Ok(Some(
                schema
                    .type_of(c)
                    .ok_or_else(|| Error::UnknownAttribute(c.clone()))?,
            )),
            Expr::Literal(v) => Ok(v.value_type()),
            Expr::Neg(e) => match e.infer_type(schema)? {
                Some(t) if !t.is_numeric() => Err(Error::TypeMismatch(format!(
                    "cannot negate a {t} value"
                ))),
                t => Ok(t),
            },
            Expr::Arith(op, l, r) => {
                let (lt, rt) = (l.infer_type(schema)?, r.infer_type(schema)?);
                for t in [lt, rt].into_iter().flatten() {
                    if !t.is_numeric() {
                        return Err(Error::TypeMismatch(format!(
                            "operator {} needs numeric operands, got {t}",
                            op.symbol()
                        )));
                    }
                }
                Ok(match (op, lt, rt) {
                    (ArithOp::Div, _, _) => Some(ValueType::Float),
                    (_, Some(ValueType::Int), Some(ValueType::Int)) => Some(ValueType::Int),
                    (_, None, None) => None,
                    (_, Some(ValueType::Int), None) | (_, None, Some(ValueType::Int)) => {
                        Some(ValueType::Int)
                    }
                    _ => Some(ValueType::Float),
                })
            }
            Expr::Cmp(op, l, r) => {
                if let (Some(lt), Some(rt)) = (l.infer_type(schema)?, r.infer_type(schema)?) {
                    if !lt.comparable_with(rt) {
                        return Err(Error::TypeMismatch(format!(
                            "cannot compare {lt} with {rt} using {}",
                            op.symbol()
                        )));
                    }
                }
                Ok(Some(ValueType::Bool))
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                for e in [l, r] {
                    expect_bool(e, schema)?;
                }
                Ok(Some(ValueType::Bool))
            }
            Expr::Not(e) => {
                expect_bool(e, schema)?;
                Ok(Some(ValueType::Bool))
            }
        }
    }

    /// Evaluates against one row laid out according to `schema`.
    pub fn eval(&self, schema: &Schema, row: &[Value]) -> Result<Value> {
        match self {
            Expr::Column(c) => Ok(row[schema.require(c)?].clone()),
            Expr::Literal(v) => Ok(v.clone()),
            Expr::Neg(e) => match e.eval(schema, row)? {
                Value::Null => Ok(Value::Null),
                Value::Int(i) => i
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| Error::Overflow("negation".into())),
                Value::Float(x) => Ok(Value::Float(-x)),
                v => Err(Error::TypeMismatch(format!("cannot negate {}", v.type_name()))),
            },
            Expr::Arith(op, l, r) => arith(*op, &l.eval(schema, row)?, &r.eval(schema, row)?),
            Expr::Cmp(op, l, r) => Ok(Value::Bool(
                op.apply(&l.eval(schema, row)?, &r.eval(schema, row)?)?,
            )),
            Expr::And(l, r) => Ok(Value::Bool(
                truthy(&l.eval(schema, row)?)? && truthy(&r.eval(schema, row)?)?,
            )),
            Expr::Or(l, r) => Ok(Value::Bool(
                truthy(&l.eval(schema, row)?)? || truthy(&r.eval(schema, row)?)?,
            )),
            Expr::Not(e) => Ok(Value::Bool(!truthy(&e.eval(schema, row)?)?)),
        }
    }

    /// Evaluates as a row predicate; anything but `true` rejects the row.
    pub fn test(&self, schema: &Schema, row: &[Value]) -> Result<bool> {
        truthy(&self.eval(schema, row)?)
    }
}

fn expect_bool(e: &Expr, schema: &Schema) -> Result<()> {
    match e.infer_type(schema)? {
        None | Some(ValueType::Bool) => Ok(()),
        Some(t) => Err(Error::TypeMismatch(format!(
            "boolean connective applied to a {t} operand"
        ))),
    }
}

fn truthy(v: &Value) -> Result<bool> {
    match v {
        Value::Null => Ok(false),
        Value::Bool(b) => Ok(*b),
        v => Err(Error::TypeMismatch(format!(
            "expected a boolean, got {}",
            v.type_name()
        ))),
    }
}

fn arith(op: ArithOp, l: &Value, r: &Value) -> Result<Value> {
    use Value::*;
    if l.is_null() || r.is_null() {
        return Ok(Null);
    }
    let overflow = || Error::Overflow(format!("integer {}", op.symbol()));
    match (op, l, r) {
        (ArithOp::Add, Int(a), Int(b)) => a.checked_add(*b).map(Int).ok_or_else(overflow),
        (ArithOp::Sub, Int(a), Int(b)) => a.checked_sub(*b).map(Int).ok_or_else(overflow),
        (ArithOp::Mul, Int(a), Int(b)) => a.checked_mul(*b).map(Int).ok_or_else(overflow),
        _ => {
            let (a, b) = match (l.as_f64(), r.as_f64()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::TypeMismatch(format!(
                        "operator {} on {} and {}",
                        op.symbol(),
                        l.type_name(),
                        r.type_name()
                    )))
                }
            };
            Ok(match op {
                ArithOp::Add => Float(a + b),
                ArithOp::Sub => Float(a - b),
                ArithOp::Mul => Float(a * b),
                ArithOp::Div if b == 0.0 => Null,
                ArithOp::Div => Float(a / b),
            })
        }
    }
}

// Grammar, loosest binding first:
//   or   := and (OR and)*
//   and  := not (AND not)*
//   not  := NOT not | cmp
//   cmp  := sum (θ sum)?
//   sum  := prod ((+|-) prod)*
//   prod := unary ((*|/) unary)*
//   unary:= - unary | atom
//   atom := literal | ident | ( or )

fn parse_or(c: &mut Cursor) -> Result<Expr> {
    let mut e = parse_and(c)?;
    while c.eat_keyword("OR") {
        e = Expr::Or(Box::new(e), Box::new(parse_and(c)?));
    }
    Ok(e)
}

fn parse_and(c: &mut Cursor) -> Result<Expr> {
    let mut e = parse_not(c)?;
    while c.eat_keyword("AND") {
        e = Expr::And(Box::new(e), Box::new(parse_not(c)?));
    }
    Ok(e)
}

fn parse_not(c: &mut Cursor) -> Result<Expr> {
    if c.eat_keyword("NOT") {
        return Ok(Expr::Not(Box::new(parse_not(c)?)));
    }
    let l = parse_sum(c)?;
    if let Some(Tok::Sym(s)) = c.peek() {
        if let Some(op) = CmpOp::from_symbol(s) {
            c.next();
            return Ok(Expr::cmp(op, l, parse_sum(c)?));
        }
    }
    Ok(l)
}

fn parse_sum(c: &mut Cursor) -> Result<Expr> {
    let mut e = parse_prod(c)?;
    loop {
        let op = if c.eat_sym("+") {
            ArithOp::Add
        } else if c.eat_sym("-") {
            ArithOp::Sub
        } else {
            return Ok(e);
        };
        e = Expr::arith(op, e, parse_prod(c)?);
    }
}

fn parse_prod(c: &mut Cursor) -> Result<Expr> {
    let mut e = parse_unary(c)?;
    loop {
        let op = if c.eat_sym("*") {
            ArithOp::Mul
        } else if c.eat_sym("/") {
            ArithOp::Div
        } else {
            return Ok(e);
        };
        e = Expr::arith(op, e, parse_unary(c)?);
    }
}

fn parse_unary(c: &mut Cursor) -> Result<Expr> {
    if c.eat_sym("-") {
        return Ok(match parse_unary(c)? {
            Expr::Literal(Value::Int(i)) => Expr::Literal(Value::Int(-i)),
            Expr::Literal(Value::Float(x)) => Expr::Literal(Value::Float(-x)),
            e => Expr::Neg(Box::new(e)),
        });
    }
    parse_atom(c)
}

fn parse_atom(c: &mut Cursor) -> Result<Expr> {
    if c.eat_sym("(") {
        let e = parse_or(c)?;
        c.expect_sym(")")?;
        return Ok(e);
    }
    if let Some(v) = parse_literal(c)? {
        return Ok(Expr::Literal(v));
    }
    Ok(Expr::Column(c.expect_ident()?))
}

/// Parses a literal if one starts at the cursor: numbers, quoted strings,
/// `TRUE`/`FALSE`/`NULL`, `DATE 'YYYY-MM-DD'` and negated numbers.
pub(crate) fn parse_literal(c: &mut Cursor) -> Result<Option<Value>> {
    let v = match c.peek().cloned() {
        Some(Tok::Int(i)) => Value::Int(i),
        Some(Tok::Float(x)) => Value::Float(x),
        Some(Tok::Str(s)) => Value::Str(s),
        Some(Tok::Sym("-")) if matches!(c.peek_at(1), Some(Tok::Int(_)) | Some(Tok::Float(_))) => {
            c.next();
            return Ok(Some(match c.next() {
                Some(Tok::Int(i)) => Value::Int(-i),
                Some(Tok::Float(x)) => Value::Float(-x),
                _ => unreachable!(),
            }));
        }
        Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("TRUE") => Value::Bool(true),
        Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("FALSE") => Value::Bool(false),
        Some(Tok::Ident(k)) if k.eq_ignore_ascii_case("NULL") => Value::Null,
        Some(Tok::Ident(k))
            if k.eq_ignore_ascii_case("DATE") && matches!(c.peek_at(1), Some(Tok::Str(_))) =>
        {
            c.next();
            let Some(Tok::Str(s)) = c.next() else { unreachable!() };
            return Value::Str(s).coerce_to(ValueType::Date).map(Some);
        }
        _ => return Ok(None),
    };
    c.next();
    Ok(Some(v))
}

/// Literal text that re-parses to the same value.
pub fn literal_text(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Date(_) => format!("DATE '{v}'"),
        Value::Bool(b) => if *b { "TRUE" } else { "FALSE" }.into(),
        Value::Int(_) | Value::Float(_) => v.to_string(),
    }
}

/// Identifier text, back-quoted when it is not a plain identifier or
/// collides with a keyword.
pub fn ident_text(name: &str) -> String {
    const KEYWORDS: [&str; 7] = ["AND", "OR", "NOT", "TRUE", "FALSE", "NULL", "DATE"];
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(name));
    if plain {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => f.write_str(&ident_text(c)),
            Expr::Literal(v) => f.write_str(&literal_text(v)),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Cmp(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::And(l, r) => write!(f, "({l} AND {r})"),
            Expr::Or(l, r) => write!(f, "({l} OR {r})"),
            Expr::Not(e) => write!(f, "(NOT {e})"),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::of([
            ("x", ValueType::Int),
            ("y", ValueType::Float),
            ("s", ValueType::Str),
            ("b", ValueType::Bool),
        ])
    }

    #[test]
    fn precedence_and_printing() {
        let e = Expr::parse("x + 2 * 3 > 7 AND NOT b OR s = 'a'").unwrap();
        assert_eq!(e.to_string(), "((((x + (2 * 3)) > 7) AND (NOT b)) OR (s = 'a'))");
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn null_comparison_is_false() {
        let e = Expr::parse("x > 2").unwrap();
        let row = [Value::Null, Value::Null, Value::Null, Value::Null];
        assert!(!e.test(&schema(), &row).unwrap());
    }

    #[test]
    fn integer_division_yields_float() {
        let e = Expr::parse("x / 5").unwrap();
        assert_eq!(e.infer_type(&schema()).unwrap(), Some(ValueType::Float));
        let row = [Value::Int(100), Value::Null, Value::Null, Value::Null];
        assert_eq!(e.eval(&schema(), &row).unwrap(), Value::Float(20.0));
    }

    #[test]
    fn cross_type_comparison_fails_statically() {
        let e = Expr::parse("s > 2").unwrap();
        assert!(matches!(e.infer_type(&schema()), Err(Error::TypeMismatch(_))));
    }

    #[test]
    fn unknown_attribute() {
        let e = Expr::parse("z = 1").unwrap();
        assert_eq!(e.infer_type(&schema()), Err(Error::UnknownAttribute("z".into())));
    }

    #[test]
    fn overflow_is_an_error() {
        let e = Expr::parse("x * x").unwrap();
        let row = [Value::Int(i64::MAX), Value::Null, Value::Null, Value::Null];
        assert!(matches!(e.eval(&schema(), &row), Err(Error::Overflow(_))));
    }

    #[test]
    fn date_literals() {
        let e = Expr::parse("d >= DATE '2025-01-02'").unwrap();
        assert_eq!(e.to_string(), "(d >= DATE '2025-01-02')");
    }
}
