//! Predicates over slice tuples.
//!
//! Atoms test the region, a scalar computed from one feature table, or a
//! projection of a feature table. The canonical form is a tagged JSON tree;
//! an infix text form covers region and scalar atoms:
//!
//! ```text
//! Region[[Device]].Device = 'Pixel' AND SUM([Cost], Cost) > 100
//! MAX([Date, Revenue], Revenue) > 100.0 OR NOT TotalCost <= 5
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ident_text, literal_text, parse_literal, CmpOp};
use crate::lex::{Cursor, Tok};
use crate::relation::{Row, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::slice::{region_schema, Features, SliceRelation};
use crate::value::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScalarAgg {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

impl ScalarAgg {
    pub fn name(self) -> &'static str {
        match self {
            ScalarAgg::Sum => "SUM",
            ScalarAgg::Count => "COUNT",
            ScalarAgg::Min => "MIN",
            ScalarAgg::Max => "MAX",
            ScalarAgg::Avg => "AVG",
        }
    }

    pub fn from_name(s: &str) -> Option<ScalarAgg> {
        Some(match s.to_ascii_uppercase().as_str() {
            "SUM" => ScalarAgg::Sum,
            "COUNT" => ScalarAgg::Count,
            "MIN" => ScalarAgg::Min,
            "MAX" => ScalarAgg::Max,
            "AVG" => ScalarAgg::Avg,
            _ => return None,
        })
    }

    /// Applies the aggregate to one column of `rows`. Empty input gives null
    /// except for COUNT, which gives 0.
    pub fn apply<'a>(self, rows: impl Iterator<Item = &'a Row>, col: Option<usize>) -> Result<Value> {
        use crate::aggregate::AggFunc;
        // Reuse the relation aggregates over a single projected column.
        let cells: Vec<Row> = rows
            .map(|r| col.map_or_else(Vec::new, |i| vec![r[i].clone()]))
            .collect();
        let name = "c".to_string();
        let f = match (self, col) {
            (ScalarAgg::Count, None) => return Ok(Value::Int(cells.len() as i64)),
            (ScalarAgg::Count, Some(_)) => AggFunc::Count(Some(name)),
            (ScalarAgg::Sum, _) => AggFunc::Sum(name),
            (ScalarAgg::Min, _) => AggFunc::Min(name),
            (ScalarAgg::Max, _) => AggFunc::Max(name),
            (ScalarAgg::Avg, _) => AggFunc::Avg(name),
        };
        let ty = cells
            .iter()
            .find_map(|r| r[0].value_type())
            .unwrap_or(ValueType::Float);
        f.apply(&Schema::of([("c", ty)]), cells.iter())
    }
}

/// A scalar computed from a slice tuple: an aggregate over one attribute of
/// one feature table, or a bare attribute of a single-row table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarFn {
    #[serde(rename = "fn", default, skip_serializing_if = "Option::is_none")]
    pub agg: Option<ScalarAgg>,
    /// Feature schema; inferred from the attribute when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<AttrSet>,
    /// Attribute; only `COUNT` may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl ScalarFn {
    pub fn attr(name: &str) -> Self {
        ScalarFn { agg: None, feature: None, attribute: Some(name.to_string()) }
    }

    pub fn agg(agg: ScalarAgg, feature: Option<AttrSet>, attribute: &str) -> Self {
        ScalarFn { agg: Some(agg), feature, attribute: Some(attribute.to_string()) }
    }

    /// The feature schema this scalar reads, among `features`.
    pub fn resolve_feature(&self, features: &[AttrSet]) -> Result<AttrSet> {
        if let Some(f) = &self.feature {
            if !features.contains(f) {
                return Err(Error::PredicateSchemaError(format!("unknown feature schema {f} in {self}")));
            }
            if let Some(a) = &self.attribute {
                if !f.contains(a) {
                    return Err(Error::PredicateSchemaError(format!(
                        "feature schema {f} has no attribute `{a}`"
                    )));
                }
            }
            return Ok(f.clone());
        }
        let a = self.attribute.as_ref().ok_or_else(|| {
            Error::PredicateSchemaError(format!("{self} names neither a feature schema nor an attribute"))
        })?;
        let hits: Vec<&AttrSet> = features.iter().filter(|f| f.contains(a)).collect();
        match hits.as_slice() {
            [f] => Ok((*f).clone()),
            [] => Err(Error::PredicateSchemaError(format!("no feature schema contains `{a}`"))),
            _ => Err(Error::PredicateSchemaError(format!(
                "attribute `{a}` is ambiguous across feature schemas; name the schema explicitly"
            ))),
        }
    }

    fn check(&self, features: &[Schema]) -> Result<Option<ValueType>> {
        let sets: Vec<AttrSet> = features.iter().map(Schema::attr_set).collect();
        let f = self.resolve_feature(&sets)?;
        let schema = features.iter().find(|s| s.attr_set() == f).unwrap();
        let ty = self.attribute.as_ref().and_then(|a| schema.type_of(a));
        Ok(match (self.agg, ty) {
            (Some(ScalarAgg::Count), _) => Some(ValueType::Int),
            (None, None) => {
                return Err(Error::PredicateSchemaError(format!("{self} needs an attribute")))
            }
            (Some(_), None) => {
                return Err(Error::PredicateSchemaError(format!("{self} needs an attribute")))
            }
            (Some(ScalarAgg::Sum), Some(t)) | (Some(ScalarAgg::Avg), Some(t)) if !t.is_numeric() => {
                return Err(Error::PredicateSchemaError(format!(
                    "{self} aggregates a non-numeric attribute"
                )))
            }
            (Some(ScalarAgg::Avg), _) => Some(ValueType::Float),
            (_, t) => t,
        })
    }

    pub fn eval(&self, feats: &Features) -> Result<Value> {
        let sets: Vec<AttrSet> = feats.keys().cloned().collect();
        let f = self.resolve_feature(&sets)?;
        let table = &feats[&f];
        let col = match &self.attribute {
            Some(a) => Some(table.schema().require(a)?),
            None => None,
        };
        match self.agg {
            Some(agg) => agg.apply(table.rows(), col),
            None => {
                let i = col.expect("checked");
                match table.len() {
                    0 => Ok(Value::Null),
                    1 => Ok(table.rows().next().unwrap()[i].clone()),
                    _ => Err(Error::NonScalarFeature(self.attribute.clone().unwrap_or_default())),
                }
            }
        }
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attr = self.attribute.as_deref().map(ident_text);
        match self.agg {
            None => f.write_str(attr.as_deref().unwrap_or("?")),
            Some(agg) => {
                write!(f, "{}(", agg.name())?;
                if let Some(s) = &self.feature {
                    write!(f, "{}", schema_text(s))?;
                    if attr.is_some() {
                        f.write_str(", ")?;
                    }
                }
                if let Some(a) = attr {
                    f.write_str(&a)?;
                }
                f.write_str(")")
            }
        }
    }
}

fn schema_text(s: &AttrSet) -> String {
    let names: Vec<String> = s.iter().map(|a| ident_text(a)).collect();
    format!("[{}]", names.join(", "))
}

/// A projection of one feature table; the whole table when `attrs` is
/// omitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableFn {
    pub feature: AttrSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<AttrSet>,
}

impl TableFn {
    fn out_attrs(&self) -> &AttrSet {
        self.attrs.as_ref().unwrap_or(&self.feature)
    }

    fn check(&self, features: &[Schema]) -> Result<Schema> {
        let schema = features
            .iter()
            .find(|s| s.attr_set() == self.feature)
            .ok_or_else(|| Error::PredicateSchemaError(format!("unknown feature schema {}", self.feature)))?;
        if !self.out_attrs().is_subset(&self.feature) {
            return Err(Error::PredicateSchemaError(format!(
                "projection {} is not within {}",
                self.out_attrs(),
                self.feature
            )));
        }
        schema.restrict(self.out_attrs())
    }

    /// Rows of the projection in sorted-attribute order.
    fn eval(&self, feats: &Features) -> Result<BTreeSet<Row>> {
        let table = feats
            .get(&self.feature)
            .ok_or_else(|| Error::PredicateSchemaError(format!("unknown feature schema {}", self.feature)))?;
        let (_, rows) = table.project(self.out_attrs())?.sorted_rows();
        Ok(rows.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOp {
    Subset,
    Superset,
    Equal,
}

impl SetOp {
    fn holds(self, l: &BTreeSet<Row>, r: &BTreeSet<Row>) -> bool {
        match self {
            SetOp::Subset => l.is_subset(r),
            SetOp::Superset => l.is_superset(r),
            SetOp::Equal => l == r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atom {
    /// Compares a region attribute; false for regions of other schemas.
    Region { schema: AttrSet, attribute: String, op: CmpOp, value: Value },
    Scalar { lhs: ScalarFn, op: CmpOp, value: Value },
    ScalarPair { lhs: ScalarFn, op: CmpOp, rhs: ScalarFn },
    /// `rows` are objects keyed by the projected attributes.
    Table { lhs: TableFn, op: SetOp, rows: Vec<Tuple> },
    TablePair { lhs: TableFn, op: SetOp, rhs: TableFn },
}

/// Boolean combination of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredicateRepr", into = "PredicateTree")]
pub enum SlicePredicate {
    Atom(Atom),
    And(Vec<SlicePredicate>),
    Or(Vec<SlicePredicate>),
    Not(Box<SlicePredicate>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PredicateRepr {
    Text(String),
    Tree(PredicateTree),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PredicateTree {
    And(Vec<SlicePredicate>),
    Or(Vec<SlicePredicate>),
    Not(Box<SlicePredicate>),
    #[serde(untagged)]
    Atom(Atom),
}

impl TryFrom<PredicateRepr> for SlicePredicate {
    type Error = Error;

    fn try_from(r: PredicateRepr) -> Result<Self> {
        Ok(match r {
            PredicateRepr::Text(s) => SlicePredicate::parse(&s)?,
            PredicateRepr::Tree(PredicateTree::And(v)) => SlicePredicate::And(v),
            PredicateRepr::Tree(PredicateTree::Or(v)) => SlicePredicate::Or(v),
            PredicateRepr::Tree(PredicateTree::Not(p)) => SlicePredicate::Not(p),
            PredicateRepr::Tree(PredicateTree::Atom(a)) => SlicePredicate::Atom(a),
        })
    }
}

impl From<SlicePredicate> for PredicateTree {
    fn from(p: SlicePredicate) -> Self {
        match p {
            SlicePredicate::Atom(a) => PredicateTree::Atom(a),
            SlicePredicate::And(v) => PredicateTree::And(v),
            SlicePredicate::Or(v) => PredicateTree::Or(v),
            SlicePredicate::Not(p) => PredicateTree::Not(p),
        }
    }
}

impl SlicePredicate {
    pub fn parse(src: &str) -> Result<Self> {
        let mut c = Cursor::new(src)?;
        let p = parse_or(&mut c)?;
        c.expect_end()?;
        Ok(p)
    }

    pub fn scalar(lhs: ScalarFn, op: CmpOp, value: impl Into<Value>) -> Self {
        SlicePredicate::Atom(Atom::Scalar { lhs, op, value: value.into() })
    }

    /// Checks the predicate against the declared schemas of `sr`.
    pub fn check(&self, sr: &SliceRelation) -> Result<()> {
        self.check_schemas(&sr.region_sets(), sr.feature_schemas())
    }

    pub fn check_schemas(&self, regions: &[AttrSet], features: &[Schema]) -> Result<()> {
        match self {
            SlicePredicate::And(v) | SlicePredicate::Or(v) => {
                v.iter().try_for_each(|p| p.check_schemas(regions, features))
            }
            SlicePredicate::Not(p) => p.check_schemas(regions, features),
            SlicePredicate::Atom(a) => check_atom(a, regions, features),
        }
    }

    /// Feature schemas the predicate reads.
    pub fn features(&self, features: &[AttrSet]) -> Result<BTreeSet<AttrSet>> {
        let mut out = BTreeSet::new();
        self.collect_features(features, &mut out)?;
        Ok(out)
    }

    fn collect_features(&self, features: &[AttrSet], out: &mut BTreeSet<AttrSet>) -> Result<()> {
        match self {
            SlicePredicate::And(v) | SlicePredicate::Or(v) => {
                v.iter().try_for_each(|p| p.collect_features(features, out))
            }
            SlicePredicate::Not(p) => p.collect_features(features, out),
            SlicePredicate::Atom(a) => {
                match a {
                    Atom::Region { .. } => {}
                    Atom::Scalar { lhs, .. } => {
                        out.insert(lhs.resolve_feature(features)?);
                    }
                    Atom::ScalarPair { lhs, rhs, .. } => {
                        out.insert(lhs.resolve_feature(features)?);
                        out.insert(rhs.resolve_feature(features)?);
                    }
                    Atom::Table { lhs, .. } => {
                        out.insert(lhs.feature.clone());
                    }
                    Atom::TablePair { lhs, rhs, .. } => {
                        out.insert(lhs.feature.clone());
                        out.insert(rhs.feature.clone());
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, region: &Tuple, feats: &Features) -> Result<bool> {
        match self {
            SlicePredicate::And(v) => {
                for p in v {
                    if !p.eval(region, feats)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            SlicePredicate::Or(v) => {
                for p in v {
                    if p.eval(region, feats)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            SlicePredicate::Not(p) => Ok(!p.eval(region, feats)?),
            SlicePredicate::Atom(a) => eval_atom(a, region, feats),
        }
    }
}

fn check_atom(a: &Atom, regions: &[AttrSet], features: &[Schema]) -> Result<()> {
    let comparable = |l: Option<ValueType>, r: Option<ValueType>, what: &dyn fmt::Display| match (l, r) {
        (Some(l), Some(r)) if !l.comparable_with(r) => Err(Error::PredicateSchemaError(format!(
            "{what} compares {l} with {r}"
        ))),
        _ => Ok(()),
    };
    match a {
        Atom::Region { schema, attribute, value, .. } => {
            if !regions.contains(schema) {
                return Err(Error::PredicateSchemaError(format!("unknown region schema {schema}")));
            }
            if !schema.contains(attribute) {
                return Err(Error::PredicateSchemaError(format!(
                    "region schema {schema} has no attribute `{attribute}`"
                )));
            }
            let _ = value;
            Ok(())
        }
        Atom::Scalar { lhs, value, .. } => comparable(lhs.check(features)?, value.value_type(), lhs),
        Atom::ScalarPair { lhs, rhs, .. } => {
            comparable(lhs.check(features)?, rhs.check(features)?, lhs)
        }
        Atom::Table { lhs, rows, .. } => {
            let schema = lhs.check(features)?;
            for r in rows {
                if region_schema(r) != schema.attr_set() {
                    return Err(Error::PredicateSchemaError(format!(
                        "table constant row has attributes {}, expected {}",
                        region_schema(r),
                        schema.attr_set()
                    )));
                }
                for c in schema.columns() {
                    r[&c.name].clone().coerce_to(c.ty).map_err(|e| {
                        Error::PredicateSchemaError(format!("table constant: {e}"))
                    })?;
                }
            }
            Ok(())
        }
        Atom::TablePair { lhs, rhs, .. } => {
            let (l, r) = (lhs.check(features)?, rhs.check(features)?);
            if !l.same_as(&r) {
                return Err(Error::PredicateSchemaError(format!(
                    "cannot compare tables {l} and {r}"
                )));
            }
            Ok(())
        }
    }
}

fn eval_atom(a: &Atom, region: &Tuple, feats: &Features) -> Result<bool> {
    match a {
        Atom::Region { schema, attribute, op, value } => {
            if region_schema(region) != *schema {
                return Ok(false);
            }
            op.apply(&region[attribute], value)
        }
        Atom::Scalar { lhs, op, value } => op.apply(&lhs.eval(feats)?, value),
        Atom::ScalarPair { lhs, op, rhs } => op.apply(&lhs.eval(feats)?, &rhs.eval(feats)?),
        Atom::Table { lhs, op, rows } => {
            let table = feats
                .get(&lhs.feature)
                .ok_or_else(|| Error::PredicateSchemaError(format!("unknown feature schema {}", lhs.feature)))?;
            let schema = table.schema().restrict(lhs.out_attrs())?;
            let (cols, _) = crate::relation::Relation::empty(schema).sorted_rows();
            let constant = rows
                .iter()
                .map(|r| {
                    cols.iter()
                        .map(|c| {
                            r.get(&c.name)
                                .cloned()
                                .unwrap_or(Value::Null)
                                .coerce_to(c.ty)
                        })
                        .collect::<Result<Row>>()
                })
                .collect::<Result<BTreeSet<Row>>>()?;
            Ok(op.holds(&lhs.eval(feats)?, &constant))
        }
        Atom::TablePair { lhs, op, rhs } => Ok(op.holds(&lhs.eval(feats)?, &rhs.eval(feats)?)),
    }
}

fn parse_or(c: &mut Cursor) -> Result<SlicePredicate> {
    let mut v = vec![parse_and(c)?];
    while c.eat_keyword("OR") {
        v.push(parse_and(c)?);
    }
    Ok(if v.len() == 1 { v.pop().unwrap() } else { SlicePredicate::Or(v) })
}

fn parse_and(c: &mut Cursor) -> Result<SlicePredicate> {
    let mut v = vec![parse_not(c)?];
    while c.eat_keyword("AND") {
        v.push(parse_not(c)?);
    }
    Ok(if v.len() == 1 { v.pop().unwrap() } else { SlicePredicate::And(v) })
}

fn parse_not(c: &mut Cursor) -> Result<SlicePredicate> {
    if c.eat_keyword("NOT") {
        return Ok(SlicePredicate::Not(Box::new(parse_not(c)?)));
    }
    if c.eat_sym("(") {
        let p = parse_or(c)?;
        c.expect_sym(")")?;
        return Ok(p);
    }
    parse_atom(c).map(SlicePredicate::Atom)
}

fn parse_cmp(c: &mut Cursor) -> Result<CmpOp> {
    match c.peek() {
        Some(Tok::Sym(s)) => match CmpOp::from_symbol(s) {
            Some(op) => {
                c.next();
                Ok(op)
            }
            None => Err(c.error("expected a comparison operator")),
        },
        _ => Err(c.error("expected a comparison operator")),
    }
}

fn parse_attr_list(c: &mut Cursor) -> Result<AttrSet> {
    c.expect_sym("[")?;
    let mut out = AttrSet::new();
    if c.eat_sym("]") {
        return Ok(out);
    }
    loop {
        out.insert(c.expect_ident()?);
        if c.eat_sym("]") {
            return Ok(out);
        }
        c.expect_sym(",")?;
    }
}

fn parse_atom(c: &mut Cursor) -> Result<Atom> {
    if c.peek_keyword("Region") && matches!(c.peek_at(1), Some(Tok::Sym("["))) {
        c.next();
        let schema = if matches!(c.peek_at(1), Some(Tok::Sym("["))) {
            c.expect_sym("[")?;
            let s = parse_attr_list(c)?;
            c.expect_sym("]")?;
            s
        } else {
            parse_attr_list(c)?
        };
        c.expect_sym(".")?;
        let attribute = c.expect_ident()?;
        let op = parse_cmp(c)?;
        let value = parse_literal(c)?.ok_or_else(|| c.error("expected a literal"))?;
        return Ok(Atom::Region { schema, attribute, op, value });
    }
    let lhs = parse_scalar(c)?;
    let op = parse_cmp(c)?;
    if let Some(value) = parse_literal(c)? {
        return Ok(Atom::Scalar { lhs, op, value });
    }
    let rhs = parse_scalar(c)?;
    Ok(Atom::ScalarPair { lhs, op, rhs })
}

fn parse_scalar(c: &mut Cursor) -> Result<ScalarFn> {
    let at = c.offset();
    let name = c.expect_ident()?;
    if !c.eat_sym("(") {
        return Ok(ScalarFn::attr(&name));
    }
    let agg = ScalarAgg::from_name(&name)
        .ok_or_else(|| crate::lex::err(c.src, at, &format!("unknown scalar function `{name}`")))?;
    let feature = if matches!(c.peek(), Some(Tok::Sym("["))) {
        let f = parse_attr_list(c)?;
        if !c.eat_sym(",") {
            c.expect_sym(")")?;
            if agg != ScalarAgg::Count {
                return Err(c.error(&format!("{name} needs an attribute")));
            }
            return Ok(ScalarFn { agg: Some(agg), feature: Some(f), attribute: None });
        }
        Some(f)
    } else {
        None
    };
    let attribute = c.expect_ident()?;
    c.expect_sym(")")?;
    Ok(ScalarFn { agg: Some(agg), feature, attribute: Some(attribute) })
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Region { schema, attribute, op, value } => write!(
                f,
                "Region[{}].{} {} {}",
                schema_text(schema),
                ident_text(attribute),
                op.symbol(),
                literal_text(value)
            ),
            Atom::Scalar { lhs, op, value } => write!(f, "{lhs} {} {}", op.symbol(), literal_text(value)),
            Atom::ScalarPair { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Atom::Table { .. } | Atom::TablePair { .. } => {
                let json = serde_json::to_string(self).map_err(|_| fmt::Error)?;
                f.write_str(&json)
            }
        }
    }
}

impl fmt::Display for SlicePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, v: &[SlicePredicate], sep: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, p) in v.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        };
        match self {
            SlicePredicate::Atom(a) => write!(f, "{a}"),
            SlicePredicate::And(v) => join(f, v, "AND"),
            SlicePredicate::Or(v) => join(f, v, "OR"),
            SlicePredicate::Not(p) => write!(f, "NOT {p}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;
    use crate::relation::relation;
    use crate::value::ValueType::*;

    fn feats() -> Features {
        let cpc = relation(
            [("Date", Date), ("Cpc", Float)],
            [
                vec![Value::date("2025-01-01"), Value::Float(15.0)],
                vec![Value::date("2025-01-02"), Value::Float(5.0)],
            ],
        );
        let cost = relation([("Cost", Int)], [vec![Value::Int(350)]]);
        [cpc, cost].into_iter().map(|r| (r.attr_set(), r)).collect()
    }

    fn pixel() -> Tuple {
        [("Device".to_string(), Value::from("Pixel"))].into_iter().collect()
    }

    #[test]
    fn infix_forms() {
        let p = SlicePredicate::parse("Region[[Device]].Device = 'Pixel' AND SUM([Cost], Cost) > 100").unwrap();
        assert!(p.eval(&pixel(), &feats()).unwrap());
        let p = SlicePredicate::parse("MAX([Date, Cpc], Cpc) > 100.0 OR NOT Cost <= .4e3").unwrap();
        assert!(!p.eval(&pixel(), &feats()).unwrap());
        let p = SlicePredicate::parse("COUNT([Date, Cpc]) = 2").unwrap();
        assert!(p.eval(&pixel(), &feats()).unwrap());
        assert!(SlicePredicate::parse("MEDIAN(Cost) > 1").is_err());
        assert!(SlicePredicate::parse("Cost >").is_err());
    }

    #[test]
    fn region_atom_false_on_other_schema() {
        let p = SlicePredicate::parse("Region[[Device, Browser]].Device = 'Pixel'").unwrap();
        assert!(!p.eval(&pixel(), &feats()).unwrap());
    }

    #[test]
    fn table_atom_subset() {
        let rows = ["2025-01-01", "2025-01-02"]
            .iter()
            .map(|d| [("Date".to_string(), Value::from(*d))].into_iter().collect())
            .collect();
        let p = SlicePredicate::Atom(Atom::Table {
            lhs: TableFn { feature: attrs!["Date", "Cpc"], attrs: Some(attrs!["Date"]) },
            op: SetOp::Subset,
            rows,
        });
        assert!(p.eval(&pixel(), &feats()).unwrap());
        let json = serde_json::to_string(&p).unwrap();
        let back: SlicePredicate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn ambiguous_bare_attribute() {
        let s = [Schema::of([("x", Int)]), Schema::of([("x", Int), ("y", Int)])];
        let p = SlicePredicate::parse("x > 1").unwrap();
        assert!(matches!(p.check_schemas(&[], &s), Err(Error::PredicateSchemaError(_))));
    }

    #[test]
    fn bare_attribute_needs_single_row() {
        let p = SlicePredicate::parse("Cpc > 1").unwrap();
        assert!(matches!(p.eval(&pixel(), &feats()), Err(Error::NonScalarFeature(_))));
    }

    #[test]
    fn json_text_and_tree_agree() {
        let from_text: SlicePredicate = serde_json::from_str("\"NOT (TotalCost > 100 OR Cost < 3)\"").unwrap();
        let tree = serde_json::to_string(&from_text).unwrap();
        let back: SlicePredicate = serde_json::from_str(&tree).unwrap();
        assert_eq!(back, from_text);
        assert_eq!(SlicePredicate::parse(&from_text.to_string()).unwrap(), from_text);
    }
}
