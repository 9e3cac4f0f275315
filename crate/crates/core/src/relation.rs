//! Typed relations with set semantics and the classical operators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::schema::{AttrSet, Column, Schema};
use crate::value::{Value, ValueType};

/// A tuple keyed by attribute name. Regions are tuples.
pub type Tuple = BTreeMap<String, Value>;

pub type Row = Vec<Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    FullOuter,
}

/// A finite set of rows over a typed schema.
///
/// Rows are stored positionally in schema order. Equality ignores column
/// order, matching schema identity.
#[derive(Debug, Clone, Default)]
pub struct Relation {
    schema: Schema,
    rows: BTreeSet<Row>,
}

impl Relation {
    pub fn empty(schema: Schema) -> Self {
        Relation { schema, rows: BTreeSet::new() }
    }

    /// Builds a relation, checking arity and coercing each cell to its
    /// column type.
    pub fn new(schema: Schema, rows: impl IntoIterator<Item = Row>) -> Result<Self> {
        let mut r = Relation::empty(schema);
        for row in rows {
            r.insert(row)?;
        }
        Ok(r)
    }

    pub fn insert(&mut self, row: Row) -> Result<bool> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values but schema {} has {} attributes",
                row.len(),
                self.schema,
                self.schema.len()
            )));
        }
        let row = row
            .into_iter()
            .zip(self.schema.columns())
            .map(|(v, c)| v.coerce_to(c.ty))
            .collect::<Result<Row>>()?;
        Ok(self.rows.insert(row))
    }

    fn from_parts(schema: Schema, rows: BTreeSet<Row>) -> Self {
        Relation { schema, rows }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn attr_set(&self) -> AttrSet {
        self.schema.attr_set()
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> + '_ {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains_row(&self, row: &[Value]) -> bool {
        self.rows.contains(row)
    }

    /// Row as an attribute-keyed tuple.
    pub fn tuple(&self, row: &[Value]) -> Tuple {
        self.schema
            .names()
            .map(str::to_string)
            .zip(row.iter().cloned())
            .collect()
    }

    pub fn tuples(&self) -> impl Iterator<Item = Tuple> + '_ {
        self.rows.iter().map(|r| self.tuple(r))
    }

    /// Value of `attr` in `row`, which must belong to this relation.
    pub fn get<'a>(&self, row: &'a [Value], attr: &str) -> Result<&'a Value> {
        Ok(&row[self.schema.require(attr)?])
    }

    /// Rows with columns reordered by attribute name, sorted. This is the
    /// canonical order for output and comparison.
    pub fn sorted_rows(&self) -> (Vec<Column>, Vec<Row>) {
        let mut order: Vec<usize> = (0..self.schema.len()).collect();
        order.sort_by(|&a, &b| self.schema.columns()[a].name.cmp(&self.schema.columns()[b].name));
        let cols = order.iter().map(|&i| self.schema.columns()[i].clone()).collect();
        let mut rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| order.iter().map(|&i| r[i].clone()).collect())
            .collect();
        rows.sort();
        (cols, rows)
    }

    pub fn project(&self, attrs: &AttrSet) -> Result<Relation> {
        let schema = self.schema.restrict(attrs)?;
        let idx: Vec<usize> = schema
            .names()
            .map(|n| self.schema.index_of(n).expect("restricted"))
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Ok(Relation::from_parts(schema, rows))
    }

    pub fn select(&self, pred: &Expr) -> Result<Relation> {
        pred.infer_type(&self.schema)?;
        let mut rows = BTreeSet::new();
        for r in &self.rows {
            if pred.test(&self.schema, r)? {
                rows.insert(r.clone());
            }
        }
        Ok(Relation::from_parts(self.schema.clone(), rows))
    }

    /// Groups rows by their values on `keys`; each group holds the
    /// key-stripped remainder.
    pub fn partition(&self, keys: &AttrSet) -> Result<BTreeMap<Tuple, Relation>> {
        let key_schema = self.schema.restrict(keys)?;
        let rest_names = self.schema.attr_set().difference(keys);
        let rest_schema = self.schema.restrict(&rest_names)?;
        let key_idx: Vec<usize> = key_schema
            .names()
            .map(|n| self.schema.index_of(n).unwrap())
            .collect();
        let rest_idx: Vec<usize> = rest_schema
            .names()
            .map(|n| self.schema.index_of(n).unwrap())
            .collect();
        let mut out: BTreeMap<Tuple, Relation> = BTreeMap::new();
        for r in &self.rows {
            let key: Tuple = key_schema
                .names()
                .zip(&key_idx)
                .map(|(n, &i)| (n.to_string(), r[i].clone()))
                .collect();
            out.entry(key)
                .or_insert_with(|| Relation::empty(rest_schema.clone()))
                .rows
                .insert(rest_idx.iter().map(|&i| r[i].clone()).collect());
        }
        Ok(out)
    }

    /// Adds the attributes of `prefix` as constant columns in front.
    pub fn prefixed(&self, prefix: &Tuple, prefix_schema: &Schema) -> Result<Relation> {
        let mut schema = prefix_schema.clone();
        for c in self.schema.columns() {
            schema.push(c.name.clone(), c.ty)?;
        }
        let head: Row = prefix_schema
            .names()
            .map(|n| prefix.get(n).cloned().unwrap_or(Value::Null))
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| head.iter().chain(r.iter()).cloned().collect())
            .collect();
        Ok(Relation::from_parts(schema, rows))
    }

    /// Renames attributes according to `map`; unmapped names are kept.
    pub fn rename(&self, map: &HashMap<String, String>) -> Result<Relation> {
        let cols = self
            .schema
            .columns()
            .iter()
            .map(|c| Column {
                name: map.get(&c.name).cloned().unwrap_or_else(|| c.name.clone()),
                ty: c.ty,
            })
            .collect();
        Ok(Relation::from_parts(Schema::new(cols)?, self.rows.clone()))
    }

    /// Equality join with nulls never matching.
    pub fn join(&self, other: &Relation, on: &[(String, String)], kind: JoinKind) -> Result<Relation> {
        self.join_with(other, on, kind, false)
    }

    /// Equality join. Keys with the same name on both sides become one output
    /// column (coalesced for outer joins); other colliding names get `_l` and
    /// `_r` suffixes. With `null_equal`, null keys match each other.
    pub fn join_with(
        &self,
        other: &Relation,
        on: &[(String, String)],
        kind: JoinKind,
        null_equal: bool,
    ) -> Result<Relation> {
        let mut lk = Vec::new();
        let mut rk = Vec::new();
        let mut widen = Vec::new();
        for (a, b) in on {
            let (li, ri) = (self.schema.require(a)?, other.schema.require(b)?);
            let (lt, rt) = (self.schema.columns()[li].ty, other.schema.columns()[ri].ty);
            let numeric_pair = lt.is_numeric() && rt.is_numeric();
            if lt != rt && !numeric_pair {
                return Err(Error::TypeMismatch(format!(
                    "join key {a} is {lt} but {b} is {rt}"
                )));
            }
            if a == b && lt != rt {
                return Err(Error::TypeMismatch(format!(
                    "shared join key {a} is {lt} on one side and {rt} on the other"
                )));
            }
            lk.push(li);
            rk.push(ri);
            widen.push(lt != rt);
        }
        let merged: BTreeSet<&str> = on
            .iter()
            .filter(|(a, b)| a == b)
            .map(|(a, _)| a.as_str())
            .collect();

        // Output layout: every left column, then right columns that are not
        // merged keys.
        let right_keep: Vec<usize> = (0..other.schema.len())
            .filter(|&i| !merged.contains(other.schema.columns()[i].name.as_str()))
            .collect();
        let mut schema = Schema::empty();
        for c in self.schema.columns() {
            let clash = !merged.contains(c.name.as_str()) && other.schema.contains(&c.name);
            let name = if clash { format!("{}_l", c.name) } else { c.name.clone() };
            schema.push(name, c.ty)?;
        }
        for &i in &right_keep {
            let c = &other.schema.columns()[i];
            let name = if self.schema.contains(&c.name) {
                format!("{}_r", c.name)
            } else {
                c.name.clone()
            };
            schema.push(name, c.ty)?;
        }
        // Merged key positions in the left layout and where they come from on
        // the right, for coalescing right-only rows.
        let merged_pos: Vec<(usize, usize)> = on
            .iter()
            .filter(|(a, b)| a == b)
            .map(|(a, _)| (self.schema.index_of(a).unwrap(), other.schema.index_of(a).unwrap()))
            .collect();

        let key_of = |row: &Row, idx: &[usize]| -> Option<Vec<Value>> {
            let mut k = Vec::with_capacity(idx.len());
            for (j, &i) in idx.iter().enumerate() {
                let v = &row[i];
                if v.is_null() && !null_equal {
                    return None;
                }
                k.push(match (widen[j], v) {
                    (true, Value::Int(x)) => Value::Float(*x as f64),
                    _ => v.clone(),
                });
            }
            Some(k)
        };

        let mut index: HashMap<Vec<Value>, Vec<&Row>> = HashMap::new();
        for r in &other.rows {
            if let Some(k) = key_of(r, &rk) {
                index.entry(k).or_default().push(r);
            }
        }
        let mut matched_right: BTreeSet<&Row> = BTreeSet::new();
        let mut rows = BTreeSet::new();
        let right_nulls = || right_keep.iter().map(|_| Value::Null);
        for l in &self.rows {
            let hits = key_of(l, &lk).and_then(|k| index.get(&k));
            match hits {
                Some(rs) => {
                    for r in rs {
                        matched_right.insert(r);
                        rows.insert(
                            l.iter()
                                .cloned()
                                .chain(right_keep.iter().map(|&i| r[i].clone()))
                                .collect(),
                        );
                    }
                }
                None if kind == JoinKind::FullOuter => {
                    rows.insert(l.iter().cloned().chain(right_nulls()).collect());
                }
                None => {}
            }
        }
        if kind == JoinKind::FullOuter {
            for r in &other.rows {
                if matched_right.contains(r) {
                    continue;
                }
                let mut left: Row = vec![Value::Null; self.schema.len()];
                for &(li, ri) in &merged_pos {
                    left[li] = r[ri].clone();
                }
                rows.insert(
                    left.into_iter()
                        .chain(right_keep.iter().map(|&i| r[i].clone()))
                        .collect(),
                );
            }
        }
        Ok(Relation::from_parts(schema, rows))
    }

    /// Cartesian product; equivalent to a join with no conditions.
    pub fn product(&self, other: &Relation, kind: JoinKind) -> Result<Relation> {
        self.join_with(other, &[], kind, false)
    }

    /// Set union of two relations over the same attribute set.
    pub fn union(&self, other: &Relation) -> Result<Relation> {
        if !self.schema.same_as(&other.schema) {
            return Err(Error::SchemaMismatch(format!(
                "cannot union {} with {}",
                self.schema, other.schema
            )));
        }
        let aligned = other.reorder(&self.schema);
        let mut rows = self.rows.clone();
        rows.extend(aligned.rows);
        Ok(Relation::from_parts(self.schema.clone(), rows))
    }

    /// Union over the union of all schemas, padding missing attributes with
    /// null.
    pub fn union_padded(rs: &[Relation]) -> Result<Relation> {
        let mut schema = Schema::empty();
        for r in rs {
            schema = schema.merge(&r.schema)?;
        }
        let mut rows = BTreeSet::new();
        for r in rs {
            rows.extend(r.pad_to(&schema).rows);
        }
        Ok(Relation::from_parts(schema, rows))
    }

    /// Rows laid out in `target` order; attributes missing here become null.
    pub fn pad_to(&self, target: &Schema) -> Relation {
        let idx: Vec<Option<usize>> = target.names().map(|n| self.schema.index_of(n)).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                idx.iter()
                    .map(|i| i.map_or(Value::Null, |i| r[i].clone()))
                    .collect()
            })
            .collect();
        Relation::from_parts(target.clone(), rows)
    }

    /// Same relation with columns in `target`'s order. `target` must have the
    /// same attribute set.
    pub fn reorder(&self, target: &Schema) -> Relation {
        self.pad_to(target)
    }

    /// Appends computed columns; each expression sees the original columns
    /// and the ones computed before it.
    pub fn mutate(&self, fns: &[(Expr, String)]) -> Result<Relation> {
        let mut schema = self.schema.clone();
        for (e, alias) in fns {
            let ty = e.infer_type(&schema)?.unwrap_or(ValueType::Float);
            schema.push(alias.clone(), ty)?;
        }
        let partials = (0..fns.len())
            .map(|i| Schema::new(schema.columns()[..self.schema.len() + i].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = BTreeSet::new();
        for r in &self.rows {
            let mut row = r.clone();
            for (i, (e, _)) in fns.iter().enumerate() {
                let v = e.eval(&partials[i], &row)?;
                row.push(v.coerce_to(schema.columns()[self.schema.len() + i].ty)?);
            }
            rows.insert(row);
        }
        Ok(Relation::from_parts(schema, rows))
    }

    /// Keeps the rows for which `keep` returns true.
    pub fn filter_rows(&self, mut keep: impl FnMut(&Row) -> bool) -> Relation {
        Relation::from_parts(
            self.schema.clone(),
            self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        )
    }

    /// Rows as JSON objects keyed by attribute name, in canonical order.
    pub fn to_json_rows(&self) -> serde_json::Value {
        let (cols, rows) = self.sorted_rows();
        serde_json::Value::Array(
            rows.iter()
                .map(|r| {
                    serde_json::Value::Object(
                        cols.iter()
                            .zip(r)
                            .map(|(c, v)| (c.name.clone(), v.to_json()))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

impl PartialEq for Relation {
    fn eq(&self, other: &Self) -> bool {
        self.schema.same_as(&other.schema) && self.rows == other.reorder(&self.schema).rows
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (cols, rows) = self.sorted_rows();
        let names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
        writeln!(f, "[{}]", names.join(", "))?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            writeln!(f, "({})", cells.join(", "))?;
        }
        Ok(())
    }
}

/// Builds a relation from `(name, type)` columns and literal rows. Panics on
/// malformed input; intended for tests and examples.
pub fn relation<S: Into<String>>(
    cols: impl IntoIterator<Item = (S, ValueType)>,
    rows: impl IntoIterator<Item = Vec<Value>>,
) -> Relation {
    Relation::new(Schema::of(cols), rows).expect("well-formed relation")
}
