//! Operators over slice relations: external (project, select, transform,
//! join) and internal (per-tuple project, select, join of feature tables).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ident_text, Expr};
use crate::lex::{Cursor, Tok};
use crate::predicate::SlicePredicate;
use crate::relation::{JoinKind, Relation, Row, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::slice::{flatten_conflict, fmt_region, region_refines, region_schema, Features, SliceRelation};
use crate::transform::TransformSpec;
use crate::value::Value;

fn typed_regions(sr: &SliceRelation, wanted: &[AttrSet]) -> Result<Vec<Schema>> {
    wanted
        .iter()
        .map(|g| {
            sr.region_schema_for(g)
                .cloned()
                .ok_or_else(|| Error::UnknownRegionSchema(g.clone()))
        })
        .collect()
}

fn typed_features(sr: &SliceRelation, wanted: &[AttrSet]) -> Result<Vec<Schema>> {
    wanted
        .iter()
        .map(|f| {
            sr.feature_schema_for(f)
                .cloned()
                .ok_or_else(|| Error::UnknownFeatureSchema(f.clone()))
        })
        .collect()
}

/// Keeps tuples whose region schema is listed and, in each, only the listed
/// feature tables.
pub fn slice_project(sr: &SliceRelation, region_schemas: &[AttrSet], feature_schemas: &[AttrSet]) -> Result<SliceRelation> {
    let regions = typed_regions(sr, region_schemas)?;
    let features = typed_features(sr, feature_schemas)?;
    let mut out = SliceRelation::new(regions, features, sr.dimensions().clone())?;
    let keep: BTreeSet<&AttrSet> = region_schemas.iter().collect();
    for (region, feats) in sr.tuples() {
        if !keep.contains(&region_schema(region)) {
            continue;
        }
        let f: Features = feature_schemas
            .iter()
            .map(|k| (k.clone(), feats[k].clone()))
            .collect();
        out.insert(region.clone(), f)?;
    }
    Ok(out)
}

/// Tuples for which `pred` holds, unchanged.
pub fn slice_select(sr: &SliceRelation, pred: &SlicePredicate) -> Result<SliceRelation> {
    pred.check(sr)?;
    let tuples: Vec<(&Tuple, &Features)> = sr.tuples().collect();
    let keep: Vec<bool> = tuples
        .par_iter()
        .map(|(r, f)| pred.eval(r, f))
        .collect::<Result<_>>()?;
    let mut out = sr.empty_like();
    for ((r, f), k) in tuples.into_iter().zip(keep) {
        if k {
            out.insert(r.clone(), f.clone())?;
        }
    }
    Ok(out)
}

/// Transformations resolved against a slice relation's schemas.
#[derive(Debug, Clone)]
pub struct TransformPlan {
    specs: Vec<TransformSpec>,
    /// Per spec: projected input schema and output schema.
    shapes: Vec<(Schema, Schema)>,
    region_schemas: Vec<Schema>,
    feature_schemas: Vec<Schema>,
    consumed: BTreeSet<AttrSet>,
}

impl TransformPlan {
    /// Validates `specs` against the declared schemas and computes the output
    /// feature schemas: each consumed column is replaced by its outputs, other
    /// columns pass through.
    pub fn new(region_schemas: &[Schema], feature_schemas: &[Schema], specs: &[TransformSpec]) -> Result<Self> {
        let mut shapes = Vec::new();
        for s in specs {
            let input = feature_schemas
                .iter()
                .find(|f| &f.attr_set() == s.input())
                .ok_or_else(|| Error::UnknownFeatureSchema(s.input().clone()))?;
            let projected = input.restrict(&s.projection())?;
            let out = s.transform().output_schema(&projected)?;
            shapes.push((projected, out));
        }
        let consumed: BTreeSet<AttrSet> = specs.iter().map(|s| s.input().clone()).collect();
        let mut out_features: Vec<Schema> = Vec::new();
        for f in feature_schemas {
            let key = f.attr_set();
            if consumed.contains(&key) {
                for (s, (_, o)) in specs.iter().zip(&shapes) {
                    if s.input() == &key {
                        out_features.push(o.clone());
                    }
                }
            } else {
                out_features.push(f.clone());
            }
        }
        SliceRelation::new(region_schemas.to_vec(), out_features.clone(), AttrSet::new())
            .map_err(|e| Error::IllegitimateOutputSchema(e.to_string()))?;
        Ok(TransformPlan {
            specs: specs.to_vec(),
            shapes,
            region_schemas: region_schemas.to_vec(),
            feature_schemas: out_features,
            consumed,
        })
    }

    pub fn output_feature_schemas(&self) -> &[Schema] {
        &self.feature_schemas
    }

    pub fn specs(&self) -> &[TransformSpec] {
        &self.specs
    }

    pub fn needs_reference(&self) -> bool {
        self.specs.iter().any(TransformSpec::needs_reference)
    }

    /// Projected reference tables, one per spec that needs them.
    pub fn reference_tables(&self, reference: Option<&Features>) -> Result<Vec<Option<Relation>>> {
        self.specs
            .iter()
            .map(|s| {
                if !s.needs_reference() {
                    return Ok(None);
                }
                let feats = reference.ok_or_else(|| Error::MissingReferenceSlice(s.transform().key().into()))?;
                Ok(Some(feats[s.input()].project(&s.projection())?))
            })
            .collect()
    }

    /// Transforms the feature tables of one slice tuple.
    pub fn apply(&self, region: &Tuple, feats: &Features, references: &[Option<Relation>]) -> Result<Features> {
        let mut out: Features = feats
            .iter()
            .filter(|(k, _)| !self.consumed.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for ((s, (projected, schema)), reference) in self.specs.iter().zip(&self.shapes).zip(references) {
            let input = feats[s.input()].project(&projected.attr_set())?;
            let result = s.transform().apply(region, &input, reference.as_ref())?;
            if !result.schema().same_as(schema) {
                return Err(Error::IllegitimateOutputSchema(format!(
                    "`{}` produced {} but declared {}",
                    s.transform().key(),
                    result.schema(),
                    schema
                )));
            }
            out.insert(schema.attr_set(), result);
        }
        Ok(out)
    }

    pub fn empty_output(&self, dims: AttrSet) -> Result<SliceRelation> {
        SliceRelation::new(self.region_schemas.clone(), self.feature_schemas.clone(), dims)
    }
}

/// The reference slice: the features at the empty region.
pub fn reference_features(sr: &SliceRelation) -> Option<&Features> {
    sr.get(&Tuple::new())
}

/// Applies each transformation to its feature table in every tuple. Output
/// dimensions default to the input's.
pub fn slice_transform(sr: &SliceRelation, specs: &[TransformSpec], dims: Option<&AttrSet>) -> Result<SliceRelation> {
    let plan = TransformPlan::new(sr.region_schemas(), sr.feature_schemas(), specs)?;
    let references = plan.reference_tables(reference_features(sr))?;
    let tuples: Vec<(&Tuple, &Features)> = sr.tuples().collect();
    let results: Vec<Features> = tuples
        .par_iter()
        .map(|(r, f)| plan.apply(r, f, &references))
        .collect::<Result<_>>()?;
    let mut out = plan.empty_output(dims.unwrap_or(sr.dimensions()).clone())?;
    for ((r, _), f) in tuples.into_iter().zip(results) {
        out.insert(r.clone(), f)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionCondition {
    #[serde(rename = "REGION_EQUAL")]
    Equal,
    #[serde(rename = "REGION_REFINES")]
    Refines,
}

fn suffixed(s: &Schema, suffix: &str) -> Result<(Schema, HashMap<String, String>)> {
    let map: HashMap<String, String> = s.names().map(|n| (n.to_string(), format!("{n}{suffix}"))).collect();
    let schema = Schema::new(
        s.columns()
            .iter()
            .map(|c| crate::schema::Column { name: map[&c.name].clone(), ty: c.ty })
            .collect(),
    )?;
    Ok((schema, map))
}

/// Pairs tuples of `left` and `right` whose regions satisfy `condition` and
/// concatenates their features. Feature schemas present on both sides are
/// renamed with `_l` / `_r` suffixes.
///
/// Under `Refines`, a left region `r` pairs with every right region `r'`
/// such that `r ≺ r'`; since their shared attributes agree, the joined
/// region is `r`. A left region may therefore meet at most one right region.
pub fn slice_join(left: &SliceRelation, right: &SliceRelation, condition: RegionCondition, dims: &AttrSet) -> Result<SliceRelation> {
    let shared: BTreeSet<AttrSet> = left
        .feature_sets()
        .into_iter()
        .filter(|f| right.feature_sets().contains(f))
        .collect();
    let mut features = Vec::new();
    let mut lmap = HashMap::new();
    let mut rmap = HashMap::new();
    for f in left.feature_schemas() {
        if shared.contains(&f.attr_set()) {
            let (s, m) = suffixed(f, "_l")?;
            lmap.insert(f.attr_set(), m);
            features.push(s);
        } else {
            features.push(f.clone());
        }
    }
    for f in right.feature_schemas() {
        if shared.contains(&f.attr_set()) {
            let (s, m) = suffixed(f, "_r")?;
            rmap.insert(f.attr_set(), m);
            features.push(s);
        } else {
            features.push(f.clone());
        }
    }
    let regions: Vec<Schema> = left
        .region_schemas()
        .iter()
        .filter(|g| {
            right.region_schemas().iter().any(|g2| match condition {
                RegionCondition::Equal => g2.attr_set() == g.attr_set(),
                RegionCondition::Refines => g2.attr_set().is_subset(&g.attr_set()),
            })
        })
        .cloned()
        .collect();
    let region_sets: Vec<AttrSet> = regions.iter().map(Schema::attr_set).collect();
    if let Some(d) = flatten_conflict(&region_sets, &features, dims) {
        return Err(Error::DimensionConflict(format!(
            "joined slice relation would flatten to two members with dimensions {d}"
        )));
    }
    let mut out = SliceRelation::new(regions, features, dims.clone())
        .map_err(|e| Error::DimensionConflict(e.to_string()))?;

    let rename = |feats: &Features, maps: &HashMap<AttrSet, HashMap<String, String>>| -> Result<Features> {
        feats
            .iter()
            .map(|(k, v)| match maps.get(k) {
                Some(m) => {
                    let r = v.rename(m)?;
                    Ok((r.attr_set(), r))
                }
                None => Ok((k.clone(), v.clone())),
            })
            .collect()
    };
    for (r, lf) in left.tuples() {
        let partners: Vec<(&Tuple, &Features)> = match condition {
            RegionCondition::Equal => right.get(r).map(|f| (r, f)).into_iter().collect(),
            RegionCondition::Refines => right.tuples().filter(|(r2, _)| region_refines(r, r2)).collect(),
        };
        if partners.len() > 1 {
            return Err(Error::DimensionConflict(format!(
                "region {} refines {} right-hand regions; the joined region would not be a key",
                fmt_region(r),
                partners.len()
            )));
        }
        for (_, rf) in partners {
            let mut f = rename(lf, &lmap)?;
            f.extend(rename(rf, &rmap)?);
            out.insert(r.clone(), f)?;
        }
    }
    Ok(out)
}

/// Projects listed feature tables in every tuple; `None` keeps a table
/// whole. Equal projected schemas are unioned and unlisted tables dropped.
pub fn slice_internal_project(sr: &SliceRelation, projections: &[(AttrSet, Option<AttrSet>)]) -> Result<SliceRelation> {
    let mut targets: Vec<Schema> = Vec::new();
    for (f, p) in projections {
        let schema = sr
            .feature_schema_for(f)
            .ok_or_else(|| Error::UnknownFeatureSchema(f.clone()))?;
        let p = p.clone().unwrap_or_else(|| f.clone());
        if !p.is_subset(f) {
            return Err(Error::ProjectionNotSubset { feature: f.clone(), projected: p });
        }
        let projected = schema.restrict(&p)?;
        match targets.iter().find(|t| t.attr_set() == p) {
            Some(t) if !t.same_as(&projected) => {
                return Err(Error::SchemaMismatch(format!("projections to {p} disagree on types")))
            }
            Some(_) => {}
            None => targets.push(projected),
        }
    }
    let mut out = SliceRelation::new(sr.region_schemas().to_vec(), targets.clone(), sr.dimensions().clone())?;
    for (r, feats) in sr.tuples() {
        let mut f: Features = targets
            .iter()
            .map(|t| (t.attr_set(), Relation::empty(t.clone())))
            .collect();
        for (src, p) in projections {
            let p = p.clone().unwrap_or_else(|| src.clone());
            let projected = feats[src].project(&p)?;
            let slot = f.get_mut(&p).unwrap();
            *slot = slot.union(&projected)?;
        }
        out.insert(r.clone(), f)?;
    }
    Ok(out)
}

/// `[A, B].x = [C, D].y`: equality between attributes of two feature tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JoinCondition {
    pub left: AttrSet,
    pub left_attr: String,
    pub right: AttrSet,
    pub right_attr: String,
}

impl JoinCondition {
    pub fn new(left: AttrSet, left_attr: &str, right: AttrSet, right_attr: &str) -> Self {
        JoinCondition { left, left_attr: left_attr.into(), right, right_attr: right_attr.into() }
    }

    /// Parses `[A, B].x = [C, D].y`; a bare name before the dot is looked up
    /// with `resolve` (schema handles).
    pub fn parse_with(src: &str, resolve: &dyn Fn(&str) -> Option<AttrSet>) -> Result<Self> {
        let mut c = Cursor::new(src)?;
        let (left, left_attr) = parse_side(&mut c, resolve)?;
        if !(c.eat_sym("=") || c.eat_sym("==")) {
            return Err(c.error("expected `=`"));
        }
        let (right, right_attr) = parse_side(&mut c, resolve)?;
        c.expect_end()?;
        Ok(JoinCondition { left, left_attr, right, right_attr })
    }

    pub fn parse(src: &str) -> Result<Self> {
        JoinCondition::parse_with(src, &|_| None)
    }

    fn check(&self, sr: &SliceRelation) -> Result<()> {
        for (f, a) in [(&self.left, &self.left_attr), (&self.right, &self.right_attr)] {
            let s = sr
                .feature_schema_for(f)
                .ok_or_else(|| Error::PredicateSchemaError(format!("unknown feature schema {f}")))?;
            if !s.contains(a) {
                return Err(Error::PredicateSchemaError(format!("feature schema {f} has no attribute `{a}`")));
            }
        }
        let lt = sr.feature_schema_for(&self.left).unwrap().type_of(&self.left_attr).unwrap();
        let rt = sr.feature_schema_for(&self.right).unwrap().type_of(&self.right_attr).unwrap();
        if !(lt == rt || lt.is_numeric() && rt.is_numeric()) {
            return Err(Error::TypeMismatch(format!("{self} compares {lt} with {rt}")));
        }
        Ok(())
    }
}

fn parse_side(c: &mut Cursor, resolve: &dyn Fn(&str) -> Option<AttrSet>) -> Result<(AttrSet, String)> {
    let schema = if c.eat_sym("[") {
        let mut s = AttrSet::new();
        if !c.eat_sym("]") {
            loop {
                s.insert(c.expect_ident()?);
                if c.eat_sym("]") {
                    break;
                }
                c.expect_sym(",")?;
            }
        }
        s
    } else {
        let at = c.offset();
        let name = c.expect_ident()?;
        resolve(&name).ok_or_else(|| crate::lex::err(c.src, at, &format!("unknown schema handle `{name}`")))?
    };
    c.expect_sym(".")?;
    let attr = match c.next() {
        Some(Tok::Ident(a)) => a,
        _ => return Err(c.error("expected an attribute name")),
    };
    Ok((schema, attr))
}

impl fmt::Display for JoinCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |s: &AttrSet, a: &str| {
            let names: Vec<String> = s.iter().map(|n| ident_text(n)).collect();
            format!("[{}].{}", names.join(", "), ident_text(a))
        };
        write!(f, "{} = {}", side(&self.left, &self.left_attr), side(&self.right, &self.right_attr))
    }
}

impl Serialize for JoinCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for JoinCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        JoinCondition::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Row filters on individual feature tables plus semi-join conditions
/// between them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InternalSelect {
    #[serde(default, rename = "where", skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<FeatureFilter>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub join_conditions: Vec<JoinCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFilter {
    pub feature: AttrSet,
    pub predicate: Expr,
}

/// One semi-join edge with composite keys, grouped per table pair.
struct Edge {
    a: AttrSet,
    b: AttrSet,
    a_keys: Vec<String>,
    b_keys: Vec<String>,
}

fn edges(conds: &[JoinCondition]) -> Result<Vec<Edge>> {
    let mut grouped: BTreeMap<(AttrSet, AttrSet), (Vec<String>, Vec<String>)> = BTreeMap::new();
    for c in conds {
        if c.left == c.right {
            return Err(Error::UnsupportedJoinGraph(format!("{c} relates a table to itself")));
        }
        let (key, la, ra) = if c.left < c.right {
            ((c.left.clone(), c.right.clone()), &c.left_attr, &c.right_attr)
        } else {
            ((c.right.clone(), c.left.clone()), &c.right_attr, &c.left_attr)
        };
        let e = grouped.entry(key).or_default();
        e.0.push(la.clone());
        e.1.push(ra.clone());
    }
    // Union-find over feature schemas; an edge joining an existing component
    // closes a cycle.
    let mut parent: HashMap<AttrSet, AttrSet> = HashMap::new();
    fn find(p: &mut HashMap<AttrSet, AttrSet>, x: &AttrSet) -> AttrSet {
        let next = p.get(x).cloned().unwrap_or_else(|| x.clone());
        if &next == x {
            return next;
        }
        let root = find(p, &next);
        p.insert(x.clone(), root.clone());
        root
    }
    let mut out = Vec::new();
    for ((a, b), (ak, bk)) in grouped {
        let (ra, rb) = (find(&mut parent, &a), find(&mut parent, &b));
        if ra == rb {
            return Err(Error::UnsupportedJoinGraph(format!(
                "join conditions between {a} and {b} close a cycle"
            )));
        }
        parent.insert(ra, rb);
        out.push(Edge { a, b, a_keys: ak, b_keys: bk });
    }
    Ok(out)
}

fn key_cols(r: &Relation, keys: &[String]) -> Result<Vec<usize>> {
    keys.iter().map(|k| r.schema().require(k)).collect()
}

fn key_of(row: &Row, idx: &[usize]) -> Option<Vec<Value>> {
    idx.iter()
        .map(|&i| match &row[i] {
            Value::Null => None,
            Value::Int(x) => Some(Value::Float(*x as f64)),
            v => Some(v.clone()),
        })
        .collect()
}

/// Rows of `r` with a key match in `other`.
fn semi_join(r: &Relation, rk: &[String], other: &Relation, ok: &[String]) -> Result<Relation> {
    let (ri, oi) = (key_cols(r, rk)?, key_cols(other, ok)?);
    let keys: HashSet<Vec<Value>> = other.rows().filter_map(|row| key_of(row, &oi)).collect();
    Ok(r.filter_rows(|row| key_of(row, &ri).is_some_and(|k| keys.contains(&k))))
}

/// Filters feature tables in every tuple: local predicates first, then
/// semi-join reduction until no table changes. Tuples and schemas are kept
/// even when tables become empty. The join graph must be acyclic.
pub fn slice_internal_select(sr: &SliceRelation, stmt: &InternalSelect) -> Result<SliceRelation> {
    for f in &stmt.filters {
        let s = sr
            .feature_schema_for(&f.feature)
            .ok_or_else(|| Error::PredicateSchemaError(format!("unknown feature schema {}", f.feature)))?;
        f.predicate
            .infer_type(s)
            .map_err(|e| Error::PredicateSchemaError(format!("{}: {e}", f.predicate)))?;
    }
    for c in &stmt.join_conditions {
        c.check(sr)?;
    }
    let edges = edges(&stmt.join_conditions)?;
    let tuples: Vec<(&Tuple, &Features)> = sr.tuples().collect();
    let results: Vec<Features> = tuples
        .par_iter()
        .map(|(_, feats)| {
            let mut f: Features = (*feats).clone();
            for flt in &stmt.filters {
                let t = f.get_mut(&flt.feature).unwrap();
                *t = t.select(&flt.predicate)?;
            }
            loop {
                let mut changed = false;
                for e in &edges {
                    let a = semi_join(&f[&e.a], &e.a_keys, &f[&e.b], &e.b_keys)?;
                    let b = semi_join(&f[&e.b], &e.b_keys, &a, &e.a_keys)?;
                    changed |= a.len() != f[&e.a].len() || b.len() != f[&e.b].len();
                    f.insert(e.a.clone(), a);
                    f.insert(e.b.clone(), b);
                }
                if !changed {
                    break;
                }
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    let mut out = sr.empty_like();
    for ((r, _), f) in tuples.into_iter().zip(results) {
        out.insert(r.clone(), f)?;
    }
    Ok(out)
}

/// Inner-joins two feature tables in every tuple. All conditions must relate
/// the same pair of schemas; the joined table replaces both.
pub fn slice_internal_join(sr: &SliceRelation, conditions: &[JoinCondition]) -> Result<SliceRelation> {
    let first = conditions
        .first()
        .ok_or_else(|| Error::InvalidArgument("slice_internal_join needs at least one condition".into()))?;
    let (a, b) = (first.left.clone(), first.right.clone());
    let mut on = Vec::new();
    for c in conditions {
        c.check(sr)?;
        if c.left == a && c.right == b {
            on.push((c.left_attr.clone(), c.right_attr.clone()));
        } else if c.left == b && c.right == a {
            on.push((c.right_attr.clone(), c.left_attr.clone()));
        } else {
            return Err(Error::InvalidArgument(format!(
                "condition {c} does not relate {a} and {b}"
            )));
        }
    }
    let join = |x: &Relation, y: &Relation| -> Result<Relation> {
        if a == b {
            // A table joined with itself on all of its attributes is itself.
            let all: BTreeSet<&str> = a.iter().map(String::as_str).collect();
            if on.iter().all(|(l, r)| l == r) && on.iter().map(|(l, _)| l.as_str()).collect::<BTreeSet<_>>() == all {
                return Ok(x.clone());
            }
        }
        x.join(y, &on, JoinKind::Inner)
    };
    let sa = sr.feature_schema_for(&a).unwrap();
    let sb = sr.feature_schema_for(&b).unwrap();
    let shape = join(&Relation::empty(sa.clone()), &Relation::empty(sb.clone()))?;
    let mut features = Vec::new();
    let mut placed = false;
    for f in sr.feature_schemas() {
        let k = f.attr_set();
        if k == a || k == b {
            if !placed {
                features.push(shape.schema().clone());
                placed = true;
            }
        } else {
            features.push(f.clone());
        }
    }
    let mut out = SliceRelation::new(sr.region_schemas().to_vec(), features, sr.dimensions().clone())
        .map_err(|e| Error::IllegitimateOutputSchema(e.to_string()))?;
    for (r, feats) in sr.tuples() {
        let joined = join(&feats[&a], &feats[&b])?;
        let mut f: Features = feats
            .iter()
            .filter(|(k, _)| **k != a && **k != b)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        f.insert(joined.attr_set(), joined);
        out.insert(r.clone(), f)?;
    }
    Ok(out)
}
