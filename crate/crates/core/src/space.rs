//! Relation spaces: collections of relations indexed by their dimension
//! subsets.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::aggregate::{group_aggregate, AggSpec};
use crate::error::{Error, Result};
use crate::relation::Relation;
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

/// Name of the column added by [`RelationSpace::to_single_relation`].
pub const GROUPING_ID: &str = "__grouping_id";

type Thunk = Box<dyn Fn() -> Result<Relation> + Send + Sync>;

struct MemberData {
    cell: OnceLock<Result<Relation>>,
    thunk: Option<Thunk>,
    reads: AtomicUsize,
}

/// One relation of a space. Clones share storage, the lazy cache and the
/// read counter.
#[derive(Clone)]
pub struct Member {
    dims: AttrSet,
    schema: Schema,
    data: Arc<MemberData>,
}

impl Member {
    fn materialized(dims: AttrSet, rel: Relation) -> Self {
        let cell = OnceLock::new();
        let schema = rel.schema().clone();
        let _ = cell.set(Ok(rel));
        Member {
            dims,
            schema,
            data: Arc::new(MemberData { cell, thunk: None, reads: AtomicUsize::new(0) }),
        }
    }

    fn lazy(dims: AttrSet, schema: Schema, thunk: Thunk) -> Self {
        Member {
            dims,
            schema,
            data: Arc::new(MemberData {
                cell: OnceLock::new(),
                thunk: Some(thunk),
                reads: AtomicUsize::new(0),
            }),
        }
    }

    /// The member's dimension subset, `schema ∩ D`.
    pub fn dims(&self) -> &AttrSet {
        &self.dims
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// The member's rows, computing them on first access if lazy.
    pub fn relation(&self) -> Result<&Relation> {
        self.data.reads.fetch_add(1, Ordering::Relaxed);
        self.peek()
    }

    /// Like [`Member::relation`] but does not count as a read.
    pub fn peek(&self) -> Result<&Relation> {
        let d = &self.data;
        d.cell
            .get_or_init(|| (d.thunk.as_ref().expect("lazy member has a thunk"))())
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn is_computed(&self) -> bool {
        self.data.cell.get().is_some()
    }

    /// Number of times the rows were requested through [`Member::relation`].
    pub fn reads(&self) -> usize {
        self.data.reads.load(Ordering::Relaxed)
    }
}

impl fmt::Debug for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Member")
            .field("dims", &self.dims)
            .field("schema", &self.schema)
            .field("computed", &self.is_computed())
            .finish()
    }
}

/// Grouping sets for [`RelationSpace::create`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupingSets {
    #[serde(rename = "explicit")]
    Explicit(Vec<AttrSet>),
    #[serde(rename = "cube")]
    Cube(Vec<String>),
    #[serde(rename = "cube_nonempty")]
    CubeNonEmpty(Vec<String>),
}

impl GroupingSets {
    pub fn expand(&self) -> Result<Vec<AttrSet>> {
        let sets = match self {
            GroupingSets::Explicit(sets) => sets.clone(),
            GroupingSets::Cube(attrs) => cube(attrs, true),
            GroupingSets::CubeNonEmpty(attrs) => cube(attrs, false),
        };
        let mut seen = std::collections::BTreeSet::new();
        for s in &sets {
            if !seen.insert(s) {
                return Err(Error::DuplicateGroupingSet(s.clone()));
            }
        }
        Ok(sets)
    }
}

/// All subsets of `attrs`, smallest first.
pub fn cube(attrs: &[String], include_empty: bool) -> Vec<AttrSet> {
    let n = attrs.len();
    let mut out: Vec<AttrSet> = (0..1u64 << n)
        .filter(|&m| include_empty || m != 0)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| attrs[i].as_str()).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Which members of a created space are computed eagerly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Materialization {
    Global(bool),
    PerSet(Vec<bool>),
}

impl Default for Materialization {
    fn default() -> Self {
        Materialization::Global(true)
    }
}

impl Materialization {
    fn eager(&self, i: usize) -> Result<bool> {
        match self {
            Materialization::Global(b) => Ok(*b),
            Materialization::PerSet(v) => v.get(i).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("no materialization flag for grouping set {i}"))
            }),
        }
    }
}

/// A collection of relations with pairwise-distinct dimension subsets.
#[derive(Clone, Debug)]
pub struct RelationSpace {
    dimensions: AttrSet,
    values: AttrSet,
    members: BTreeMap<AttrSet, Member>,
}

impl RelationSpace {
    /// Builds a space from materialized relations, checking legitimacy.
    pub fn new(dimensions: AttrSet, values: AttrSet, relations: Vec<Relation>) -> Result<Self> {
        let mut space = RelationSpace::shell(dimensions, values)?;
        for r in relations {
            let dims = r.attr_set().intersection(&space.dimensions);
            space.add(Member::materialized(dims, r))?;
        }
        Ok(space)
    }

    /// Builds a space whose value set is everything outside `dimensions`.
    pub fn from_relations(dimensions: AttrSet, relations: Vec<Relation>) -> Result<Self> {
        let mut values = AttrSet::new();
        for r in &relations {
            values = values.union(&r.attr_set().difference(&dimensions));
        }
        RelationSpace::new(dimensions, values, relations)
    }

    /// A single relation seen as a space with no dimensions.
    pub fn from_relation(r: Relation) -> Self {
        let values = r.attr_set();
        RelationSpace::new(AttrSet::new(), values, vec![r]).expect("one member is always legitimate")
    }

    fn shell(dimensions: AttrSet, values: AttrSet) -> Result<Self> {
        if !dimensions.is_disjoint(&values) {
            return Err(Error::IllegitimateSpace(format!(
                "dimensions {dimensions} and values {values} overlap"
            )));
        }
        Ok(RelationSpace { dimensions, values, members: BTreeMap::new() })
    }

    fn add(&mut self, m: Member) -> Result<()> {
        let allowed = self.dimensions.union(&self.values);
        let attrs = m.schema.attr_set();
        if !attrs.is_subset(&allowed) {
            return Err(Error::IllegitimateSpace(format!(
                "member {attrs} has attributes outside dimensions and values: {}",
                attrs.difference(&allowed)
            )));
        }
        if self.members.contains_key(&m.dims) {
            return Err(Error::IllegitimateSpace(format!(
                "two members share the dimension subset {}",
                m.dims
            )));
        }
        self.members.insert(m.dims.clone(), m);
        Ok(())
    }

    /// One member per grouping set, each aggregated independently from
    /// `base`. Members not marked for materialization are computed on first
    /// access.
    pub fn create(
        base: &Relation,
        grouping_sets: &GroupingSets,
        aggs: &[AggSpec],
        materialization: &Materialization,
    ) -> Result<Self> {
        let sets = grouping_sets.expand()?;
        let dims = sets.iter().fold(AttrSet::new(), |acc, s| acc.union(s));
        let values: AttrSet = aggs.iter().map(|a| a.alias.as_str()).collect();
        if values.len() != aggs.len() {
            let mut seen = AttrSet::new();
            for a in aggs {
                if !seen.insert(a.alias.clone()) {
                    return Err(Error::DuplicateAlias(a.alias.clone()));
                }
            }
        }
        let mut space = RelationSpace::shell(dims, values)?;
        let base = Arc::new(base.clone());
        let aggs: Arc<[AggSpec]> = aggs.into();
        for (i, set) in sets.into_iter().enumerate() {
            // Validates attribute names and types up front, lazy or not.
            let mut schema = base.schema().restrict(&set)?;
            for a in aggs.iter() {
                schema.push(a.alias.clone(), a.func.output_type(base.schema())?)?;
            }
            let member = if materialization.eager(i)? {
                Member::materialized(set.clone(), group_aggregate(&base, &set, &aggs)?)
            } else {
                let (base, aggs, keys) = (base.clone(), aggs.clone(), set.clone());
                Member::lazy(set, schema, Box::new(move || group_aggregate(&base, &keys, &aggs)))
            };
            space.add(member)?;
        }
        Ok(space)
    }

    pub fn dimensions(&self) -> &AttrSet {
        &self.dimensions
    }

    pub fn values(&self) -> &AttrSet {
        &self.values
    }

    /// Members ordered by dimension subset.
    pub fn members(&self) -> impl Iterator<Item = &Member> + '_ {
        self.members.values()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The member whose dimension subset is exactly `dims`.
    pub fn member(&self, dims: &AttrSet) -> Option<&Member> {
        self.members.get(dims)
    }

    /// The unique member with `schema ∩ D = attrs ∩ D`, if any.
    pub fn lookup_by_dimensions(&self, attrs: &AttrSet) -> Option<&Member> {
        self.members.get(&attrs.intersection(&self.dimensions))
    }

    /// All members as one null-padded relation.
    ///
    /// With more than one member a `__grouping_id` column is added: a bitmask
    /// over the dimensions in sorted name order, most significant bit first,
    /// where a set bit means the member carries that dimension. A single
    /// member is returned unchanged.
    pub fn to_single_relation(&self) -> Result<Relation> {
        let rels: Vec<&Relation> = self.members().map(Member::relation).collect::<Result<_>>()?;
        if rels.len() == 1 {
            return Ok(rels[0].clone());
        }
        let dims: Vec<&String> = self.dimensions.iter().collect();
        let mut tagged = Vec::with_capacity(rels.len());
        for (m, r) in self.members().zip(rels) {
            let gid = dims
                .iter()
                .fold(0i64, |acc, d| acc << 1 | i64::from(m.dims.contains(d)));
            let mut tag = Schema::empty();
            tag.push(GROUPING_ID, ValueType::Int)?;
            let key = [(GROUPING_ID.to_string(), Value::Int(gid))].into_iter().collect();
            tagged.push(r.prefixed(&key, &tag)?);
        }
        Relation::union_padded(&tagged)
    }

    /// Whether the space has all `2^|D|` members and each carries every value
    /// attribute.
    pub fn is_relation_cube(&self) -> bool {
        let full = u32::try_from(self.dimensions.len())
            .ok()
            .and_then(|n| 1usize.checked_shl(n));
        full == Some(self.members.len())
            && self
                .members()
                .all(|m| self.values.is_subset(&m.schema.attr_set()))
    }

    /// Copy without the member at `dims`.
    pub fn without(&self, dims: &AttrSet) -> RelationSpace {
        let mut out = self.clone();
        out.members.remove(dims);
        out
    }

    /// Applies `f` to every member, keeping dimensions. Values are recomputed
    /// from the resulting schemas.
    pub fn map_members(&self, mut f: impl FnMut(&Relation) -> Result<Option<Relation>>) -> Result<Self> {
        let mut rels = Vec::new();
        for m in self.members() {
            if let Some(r) = f(m.relation()?)? {
                rels.push(r);
            }
        }
        RelationSpace::from_relations(self.dimensions.clone(), rels)
    }

    /// Structural equality: same dimensions and values, and equal members.
    pub fn try_eq(&self, other: &RelationSpace) -> Result<bool> {
        if self.dimensions != other.dimensions
            || self.values != other.values
            || self.members.len() != other.members.len()
        {
            return Ok(false);
        }
        for (k, m) in &self.members {
            match other.members.get(k) {
                Some(o) if m.peek()? == o.peek()? => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }
}

impl PartialEq for RelationSpace {
    fn eq(&self, other: &Self) -> bool {
        self.try_eq(other).unwrap_or(false)
    }
}

impl fmt::Display for RelationSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "space dimensions={} values={}", self.dimensions, self.values)?;
        for m in self.members() {
            match m.peek() {
                Ok(r) => write!(f, "-- {}\n{r}", m.dims)?,
                Err(e) => writeln!(f, "-- {}: {e}", m.dims)?,
            }
        }
        Ok(())
    }
}
