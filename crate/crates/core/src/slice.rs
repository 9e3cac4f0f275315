//! Slice relations and the structural operators between them and relation
//! spaces: represent, flatten and slice_represent.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::relation::{JoinKind, Relation, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::space::RelationSpace;

/// Feature tables of one slice tuple, keyed by feature schema.
pub type Features = BTreeMap<AttrSet, Relation>;

/// How represent combines blocks that share a region schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    /// A region is kept only if every feature block has a slice for it.
    #[default]
    Inner,
    /// Every region of any block is kept; missing features are empty tables.
    Outer,
}

/// The attribute set of a region.
pub fn region_schema(region: &Tuple) -> AttrSet {
    region.keys().map(String::as_str).collect()
}

/// `fine ≺ coarse`: every attribute-value pair of `coarse` appears in `fine`.
pub fn region_refines(fine: &Tuple, coarse: &Tuple) -> bool {
    coarse.iter().all(|(k, v)| fine.get(k) == Some(v))
}

/// Restriction of a region to a subset of its attributes.
/// `(Device=Pixel, Browser=Chrome)`.
pub fn fmt_region(r: &Tuple) -> String {
    let parts: Vec<String> = r.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("({})", parts.join(", "))
}

pub fn restrict_region(region: &Tuple, attrs: &AttrSet) -> Tuple {
    region
        .iter()
        .filter(|(k, _)| attrs.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

/// A set of slice tuples: each region maps to one relation per feature
/// schema.
#[derive(Debug, Clone)]
pub struct SliceRelation {
    region_schemas: Vec<Schema>,
    feature_schemas: Vec<Schema>,
    dimensions: AttrSet,
    tuples: BTreeMap<Tuple, Features>,
}

impl SliceRelation {
    /// An empty slice relation; checks that region and feature attributes
    /// are disjoint and that schemas are distinct.
    pub fn new(region_schemas: Vec<Schema>, feature_schemas: Vec<Schema>, dimensions: AttrSet) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &feature_schemas {
            if !seen.insert(f.attr_set()) {
                return Err(Error::IllegitimateSchema(format!(
                    "feature schema {} appears twice",
                    f.attr_set()
                )));
            }
        }
        let mut seen = BTreeSet::new();
        let mut region_schemas_dedup = Vec::new();
        for g in region_schemas {
            if seen.insert(g.attr_set()) {
                region_schemas_dedup.push(g);
            }
        }
        let region_attrs = union_all(region_schemas_dedup.iter());
        let feature_attrs = union_all(feature_schemas.iter());
        let overlap = region_attrs.intersection(&feature_attrs);
        if !overlap.is_empty() {
            return Err(Error::IllegitimateSchema(format!(
                "attributes {overlap} are both region and feature attributes"
            )));
        }
        Ok(SliceRelation {
            region_schemas: region_schemas_dedup,
            feature_schemas,
            dimensions,
            tuples: BTreeMap::new(),
        })
    }

    /// Adds a slice tuple. The region must belong to a declared region
    /// schema and `features` must hold exactly the declared feature schemas.
    pub fn insert(&mut self, region: Tuple, features: Features) -> Result<()> {
        let g = region_schema(&region);
        if !self.region_schemas.iter().any(|s| s.attr_set() == g) {
            return Err(Error::UnknownRegionSchema(g));
        }
        if features.len() != self.feature_schemas.len() {
            return Err(Error::IllegitimateSchema(format!(
                "slice tuple has {} feature tables, expected {}",
                features.len(),
                self.feature_schemas.len()
            )));
        }
        for f in &self.feature_schemas {
            let key = f.attr_set();
            match features.get(&key) {
                Some(r) if r.attr_set() == key => {}
                Some(r) => {
                    return Err(Error::IllegitimateSchema(format!(
                        "feature table {} stored under {key}",
                        r.attr_set()
                    )))
                }
                None => return Err(Error::UnknownFeatureSchema(key)),
            }
        }
        if self.tuples.insert(region, features).is_some() {
            return Err(Error::IllegitimateSchema("duplicate region".into()));
        }
        Ok(())
    }

    pub fn region_schemas(&self) -> &[Schema] {
        &self.region_schemas
    }

    pub fn feature_schemas(&self) -> &[Schema] {
        &self.feature_schemas
    }

    pub fn region_sets(&self) -> Vec<AttrSet> {
        self.region_schemas.iter().map(Schema::attr_set).collect()
    }

    pub fn feature_sets(&self) -> Vec<AttrSet> {
        self.feature_schemas.iter().map(Schema::attr_set).collect()
    }

    pub fn region_schema_for(&self, g: &AttrSet) -> Option<&Schema> {
        self.region_schemas.iter().find(|s| &s.attr_set() == g)
    }

    pub fn feature_schema_for(&self, f: &AttrSet) -> Option<&Schema> {
        self.feature_schemas.iter().find(|s| &s.attr_set() == f)
    }

    pub fn dimensions(&self) -> &AttrSet {
        &self.dimensions
    }

    pub fn tuples(&self) -> impl Iterator<Item = (&Tuple, &Features)> + '_ {
        self.tuples.iter()
    }

    pub fn get(&self, region: &Tuple) -> Option<&Features> {
        self.tuples.get(region)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Same declared schemas and dimensions, no tuples.
    pub fn empty_like(&self) -> SliceRelation {
        SliceRelation { tuples: BTreeMap::new(), ..self.clone() }
    }

    /// Same tuples under other dimensions.
    pub fn with_dimensions(mut self, dimensions: AttrSet) -> SliceRelation {
        self.dimensions = dimensions;
        self
    }

    /// Keeps the tuples for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(&Tuple, &Features) -> bool) {
        self.tuples.retain(|r, f| keep(r, f));
    }

    /// Total number of rows over all feature tables.
    pub fn row_count(&self) -> usize {
        self.tuples.values().flat_map(|f| f.values()).map(Relation::len).sum()
    }

    /// Debug JSON: schemas, dimensions and every tuple with its feature rows,
    /// feature keys being the sorted attribute names joined by commas.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let sets = |v: &[Schema]| -> Vec<AttrSet> { v.iter().map(Schema::attr_set).collect() };
        let tuples: Vec<serde_json::Value> = self
            .tuples
            .iter()
            .map(|(region, feats)| {
                let region: serde_json::Map<_, _> =
                    region.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                let feats: serde_json::Map<_, _> = feats
                    .iter()
                    .map(|(k, r)| (feature_key(k), r.to_json_rows()))
                    .collect();
                json!({ "region": region, "features": feats })
            })
            .collect();
        json!({
            "region_schemas": sets(&self.region_schemas),
            "feature_schemas": sets(&self.feature_schemas),
            "dimensions": self.dimensions,
            "tuples": tuples,
        })
    }
}

pub fn feature_key(f: &AttrSet) -> String {
    f.iter().cloned().collect::<Vec<_>>().join(",")
}

fn union_all<'a>(schemas: impl Iterator<Item = &'a Schema>) -> AttrSet {
    schemas.fold(AttrSet::new(), |acc, s| acc.union(&s.attr_set()))
}

impl PartialEq for SliceRelation {
    fn eq(&self, other: &Self) -> bool {
        let set = |v: &[Schema]| v.iter().map(Schema::attr_set).collect::<BTreeSet<_>>();
        set(&self.region_schemas) == set(&other.region_schemas)
            && set(&self.feature_schemas) == set(&other.feature_schemas)
            && self.dimensions == other.dimensions
            && self.tuples == other.tuples
    }
}

/// Result of representing one `(Γ, ℱ)` block.
#[derive(Debug, Clone)]
pub struct Block {
    /// Dimension subset of the member that was read.
    pub member: AttrSet,
    pub region_schema: Schema,
    pub feature_schema: Schema,
    pub slices: BTreeMap<Tuple, Relation>,
}

/// Looks up the member identified by `(Γ ∪ ℱ) ∩ D`, projects it to `Γ ∪ ℱ`
/// and partitions over `Γ`. `None` when no member matches or the match lacks
/// some attribute.
pub fn represent_block(space: &RelationSpace, region: &AttrSet, feature: &AttrSet) -> Result<Option<Block>> {
    if !region.is_disjoint(feature) {
        return Err(Error::IllegitimateBlock { region: region.clone(), feature: feature.clone() });
    }
    let all = region.union(feature);
    let Some(member) = space.lookup_by_dimensions(&all) else {
        return Ok(None);
    };
    if !all.is_subset(&member.schema().attr_set()) {
        return Ok(None);
    }
    let rel = member.relation()?;
    let region_schema = rel.schema().restrict(region)?;
    let feature_schema = rel.schema().restrict(feature)?;
    let slices = rel.project(&all)?.partition(region)?;
    Ok(Some(Block { member: member.dims().clone(), region_schema, feature_schema, slices }))
}

/// Which member each `(Γ, ℱ)` block would read, without reading it.
pub fn plan_blocks(
    space: &RelationSpace,
    region_schemas: &[AttrSet],
    feature_schemas: &[AttrSet],
) -> Vec<(AttrSet, AttrSet, Option<AttrSet>)> {
    let mut out = Vec::new();
    for g in region_schemas {
        for f in feature_schemas {
            let all = g.union(f);
            let hit = space
                .lookup_by_dimensions(&all)
                .filter(|m| g.is_disjoint(f) && all.is_subset(&m.schema().attr_set()))
                .map(|m| m.dims().clone());
            out.push((g.clone(), f.clone(), hit));
        }
    }
    out
}

pub fn represent(space: &RelationSpace, region_schemas: &[AttrSet], feature_schemas: &[AttrSet]) -> Result<SliceRelation> {
    represent_aligned(space, region_schemas, feature_schemas, Alignment::Inner)
}

pub fn represent_aligned(
    space: &RelationSpace,
    region_schemas: &[AttrSet],
    feature_schemas: &[AttrSet],
    alignment: Alignment,
) -> Result<SliceRelation> {
    let mut regions: Vec<AttrSet> = Vec::new();
    for g in region_schemas {
        if !regions.contains(g) {
            regions.push(g.clone());
        }
    }
    let pairs: Vec<(&AttrSet, &AttrSet)> = regions
        .iter()
        .flat_map(|g| feature_schemas.iter().map(move |f| (g, f)))
        .collect();
    let blocks: Vec<Block> = pairs
        .par_iter()
        .map(|(g, f)| {
            represent_block(space, g, f)?.ok_or_else(|| Error::NoMatchingRelation {
                region: (*g).clone(),
                feature: (*f).clone(),
            })
        })
        .collect::<Result<_>>()?;

    let k = feature_schemas.len();
    let typed_regions: Vec<Schema> = if k == 0 {
        regions.iter().map(untyped).collect()
    } else {
        (0..regions.len()).map(|i| blocks[i * k].region_schema.clone()).collect()
    };
    let typed_features: Vec<Schema> = (0..k).map(|j| blocks[j].feature_schema.clone()).collect();
    let mut out = SliceRelation::new(typed_regions, typed_features, space.dimensions().clone())?;

    for (i, _) in regions.iter().enumerate() {
        let row = &blocks[i * k..(i + 1) * k];
        let Some(first) = row.first() else { continue };
        let keys: BTreeSet<&Tuple> = match alignment {
            Alignment::Inner => first
                .slices
                .keys()
                .filter(|r| row.iter().all(|b| b.slices.contains_key(*r)))
                .collect(),
            Alignment::Outer => row.iter().flat_map(|b| b.slices.keys()).collect(),
        };
        for region in keys {
            let feats: Features = row
                .iter()
                .map(|b| {
                    let rel = b
                        .slices
                        .get(region)
                        .cloned()
                        .unwrap_or_else(|| Relation::empty(b.feature_schema.clone()));
                    (b.feature_schema.attr_set(), rel)
                })
                .collect();
            out.insert(region.clone(), feats)?;
        }
    }
    Ok(out)
}

// Region schemas without any block have no source for types; only reachable
// with an empty feature list, where no tuples can exist either.
fn untyped(g: &AttrSet) -> Schema {
    Schema::of(g.iter().map(|a| (a.clone(), crate::value::ValueType::Str)))
}

/// Groups feature schemas by their dimension subset, in first-seen order.
pub fn feature_classes(feature_schemas: &[Schema], dims: &AttrSet) -> Vec<(AttrSet, Vec<Schema>)> {
    let mut classes: Vec<(AttrSet, Vec<Schema>)> = Vec::new();
    for f in feature_schemas {
        let key = f.attr_set().intersection(dims);
        match classes.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(f.clone()),
            None => classes.push((key, vec![f.clone()])),
        }
    }
    classes
}

/// Full outer join of a class of feature tables on their shared dimensions,
/// nulls matching nulls.
fn join_class(tables: &[Relation], key: &AttrSet) -> Result<Relation> {
    let on: Vec<(String, String)> = key.iter().map(|a| (a.clone(), a.clone())).collect();
    let mut acc = tables[0].clone();
    for t in &tables[1..] {
        acc = acc.join_with(t, &on, JoinKind::FullOuter, true)?;
    }
    Ok(acc)
}

/// Turns a slice relation back into a relation space with dimensions
/// `dims`: one member per (region schema, feature class).
pub fn flatten(sr: &SliceRelation, dims: &AttrSet) -> Result<RelationSpace> {
    let classes = feature_classes(&sr.feature_schemas, dims);
    let mut members: Vec<Relation> = Vec::new();
    for g in &sr.region_schemas {
        let gset = g.attr_set();
        let tuples: Vec<(&Tuple, &Features)> = sr
            .tuples
            .iter()
            .filter(|(r, _)| region_schema(r) == gset)
            .collect();
        for (key, schemas) in &classes {
            let empties: Vec<Relation> = schemas.iter().map(|s| Relation::empty(s.clone())).collect();
            let shape = join_class(&empties, key)?.prefixed(&Tuple::new(), g)?;
            let parts: Vec<Relation> = tuples
                .par_iter()
                .map(|(region, feats)| {
                    let tables: Vec<Relation> =
                        schemas.iter().map(|s| feats[&s.attr_set()].clone()).collect();
                    join_class(&tables, key)?.prefixed(region, g)
                })
                .collect::<Result<_>>()?;
            let mut acc = shape;
            for p in parts {
                acc = acc.union(&p)?;
            }
            members.push(acc);
        }
    }
    let mut seen = BTreeSet::new();
    for m in &members {
        let d = m.attr_set().intersection(dims);
        if !seen.insert(d.clone()) {
            return Err(Error::IllegitimateDimensions(d));
        }
    }
    RelationSpace::from_relations(dims.clone(), members)
}

/// Checks, from schemas alone, that flattening with `dims` yields members
/// with distinct dimension subsets. Returns the offending subset otherwise.
pub fn flatten_conflict(region_schemas: &[AttrSet], feature_schemas: &[Schema], dims: &AttrSet) -> Option<AttrSet> {
    let classes = feature_classes(feature_schemas, dims);
    let mut seen = BTreeSet::new();
    for g in region_schemas {
        for (key, _) in &classes {
            let d = g.intersection(dims).union(key);
            if !seen.insert(d.clone()) {
                return Some(d);
            }
        }
    }
    None
}

/// `represent(flatten(sr, sr.dimensions), …)`.
pub fn slice_represent(sr: &SliceRelation, region_schemas: &[AttrSet], feature_schemas: &[AttrSet]) -> Result<SliceRelation> {
    represent(&flatten(sr, &sr.dimensions)?, region_schemas, feature_schemas)
}
