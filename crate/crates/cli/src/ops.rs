//! The fixed operator registry: argument shapes, binding kinds and
//! execution.

use std::fmt;

use mra_core::{
    crawl_with_stats, slice_internal_join, slice_internal_project, slice_internal_select, slice_join,
    slice_project, slice_represent, slice_select, slice_transform, AggSpec, Alignment, AttrSet, CrawlPlan, CrawlStats,
    Expr, GroupingSets, InternalSelect, JoinCondition, Materialization, RegionCondition, Relation, RelationSpace,
    SlicePredicate, SliceRelation, Strategy, TransformSpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

/// What a binding holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Relation,
    Space,
    Slice,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Relation => "relation",
            Kind::Space => "relation space",
            Kind::Slice => "slice relation",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Binding {
    Relation(Relation),
    Space(RelationSpace),
    Slice(SliceRelation),
}

impl Binding {
    pub fn kind(&self) -> Kind {
        match self {
            Binding::Relation(_) => Kind::Relation,
            Binding::Space(_) => Kind::Space,
            Binding::Slice(_) => Kind::Slice,
        }
    }

    /// Total rows: relation rows, member rows, or feature rows over all
    /// slice tuples.
    pub fn rows(&self) -> mra_core::Result<usize> {
        Ok(match self {
            Binding::Relation(r) => r.len(),
            Binding::Space(s) => s.members().map(|m| m.peek().map(Relation::len)).sum::<mra_core::Result<usize>>()?,
            Binding::Slice(s) => s.row_count(),
        })
    }

    /// Members of a space, tuples of a slice relation, 1 for a relation.
    pub fn units(&self) -> usize {
        match self {
            Binding::Relation(_) => 1,
            Binding::Space(s) => s.len(),
            Binding::Slice(s) => s.len(),
        }
    }

    pub fn same_as(&self, other: &Binding) -> mra_core::Result<bool> {
        Ok(match (self, other) {
            (Binding::Relation(a), Binding::Relation(b)) => a == b,
            (Binding::Space(a), Binding::Space(b)) => a.try_eq(b)?,
            (Binding::Slice(a), Binding::Slice(b)) => a == b,
            _ => false,
        })
    }
}

/// Accepted input shapes.
#[derive(Debug, Clone, Copy)]
pub enum Inputs {
    One(Kind),
    Two(Kind),
    /// One or more relations.
    Relations,
    /// One relation or one space; the output has the same kind.
    RelationOrSpace,
    /// One space or one or more relations.
    SpaceOrRelations,
}

pub struct OpInfo {
    pub name: &'static str,
    pub inputs: Inputs,
    pub output: Option<Kind>,
    /// Argument positions holding attribute sets, as `/`-separated paths
    /// where `*` matches every array element.
    pub schema_paths: &'static [&'static str],
}

const BLOCKS: &[&str] = &["region_schemas/*", "feature_schemas/*"];

pub const OPS: &[OpInfo] = &[
    OpInfo {
        name: "create_relation_space",
        inputs: Inputs::One(Kind::Relation),
        output: Some(Kind::Space),
        schema_paths: &["grouping_sets/*", "grouping_sets/cube", "grouping_sets/cube_nonempty"],
    },
    OpInfo { name: "relation_space", inputs: Inputs::Relations, output: Some(Kind::Space), schema_paths: &["dimensions"] },
    OpInfo { name: "represent", inputs: Inputs::One(Kind::Space), output: Some(Kind::Slice), schema_paths: BLOCKS },
    OpInfo { name: "slice_represent", inputs: Inputs::One(Kind::Slice), output: Some(Kind::Slice), schema_paths: BLOCKS },
    OpInfo {
        name: "slice_transform",
        inputs: Inputs::One(Kind::Slice),
        output: Some(Kind::Slice),
        schema_paths: &["slice_transformations/*/input", "dimensions"],
    },
    OpInfo { name: "slice_select", inputs: Inputs::One(Kind::Slice), output: Some(Kind::Slice), schema_paths: &[] },
    OpInfo { name: "slice_project", inputs: Inputs::One(Kind::Slice), output: Some(Kind::Slice), schema_paths: BLOCKS },
    OpInfo { name: "slice_join", inputs: Inputs::Two(Kind::Slice), output: Some(Kind::Slice), schema_paths: &["dimensions"] },
    OpInfo {
        name: "slice_internal_project",
        inputs: Inputs::One(Kind::Slice),
        output: Some(Kind::Slice),
        schema_paths: &["projections/*/feature", "projections/*/keep"],
    },
    OpInfo {
        name: "slice_internal_select",
        inputs: Inputs::One(Kind::Slice),
        output: Some(Kind::Slice),
        schema_paths: &["where/*/feature"],
    },
    OpInfo { name: "slice_internal_join", inputs: Inputs::One(Kind::Slice), output: Some(Kind::Slice), schema_paths: &[] },
    OpInfo { name: "flatten", inputs: Inputs::One(Kind::Slice), output: Some(Kind::Space), schema_paths: &["dimensions"] },
    OpInfo {
        name: "crawl",
        inputs: Inputs::One(Kind::Space),
        output: Some(Kind::Space),
        schema_paths: &["region_schemas/*", "slice_transformations/*/input", "dimensions"],
    },
    OpInfo { name: "select", inputs: Inputs::RelationOrSpace, output: None, schema_paths: &[] },
    OpInfo { name: "project", inputs: Inputs::RelationOrSpace, output: None, schema_paths: &["attributes"] },
    OpInfo { name: "mutate", inputs: Inputs::RelationOrSpace, output: None, schema_paths: &[] },
    OpInfo { name: "union_all", inputs: Inputs::SpaceOrRelations, output: Some(Kind::Relation), schema_paths: &[] },
];

pub fn op_info(name: &str) -> Option<&'static OpInfo> {
    OPS.iter().find(|o| o.name == name)
}

/// The registered name closest to `name`, if reasonably close.
pub fn nearest_op(name: &str) -> Option<&'static str> {
    OPS.iter()
        .map(|o| (strsim::levenshtein(name, o.name), o.name))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, n)| n)
}

/// Output kind for the given input kinds, or a description of the mismatch.
pub fn check_kinds(info: &OpInfo, kinds: &[Kind]) -> Result<Kind, String> {
    let want = |what: &str| Err(format!("expects {what}, got [{}]", kinds.iter().map(Kind::to_string).collect::<Vec<_>>().join(", ")));
    match info.inputs {
        Inputs::One(k) if kinds == [k] => Ok(info.output.unwrap()),
        Inputs::One(k) => want(&format!("one {k}")),
        Inputs::Two(k) if kinds == [k, k] => Ok(info.output.unwrap()),
        Inputs::Two(k) => want(&format!("two of kind {k}")),
        Inputs::Relations if !kinds.is_empty() && kinds.iter().all(|k| *k == Kind::Relation) => Ok(info.output.unwrap()),
        Inputs::Relations => want("one or more relations"),
        Inputs::RelationOrSpace if kinds == [Kind::Relation] || kinds == [Kind::Space] => Ok(kinds[0]),
        Inputs::RelationOrSpace => want("one relation or one relation space"),
        Inputs::SpaceOrRelations
            if kinds == [Kind::Space] || (!kinds.is_empty() && kinds.iter().all(|k| *k == Kind::Relation)) =>
        {
            Ok(info.output.unwrap())
        }
        Inputs::SpaceOrRelations => want("one relation space or one or more relations"),
    }
}

/// `aggregations` as an ordered `{alias: "SUM(x)"}` map.
mod aggregation_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(aggs: &[AggSpec], s: S) -> Result<S::Ok, S::Error> {
        let m: Map<String, Json> = aggs.iter().map(|a| (a.alias.clone(), Json::from(a.func.to_string()))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<AggSpec>, D::Error> {
        let m = Map::<String, Json>::deserialize(d)?;
        m.into_iter()
            .map(|(alias, v)| {
                let text = v.as_str().ok_or_else(|| serde::de::Error::custom(format!("aggregation `{alias}` must be a string")))?;
                AggSpec::parse(&alias, text).map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupingArg {
    Explicit(Vec<AttrSet>),
    Named(NamedSets),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSets {
    Cube(Vec<String>),
    CubeNonempty(Vec<String>),
}

impl GroupingArg {
    fn sets(&self) -> GroupingSets {
        match self {
            GroupingArg::Explicit(v) => GroupingSets::Explicit(v.clone()),
            GroupingArg::Named(NamedSets::Cube(a)) => GroupingSets::Cube(a.clone()),
            GroupingArg::Named(NamedSets::CubeNonempty(a)) => GroupingSets::CubeNonEmpty(a.clone()),
        }
    }
}

fn default_materialization() -> Materialization {
    Materialization::Global(true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateArgs {
    pub grouping_sets: GroupingArg,
    #[serde(with = "aggregation_map")]
    pub aggregations: Vec<AggSpec>,
    #[serde(default = "default_materialization")]
    pub materialization: Materialization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionsArgs {
    pub dimensions: AttrSet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignArg {
    #[default]
    Inner,
    Outer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentArgs {
    pub region_schemas: Vec<AttrSet>,
    pub feature_schemas: Vec<AttrSet>,
    #[serde(default, skip_serializing_if = "is_inner")]
    pub alignment: AlignArg,
}

fn is_inner(a: &AlignArg) -> bool {
    *a == AlignArg::Inner
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksArgs {
    pub region_schemas: Vec<AttrSet>,
    pub feature_schemas: Vec<AttrSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformArgs {
    pub slice_transformations: Vec<TransformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<AttrSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicatesArgs {
    pub predicates: Vec<SlicePredicate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinArgs {
    pub condition: RegionCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<AttrSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Keep {
    /// `"*"`: every attribute.
    All(String),
    Some(AttrSet),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    pub feature: AttrSet,
    pub keep: Keep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalProjectArgs {
    pub projections: Vec<Projection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalJoinArgs {
    pub join_conditions: Vec<JoinCondition>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlattenArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<AttrSet>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    pub predicate: Expr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectArgs {
    pub attributes: AttrSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub expr: Expr,
    pub alias: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutateArgs {
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoArgs {}

/// An operator with checked arguments.
#[derive(Debug, Clone)]
pub enum Op {
    CreateRelationSpace(CreateArgs),
    RelationSpace(DimensionsArgs),
    Represent(RepresentArgs),
    SliceRepresent(BlocksArgs),
    SliceTransform(TransformArgs),
    SliceSelect(PredicatesArgs),
    SliceProject(BlocksArgs),
    SliceJoin(JoinArgs),
    SliceInternalProject(InternalProjectArgs),
    SliceInternalSelect(InternalSelect),
    SliceInternalJoin(InternalJoinArgs),
    Flatten(FlattenArgs),
    Crawl(CrawlPlan),
    Select(SelectArgs),
    Project(ProjectArgs),
    Mutate(MutateArgs),
    UnionAll(NoArgs),
}

fn typed<T: DeserializeOwned>(args: Json) -> Result<T, String> {
    let args = if args.is_null() { Json::Object(Map::new()) } else { args };
    serde_json::from_value(args).map_err(|e| e.to_string())
}

impl Op {
    /// Builds the operator `name` from arguments whose schema handles are
    /// already inlined.
    pub fn from_json(name: &str, args: Json) -> Result<Op, String> {
        Ok(match name {
            "create_relation_space" => Op::CreateRelationSpace(typed(args)?),
            "relation_space" => Op::RelationSpace(typed(args)?),
            "represent" => Op::Represent(typed(args)?),
            "slice_represent" => Op::SliceRepresent(typed(args)?),
            "slice_transform" => Op::SliceTransform(typed(args)?),
            "slice_select" => Op::SliceSelect(typed(args)?),
            "slice_project" => Op::SliceProject(typed(args)?),
            "slice_join" => Op::SliceJoin(typed(args)?),
            "slice_internal_project" => {
                let a: InternalProjectArgs = typed(args)?;
                for p in &a.projections {
                    if let Keep::All(s) = &p.keep {
                        if s != "*" {
                            return Err(format!("`keep` must be an attribute list or \"*\", got \"{s}\""));
                        }
                    }
                }
                Op::SliceInternalProject(a)
            }
            "slice_internal_select" => Op::SliceInternalSelect(typed(args)?),
            "slice_internal_join" => Op::SliceInternalJoin(typed(args)?),
            "flatten" => Op::Flatten(typed(args)?),
            "crawl" => {
                let plan: CrawlPlan = typed(args)?;
                if let Some(a) = plan.apriori.iter().find(|a| a.predicate >= plan.predicates.len()) {
                    return Err(format!(
                        "apriori annotation names predicate {} but there are {} predicates",
                        a.predicate,
                        plan.predicates.len()
                    ));
                }
                Op::Crawl(plan)
            }
            "select" => Op::Select(typed(args)?),
            "project" => Op::Project(typed(args)?),
            "mutate" => Op::Mutate(typed(args)?),
            "union_all" => Op::UnionAll(typed(args)?),
            _ => return Err(format!("unknown operator `{name}`")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::CreateRelationSpace(_) => "create_relation_space",
            Op::RelationSpace(_) => "relation_space",
            Op::Represent(_) => "represent",
            Op::SliceRepresent(_) => "slice_represent",
            Op::SliceTransform(_) => "slice_transform",
            Op::SliceSelect(_) => "slice_select",
            Op::SliceProject(_) => "slice_project",
            Op::SliceJoin(_) => "slice_join",
            Op::SliceInternalProject(_) => "slice_internal_project",
            Op::SliceInternalSelect(_) => "slice_internal_select",
            Op::SliceInternalJoin(_) => "slice_internal_join",
            Op::Flatten(_) => "flatten",
            Op::Crawl(_) => "crawl",
            Op::Select(_) => "select",
            Op::Project(_) => "project",
            Op::Mutate(_) => "mutate",
            Op::UnionAll(_) => "union_all",
        }
    }

    pub fn args_json(&self) -> Json {
        let v = match self {
            Op::CreateRelationSpace(a) => serde_json::to_value(a),
            Op::RelationSpace(a) => serde_json::to_value(a),
            Op::Represent(a) => serde_json::to_value(a),
            Op::SliceRepresent(a) | Op::SliceProject(a) => serde_json::to_value(a),
            Op::SliceTransform(a) => serde_json::to_value(a),
            Op::SliceSelect(a) => serde_json::to_value(a),
            Op::SliceJoin(a) => serde_json::to_value(a),
            Op::SliceInternalProject(a) => serde_json::to_value(a),
            Op::SliceInternalSelect(a) => serde_json::to_value(a),
            Op::SliceInternalJoin(a) => serde_json::to_value(a),
            Op::Flatten(a) => serde_json::to_value(a),
            Op::Crawl(a) => serde_json::to_value(a),
            Op::Select(a) => serde_json::to_value(a),
            Op::Project(a) => serde_json::to_value(a),
            Op::Mutate(a) => serde_json::to_value(a),
            Op::UnionAll(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }

    /// Region and feature schemas this operator represents from its input
    /// space, if it reads one block-wise.
    pub fn blocks(&self) -> Option<(Vec<AttrSet>, Vec<AttrSet>)> {
        match self {
            Op::Represent(a) => Some((a.region_schemas.clone(), a.feature_schemas.clone())),
            Op::Crawl(p) => Some((p.region_schemas.clone(), p.feature_schemas())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Replaces every crawl plan's strategy.
    pub strategy: Option<Strategy>,
}

fn one_space<'a>(inputs: &[&'a Binding]) -> &'a RelationSpace {
    match inputs {
        [Binding::Space(s)] => s,
        _ => unreachable!("kinds are checked before execution"),
    }
}

fn one_slice<'a>(inputs: &[&'a Binding]) -> &'a SliceRelation {
    match inputs {
        [Binding::Slice(s)] => s,
        _ => unreachable!("kinds are checked before execution"),
    }
}

fn relations<'a>(inputs: &[&'a Binding]) -> Vec<&'a Relation> {
    inputs
        .iter()
        .map(|b| match b {
            Binding::Relation(r) => r,
            _ => unreachable!("kinds are checked before execution"),
        })
        .collect()
}

/// Applies `f` to a relation, or to each member of a space that has all of
/// `needs`; other members are dropped when `drop_others`.
fn per_member(
    input: &Binding,
    needs: &AttrSet,
    drop_others: bool,
    f: impl Fn(&Relation) -> mra_core::Result<Relation>,
) -> mra_core::Result<Binding> {
    match input {
        Binding::Relation(r) => Ok(Binding::Relation(f(r)?)),
        Binding::Space(s) => {
            let out = s.map_members(|r| {
                if needs.is_subset(&r.attr_set()) {
                    f(r).map(Some)
                } else if drop_others {
                    Ok(None)
                } else {
                    Ok(Some(r.clone()))
                }
            })?;
            Ok(Binding::Space(out))
        }
        Binding::Slice(_) => unreachable!("kinds are checked before execution"),
    }
}

pub fn execute(op: &Op, inputs: &[&Binding], opts: &ExecOptions) -> mra_core::Result<(Binding, Option<CrawlStats>)> {
    let b = match op {
        Op::CreateRelationSpace(a) => {
            let base = relations(inputs)[0];
            Binding::Space(RelationSpace::create(base, &a.grouping_sets.sets(), &a.aggregations, &a.materialization)?)
        }
        Op::RelationSpace(a) => {
            let rels = relations(inputs).into_iter().cloned().collect();
            Binding::Space(RelationSpace::from_relations(a.dimensions.clone(), rels)?)
        }
        Op::Represent(a) => {
            let align = match a.alignment {
                AlignArg::Inner => Alignment::Inner,
                AlignArg::Outer => Alignment::Outer,
            };
            Binding::Slice(mra_core::slice::represent_aligned(one_space(inputs), &a.region_schemas, &a.feature_schemas, align)?)
        }
        Op::SliceRepresent(a) => Binding::Slice(slice_represent(one_slice(inputs), &a.region_schemas, &a.feature_schemas)?),
        Op::SliceTransform(a) => {
            Binding::Slice(slice_transform(one_slice(inputs), &a.slice_transformations, a.dimensions.as_ref())?)
        }
        Op::SliceSelect(a) => {
            let p = match a.predicates.as_slice() {
                [p] => p.clone(),
                ps => SlicePredicate::And(ps.to_vec()),
            };
            Binding::Slice(slice_select(one_slice(inputs), &p)?)
        }
        Op::SliceProject(a) => Binding::Slice(slice_project(one_slice(inputs), &a.region_schemas, &a.feature_schemas)?),
        Op::SliceJoin(a) => {
            let (l, r) = match inputs {
                [Binding::Slice(l), Binding::Slice(r)] => (l, r),
                _ => unreachable!("kinds are checked before execution"),
            };
            let dims = match &a.dimensions {
                Some(d) => d.clone(),
                None if l.dimensions() == r.dimensions() => l.dimensions().clone(),
                None => {
                    return Err(mra_core::Error::InvalidArgument(format!(
                        "inputs have dimensions {} and {}; give `dimensions`",
                        l.dimensions(),
                        r.dimensions()
                    )))
                }
            };
            Binding::Slice(slice_join(l, r, a.condition, &dims)?)
        }
        Op::SliceInternalProject(a) => {
            let ps: Vec<(AttrSet, Option<AttrSet>)> = a
                .projections
                .iter()
                .map(|p| {
                    let keep = match &p.keep {
                        Keep::All(_) => None,
                        Keep::Some(s) => Some(s.clone()),
                    };
                    (p.feature.clone(), keep)
                })
                .collect();
            Binding::Slice(slice_internal_project(one_slice(inputs), &ps)?)
        }
        Op::SliceInternalSelect(a) => Binding::Slice(slice_internal_select(one_slice(inputs), a)?),
        Op::SliceInternalJoin(a) => Binding::Slice(slice_internal_join(one_slice(inputs), &a.join_conditions)?),
        Op::Flatten(a) => {
            let sr = one_slice(inputs);
            let dims = a.dimensions.clone().unwrap_or_else(|| sr.dimensions().clone());
            Binding::Space(mra_core::flatten(sr, &dims)?)
        }
        Op::Crawl(plan) => {
            let mut plan = plan.clone();
            if let Some(s) = opts.strategy {
                plan.strategy = s;
            }
            let (out, stats) = crawl_with_stats(one_space(inputs), &plan)?;
            return Ok((Binding::Space(out), Some(stats)));
        }
        Op::Select(a) => per_member(inputs[0], &a.predicate.columns(), true, |r| r.select(&a.predicate))?,
        Op::Project(a) => match inputs[0] {
            Binding::Relation(r) => Binding::Relation(r.project(&a.attributes)?),
            Binding::Space(s) => {
                let rels = s
                    .members()
                    .map(|m| {
                        let r = m.relation()?;
                        r.project(&r.attr_set().intersection(&a.attributes))
                    })
                    .collect::<mra_core::Result<Vec<_>>>()?;
                Binding::Space(RelationSpace::from_relations(s.dimensions().intersection(&a.attributes), rels)?)
            }
            Binding::Slice(_) => unreachable!("kinds are checked before execution"),
        },
        Op::Mutate(a) => {
            let needs = a.columns.iter().fold(AttrSet::new(), |acc, c| acc.union(&c.expr.columns()));
            let fns: Vec<(Expr, String)> = a.columns.iter().map(|c| (c.expr.clone(), c.alias.clone())).collect();
            per_member(inputs[0], &needs, false, |r| r.mutate(&fns))?
        }
        Op::UnionAll(_) => {
            let rels: Vec<Relation> = match inputs {
                [Binding::Space(s)] => s.members().map(|m| m.relation().cloned()).collect::<mra_core::Result<_>>()?,
                _ => relations(inputs).into_iter().cloned().collect(),
            };
            Binding::Relation(Relation::union_padded(&rels)?)
        }
    };
    Ok((b, None))
}

/// The member each block of a `represent` or `crawl` step would read,
/// found without reading any member.
pub fn planned_blocks(space: &RelationSpace, op: &Op) -> Option<Vec<(AttrSet, AttrSet, Option<AttrSet>)>> {
    let (g, f) = op.blocks()?;
    Some(mra_core::slice::plan_blocks(space, &g, &f))
}
