//! Crawl: represent, transform, select and flatten in one operator, with
//! strategies that skip transformations for regions known to fail.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{reference_features, TransformPlan};
use crate::error::{Error, Result};
use crate::expr::CmpOp;
use crate::predicate::{Atom, ScalarAgg, ScalarFn, SlicePredicate};
use crate::relation::{Relation, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::slice::{flatten, region_schema, represent, restrict_region, Features, SliceRelation};
use crate::space::RelationSpace;
use crate::transform::TransformSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Naive,
    DegreeFirst,
    DepthFirst,
    Optimistic,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Naive, Strategy::DegreeFirst, Strategy::DepthFirst, Strategy::Optimistic];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::DegreeFirst => "degree_first",
            Strategy::DepthFirst => "depth_first",
            Strategy::Optimistic => "optimistic",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declares that predicate `predicate` is antitone along the region lattice:
/// if it fails for a region it fails for every finer region. `cheap` is an
/// optional predicate over the untransformed feature tables whose failure
/// implies the annotated predicate's failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprioriAnnotation {
    pub predicate: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cheap: Option<SlicePredicate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlPlan {
    pub region_schemas: Vec<AttrSet>,
    pub slice_transformations: Vec<TransformSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicates: Vec<SlicePredicate>,
    /// Output dimensions; the input space's when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<AttrSet>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub apriori: Vec<AprioriAnnotation>,
    /// Re-evaluates every skipped region and fails if one would have passed
    /// its annotated predicate.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub verify_pruning: bool,
}

impl CrawlPlan {
    pub fn new(region_schemas: Vec<AttrSet>, transforms: Vec<TransformSpec>, predicates: Vec<SlicePredicate>) -> Self {
        CrawlPlan {
            region_schemas,
            slice_transformations: transforms,
            predicates,
            dimensions: None,
            strategy: Strategy::Naive,
            apriori: Vec::new(),
            verify_pruning: false,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_apriori(mut self, apriori: Vec<AprioriAnnotation>) -> Self {
        self.apriori = apriori;
        self
    }

    pub fn with_dimensions(mut self, dims: AttrSet) -> Self {
        self.dimensions = Some(dims);
        self
    }

    /// Feature schemas read by the transformations, in first-use order.
    pub fn feature_schemas(&self) -> Vec<AttrSet> {
        let mut out: Vec<AttrSet> = Vec::new();
        for s in &self.slice_transformations {
            if !out.contains(s.input()) {
                out.push(s.input().clone());
            }
        }
        out
    }

    fn region_list(&self) -> Vec<AttrSet> {
        let mut out: Vec<AttrSet> = Vec::new();
        for g in &self.region_schemas {
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        out
    }
}

/// Counters describing how much work a crawl did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CrawlStats {
    pub strategy: Strategy,
    pub regions_total: usize,
    /// Regions whose transformations ran.
    pub evaluated: usize,
    /// Regions excluded without running transformations.
    pub skipped: usize,
    pub transform_invocations: usize,
    pub passed: usize,
    /// The skipped regions, sorted.
    #[serde(skip)]
    pub pruned: Vec<Tuple>,
}

pub fn degree(schema: &AttrSet) -> usize {
    schema.len()
}

/// The regions to crawl, their raw features and the checked pieces of the
/// plan.
struct Prepared {
    raw: SliceRelation,
    transforms: TransformPlan,
    references: Vec<Option<Relation>>,
    predicates: Vec<SlicePredicate>,
    annotated: BTreeSet<usize>,
    cheap: Vec<(usize, SlicePredicate)>,
    dims: AttrSet,
}

enum Outcome {
    Passed(Features),
    /// Failed; the annotation index of a failed annotated predicate, if any.
    Failed(Option<usize>),
}

impl Prepared {
    fn new(space: &RelationSpace, plan: &CrawlPlan) -> Result<Self> {
        let raw = represent(space, &plan.region_list(), &plan.feature_schemas())?;
        let transforms = TransformPlan::new(raw.region_schemas(), raw.feature_schemas(), &plan.slice_transformations)?;
        let references = transforms.reference_tables(reference_features(&raw))?;
        let regions = raw.region_sets();
        for p in &plan.predicates {
            p.check_schemas(&regions, transforms.output_feature_schemas())?;
        }
        let mut annotated = BTreeSet::new();
        let mut cheap = Vec::new();
        for a in &plan.apriori {
            if a.predicate >= plan.predicates.len() {
                return Err(Error::InvalidArgument(format!(
                    "apriori annotation names predicate {} but the plan has {}",
                    a.predicate,
                    plan.predicates.len()
                )));
            }
            annotated.insert(a.predicate);
            if let Some(c) = &a.cheap {
                c.check_schemas(&regions, raw.feature_schemas())?;
                cheap.push((a.predicate, c.clone()));
            }
        }
        let prepared = Prepared {
            raw,
            transforms,
            references,
            predicates: plan.predicates.clone(),
            annotated,
            cheap,
            dims: plan.dimensions.clone().unwrap_or_else(|| space.dimensions().clone()),
        };
        for a in &plan.apriori {
            prepared.verify_builtin(&plan.predicates[a.predicate], false)?;
            if let Some(c) = &a.cheap {
                prepared.verify_builtin(c, true)?;
            }
        }
        Ok(prepared)
    }

    /// For annotations whose scalar is a built-in `SUM` or `COUNT`, checks
    /// the direction of the comparison and that summed values are
    /// non-negative. Other scalars are taken on trust.
    fn verify_builtin(&self, p: &SlicePredicate, on_raw: bool) -> Result<()> {
        let SlicePredicate::Atom(Atom::Scalar { lhs, op, .. }) = p else {
            return Ok(());
        };
        let Some((agg, source)) = self.summed_source(lhs, on_raw)? else {
            return Ok(());
        };
        if !matches!(op, CmpOp::Gt | CmpOp::Ge) {
            return Err(Error::UnsoundAnnotation(format!(
                "`{p}`: {} only prunes finer regions under `>` or `>=`",
                agg.name()
            )));
        }
        let Some((feature, attr)) = source else { return Ok(()) };
        for (_, feats) in self.raw.tuples() {
            let table = &feats[&feature];
            let i = table.schema().require(&attr)?;
            if table.rows().any(|r| r[i].as_f64().is_some_and(|x| x < 0.0)) {
                return Err(Error::UnsoundAnnotation(format!(
                    "`{p}`: `{attr}` has negative values, so {} is not antitone",
                    agg.name()
                )));
            }
        }
        Ok(())
    }

    /// `(agg, Some((raw feature, attribute)))` when `lhs` is a SUM or COUNT
    /// over a raw column; the column is `None` for COUNT.
    #[allow(clippy::type_complexity)]
    fn summed_source(&self, lhs: &ScalarFn, on_raw: bool) -> Result<Option<(ScalarAgg, Option<(AttrSet, String)>)>> {
        let sums = |agg: ScalarAgg, f: AttrSet, a: Option<&String>| match agg {
            ScalarAgg::Count => Some((agg, None)),
            ScalarAgg::Sum => a.map(|a| (agg, Some((f, a.clone())))),
            _ => None,
        };
        if on_raw {
            let Some(agg) = lhs.agg else { return Ok(None) };
            let f = lhs.resolve_feature(&self.raw.feature_sets())?;
            return Ok(sums(agg, f, lhs.attribute.as_ref()));
        }
        let outputs: Vec<AttrSet> = self.transforms.output_feature_schemas().iter().map(Schema::attr_set).collect();
        let f = lhs.resolve_feature(&outputs)?;
        for (spec, out) in self.transforms.specs().iter().zip(self.transform_outputs()) {
            if out != f {
                continue;
            }
            let t = spec.transform();
            return Ok(match (t.key(), lhs.agg) {
                ("identity", Some(agg)) => sums(agg, spec.input().clone(), lhs.attribute.as_ref()),
                ("scalar_agg", None) => {
                    let params = t.params();
                    let agg = params.get("agg").and_then(|v| v.as_str()).and_then(ScalarAgg::from_name);
                    let metric = params.get("metric").and_then(|v| v.as_str()).map(str::to_string);
                    match agg {
                        Some(agg) => sums(agg, spec.input().clone(), metric.as_ref()),
                        None => None,
                    }
                }
                _ => None,
            });
        }
        Ok(None)
    }

    fn transform_outputs(&self) -> Vec<AttrSet> {
        self.transforms
            .specs()
            .iter()
            .map(|s| {
                let input = self.raw.feature_schema_for(s.input()).unwrap();
                let projected = input.restrict(&s.projection()).unwrap();
                s.transform().output_schema(&projected).unwrap().attr_set()
            })
            .collect()
    }

    /// Runs the transformations for one region and evaluates the predicates,
    /// annotated ones first.
    fn evaluate(&self, region: &Tuple) -> Result<Outcome> {
        let raw = self.raw.get(region).unwrap();
        let feats = self.transforms.apply(region, raw, &self.references)?;
        for &i in &self.annotated {
            if !self.predicates[i].eval(region, &feats)? {
                return Ok(Outcome::Failed(Some(i)));
            }
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if !self.annotated.contains(&i) && !p.eval(region, &feats)? {
                return Ok(Outcome::Failed(None));
            }
        }
        Ok(Outcome::Passed(feats))
    }

    /// Index of the first annotation whose cheap check fails on raw data.
    fn cheap_failure(&self, region: &Tuple) -> Result<Option<usize>> {
        let raw = self.raw.get(region).unwrap();
        for (i, c) in &self.cheap {
            if !c.eval(region, raw)? {
                return Ok(Some(*i));
            }
        }
        Ok(None)
    }
}

/// Book-keeping shared by the strategies.
struct Run {
    passed: BTreeMap<Tuple, Features>,
    /// Regions known to fail an annotated predicate, evaluated or not, with
    /// that predicate's index.
    failed: HashMap<Tuple, usize>,
    skipped: Vec<(Tuple, usize)>,
    evaluated: usize,
}

impl Run {
    fn new() -> Self {
        Run { passed: BTreeMap::new(), failed: HashMap::new(), skipped: Vec::new(), evaluated: 0 }
    }

    fn record(&mut self, region: Tuple, outcome: Outcome) {
        self.evaluated += 1;
        match outcome {
            Outcome::Passed(f) => {
                self.passed.insert(region, f);
            }
            Outcome::Failed(Some(i)) => {
                self.failed.insert(region, i);
            }
            Outcome::Failed(None) => {}
        }
    }

    /// A failed annotated ancestor of `region` among the coarser declared
    /// schemas, if one is known.
    fn poisoned_by(&self, region: &Tuple, coarser: &[AttrSet]) -> Option<usize> {
        coarser.iter().find_map(|s| self.failed.get(&restrict_region(region, s)).copied())
    }

    fn skip(&mut self, region: Tuple, cause: usize) {
        self.failed.insert(region.clone(), cause);
        self.skipped.push((region, cause));
    }
}

/// Declared schemas strictly coarser than `g`.
fn coarser_schemas(g: &AttrSet, schemas: &[AttrSet]) -> Vec<AttrSet> {
    schemas.iter().filter(|s| *s != g && s.is_subset(g)).cloned().collect()
}

fn regions_by_schema(raw: &SliceRelation) -> BTreeMap<AttrSet, Vec<Tuple>> {
    let mut out: BTreeMap<AttrSet, Vec<Tuple>> = raw.region_sets().into_iter().map(|g| (g, Vec::new())).collect();
    for (r, _) in raw.tuples() {
        out.entry(region_schema(r)).or_default().push(r.clone());
    }
    out
}

fn schemas_by_degree(raw: &SliceRelation) -> Vec<AttrSet> {
    let mut s = raw.region_sets();
    s.sort_by(|a, b| degree(a).cmp(&degree(b)).then_with(|| a.cmp(b)));
    s
}

fn run_naive(prep: &Prepared) -> Result<Run> {
    let regions: Vec<&Tuple> = prep.raw.tuples().map(|(r, _)| r).collect();
    let outcomes: Vec<Outcome> = regions.par_iter().map(|r| prep.evaluate(r)).collect::<Result<_>>()?;
    let mut run = Run::new();
    for (r, o) in regions.into_iter().zip(outcomes) {
        run.record(r.clone(), o);
    }
    Ok(run)
}

/// Region schemas in ascending degree; within a degree regions are
/// evaluated in parallel, after which failures poison finer regions.
fn run_degree_first(prep: &Prepared) -> Result<Run> {
    let by_schema = regions_by_schema(&prep.raw);
    let schemas = schemas_by_degree(&prep.raw);
    let mut run = Run::new();
    let mut i = 0;
    while i < schemas.len() {
        let d = degree(&schemas[i]);
        let mut todo: Vec<Tuple> = Vec::new();
        while i < schemas.len() && degree(&schemas[i]) == d {
            let g = &schemas[i];
            let coarser = coarser_schemas(g, &schemas);
            for r in &by_schema[g] {
                if let Some(cause) = run.poisoned_by(r, &coarser) {
                    run.skip(r.clone(), cause);
                } else {
                    todo.push(r.clone());
                }
            }
            i += 1;
        }
        let outcomes: Vec<Outcome> = todo.par_iter().map(|r| prep.evaluate(r)).collect::<Result<_>>()?;
        for (r, o) in todo.into_iter().zip(outcomes) {
            run.record(r, o);
        }
    }
    Ok(run)
}

/// Pre-order traversal from the coarsest regions into refining regions of
/// the next declared schemas. A region reached with a failed ancestor is
/// skipped; regions no traversal reaches are visited afterwards by degree.
fn run_depth_first(prep: &Prepared) -> Result<Run> {
    let by_schema = regions_by_schema(&prep.raw);
    let schemas = schemas_by_degree(&prep.raw);
    let coarser: BTreeMap<&AttrSet, Vec<AttrSet>> = schemas.iter().map(|g| (g, coarser_schemas(g, &schemas))).collect();
    // Immediate parents: maximal declared proper subsets.
    let parents: BTreeMap<&AttrSet, Vec<AttrSet>> = coarser
        .iter()
        .map(|(g, cs)| {
            let maximal = cs
                .iter()
                .filter(|s| !cs.iter().any(|t| t != *s && s.is_subset(t)))
                .cloned()
                .collect();
            (*g, maximal)
        })
        .collect();
    let mut children: BTreeMap<Tuple, Vec<Tuple>> = BTreeMap::new();
    let mut has_parent: HashSet<Tuple> = HashSet::new();
    for g in &schemas {
        for r in &by_schema[g] {
            for p in &parents[g] {
                let up = restrict_region(r, p);
                if prep.raw.get(&up).is_some() {
                    children.entry(up).or_default().push(r.clone());
                    has_parent.insert(r.clone());
                }
            }
        }
    }
    let mut run = Run::new();
    let mut visited: HashSet<Tuple> = HashSet::new();
    let visit = |run: &mut Run, r: &Tuple| -> Result<bool> {
        let g = region_schema(r);
        if let Some(cause) = run.poisoned_by(r, &coarser[&g]) {
            run.skip(r.clone(), cause);
            return Ok(false);
        }
        let o = prep.evaluate(r)?;
        let descend = !matches!(o, Outcome::Failed(Some(_)));
        run.record(r.clone(), o);
        Ok(descend)
    };
    let mut order: Vec<Tuple> = Vec::new();
    for g in &schemas {
        order.extend(by_schema[g].iter().filter(|r| !has_parent.contains(*r)).cloned());
    }
    for g in &schemas {
        order.extend(by_schema[g].iter().filter(|r| has_parent.contains(*r)).cloned());
    }
    for root in order {
        let mut stack = vec![root];
        while let Some(r) = stack.pop() {
            if !visited.insert(r.clone()) {
                continue;
            }
            if visit(&mut run, &r)? {
                if let Some(cs) = children.get(&r) {
                    stack.extend(cs.iter().rev().filter(|c| !visited.contains(*c)).cloned());
                }
            }
        }
    }
    Ok(run)
}

/// Every region in parallel; a failed cheap check excludes the region before
/// its transformations run.
fn run_optimistic(prep: &Prepared) -> Result<Run> {
    let regions: Vec<&Tuple> = prep.raw.tuples().map(|(r, _)| r).collect();
    let outcomes: Vec<std::result::Result<Outcome, usize>> = regions
        .par_iter()
        .map(|r| match prep.cheap_failure(r)? {
            Some(i) => Ok(Err(i)),
            None => Ok(Ok(prep.evaluate(r)?)),
        })
        .collect::<Result<_>>()?;
    let mut run = Run::new();
    for (r, o) in regions.into_iter().zip(outcomes) {
        match o {
            Ok(o) => run.record(r.clone(), o),
            Err(i) => run.skip(r.clone(), i),
        }
    }
    Ok(run)
}

/// Runs `plan` over `space` with the plan's strategy.
pub fn crawl(space: &RelationSpace, plan: &CrawlPlan) -> Result<RelationSpace> {
    Ok(crawl_with_stats(space, plan)?.0)
}

pub fn crawl_with_stats(space: &RelationSpace, plan: &CrawlPlan) -> Result<(RelationSpace, CrawlStats)> {
    let prep = Prepared::new(space, plan)?;
    let run = match plan.strategy {
        Strategy::Naive => run_naive(&prep)?,
        Strategy::DegreeFirst => run_degree_first(&prep)?,
        Strategy::DepthFirst => run_depth_first(&prep)?,
        Strategy::Optimistic => run_optimistic(&prep)?,
    };
    if plan.verify_pruning {
        for (r, i) in &run.skipped {
            let raw = prep.raw.get(r).unwrap();
            let feats = prep.transforms.apply(r, raw, &prep.references)?;
            if prep.predicates[*i].eval(r, &feats)? {
                return Err(Error::UnsoundAnnotation(format!(
                    "region {} was pruned but passes `{}`",
                    crate::slice::fmt_region(r),
                    prep.predicates[*i]
                )));
            }
        }
    }
    let stats = CrawlStats {
        strategy: plan.strategy,
        regions_total: prep.raw.len(),
        evaluated: run.evaluated,
        skipped: run.skipped.len(),
        transform_invocations: run.evaluated * plan.slice_transformations.len(),
        passed: run.passed.len(),
        pruned: run.skipped.iter().map(|(r, _)| r.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let mut out = prep.transforms.empty_output(prep.dims.clone())?;
    for (r, f) in run.passed {
        out.insert(r, f)?;
    }
    Ok((flatten(&out, &prep.dims)?, stats))
}
