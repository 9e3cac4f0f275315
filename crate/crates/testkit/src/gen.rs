//! Seeded random instances.

use mra_core::{
    attrs, AggSpec, AprioriAnnotation, AttrSet, CrawlPlan, GroupingSets, Materialization, Relation, RelationSpace,
    ScalarAgg, Schema, SlicePredicate, TransformSpec, Tuple, Value, ValueType,
};
use mra_core::transform::basic::{Identity, ScalarAggregate};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DIM_NAMES: [&str; 3] = ["A", "B", "C"];

fn pick_value<R: Rng>(rng: &mut R, attr: &str, nulls: bool) -> Value {
    if nulls && rng.gen_ratio(1, 10) {
        return Value::Null;
    }
    Value::from(format!("{}{}", attr.to_lowercase(), rng.gen_range(0..3)).as_str())
}

/// A base relation with `dims` string dimension columns (from `A`, `B`, `C`)
/// plus non-negative integer metrics `M` and `K` (`K ≥ 1`).
pub fn random_base<R: Rng>(rng: &mut R, dims: usize, max_rows: usize, nulls: bool) -> Relation {
    let names = &DIM_NAMES[..dims];
    let mut cols: Vec<(&str, ValueType)> = names.iter().map(|n| (*n, ValueType::Str)).collect();
    cols.push(("M", ValueType::Int));
    cols.push(("K", ValueType::Int));
    let n = rng.gen_range(0..=max_rows);
    let rows: Vec<Vec<Value>> = (0..n)
        .map(|_| {
            let mut row: Vec<Value> = names.iter().map(|a| pick_value(rng, a, nulls)).collect();
            row.push(Value::Int(rng.gen_range(0..100)));
            row.push(Value::Int(rng.gen_range(1..20)));
            row
        })
        .collect();
    Relation::new(Schema::of(cols), rows).unwrap()
}

pub fn metric_aggregations() -> Vec<AggSpec> {
    vec![
        AggSpec::parse("M", "SUM(M)").unwrap(),
        AggSpec::parse("N", "COUNT").unwrap(),
        AggSpec::parse("R", "SUM(M)/SUM(K)").unwrap(),
    ]
}

/// A crawl over a random cube with a sound annotated `SUM` threshold and
/// sometimes a second, unannotated predicate and a cheap check.
pub fn random_crawl_case<R: Rng>(rng: &mut R) -> (RelationSpace, CrawlPlan) {
    let dims = rng.gen_range(1..=3);
    let base = random_base(rng, dims, 30, false);
    let names: Vec<String> = DIM_NAMES[..dims].iter().map(|s| s.to_string()).collect();
    let space = RelationSpace::create(
        &base,
        &GroupingSets::Cube(names.clone()),
        &metric_aggregations(),
        &Materialization::Global(rng.gen_bool(0.5)),
    )
    .unwrap();

    let mut all: Vec<AttrSet> = Vec::new();
    for mask in 0u32..(1 << dims) {
        all.push((0..dims).filter(|i| mask >> i & 1 == 1).map(|i| names[i].as_str()).collect());
    }
    all.shuffle(rng);
    let keep = rng.gen_range(1..=all.len());
    let regions: Vec<AttrSet> = all.into_iter().take(keep).collect();

    let total = ScalarAggregate { agg: ScalarAgg::Sum, metric: Some("M".into()), alias: "Total".into() };
    let mut transforms = vec![TransformSpec::of(total).unwrap()];
    if rng.gen_bool(0.5) {
        transforms.push(TransformSpec::with_input(attrs!["N"], Identity {}).unwrap());
    }
    let threshold = rng.gen_range(0..300);
    let mut predicates = vec![SlicePredicate::parse(&format!("Total > {threshold}")).unwrap()];
    if transforms.len() > 1 && rng.gen_bool(0.5) {
        predicates.push(SlicePredicate::parse(&format!("N >= {}", rng.gen_range(1..4))).unwrap());
    }
    let cheap = rng
        .gen_bool(0.5)
        .then(|| SlicePredicate::parse(&format!("SUM([M], M) > {threshold}")).unwrap());
    let plan = CrawlPlan::new(regions, transforms, predicates)
        .with_apriori(vec![AprioriAnnotation { predicate: 0, cheap }]);
    (space, plan)
}

/// Transactions over up to four categorical attributes with a `TID` column
/// keeping duplicates apart. Returns the relation and the item maps.
pub fn random_transactions<R: Rng>(rng: &mut R, max_rows: usize, max_attrs: usize) -> (Relation, Vec<Tuple>, Vec<String>) {
    let k = rng.gen_range(1..=max_attrs);
    let attrs: Vec<String> = ["P", "Q", "S", "T"][..k].iter().map(|s| s.to_string()).collect();
    let n = rng.gen_range(1..=max_rows);
    let mut cols: Vec<(String, ValueType)> = vec![("TID".into(), ValueType::Int)];
    cols.extend(attrs.iter().map(|a| (a.clone(), ValueType::Str)));
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for t in 0..n {
        let vals: Vec<Value> = attrs
            .iter()
            .map(|a| Value::from(format!("{}{}", a.to_lowercase(), rng.gen_range(0..2)).as_str()))
            .collect();
        items.push(attrs.iter().cloned().zip(vals.iter().cloned()).collect());
        let mut row = vec![Value::Int(t as i64)];
        row.extend(vals);
        rows.push(row);
    }
    (Relation::new(Schema::of(cols), rows).unwrap(), items, attrs)
}

/// Region tuples over `A`, `B`, `C` with values from a two-element pool.
pub fn random_region<R: Rng>(rng: &mut R) -> Tuple {
    let mut out = Tuple::new();
    for a in DIM_NAMES {
        if rng.gen_bool(0.5) {
            out.insert(a.to_string(), Value::Int(rng.gen_range(0..2)));
        }
    }
    out
}

/// Density inputs with positive totals, region parts inside the totals and
/// the test denominator within a factor of three of the control one.
pub fn random_density_input<R: Rng>(rng: &mut R) -> mra_core::transform::attribution::DensityInput {
    loop {
        let w_c: f64 = rng.gen_range(1.0..1000.0);
        let w_t: f64 = rng.gen_range(1.0..1000.0);
        let s_c: f64 = rng.gen_range(10.0..500.0);
        let s_t: f64 = s_c * rng.gen_range(1.0 / 3.0..3.0);
        if (s_t - s_c).abs() < 1e-3 * s_t.max(s_c) {
            continue;
        }
        return mra_core::transform::attribution::DensityInput {
            w_t,
            w_c,
            s_t,
            s_c,
            w_t_region: w_t * rng.gen_range(0.0..1.0),
            w_c_region: w_c * rng.gen_range(0.0..1.0),
            s_t_region: s_t * rng.gen_range(0.0..1.0),
            s_c_region: s_c * rng.gen_range(0.0..1.0),
        };
    }
}

/// Schema sets for checking dimension-equivalence laws.
pub fn random_feature_sets<R: Rng>(rng: &mut R) -> Vec<AttrSet> {
    let pool = ["A", "B", "C", "x", "y", "z"];
    (0..rng.gen_range(1..6))
        .map(|_| {
            let s: AttrSet = pool.iter().filter(|_| rng.gen_bool(0.4)).copied().collect();
            if s.is_empty() {
                attrs!["x"]
            } else {
                s
            }
        })
        .collect()
}

fn cube_sets(names: &[&str]) -> Vec<AttrSet> {
    (0u32..1 << names.len())
        .map(|m| (0..names.len()).filter(|i| m >> i & 1 == 1).map(|i| names[i]).collect())
        .collect()
}

/// A cube space and a represent request over it: region schemas from the
/// cube, value features partitioned among `M`, `N`, `R`, and sometimes a
/// feature carrying a dimension no region schema uses.
pub fn round_trip_b_case<R: Rng>(g: &mut R) -> (RelationSpace, Vec<AttrSet>, Vec<AttrSet>) {
    let dims = g.gen_range(1..=3);
    let names = &DIM_NAMES[..dims];
    let base = random_base(g, dims, 20, true);
    let space = RelationSpace::create(
        &base,
        &GroupingSets::Cube(names.iter().map(|s| s.to_string()).collect()),
        &metric_aggregations(),
        &Materialization::Global(g.gen_bool(0.5)),
    )
    .unwrap();
    let mut regions = cube_sets(names);
    regions.shuffle(g);
    regions.truncate(g.gen_range(1..=regions.len()));
    let partitions = [
        vec![attrs!["M"], attrs!["N"], attrs!["R"]],
        vec![attrs!["M", "N"], attrs!["R"]],
        vec![attrs!["M", "N", "R"]],
        vec![attrs!["N"]],
    ];
    let mut features = partitions[g.gen_range(0..partitions.len())].clone();
    let used: AttrSet = regions.iter().fold(AttrSet::new(), |a, r| a.union(r));
    if let Some(free) = names.iter().find(|n| !used.contains(n)) {
        if g.gen_bool(0.5) {
            features.push(attrs![*free, "M"]);
        }
    }
    (space, regions, features)
}
