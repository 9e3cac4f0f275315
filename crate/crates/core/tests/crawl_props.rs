use std::collections::BTreeSet;

use mra_core::transform::basic::Identity;
use mra_core::{
    attrs, crawl_with_stats, AggSpec, AprioriAnnotation, AttrSet, CrawlPlan, Error, GroupingSets, Materialization,
    RelationSpace, SlicePredicate, Strategy, TransformSpec, Tuple, Value,
};
use mra_testkit::fixtures::t1_space;
use mra_testkit::gen::{random_crawl_case, random_transactions};
use mra_testkit::oracle::frequent_itemsets;
use mra_testkit::tuples_of;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn restrict(t: &Tuple, keys: &AttrSet) -> Tuple {
    t.iter().filter(|(k, _)| keys.contains(k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
}

/// `SUM(M)` per declared region, from the finest member of the cube.
fn region_totals(space: &RelationSpace, schemas: &[AttrSet]) -> Vec<(Tuple, i64)> {
    let finest = space.members().find(|m| m.dims() == space.dimensions()).unwrap();
    let rows = tuples_of(finest.relation().unwrap());
    let mut out = Vec::new();
    for s in schemas {
        let regions: BTreeSet<Tuple> = rows.iter().map(|t| restrict(t, s)).collect();
        for r in regions {
            let total = rows
                .iter()
                .filter(|t| restrict(t, s) == r)
                .map(|t| if let Value::Int(x) = t["M"] { x } else { 0 })
                .sum();
            out.push((r, total));
        }
    }
    out
}

/// Regions with a failing region among their declared coarser schemas.
fn expected_pruned(space: &RelationSpace, schemas: &[AttrSet], threshold: i64) -> Vec<Tuple> {
    let totals = region_totals(space, schemas);
    let fails: BTreeSet<&Tuple> = totals.iter().filter(|(_, t)| *t <= threshold).map(|(r, _)| r).collect();
    let mut out: Vec<Tuple> = totals
        .iter()
        .filter(|(r, _)| {
            schemas.iter().any(|s| s.len() < r.len() && s.iter().all(|a| r.contains_key(a)) && fails.contains(&restrict(r, s)))
        })
        .map(|(r, _)| r.clone())
        .collect();
    out.sort();
    out
}

fn with_threshold(plan: &CrawlPlan, c: i64, strategy: Strategy) -> CrawlPlan {
    let mut p = plan.clone().with_strategy(strategy);
    p.predicates = vec![SlicePredicate::parse(&format!("Total > {c}")).unwrap()];
    p.apriori = vec![AprioriAnnotation { predicate: 0, cheap: None }];
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn strategies_agree_with_naive(seed in any::<u64>()) {
        let (space, plan) = random_crawl_case(&mut rng(seed));
        let (naive, ns) = crawl_with_stats(&space, &plan.clone().with_strategy(Strategy::Naive)).unwrap();
        prop_assert_eq!(ns.skipped, 0);
        for s in [Strategy::DegreeFirst, Strategy::DepthFirst, Strategy::Optimistic] {
            let mut p = plan.clone().with_strategy(s);
            p.verify_pruning = true;
            let (out, st) = crawl_with_stats(&space, &p).unwrap();
            prop_assert_eq!(&out, &naive, "{}", s);
            prop_assert!(st.evaluated <= ns.evaluated);
            prop_assert_eq!(st.evaluated + st.skipped, ns.regions_total);
            prop_assert_eq!(st.passed, ns.passed);
        }
    }

    /// Degree-first skips exactly the regions below a failing declared
    /// ancestor, and raising the threshold only adds to them.
    #[test]
    fn pruning_matches_oracle_and_is_monotone(seed in any::<u64>(), c in 0i64..300, bump in 0i64..200) {
        let (space, plan) = random_crawl_case(&mut rng(seed));
        let mut last: Option<Vec<Tuple>> = None;
        for t in [c, c + bump] {
            let (_, st) = crawl_with_stats(&space, &with_threshold(&plan, t, Strategy::DegreeFirst)).unwrap();
            prop_assert_eq!(&st.pruned, &expected_pruned(&space, &plan.region_schemas, t));
            let (_, dfs) = crawl_with_stats(&space, &with_threshold(&plan, t, Strategy::DepthFirst)).unwrap();
            let df: BTreeSet<&Tuple> = dfs.pruned.iter().collect();
            prop_assert!(df.iter().all(|r| st.pruned.contains(r)));
            if let Some(prev) = &last {
                prop_assert!(prev.iter().all(|r| st.pruned.contains(r)));
            }
            last = Some(st.pruned);
        }
    }
}

#[test]
fn apriori_recovers_frequent_itemsets() {
    let mut g = rng(7);
    for _ in 0..50 {
        let (base, items, attrs) = random_transactions(&mut g, 20, 4);
        let minsup = g.gen_range(1..=items.len());
        let space = RelationSpace::create(
            &base,
            &GroupingSets::Cube(attrs.clone()),
            &[AggSpec::parse("Count", "COUNT()").unwrap()],
            &Materialization::Global(false),
        )
        .unwrap();
        let regions: Vec<AttrSet> = (1u32..1 << attrs.len())
            .map(|m| attrs.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, a)| a.as_str()).collect())
            .collect();
        let plan = CrawlPlan::new(
            regions,
            vec![TransformSpec::with_input(attrs!["Count"], Identity {}).unwrap()],
            vec![SlicePredicate::parse(&format!("Count >= {minsup}")).unwrap()],
        )
        .with_apriori(vec![AprioriAnnotation { predicate: 0, cheap: None }])
        .with_strategy(Strategy::DegreeFirst);
        let (out, _) = crawl_with_stats(&space, &plan).unwrap();
        let keys: AttrSet = attrs.iter().map(String::as_str).collect();
        let got: BTreeSet<Tuple> = out
            .members()
            .flat_map(|m| tuples_of(m.relation().unwrap()))
            .map(|t| restrict(&t, &keys).into_iter().filter(|(_, v)| *v != Value::Null).collect())
            .collect();
        assert_eq!(got, frequent_itemsets(&items, minsup), "minsup {minsup}");
    }
}

/// Average CPC per date: 7.95 overall, 10 for Pixel. Annotating an `AVG`
/// threshold as antitone prunes Pixel although it passes.
#[test]
fn unsound_average_annotation_is_caught() {
    let plan = |s: Strategy| {
        CrawlPlan::new(
            vec![attrs![], attrs!["Device"]],
            vec![TransformSpec::with_input(attrs!["Date", "Cpc"], Identity {}).unwrap()],
            vec![SlicePredicate::parse("AVG([Date, Cpc], Cpc) > 9").unwrap()],
        )
        .with_apriori(vec![AprioriAnnotation { predicate: 0, cheap: None }])
        .with_strategy(s)
    };
    let (naive, _) = crawl_with_stats(&t1_space(), &plan(Strategy::Naive)).unwrap();
    let (pruned, st) = crawl_with_stats(&t1_space(), &plan(Strategy::DegreeFirst)).unwrap();
    assert_ne!(naive, pruned);
    assert_eq!(st.skipped, 2);
    let mut checked = plan(Strategy::DepthFirst);
    checked.verify_pruning = true;
    assert!(matches!(crawl_with_stats(&t1_space(), &checked), Err(Error::UnsoundAnnotation(_))));
}

#[test]
fn upper_bound_on_sum_is_not_antitone() {
    let plan = CrawlPlan::new(
        vec![attrs!["Device"]],
        vec![TransformSpec::with_input(attrs!["Date", "Cost"], Identity {}).unwrap()],
        vec![SlicePredicate::parse("SUM([Date, Cost], Cost) < 100").unwrap()],
    )
    .with_apriori(vec![AprioriAnnotation { predicate: 0, cheap: None }]);
    assert!(matches!(crawl_with_stats(&t1_space(), &plan), Err(Error::UnsoundAnnotation(_))));
}
