use std::collections::BTreeSet;

use mra_core::transform::basic::Identity;
use mra_core::{
    attrs, region_refines, represent, slice_internal_select, slice_join, slice_project, slice_select, slice_transform,
    AttrSet, Expr, FeatureFilter, InternalSelect, JoinCondition, Relation, RegionCondition, Schema, SlicePredicate,
    SliceRelation, TransformSpec, Tuple, Value, ValueType,
};
use mra_testkit::fixtures::resultdb_slices;
use mra_testkit::gen::{random_region, round_trip_b_case};
use mra_testkit::oracle::{consistent_rows, Eq};
use mra_testkit::{tup, tuples_of};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to four two-column integer tables joined along a random forest, some
/// pairs on two columns at once.
fn semijoin_case(seed: u64) -> (SliceRelation, InternalSelect, Vec<Vec<Tuple>>, Vec<Eq>) {
    let mut g = rng(seed);
    let k = g.gen_range(2..=4);
    let mut tables = Vec::new();
    for t in 0..k {
        let cols = [format!("a{t}"), format!("b{t}")];
        let n = g.gen_range(0..=5);
        let rows: Vec<Vec<Value>> = (0..n)
            .map(|_| {
                cols.iter()
                    .map(|_| if g.gen_ratio(1, 8) { Value::Null } else { Value::Int(g.gen_range(0..3)) })
                    .collect()
            })
            .collect();
        let schema = Schema::of(cols.iter().map(|c| (c.clone(), ValueType::Int)));
        tables.push(Relation::new(schema, rows).unwrap());
    }
    let filter_on = g.gen_bool(0.5).then(|| g.gen_range(0..k));
    let mut conds = Vec::new();
    let mut eqs = Vec::new();
    for t in 1..k {
        if !g.gen_bool(0.8) {
            continue;
        }
        let parent = g.gen_range(0..t);
        let pairs = if g.gen_bool(0.3) { vec![("a", "a"), ("b", "b")] } else { vec![(["a", "b"][g.gen_range(0..2)], ["a", "b"][g.gen_range(0..2)])] };
        for (x, y) in pairs {
            let (lx, ry) = (format!("{x}{parent}"), format!("{y}{t}"));
            conds.push(JoinCondition::new(tables[parent].attr_set(), &lx, tables[t].attr_set(), &ry));
            eqs.push(Eq { left: parent, left_attr: lx, right: t, right_attr: ry });
        }
    }
    let mut sr = SliceRelation::new(vec![Schema::empty()], tables.iter().map(|t| t.schema().clone()).collect(), attrs![]).unwrap();
    sr.insert(Tuple::new(), tables.iter().map(|t| (t.attr_set(), t.clone())).collect()).unwrap();
    let mut raw: Vec<Vec<Tuple>> = tables.iter().map(tuples_of).collect();
    let mut filters = Vec::new();
    if let Some(f) = filter_on {
        let col = format!("a{f}");
        filters.push(FeatureFilter { feature: tables[f].attr_set(), predicate: Expr::parse(&format!("{col} > 0")).unwrap() });
        raw[f].retain(|t| t[&col].as_f64().is_some_and(|x| x > 0.0));
    }
    (sr, InternalSelect { filters, join_conditions: conds }, raw, eqs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn semijoin_reduction_matches_consistent_assignments(seed in any::<u64>()) {
        let (sr, stmt, raw, eqs) = semijoin_case(seed);
        let out = slice_internal_select(&sr, &stmt).unwrap();
        let want = consistent_rows(&raw, &eqs);
        let feats = out.get(&Tuple::new()).unwrap();
        prop_assert_eq!(out.feature_sets(), sr.feature_sets());
        for (i, f) in sr.feature_schemas().iter().enumerate() {
            let got: BTreeSet<Tuple> = tuples_of(&feats[&f.attr_set()]).into_iter().collect();
            prop_assert_eq!(&got, &want[i], "table {}", i);
        }
    }

    #[test]
    fn region_refines_is_a_partial_order(s in any::<u64>()) {
        let mut g = rng(s);
        let rs: Vec<Tuple> = (0..6).map(|_| random_region(&mut g)).collect();
        for a in &rs {
            prop_assert!(region_refines(a, a));
            for b in &rs {
                if region_refines(a, b) && region_refines(b, a) {
                    prop_assert_eq!(a, b);
                }
                for c in &rs {
                    if region_refines(a, b) && region_refines(b, c) {
                        prop_assert!(region_refines(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn select_keeps_tuples_intact(seed in any::<u64>(), c in 0i64..200) {
        let (space, regions, features) = round_trip_b_case(&mut rng(seed));
        let sr = represent(&space, &regions, &features).unwrap();
        let m = features.iter().find(|f| f.contains("M")).cloned();
        let p = match m {
            Some(f) => SlicePredicate::parse(&format!("SUM([{}], M) > {c}", f.iter().cloned().collect::<Vec<_>>().join(", "))).unwrap(),
            None => SlicePredicate::parse(&format!("COUNT([N]) >= {}", c % 2)).unwrap(),
        };
        let out = slice_select(&sr, &p).unwrap();
        for (r, f) in out.tuples() {
            prop_assert_eq!(Some(f), sr.get(r));
        }
        for (r, f) in sr.tuples() {
            prop_assert_eq!(out.get(r).is_some(), p.eval(r, f).unwrap());
        }
    }

    #[test]
    fn project_is_idempotent(seed in any::<u64>()) {
        let mut g = rng(seed);
        let (space, regions, features) = round_trip_b_case(&mut g);
        let sr = represent(&space, &regions, &features).unwrap();
        let rs: Vec<AttrSet> = regions.iter().filter(|_| g.gen_bool(0.6)).cloned().collect();
        let fs: Vec<AttrSet> = features.iter().filter(|_| g.gen_bool(0.6)).cloned().collect();
        let once = slice_project(&sr, &rs, &fs).unwrap();
        prop_assert_eq!(slice_project(&once, &rs, &fs).unwrap(), once);
    }

    #[test]
    fn identity_transforms_change_nothing(seed in any::<u64>()) {
        let (space, regions, features) = round_trip_b_case(&mut rng(seed));
        let sr = represent(&space, &regions, &features).unwrap();
        let specs: Vec<TransformSpec> = features.iter().map(|f| TransformSpec::with_input(f.clone(), Identity {}).unwrap()).collect();
        prop_assert_eq!(slice_transform(&sr, &specs, None).unwrap(), sr);
    }

    #[test]
    fn region_equal_join_is_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (sp1, r1, f1) = round_trip_b_case(&mut rng(s1));
        let (sp2, r2, f2) = round_trip_b_case(&mut rng(s2));
        let a = represent(&sp1, &r1, &f1).unwrap();
        let b = represent(&sp2, &r2, &f2).unwrap();
        if let Ok(j) = slice_join(&a, &b, RegionCondition::Equal, &attrs!["A", "B", "C"]) {
            prop_assert!(j.len() <= a.len().min(b.len()));
        }
    }
}

#[test]
fn resultdb_reduction() {
    let sr = resultdb_slices();
    let stmt = InternalSelect {
        filters: vec![FeatureFilter {
            feature: attrs!["id", "title", "difficulty"],
            predicate: Expr::parse("difficulty = 'low'").unwrap(),
        }],
        join_conditions: vec![
            JoinCondition::parse("[id, name].id = [pid, lid].pid").unwrap(),
            JoinCondition::parse("[id, title, difficulty].id = [pid, lid].lid").unwrap(),
        ],
    };
    let out = slice_internal_select(&sr, &stmt).unwrap();
    let f = out.get(&Tuple::new()).unwrap();
    let ids = |t: &Relation, c: &str| -> BTreeSet<i64> {
        t.tuples().map(|r| if let Value::Int(x) = r[c] { x } else { -1 }).collect()
    };
    assert_eq!(ids(&f[&attrs!["id", "name"]], "id"), [0, 1].into());
    assert_eq!(
        tuples_of(&f[&attrs!["pid", "lid"]]).into_iter().collect::<BTreeSet<_>>(),
        [(0, 10), (1, 11)].map(|(p, l)| tup([("pid", Value::Int(p)), ("lid", Value::Int(l))])).into()
    );
    assert_eq!(ids(&f[&attrs!["id", "title", "difficulty"]], "id"), [10, 11].into());
}
