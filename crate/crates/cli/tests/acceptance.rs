//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use mra_cli::run::execute_all;
use mra_cli::{base_dir, load, Binding, Pipeline, RunOptions};
use mra_core::io::{read_csv, read_schema, read_space};
use mra_core::transform::attribution::{
    as_density, as_numeric, as_summable, DensityInput, DensityModel, DEFAULT_POINTS, DENSITY_REGION_OWNED,
};
use mra_core::transform::basic::Identity;
use mra_core::transform::correlation::cross_rank_corr;
use mra_core::{
    attrs, crawl_with_stats, flatten, represent, AggSpec, AprioriAnnotation, AttrSet, CrawlPlan, GroupingSets,
    Materialization, RelationSpace, SlicePredicate, Strategy, TransformSpec, Tuple, Value,
};
use mra_testkit::gen::{
    metric_aggregations, random_base, random_crawl_case, random_density_input, random_transactions, round_trip_b_case,
    DIM_NAMES,
};
use mra_testkit::oracle::{
    consistent_rows, cross_rank_pairs, frequent_itemsets, group_by, padded_cube, ratio_path_integral, Eq, OAgg,
};
use mra_testkit::{same_tuples, tup, tuples_of};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if let false = $cond {
            return Err(format!($($msg)+));
        }
    };
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn pipeline(name: &str) -> PathBuf {
    root().join("pipelines").join(format!("{name}.json"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn load_table(stem: &str) -> Vec<Tuple> {
    let dir = root().join("data");
    let schema = read_schema(&dir.join(format!("{stem}.schema.json"))).unwrap();
    tuples_of(&read_csv(&dir.join(format!("{stem}.csv")), &schema).unwrap())
}

fn restrict(t: &Tuple, keys: &AttrSet) -> Tuple {
    t.iter().filter(|(k, _)| keys.contains(k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn t1_end_to_end() -> Check {
    let started = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let p = pipeline("t1_crawl");
    let doc = load(&p).map_err(|e| e.to_string())?;
    mra_cli::run(&doc, base_dir(&p), &RunOptions { out_dir: out.path().to_path_buf(), ..Default::default() })
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let space = read_space(&out.path().join("t1")).map_err(|e| e.to_string())?;
    let schemas: BTreeSet<AttrSet> = space.members().map(|m| m.relation().unwrap().attr_set()).collect();
    let want: BTreeSet<AttrSet> =
        [attrs!["Device", "Date", "Cpc", "IsAnomaly"], attrs!["Device", "TotalCost"]].into_iter().collect();
    ensure!(schemas == want, "member schemas {schemas:?}");

    // Oracle: per device total cost and per device-date CPC, with the
    // z-score flag against the device's own series (population std dev).
    let rows = load_table("ads");
    let mut totals = Vec::new();
    let mut series = Vec::new();
    for dev in group_by(&rows, &["Device"], &[("TotalCost", OAgg::Sum("Cost".into()))]) {
        if dev["TotalCost"].as_f64().unwrap() <= 100.0 {
            continue;
        }
        let mine: Vec<Tuple> = rows.iter().filter(|t| t["Device"] == dev["Device"]).cloned().collect();
        let cpc = group_by(&mine, &["Date"], &[("Cpc", OAgg::Ratio("Cost".into(), "Clicks".into()))]);
        let xs: Vec<f64> = cpc.iter().map(|t| t["Cpc"].as_f64().unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        for (mut t, x) in cpc.into_iter().zip(&xs) {
            t.insert("Device".into(), dev["Device"].clone());
            t.insert("IsAnomaly".into(), Value::Bool(sd > 0.0 && (x - mean).abs() > sd));
            series.push(t);
        }
        totals.push(dev);
    }
    let got_totals = tuples_of(space.member(&attrs!["Device"]).unwrap().relation().unwrap());
    let got_series = tuples_of(space.member(&attrs!["Device", "Date"]).unwrap().relation().unwrap());
    ensure!(same_tuples(&got_totals, &totals, 1e-9), "totals {got_totals:?} vs {totals:?}");
    ensure!(same_tuples(&got_series, &series, 1e-9), "series {got_series:?} vs {series:?}");
    let devices: Vec<&Value> = got_totals.iter().map(|t| &t["Device"]).collect();
    ensure!(devices == [&Value::from("Pixel")], "survivors {devices:?}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("only Pixel survives, {} + {} cells match, {elapsed:.2?}", got_series.len(), got_totals.len()))
}

fn grouping_sets_equivalence() -> Check {
    let started = Instant::now();
    let oracle_aggs = [("M", OAgg::Sum("M".into())), ("N", OAgg::Count), ("R", OAgg::Ratio("M".into(), "K".into()))];
    for seed in 0..200u64 {
        let mut g = rng(seed);
        let dims = g.gen_range(1..=3);
        let base = random_base(&mut g, dims, 50, true);
        let names: Vec<String> = DIM_NAMES[..dims].iter().map(|s| s.to_string()).collect();
        let space = RelationSpace::create(&base, &GroupingSets::Cube(names), &metric_aggregations(), &Materialization::Global(true))
            .map_err(|e| e.to_string())?;
        let got = tuples_of(&space.to_single_relation().map_err(|e| e.to_string())?);
        let want = padded_cube(&tuples_of(&base), &DIM_NAMES[..dims], &oracle_aggs, mra_core::space::GROUPING_ID);
        ensure!(same_tuples(&got, &want, 1e-9), "seed {seed}: cube differs from oracle");
        ensure!(got.iter().all(|t| t.contains_key(mra_core::space::GROUPING_ID)), "seed {seed}: missing grouping id");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("200 bases, {elapsed:.2?}"))
}

fn round_trips() -> Check {
    for seed in 0..500u64 {
        let mut g = rng(seed);
        let r = random_base(&mut g, 3, 15, true);
        let mask = g.gen_range(0u32..8);
        let d: AttrSet = DIM_NAMES.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, a)| *a).collect();
        let space = RelationSpace::from_relations(d.clone(), vec![r.clone()]).unwrap();
        let sr = represent(&space, &[d.intersection(&r.attr_set())], &[r.attr_set().difference(&d)])
            .map_err(|e| e.to_string())?;
        let back = flatten(&sr, &d).map_err(|e| e.to_string())?;
        ensure!(back.len() == 1 && back.members().next().unwrap().relation().unwrap() == &r, "A fails at seed {seed}");

        let (space, regions, features) = round_trip_b_case(&mut rng(seed ^ 0x5eed));
        let sr = represent(&space, &regions, &features).map_err(|e| e.to_string())?;
        let again = represent(&flatten(&sr, space.dimensions()).map_err(|e| e.to_string())?, &regions, &features)
            .map_err(|e| e.to_string())?;
        ensure!(again == sr, "B fails at seed {seed}");
    }
    Ok("A and B on 500 instances each".into())
}

fn strategy_equivalence() -> Check {
    for seed in 0..100u64 {
        let (space, plan) = random_crawl_case(&mut rng(seed));
        let (naive, ns) = crawl_with_stats(&space, &plan.clone().with_strategy(Strategy::Naive)).map_err(|e| e.to_string())?;
        for s in [Strategy::DegreeFirst, Strategy::DepthFirst, Strategy::Optimistic] {
            let (out, st) = crawl_with_stats(&space, &plan.clone().with_strategy(s)).map_err(|e| e.to_string())?;
            ensure!(out == naive, "seed {seed}: {s} output differs");
            if s == Strategy::DegreeFirst {
                ensure!(st.evaluated <= ns.evaluated, "seed {seed}: degree_first evaluated more");
            }
        }
    }
    let p = pipeline("bench_sound");
    let doc = load(&p).map_err(|e| e.to_string())?;
    let evaluated = |s| -> Result<usize, String> {
        let (_, r) = execute_all(&doc, base_dir(&p), Some(s)).map_err(|e| e.to_string())?;
        Ok(r.iter().filter_map(|x| x.crawl.as_ref()).map(|c| c.evaluated).sum())
    };
    let (n, d) = (evaluated(Strategy::Naive)?, evaluated(Strategy::DegreeFirst)?);
    ensure!(d < n, "canned fixture: degree_first {d} vs naive {n}");
    Ok(format!("100 plans agree; canned fixture evaluates {d} < {n}"))
}

fn apriori_recovery() -> Check {
    let mut g = rng(7);
    for case in 0..50 {
        let (base, items, attrs) = random_transactions(&mut g, 20, 4);
        let minsup = g.gen_range(1..=items.len());
        let space = RelationSpace::create(
            &base,
            &GroupingSets::Cube(attrs.clone()),
            &[AggSpec::parse("Count", "COUNT()").unwrap()],
            &Materialization::Global(false),
        )
        .map_err(|e| e.to_string())?;
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
        let (out, _) = crawl_with_stats(&space, &plan).map_err(|e| e.to_string())?;
        let keys: AttrSet = attrs.iter().map(String::as_str).collect();
        let got: BTreeSet<Tuple> = out
            .members()
            .flat_map(|m| tuples_of(m.relation().unwrap()))
            .map(|t| restrict(&t, &keys).into_iter().filter(|(_, v)| *v != Value::Null).collect())
            .collect();
        ensure!(got == frequent_itemsets(&items, minsup), "table {case}, minsup {minsup}");
    }
    Ok("50 transaction tables".into())
}

fn attribution() -> Check {
    let mut g = rng(11);
    let mut worst_numeric: f64 = 0.0;
    for i in 0..1000 {
        let x = random_density_input(&mut g);
        let whole = as_density(&x.population()).map_err(|e| e.to_string())?;
        ensure!((whole - x.delta()).abs() <= 1e-9, "density completeness at {i}");
        let f: [f64; 4] = g.gen();
        let a = DensityInput {
            w_t_region: x.w_t_region * f[0],
            w_c_region: x.w_c_region * f[1],
            s_t_region: x.s_t_region * f[2],
            s_c_region: x.s_c_region * f[3],
            ..x
        };
        let b = DensityInput {
            w_t_region: x.w_t_region - a.w_t_region,
            w_c_region: x.w_c_region - a.w_c_region,
            s_t_region: x.s_t_region - a.s_t_region,
            s_c_region: x.s_c_region - a.s_c_region,
            ..x
        };
        let split = as_density(&a).unwrap() + as_density(&b).unwrap();
        ensure!((as_density(&x).unwrap() - split).abs() <= 1e-9, "density additivity at {i}");

        let (t, c): (f64, f64) = (g.gen_range(0.0..1e4), g.gen_range(0.0..1e4));
        let (ft, fc): (f64, f64) = g.gen();
        ensure!((as_summable(t, c) - (t - c)).abs() <= 1e-9, "summable completeness at {i}");
        let parts = as_summable(t * ft, c * fc) + as_summable(t - t * ft, c - c * fc);
        ensure!((as_summable(t, c) - parts).abs() <= 1e-9, "summable additivity at {i}");

        let (p0, p1) = x.endpoints();
        let numeric = as_numeric(&DensityModel, &p0, &p1, &DENSITY_REGION_OWNED, DEFAULT_POINTS).unwrap();
        let err = (numeric - as_density(&x).unwrap()).abs();
        worst_numeric = worst_numeric.max(err);
        ensure!(err <= 1e-6, "numeric vs closed form at {i}: {err}");
    }
    let worked = DensityInput {
        w_c: 100.0,
        s_c: 20.0,
        w_t: 120.0,
        s_t: 30.0,
        w_c_region: 40.0,
        s_c_region: 10.0,
        w_t_region: 50.0,
        s_t_region: 20.0,
    };
    let v = as_density(&worked).unwrap();
    let (p0, p1) = worked.endpoints();
    let quad = ratio_path_integral(p0, p1, 200_000);
    ensure!((v - -1.405465).abs() <= 1e-5, "worked example {v}");
    ensure!((v - quad).abs() <= 1e-6, "worked example {v} vs quadrature {quad}");
    Ok(format!("1000 inputs; worst numeric error {worst_numeric:.1e}; worked example {v:.6}"))
}

fn cross_rank() -> Check {
    let mut g = rng(13);
    for i in 0..1000 {
        let series = |g: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
            let n = g.gen_range(1..=20);
            (0..n).map(|_| (g.gen_range(0..8) as f64, g.gen_range(0..8) as f64)).collect()
        };
        let (u, v) = (series(&mut g), series(&mut g));
        let got = cross_rank_corr(&u, &v).map_err(|e| e.to_string())?;
        let want = cross_rank_pairs(&u, &v);
        ensure!((got - want).abs() <= 1e-12, "series {i}: {got} vs {want}");
        ensure!((-1.0..=1.0).contains(&got), "series {i}: {got} out of bounds");
    }
    let fig = cross_rank_corr(&[(3.0, 3.0), (4.0, 2.0)], &[(1.0, 1.0), (2.0, 0.0)]).unwrap();
    ensure!(fig == 1.0, "figure configuration gives {fig}");
    Ok("1000 paired series; figure configuration 1.0".into())
}

fn support() -> Check {
    let p = pipeline("followup_support");
    let doc = load(&p).map_err(|e| e.to_string())?;
    let (env, _) = execute_all(&doc, base_dir(&p), None).map_err(|e| e.to_string())?;
    let Binding::Space(out) = &env["supported"] else { return Err("not a space".into()) };
    let devices = tuples_of(out.member(&attrs!["Device"]).ok_or("no [Device] member")?.relation().unwrap());

    // Oracle: share of anomalous entities, over both inputs, per device.
    let anomalous: Vec<Tuple> = ["anomaly_device", "anomaly_device_browser"]
        .into_iter()
        .flat_map(load_table)
        .filter(|t| t["IsAnomaly"] == Value::Bool(true))
        .collect();
    let mut share: BTreeMap<Value, f64> = BTreeMap::new();
    for t in &anomalous {
        *share.entry(t["Device"].clone()).or_default() += 1.0 / anomalous.len() as f64;
    }
    let want: Vec<Tuple> = share
        .into_iter()
        .filter(|(_, s)| *s > 0.4)
        .map(|(d, s)| tup([("Device", d), ("Support", Value::Float(s))]))
        .collect();
    ensure!(same_tuples(&devices, &want, 1e-9), "{devices:?} vs {want:?}");
    let pixel = devices.iter().find(|t| t["Device"] == Value::from("Pixel")).ok_or("Pixel did not survive")?;
    ensure!(pixel["Support"] == Value::Float(1.0), "Pixel support {:?}", pixel["Support"]);
    Ok("(Device=Pixel) Support=1.0 survives Support > 0.4".into())
}

fn semi_join() -> Check {
    let p = pipeline("resultdb");
    let doc = load(&p).map_err(|e| e.to_string())?;
    let (env, _) = execute_all(&doc, base_dir(&p), None).map_err(|e| e.to_string())?;
    let Binding::Slice(out) = &env["easy"] else { return Err("not a slice relation".into()) };
    let feats = out.get(&Tuple::new()).ok_or("no tuple at the empty region")?;

    let mut lectures = load_table("lectures");
    lectures.retain(|t| t["difficulty"] == Value::from("low"));
    let tables = vec![load_table("professors"), load_table("gives"), lectures];
    let eq = |l: usize, la: &str, r: usize, ra: &str| Eq { left: l, left_attr: la.into(), right: r, right_attr: ra.into() };
    let want = consistent_rows(&tables, &[eq(0, "id", 1, "pid"), eq(2, "id", 1, "lid")]);
    for (i, schema) in [attrs!["id", "name"], attrs!["pid", "lid"], attrs!["id", "title", "difficulty"]].iter().enumerate() {
        let got: BTreeSet<Tuple> = tuples_of(&feats[schema]).into_iter().collect();
        ensure!(got == want[i], "{schema}: {got:?} vs {:?}", want[i]);
    }
    Ok(format!("{} professors, {} pairs, {} lectures kept", want[0].len(), want[1].len(), want[2].len()))
}

fn robustness() -> Check {
    let dir = root().join("fixtures/malformed");
    let expected: BTreeMap<String, Json> =
        serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
    ensure!(expected.len() >= 12, "only {} malformed fixtures", expected.len());
    let cwd = tempfile::tempdir().unwrap();
    let class = |stderr: &[u8]| -> Option<String> {
        let s = String::from_utf8_lossy(stderr);
        let a = s.find("error[")? + 6;
        Some(s[a..a + s[a..].find(']')?].to_string())
    };
    for (name, want) in &expected {
        let doc = dir.join(format!("{name}.json"));
        for cmd in ["validate", "run"] {
            let mut c = Command::new(env!("CARGO_BIN_EXE_mra"));
            c.arg(cmd).arg(&doc).current_dir(cwd.path());
            if cmd == "run" {
                c.arg("--out").arg(cwd.path());
            }
            let o = c.output().unwrap();
            let exit = want[cmd]["exit"].as_i64().unwrap() as i32;
            ensure!(o.status.code() == Some(exit), "{cmd} {name}: exit {:?}, want {exit}", o.status.code());
            ensure!(class(&o.stderr).as_deref() == want[cmd]["class"].as_str(), "{cmd} {name}: wrong class");
        }
    }
    let mut shipped = 0;
    for e in fs::read_dir(root().join("pipelines")).unwrap() {
        let p = e.unwrap().path();
        let once = load(&p).map_err(|e| format!("{p:?}: {e}"))?.to_canonical_string();
        let twice = Pipeline::parse(&once).map_err(|e| e.to_string())?.to_canonical_string();
        ensure!(once == twice, "{p:?} is not a fixpoint");
        shipped += 1;
    }
    Ok(format!("{} malformed documents; fixpoint on {shipped} shipped pipelines", expected.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("T1 end-to-end crawl", t1_end_to_end),
        ("grouping-sets equivalence", grouping_sets_equivalence),
        ("represent/flatten round trips", round_trips),
        ("strategy equivalence", strategy_equivalence),
        ("apriori recovery", apriori_recovery),
        ("attribution", attribution),
        ("cross-rank correlation", cross_rank),
        ("support follow-up", support),
        ("semi-join reduction", semi_join),
        ("pipeline robustness", robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match r {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
