use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mra_cli::run::execute_all;
use mra_cli::{base_dir, explain, load, Binding, Pipeline, RunOptions};
use mra_core::io::read_space;
use mra_core::{attrs, Strategy, Value};
use mra_testkit::oracle::{group_by, OAgg};
use mra_testkit::{same_tuples, tup, tuples_of};
use serde_json::Value as Json;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn pipeline(name: &str) -> PathBuf {
    root().join("pipelines").join(format!("{name}.json"))
}

fn shipped() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(root().join("pipelines"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

fn mra(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mra")).args(args).current_dir(cwd).output().unwrap()
}

fn class_of(out: &Output) -> Option<String> {
    let err = String::from_utf8_lossy(&out.stderr);
    let start = err.find("error[")? + 6;
    let end = err[start..].find(']')? + start;
    Some(err[start..end].to_string())
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn malformed_documents_fail_with_their_class() {
    let dir = root().join("fixtures/malformed");
    let expected: BTreeMap<String, Json> =
        serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
    assert!(expected.len() >= 12);
    let out = tempfile::tempdir().unwrap();
    for (name, want) in &expected {
        let doc = dir.join(format!("{name}.json"));
        assert!(doc.exists(), "{name}");
        for cmd in ["validate", "run"] {
            let o = match cmd {
                "run" => mra(&["run", doc.to_str().unwrap(), "--out", out.path().to_str().unwrap()], out.path()),
                _ => mra(&[cmd, doc.to_str().unwrap()], out.path()),
            };
            let w = &want[cmd];
            assert_eq!(o.status.code(), Some(w["exit"].as_i64().unwrap() as i32), "{cmd} {name}: {o:?}");
            assert_eq!(class_of(&o).as_deref(), w["class"].as_str(), "{cmd} {name}");
            if let Some(s) = want.get("message_contains").and_then(Json::as_str) {
                assert!(String::from_utf8_lossy(&o.stderr).contains(s), "{cmd} {name}: {o:?}");
            }
        }
    }
}

#[test]
fn every_malformed_fixture_is_listed() {
    let dir = root().join("fixtures/malformed");
    let expected: BTreeMap<String, Json> =
        serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let stem = p.file_stem().unwrap().to_str().unwrap();
        if p.extension().is_some_and(|x| x == "json") && stem != "expected" {
            assert!(expected.contains_key(stem), "{stem}");
        }
    }
}

#[test]
fn validate_writes_nothing_and_reads_no_data() {
    let cwd = tempfile::tempdir().unwrap();
    for p in shipped() {
        let o = mra(&["validate", p.to_str().unwrap()], cwd.path());
        assert_eq!(o.status.code(), Some(0), "{p:?}: {o:?}");
    }
    // Sources that do not exist still validate.
    let doc = root().join("fixtures/malformed/missing_source_file.json");
    assert_eq!(mra(&["validate", doc.to_str().unwrap()], cwd.path()).status.code(), Some(0));
    assert!(fs::read_dir(cwd.path()).unwrap().next().is_none());
}

#[test]
fn canonical_form_is_a_fixpoint() {
    for p in shipped() {
        let once = load(&p).unwrap().to_canonical_string();
        let twice = Pipeline::parse(&once).unwrap().to_canonical_string();
        assert_eq!(once, twice, "{p:?}");
    }
}

/// Per-device `SUM(Cost)` and per-device-and-date `SUM(Cost)/SUM(Clicks)`
/// straight from the CSV.
fn ads_oracle() -> (Vec<mra_core::Tuple>, Vec<mra_core::Tuple>) {
    let text = fs::read_to_string(root().join("data/ads.csv")).unwrap();
    let rows: Vec<mra_core::Tuple> = text
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            tup([
                ("Device", Value::from(c[0])),
                ("Date", Value::date(c[2])),
                ("Cost", Value::Int(c[3].parse().unwrap())),
                ("Clicks", Value::Int(c[4].parse().unwrap())),
            ])
        })
        .collect();
    let totals = group_by(&rows, &["Device"], &[("TotalCost", OAgg::Sum("Cost".into()))]);
    let cpc = group_by(&rows, &["Device", "Date"], &[("Cpc", OAgg::Ratio("Cost".into(), "Clicks".into()))]);
    (totals, cpc)
}

#[test]
fn t1_run_writes_both_members() {
    let out = tempfile::tempdir().unwrap();
    let o = mra(&["run", pipeline("t1_crawl").to_str().unwrap(), "--out", out.path().to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let dir = out.path().join("t1");
    for f in ["space.json", "Date__Device.csv", "Device.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let space = read_space(&dir).unwrap();
    let series = space.member(&attrs!["Device", "Date"]).unwrap().relation().unwrap();
    let totals = space.member(&attrs!["Device"]).unwrap().relation().unwrap();
    assert_eq!(series.attr_set(), attrs!["Device", "Date", "Cpc", "IsAnomaly"]);
    assert_eq!(totals.attr_set(), attrs!["Device", "TotalCost"]);

    let (want_totals, want_cpc) = ads_oracle();
    let keep: Vec<_> = want_totals.into_iter().filter(|t| t["TotalCost"].as_f64().unwrap() > 100.0).collect();
    assert!(same_tuples(&tuples_of(totals), &keep, 1e-9));
    let kept_cpc: Vec<_> = want_cpc.into_iter().filter(|t| keep.iter().any(|k| k["Device"] == t["Device"])).collect();
    let got_cpc: Vec<_> = tuples_of(series)
        .into_iter()
        .map(|mut t| {
            t.remove("IsAnomaly");
            t
        })
        .collect();
    assert!(same_tuples(&got_cpc, &kept_cpc, 1e-9));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("crawl") && stdout.contains("evaluated"), "{stdout}");
}

#[test]
fn output_files_are_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        for p in shipped() {
            let doc = load(&p).unwrap();
            mra_cli::run(&doc, base_dir(&p), &RunOptions { out_dir: d.path().to_path_buf(), ..Default::default() })
                .unwrap();
        }
    }
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
}

#[test]
fn explained_members_are_the_members_read() {
    let mut checked = 0;
    for p in shipped() {
        let doc = load(&p).unwrap();
        let planned = explain(&doc, base_dir(&p)).unwrap();
        let (_, reports) = execute_all(&doc, base_dir(&p), None).unwrap();
        for (e, r) in planned.iter().zip(&reports) {
            assert_eq!(e.step, r.step);
            if e.blocks.is_some() {
                assert_eq!(e.members(), r.members_read, "{p:?} step {}", e.step);
            }
        }
        assert!(planned.iter().any(|e| e.blocks.is_some()) || doc.steps.iter().all(|s| s.op.blocks().is_none()));
        checked += reports.iter().filter(|r| !r.members_read.is_empty()).count();
    }
    assert!(checked >= 5, "{checked}");
}

/// The same document with every handle replaced by its attribute list.
fn inlined(p: &Path) -> String {
    let mut v = load(p).unwrap().to_json();
    v["schemas"] = Json::Array(vec![]);
    serde_json::to_string_pretty(&v).unwrap()
}

#[test]
fn handles_behave_like_their_attribute_lists() {
    for name in ["t1_crawl", "resultdb"] {
        let p = pipeline(name);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"schemas\""), "{name} uses handles");
        let twin_dir = tempfile::tempdir_in(root().join("pipelines")).unwrap();
        let twin = twin_dir.path().join(format!("{name}.json"));
        // Sources are relative to the document, so the twin lives one level
        // deeper and its paths are rewritten accordingly.
        fs::write(&twin, inlined(&p).replace("\"../data/", "\"../../data/")).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for (doc, out) in [(&p, &a), (&twin, &b)] {
            let o = mra(&["run", doc.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--debug-json"], out.path());
            assert_eq!(o.status.code(), Some(0), "{o:?}");
        }
        assert_eq!(files_under(a.path()), files_under(b.path()), "{name}");
    }
}

#[test]
fn bench_passes_when_sound_and_fails_when_not() {
    let cwd = tempfile::tempdir().unwrap();
    let o = mra(&["bench", pipeline("bench_sound").to_str().unwrap()], cwd.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let table = String::from_utf8_lossy(&o.stdout).to_string();
    let skipped = |s: &str| -> usize {
        let line = table.lines().find(|l| l.starts_with(s)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert_eq!(skipped("naive"), 0);
    assert!(skipped("degree_first") > 0, "{table}");
    assert!(fs::read_dir(cwd.path()).unwrap().next().is_none(), "bench writes no sinks");

    let o = mra(&["bench", pipeline("bench_unsound").to_str().unwrap()], cwd.path());
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert_eq!(class_of(&o).as_deref(), Some("BenchMismatch"));

    let o = mra(&["bench", pipeline("bench_unsound").to_str().unwrap(), "--strategies", "naive,optimistic"], cwd.path());
    assert_eq!(o.status.code(), Some(0), "optimistic does not prune on annotations: {o:?}");
}

#[test]
fn strategy_flag_overrides_the_plan() {
    let p = pipeline("bench_sound");
    let doc = load(&p).unwrap();
    let (_, naive) = execute_all(&doc, base_dir(&p), Some(Strategy::Naive)).unwrap();
    let (_, plan) = execute_all(&doc, base_dir(&p), None).unwrap();
    assert_eq!(naive[1].crawl.as_ref().unwrap().strategy, Strategy::Naive);
    assert_eq!(plan[1].crawl.as_ref().unwrap().strategy, Strategy::DegreeFirst);
    assert!(plan[1].crawl.as_ref().unwrap().evaluated < naive[1].crawl.as_ref().unwrap().evaluated);
}

#[test]
fn empty_base_runs_with_empty_members() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(pipeline("t1_crawl")).unwrap().replace(
        "\"../data/ads.csv\"",
        &serde_json::to_string(&root().join("data/empty_ads.csv")).unwrap(),
    );
    let text = text.replace("\"../data/ads.schema.json\"", &serde_json::to_string(&root().join("data/ads.schema.json")).unwrap());
    let doc_path = dir.path().join("empty.json");
    fs::write(&doc_path, text).unwrap();
    let doc = load(&doc_path).unwrap();
    let out = dir.path().join("out");
    let (env, report) =
        mra_cli::run(&doc, base_dir(&doc_path), &RunOptions { out_dir: out.clone(), ..Default::default() }).unwrap();
    assert!(report.steps.iter().all(|s| s.rows == 0), "{report:?}");
    let Binding::Space(y) = &env["Y"] else { panic!() };
    assert!(y.members().all(|m| m.relation().unwrap().is_empty()));
    let written = read_space(&out.join("t1")).unwrap();
    assert!(written.members().all(|m| m.relation().unwrap().is_empty()));
}

#[test]
fn slice_sinks_and_debug_dumps() {
    let out = tempfile::tempdir().unwrap();
    let o = mra(
        &["run", pipeline("resultdb").to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--debug-json", "--json"],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let report: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 3);
    let sink: Json = serde_json::from_str(&fs::read_to_string(out.path().join("resultdb/slice.json")).unwrap()).unwrap();
    let lectures = &sink["tuples"][0]["features"]["difficulty,id,title"];
    let ids: Vec<i64> = lectures.as_array().unwrap().iter().map(|r| r["id"].as_i64().unwrap()).collect();
    assert_eq!(ids, vec![10, 11]);
    for b in ["tables", "easy"] {
        assert!(out.path().join("debug").join(format!("{b}.json")).exists(), "{b}");
    }
}

#[test]
fn explain_lists_blocks_and_feature_schemas() {
    let cwd = tempfile::tempdir().unwrap();
    let o = mra(&["explain", pipeline("t1_crawl").to_str().unwrap(), "--json"], cwd.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let steps: Json = serde_json::from_slice(&o.stdout).unwrap();
    let crawl = &steps[1];
    assert_eq!(crawl["derived_feature_schemas"], serde_json::json!([["Cpc", "Date"], ["Cost"]]));
    assert_eq!(crawl["blocks"][0]["member"], serde_json::json!(["Date", "Device"]));
    assert_eq!(crawl["blocks"][1]["member"], serde_json::json!(["Device"]));
}
