//! Small hand-built datasets.

use mra_core::{
    attrs, AggSpec, GroupingSets, Materialization, Relation, RelationSpace, Schema, SliceRelation, Tuple, Value,
    ValueType::*,
};

fn s(x: &str) -> Value {
    Value::from(x)
}

fn d(x: &str) -> Value {
    Value::date(x)
}

/// Five ad-traffic rows over `[Device, Browser, Date, Cost, Clicks]`.
pub fn x_base() -> Relation {
    let schema = Schema::of([("Device", Str), ("Browser", Str), ("Date", Date), ("Cost", Int), ("Clicks", Int)]);
    let rows = [
        ("Pixel", "Chrome", "2025-01-01", 100, 5),
        ("Pixel", "Edge", "2025-01-01", 50, 5),
        ("Pixel", "Chrome", "2025-01-02", 200, 40),
        ("iPhone", "Safari", "2025-01-01", 80, 10),
        ("iPhone", "Safari", "2025-01-02", 20, 10),
    ]
    .map(|(dv, b, dt, c, k)| vec![s(dv), s(b), d(dt), Value::Int(c), Value::Int(k)]);
    Relation::new(schema, rows).unwrap()
}

pub fn x_aggregations() -> Vec<AggSpec> {
    vec![
        AggSpec::parse("Cost", "SUM(Cost)").unwrap(),
        AggSpec::parse("Cpc", "SUM(Cost)/SUM(Clicks)").unwrap(),
    ]
}

/// `x_base` aggregated over `cube([Device, Date])`.
pub fn t1_space() -> RelationSpace {
    RelationSpace::create(
        &x_base(),
        &GroupingSets::Cube(vec!["Device".into(), "Date".into()]),
        &x_aggregations(),
        &Materialization::Global(true),
    )
    .unwrap()
}

/// Professors, who gives which lecture, and lectures.
pub fn resultdb_tables() -> (Relation, Relation, Relation) {
    let prof = Relation::new(
        Schema::of([("id", Int), ("name", Str)]),
        [(0, "Prof. A"), (1, "Prof. B"), (2, "Prof. C")].map(|(i, n)| vec![Value::Int(i), s(n)]),
    )
    .unwrap();
    let gives = Relation::new(
        Schema::of([("pid", Int), ("lid", Int)]),
        [(0, 10), (1, 11), (1, 12), (3, 13)].map(|(p, l)| vec![Value::Int(p), Value::Int(l)]),
    )
    .unwrap();
    let lectures = Relation::new(
        Schema::of([("id", Int), ("title", Str), ("difficulty", Str)]),
        [(10, "DB", "low"), (11, "OS", "low"), (12, "AI", "high"), (13, "ML", "low")]
            .map(|(i, t, x)| vec![Value::Int(i), s(t), s(x)]),
    )
    .unwrap();
    (prof, gives, lectures)
}

/// The three tables as one slice tuple at the empty region.
pub fn resultdb_slices() -> SliceRelation {
    let (p, g, l) = resultdb_tables();
    let mut sr = SliceRelation::new(
        vec![Schema::empty()],
        vec![p.schema().clone(), g.schema().clone(), l.schema().clone()],
        attrs![],
    )
    .unwrap();
    let feats = [p, g, l].into_iter().map(|r| (r.attr_set(), r)).collect();
    sr.insert(Tuple::new(), feats).unwrap();
    sr
}

/// Anomalous entities found by an earlier crawl, at device and at
/// device-browser granularity: `[Device, Date, IsAnomaly]` and
/// `[Device, Browser, Date, IsAnomaly]`.
pub fn anomaly_members() -> (Relation, Relation) {
    let b = Value::Bool;
    let device = Relation::new(
        Schema::of([("Device", Str), ("Date", Date), ("IsAnomaly", Bool)]),
        [
            vec![s("Pixel"), d("2025-01-02"), b(true)],
            vec![s("iPhone"), d("2025-01-02"), b(false)],
        ],
    )
    .unwrap();
    let device_browser = Relation::new(
        Schema::of([("Device", Str), ("Browser", Str), ("Date", Date), ("IsAnomaly", Bool)]),
        [
            vec![s("Pixel"), s("Chrome"), d("2025-01-02"), b(true)],
            vec![s("Pixel"), s("Edge"), d("2025-01-01"), b(true)],
            vec![s("iPhone"), s("Safari"), d("2025-01-01"), b(false)],
        ],
    )
    .unwrap();
    (device, device_browser)
}

/// Cost per device and browser where `iPhone` totals 250, below a 300
/// threshold, and `Pixel` totals 400.
pub fn pruning_base() -> Relation {
    let schema = Schema::of([("Device", Str), ("Browser", Str), ("Cost", Int)]);
    let rows = [
        ("Pixel", "Chrome", 300),
        ("Pixel", "Firefox", 100),
        ("iPhone", "Safari", 200),
        ("iPhone", "Chrome", 50),
    ]
    .map(|(dv, b, c)| vec![s(dv), s(b), Value::Int(c)]);
    Relation::new(schema, rows).unwrap()
}
