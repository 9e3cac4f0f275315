//! Executing documents: `run`, `explain` and `bench`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mra_core::io::{read_csv, read_schema, write_space};
use mra_core::{AttrSet, CrawlStats, RelationSpace, Strategy};
use serde::Serialize;

use crate::doc::Pipeline;
use crate::error::{PipelineError, Result};
use crate::ops::{execute, planned_blocks, Binding, ExecOptions, Kind, Op};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Root for sink directories and debug dumps.
    pub out_dir: PathBuf,
    /// Overrides every crawl plan's strategy.
    pub strategy: Option<Strategy>,
    /// Also dump every slice-relation binding to `<out>/debug/`.
    pub debug_json: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub op: &'static str,
    pub output: String,
    pub kind: String,
    pub rows: usize,
    /// Members, slice tuples, or 1 for a relation.
    pub units: usize,
    pub millis: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crawl: Option<CrawlStats>,
    /// Dimension subsets of input-space members whose rows this step read.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members_read: Vec<AttrSet>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub steps: Vec<StepReport>,
    pub sinks: Vec<PathBuf>,
    pub millis: f64,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out += &format!(
                "step {:>2} {:<24} -> {:<12} {:>8} rows {:>6} units {:>9.2} ms",
                s.step, s.op, s.output, s.rows, s.units, s.millis
            );
            if let Some(c) = &s.crawl {
                out += &format!(
                    "  [{}: {} regions, {} evaluated, {} skipped, {} passed, {} transform calls]",
                    c.strategy, c.regions_total, c.evaluated, c.skipped, c.passed, c.transform_invocations
                );
            }
            out.push('\n');
        }
        for p in &self.sinks {
            out += &format!("wrote {}\n", p.display());
        }
        out += &format!("total {:.2} ms\n", self.millis);
        out
    }
}

pub type Bindings = HashMap<String, Binding>;

fn load_sources(doc: &Pipeline, base_dir: &Path) -> Result<Bindings> {
    let mut env = Bindings::new();
    for s in &doc.sources {
        let err = |source| PipelineError::Source { name: s.name.clone(), source };
        let schema = read_schema(&base_dir.join(&s.schema)).map_err(err)?;
        let rel = read_csv(&base_dir.join(&s.csv), &schema).map_err(err)?;
        env.insert(s.name.clone(), Binding::Relation(rel));
    }
    Ok(env)
}

fn input_space<'a>(env: &'a Bindings, doc: &Pipeline, step: usize) -> Option<&'a RelationSpace> {
    match doc.steps[step].inputs.as_slice() {
        [name] => match env.get(name) {
            Some(Binding::Space(s)) => Some(s),
            _ => None,
        },
        _ => None,
    }
}

fn read_counts(space: Option<&RelationSpace>) -> Vec<(AttrSet, usize)> {
    space.map(|s| s.members().map(|m| (m.dims().clone(), m.reads())).collect()).unwrap_or_default()
}

/// Executes every step in order, returning the bindings and per-step
/// reports. Nothing is written.
pub fn execute_all(doc: &Pipeline, base_dir: &Path, strategy: Option<Strategy>) -> Result<(Bindings, Vec<StepReport>)> {
    let mut env = load_sources(doc, base_dir)?;
    let opts = ExecOptions { strategy };
    let mut reports = Vec::with_capacity(doc.steps.len());
    for &i in &doc.order {
        let step = &doc.steps[i];
        let before = read_counts(input_space(&env, doc, i));
        let started = Instant::now();
        let inputs: Vec<&Binding> = step.inputs.iter().map(|n| &env[n]).collect();
        let err = |source| PipelineError::Step { step: i, op: step.op.name().into(), source };
        let (out, crawl) = execute(&step.op, &inputs, &opts).map_err(err)?;
        let millis = started.elapsed().as_secs_f64() * 1e3;
        let after = read_counts(input_space(&env, doc, i));
        let members_read = before
            .into_iter()
            .zip(after)
            .filter(|((_, a), (_, b))| b > a)
            .map(|((d, _), _)| d)
            .collect();
        reports.push(StepReport {
            step: i,
            op: step.op.name(),
            output: step.output.clone(),
            kind: out.kind().to_string(),
            rows: out.rows().map_err(err)?,
            units: out.units(),
            millis,
            crawl,
            members_read,
        });
        env.insert(step.output.clone(), out);
    }
    Ok((env, reports))
}

fn write_binding(b: &Binding, dir: &Path) -> std::result::Result<(), String> {
    match b {
        Binding::Space(s) => write_space(s, dir).map_err(|e| e.to_string()),
        Binding::Relation(r) => write_space(&RelationSpace::from_relation(r.clone()), dir).map_err(|e| e.to_string()),
        Binding::Slice(s) => write_debug(s, &dir.join("slice.json")),
    }
}

fn write_debug(s: &mra_core::SliceRelation, path: &Path) -> std::result::Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(&s.to_debug_json()).map_err(|e| e.to_string())? + "\n";
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn run(doc: &Pipeline, base_dir: &Path, opts: &RunOptions) -> Result<(Bindings, RunReport)> {
    let started = Instant::now();
    let (env, steps) = execute_all(doc, base_dir, opts.strategy)?;
    let mut sinks = Vec::new();
    for sink in &doc.sinks {
        let dir = opts.out_dir.join(&sink.dir);
        write_binding(&env[&sink.binding], &dir)
            .map_err(|message| PipelineError::Sink { binding: sink.binding.clone(), message })?;
        sinks.push(dir);
    }
    if opts.debug_json {
        let mut names: Vec<&String> = env.keys().collect();
        names.sort();
        for name in names {
            if let Binding::Slice(s) = &env[name] {
                let path = opts.out_dir.join("debug").join(format!("{name}.json"));
                write_debug(s, &path).map_err(|message| PipelineError::Sink { binding: name.clone(), message })?;
                sinks.push(path);
            }
        }
    }
    let millis = started.elapsed().as_secs_f64() * 1e3;
    Ok((env, RunReport { steps, sinks, millis }))
}

#[derive(Debug, Clone, Serialize)]
pub struct PlannedBlock {
    pub region: AttrSet,
    pub feature: AttrSet,
    /// Member the block reads; `None` when no member covers it.
    pub member: Option<AttrSet>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainStep {
    pub step: usize,
    pub op: &'static str,
    pub inputs: Vec<String>,
    pub output: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<PlannedBlock>>,
    /// Feature schemas a crawl represents, derived from its transformations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_feature_schemas: Option<Vec<AttrSet>>,
}

impl ExplainStep {
    /// Distinct members the step's blocks read, sorted.
    pub fn members(&self) -> Vec<AttrSet> {
        let mut m: Vec<AttrSet> = self.blocks.iter().flatten().filter_map(|b| b.member.clone()).collect();
        m.sort();
        m.dedup();
        m
    }
}

/// The resolved plan. Steps run to obtain the spaces later blocks are
/// matched against, but block matching itself reads no member, and no sink
/// is written.
pub fn explain(doc: &Pipeline, base_dir: &Path) -> Result<Vec<ExplainStep>> {
    let mut env = load_sources(doc, base_dir)?;
    let opts = ExecOptions::default();
    let mut out = Vec::new();
    for &i in &doc.order {
        let step = &doc.steps[i];
        let blocks = input_space(&env, doc, i).and_then(|s| planned_blocks(s, &step.op)).map(|v| {
            v.into_iter().map(|(region, feature, member)| PlannedBlock { region, feature, member }).collect()
        });
        let derived = match &step.op {
            Op::Crawl(p) => Some(p.feature_schemas()),
            _ => None,
        };
        out.push(ExplainStep {
            step: i,
            op: step.op.name(),
            inputs: step.inputs.clone(),
            output: step.output.clone(),
            kind: step.kind.to_string(),
            blocks,
            derived_feature_schemas: derived,
        });
        let inputs: Vec<&Binding> = step.inputs.iter().map(|n| &env[n]).collect();
        let (b, _) = execute(&step.op, &inputs, &opts)
            .map_err(|source| PipelineError::Step { step: i, op: step.op.name().into(), source })?;
        env.insert(step.output.clone(), b);
    }
    Ok(out)
}

pub fn render_explain(steps: &[ExplainStep]) -> String {
    let mut out = String::new();
    for s in steps {
        out += &format!("step {} {}({}) -> {}: {}\n", s.step, s.op, s.inputs.join(", "), s.output, s.kind);
        if let Some(f) = &s.derived_feature_schemas {
            let f: Vec<String> = f.iter().map(ToString::to_string).collect();
            out += &format!("  feature schemas: {}\n", f.join(", "));
        }
        for b in s.blocks.iter().flatten() {
            let m = b.member.as_ref().map(ToString::to_string).unwrap_or_else(|| "(none)".into());
            out += &format!("  block {} x {} <- member {}\n", b.region, b.feature, m);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub millis: f64,
    pub steps: Vec<StepReport>,
}

impl BenchRow {
    pub fn totals(&self) -> (usize, usize, usize) {
        self.steps
            .iter()
            .filter_map(|s| s.crawl.as_ref())
            .fold((0, 0, 0), |(e, k, t), c| (e + c.evaluated, k + c.skipped, t + c.transform_invocations))
    }
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut out = format!("{:<14} {:>10} {:>10} {:>16} {:>10}\n", "strategy", "evaluated", "skipped", "transform calls", "ms");
    for r in rows {
        let (e, k, t) = r.totals();
        out += &format!("{:<14} {:>10} {:>10} {:>16} {:>10.2}\n", r.strategy.name(), e, k, t, r.millis);
    }
    out
}

/// Runs the document once per strategy and compares every crawl output and
/// sink binding against the first strategy's.
pub fn bench(doc: &Pipeline, base_dir: &Path, strategies: &[Strategy]) -> Result<Vec<BenchRow>> {
    let mut compared: Vec<&str> = doc
        .steps
        .iter()
        .filter(|s| matches!(s.op, Op::Crawl(_)))
        .map(|s| s.output.as_str())
        .chain(doc.sinks.iter().map(|s| s.binding.as_str()))
        .collect();
    compared.sort();
    compared.dedup();
    let mut rows = Vec::new();
    let mut first: Option<(Strategy, Bindings)> = None;
    for &s in strategies {
        let started = Instant::now();
        let (env, steps) = execute_all(doc, base_dir, Some(s))?;
        rows.push(BenchRow { strategy: s, millis: started.elapsed().as_secs_f64() * 1e3, steps });
        match &first {
            None => first = Some((s, env)),
            Some((s0, env0)) => {
                for name in &compared {
                    let same = env0[*name]
                        .same_as(&env[*name])
                        .map_err(|e| PipelineError::Io(format!("comparing `{name}`: {e}")))?;
                    if !same {
                        return Err(PipelineError::BenchMismatch {
                            binding: name.to_string(),
                            a: s0.name().into(),
                            b: s.name().into(),
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Kind of every sink binding, for callers that only validated.
pub fn sink_kinds(doc: &Pipeline) -> Vec<(String, Kind)> {
    doc.sinks.iter().filter_map(|s| Some((s.binding.clone(), doc.step_kind(&s.binding)?))).collect()
}
