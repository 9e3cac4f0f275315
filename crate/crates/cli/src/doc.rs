//! Pipeline documents: parsing, schema handles, binding checks and the
//! canonical JSON form.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use mra_core::{AttrSet, JoinCondition};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::error::{PipelineError, Result};
use crate::ops::{check_kinds, nearest_op, op_info, Kind, Op};

pub const VERSION: u64 = 1;

/// A named attribute set usable wherever a schema is expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaHandle {
    pub name: String,
    pub attributes: AttrSet,
}

/// A CSV file with its sidecar schema, both relative to the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub name: String,
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// A binding to write out; `dir` is relative to the output root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sink {
    pub binding: String,
    pub dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    op: String,
    #[serde(default)]
    inputs: Vec<String>,
    output: String,
    #[serde(default)]
    args: Json,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    version: u64,
    #[serde(default)]
    schemas: Vec<SchemaHandle>,
    #[serde(default)]
    sources: Vec<Source>,
    steps: Vec<RawStep>,
    #[serde(default)]
    sinks: Vec<Sink>,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub op: Op,
    pub inputs: Vec<String>,
    pub output: String,
    /// Kind of the output binding.
    pub kind: Kind,
}

/// A checked document. Steps keep their written order; `order` lists step
/// indices in execution order.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub version: u64,
    pub schemas: Vec<SchemaHandle>,
    pub sources: Vec<Source>,
    pub steps: Vec<Step>,
    pub sinks: Vec<Sink>,
    pub order: Vec<usize>,
}

impl Pipeline {
    pub fn parse(text: &str) -> Result<Pipeline> {
        let raw: RawDocument = serde_json::from_str(text).map_err(|e| PipelineError::Parse {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        if raw.version != VERSION {
            return Err(PipelineError::UnsupportedVersion(raw.version));
        }
        let mut handles: HashMap<String, AttrSet> = HashMap::new();
        for h in &raw.schemas {
            if handles.insert(h.name.clone(), h.attributes.clone()).is_some() {
                return Err(PipelineError::Duplicate { what: "schema handle", name: h.name.clone() });
            }
        }
        let mut steps_ops = Vec::with_capacity(raw.steps.len());
        for (i, s) in raw.steps.iter().enumerate() {
            let Some(info) = op_info(&s.op) else {
                return Err(PipelineError::UnknownOperator { step: i, op: s.op.clone(), hint: nearest_op(&s.op).map(str::to_string) });
            };
            let mut args = s.args.clone();
            for path in info.schema_paths {
                let parts: Vec<&str> = path.split('/').collect();
                inline_handles(&mut args, &parts, &handles)
                    .map_err(|name| PipelineError::UnknownSchemaHandle { step: i, op: s.op.clone(), name })?;
            }
            inline_join_conditions(&mut args, &handles).map_err(|e| match e {
                JoinError::Handle(name) => PipelineError::UnknownSchemaHandle { step: i, op: s.op.clone(), name },
                JoinError::Syntax(message) => PipelineError::InvalidArguments { step: i, op: s.op.clone(), message },
            })?;
            let op = Op::from_json(&s.op, args)
                .map_err(|message| PipelineError::InvalidArguments { step: i, op: s.op.clone(), message })?;
            steps_ops.push(op);
        }

        let mut producer: HashMap<&str, Option<usize>> = HashMap::new();
        for src in &raw.sources {
            if producer.insert(&src.name, None).is_some() {
                return Err(PipelineError::Duplicate { what: "binding", name: src.name.clone() });
            }
        }
        for (i, s) in raw.steps.iter().enumerate() {
            if producer.insert(&s.output, Some(i)).is_some() {
                return Err(PipelineError::Duplicate { what: "binding", name: s.output.clone() });
            }
        }
        for (i, s) in raw.steps.iter().enumerate() {
            if let Some(name) = s.inputs.iter().find(|n| !producer.contains_key(n.as_str())) {
                return Err(PipelineError::UnboundInput { step: Some(i), name: name.clone() });
            }
        }
        for sink in &raw.sinks {
            if !producer.contains_key(sink.binding.as_str()) {
                return Err(PipelineError::UnboundInput { step: None, name: sink.binding.clone() });
            }
        }
        let order = topological_order(&raw.steps, &producer)?;

        let mut kinds: HashMap<&str, Kind> = raw.sources.iter().map(|s| (s.name.as_str(), Kind::Relation)).collect();
        let mut out_kinds = vec![Kind::Relation; raw.steps.len()];
        for &i in &order {
            let s = &raw.steps[i];
            let ins: Vec<Kind> = s.inputs.iter().map(|n| kinds[n.as_str()]).collect();
            let k = check_kinds(op_info(&s.op).unwrap(), &ins)
                .map_err(|message| PipelineError::KindMismatch { step: i, op: s.op.clone(), message })?;
            kinds.insert(&s.output, k);
            out_kinds[i] = k;
        }

        let steps = raw
            .steps
            .iter()
            .zip(steps_ops)
            .zip(out_kinds)
            .map(|((s, op), kind)| Step { op, inputs: s.inputs.clone(), output: s.output.clone(), kind })
            .collect();
        Ok(Pipeline { version: raw.version, schemas: raw.schemas, sources: raw.sources, steps, sinks: raw.sinks, order })
    }

    /// Canonical form: fixed key order, schema handles inlined, defaults
    /// spelled out only where they are not the default.
    pub fn to_json(&self) -> Json {
        let steps: Vec<Json> = self
            .steps
            .iter()
            .map(|s| json!({ "op": s.op.name(), "inputs": s.inputs, "output": s.output, "args": s.op.args_json() }))
            .collect();
        json!({
            "version": self.version,
            "schemas": self.schemas,
            "sources": self.sources,
            "steps": steps,
            "sinks": self.sinks,
        })
    }

    pub fn to_canonical_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("documents serialize") + "\n"
    }

    pub fn step_kind(&self, binding: &str) -> Option<Kind> {
        if self.sources.iter().any(|s| s.name == binding) {
            return Some(Kind::Relation);
        }
        self.steps.iter().find(|s| s.output == binding).map(|s| s.kind)
    }
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Replaces handle names found at `path` by their attribute lists. Returns
/// the first unknown name.
fn inline_handles(v: &mut Json, path: &[&str], handles: &HashMap<String, AttrSet>) -> std::result::Result<(), String> {
    let Some((head, rest)) = path.split_first() else {
        if let Json::String(name) = v {
            if name == "*" {
                return Ok(());
            }
            let attrs = handles.get(name.as_str()).ok_or_else(|| name.clone())?;
            *v = serde_json::to_value(attrs).unwrap();
        }
        return Ok(());
    };
    match (v, *head) {
        (Json::Array(items), "*") => {
            for item in items {
                inline_handles(item, rest, handles)?;
            }
        }
        (Json::Object(m), key) => {
            if let Some(child) = m.get_mut(key) {
                inline_handles(child, rest, handles)?;
            }
        }
        _ => {}
    }
    Ok(())
}

enum JoinError {
    Handle(String),
    Syntax(String),
}

/// Rewrites `join_conditions` strings with handles resolved.
fn inline_join_conditions(args: &mut Json, handles: &HashMap<String, AttrSet>) -> std::result::Result<(), JoinError> {
    let Some(Json::Array(conds)) = args.get_mut("join_conditions") else {
        return Ok(());
    };
    for c in conds {
        let Json::String(text) = c else { continue };
        let missing = RefCell::new(None);
        let resolve = |name: &str| {
            let hit = handles.get(name).cloned();
            if hit.is_none() {
                *missing.borrow_mut() = Some(name.to_string());
            }
            hit
        };
        match JoinCondition::parse_with(text, &resolve) {
            Ok(j) => *c = Json::String(j.to_string()),
            Err(e) => {
                return Err(match missing.into_inner() {
                    Some(name) => JoinError::Handle(name),
                    None => JoinError::Syntax(e.to_string()),
                })
            }
        }
    }
    Ok(())
}

/// Steps ordered so every input is produced first, preferring written
/// order among ready steps.
fn topological_order(steps: &[RawStep], producer: &HashMap<&str, Option<usize>>) -> Result<Vec<usize>> {
    let deps: Vec<BTreeSet<usize>> = steps
        .iter()
        .map(|s| s.inputs.iter().filter_map(|n| producer[n.as_str()]).collect())
        .collect();
    let mut waiting: BTreeMap<usize, usize> = deps.iter().enumerate().map(|(i, d)| (i, d.len())).collect();
    let mut ready: BTreeSet<usize> = waiting.iter().filter(|(_, n)| **n == 0).map(|(i, _)| *i).collect();
    let mut order = Vec::with_capacity(steps.len());
    while let Some(i) = ready.pop_first() {
        waiting.remove(&i);
        order.push(i);
        for (j, d) in deps.iter().enumerate() {
            if d.contains(&i) {
                let n = waiting.get_mut(&j).unwrap();
                *n -= 1;
                if *n == 0 {
                    ready.insert(j);
                }
            }
        }
    }
    match waiting.keys().next() {
        Some(&i) => Err(PipelineError::CyclicBinding(steps[i].output.clone())),
        None => Ok(order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(steps: Json) -> String {
        json!({
            "version": 1,
            "sources": [{"name": "X", "csv": "x.csv", "schema": "x.schema.json"}],
            "steps": steps,
        })
        .to_string()
    }

    #[test]
    fn steps_run_after_their_inputs() {
        let text = doc(json!([
            {"op": "union_all", "inputs": ["S"], "output": "U"},
            {"op": "relation_space", "inputs": ["X"], "output": "S", "args": {"dimensions": ["a"]}},
        ]));
        let p = Pipeline::parse(&text).unwrap();
        assert_eq!(p.order, vec![1, 0]);
        assert_eq!(p.steps[0].kind, Kind::Relation);
    }

    #[test]
    fn cycles_are_reported() {
        let text = doc(json!([
            {"op": "select", "inputs": ["B"], "output": "A", "args": {"predicate": "x > 1"}},
            {"op": "select", "inputs": ["A"], "output": "B", "args": {"predicate": "x > 1"}},
        ]));
        assert!(matches!(Pipeline::parse(&text), Err(PipelineError::CyclicBinding(_))));
    }

    #[test]
    fn handles_inline_in_join_conditions() {
        let text = json!({
            "version": 1,
            "schemas": [{"name": "P", "attributes": ["id", "name"]}],
            "sources": [{"name": "X", "csv": "x.csv", "schema": "x.schema.json"}],
            "steps": [
                {"op": "relation_space", "inputs": ["X"], "output": "S", "args": {"dimensions": []}},
                {"op": "represent", "inputs": ["S"], "output": "R", "args": {"region_schemas": [[]], "feature_schemas": ["P"]}},
                {"op": "slice_internal_join", "inputs": ["R"], "output": "J", "args": {"join_conditions": ["P.id = [a].b"]}},
            ],
        })
        .to_string();
        let p = Pipeline::parse(&text).unwrap();
        let args = p.steps[2].op.args_json();
        assert_eq!(args["join_conditions"][0], "[id, name].id = [a].b");
        assert_eq!(p.steps[1].op.args_json()["feature_schemas"][0], json!(["id", "name"]));
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Pipeline::parse("{\n  \"version\": 1,\n  \"steps\": [,]\n}") {
            Err(PipelineError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 13)),
            other => panic!("{other:?}"),
        }
    }
}
