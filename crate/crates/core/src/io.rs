//! CSV ingestion and relation-space directories.
//!
//! Cells are written in canonical order (columns sorted by name, rows
//! sorted), so output files are byte-stable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::Relation;
use crate::schema::{AttrSet, Schema};
use crate::space::RelationSpace;
use crate::value::Value;

pub const MANIFEST: &str = "space.json";

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_schema(&text)
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let s: Schema = serde_json::from_str(text)?;
    Schema::new(s.columns().to_vec())
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<Relation> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, schema).map_err(|e| match e {
        Error::Io(m) => Error::Io(format!("{}: {m}", path.display())),
        Error::InvalidValue(m) => Error::InvalidValue(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Reads CSV with a header row. The header must name exactly the schema's
/// attributes, in any order.
pub fn parse_csv(input: impl std::io::Read, schema: &Schema) -> Result<Relation> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let header_set: AttrSet = header.iter().map(String::as_str).collect();
    if header_set != schema.attr_set() || header_set.len() != header.len() {
        return Err(Error::SchemaMismatch(format!(
            "CSV header [{}] does not match schema {}",
            header.join(", "),
            schema
        )));
    }
    let pos: Vec<usize> = schema
        .names()
        .map(|n| header.iter().position(|h| h == n).unwrap())
        .collect();
    let mut rel = Relation::empty(schema.clone());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = schema
            .columns()
            .iter()
            .zip(&pos)
            .map(|(c, &p)| {
                Value::parse_typed(rec.get(p).unwrap_or(""), c.ty).map_err(|e| {
                    Error::InvalidValue(format!("row {}, column {}: {e}", line + 1, c.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rel.insert(row)?;
    }
    Ok(rel)
}

pub fn csv_string(rel: &Relation) -> Result<String> {
    let (cols, rows) = rel.sorted_rows();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(cols.iter().map(|c| c.name.as_str()))?;
    for r in rows {
        w.write_record(r.iter().map(Value::to_cell))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_csv(rel: &Relation, path: &Path) -> Result<()> {
    fs::write(path, csv_string(rel)?)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dimensions: AttrSet,
    values: AttrSet,
    relations: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    dims: AttrSet,
    file: String,
    schema: Schema,
}

/// Writes `space.json` plus one CSV per member into `dir`, creating it.
pub fn write_space(space: &RelationSpace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut relations = Vec::new();
    for m in space.members() {
        let rel = m.relation()?;
        let file = format!("{}.csv", m.dims().file_stem());
        write_csv(rel, &dir.join(&file))?;
        let (cols, _) = rel.sorted_rows();
        relations.push(ManifestEntry { dims: m.dims().clone(), file, schema: Schema::new(cols)? });
    }
    let manifest = Manifest {
        dimensions: space.dimensions().clone(),
        values: space.values().clone(),
        relations,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_space(dir: &Path) -> Result<RelationSpace> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut rels = Vec::new();
    for e in manifest.relations {
        rels.push(read_csv(&dir.join(&e.file), &e.schema)?);
    }
    RelationSpace::new(manifest.dimensions, manifest.values, rels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;
    use crate::relation::relation;
    use crate::value::ValueType::*;

    #[test]
    fn csv_round_trip_with_nulls_and_quotes() {
        let r = relation(
            [("name", Str), ("d", Date), ("x", Float)],
            [
                vec!["a,b".into(), Value::date("2025-01-01"), Value::Float(7.0)],
                vec!["q\"".into(), Value::Null, Value::Null],
            ],
        );
        let text = csv_string(&r).unwrap();
        assert!(text.starts_with("d,name,x\n"));
        assert_eq!(parse_csv(text.as_bytes(), r.schema()).unwrap(), r);
    }

    #[test]
    fn header_must_match() {
        let s = Schema::of([("a", Int)]);
        assert!(matches!(parse_csv("b\n1\n".as_bytes(), &s), Err(Error::SchemaMismatch(_))));
        assert!(matches!(parse_csv("a\nx\n".as_bytes(), &s), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn space_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = relation([("Device", Str), ("Date", Date), ("Cost", Int)], []);
        let b = relation([("Cost", Int)], [vec![Value::Int(5)]]);
        let s = RelationSpace::new(attrs!["Device", "Date"], attrs!["Cost"], vec![a, b]).unwrap();
        write_space(&s, dir.path()).unwrap();
        assert!(dir.path().join("Date__Device.csv").exists());
        assert!(dir.path().join("_root.csv").exists());
        assert_eq!(read_space(dir.path()).unwrap(), s);
    }
}
