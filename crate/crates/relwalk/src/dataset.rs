//! Relations as CSV files, one `<relation>.csv` per relation with a header
//! row naming the attributes in declaration order. Empty cells are nulls.

use std::path::Path;

use anyhow::{bail, Context, Result};
use relwalk_core::{Database, DatabaseSchema, Error, RelId, Value};

use crate::descriptor::read_schema;
use crate::exit::DataError;

fn csv_path(dir: &Path, relation: &str) -> std::path::PathBuf {
    dir.join(format!("{relation}.csv"))
}

/// Reads the rows of every relation that has a file in `dir`. With
/// `require_all`, a missing file is an error; otherwise it means no rows.
pub fn read_rows(
    schema: &DatabaseSchema,
    dir: &Path,
    require_all: bool,
) -> Result<Vec<(RelId, Vec<Value>)>> {
    let mut out = Vec::new();
    for (r, rel) in schema.relations().iter().enumerate() {
        let path = csv_path(dir, &rel.name);
        if !path.exists() {
            if require_all {
                bail!(DataError(format!("missing data file {}", path.display())));
            }
            continue;
        }
        let mut reader = csv::Reader::from_path(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<&str> = rel.attributes.iter().map(|a| a.name.as_str()).collect();
        if header != expected {
            return Err(Error::Schema(format!(
                "{}: header {:?} does not match attributes {:?}",
                path.display(),
                header,
                expected
            ))
            .into());
        }
        for (line, record) in reader.records().enumerate() {
            let record = record.with_context(|| format!("reading {}", path.display()))?;
            let mut values = Vec::with_capacity(record.len());
            for (cell, decl) in record.iter().zip(&rel.attributes) {
                let v = Value::parse(decl.kind, cell)
                    .map_err(|_| Error::TypeMismatch {
                        relation: rel.name.clone(),
                        attr: decl.name.clone(),
                        kind: decl.kind.as_str().to_string(),
                        value: cell.to_string(),
                    })
                    .with_context(|| format!("{} row {}", path.display(), line + 2))?;
                values.push(v);
            }
            out.push((RelId(r), values));
        }
    }
    Ok(out)
}

pub fn load_database(schema: DatabaseSchema, dir: &Path) -> Result<Database> {
    let rows = read_rows(&schema, dir, true)?;
    Ok(Database::from_ordered_rows(schema, rows)?)
}

/// Loads a schema descriptor and the CSVs next to it.
pub fn load(schema_path: &Path, dir: &Path) -> Result<Database> {
    load_database(read_schema(schema_path)?, dir)
}

pub fn write_database(db: &Database, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (r, rel) in db.schema().relations().iter().enumerate() {
        let path = csv_path(dir, &rel.name);
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(rel.attributes.iter().map(|a| a.name.as_str()))?;
        for &f in db.facts_of(RelId(r)) {
            let fact = db.fact(f)?;
            w.write_record(fact.values.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}
