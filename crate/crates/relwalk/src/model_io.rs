//! Versioned JSON model files and embedding CSVs.
//!
//! Facts are identified by their key values, not by load order, so a model
//! stays valid when the same data is reloaded or extended.

use std::path::Path;

use anyhow::{bail, Context, Result};
use relwalk_core::trainer::{SchemeParams, SymMatrix};
use relwalk_core::{
    Database, DatabaseSchema, Direction, EmbeddingModel, Error, FactId, RelId, TargetedScheme,
    Value, WalkScheme, WalkStep,
};
use serde::{Deserialize, Serialize};

use crate::exit::DataError;

pub const MODEL_FORMAT: &str = "relwalk-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub fk: String,
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub text: String,
    pub steps: Vec<StepEntry>,
    pub target: String,
    pub active: bool,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub key: Vec<String>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub start_relation: String,
    pub schemes: Vec<SchemeEntry>,
    pub embeddings: Vec<EmbeddingEntry>,
}

pub fn steps_to_entries(schema: &DatabaseSchema, scheme: &WalkScheme) -> Vec<StepEntry> {
    scheme
        .steps
        .iter()
        .map(|s| StepEntry {
            fk: schema.fk(s.fk).name.clone(),
            direction: s.direction.as_str().to_string(),
        })
        .collect()
}

pub fn entries_to_scheme(
    schema: &DatabaseSchema,
    start: RelId,
    steps: &[StepEntry],
    target: &str,
) -> Result<TargetedScheme> {
    let mut out = Vec::with_capacity(steps.len());
    for s in steps {
        let fk = schema
            .fk_id(&s.fk)
            .ok_or_else(|| Error::Schema(format!("unknown foreign key `{}`", s.fk)))?;
        let direction = match s.direction.as_str() {
            "forward" => Direction::Forward,
            "backward" => Direction::Backward,
            other => bail!("unknown step direction `{other}`"),
        };
        out.push(WalkStep { fk, direction });
    }
    let scheme = WalkScheme { start, steps: out };
    scheme.validate(schema)?;
    let end = scheme.end_relation(schema);
    let target = schema.attr_index(end, target)?;
    Ok(TargetedScheme { scheme, target })
}

fn key_strings(db: &Database, f: FactId) -> Vec<String> {
    db.key_of(f).iter().map(|v| v.to_string()).collect()
}

/// Resolves a key written by [`key_strings`] back to a fact.
pub fn lookup(db: &Database, rel: RelId, key: &[String]) -> Result<FactId> {
    let schema = db.schema();
    let cols = schema.key_columns(rel);
    if cols.len() != key.len() {
        bail!("key {key:?} has the wrong arity");
    }
    let values: Vec<Value> = cols
        .iter()
        .zip(key)
        .map(|(&c, s)| {
            let kind = schema.relation(rel).attributes[c].kind;
            Value::parse(kind, s).map_err(|e| anyhow::anyhow!(e))
        })
        .collect::<Result<_>>()?;
    db.lookup_key(rel, &values).ok_or_else(|| {
        DataError(format!(
            "no `{}` fact with key {key:?}",
            schema.relation(rel).name
        ))
        .into()
    })
}

pub fn to_file(model: &EmbeddingModel, db: &Database) -> ModelFile {
    let schema = db.schema();
    let k = model.dim();
    ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        dim: k,
        start_relation: schema.relation(model.start()).name.clone(),
        schemes: model
            .schemes()
            .iter()
            .map(|p| SchemeEntry {
                text: p.scheme.render(schema),
                steps: steps_to_entries(schema, &p.scheme.scheme),
                target: p.scheme.target_name(schema).to_string(),
                active: p.active,
                psi: p
                    .psi
                    .as_row_major()
                    .chunks(k)
                    .map(<[f64]>::to_vec)
                    .collect(),
            })
            .collect(),
        embeddings: model
            .embedded()
            .map(|f| EmbeddingEntry {
                key: key_strings(db, f),
                phi: model.phi(f).expect("embedded").to_vec(),
            })
            .collect(),
    }
}

pub fn from_file(file: &ModelFile, db: &Database) -> Result<EmbeddingModel> {
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        bail!(
            "unsupported model file {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
            file.format,
            file.version
        );
    }
    let schema = db.schema();
    let start = schema.relation_id(&file.start_relation)?;
    let mut schemes = Vec::with_capacity(file.schemes.len());
    for s in &file.schemes {
        let tws = entries_to_scheme(schema, start, &s.steps, &s.target)
            .with_context(|| format!("scheme {}", s.text))?;
        let flat: Vec<f64> = s.psi.iter().flatten().copied().collect();
        schemes.push(SchemeParams {
            scheme: tws,
            psi: SymMatrix::from_row_major(file.dim, flat)?,
            active: s.active,
        });
    }
    let mut phi = Vec::with_capacity(file.embeddings.len());
    for e in &file.embeddings {
        phi.push((lookup(db, start, &e.key)?, e.phi.clone()));
    }
    phi.sort_by_key(|(f, _)| *f);
    Ok(EmbeddingModel::from_parts(file.dim, start, phi, schemes)?)
}

pub fn save_model(model: &EmbeddingModel, db: &Database, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&to_file(model, db))?;
    crate::manifest::write_atomic(path, text.as_bytes())
}

pub fn load_model(path: &Path, db: &Database) -> Result<EmbeddingModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    from_file(&file, db)
}

/// Key columns followed by `e0 … e{k-1}`, one row per listed fact.
pub fn write_embeddings_csv(
    model: &EmbeddingModel,
    db: &Database,
    facts: &[FactId],
    path: &Path,
) -> Result<()> {
    let schema = db.schema();
    let rel = schema.relation(model.start());
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<String> = schema
        .key_columns(model.start())
        .iter()
        .map(|&c| rel.attributes[c].name.clone())
        .collect();
    header.extend((0..model.dim()).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for &f in facts {
        let phi = model
            .phi(f)
            .ok_or(Error::UnknownFact(f.0))?;
        let mut row = key_strings(db, f);
        row.extend(phi.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
