//! JSON schema descriptors.
//!
//! ```json
//! {
//!   "relations": [
//!     {"name": "Country", "key": ["code"],
//!      "attributes": [{"name": "code", "kind": "categorical"},
//!                     {"name": "area", "kind": "numeric", "nullable": true}]}
//!   ],
//!   "foreign_keys": [
//!     {"src": "City", "src_attrs": ["country"], "dst": "Country", "dst_attrs": ["code"]}
//!   ]
//! }
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use relwalk_core::{AttributeDecl, DatabaseSchema, DomainKind, ForeignKey, RelationSchema};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDescriptor {
    pub name: String,
    pub attributes: Vec<AttributeDescriptor>,
    pub key: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKeyDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub src: String,
    pub src_attrs: Vec<String>,
    pub dst: String,
    pub dst_attrs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub relations: Vec<RelationDescriptor>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeyDescriptor>,
}

impl SchemaDescriptor {
    pub fn to_schema(&self) -> Result<DatabaseSchema> {
        let mut relations = Vec::with_capacity(self.relations.len());
        for r in &self.relations {
            let mut attrs = Vec::with_capacity(r.attributes.len());
            for a in &r.attributes {
                let kind: DomainKind = a
                    .kind
                    .parse()
                    .with_context(|| format!("attribute `{}.{}`", r.name, a.name))?;
                attrs.push(AttributeDecl::new(&a.name, kind, a.nullable));
            }
            relations.push(RelationSchema::new(&r.name, attrs, r.key.clone()));
        }
        let fks = self
            .foreign_keys
            .iter()
            .map(|f| {
                let mut fk = ForeignKey::new(&f.src, f.src_attrs.clone(), &f.dst, f.dst_attrs.clone());
                if let Some(name) = &f.name {
                    fk.name = name.clone();
                }
                fk
            })
            .collect();
        Ok(DatabaseSchema::new(relations, fks)?)
    }

    pub fn from_schema(schema: &DatabaseSchema) -> Self {
        SchemaDescriptor {
            relations: schema
                .relations()
                .iter()
                .map(|r| RelationDescriptor {
                    name: r.name.clone(),
                    attributes: r
                        .attributes
                        .iter()
                        .map(|a| AttributeDescriptor {
                            name: a.name.clone(),
                            kind: a.kind.as_str().to_string(),
                            nullable: a.nullable,
                        })
                        .collect(),
                    key: r.key.clone(),
                })
                .collect(),
            foreign_keys: schema
                .foreign_keys()
                .iter()
                .map(|f| ForeignKeyDescriptor {
                    name: (f.name != f.default_name()).then(|| f.name.clone()),
                    src: f.src_relation.clone(),
                    src_attrs: f.src_attrs.clone(),
                    dst: f.dst_relation.clone(),
                    dst_attrs: f.dst_attrs.clone(),
                })
                .collect(),
        }
    }
}

pub fn read_schema(path: &Path) -> Result<DatabaseSchema> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading schema {}", path.display()))?;
    let desc: SchemaDescriptor = serde_json::from_str(&text)
        .with_context(|| format!("parsing schema {}", path.display()))?;
    desc.to_schema()
}

pub fn write_schema(schema: &DatabaseSchema, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&SchemaDescriptor::from_schema(schema))?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
