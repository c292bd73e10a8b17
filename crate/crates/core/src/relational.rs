//! Relational schemas, foreign keys and databases of facts.
//!
//! A [`Database`] is immutable once built. Every fact gets a [`FactId`] equal
//! to its 0-based position in load order across the whole database; inserting
//! facts appends fresh ids and never renumbers existing ones.
//!
//! For every foreign key the database keeps a traversal index: the single
//! referenced fact of each source fact (forward) and the referencing facts of
//! each destination fact (backward, in id order). Source facts with a null in
//! any FK attribute reference nothing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FkId(pub usize);

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DomainKind {
    Categorical,
    Numeric,
    Text,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Categorical => "categorical",
            DomainKind::Numeric => "numeric",
            DomainKind::Text => "text",
        }
    }
}

impl core::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(DomainKind::Categorical),
            "numeric" => Ok(DomainKind::Numeric),
            "text" => Ok(DomainKind::Text),
            other => Err(Error::Schema(format!("unknown domain kind `{other}`"))),
        }
    }
}

/// A cell value. Numeric values compare with `f64::total_cmp`, so `Value`
/// has a total order and can key ordered maps.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Categorical(String),
    Numeric(f64),
    Text(String),
}

impl Value {
    /// Parses a CSV cell according to the declared domain. The empty cell is
    /// null.
    pub fn parse(kind: DomainKind, cell: &str) -> core::result::Result<Value, String> {
        if cell.is_empty() {
            return Ok(Value::Null);
        }
        match kind {
            DomainKind::Categorical => Ok(Value::Categorical(cell.to_string())),
            DomainKind::Text => Ok(Value::Text(cell.to_string())),
            DomainKind::Numeric => cell
                .trim()
                .parse::<f64>()
                .map(Value::Numeric)
                .map_err(|_| format!("`{cell}` is not a number")),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn kind(&self) -> Option<DomainKind> {
        match self {
            Value::Null => None,
            Value::Categorical(_) => Some(DomainKind::Categorical),
            Value::Numeric(_) => Some(DomainKind::Numeric),
            Value::Text(_) => Some(DomainKind::Text),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Numeric(x) => Some(*x),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Categorical(_) => 1,
            Value::Numeric(_) => 2,
            Value::Text(_) => 3,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Categorical(a), Value::Categorical(b)) | (Value::Text(a), Value::Text(b)) => {
                a.cmp(b)
            }
            (Value::Numeric(a), Value::Numeric(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// Renders the value the way it appears in a CSV cell (null is empty).
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => Ok(()),
            Value::Categorical(s) | Value::Text(s) => f.write_str(s),
            Value::Numeric(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: DomainKind,
    pub nullable: bool,
}

impl AttributeDecl {
    pub fn new(name: impl Into<String>, kind: DomainKind, nullable: bool) -> Self {
        AttributeDecl {
            name: name.into(),
            kind,
            nullable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<AttributeDecl>,
    pub key: Vec<String>,
}

impl RelationSchema {
    pub fn new(
        name: impl Into<String>,
        attributes: Vec<AttributeDecl>,
        key: Vec<impl Into<String>>,
    ) -> Self {
        RelationSchema {
            name: name.into(),
            attributes,
            key: key.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    fn require_attr(&self, name: &str) -> Result<usize> {
        self.attr_index(name).ok_or_else(|| Error::UnknownAttribute {
            relation: self.name.clone(),
            attr: name.to_string(),
        })
    }
}

/// An inclusion dependency `src[src_attrs] ⊆ dst[dst_attrs]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    /// Display name; also the primary sort key of walk steps. Defaults to
    /// `src[a,..]->dst[b,..]` when left empty.
    pub name: String,
    pub src_relation: String,
    pub src_attrs: Vec<String>,
    pub dst_relation: String,
    pub dst_attrs: Vec<String>,
}

impl ForeignKey {
    pub fn new(
        src_relation: impl Into<String>,
        src_attrs: Vec<impl Into<String>>,
        dst_relation: impl Into<String>,
        dst_attrs: Vec<impl Into<String>>,
    ) -> Self {
        let mut fk = ForeignKey {
            name: String::new(),
            src_relation: src_relation.into(),
            src_attrs: src_attrs.into_iter().map(Into::into).collect(),
            dst_relation: dst_relation.into(),
            dst_attrs: dst_attrs.into_iter().map(Into::into).collect(),
        };
        fk.name = fk.default_name();
        fk
    }

    pub fn default_name(&self) -> String {
        format!(
            "{}[{}]->{}[{}]",
            self.src_relation,
            self.src_attrs.join(","),
            self.dst_relation,
            self.dst_attrs.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ResolvedFk {
    src: RelId,
    dst: RelId,
    src_cols: Vec<usize>,
    dst_cols: Vec<usize>,
    /// Source columns permuted into the order of `key(dst)`.
    src_cols_key_order: Vec<usize>,
}

/// A validated database schema. Relations keep their declaration order,
/// which fixes [`RelId`]s and the load order of facts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseSchema {
    relations: Vec<RelationSchema>,
    foreign_keys: Vec<ForeignKey>,
    key_cols: Vec<Vec<usize>>,
    resolved: Vec<ResolvedFk>,
}

impl DatabaseSchema {
    pub fn new(relations: Vec<RelationSchema>, foreign_keys: Vec<ForeignKey>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut key_cols = Vec::with_capacity(relations.len());
        for rel in &relations {
            if !seen.insert(rel.name.as_str()) {
                return Err(Error::Schema(format!("duplicate relation `{}`", rel.name)));
            }
            let mut names = BTreeSet::new();
            for a in &rel.attributes {
                if !names.insert(a.name.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate attribute `{}` in `{}`",
                        a.name, rel.name
                    )));
                }
            }
            if rel.key.is_empty() {
                return Err(Error::Schema(format!("relation `{}` has an empty key", rel.name)));
            }
            let mut cols = Vec::with_capacity(rel.key.len());
            for k in &rel.key {
                let c = rel.require_attr(k)?;
                if cols.contains(&c) {
                    return Err(Error::Schema(format!(
                        "key attribute `{k}` repeated in `{}`",
                        rel.name
                    )));
                }
                cols.push(c);
            }
            key_cols.push(cols);
        }

        let rel_id = |name: &str| {
            relations
                .iter()
                .position(|r| r.name == name)
                .map(RelId)
                .ok_or_else(|| Error::UnknownRelation(name.to_string()))
        };

        let mut fk_names = BTreeSet::new();
        let mut foreign_keys = foreign_keys;
        let mut resolved = Vec::with_capacity(foreign_keys.len());
        for fk in &mut foreign_keys {
            if fk.name.is_empty() {
                fk.name = fk.default_name();
            }
            if !fk_names.insert(fk.name.clone()) {
                return Err(Error::Schema(format!("duplicate foreign key name `{}`", fk.name)));
            }
            let src = rel_id(&fk.src_relation)?;
            let dst = rel_id(&fk.dst_relation)?;
            let src_rel = &relations[src.0];
            let dst_rel = &relations[dst.0];
            if fk.src_attrs.is_empty() || fk.src_attrs.len() != fk.dst_attrs.len() {
                return Err(Error::Schema(format!(
                    "foreign key `{}` needs equally many (≥1) source and destination attributes",
                    fk.name
                )));
            }
            let src_cols = fk
                .src_attrs
                .iter()
                .map(|a| src_rel.require_attr(a))
                .collect::<Result<Vec<_>>>()?;
            let dst_cols = fk
                .dst_attrs
                .iter()
                .map(|a| dst_rel.require_attr(a))
                .collect::<Result<Vec<_>>>()?;
            let dst_set: BTreeSet<usize> = dst_cols.iter().copied().collect();
            let key_set: BTreeSet<usize> = key_cols[dst.0].iter().copied().collect();
            if dst_set != key_set || dst_set.len() != dst_cols.len() {
                return Err(Error::FkNotKey(fk.name.clone()));
            }
            let distinct_src: BTreeSet<usize> = src_cols.iter().copied().collect();
            if distinct_src.len() != src_cols.len() {
                return Err(Error::Schema(format!(
                    "foreign key `{}` repeats a source attribute",
                    fk.name
                )));
            }
            for (&s, &d) in src_cols.iter().zip(&dst_cols) {
                if src_rel.attributes[s].kind != dst_rel.attributes[d].kind {
                    return Err(Error::Schema(format!(
                        "foreign key `{}` joins `{}` ({}) with `{}` ({})",
                        fk.name,
                        src_rel.attributes[s].name,
                        src_rel.attributes[s].kind.as_str(),
                        dst_rel.attributes[d].name,
                        dst_rel.attributes[d].kind.as_str()
                    )));
                }
            }
            let src_cols_key_order = key_cols[dst.0]
                .iter()
                .map(|kc| src_cols[dst_cols.iter().position(|d| d == kc).unwrap()])
                .collect();
            resolved.push(ResolvedFk {
                src,
                dst,
                src_cols,
                dst_cols,
                src_cols_key_order,
            });
        }

        Ok(DatabaseSchema {
            relations,
            foreign_keys,
            key_cols,
            resolved,
        })
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn foreign_keys(&self) -> &[ForeignKey] {
        &self.foreign_keys
    }

    pub fn relation(&self, id: RelId) -> &RelationSchema {
        &self.relations[id.0]
    }

    pub fn relation_id(&self, name: &str) -> Result<RelId> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(RelId)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn attr_index(&self, rel: RelId, name: &str) -> Result<usize> {
        self.relation(rel).require_attr(name)
    }

    pub fn fk(&self, id: FkId) -> &ForeignKey {
        &self.foreign_keys[id.0]
    }

    pub fn fk_id(&self, name: &str) -> Option<FkId> {
        self.foreign_keys.iter().position(|f| f.name == name).map(FkId)
    }

    pub fn fk_source(&self, id: FkId) -> RelId {
        self.resolved[id.0].src
    }

    pub fn fk_target(&self, id: FkId) -> RelId {
        self.resolved[id.0].dst
    }

    pub fn key_columns(&self, rel: RelId) -> &[usize] {
        &self.key_cols[rel.0]
    }

    /// Whether `attr` of `rel` is part of the key or of any foreign key.
    pub fn is_structural(&self, rel: RelId, attr: usize) -> bool {
        self.key_cols[rel.0].contains(&attr)
            || self.resolved.iter().any(|fk| {
                (fk.src == rel && fk.src_cols.contains(&attr))
                    || (fk.dst == rel && fk.dst_cols.contains(&attr))
            })
    }

    /// The schema with one non-structural attribute removed.
    pub fn without_attribute(&self, rel: RelId, attr: usize) -> Result<DatabaseSchema> {
        if self.is_structural(rel, attr) {
            return Err(Error::InvalidArgument(format!(
                "`{}.{}` is part of a key or foreign key and cannot be removed",
                self.relation(rel).name,
                self.relation(rel).attributes[attr].name
            )));
        }
        let mut relations = self.relations.clone();
        relations[rel.0].attributes.remove(attr);
        DatabaseSchema::new(relations, self.foreign_keys.clone())
    }
}

/// One tuple of a relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub relation: RelId,
    pub id: FactId,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct FkIndex {
    /// Indexed by the position of the source fact within its relation.
    forward: Vec<Option<FactId>>,
    /// Indexed by the position of the destination fact within its relation.
    backward: Vec<Vec<FactId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    schema: DatabaseSchema,
    facts: Vec<Fact>,
    by_relation: Vec<Vec<FactId>>,
    position: Vec<usize>,
    keys: Vec<BTreeMap<Vec<Value>, FactId>>,
    fk_index: Vec<FkIndex>,
}

fn render_key(key: &[Value]) -> String {
    let parts: Vec<String> = key.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

impl Database {
    /// Builds a database from rows given relation by relation. `rows[i]`
    /// holds the rows of the `i`-th declared relation.
    pub fn from_relation_rows(schema: DatabaseSchema, rows: Vec<Vec<Vec<Value>>>) -> Result<Self> {
        if rows.len() != schema.relations.len() {
            return Err(Error::InvalidArgument(format!(
                "expected rows for {} relations, got {}",
                schema.relations.len(),
                rows.len()
            )));
        }
        let ordered = rows
            .into_iter()
            .enumerate()
            .flat_map(|(r, rs)| rs.into_iter().map(move |v| (RelId(r), v)));
        Database::from_ordered_rows(schema, ordered)
    }

    /// Builds a database whose fact ids follow the iteration order of `rows`.
    pub fn from_ordered_rows(
        schema: DatabaseSchema,
        rows: impl IntoIterator<Item = (RelId, Vec<Value>)>,
    ) -> Result<Self> {
        let n_rel = schema.relations.len();
        let n_fk = schema.foreign_keys.len();
        let mut db = Database {
            schema,
            facts: Vec::new(),
            by_relation: vec![Vec::new(); n_rel],
            position: Vec::new(),
            keys: vec![BTreeMap::new(); n_rel],
            fk_index: vec![FkIndex::default(); n_fk],
        };
        for (rel, values) in rows {
            db.push_fact(rel, values)?;
        }
        db.link(0)?;
        Ok(db)
    }

    /// Returns a new database with `rows` appended. Old facts keep their ids;
    /// new facts receive fresh ids in the given order. The batch is checked
    /// against old and new facts together and rejected as a whole on any
    /// violation.
    pub fn insert_facts(&self, rows: Vec<(RelId, Vec<Value>)>) -> Result<Database> {
        let mut db = self.clone();
        let first_new = db.facts.len();
        for (rel, values) in rows {
            db.push_fact(rel, values)?;
        }
        db.link(first_new)?;
        Ok(db)
    }

    fn push_fact(&mut self, rel: RelId, values: Vec<Value>) -> Result<FactId> {
        let schema = self
            .schema
            .relations
            .get(rel.0)
            .ok_or_else(|| Error::UnknownRelation(format!("{}", rel.0)))?;
        if values.len() != schema.arity() {
            return Err(Error::Arity {
                relation: schema.name.clone(),
                expected: schema.arity(),
                found: values.len(),
            });
        }
        let key_cols = &self.schema.key_cols[rel.0];
        for (i, (v, decl)) in values.iter().zip(&schema.attributes).enumerate() {
            match v.kind() {
                None if !decl.nullable || key_cols.contains(&i) => {
                    return Err(Error::NullViolation {
                        relation: schema.name.clone(),
                        attr: decl.name.clone(),
                    })
                }
                Some(k) if k != decl.kind => {
                    return Err(Error::TypeMismatch {
                        relation: schema.name.clone(),
                        attr: decl.name.clone(),
                        kind: decl.kind.as_str().to_string(),
                        value: v.to_string(),
                    })
                }
                _ => {}
            }
        }
        let key: Vec<Value> = key_cols.iter().map(|&c| values[c].clone()).collect();
        let id = FactId(self.facts.len());
        if self.keys[rel.0].contains_key(&key) {
            return Err(Error::DuplicateKey {
                relation: schema.name.clone(),
                key: render_key(&key),
            });
        }
        self.keys[rel.0].insert(key, id);
        self.position.push(self.by_relation[rel.0].len());
        self.by_relation[rel.0].push(id);
        self.facts.push(Fact {
            relation: rel,
            id,
            values,
        });
        Ok(id)
    }

    /// Resolves the outgoing references of every fact with id ≥ `from`.
    fn link(&mut self, from: usize) -> Result<()> {
        for (fk_idx, rfk) in self.schema.resolved.iter().enumerate() {
            let index = &mut self.fk_index[fk_idx];
            index.forward.resize(self.by_relation[rfk.src.0].len(), None);
            index
                .backward
                .resize(self.by_relation[rfk.dst.0].len(), Vec::new());
            for fact in &self.facts[from..] {
                if fact.relation != rfk.src {
                    continue;
                }
                let key: Vec<Value> = rfk
                    .src_cols_key_order
                    .iter()
                    .map(|&c| fact.values[c].clone())
                    .collect();
                if key.iter().any(Value::is_null) {
                    continue;
                }
                let target = *self.keys[rfk.dst.0].get(&key).ok_or_else(|| {
                    Error::DanglingReference {
                        fk: self.schema.foreign_keys[fk_idx].name.clone(),
                        key: render_key(&key),
                    }
                })?;
                index.forward[self.position[fact.id.0]] = Some(target);
                index.backward[self.position[target.0]].push(fact.id);
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &DatabaseSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> Result<&Fact> {
        self.facts.get(id.0).ok_or(Error::UnknownFact(id.0))
    }

    /// Facts of one relation in id order.
    pub fn facts_of(&self, rel: RelId) -> &[FactId] {
        &self.by_relation[rel.0]
    }

    pub fn value(&self, id: FactId, attr: usize) -> &Value {
        &self.facts[id.0].values[attr]
    }

    pub fn key_of(&self, id: FactId) -> Vec<Value> {
        let fact = &self.facts[id.0];
        self.schema.key_cols[fact.relation.0]
            .iter()
            .map(|&c| fact.values[c].clone())
            .collect()
    }

    /// Looks a fact up by its key tuple (in key order).
    pub fn lookup_key(&self, rel: RelId, key: &[Value]) -> Option<FactId> {
        self.keys.get(rel.0)?.get(key).copied()
    }

    /// The fact referenced by `src` under `fk`, if any.
    #[inline]
    pub fn forward(&self, fk: FkId, src: FactId) -> Option<FactId> {
        self.fk_index[fk.0].forward[self.position[src.0]]
    }

    /// The facts referencing `dst` under `fk`, in id order.
    #[inline]
    pub fn backward(&self, fk: FkId, dst: FactId) -> &[FactId] {
        &self.fk_index[fk.0].backward[self.position[dst.0]]
    }

    /// `{ f[A] : f ∈ R(D) }` without nulls.
    pub fn active_domain(&self, rel: &str, attr: &str) -> Result<BTreeSet<Value>> {
        let r = self.schema.relation_id(rel)?;
        let a = self.schema.attr_index(r, attr)?;
        Ok(self.active_domain_of(r, a))
    }

    pub fn active_domain_of(&self, rel: RelId, attr: usize) -> BTreeSet<Value> {
        self.by_relation[rel.0]
            .iter()
            .map(|&f| &self.facts[f.0].values[attr])
            .filter(|v| !v.is_null())
            .cloned()
            .collect()
    }

    /// The rows of the given facts, in id order, ready for
    /// [`Database::insert_facts`].
    pub fn rows_of(&self, ids: &[FactId]) -> Vec<(RelId, Vec<Value>)> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|id| {
                let f = &self.facts[id.0];
                (f.relation, f.values.clone())
            })
            .collect()
    }

    /// The sub-database of facts with `keep[id] == true`, renumbered densely
    /// while preserving relative order. Fails if a kept fact references a
    /// dropped one.
    pub fn subset(&self, keep: &[bool]) -> Result<Database> {
        if keep.len() != self.facts.len() {
            return Err(Error::InvalidArgument(format!(
                "keep mask has {} entries for {} facts",
                keep.len(),
                self.facts.len()
            )));
        }
        let rows = self
            .facts
            .iter()
            .filter(|f| keep[f.id.0])
            .map(|f| (f.relation, f.values.clone()));
        Database::from_ordered_rows(self.schema.clone(), rows)
    }

    /// Facts that reference any fact of `seeds`, directly or transitively,
    /// plus the seeds themselves. Removing this set keeps integrity.
    pub fn referencing_closure(&self, seeds: &[FactId]) -> BTreeSet<FactId> {
        let mut out: BTreeSet<FactId> = seeds.iter().copied().collect();
        let mut stack: Vec<FactId> = seeds.to_vec();
        while let Some(f) = stack.pop() {
            for (fk_idx, rfk) in self.schema.resolved.iter().enumerate() {
                if rfk.dst != self.facts[f.0].relation {
                    continue;
                }
                for &g in self.backward(FkId(fk_idx), f) {
                    if out.insert(g) {
                        stack.push(g);
                    }
                }
            }
        }
        out
    }

    /// Drops one attribute column and returns it alongside the new database.
    /// Fact ids are unchanged.
    pub fn without_attribute(&self, rel: RelId, attr: usize) -> Result<(Database, Vec<Value>)> {
        let schema = self.schema.without_attribute(rel, attr)?;
        let column: Vec<Value> = self.by_relation[rel.0]
            .iter()
            .map(|&f| self.facts[f.0].values[attr].clone())
            .collect();
        let rows = self.facts.iter().map(|f| {
            let mut values = f.values.clone();
            if f.relation == rel {
                values.remove(attr);
            }
            (f.relation, values)
        });
        Ok((Database::from_ordered_rows(schema, rows)?, column))
    }
}
