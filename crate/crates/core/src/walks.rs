//! Walk schemes, targeted walk schemes and random walks over foreign keys.
//!
//! A walk scheme is a start relation and a sequence of FK hops, each taken
//! forward (source to destination) or backward. Schemes are enumerated in a
//! canonical order: by length, then lexicographically by the `(fk name,
//! direction)` sequence with forward before backward. The position of a
//! targeted scheme in [`enumerate_targeted`]'s output is its canonical rank
//! and breaks ties everywhere else in the crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::relational::{Database, DatabaseSchema, FactId, FkId, RelId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WalkStep {
    pub fk: FkId,
    pub direction: Direction,
}

impl WalkStep {
    /// Relation this step leaves from.
    pub fn from_relation(&self, schema: &DatabaseSchema) -> RelId {
        match self.direction {
            Direction::Forward => schema.fk_source(self.fk),
            Direction::Backward => schema.fk_target(self.fk),
        }
    }

    /// Relation this step arrives at.
    pub fn to_relation(&self, schema: &DatabaseSchema) -> RelId {
        match self.direction {
            Direction::Forward => schema.fk_target(self.fk),
            Direction::Backward => schema.fk_source(self.fk),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WalkScheme {
    pub start: RelId,
    pub steps: Vec<WalkStep>,
}

impl WalkScheme {
    pub fn empty(start: RelId) -> Self {
        WalkScheme {
            start,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `R_0, …, R_ℓ`.
    pub fn relations(&self, schema: &DatabaseSchema) -> Vec<RelId> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(self.start);
        out.extend(self.steps.iter().map(|s| s.to_relation(schema)));
        out
    }

    pub fn end_relation(&self, schema: &DatabaseSchema) -> RelId {
        self.steps
            .last()
            .map_or(self.start, |s| s.to_relation(schema))
    }

    /// Checks that consecutive steps chain through the same relation.
    pub fn validate(&self, schema: &DatabaseSchema) -> Result<()> {
        let mut at = self.start;
        for step in &self.steps {
            if step.fk.0 >= schema.foreign_keys().len() {
                return Err(Error::InvalidArgument(format!("unknown FK {}", step.fk.0)));
            }
            if step.from_relation(schema) != at {
                return Err(Error::InvalidArgument(format!(
                    "step over `{}` does not leave from `{}`",
                    schema.fk(step.fk).name,
                    schema.relation(at).name
                )));
            }
            at = step.to_relation(schema);
        }
        Ok(())
    }

    /// Renders `R0[A0]—[B1]R1[A1]—[B2]R2…`.
    pub fn render(&self, schema: &DatabaseSchema) -> String {
        let mut out = String::from(schema.relation(self.start).name.as_str());
        for step in &self.steps {
            let fk = schema.fk(step.fk);
            let (leave, enter) = match step.direction {
                Direction::Forward => (&fk.src_attrs, &fk.dst_attrs),
                Direction::Backward => (&fk.dst_attrs, &fk.src_attrs),
            };
            out.push_str(&format!(
                "[{}]—[{}]{}",
                leave.join(","),
                enter.join(","),
                schema.relation(step.to_relation(schema)).name
            ));
        }
        out
    }
}

/// A walk scheme with one attribute of its end relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TargetedScheme {
    pub scheme: WalkScheme,
    pub target: usize,
}

impl TargetedScheme {
    pub fn target_name<'s>(&self, schema: &'s DatabaseSchema) -> &'s str {
        &schema
            .relation(self.scheme.end_relation(schema))
            .attributes[self.target]
            .name
    }

    pub fn validate(&self, schema: &DatabaseSchema) -> Result<()> {
        self.scheme.validate(schema)?;
        let end = schema.relation(self.scheme.end_relation(schema));
        if self.target >= end.arity() {
            return Err(Error::UnknownAttribute {
                relation: end.name.clone(),
                attr: format!("#{}", self.target),
            });
        }
        Ok(())
    }

    /// Scheme text and target, e.g. `Country[code]—[country]Member.org`.
    pub fn render(&self, schema: &DatabaseSchema) -> String {
        format!(
            "{}.{}",
            self.scheme.render(schema),
            self.target_name(schema)
        )
    }
}

/// Steps that can leave `rel`, in canonical order.
pub fn steps_from(schema: &DatabaseSchema, rel: RelId) -> Vec<WalkStep> {
    let mut steps = Vec::new();
    for i in 0..schema.foreign_keys().len() {
        let fk = FkId(i);
        if schema.fk_source(fk) == rel {
            steps.push(WalkStep {
                fk,
                direction: Direction::Forward,
            });
        }
        if schema.fk_target(fk) == rel {
            steps.push(WalkStep {
                fk,
                direction: Direction::Backward,
            });
        }
    }
    steps.sort_by(|a, b| {
        schema
            .fk(a.fk)
            .name
            .cmp(&schema.fk(b.fk).name)
            .then(a.direction.cmp(&b.direction))
    });
    steps
}

/// All walk schemes of length `0..=max_len` from `start`, in canonical order.
/// Immediate back-and-forth over one FK is included.
pub fn enumerate_walk_schemes(
    schema: &DatabaseSchema,
    start: &str,
    max_len: usize,
) -> Result<Vec<WalkScheme>> {
    let start = schema.relation_id(start)?;
    let outgoing: Vec<Vec<WalkStep>> = (0..schema.relations().len())
        .map(|r| steps_from(schema, RelId(r)))
        .collect();
    let mut all = vec![WalkScheme::empty(start)];
    let mut frontier = 0;
    for _ in 0..max_len {
        let level_end = all.len();
        for i in frontier..level_end {
            let end = all[i].end_relation(schema);
            for step in &outgoing[end.0] {
                let mut next = all[i].clone();
                next.steps.push(*step);
                all.push(next);
            }
        }
        frontier = level_end;
    }
    Ok(all)
}

/// `TWS(start, max_len)`: every scheme paired with every attribute of its end
/// relation, in scheme order then attribute order.
pub fn enumerate_targeted(
    schema: &DatabaseSchema,
    start: &str,
    max_len: usize,
) -> Result<Vec<TargetedScheme>> {
    let mut out = Vec::new();
    for scheme in enumerate_walk_schemes(schema, start, max_len)? {
        let arity = schema.relation(scheme.end_relation(schema)).arity();
        for target in 0..arity {
            out.push(TargetedScheme {
                scheme: scheme.clone(),
                target,
            });
        }
    }
    Ok(out)
}

/// A concrete walk `(f_0, …, f_ℓ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub facts: Vec<FactId>,
}

impl Walk {
    pub fn destination(&self) -> FactId {
        *self.facts.last().expect("walks are never empty")
    }
}

/// Law of the destination of a random walk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DestDistribution {
    pub support: BTreeMap<FactId, f64>,
}

impl DestDistribution {
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.support.values().sum()
    }

    pub fn prob(&self, f: FactId) -> f64 {
        self.support.get(&f).copied().unwrap_or(0.0)
    }

    /// Drops destinations whose `attr` is null and renormalizes.
    pub fn without_nulls(&self, db: &Database, attr: usize) -> DestDistribution {
        let kept: BTreeMap<FactId, f64> = self
            .support
            .iter()
            .filter(|(g, _)| !db.value(**g, attr).is_null())
            .map(|(g, p)| (*g, *p))
            .collect();
        normalized(kept)
    }
}

fn normalized(mut support: BTreeMap<FactId, f64>) -> DestDistribution {
    let total: f64 = support.values().sum();
    if total <= 0.0 {
        return DestDistribution::default();
    }
    for p in support.values_mut() {
        *p /= total;
    }
    DestDistribution { support }
}

fn check_start(db: &Database, f: FactId, scheme: &WalkScheme) -> Result<()> {
    let fact = db.fact(f)?;
    if fact.relation != scheme.start {
        return Err(Error::RelationMismatch {
            fact: f.0,
            relation: db.schema().relation(scheme.start).name.clone(),
        });
    }
    Ok(())
}

#[inline]
fn take_step<R: Rng + ?Sized>(
    db: &Database,
    at: FactId,
    step: &WalkStep,
    rng: &mut R,
) -> Option<FactId> {
    match step.direction {
        Direction::Forward => db.forward(step.fk, at),
        Direction::Backward => {
            let candidates = db.backward(step.fk, at);
            match candidates.len() {
                0 => None,
                1 => Some(candidates[0]),
                n => Some(candidates[rng.random_range(0..n)]),
            }
        }
    }
}

/// Samples a walk of `scheme` from `f`, each hop uniform among the facts
/// joining the previous one. `Ok(None)` is a dead end.
pub fn sample_walk<R: Rng + ?Sized>(
    db: &Database,
    f: FactId,
    scheme: &WalkScheme,
    rng: &mut R,
) -> Result<Option<Walk>> {
    check_start(db, f, scheme)?;
    let mut facts = Vec::with_capacity(scheme.len() + 1);
    facts.push(f);
    let mut at = f;
    for step in &scheme.steps {
        match take_step(db, at, step, rng) {
            Some(next) => {
                facts.push(next);
                at = next;
            }
            None => return Ok(None),
        }
    }
    Ok(Some(Walk { facts }))
}

/// Like [`sample_walk`] but only returns the destination; does not allocate.
pub fn sample_destination<R: Rng + ?Sized>(
    db: &Database,
    f: FactId,
    scheme: &WalkScheme,
    rng: &mut R,
) -> Result<Option<FactId>> {
    check_start(db, f, scheme)?;
    Ok(walk_destination(db, f, scheme, rng))
}

#[inline]
fn walk_destination<R: Rng + ?Sized>(
    db: &Database,
    f: FactId,
    scheme: &WalkScheme,
    rng: &mut R,
) -> Option<FactId> {
    let mut at = f;
    for step in &scheme.steps {
        at = take_step(db, at, step, rng)?;
    }
    Some(at)
}

/// Exact destination law by propagating probability mass hop by hop. Mass
/// that reaches a dead end is dropped and the rest renormalized; if no walk
/// completes the support is empty.
pub fn exact_dest_distribution(
    db: &Database,
    f: FactId,
    scheme: &WalkScheme,
) -> Result<DestDistribution> {
    check_start(db, f, scheme)?;
    let mut mass: BTreeMap<FactId, f64> = BTreeMap::new();
    mass.insert(f, 1.0);
    for step in &scheme.steps {
        let mut next: BTreeMap<FactId, f64> = BTreeMap::new();
        for (&g, &p) in &mass {
            match step.direction {
                Direction::Forward => {
                    if let Some(h) = db.forward(step.fk, g) {
                        *next.entry(h).or_insert(0.0) += p;
                    }
                }
                Direction::Backward => {
                    let candidates = db.backward(step.fk, g);
                    let share = p / candidates.len() as f64;
                    for &h in candidates {
                        *next.entry(h).or_insert(0.0) += share;
                    }
                }
            }
        }
        mass = next;
    }
    Ok(normalized(mass))
}

/// Samples `g[A]` for the destination `g` of a random walk of `ts` from `f`,
/// ignoring nulls: walks are redrawn until one completes at a non-null `A`,
/// at most `retry_cap` times. `Ok(None)` when the cap is exhausted.
pub fn dest_attr_sample<'db, R: Rng + ?Sized>(
    db: &'db Database,
    f: FactId,
    ts: &TargetedScheme,
    retry_cap: usize,
    rng: &mut R,
) -> Result<Option<&'db Value>> {
    check_start(db, f, &ts.scheme)?;
    let end = ts.scheme.end_relation(db.schema());
    if ts.target >= db.schema().relation(end).arity() {
        return Err(Error::UnknownAttribute {
            relation: db.schema().relation(end).name.clone(),
            attr: format!("#{}", ts.target),
        });
    }
    Ok(attr_sample_unchecked(db, f, ts, retry_cap, rng))
}

/// [`dest_attr_sample`] without argument validation, for hot loops whose
/// inputs were validated once up front.
#[inline]
pub(crate) fn attr_sample_unchecked<'db, R: Rng + ?Sized>(
    db: &'db Database,
    f: FactId,
    ts: &TargetedScheme,
    retry_cap: usize,
    rng: &mut R,
) -> Option<&'db Value> {
    for _ in 0..retry_cap.max(1) {
        if let Some(g) = walk_destination(db, f, &ts.scheme, rng) {
            let v = db.value(g, ts.target);
            if !v.is_null() {
                return Some(v);
            }
        }
    }
    None
}

/// Start facts of `scheme` that have at least one complete walk.
pub fn facts_with_complete_walk(db: &Database, scheme: &WalkScheme) -> Vec<FactId> {
    let schema = db.schema();
    let rels = scheme.relations(schema);
    // alive[k]: facts of R_k from which the remaining hops can complete.
    let mut alive: Vec<bool> = vec![false; db.len()];
    for &g in db.facts_of(*rels.last().unwrap()) {
        alive[g.0] = true;
    }
    for (k, step) in scheme.steps.iter().enumerate().rev() {
        let mut prev = vec![false; db.len()];
        for &g in db.facts_of(rels[k]) {
            prev[g.0] = match step.direction {
                Direction::Forward => db.forward(step.fk, g).is_some_and(|h| alive[h.0]),
                Direction::Backward => db.backward(step.fk, g).iter().any(|h| alive[h.0]),
            };
        }
        alive = prev;
    }
    db.facts_of(scheme.start)
        .iter()
        .copied()
        .filter(|f| alive[f.0])
        .collect()
}
