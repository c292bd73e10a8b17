//! Random schemas and databases, plus brute-force reference computations
//! that share no code with the library routines they check.

#![allow(dead_code)]

pub mod criteria;

use std::collections::BTreeMap;

use rand::Rng;
use relwalk_core::seed::{rng_for, Rng as SeededRng};
use relwalk_core::{
    AttributeDecl, Database, DatabaseSchema, Direction, DomainKind, FactId, ForeignKey, RelId,
    RelationSchema, TargetedScheme, Value, WalkScheme,
};

pub fn rng(seed: u64) -> SeededRng {
    rng_for(seed, "tests", 0)
}

/// Up to `max_relations` relations `R0, R1, …` keyed by `k`, and up to
/// `max_fks` foreign keys, each from some `Ri` to some `Rj` with `j <= i`
/// through its own column `f<n>`. Every relation also gets one or two
/// payload attributes of random kind.
pub fn random_schema(rng: &mut impl Rng, max_relations: usize, max_fks: usize) -> DatabaseSchema {
    let n_rel = rng.random_range(1..=max_relations);
    let n_fk = rng.random_range(0..=max_fks);
    let mut fk_ends = Vec::new();
    for _ in 0..n_fk {
        let src = rng.random_range(0..n_rel);
        let dst = rng.random_range(0..=src);
        fk_ends.push((src, dst));
    }
    let mut relations = Vec::new();
    for r in 0..n_rel {
        let mut attrs = vec![AttributeDecl::new("k", DomainKind::Categorical, false)];
        for (j, &(src, _)) in fk_ends.iter().enumerate() {
            if src == r {
                attrs.push(AttributeDecl::new(format!("f{j}"), DomainKind::Categorical, false));
            }
        }
        for p in 0..rng.random_range(1..=2) {
            let kind = if rng.random_bool(0.5) {
                DomainKind::Categorical
            } else {
                DomainKind::Numeric
            };
            attrs.push(AttributeDecl::new(format!("a{p}"), kind, rng.random_bool(0.3)));
        }
        relations.push(RelationSchema::new(format!("R{r}"), attrs, vec!["k"]));
    }
    let fks = fk_ends
        .iter()
        .enumerate()
        .map(|(j, &(src, dst))| {
            ForeignKey::new(format!("R{src}"), vec![format!("f{j}")], format!("R{dst}"), vec!["k"])
        })
        .collect();
    DatabaseSchema::new(relations, fks).expect("generated schema is valid")
}

/// Fills a schema from [`random_schema`] with `1..=max_per_relation` facts
/// per relation. Foreign-key values point at random earlier facts (or the
/// fact itself for a self-reference); payload values come from tiny domains
/// so kernels see ties, and nullable payloads are null about a fifth of the
/// time.
pub fn random_database(
    schema: &DatabaseSchema,
    rng: &mut impl Rng,
    max_per_relation: usize,
) -> Database {
    let mut keys: Vec<Vec<String>> = vec![Vec::new(); schema.relations().len()];
    let mut rows = Vec::new();
    for (r, rel) in schema.relations().iter().enumerate() {
        let n = rng.random_range(1..=max_per_relation);
        for i in 0..n {
            let key = format!("r{r}_{i}");
            let mut values = Vec::with_capacity(rel.arity());
            for decl in &rel.attributes {
                let v = if decl.name == "k" {
                    Value::Categorical(key.clone())
                } else if decl.name.starts_with('f') {
                    let fk = schema
                        .foreign_keys()
                        .iter()
                        .find(|fk| fk.src_relation == rel.name && fk.src_attrs[0] == decl.name)
                        .expect("column belongs to a foreign key");
                    let dst: usize = fk.dst_relation[1..].parse().unwrap();
                    if dst == r {
                        let j = rng.random_range(0..=i);
                        Value::Categorical(format!("r{r}_{j}"))
                    } else {
                        let pool = &keys[dst];
                        Value::Categorical(pool[rng.random_range(0..pool.len())].clone())
                    }
                } else if decl.nullable && rng.random_bool(0.2) {
                    Value::Null
                } else {
                    match decl.kind {
                        DomainKind::Numeric => Value::Numeric(rng.random_range(0..4) as f64),
                        _ => Value::Categorical(["x", "y", "z"][rng.random_range(0..3)].to_string()),
                    }
                };
                values.push(v);
            }
            rows.push((RelId(r), values));
            keys[r].push(key);
        }
    }
    Database::from_ordered_rows(schema.clone(), rows).expect("generated data is consistent")
}

/// A step spelled by foreign-key name, with `true` for forward.
pub type NamedStep = (String, bool);

/// Every sequence of `(fk, direction)` of length `0..=l_max` that chains
/// from `start`, found by trying all words over the step alphabet, and
/// sorted by length, then by `(fk name, forward before backward)`.
pub fn brute_force_schemes(schema: &DatabaseSchema, start: &str, l_max: usize) -> Vec<Vec<NamedStep>> {
    let fks = schema.foreign_keys();
    let alphabet: Vec<(usize, bool)> = (0..fks.len())
        .flat_map(|i| [(i, true), (i, false)])
        .collect();
    let mut out = Vec::new();
    for len in 0..=l_max {
        let total = alphabet.len().pow(len as u32);
        for mut code in 0..total {
            let mut word = Vec::with_capacity(len);
            for _ in 0..len {
                word.push(alphabet[code % alphabet.len()]);
                code /= alphabet.len();
            }
            let mut at = start.to_string();
            let mut ok = true;
            for &(i, forward) in &word {
                let fk = &fks[i];
                let (from, to) = if forward {
                    (&fk.src_relation, &fk.dst_relation)
                } else {
                    (&fk.dst_relation, &fk.src_relation)
                };
                if *from != at {
                    ok = false;
                    break;
                }
                at = to.clone();
            }
            if ok {
                out.push(
                    word.iter()
                        .map(|&(i, forward)| (fks[i].name.clone(), forward))
                        .collect::<Vec<_>>(),
                );
            }
        }
        if len == 0 && alphabet.is_empty() {
            break;
        }
    }
    out.sort_by(|a, b| {
        a.len().cmp(&b.len()).then_with(|| {
            let key = |w: &Vec<NamedStep>| -> Vec<(String, u8)> {
                w.iter().map(|(n, f)| (n.clone(), u8::from(!*f))).collect()
            };
            key(a).cmp(&key(b))
        })
    });
    out.dedup();
    out
}

/// End relation of a named walk.
pub fn end_relation_of(schema: &DatabaseSchema, start: &str, word: &[NamedStep]) -> String {
    let mut at = start.to_string();
    for (name, forward) in word {
        let fk = schema.foreign_keys().iter().find(|f| &f.name == name).unwrap();
        at = if *forward {
            fk.dst_relation.clone()
        } else {
            fk.src_relation.clone()
        };
    }
    at
}

/// Brute-force targeted schemes as `(word, attribute name)`.
pub fn brute_force_targeted(
    schema: &DatabaseSchema,
    start: &str,
    l_max: usize,
) -> Vec<(Vec<NamedStep>, String)> {
    let mut out = Vec::new();
    for word in brute_force_schemes(schema, start, l_max) {
        let end = end_relation_of(schema, start, &word);
        let rel = schema.relations().iter().find(|r| r.name == end).unwrap();
        for a in &rel.attributes {
            out.push((word.clone(), a.name.clone()));
        }
    }
    out
}

pub fn named(schema: &DatabaseSchema, scheme: &WalkScheme) -> Vec<NamedStep> {
    scheme
        .steps
        .iter()
        .map(|s| (schema.fk(s.fk).name.clone(), s.direction == Direction::Forward))
        .collect()
}

/// Facts joined to `f` by one step, found by scanning every fact and
/// comparing key and foreign-key columns by name.
fn neighbours(db: &Database, f: FactId, name: &str, forward: bool) -> Vec<FactId> {
    let schema = db.schema();
    let fk = schema.foreign_keys().iter().find(|x| x.name == name).unwrap();
    let col = |rel: &str, attr: &str| -> (RelId, usize) {
        let r = schema.relation_id(rel).unwrap();
        (r, schema.relation(r).attr_index(attr).unwrap())
    };
    let (src_rel, src_col) = col(&fk.src_relation, &fk.src_attrs[0]);
    let (dst_rel, dst_col) = col(&fk.dst_relation, &fk.dst_attrs[0]);
    let fact = &db.facts()[f.0];
    if forward {
        let v = &fact.values[src_col];
        db.facts()
            .iter()
            .filter(|g| g.relation == dst_rel && &g.values[dst_col] == v)
            .map(|g| g.id)
            .collect()
    } else {
        let v = &fact.values[dst_col];
        db.facts()
            .iter()
            .filter(|g| g.relation == src_rel && &g.values[src_col] == v)
            .map(|g| g.id)
            .collect()
    }
}

/// Destination law of a uniform random walk, by enumerating every walk
/// recursively and weighting it by its probability. Mass lost in dead ends
/// is renormalized away; `None` when no walk completes.
pub fn brute_force_dest(db: &Database, f: FactId, word: &[NamedStep]) -> Option<BTreeMap<FactId, f64>> {
    fn go(
        db: &Database,
        at: FactId,
        word: &[NamedStep],
        p: f64,
        out: &mut BTreeMap<FactId, f64>,
    ) {
        match word.split_first() {
            None => *out.entry(at).or_default() += p,
            Some(((name, forward), rest)) => {
                let next = neighbours(db, at, name, *forward);
                for g in &next {
                    go(db, *g, rest, p / next.len() as f64, out);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    go(db, f, word, 1.0, &mut out);
    let total: f64 = out.values().sum();
    if total <= 0.0 {
        return None;
    }
    for v in out.values_mut() {
        *v /= total;
    }
    Some(out)
}

/// Law of `g[A]` for the destination `g`, nulls removed and renormalized.
pub fn brute_force_value_law(
    db: &Database,
    f: FactId,
    word: &[NamedStep],
    attr: usize,
) -> Option<Vec<(Value, f64)>> {
    let dest = brute_force_dest(db, f, word)?;
    let mut law: Vec<(Value, f64)> = Vec::new();
    for (g, p) in dest {
        let v = db.facts()[g.0].values[attr].clone();
        if v.is_null() {
            continue;
        }
        match law.iter_mut().find(|(w, _)| *w == v) {
            Some(e) => e.1 += p,
            None => law.push((v, p)),
        }
    }
    let total: f64 = law.iter().map(|e| e.1).sum();
    if law.is_empty() || total <= 0.0 {
        return None;
    }
    for e in &mut law {
        e.1 /= total;
    }
    Some(law)
}

/// Reference kernel: equality on categories; a Gaussian on numbers with
/// bandwidth the sample standard deviation of the distinct non-null values
/// of the attribute (1 when that is zero or undefined).
pub fn reference_kernel(db: &Database, rel: RelId, attr: usize) -> impl Fn(&Value, &Value) -> f64 {
    let mut distinct: Vec<f64> = Vec::new();
    for fact in db.facts().iter().filter(|f| f.relation == rel) {
        if let Value::Numeric(x) = fact.values[attr] {
            if !distinct.contains(&x) {
                distinct.push(x);
            }
        }
    }
    let n = distinct.len() as f64;
    let sigma = if distinct.len() >= 2 {
        let mean = distinct.iter().sum::<f64>() / n;
        let var = distinct.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    } else {
        1.0
    };
    move |a: &Value, b: &Value| match (a, b) {
        (Value::Numeric(x), Value::Numeric(y)) => (-(x - y).powi(2) / (2.0 * sigma * sigma)).exp(),
        _ => {
            if a == b {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Expected kernel similarity computed from the brute-force value laws.
pub fn brute_force_kd(db: &Database, f: FactId, g: FactId, ts: &TargetedScheme) -> Option<f64> {
    let schema = db.schema();
    let word = named(schema, &ts.scheme);
    let end = ts.scheme.end_relation(schema);
    let kernel = reference_kernel(db, end, ts.target);
    let lf = brute_force_value_law(db, f, &word, ts.target)?;
    let lg = brute_force_value_law(db, g, &word, ts.target)?;
    let mut total = 0.0;
    for (a, pa) in &lf {
        for (b, pb) in &lg {
            total += pa * pb * kernel(a, b);
        }
    }
    Some(total)
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Two-relation database `R(k, a)`, `S(k, r, b)` with `S.r → R.k`. Each
/// `R` fact `i` has `children[i]` children whose `b` cycles through
/// `b_values`.
pub fn parent_child_db(a_values: &[&str], children: &[usize], b_values: &[&str]) -> Database {
    let c = |n: &str| AttributeDecl::new(n, DomainKind::Categorical, false);
    let schema = DatabaseSchema::new(
        vec![
            RelationSchema::new("R", vec![c("k"), c("a")], vec!["k"]),
            RelationSchema::new("S", vec![c("k"), c("r"), c("b")], vec!["k"]),
        ],
        vec![ForeignKey::new("S", vec!["r"], "R", vec!["k"])],
    )
    .unwrap();
    let cat = |s: String| Value::Categorical(s);
    let mut rows = Vec::new();
    for (i, a) in a_values.iter().enumerate() {
        rows.push((RelId(0), vec![cat(format!("r{i}")), cat(a.to_string())]));
    }
    let mut next = 0;
    for (i, &n) in children.iter().enumerate() {
        for j in 0..n {
            let b = b_values[(i + j) % b_values.len()];
            rows.push((
                RelId(1),
                vec![cat(format!("s{next}")), cat(format!("r{i}")), cat(b.to_string())],
            ));
            next += 1;
        }
    }
    Database::from_ordered_rows(schema, rows).unwrap()
}
