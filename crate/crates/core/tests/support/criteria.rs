//! Checks that back the acceptance suite. Each returns whether it held and
//! a one-line summary of what was measured.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use relwalk_core::extension::{extend_embedding, ExtensionConfig, PartnerMode, TargetMode};
use relwalk_core::linalg::ridge_solve;
use relwalk_core::selection::{
    mi_per_step, online_elimination_train, score_kvar_exact, score_length, OnlineConfig,
};
use relwalk_core::trainer::{loss_and_gradients, train, NoClock, SchemeParams, SymMatrix, TrainingSample};
use relwalk_core::walks::{
    enumerate_targeted, enumerate_walk_schemes, exact_dest_distribution, sample_destination,
};
use relwalk_core::{
    kd_exact, kd_mc, Database, EmbeddingModel, FactId, Kernels, RelId, TargetedScheme,
    TrainConfig, Value, WalkScheme,
};

use super::*;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

fn random_start(rng: &mut impl Rng, db: &Database) -> String {
    let rels = db.schema().relations();
    rels[rng.random_range(0..rels.len())].name.clone()
}

/// Enumeration against the brute-force word generator on 50 random schemas.
pub fn enumeration_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = rng(1);
    let mut mismatches = 0;
    let mut total_schemes = 0;
    for _ in 0..50 {
        let schema = random_schema(&mut rng, 5, 6);
        let rels = schema.relations();
        let start = rels[rng.random_range(0..rels.len())].name.clone();
        let l_max = rng.random_range(0..=3);
        let got: Vec<Vec<NamedStep>> = enumerate_walk_schemes(&schema, &start, l_max)
            .unwrap()
            .iter()
            .map(|s| named(&schema, s))
            .collect();
        let want = brute_force_schemes(&schema, &start, l_max);
        let got_t: Vec<(Vec<NamedStep>, String)> = enumerate_targeted(&schema, &start, l_max)
            .unwrap()
            .iter()
            .map(|t| (named(&schema, &t.scheme), t.target_name(&schema).to_string()))
            .collect();
        let want_t = brute_force_targeted(&schema, &start, l_max);
        total_schemes += want_t.len();
        if got != want || got_t != want_t {
            mismatches += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome::new(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} of 50 schemas differ, {total_schemes} targeted schemes, {secs:.2}s"),
    )
}

/// Empirical destination frequencies against the exact law, and the exact
/// law against recursive walk enumeration.
pub fn walk_distribution_oracle() -> Outcome {
    const SAMPLES: usize = 100_000;
    let mut rng = rng(2);
    let mut worst_tv: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let schema = random_schema(&mut rng, 4, 4);
        let per_rel = (50 / schema.relations().len()).min(12);
        let db = random_database(&schema, &mut rng, per_rel);
        let start = random_start(&mut rng, &db);
        let rel = db.schema().relation_id(&start).unwrap();
        let facts = db.facts_of(rel);
        for scheme in enumerate_walk_schemes(db.schema(), &start, 2).unwrap() {
            let word = named(db.schema(), &scheme);
            let sampled = facts[rng.random_range(0..facts.len())];
            for &f in facts {
                let exact = exact_dest_distribution(&db, f, &scheme).unwrap();
                let brute = brute_force_dest(&db, f, &word);
                match &brute {
                    None => {
                        if !exact.is_empty() {
                            worst_exact = f64::INFINITY;
                        }
                        continue;
                    }
                    Some(b) => {
                        let keys: std::collections::BTreeSet<FactId> =
                            b.keys().chain(exact.support.keys()).copied().collect();
                        for g in keys {
                            let d = (b.get(&g).copied().unwrap_or(0.0) - exact.prob(g)).abs();
                            worst_exact = worst_exact.max(d);
                        }
                    }
                }
                if f != sampled || exact.is_empty() {
                    continue;
                }
                let mut counts: BTreeMap<FactId, usize> = BTreeMap::new();
                let mut done = 0;
                let mut attempts = 0;
                while done < SAMPLES && attempts < 100 * SAMPLES {
                    attempts += 1;
                    if let Some(g) = sample_destination(&db, f, &scheme, &mut rng).unwrap() {
                        *counts.entry(g).or_default() += 1;
                        done += 1;
                    }
                }
                let keys: std::collections::BTreeSet<FactId> =
                    counts.keys().chain(exact.support.keys()).copied().collect();
                let tv = 0.5
                    * keys
                        .iter()
                        .map(|g| {
                            let emp = counts.get(g).copied().unwrap_or(0) as f64 / done as f64;
                            (emp - exact.prob(*g)).abs()
                        })
                        .sum::<f64>();
                worst_tv = worst_tv.max(tv);
                cases += 1;
            }
        }
    }
    Outcome::new(
        worst_tv < 0.02 && worst_exact < 1e-12,
        format!(
            "{cases} (fact, scheme) cases, max TV {worst_tv:.5}, max |exact - enumerated| {worst_exact:.1e}"
        ),
    )
}

/// A random database, start relation and targeted scheme with a pair of
/// start facts for which the expected kernel similarity is defined.
fn random_kd_case(
    rng: &mut impl Rng,
) -> Option<(Database, FactId, FactId, TargetedScheme)> {
    let schema = random_schema(rng, 4, 4);
    let per_rel = (50 / schema.relations().len()).min(12);
    let db = random_database(&schema, rng, per_rel);
    let start = random_start(rng, &db);
    let schemes = enumerate_targeted(db.schema(), &start, 2).unwrap();
    let ts = schemes[rng.random_range(0..schemes.len())].clone();
    let facts = db.facts_of(ts.scheme.start);
    let f = facts[rng.random_range(0..facts.len())];
    let g = facts[rng.random_range(0..facts.len())];
    let kernels = Kernels::defaults(&db);
    kd_exact(&db, f, g, &ts, kernels.for_target(&db, &ts)).ok()?;
    Some((db, f, g, ts))
}

/// Monte Carlo similarity against the exact value, plus symmetry, range and
/// agreement with the brute-force similarity on fuzzed instances.
pub fn kernel_oracle() -> Outcome {
    let mut rng = rng(3);
    let mut within = 0;
    let mut trials = 0;
    while trials < 100 {
        let Some((db, f, g, ts)) = random_kd_case(&mut rng) else { continue };
        trials += 1;
        let kernels = Kernels::defaults(&db);
        let kernel = kernels.for_target(&db, &ts);
        let exact = kd_exact(&db, f, g, &ts, kernel).unwrap();
        let est = kd_mc(&db, f, g, &ts, kernel, 10_000, 200, &mut rng).unwrap();
        // The slack only matters when every sample agrees and the standard
        // error is zero; it absorbs summation rounding in the exact value.
        if (est.value - exact).abs() <= 3.0 * est.stderr + 1e-12 {
            within += 1;
        }
    }
    let mut fuzzed = 0;
    let mut bad_symmetry: f64 = 0.0;
    let mut bad_range = 0;
    let mut bad_oracle: f64 = 0.0;
    while fuzzed < 300 {
        let Some((db, f, g, ts)) = random_kd_case(&mut rng) else { continue };
        fuzzed += 1;
        let kernels = Kernels::defaults(&db);
        let kernel = kernels.for_target(&db, &ts);
        let a = kd_exact(&db, f, g, &ts, kernel).unwrap();
        let b = kd_exact(&db, g, f, &ts, kernel).unwrap();
        bad_symmetry = bad_symmetry.max((a - b).abs());
        if !(-1e-12..=1.0 + 1e-12).contains(&a) {
            bad_range += 1;
        }
        let want = brute_force_kd(&db, f, g, &ts).unwrap();
        bad_oracle = bad_oracle.max((a - want).abs());
    }
    Outcome::new(
        within >= 99 && bad_symmetry < 1e-12 && bad_range == 0 && bad_oracle < 1e-9,
        format!(
            "{within}/100 within 3 stderr; fuzz: asymmetry {bad_symmetry:.1e}, {bad_range} out of range, max |exact - brute force| {bad_oracle:.1e}"
        ),
    )
}

fn bilinear_loss(pf: &[f64], pg: &[f64], psi: &[f64], kappa: f64) -> f64 {
    let k = pf.len();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            s += pf[i] * psi[i * k + j] * pg[j];
        }
    }
    0.5 * (s - kappa) * (s - kappa)
}

/// Analytic gradients against central differences of an independently
/// written loss, with `ψ` perturbed entry by entry as a free matrix.
pub fn gradient_check() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=8);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let pf = draw(k);
        let pg = draw(k);
        let raw = draw(k * k);
        let mut psi = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                psi[i * k + j] = 0.5 * (raw[i * k + j] + raw[j * k + i]);
            }
        }
        let kappa = draw(1)[0].abs();
        let model = EmbeddingModel::from_parts(
            k,
            RelId(0),
            vec![(FactId(0), pf.clone()), (FactId(1), pg.clone())],
            vec![SchemeParams {
                scheme: TargetedScheme {
                    scheme: WalkScheme::empty(RelId(0)),
                    target: 0,
                },
                psi: SymMatrix::from_row_major(k, psi.clone()).unwrap(),
                active: true,
            }],
        )
        .unwrap();
        let sample = TrainingSample {
            f: FactId(0),
            partner: FactId(1),
            scheme: 0,
        };
        let (_, grads) = loss_and_gradients(&model, &sample, kappa).unwrap();
        let mut analytic = grads.phi_f.clone();
        analytic.extend(&grads.phi_partner);
        analytic.extend(&grads.psi);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..k {
            let (mut a, mut b) = (pf.clone(), pf.clone());
            a[i] += H;
            b[i] -= H;
            numeric.push((bilinear_loss(&a, &pg, &psi, kappa) - bilinear_loss(&b, &pg, &psi, kappa)) / (2.0 * H));
        }
        for i in 0..k {
            let (mut a, mut b) = (pg.clone(), pg.clone());
            a[i] += H;
            b[i] -= H;
            numeric.push((bilinear_loss(&pf, &a, &psi, kappa) - bilinear_loss(&pf, &b, &psi, kappa)) / (2.0 * H));
        }
        for i in 0..k * k {
            let (mut a, mut b) = (psi.clone(), psi.clone());
            a[i] += H;
            b[i] -= H;
            numeric.push((bilinear_loss(&pf, &pg, &a, kappa) - bilinear_loss(&pf, &pg, &b, kappa)) / (2.0 * H));
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm_a = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if norm_a.max(norm_n) == 0.0 { 0.0 } else { diff / norm_a.max(norm_n) };
        worst = worst.max(rel);
    }
    Outcome::new(worst < 1e-6, format!("max relative error {worst:.2e} over 100 configurations"))
}

/// Eight start facts with informative attributes one hop away.
pub fn fidelity_db() -> Database {
    parent_child_db(
        &["p", "q", "p", "q", "p", "q", "p", "q"],
        &[1, 2, 3, 4, 2, 3, 1, 4],
        &["u", "v", "w", "u", "v"],
    )
}

/// Root mean squared error between the model's bilinear forms and exact
/// similarities over every ordered pair of distinct start facts and every
/// scheme.
pub fn fit_rmse(db: &Database, model: &EmbeddingModel, schemes: &[TargetedScheme]) -> f64 {
    let kernels = Kernels::defaults(db);
    let facts = db.facts_of(model.start());
    let (mut se, mut n) = (0.0, 0usize);
    for (idx, ts) in schemes.iter().enumerate() {
        for &f in facts {
            for &g in facts {
                if f == g {
                    continue;
                }
                if let Ok(kd) = kd_exact(db, f, g, ts, kernels.for_target(db, ts)) {
                    let e = model.bilinear(f, g, idx).unwrap() - kd;
                    se += e * e;
                    n += 1;
                }
            }
        }
    }
    (se / n as f64).sqrt()
}

pub fn fidelity_config() -> TrainConfig {
    TrainConfig {
        dim: 16,
        n_samples: 10,
        epochs: 200,
        learning_rate: 0.05,
        seed: 5,
        retry_cap: 20,
    }
}

/// 200 epochs on eight start facts fit the exact similarity matrix.
pub fn training_fidelity() -> Outcome {
    let db = fidelity_db();
    let schemes = enumerate_targeted(db.schema(), "R", 1).unwrap();
    let kernels = Kernels::defaults(&db);
    let (model, stats) =
        train(&db, &kernels, &schemes, fidelity_config(), &NoClock, &mut |_, _| {}).unwrap();
    let rmse = fit_rmse(&db, &model, &schemes);
    let first = stats[0].mean_loss.unwrap();
    let last = stats.last().unwrap().mean_loss.unwrap();
    Outcome::new(
        rmse < 0.1 && last < 0.5 * first,
        format!(
            "{} start facts, {} schemes: RMSE {rmse:.4}, mean loss {first:.4} -> {last:.4}",
            db.facts_of(RelId(0)).len(),
            schemes.len()
        ),
    )
}

/// Exhaustive kernel variance, the mutual-information estimator and the
/// length score against their reference values.
pub fn strategy_oracles() -> Outcome {
    let mut rng = rng(6);
    let mut worst_kvar: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..10 {
        let schema = random_schema(&mut rng, 3, 3);
        let per_rel = (40 / schema.relations().len()).min(10);
        let db = random_database(&schema, &mut rng, per_rel);
        let start = random_start(&mut rng, &db);
        let schemes = enumerate_targeted(db.schema(), &start, 2).unwrap();
        let kernels = Kernels::defaults(&db);
        let scores = score_kvar_exact(&db, &schemes, &kernels).unwrap();
        let facts = db.facts_of(schemes[0].scheme.start).to_vec();
        for (ts, s) in schemes.iter().zip(&scores) {
            let mut values = Vec::new();
            for (i, &f) in facts.iter().enumerate() {
                for &g in &facts[i + 1..] {
                    if let Some(v) = brute_force_kd(&db, f, g, ts) {
                        values.push(v);
                    }
                }
            }
            if values.len() >= 2 {
                worst_kvar = worst_kvar.max((s.score - variance(&values)).abs());
                compared += 1;
            }
        }
    }

    let mut worst_ln: f64 = 0.0;
    for n in 2..=5 {
        let db = parent_child_db(&vec!["a"; n], &vec![1; n], &["b"]);
        let scheme = enumerate_walk_schemes(db.schema(), "R", 1).unwrap()[1].clone();
        let (mi, _) = mi_per_step(&db, &scheme, 10_000, 7, 0).unwrap().unwrap();
        worst_ln = worst_ln.max((mi[0] - (n as f64).ln()).abs());
    }
    let hub = hub_db(5, 7);
    let scheme = enumerate_walk_schemes(hub.schema(), "A", 2)
        .unwrap()
        .into_iter()
        .find(|s| s.len() == 2 && s.end_relation(hub.schema()) == hub.schema().relation_id("B").unwrap())
        .unwrap();
    let (mi_indep, _) = mi_per_step(&hub, &scheme, 10_000, 8, 0).unwrap().unwrap();

    let db = parent_child_db(&["a", "b"], &[2, 1], &["x"]);
    let three = enumerate_targeted(db.schema(), "R", 3)
        .unwrap()
        .into_iter()
        .filter(|t| t.scheme.len() == 3)
        .collect::<Vec<_>>();
    let length = score_length(&three).unwrap();
    let third_ok = length.iter().all(|s| s.score == 1.0 / 3.0);

    Outcome::new(
        worst_kvar < 1e-9 && compared > 0 && worst_ln < 0.05 && mi_indep[1] < 0.05 && third_ok,
        format!(
            "KVar max error {worst_kvar:.1e} over {compared} schemes; MI max |I - ln n| {worst_ln:.4}, independent step {:.4}; length-3 score 1/3: {third_ok}",
            mi_indep[1]
        ),
    )
}

/// `A(k, h)` and `B(k, h)` both referencing a single hub `H(k)`; from an `A`
/// fact, the walk `A → H → B` ends at a uniform `B` fact whatever the start.
pub fn hub_db(n_a: usize, n_b: usize) -> Database {
    use relwalk_core::{AttributeDecl, DatabaseSchema, DomainKind, ForeignKey, RelationSchema};
    let c = |n: &str| AttributeDecl::new(n, DomainKind::Categorical, false);
    let schema = DatabaseSchema::new(
        vec![
            RelationSchema::new("H", vec![c("k")], vec!["k"]),
            RelationSchema::new("A", vec![c("k"), c("h")], vec!["k"]),
            RelationSchema::new("B", vec![c("k"), c("h")], vec!["k"]),
        ],
        vec![
            ForeignKey::new("A", vec!["h"], "H", vec!["k"]),
            ForeignKey::new("B", vec!["h"], "H", vec!["k"]),
        ],
    )
    .unwrap();
    let cat = |s: String| Value::Categorical(s);
    let mut rows = vec![(RelId(0), vec![cat("hub".into())])];
    for i in 0..n_a {
        rows.push((RelId(1), vec![cat(format!("a{i}")), cat("hub".into())]));
    }
    for i in 0..n_b {
        rows.push((RelId(2), vec![cat(format!("b{i}")), cat("hub".into())]));
    }
    Database::from_ordered_rows(schema, rows).unwrap()
}

fn same_bits(a: &EmbeddingModel, b: &EmbeddingModel) -> bool {
    let phi_eq = a.embedded().eq(b.embedded())
        && a.embedded().all(|f| {
            let (x, y) = (a.phi(f).unwrap(), b.phi(f).unwrap());
            x.iter().map(|v| v.to_bits()).eq(y.iter().map(|v| v.to_bits()))
        });
    let psi_eq = a.schemes().len() == b.schemes().len()
        && a.schemes().iter().zip(b.schemes()).all(|(p, q)| {
            p.active == q.active
                && p.psi
                    .as_row_major()
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(q.psi.as_row_major().iter().map(|v| v.to_bits()))
        });
    phi_eq && psi_eq
}

/// Online elimination at `r = 1` reproduces plain training bit for bit, and
/// the active count follows `max(⌈rN⌉, N − i·k)`.
pub fn online_consistency() -> Outcome {
    let db = fidelity_db();
    let schemes = enumerate_targeted(db.schema(), "R", 2).unwrap();
    let kernels = Kernels::defaults(&db);
    let n = schemes.len();
    let mut identical = true;
    for seed in 0..3 {
        let cfg = TrainConfig {
            epochs: 4,
            seed,
            ..TrainConfig::default()
        };
        let (plain, _) = train(&db, &kernels, &schemes, cfg, &NoClock, &mut |_, _| {}).unwrap();
        for k in [1, 3] {
            let online = OnlineConfig {
                ratio: 1.0,
                per_epoch_removals: k,
                invert: false,
            };
            let (m, _) =
                online_elimination_train(&db, &kernels, &schemes, cfg, online, &NoClock, &mut |_, _| {})
                    .unwrap();
            identical &= same_bits(&plain, &m);
        }
    }
    let mut schedule_ok = true;
    let mut order_ok = true;
    let mut checked = 0;
    for (p, q) in [(1usize, 5usize), (1, 2), (3, 4), (1, 3)] {
        for k in [1, 2, 3] {
            let cfg = TrainConfig {
                epochs: 8,
                seed: 11,
                ..TrainConfig::default()
            };
            let online = OnlineConfig {
                ratio: p as f64 / q as f64,
                per_epoch_removals: k,
                invert: false,
            };
            let (_, history) =
                online_elimination_train(&db, &kernels, &schemes, cfg, online, &NoClock, &mut |_, _| {})
                    .unwrap();
            let keep = (p * n).div_ceil(q);
            let mut active: Vec<usize> = (0..n).collect();
            for (i, e) in history.iter().enumerate() {
                let want = keep.max(n.saturating_sub((i + 1) * k));
                schedule_ok &= e.active_after == want;
                active.retain(|s| !e.removed.contains(s));
                let survivor_min = active
                    .iter()
                    .filter_map(|&s| e.stats.epoch_loss[s])
                    .fold(f64::INFINITY, f64::min);
                order_ok &= e
                    .removed
                    .iter()
                    .all(|&s| e.stats.epoch_loss[s].is_none_or(|l| l <= survivor_min));
                checked += 1;
            }
        }
    }
    Outcome::new(
        identical && schedule_ok && order_ok,
        format!(
            "r=1 bit-identical: {identical}; schedule matches after {checked} epochs: {schedule_ok}; lowest-loss schemes removed: {order_ok}"
        ),
    )
}

/// Freezing on a trained model, clone recovery against an exactly fitting
/// model, and planted recovery of the ridge solver.
pub fn dynamic_extension() -> Outcome {
    let db = fidelity_db();
    let schemes = enumerate_targeted(db.schema(), "R", 1).unwrap();
    let kernels = Kernels::defaults(&db);
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train(&db, &kernels, &schemes, cfg, &NoClock, &mut |_, _| {}).unwrap();
    let cat = |s: &str| Value::Categorical(s.to_string());
    let grown = db
        .insert_facts(vec![
            (RelId(0), vec![cat("new0"), cat("p")]),
            (RelId(0), vec![cat("new1"), cat("q")]),
            (RelId(1), vec![cat("sn0"), cat("new0"), cat("u")]),
            (RelId(1), vec![cat("sn1"), cat("new1"), cat("w")]),
        ])
        .unwrap();
    let new = [FactId(db.len()), FactId(db.len() + 1)];
    let extended =
        extend_embedding(&grown, &model, &kernels, &new, &ExtensionConfig::default()).unwrap();
    let mut frozen = true;
    for f in model.embedded() {
        frozen &= model
            .phi(f)
            .unwrap()
            .iter()
            .map(|v| v.to_bits())
            .eq(extended.phi(f).unwrap().iter().map(|v| v.to_bits()));
    }
    frozen &= model.schemes() == extended.schemes();
    frozen &= new.iter().all(|&f| extended.phi(f).is_some());

    let clone_residual = clone_recovery_residual();

    let mut rng = rng(9);
    let mut worst_planted: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(1..=8);
        let m = k + rng.random_range(0..=10);
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x0: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum())
            .collect();
        if let Ok(x) = ridge_solve(&a, &b, 0.0) {
            let err = x.iter().zip(&x0).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            worst_planted = worst_planted.max(err);
        }
    }
    Outcome::new(
        frozen && clone_residual < 1e-6 && worst_planted < 1e-8,
        format!(
            "frozen: {frozen}; clone residual {clone_residual:.1e}; planted max error {worst_planted:.1e}"
        ),
    )
}

/// Builds a model whose bilinear forms equal the exact similarities: `φ(f)`
/// stacks the destination value laws of two schemes and each `ψ` selects
/// one block. A new fact duplicating an existing one is then extended with
/// exact targets against every partner; returns the largest difference of
/// its bilinear forms from its twin's.
pub fn clone_recovery_residual() -> f64 {
    let db = parent_child_db(
        &["p", "q", "p", "q", "p", "q"],
        &[1, 2, 3, 1, 2, 3],
        &["u", "v", "w"],
    );
    let schema = db.schema();
    let all = enumerate_targeted(schema, "R", 1).unwrap();
    let pick = |text: &str| all.iter().find(|t| t.render(schema) == text).unwrap().clone();
    let chosen = [pick("R[k]—[r]S.b"), pick("R.a")];
    let b_values = [cat_value("u"), cat_value("v"), cat_value("w")];
    let a_values = [cat_value("p"), cat_value("q")];
    let dim = b_values.len() + a_values.len();
    let phi_of = |db: &Database, f: FactId| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        let word = named(db.schema(), &chosen[0].scheme);
        for (val, p) in brute_force_value_law(db, f, &word, chosen[0].target).unwrap() {
            v[b_values.iter().position(|x| *x == val).unwrap()] += p;
        }
        for (val, p) in brute_force_value_law(db, f, &[], chosen[1].target).unwrap() {
            v[b_values.len() + a_values.iter().position(|x| *x == val).unwrap()] += p;
        }
        v
    };
    let block = |range: std::ops::Range<usize>| {
        let mut m = vec![0.0; dim * dim];
        for i in range {
            m[i * dim + i] = 1.0;
        }
        SymMatrix::from_row_major(dim, m).unwrap()
    };
    let facts = db.facts_of(RelId(0)).to_vec();
    let model = EmbeddingModel::from_parts(
        dim,
        RelId(0),
        facts.iter().map(|&f| (f, phi_of(&db, f))).collect(),
        vec![
            SchemeParams {
                scheme: chosen[0].clone(),
                psi: block(0..b_values.len()),
                active: true,
            },
            SchemeParams {
                scheme: chosen[1].clone(),
                psi: block(b_values.len()..dim),
                active: true,
            },
        ],
    )
    .unwrap();
    let twin = facts[2];
    let twin_key = "r2";
    let cat = |s: &str| Value::Categorical(s.to_string());
    let mut rows = vec![(RelId(0), vec![cat("clone"), cat("p")])];
    for s in db.facts_of(RelId(1)) {
        let values = &db.facts()[s.0].values;
        if values[1] == cat(twin_key) {
            rows.push((RelId(1), vec![cat(&format!("c{}", s.0)), cat("clone"), values[2].clone()]));
        }
    }
    let grown = db.insert_facts(rows).unwrap();
    let clone = FactId(db.len());
    let cfg = ExtensionConfig {
        lambda: 1e-12,
        partners: PartnerMode::All,
        targets: TargetMode::Exact,
        ..ExtensionConfig::default()
    };
    let kernels = Kernels::defaults(&grown);
    let out = extend_embedding(&grown, &model, &kernels, &[clone], &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for idx in 0..2 {
        for &g in &facts {
            let a = out.bilinear(clone, g, idx).unwrap();
            let b = out.bilinear(twin, g, idx).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn cat_value(s: &str) -> Value {
    Value::Categorical(s.to_string())
}
