//! The column-prediction experiment: strip the task attribute, score and
//! select schemes, train with per-epoch evaluation, and summarize ensemble
//! curves and time-to-threshold. Also the dynamic insertion protocol.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rand::seq::index;
use rayon::prelude::*;
use relwalk_core::eval::{
    alpha_star, cross_validate, ensemble_curve, stratified_folds, time_to_threshold, Classifier,
    Curve, Folds,
};
use relwalk_core::extension::build_system;
use relwalk_core::linalg::ridge_solve;
use relwalk_core::seed::rng_for;
use relwalk_core::selection::{
    default_pair_budget, online_elimination_train, score_kvar, score_length, score_mi,
    score_one_epoch, score_random, score_sampling, select, OnlineConfig, SchemeScore, StrategyId,
};
use relwalk_core::trainer::train;
use relwalk_core::walks::enumerate_targeted;
use relwalk_core::{
    Database, DatabaseSchema, EmbeddingModel, EpochStats, FactId, Kernels, RelId, TargetedScheme,
    TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TaskConfig};
use crate::exit::{DataError, UsageError};
use crate::manifest::{write_atomic, WallClock};

pub const REPORT_VERSION: u32 = 1;

/// Label used for the all-schemes baseline in reports.
pub const BASELINE: &str = "full";

/// A prediction task on a database that no longer contains the predicted
/// column.
#[derive(Debug, Clone)]
pub struct Task {
    pub db: Database,
    pub relation: RelId,
    /// Start facts with a non-null label, in id order.
    pub labelled: Vec<FactId>,
    /// Class index of each labelled fact.
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

/// Errors unless `schema` lacks the task attribute.
pub fn check_no_leak(schema: &DatabaseSchema, task: &TaskConfig) -> Result<()> {
    let rel = schema.relation_id(&task.relation)?;
    if schema.relation(rel).attr_index(&task.attribute).is_some() {
        bail!(DataError(format!(
            "label leak: `{}.{}` is still present",
            task.relation, task.attribute
        )));
    }
    Ok(())
}

/// Extracts the labels of `task` and removes its column from `db`. Fact ids
/// are preserved.
pub fn prepare_task(db: &Database, task: &TaskConfig) -> Result<Task> {
    let schema = db.schema();
    let relation = schema.relation_id(&task.relation)?;
    let attr = schema.attr_index(relation, &task.attribute)?;
    let (stripped, column) = db
        .without_attribute(relation, attr)
        .with_context(|| format!("removing task attribute {}.{}", task.relation, task.attribute))?;
    check_no_leak(stripped.schema(), task)?;
    let mut class_of: BTreeMap<String, usize> = BTreeMap::new();
    for v in column.iter().filter(|v| !v.is_null()) {
        class_of.entry(v.to_string()).or_insert(0);
    }
    for (i, c) in class_of.values_mut().enumerate() {
        *c = i;
    }
    let mut labelled = Vec::new();
    let mut labels = Vec::new();
    for (&f, v) in db.facts_of(relation).iter().zip(&column) {
        if !v.is_null() {
            labelled.push(f);
            labels.push(class_of[&v.to_string()]);
        }
    }
    Ok(Task {
        db: stripped,
        relation,
        labelled,
        labels,
        classes: class_of.into_keys().collect(),
    })
}

/// The task of `cfg` on its dataset.
pub fn load_task(cfg: &RunConfig) -> Result<Task> {
    let db = crate::dataset::load(&cfg.schema, &cfg.dataset_dir)?;
    prepare_task(&db, &cfg.task)
}

pub fn task_schemes(task: &Task, l_max: usize) -> Result<Vec<TargetedScheme>> {
    let schema = task.db.schema();
    Ok(enumerate_targeted(
        schema,
        &schema.relation(task.relation).name,
        l_max,
    )?)
}

/// Scores `schemes` with `strategy` using the budgets in `cfg`.
pub fn score_strategy(
    db: &Database,
    schemes: &[TargetedScheme],
    kernels: &Kernels,
    strategy: StrategyId,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<SchemeScore>> {
    let scores = match strategy {
        StrategyId::Random => score_random(schemes, seed)?,
        StrategyId::Length => score_length(schemes)?,
        StrategyId::Mi => score_mi(db, schemes, cfg.scoring.walk_budget, seed)?,
        StrategyId::KVar => {
            let start = schemes.first().map(|t| t.scheme.start).unwrap_or(RelId(0));
            let budget = cfg
                .scoring
                .pair_budget
                .unwrap_or_else(|| default_pair_budget(db, start, cfg.trainer.n_samples));
            score_kvar(db, schemes, kernels, budget, cfg.trainer.retry_cap, seed)?
        }
        StrategyId::OneEpoch => score_one_epoch(db, schemes, kernels, cfg.light_trainer(seed))?,
        StrategyId::Sampling => score_sampling(
            db,
            schemes,
            kernels,
            cfg.light_trainer(seed),
            cfg.sampling_params(),
        )?,
        StrategyId::Online => bail!(UsageError(
            "online elimination happens during training; use `train --online`".to_string()
        )),
    };
    Ok(scores)
}

fn features(model: &EmbeddingModel, facts: &[FactId]) -> Result<Vec<Vec<f64>>> {
    facts
        .iter()
        .map(|&f| {
            model
                .phi(f)
                .map(<[f64]>::to_vec)
                .with_context(|| format!("fact {} has no embedding", f.0))
        })
        .collect()
}

/// Cross-validated accuracy of `model`'s embeddings on the task.
pub fn evaluate(
    model: &EmbeddingModel,
    task: &Task,
    folds: &Folds,
    classifier: &dyn Classifier,
) -> Result<f64> {
    let x = features(model, &task.labelled)?;
    Ok(cross_validate(&x, &task.labels, folds, classifier)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub wall_time: f64,
    /// Training time up to the end of this epoch, evaluation excluded.
    pub time: f64,
    pub accuracy: f64,
    pub active_schemes: usize,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: String,
    pub ratio: f64,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub scoring_seconds: Option<f64>,
    pub schemes_kept: usize,
    pub epochs: Vec<EpochPoint>,
}

impl CellReport {
    pub fn curve(&self) -> Curve {
        Curve {
            points: self.epochs.iter().map(|p| (p.time, p.accuracy)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub strategy: String,
    pub ratio: f64,
    /// `(time, accuracy)`; empty when a seed failed.
    pub points: Vec<(f64, f64)>,
    pub final_accuracy: Option<f64>,
    pub failed_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTime {
    pub ratio: f64,
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub strategy: String,
    pub per_ratio: Vec<RatioTime>,
    pub t_star: Option<f64>,
    pub r_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicPoint {
    pub fraction: f64,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub deleted_facts: usize,
    pub inserted_labelled: usize,
    /// Inserted labelled facts with no complete walk for any scheme.
    pub not_embedded: usize,
    pub train_seconds: f64,
    pub extend_seconds: f64,
    /// Accuracy on the inserted labelled facts that got an embedding.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub task: TaskConfig,
    pub l_max: usize,
    pub n_schemes: usize,
    pub avg_scheme_length: f64,
    pub n_labelled: usize,
    pub classes: Vec<String>,
    pub majority_fraction: f64,
    pub leakage_check_passed: bool,
    pub folds: usize,
    pub folds_stratified: bool,
    pub baseline_final_accuracy: Option<f64>,
    pub alpha_star: Option<f64>,
    pub cells: Vec<CellReport>,
    pub ensembles: Vec<EnsembleReport>,
    pub thresholds: Vec<ThresholdReport>,
    pub dynamic: Vec<DynamicPoint>,
}

impl ExperimentReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: ExperimentReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if r.version != REPORT_VERSION {
            bail!(
                "report version {} is not supported (expected {REPORT_VERSION})",
                r.version
            );
        }
        Ok(r)
    }

    pub fn ensemble(&self, strategy: &str, ratio: f64) -> Option<&EnsembleReport> {
        self.ensembles
            .iter()
            .find(|e| e.strategy == strategy && e.ratio == ratio)
    }
}

/// Everything one grid cell needs, shared read-only across workers.
struct Grid<'a> {
    cfg: &'a RunConfig,
    task: &'a Task,
    kernels: &'a Kernels,
    schemes: &'a [TargetedScheme],
    folds: &'a Folds,
    classifier: &'a (dyn Classifier + Sync),
}

impl Grid<'_> {
    fn trainer_cfg(&self, seed: u64) -> TrainConfig {
        self.cfg.trainer.with_seed(seed)
    }

    fn point(
        &self,
        stats: &EpochStats,
        model: &EmbeddingModel,
        elapsed: &mut f64,
    ) -> Result<EpochPoint> {
        *elapsed += stats.wall_time;
        Ok(EpochPoint {
            epoch: stats.epoch,
            wall_time: stats.wall_time,
            time: *elapsed,
            accuracy: evaluate(model, self.task, self.folds, self.classifier)?,
            active_schemes: model.n_active(),
            mean_loss: stats.mean_loss,
        })
    }

    fn train_curve(&self, schemes: &[TargetedScheme], seed: u64) -> Result<Vec<EpochPoint>> {
        let mut points = Vec::new();
        let mut failure = None;
        let mut elapsed = 0.0;
        train(
            &self.task.db,
            self.kernels,
            schemes,
            self.trainer_cfg(seed),
            &WallClock::new(),
            &mut |stats, model| {
                if failure.is_none() {
                    match self.point(stats, model, &mut elapsed) {
                        Ok(p) => points.push(p),
                        Err(e) => failure = Some(e),
                    }
                }
            },
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(points),
        }
    }

    fn online_curve(&self, ratio: f64, seed: u64) -> Result<Vec<EpochPoint>> {
        let online = OnlineConfig {
            ratio,
            per_epoch_removals: self.cfg.online.per_epoch_removals,
            invert: self.cfg.online.invert,
        };
        let mut points = Vec::new();
        let mut failure = None;
        let mut elapsed = 0.0;
        online_elimination_train(
            &self.task.db,
            self.kernels,
            self.schemes,
            self.trainer_cfg(seed),
            online,
            &WallClock::new(),
            &mut |epoch, model| {
                if failure.is_none() {
                    match self.point(&epoch.stats, model, &mut elapsed) {
                        Ok(p) => points.push(p),
                        Err(e) => failure = Some(e),
                    }
                }
            },
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(points),
        }
    }

    fn baseline(&self, seed: u64) -> CellReport {
        info!("baseline seed {seed}");
        let result = self.train_curve(self.schemes, seed);
        cell(BASELINE, 1.0, seed, None, self.schemes.len(), result)
    }

    /// Scores once for `strategy` and `seed`, then trains every ratio below 1.
    fn strategy_cells(&self, strategy: StrategyId, ratios: &[f64], seed: u64) -> Vec<CellReport> {
        let name = strategy.as_str();
        if strategy == StrategyId::Online {
            return ratios
                .iter()
                .map(|&r| {
                    info!("{name} r={r} seed {seed}");
                    let result = self.online_curve(r, seed);
                    let n = result
                        .as_ref()
                        .ok()
                        .and_then(|p| p.last())
                        .map_or(self.schemes.len(), |p| p.active_schemes);
                    cell(name, r, seed, None, n, result)
                })
                .collect();
        }
        let started = Instant::now();
        let scores = score_strategy(
            &self.task.db,
            self.schemes,
            self.kernels,
            strategy,
            self.cfg,
            seed,
        );
        let scoring_seconds = started.elapsed().as_secs_f64();
        ratios
            .iter()
            .map(|&r| {
                info!("{name} r={r} seed {seed}");
                let selection = match &scores {
                    Ok(s) => select(s, r).map_err(anyhow::Error::from),
                    Err(e) => Err(anyhow::anyhow!("scoring failed: {e:#}")),
                };
                match selection {
                    Ok(sel) => {
                        let kept = sel.kept.len();
                        let result = self.train_curve(&sel.kept, seed);
                        cell(name, r, seed, Some(scoring_seconds), kept, result)
                    }
                    Err(e) => cell(name, r, seed, Some(scoring_seconds), 0, Err(e)),
                }
            })
            .collect()
    }
}

fn cell(
    strategy: &str,
    ratio: f64,
    seed: u64,
    scoring_seconds: Option<f64>,
    schemes_kept: usize,
    result: Result<Vec<EpochPoint>>,
) -> CellReport {
    let (ok, error, epochs) = match result {
        Ok(epochs) => (true, None, epochs),
        Err(e) => {
            warn!("{strategy} r={ratio} seed {seed} failed: {e:#}");
            (false, Some(format!("{e:#}")), Vec::new())
        }
    };
    CellReport {
        strategy: strategy.to_string(),
        ratio,
        seed,
        ok,
        error,
        scoring_seconds,
        schemes_kept,
        epochs,
    }
}

fn ensemble_of(strategy: &str, ratio: f64, cells: &[&CellReport]) -> EnsembleReport {
    let failed_seeds: Vec<u64> = cells.iter().filter(|c| !c.ok).map(|c| c.seed).collect();
    let (points, final_accuracy) = if failed_seeds.is_empty() && !cells.is_empty() {
        let curves: Vec<Curve> = cells.iter().map(|c| c.curve()).collect();
        let points = ensemble_curve(&curves).points;
        let finals: Option<Vec<f64>> = cells.iter().map(|c| c.epochs.last().map(|p| p.accuracy)).collect();
        let final_accuracy = finals.map(|f| f.iter().sum::<f64>() / f.len() as f64);
        (points, final_accuracy)
    } else {
        (Vec::new(), None)
    };
    EnsembleReport {
        strategy: strategy.to_string(),
        ratio,
        points,
        final_accuracy,
        failed_seeds,
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?)
}

/// Runs the configured grid. Cells at ratio 1 share the all-schemes
/// baseline, since selecting every scheme changes nothing.
pub fn run_experiment(cfg: &RunConfig, workers: usize, with_dynamic: bool) -> Result<ExperimentReport> {
    let task = load_task(cfg)?;
    run_on_task(cfg, &task, workers, with_dynamic)
}

pub fn run_on_task(
    cfg: &RunConfig,
    task: &Task,
    workers: usize,
    with_dynamic: bool,
) -> Result<ExperimentReport> {
    check_no_leak(task.db.schema(), &cfg.task)?;
    let strategies = cfg.strategy_ids()?;
    let schemes = task_schemes(task, cfg.l_max)?;
    let kernels = cfg.kernels_for(&task.db)?;
    let folds = stratified_folds(&task.labels, cfg.folds, cfg.split_seed)?;
    if !folds.stratified {
        warn!("a class has fewer than {} members; using unstratified folds", cfg.folds);
    }
    let classifier = cfg.classifier.build();
    let ctx = Grid {
        cfg,
        task,
        kernels: &kernels,
        schemes: &schemes,
        folds: &folds,
        classifier: &classifier,
    };
    let partial: Vec<f64> = cfg.ratios.iter().copied().filter(|&r| r < 1.0).collect();
    let mut jobs: Vec<(Option<StrategyId>, u64)> = cfg.seeds.iter().map(|&s| (None, s)).collect();
    if !partial.is_empty() {
        for &st in &strategies {
            jobs.extend(cfg.seeds.iter().map(|&s| (Some(st), s)));
        }
    }
    let pool = build_pool(workers)?;
    let cells: Vec<CellReport> = pool.install(|| {
        jobs.par_iter()
            .map(|&(st, seed)| match st {
                None => vec![ctx.baseline(seed)],
                Some(st) => ctx.strategy_cells(st, &partial, seed),
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });

    let baseline_cells: Vec<&CellReport> = cells.iter().filter(|c| c.strategy == BASELINE).collect();
    let baseline = ensemble_of(BASELINE, 1.0, &baseline_cells);
    let alpha = baseline.final_accuracy.map(alpha_star);
    let mut ensembles = vec![baseline.clone()];
    let mut thresholds = Vec::new();
    for &st in &strategies {
        let mut per_ratio_curves = Vec::new();
        for &r in &cfg.ratios {
            let e = if r >= 1.0 {
                EnsembleReport {
                    strategy: st.as_str().to_string(),
                    ..baseline.clone()
                }
            } else {
                let group: Vec<&CellReport> = cells
                    .iter()
                    .filter(|c| c.strategy == st.as_str() && c.ratio == r)
                    .collect();
                ensemble_of(st.as_str(), r, &group)
            };
            if e.failed_seeds.is_empty() {
                per_ratio_curves.push((r, Curve { points: e.points.clone() }));
            }
            ensembles.push(e);
        }
        if let Some(alpha) = alpha {
            let t = time_to_threshold(&per_ratio_curves, alpha);
            thresholds.push(ThresholdReport {
                strategy: st.as_str().to_string(),
                per_ratio: cfg
                    .ratios
                    .iter()
                    .map(|&r| RatioTime {
                        ratio: r,
                        t_star: t.per_ratio.iter().find(|(pr, _)| *pr == r).and_then(|p| p.1),
                    })
                    .collect(),
                t_star: t.best_time,
                r_star: t.best_ratio,
            });
        }
    }

    let dynamic = if with_dynamic {
        run_dynamic(cfg, task, &kernels, &schemes, workers)?
    } else {
        Vec::new()
    };

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &y in &task.labels {
        *counts.entry(y).or_default() += 1;
    }
    let majority = counts.values().copied().max().unwrap_or(0);
    Ok(ExperimentReport {
        version: REPORT_VERSION,
        task: cfg.task.clone(),
        l_max: cfg.l_max,
        n_schemes: schemes.len(),
        avg_scheme_length: average_length(&schemes),
        n_labelled: task.labelled.len(),
        classes: task.classes.clone(),
        majority_fraction: majority as f64 / task.labels.len().max(1) as f64,
        leakage_check_passed: true,
        folds: cfg.folds,
        folds_stratified: folds.stratified,
        baseline_final_accuracy: baseline.final_accuracy,
        alpha_star: alpha,
        cells,
        ensembles,
        thresholds,
        dynamic,
    })
}

/// Mean walk length over targeted schemes.
pub fn average_length(schemes: &[TargetedScheme]) -> f64 {
    if schemes.is_empty() {
        return 0.0;
    }
    schemes.iter().map(|t| t.scheme.len()).sum::<usize>() as f64 / schemes.len() as f64
}

/// The insertion protocol for every configured fraction and seed: delete a
/// fraction of the labelled task facts together with everything that
/// references them, train on the rest and fit the classifier, re-insert the
/// deleted facts, embed them by extension and classify them.
pub fn run_dynamic(
    cfg: &RunConfig,
    task: &Task,
    kernels: &Kernels,
    schemes: &[TargetedScheme],
    workers: usize,
) -> Result<Vec<DynamicPoint>> {
    let classifier = cfg.classifier.build();
    let jobs: Vec<(usize, f64, u64)> = cfg
        .dynamic
        .fractions
        .iter()
        .enumerate()
        .flat_map(|(i, &q)| cfg.seeds.iter().map(move |&s| (i, q, s)))
        .collect();
    let pool = build_pool(workers)?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(i, q, seed)| {
                info!("dynamic q={q} seed {seed}");
                dynamic_point(cfg, task, kernels, schemes, &classifier, i as u64, q, seed)
                    .unwrap_or_else(|e| {
                        warn!("dynamic q={q} seed {seed} failed: {e:#}");
                        DynamicPoint {
                            fraction: q,
                            seed,
                            ok: false,
                            error: Some(format!("{e:#}")),
                            deleted_facts: 0,
                            inserted_labelled: 0,
                            not_embedded: 0,
                            train_seconds: 0.0,
                            extend_seconds: 0.0,
                            accuracy: None,
                        }
                    })
            })
            .collect()
    }))
}

#[allow(clippy::too_many_arguments)]
fn dynamic_point(
    cfg: &RunConfig,
    task: &Task,
    kernels: &Kernels,
    schemes: &[TargetedScheme],
    classifier: &dyn Classifier,
    stream: u64,
    q: f64,
    seed: u64,
) -> Result<DynamicPoint> {
    let db = &task.db;
    let n = task.labelled.len();
    let n_delete = ((q * n as f64).round() as usize).clamp(1, n.saturating_sub(2).max(1));
    let mut rng = rng_for(seed, "dynamic", stream);
    let picked = index::sample(&mut rng, n, n_delete).into_vec();
    let seeds: Vec<FactId> = picked.iter().map(|&i| task.labelled[i]).collect();
    let closure: Vec<FactId> = db.referencing_closure(&seeds).into_iter().collect();
    let mut keep = vec![true; db.len()];
    for f in &closure {
        keep[f.0] = false;
    }
    let reduced = db.subset(&keep)?;
    let mut new_id = vec![None; db.len()];
    let mut next = 0;
    for (old, &k) in keep.iter().enumerate() {
        if k {
            new_id[old] = Some(FactId(next));
            next += 1;
        }
    }

    let started = Instant::now();
    let (model, _) = train(
        &reduced,
        kernels,
        schemes,
        cfg.trainer.with_seed(seed),
        &WallClock::new(),
        &mut |_, _| {},
    )?;
    let train_seconds = started.elapsed().as_secs_f64();

    let (mut tx, mut ty) = (Vec::new(), Vec::new());
    for (&f, &y) in task.labelled.iter().zip(&task.labels) {
        if let Some(g) = new_id[f.0] {
            tx.push(model.phi(g).context("kept fact without embedding")?.to_vec());
            ty.push(y);
        }
    }
    let n_classes = task.classes.len().max(2);
    let predictor = classifier.fit(&tx, &ty, n_classes)?;

    let restored = reduced.insert_facts(db.rows_of(&closure))?;
    let label_of: BTreeMap<FactId, usize> =
        task.labelled.iter().copied().zip(task.labels.iter().copied()).collect();
    let ext = cfg.extension.with_seed(seed);
    ext.validate()?;
    let partners: Vec<FactId> = model.embedded().collect();
    let started = Instant::now();
    let (mut hits, mut embedded, mut missing, mut inserted) = (0usize, 0usize, 0usize, 0usize);
    for (pos, old) in closure.iter().enumerate() {
        let Some(&y) = label_of.get(old) else { continue };
        inserted += 1;
        let f = FactId(reduced.len() + pos);
        let system = build_system(&restored, &model, kernels, f, &partners, &ext)?;
        if system.rows.is_empty() {
            missing += 1;
            continue;
        }
        let x = ridge_solve(&system.rows, &system.targets, ext.lambda)?;
        embedded += 1;
        if predictor.predict(&x) == y {
            hits += 1;
        }
    }
    let extend_seconds = started.elapsed().as_secs_f64();
    Ok(DynamicPoint {
        fraction: q,
        seed,
        ok: true,
        error: None,
        deleted_facts: closure.len(),
        inserted_labelled: inserted,
        not_embedded: missing,
        train_seconds,
        extend_seconds,
        accuracy: (embedded > 0).then(|| hits as f64 / embedded as f64),
    })
}

/// Writes `report.json`, `curves.csv`, `ensemble.csv`, `thresholds.csv`
/// and, for dynamic runs, `dynamic.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let path = dir.join("report.json");
    write_atomic(&path, serde_json::to_string_pretty(report)?.as_bytes())?;
    out.push(path);

    let path = dir.join("curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["strategy", "ratio", "seed", "epoch", "time", "accuracy", "active_schemes"])?;
    for c in &report.cells {
        for p in &c.epochs {
            w.write_record([
                c.strategy.clone(),
                c.ratio.to_string(),
                c.seed.to_string(),
                p.epoch.to_string(),
                p.time.to_string(),
                p.accuracy.to_string(),
                p.active_schemes.to_string(),
            ])?;
        }
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("ensemble.csv");
    write_plot_data(report, &path)?;
    out.push(path);

    let path = dir.join("thresholds.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["strategy", "ratio", "t_star"])?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for t in &report.thresholds {
        for r in &t.per_ratio {
            w.write_record([t.strategy.clone(), r.ratio.to_string(), fmt(r.t_star)])?;
        }
        w.write_record([t.strategy.clone(), format!("best:{}", fmt(t.r_star)), fmt(t.t_star)])?;
    }
    w.flush()?;
    out.push(path);

    if !report.dynamic.is_empty() {
        let path = dir.join("dynamic.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "fraction",
            "seed",
            "ok",
            "deleted_facts",
            "inserted_labelled",
            "not_embedded",
            "train_seconds",
            "extend_seconds",
            "accuracy",
        ])?;
        for d in &report.dynamic {
            w.write_record([
                d.fraction.to_string(),
                d.seed.to_string(),
                d.ok.to_string(),
                d.deleted_facts.to_string(),
                d.inserted_labelled.to_string(),
                d.not_embedded.to_string(),
                d.train_seconds.to_string(),
                d.extend_seconds.to_string(),
                fmt(d.accuracy),
            ])?;
        }
        w.flush()?;
        out.push(path);
    }
    Ok(out)
}

/// Long-format ensemble curves: `strategy, ratio, time, accuracy`.
pub fn write_plot_data(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["strategy", "ratio", "time", "accuracy"])?;
    for e in &report.ensembles {
        for (t, a) in &e.points {
            w.write_record([
                e.strategy.clone(),
                e.ratio.to_string(),
                t.to_string(),
                a.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
