use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use relwalk::config::RunConfig;
use relwalk::exit::{code_for, UsageError, VerificationError};
use relwalk::experiment::{
    average_length, evaluate, load_task, run_experiment, score_strategy, task_schemes,
    write_plot_data, write_report, ExperimentReport, Task, BASELINE,
};
use relwalk::formats::{resolve_schemes, write_scores, EpochLog, SelectionManifest};
use relwalk::manifest::{RunManifest, WallClock};
use relwalk::{dataset, descriptor, model_io};
use relwalk_core::eval::stratified_folds;
use relwalk_core::extension::{build_system, extend_embedding, PartnerMode, TargetMode};
use relwalk_core::selection::{online_elimination_train, select, OnlineConfig, StrategyId};
use relwalk_core::trainer::train;
use relwalk_core::walks::{enumerate_targeted, enumerate_walk_schemes};
use relwalk_core::{EmbeddingModel, FactId, Value};

#[derive(Parser)]
#[command(name = "relwalk", version, about = "Relational tuple embeddings with walk-scheme selection")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed. Replaces the configured seed; an experiment uses this
    /// seed and the following ones, as many as configured.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiment grids.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the targeted walk schemes of a start relation.
    Schemes(SchemesArgs),
    /// Score schemes with one strategy and write a selection per ratio.
    Score(ScoreArgs),
    /// Train an embedding on all schemes, a selection, or with online
    /// elimination.
    Train(TrainArgs),
    /// Embed newly inserted facts into a trained model.
    Extend(ExtendArgs),
    /// Cross-validated task accuracy of a trained model.
    Evaluate(EvaluateArgs),
    /// Run the strategy × ratio × seed grid and write a report.
    Experiment(ExperimentArgs),
    /// Long-format ensemble curves from a report.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct SchemesArgs {
    /// Schema descriptor; defaults to the one in --config.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Start relation; defaults to the task relation in --config.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    l_max: Option<usize>,
    /// Also print the average scheme length.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    strategy: String,
    /// Ratios to select at; defaults to the configured ratios.
    #[arg(long = "ratio")]
    ratios: Vec<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Selection manifest written by `score`.
    #[arg(long, conflicts_with = "online")]
    selection: Option<PathBuf>,
    /// Online elimination: keep ratio R, remove K schemes per epoch.
    #[arg(long, num_args = 2, value_names = ["R", "K"])]
    online: Option<Vec<String>>,
    /// Remove the highest-loss schemes instead of the lowest.
    #[arg(long, requires = "online")]
    invert: bool,
}

#[derive(Args)]
struct ExtendArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory with `<relation>.csv` files of the inserted facts.
    #[arg(long)]
    new_data: PathBuf,
    /// Exact kernel targets instead of sampled ones.
    #[arg(long)]
    exact: bool,
    /// Use every embedded fact as a partner.
    #[arg(long)]
    all_partners: bool,
    /// Check freezing, the solve and twin residuals; implies --exact and
    /// --all-partners.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Also run the insertion protocol, optionally at the given deletion
    /// fractions (`0.5` or `q=0.5`).
    #[arg(long, num_args = 0.., value_parser = parse_fraction)]
    dynamic: Option<Vec<f64>>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    report: PathBuf,
    /// Output CSV; defaults to `plot.csv` in --out-dir.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v = s.strip_prefix("q=").unwrap_or(s);
    let q: f64 = v.parse().map_err(|_| format!("`{s}` is not a fraction"))?;
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(format!("fraction {q} must lie in (0, 1)"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_for(&e) as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Schemes(a) => cmd_schemes(cli, a),
        Command::Score(a) => cmd_score(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Extend(a) => cmd_extend(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Experiment(a) => cmd_experiment(cli, a),
        Command::PlotData(a) => cmd_plot(cli, a),
    }
}

fn load_config(cli: &Cli) -> Result<(RunConfig, Vec<u8>)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| UsageError("this command needs --config".to_string()))?;
    RunConfig::load(path)
}

fn single_seed(cli: &Cli, cfg: &RunConfig) -> u64 {
    cli.seed.unwrap_or(cfg.seeds[0])
}

fn cmd_schemes(cli: &Cli, a: &SchemesArgs) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Some(RunConfig::load(p)?.0),
        None => None,
    };
    let schema_path = a
        .schema
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.schema.clone()))
        .ok_or_else(|| UsageError("give --schema or --config".to_string()))?;
    let mut schema = descriptor::read_schema(&schema_path)?;
    let start = a
        .start
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.task.relation.clone()))
        .ok_or_else(|| UsageError("give --start or --config".to_string()))?;
    if let Some(cfg) = &cfg {
        if a.start.is_none() || a.start.as_deref() == Some(cfg.task.relation.as_str()) {
            let rel = schema.relation_id(&cfg.task.relation)?;
            let attr = schema.attr_index(rel, &cfg.task.attribute)?;
            schema = schema.without_attribute(rel, attr)?;
        }
    }
    let l_max = a.l_max.or(cfg.as_ref().map(|c| c.l_max)).unwrap_or(3);
    let walk = enumerate_walk_schemes(&schema, &start, l_max)?;
    let targeted = enumerate_targeted(&schema, &start, l_max)?;
    for t in &targeted {
        println!("{}", t.render(&schema));
    }
    println!("walk_schemes={} targeted_schemes={}", walk.len(), targeted.len());
    if a.stats {
        println!("avg_length={:.4}", average_length(&targeted));
    }
    Ok(())
}

fn cmd_score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let strategy: StrategyId = a
        .strategy
        .parse()
        .map_err(|e: relwalk_core::Error| UsageError(e.to_string()))?;
    if strategy == StrategyId::Online {
        bail!(UsageError(
            "online elimination is part of training; use `train --online R K`".to_string()
        ));
    }
    let (cfg, bytes) = load_config(cli)?;
    let ratios = if a.ratios.is_empty() { cfg.ratios.clone() } else { a.ratios.clone() };
    if ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        bail!(UsageError("ratios must lie in (0, 1]".to_string()));
    }
    let seed = single_seed(cli, &cfg);
    let run = RunManifest::start(&prepare_out(cli)?, "score", &bytes, vec![seed])?;
    let task = load_task(&cfg)?;
    let schemes = task_schemes(&task, cfg.l_max)?;
    let kernels = cfg.kernels_for(&task.db)?;
    let started = Instant::now();
    let scores = score_strategy(&task.db, &schemes, &kernels, strategy, &cfg, seed)?;
    let seconds = started.elapsed().as_secs_f64();
    let schema = task.db.schema();
    let mut outputs = Vec::new();
    let path = cli.out_dir.join(format!("scores_{}.csv", strategy.as_str()));
    write_scores(&scores, schema, &path)?;
    outputs.push(path);
    for r in ratios {
        let sel = select(&scores, r)?;
        let path = cli
            .out_dir
            .join(format!("selection_{}_r{r}.json", strategy.as_str()));
        SelectionManifest::new(&sel, strategy, seed, schema).write(&path)?;
        println!("ratio {r}: kept {} of {} schemes", sel.kept.len(), schemes.len());
        outputs.push(path);
    }
    println!("scored {} schemes with {} in {seconds:.3}s", schemes.len(), strategy.as_str());
    run.finish(&cli.out_dir, "ok", outputs)
}

fn prepare_out(cli: &Cli) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    Ok(cli.out_dir.clone())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let (cfg, bytes) = load_config(cli)?;
    let seed = single_seed(cli, &cfg);
    let online = match &a.online {
        Some(v) => {
            let ratio: f64 = v[0]
                .parse()
                .map_err(|_| UsageError(format!("`{}` is not a ratio", v[0])))?;
            let k: usize = v[1]
                .parse()
                .map_err(|_| UsageError(format!("`{}` is not a removal count", v[1])))?;
            Some(OnlineConfig {
                ratio,
                per_epoch_removals: k,
                invert: a.invert,
            })
        }
        None => None,
    };
    let run = RunManifest::start(&prepare_out(cli)?, "train", &bytes, vec![seed])?;
    let task = load_task(&cfg)?;
    let all = task_schemes(&task, cfg.l_max)?;
    let schema = task.db.schema();
    let schemes = match &a.selection {
        Some(path) => resolve_schemes(&SelectionManifest::read(path)?.kept, &all, schema)?,
        None => all,
    };
    let kernels = cfg.kernels_for(&task.db)?;
    let tcfg = cfg.trainer.with_seed(seed);
    let log_path = cli.out_dir.join("epochs.csv");
    let mut log = EpochLog::create(&log_path, &schemes, schema)?;
    let mut log_err = None;
    let clock = WallClock::new();
    let model = match online {
        Some(o) => {
            let (model, _) = online_elimination_train(
                &task.db,
                &kernels,
                &schemes,
                tcfg,
                o,
                &clock,
                &mut |e, _| {
                    if let Err(err) = log.record(&e.stats) {
                        log_err.get_or_insert(err);
                    }
                },
            )?;
            model
        }
        None => {
            let (model, _) = train(&task.db, &kernels, &schemes, tcfg, &clock, &mut |s, _| {
                if let Err(err) = log.record(s) {
                    log_err.get_or_insert(err);
                }
            })?;
            model
        }
    };
    if let Some(e) = log_err {
        return Err(e);
    }
    let model_path = cli.out_dir.join("model.json");
    model_io::save_model(&model, &task.db, &model_path)?;
    let emb_path = cli.out_dir.join("embeddings.csv");
    let facts: Vec<FactId> = model.embedded().collect();
    model_io::write_embeddings_csv(&model, &task.db, &facts, &emb_path)?;
    println!(
        "trained {} epochs; active schemes {} of {}",
        tcfg.epochs,
        model.n_active(),
        schemes.len()
    );
    run.finish(&cli.out_dir, "ok", vec![model_path, log_path, emb_path])
}

/// Reads inserted rows laid out like the full dataset and drops the task
/// column so they fit the stripped database.
fn read_new_rows(cfg: &RunConfig, task: &Task, dir: &Path) -> Result<Vec<(relwalk_core::RelId, Vec<Value>)>> {
    let full = descriptor::read_schema(&cfg.schema)?;
    let attr = full.attr_index(task.relation, &cfg.task.attribute)?;
    let mut rows = dataset::read_rows(&full, dir, false)?;
    for (rel, values) in rows.iter_mut() {
        if *rel == task.relation {
            values.remove(attr);
        }
    }
    Ok(rows)
}

fn cmd_extend(cli: &Cli, a: &ExtendArgs) -> Result<()> {
    let (cfg, bytes) = load_config(cli)?;
    let seed = single_seed(cli, &cfg);
    let run = RunManifest::start(&prepare_out(cli)?, "extend", &bytes, vec![seed])?;
    let task = load_task(&cfg)?;
    let model = model_io::load_model(&a.model, &task.db)?;
    let rows = read_new_rows(&cfg, &task, &a.new_data)?;
    let first_new = task.db.len();
    let db = task.db.insert_facts(rows)?;
    let new_facts: Vec<FactId> = (first_new..db.len())
        .map(FactId)
        .filter(|&f| db.facts()[f.0].relation == model.start())
        .collect();
    let mut ext = cfg.extension.with_seed(seed);
    if a.exact || a.verify {
        ext.targets = TargetMode::Exact;
    }
    if a.all_partners || a.verify {
        ext.partners = PartnerMode::All;
    }
    let kernels = cfg.kernels_for(&task.db)?;
    let out = if new_facts.is_empty() {
        model.clone()
    } else {
        extend_embedding(&db, &model, &kernels, &new_facts, &ext)?
    };
    if a.verify {
        verify_extension(&db, &model, &out, &kernels, &new_facts, &ext)?;
    }
    let model_path = cli.out_dir.join("model.json");
    model_io::save_model(&out, &db, &model_path)?;
    let emb_path = cli.out_dir.join("new_embeddings.csv");
    model_io::write_embeddings_csv(&out, &db, &new_facts, &emb_path)?;
    println!("extended {} facts", new_facts.len());
    run.finish(&cli.out_dir, "ok", vec![model_path, emb_path])
}

/// Tolerance of the twin and normal-equation checks.
const VERIFY_TOL: f64 = 1e-6;

fn verify_extension(
    db: &relwalk_core::Database,
    before: &EmbeddingModel,
    after: &EmbeddingModel,
    kernels: &relwalk_core::Kernels,
    new_facts: &[FactId],
    ext: &relwalk_core::extension::ExtensionConfig,
) -> Result<()> {
    for f in before.embedded() {
        let (x, y) = (before.phi(f).unwrap_or(&[]), after.phi(f).unwrap_or(&[]));
        if x.iter().map(|v| v.to_bits()).ne(y.iter().map(|v| v.to_bits())) {
            bail!(VerificationError(format!("embedding of fact {} changed", f.0)));
        }
    }
    if before.schemes() != after.schemes() {
        bail!(VerificationError("scheme parameters changed".to_string()));
    }
    println!("verify: existing embeddings and scheme matrices unchanged");
    let partners: Vec<FactId> = before.embedded().collect();
    let systems: Vec<_> = partners
        .iter()
        .map(|&g| build_system(db, before, kernels, g, &partners, ext))
        .collect::<relwalk_core::Result<_>>()?;
    for &f in new_facts {
        let sys = build_system(db, before, kernels, f, &partners, ext)?;
        let x = after.phi(f).context("new fact without embedding")?;
        let residual = |v: &[f64]| -> Vec<f64> {
            sys.rows
                .iter()
                .zip(&sys.targets)
                .map(|(r, b)| r.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() - b)
                .collect()
        };
        let objective = |v: &[f64]| -> f64 {
            residual(v).iter().map(|e| e * e).sum::<f64>()
                + ext.lambda * v.iter().map(|e| e * e).sum::<f64>()
        };
        let r = residual(x);
        let mut grad_norm = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..x.len() {
            let g: f64 = sys.rows.iter().zip(&r).map(|(row, e)| row[j] * e).sum::<f64>()
                + ext.lambda * x[j];
            grad_norm = grad_norm.max(g.abs());
            let s: f64 = sys.rows.iter().zip(&sys.targets).map(|(row, b)| (row[j] * b).abs()).sum();
            scale = scale.max(s);
        }
        if grad_norm > VERIFY_TOL * scale.max(1.0) {
            bail!(VerificationError(format!(
                "fact {}: normal equations violated by {grad_norm:e}",
                f.0
            )));
        }
        let mut twins = 0;
        for (&h, hs) in partners.iter().zip(&systems) {
            let same = hs.targets.len() == sys.targets.len()
                && hs.rows == sys.rows
                && hs.targets.iter().zip(&sys.targets).all(|(p, q)| (p - q).abs() <= 1e-12);
            if !same {
                continue;
            }
            twins += 1;
            let h_phi = before.phi(h).unwrap_or(&[]);
            if objective(x) > objective(h_phi) + VERIFY_TOL {
                bail!(VerificationError(format!(
                    "fact {} fits worse than its twin {}",
                    f.0, h.0
                )));
            }
        }
        println!(
            "verify: fact {} max residual {:.3e}, {} twin(s) checked",
            f.0,
            r.iter().fold(0.0f64, |m, e| m.max(e.abs())),
            twins
        );
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let (cfg, bytes) = load_config(cli)?;
    let run = RunManifest::start(&prepare_out(cli)?, "evaluate", &bytes, vec![cfg.split_seed])?;
    let task = load_task(&cfg)?;
    let model = model_io::load_model(&a.model, &task.db)?;
    let folds = stratified_folds(&task.labels, cfg.folds, cfg.split_seed)?;
    let accuracy = evaluate(&model, &task, &folds, &cfg.classifier.build())?;
    let path = cli.out_dir.join("evaluation.json");
    let body = serde_json::json!({
        "version": 1,
        "task": cfg.task,
        "accuracy": accuracy,
        "folds": cfg.folds,
        "stratified": folds.stratified,
        "n_labelled": task.labelled.len(),
    });
    relwalk::manifest::write_atomic(&path, serde_json::to_string_pretty(&body)?.as_bytes())?;
    println!("accuracy {accuracy:.4} over {} folds", cfg.folds);
    run.finish(&cli.out_dir, "ok", vec![path])
}

fn cmd_experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let (mut cfg, bytes) = load_config(cli)?;
    if let Some(root) = cli.seed {
        cfg.seeds = (0..cfg.seeds.len() as u64).map(|i| root + i).collect();
    }
    if let Some(qs) = &a.dynamic {
        if !qs.is_empty() {
            cfg.dynamic.fractions = qs.clone();
        }
    }
    let run = RunManifest::start(&prepare_out(cli)?, "experiment", &bytes, cfg.seeds.clone())?;
    let report = run_experiment(&cfg, cli.workers, a.dynamic.is_some())?;
    let outputs = write_report(&report, &cli.out_dir)?;
    print_summary(&report);
    let failed = report.cells.iter().filter(|c| !c.ok).count()
        + report.dynamic.iter().filter(|d| !d.ok).count();
    run.finish(
        &cli.out_dir,
        if failed == 0 { "ok" } else { "partial" },
        outputs,
    )
}

fn print_summary(report: &ExperimentReport) {
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} schemes, avg length {:.2}, {} labelled facts",
        report.n_schemes, report.avg_scheme_length, report.n_labelled
    );
    println!(
        "{BASELINE} final accuracy {}, alpha* {}",
        fmt(report.baseline_final_accuracy),
        fmt(report.alpha_star)
    );
    for t in &report.thresholds {
        let per: Vec<String> = t
            .per_ratio
            .iter()
            .map(|r| format!("r={}: {}", r.ratio, fmt(r.t_star)))
            .collect();
        println!(
            "{:<10} t*: {}  best {} at r={}",
            t.strategy,
            per.join("  "),
            fmt(t.t_star),
            fmt(t.r_star)
        );
    }
    for c in report.cells.iter().filter(|c| !c.ok) {
        println!(
            "failed: {} r={} seed {}: {}",
            c.strategy,
            c.ratio,
            c.seed,
            c.error.as_deref().unwrap_or("")
        );
    }
    for d in &report.dynamic {
        println!(
            "dynamic q={} seed {}: accuracy {}",
            d.fraction,
            d.seed,
            fmt(d.accuracy)
        );
    }
}

fn cmd_plot(cli: &Cli, a: &PlotArgs) -> Result<()> {
    let report = ExperimentReport::read(&a.report)?;
    let path = match &a.output {
        Some(p) => p.clone(),
        None => prepare_out(cli)?.join("plot.csv"),
    };
    write_plot_data(&report, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
