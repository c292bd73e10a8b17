//! Scoring targeted walk schemes and keeping the most valuable ones.
//!
//! Every strategy maps each scheme to a finite score where higher means more
//! valuable. [`select`] keeps the top `⌈r·N⌉`, breaking ties by the scheme's
//! position in the input list, which is the canonical enumeration order.
//!
//! Schemes a strategy cannot assess (no complete walks, no pairs, no usable
//! training sample) get the lowest finite score minus one and a diagnostic,
//! so they are the first to go.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kernels::{kd_exact, Kernels};
use crate::math;
use crate::relational::{Database, FactId, RelId};
use crate::seed::rng_for;
use crate::trainer::{Clock, EmbeddingModel, EpochStats, NoClock, TrainConfig, Trainer};
use crate::walks::{
    attr_sample_unchecked, facts_with_complete_walk, sample_walk, TargetedScheme, WalkScheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyId {
    Random,
    Length,
    Mi,
    KVar,
    OneEpoch,
    Sampling,
    Online,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Random,
        StrategyId::Length,
        StrategyId::Mi,
        StrategyId::KVar,
        StrategyId::OneEpoch,
        StrategyId::Sampling,
        StrategyId::Online,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Random => "random",
            StrategyId::Length => "length",
            StrategyId::Mi => "mi",
            StrategyId::KVar => "kvar",
            StrategyId::OneEpoch => "one-epoch",
            StrategyId::Sampling => "sampling",
            StrategyId::Online => "online",
        }
    }
}

impl core::str::FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == lower || (lower == "1ep" && *id == StrategyId::OneEpoch))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeScore {
    /// Position of the scheme in the scored list.
    pub index: usize,
    pub tws: TargetedScheme,
    pub score: f64,
    pub strategy: StrategyId,
    /// Walks, quadruples or training samples behind the score, if any.
    pub n_samples: Option<usize>,
    pub diagnostic: Option<String>,
}

struct Raw {
    score: Option<f64>,
    n_samples: Option<usize>,
    diagnostic: Option<String>,
}

impl Raw {
    fn scored(score: f64, n_samples: usize) -> Self {
        Raw {
            score: Some(score),
            n_samples: Some(n_samples),
            diagnostic: None,
        }
    }

    fn unassessable(why: impl Into<String>) -> Self {
        Raw {
            score: None,
            n_samples: None,
            diagnostic: Some(why.into()),
        }
    }
}

fn check_nonempty(schemes: &[TargetedScheme]) -> Result<()> {
    if schemes.is_empty() {
        return Err(Error::InvalidArgument("no schemes".to_string()));
    }
    Ok(())
}

fn finish(strategy: StrategyId, schemes: &[TargetedScheme], raw: Vec<Raw>) -> Vec<SchemeScore> {
    let floor = raw
        .iter()
        .filter_map(|r| r.score)
        .fold(f64::INFINITY, f64::min);
    let fallback = if floor.is_finite() { floor - 1.0 } else { -1.0 };
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let (score, diagnostic) = match r.score {
                Some(s) => (s, r.diagnostic),
                None => (
                    fallback,
                    Some(format!(
                        "{}; ranked below every assessed scheme",
                        r.diagnostic.unwrap_or_else(|| "not assessable".to_string())
                    )),
                ),
            };
            SchemeScore {
                index: i,
                tws: schemes[i].clone(),
                score,
                strategy,
                n_samples: r.n_samples,
                diagnostic,
            }
        })
        .collect()
}

/// I.i.d. uniform scores in `[0, 1)`.
pub fn score_random(schemes: &[TargetedScheme], seed: u64) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    let mut rng = rng_for(seed, "score-random", 0);
    let raw = schemes
        .iter()
        .map(|_| Raw {
            score: Some(rng.random::<f64>()),
            n_samples: None,
            diagnostic: None,
        })
        .collect();
    Ok(finish(StrategyId::Random, schemes, raw))
}

/// `1/ℓ`, and 2 for length-0 schemes so they rank first.
pub fn score_length(schemes: &[TargetedScheme]) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    let raw = schemes
        .iter()
        .map(|ts| {
            let l = ts.scheme.len();
            Raw {
                score: Some(if l == 0 { 2.0 } else { 1.0 / l as f64 }),
                n_samples: None,
                diagnostic: None,
            }
        })
        .collect();
    Ok(finish(StrategyId::Length, schemes, raw))
}

/// Attempts per walk before a dead-ending start is given up.
const WALK_ATTEMPTS: usize = 20;

/// Plug-in mutual information `I(X_i; X_{i+1})` in nats for each hop of
/// `scheme`, from `walk_budget` sampled complete walks. `None` when the
/// scheme has no hop or no walk completes.
pub fn mi_per_step(
    db: &Database,
    scheme: &WalkScheme,
    walk_budget: usize,
    seed: u64,
    stream: u64,
) -> Result<Option<(Vec<f64>, usize)>> {
    if walk_budget == 0 {
        return Err(Error::InvalidArgument("walk budget must be >= 1".to_string()));
    }
    scheme.validate(db.schema())?;
    let starts = db.facts_of(scheme.start);
    if scheme.is_empty() || starts.is_empty() {
        return Ok(None);
    }
    let mut rng = rng_for(seed, "score-mi", stream);
    let mut walks = Vec::with_capacity(walk_budget);
    for _ in 0..walk_budget {
        for _ in 0..WALK_ATTEMPTS {
            let f = starts[rng.random_range(0..starts.len())];
            if let Some(w) = sample_walk(db, f, scheme, &mut rng)? {
                walks.push(w);
                break;
            }
        }
    }
    if walks.is_empty() {
        return Ok(None);
    }
    let n = walks.len() as f64;
    let mut mi = Vec::with_capacity(scheme.len());
    for i in 0..scheme.len() {
        let mut joint: Vec<(FactId, FactId)> =
            walks.iter().map(|w| (w.facts[i], w.facts[i + 1])).collect();
        joint.sort_unstable();
        let mut left: BTreeMap<FactId, usize> = BTreeMap::new();
        let mut right: BTreeMap<FactId, usize> = BTreeMap::new();
        for &(x, y) in &joint {
            *left.entry(x).or_default() += 1;
            *right.entry(y).or_default() += 1;
        }
        let mut total = 0.0;
        let mut k = 0;
        while k < joint.len() {
            let mut m = k;
            while m < joint.len() && joint[m] == joint[k] {
                m += 1;
            }
            let pxy = (m - k) as f64 / n;
            let px = left[&joint[k].0] as f64 / n;
            let py = right[&joint[k].1] as f64 / n;
            total += pxy * math::ln(pxy / (px * py));
            k = m;
        }
        mi.push(total.max(0.0));
    }
    Ok(Some((mi, walks.len())))
}

/// `−min_i I(X_i; X_{i+1})`, computed once per distinct walk scheme.
pub fn score_mi(
    db: &Database,
    schemes: &[TargetedScheme],
    walk_budget: usize,
    seed: u64,
) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    let mut cache: Vec<(&WalkScheme, Option<(f64, usize)>)> = Vec::new();
    let mut raw = Vec::with_capacity(schemes.len());
    for ts in schemes {
        let hit = cache.iter().find(|(s, _)| *s == &ts.scheme).map(|(_, r)| *r);
        let result = match hit {
            Some(r) => r,
            None => {
                let stream = cache.len() as u64;
                let r = mi_per_step(db, &ts.scheme, walk_budget, seed, stream)?.map(
                    |(steps, n)| (-steps.iter().copied().fold(f64::INFINITY, f64::min), n),
                );
                cache.push((&ts.scheme, r));
                r
            }
        };
        raw.push(match result {
            Some((score, n)) => Raw::scored(score, n),
            None if ts.scheme.is_empty() => Raw::unassessable("length-0 scheme has no hop"),
            None => Raw::unassessable("no complete walk"),
        });
    }
    Ok(finish(StrategyId::Mi, schemes, raw))
}

/// 10% of one epoch's per-scheme sample count `|R|·n_samples`, at least 2.
pub fn default_pair_budget(db: &Database, start: RelId, n_samples: usize) -> usize {
    let n = db.facts_of(start).len() * n_samples;
    math::ceil_fraction(0.1, n).max(2)
}

/// Unbiased sample variance; 0 for fewer than two values.
fn unbiased_variance(xs: &[f64]) -> f64 {
    let sd = math::mean_std(xs).1;
    sd * sd
}

fn start_of(schemes: &[TargetedScheme]) -> Result<RelId> {
    let start = schemes[0].scheme.start;
    if schemes.iter().any(|ts| ts.scheme.start != start) {
        return Err(Error::InvalidArgument(
            "all schemes must share one start relation".to_string(),
        ));
    }
    Ok(start)
}

fn variance_of_pairs(groups: &BTreeMap<(FactId, FactId), (f64, usize)>, n: usize) -> Raw {
    match groups.len() {
        0 => Raw::unassessable("every quadruple dead-ended"),
        1 => Raw {
            score: Some(0.0),
            n_samples: Some(n),
            diagnostic: Some("only one start-fact pair".to_string()),
        },
        _ => {
            let means: Vec<f64> = groups.values().map(|(s, c)| s / *c as f64).collect();
            Raw::scored(unbiased_variance(&means), n)
        }
    }
}

/// Variance of the expected kernel similarity over start-fact pairs,
/// estimated from `pair_budget` random quadruples `(f, f', g, g')`.
pub fn score_kvar(
    db: &Database,
    schemes: &[TargetedScheme],
    kernels: &Kernels,
    pair_budget: usize,
    retry_cap: usize,
    seed: u64,
) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    if pair_budget < 2 {
        return Err(Error::InvalidArgument("pair budget must be >= 2".to_string()));
    }
    let start = start_of(schemes)?;
    let facts = db.facts_of(start);
    if facts.len() < 2 {
        return Err(Error::InvalidArgument(
            "start relation needs at least two facts".to_string(),
        ));
    }
    let mut raw = Vec::with_capacity(schemes.len());
    for (idx, ts) in schemes.iter().enumerate() {
        ts.validate(db.schema())?;
        let kernel = kernels.for_target(db, ts);
        let mut rng = rng_for(seed, "score-kvar", idx as u64);
        let mut groups: BTreeMap<(FactId, FactId), (f64, usize)> = BTreeMap::new();
        let mut used = 0;
        for _ in 0..pair_budget {
            let i = rng.random_range(0..facts.len());
            let mut j = rng.random_range(0..facts.len() - 1);
            if j >= i {
                j += 1;
            }
            let (f, g) = (facts[i], facts[j]);
            let a = attr_sample_unchecked(db, f, ts, retry_cap, &mut rng);
            let b = attr_sample_unchecked(db, g, ts, retry_cap, &mut rng);
            if let (Some(a), Some(b)) = (a, b) {
                let e = groups.entry((f.min(g), f.max(g))).or_insert((0.0, 0));
                e.0 += kernel.eval(a, b)?;
                e.1 += 1;
                used += 1;
            }
        }
        raw.push(variance_of_pairs(&groups, used));
    }
    Ok(finish(StrategyId::KVar, schemes, raw))
}

/// Exhaustive KVar: exact KD over every unordered pair of start facts.
/// Pairs where either fact has no complete walk are left out.
pub fn score_kvar_exact(
    db: &Database,
    schemes: &[TargetedScheme],
    kernels: &Kernels,
) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    let start = start_of(schemes)?;
    let facts = db.facts_of(start);
    let mut raw = Vec::with_capacity(schemes.len());
    for ts in schemes {
        ts.validate(db.schema())?;
        let kernel = kernels.for_target(db, ts);
        let mut groups = BTreeMap::new();
        for (i, &f) in facts.iter().enumerate() {
            for &g in &facts[i + 1..] {
                match kd_exact(db, f, g, ts, kernel) {
                    Ok(v) => {
                        groups.insert((f, g), (v, 1));
                    }
                    Err(Error::NoSamples(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        let n = groups.len();
        raw.push(variance_of_pairs(&groups, n));
    }
    Ok(finish(StrategyId::KVar, schemes, raw))
}

fn scores_from_losses(
    strategy: StrategyId,
    schemes: &[TargetedScheme],
    stats: &EpochStats,
    counts: &[usize],
) -> Vec<SchemeScore> {
    let raw = stats
        .cumulative_loss
        .iter()
        .zip(counts)
        .map(|(loss, &n)| match loss {
            Some(l) => Raw::scored(*l, n),
            None => Raw::unassessable("no usable training sample"),
        })
        .collect();
    finish(strategy, schemes, raw)
}

/// Mean loss per scheme over one fresh training epoch; the model is thrown
/// away.
pub fn score_one_epoch(
    db: &Database,
    schemes: &[TargetedScheme],
    kernels: &Kernels,
    cfg: TrainConfig,
) -> Result<Vec<SchemeScore>> {
    check_nonempty(schemes)?;
    let mut trainer = Trainer::new(db, kernels, schemes, cfg)?;
    let mut counts = vec![0usize; schemes.len()];
    let stats = trainer.run_epoch_observed(&NoClock, &mut |s, _| counts[s.scheme] += 1)?;
    Ok(scores_from_losses(StrategyId::OneEpoch, schemes, &stats, &counts))
}

/// For every distinct walk scheme, picks `facts_per_scheme` random start
/// facts with a complete walk. The sample then takes those facts, every fact
/// that references them through a chain of foreign keys, and everything all
/// of these reference in turn, so the result satisfies every foreign key.
///
/// Returns the sample and one diagnostic per scheme without instances.
pub fn build_sample_database(
    db: &Database,
    schemes: &[TargetedScheme],
    facts_per_scheme: usize,
    seed: u64,
) -> Result<(Database, Vec<String>)> {
    check_nonempty(schemes)?;
    if facts_per_scheme == 0 {
        return Err(Error::InvalidArgument(
            "facts per scheme must be >= 1".to_string(),
        ));
    }
    let mut seen: Vec<&WalkScheme> = Vec::new();
    let mut chosen: BTreeSet<FactId> = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let mut rng = rng_for(seed, "sample-db", 0);
    for ts in schemes {
        if seen.contains(&&ts.scheme) {
            continue;
        }
        seen.push(&ts.scheme);
        ts.scheme.validate(db.schema())?;
        let candidates = facts_with_complete_walk(db, &ts.scheme);
        if candidates.is_empty() {
            diagnostics.push(format!(
                "scheme {} has no instance",
                ts.scheme.render(db.schema())
            ));
            continue;
        }
        let m = facts_per_scheme.min(candidates.len());
        for i in index::sample(&mut rng, candidates.len(), m) {
            chosen.insert(candidates[i]);
        }
    }
    let seeds: Vec<FactId> = chosen.into_iter().collect();
    let mut keep = vec![false; db.len()];
    // Backward: everything referencing the seeds, transitively.
    let mut stack = Vec::new();
    for f in db.referencing_closure(&seeds) {
        keep[f.0] = true;
        stack.push(f);
    }
    // Forward: everything the kept facts reference.
    let n_fks = db.schema().foreign_keys().len();
    while let Some(f) = stack.pop() {
        for fk in 0..n_fks {
            let fk = crate::relational::FkId(fk);
            if db.schema().fk_source(fk) != db.facts()[f.0].relation {
                continue;
            }
            if let Some(g) = db.forward(fk, f) {
                if !keep[g.0] {
                    keep[g.0] = true;
                    stack.push(g);
                }
            }
        }
    }
    Ok((db.subset(&keep)?, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub facts_per_scheme: usize,
    pub epochs: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            facts_per_scheme: 10,
            epochs: 10,
        }
    }
}

/// Cumulative mean loss after `params.epochs` epochs on a sample database.
pub fn score_sampling(
    db: &Database,
    schemes: &[TargetedScheme],
    kernels: &Kernels,
    cfg: TrainConfig,
    params: SamplingParams,
) -> Result<Vec<SchemeScore>> {
    if params.epochs == 0 {
        return Err(Error::InvalidArgument("sampling needs >= 1 epoch".to_string()));
    }
    let (sample, _) = build_sample_database(db, schemes, params.facts_per_scheme, cfg.seed)?;
    let mut trainer = Trainer::new(&sample, kernels, schemes, cfg)?;
    let mut counts = vec![0usize; schemes.len()];
    let mut last = None;
    for _ in 0..params.epochs {
        last = Some(trainer.run_epoch_observed(&NoClock, &mut |s, _| counts[s.scheme] += 1)?);
    }
    let stats = last.expect("at least one epoch");
    Ok(scores_from_losses(StrategyId::Sampling, schemes, &stats, &counts))
}

/// Indices of `scores` from most to least valuable; ties go to the lower
/// index.
pub fn rank_order(scores: &[SchemeScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .score
            .total_cmp(&scores[a].score)
            .then(scores[a].index.cmp(&scores[b].index))
    });
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Kept schemes in canonical order.
    pub kept: Vec<TargetedScheme>,
    /// Removed schemes in canonical order.
    pub removed: Vec<TargetedScheme>,
    pub ratio: f64,
    pub scores: Vec<SchemeScore>,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(())
}

/// Keeps the top `⌈ratio·N⌉` schemes.
pub fn select(scores: &[SchemeScore], ratio: f64) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to select from".to_string()));
    }
    check_ratio(ratio)?;
    let n_keep = math::ceil_fraction(ratio, scores.len()).clamp(1, scores.len());
    let order = rank_order(scores);
    let mut keep = vec![false; scores.len()];
    for &i in &order[..n_keep] {
        keep[i] = true;
    }
    let mut canonical: Vec<usize> = (0..scores.len()).collect();
    canonical.sort_by_key(|&p| scores[p].index);
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for p in canonical {
        if keep[p] {
            kept.push(scores[p].tws.clone());
        } else {
            removed.push(scores[p].tws.clone());
        }
    }
    Ok(SelectionResult {
        kept,
        removed,
        ratio,
        scores: scores.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub ratio: f64,
    pub per_epoch_removals: usize,
    /// Removes the highest-loss schemes instead. Only a comparison baseline.
    pub invert: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineEpoch {
    pub stats: EpochStats,
    /// Model scheme indices retired after this epoch.
    pub removed: Vec<usize>,
    pub active_after: usize,
}

/// Number of schemes left after `epoch` epochs: `max(⌈rN⌉, N − epoch·k)`.
pub fn online_schedule(n: usize, ratio: f64, per_epoch_removals: usize, epoch: usize) -> usize {
    let keep = math::ceil_fraction(ratio, n);
    n.saturating_sub(epoch.saturating_mul(per_epoch_removals))
        .max(keep)
}

/// Trains one model and, after every epoch, retires the schemes with the
/// lowest mean loss in that epoch until `⌈r·N⌉` remain.
pub fn online_elimination_train(
    db: &Database,
    kernels: &Kernels,
    schemes: &[TargetedScheme],
    cfg: TrainConfig,
    online: OnlineConfig,
    clock: &dyn Clock,
    on_epoch: &mut dyn FnMut(&OnlineEpoch, &EmbeddingModel),
) -> Result<(EmbeddingModel, Vec<OnlineEpoch>)> {
    check_nonempty(schemes)?;
    check_ratio(online.ratio)?;
    if online.ratio * (schemes.len() as f64) < 1.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "ratio {} keeps no scheme out of {}",
            online.ratio,
            schemes.len()
        )));
    }
    if online.per_epoch_removals == 0 {
        return Err(Error::InvalidArgument(
            "per-epoch removals must be >= 1".to_string(),
        ));
    }
    let keep = math::ceil_fraction(online.ratio, schemes.len());
    let mut trainer = Trainer::new(db, kernels, schemes, cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch(clock)?;
        let active = trainer.model().active_indices();
        let n_remove = online.per_epoch_removals.min(active.len().saturating_sub(keep));
        let mut ranked = active;
        // Ascending value; removal takes from the front. Equal values drop
        // the later scheme first, matching `select`.
        ranked.sort_by(|&a, &b| {
            let la = stats.epoch_loss[a].unwrap_or(f64::NEG_INFINITY);
            let lb = stats.epoch_loss[b].unwrap_or(f64::NEG_INFINITY);
            let ord = if online.invert {
                lb.total_cmp(&la)
            } else {
                la.total_cmp(&lb)
            };
            ord.then(b.cmp(&a))
        });
        let mut removed: Vec<usize> = ranked[..n_remove].to_vec();
        removed.sort_unstable();
        for &i in &removed {
            trainer.retire(i)?;
        }
        let epoch = OnlineEpoch {
            stats,
            removed,
            active_after: trainer.model().n_active(),
        };
        on_epoch(&epoch, trainer.model());
        history.push(epoch);
    }
    Ok((trainer.into_model(), history))
}
