//! Embeddings for facts inserted after training.
//!
//! With every `ψ` and every existing `φ` frozen, the training objective
//! restricted to one new fact `f*` is linear in `φ(f*)`: each pair of an
//! active scheme `(s,A)` and an existing partner `f'` contributes the
//! equation
//!
//! ```text
//! (ψ(s,A) φ(f'))ᵀ φ(f*) = KD(d_{s,f*}[A], d_{s,f'}[A])
//! ```
//!
//! and `φ(f*)` is the ridge least-squares solution of the stacked system.
//! Partners are drawn from the facts embedded before the call, never from the
//! batch being inserted, and every new fact uses its own seed stream, so the
//! result for a fact does not depend on which other facts arrive with it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::kernels::{kd_exact, Kernels};
use crate::linalg::ridge_solve;
use crate::relational::{Database, FactId};
use crate::seed::rng_for;
use crate::trainer::EmbeddingModel;
use crate::walks::attr_sample_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartnerMode {
    /// `partners_per_scheme` distinct partners per scheme, drawn at random.
    Sampled,
    /// Every embedded fact.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Mean kernel value over `samples_per_partner` walk pairs.
    Sampled,
    /// Exact expected kernel similarity.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionConfig {
    pub partners_per_scheme: usize,
    pub samples_per_partner: usize,
    pub lambda: f64,
    pub seed: u64,
    pub retry_cap: usize,
    pub partners: PartnerMode,
    pub targets: TargetMode,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            partners_per_scheme: 10,
            samples_per_partner: 5,
            lambda: 1e-6,
            seed: 0,
            retry_cap: 20,
            partners: PartnerMode::Sampled,
            targets: TargetMode::Sampled,
        }
    }
}

impl ExtensionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.partners_per_scheme == 0 || self.samples_per_partner == 0 || self.retry_cap == 0
        {
            return Err(Error::InvalidArgument(
                "partner, sample and retry counts must be positive".to_string(),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridge lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// The linear system for one new fact: rows `ψ φ(f')` and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionSystem {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// Builds the equations for `f` against the partners in `partners`.
pub fn build_system(
    db: &Database,
    model: &EmbeddingModel,
    kernels: &Kernels,
    f: FactId,
    partners: &[FactId],
    cfg: &ExtensionConfig,
) -> Result<ExtensionSystem> {
    let mut rng = rng_for(cfg.seed, "extend", f.0 as u64);
    let k = model.dim();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut scratch = Vec::with_capacity(k);
    for idx in model.active_indices() {
        let params = &model.schemes()[idx];
        let ts = &params.scheme;
        let kernel = kernels.for_target(db, ts);
        let chosen: Vec<FactId> = match cfg.partners {
            PartnerMode::All => partners.to_vec(),
            PartnerMode::Sampled => {
                let m = cfg.partners_per_scheme.min(partners.len());
                let mut picks: Vec<usize> = index::sample(&mut rng, partners.len(), m).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| partners[i]).collect()
            }
        };
        for g in chosen {
            let target = match cfg.targets {
                TargetMode::Exact => match kd_exact(db, f, g, ts, kernel) {
                    Ok(v) => Some(v),
                    Err(Error::NoSamples(_)) => None,
                    Err(e) => return Err(e),
                },
                TargetMode::Sampled => {
                    let (mut sum, mut n) = (0.0, 0usize);
                    for _ in 0..cfg.samples_per_partner {
                        let a = attr_sample_unchecked(db, f, ts, cfg.retry_cap, &mut rng);
                        let b = attr_sample_unchecked(db, g, ts, cfg.retry_cap, &mut rng);
                        if let (Some(a), Some(b)) = (a, b) {
                            sum += kernel.eval(a, b)?;
                            n += 1;
                        }
                    }
                    (n > 0).then(|| sum / n as f64)
                }
            };
            let Some(target) = target else { continue };
            let pg = model.phi(g).ok_or(Error::UnknownFact(g.0))?;
            scratch.clear();
            for i in 0..k {
                scratch.push((0..k).map(|j| params.psi.get(i, j) * pg[j]).sum());
            }
            rows.push(scratch.clone());
            targets.push(target);
        }
    }
    Ok(ExtensionSystem { rows, targets })
}

/// Returns a copy of `model` with embeddings for `new_facts`, which must be
/// facts of the start relation in `db` that the model does not embed yet.
/// Existing embeddings and all `ψ` are copied unchanged.
pub fn extend_embedding(
    db: &Database,
    model: &EmbeddingModel,
    kernels: &Kernels,
    new_facts: &[FactId],
    cfg: &ExtensionConfig,
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    if model.n_active() == 0 {
        return Err(Error::InvalidArgument("model has no active scheme".to_string()));
    }
    let start = model.start();
    let mut seen = BTreeSet::new();
    for &f in new_facts {
        let fact = db.fact(f)?;
        if fact.relation != start {
            return Err(Error::RelationMismatch {
                fact: f.0,
                relation: db.schema().relation(start).name.clone(),
            });
        }
        if model.phi(f).is_some() {
            return Err(Error::InvalidArgument(format!("fact {} is already embedded", f.0)));
        }
        if !seen.insert(f) {
            return Err(Error::InvalidArgument(format!("fact {} listed twice", f.0)));
        }
    }
    for s in model.schemes() {
        s.scheme.validate(db.schema())?;
    }
    let partners: Vec<FactId> = model.embedded().collect();
    if partners.is_empty() {
        return Err(Error::InvalidArgument("model embeds no fact".to_string()));
    }
    let mut solved = Vec::with_capacity(new_facts.len());
    for &f in new_facts {
        let system = build_system(db, model, kernels, f, &partners, cfg)?;
        if system.rows.is_empty() {
            return Err(Error::NoSamples(format!(
                "fact {} has no complete walk for any active scheme",
                f.0
            )));
        }
        let x = ridge_solve(&system.rows, &system.targets, cfg.lambda)?;
        solved.push((f, x));
    }
    let mut out = model.clone();
    for (f, x) in solved {
        out.set_phi(f, &x);
    }
    Ok(out)
}
