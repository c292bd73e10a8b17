//! The bilinear embedding model and its SGD trainer.
//!
//! The model holds one vector `φ(f) ∈ ℝ^k` per start fact and one symmetric
//! matrix `ψ(s,A)` per targeted scheme, and fits `φ(f)ᵀψ(s,A)φ(f')` to the
//! expected kernel similarity of the two facts' destination values. Each
//! training sample `(f, f', s, A, g, g')` contributes
//!
//! ```text
//! L = ½ (φ(f)ᵀ ψ(s,A) φ(f') − κ_A(g[A], g'[A]))²
//! ```
//!
//! and is applied immediately as one plain SGD step (batch size one).
//!
//! Training is single threaded and fully determined by [`TrainConfig::seed`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, Kernels};
use crate::math;
use crate::relational::{Database, FactId, RelId};
use crate::seed::{rng_for, Rng};
use crate::walks::{attr_sample_unchecked, TargetedScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Embedding dimension `k`.
    pub dim: usize,
    /// Partner samples per (fact, scheme) and epoch.
    pub n_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Walk redraws before a dead end or null target gives up.
    pub retry_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            n_samples: 5,
            epochs: 10,
            learning_rate: 0.05,
            seed: 0,
            retry_cap: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_samples == 0 || self.epochs == 0 || self.retry_cap == 0 {
            return Err(Error::InvalidArgument(
                "dim, n_samples, epochs and retry_cap must be positive".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A `k × k` symmetric matrix. Updates always write `(i, j)` and `(j, i)`
/// with the same value, so symmetry is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        SymMatrix { dim, data }
    }

    /// From row-major entries; rejects non-symmetric input.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} matrix entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        let m = SymMatrix { dim, data };
        if !m.is_symmetric() {
            return Err(Error::InvalidArgument("matrix is not symmetric".to_string()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn quad(&self, x: &[f64], y: &[f64]) -> f64 {
        self.data
            .chunks_exact(self.dim)
            .zip(x)
            .map(|(row, xi)| xi * row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

/// ψ of one targeted scheme. Retired schemes keep their (frozen) matrix but
/// take no part in training or extension.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub scheme: TargetedScheme,
    pub psi: SymMatrix,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    start: RelId,
    rows: BTreeMap<FactId, usize>,
    phi: Vec<f64>,
    schemes: Vec<SchemeParams>,
}

impl EmbeddingModel {
    /// `φ` i.i.d. uniform on `(−1/√k, 1/√k)`, every `ψ` the identity.
    pub fn init(db: &Database, schemes: &[TargetedScheme], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let start = check_schemes(db, schemes)?;
        let mut rng = rng_for(cfg.seed, "init", 0);
        let bound = 1.0 / math::sqrt(cfg.dim as f64);
        let facts = db.facts_of(start);
        let mut rows = BTreeMap::new();
        let mut phi = Vec::with_capacity(facts.len() * cfg.dim);
        for (i, &f) in facts.iter().enumerate() {
            rows.insert(f, i);
            for _ in 0..cfg.dim {
                phi.push(rng.random_range(-bound..bound));
            }
        }
        let schemes = schemes
            .iter()
            .map(|ts| SchemeParams {
                scheme: ts.clone(),
                psi: SymMatrix::identity(cfg.dim),
                active: true,
            })
            .collect();
        Ok(EmbeddingModel {
            dim: cfg.dim,
            start,
            rows,
            phi,
            schemes,
        })
    }

    /// Assembles a model from explicit parameters (deserialization, tests).
    pub fn from_parts(
        dim: usize,
        start: RelId,
        phi: Vec<(FactId, Vec<f64>)>,
        schemes: Vec<SchemeParams>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".to_string()));
        }
        let mut rows = BTreeMap::new();
        let mut flat = Vec::with_capacity(phi.len() * dim);
        for (i, (f, v)) in phi.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "embedding of fact {} has {} entries, expected {dim}",
                    f.0,
                    v.len()
                )));
            }
            if rows.insert(f, i).is_some() {
                return Err(Error::InvalidArgument(format!("fact {} embedded twice", f.0)));
            }
            flat.extend(v);
        }
        for s in &schemes {
            if s.psi.dim() != dim {
                return Err(Error::InvalidArgument("ψ has the wrong dimension".to_string()));
            }
            if s.scheme.scheme.start != start {
                return Err(Error::InvalidArgument(
                    "all schemes must start at the embedded relation".to_string(),
                ));
            }
        }
        Ok(EmbeddingModel {
            dim,
            start,
            rows,
            phi: flat,
            schemes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> RelId {
        self.start
    }

    pub fn phi(&self, f: FactId) -> Option<&[f64]> {
        let r = *self.rows.get(&f)?;
        Some(&self.phi[r * self.dim..(r + 1) * self.dim])
    }

    /// Embedded facts in id order.
    pub fn embedded(&self) -> impl Iterator<Item = FactId> + '_ {
        self.rows.keys().copied()
    }

    pub fn n_embedded(&self) -> usize {
        self.rows.len()
    }

    pub fn schemes(&self) -> &[SchemeParams] {
        &self.schemes
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.schemes.len())
            .filter(|&i| self.schemes[i].active)
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.schemes.iter().filter(|s| s.active).count()
    }

    /// Stops training `ψ` of scheme `idx`; its matrix stays as it is.
    pub fn retire(&mut self, idx: usize) -> Result<()> {
        self.schemes
            .get_mut(idx)
            .ok_or(Error::UnknownScheme(idx))?
            .active = false;
        Ok(())
    }

    /// `φ(f)ᵀ ψ(s,A) φ(g)` for scheme `idx`.
    pub fn bilinear(&self, f: FactId, g: FactId, idx: usize) -> Result<f64> {
        let pf = self.phi(f).ok_or(Error::UnknownFact(f.0))?;
        let pg = self.phi(g).ok_or(Error::UnknownFact(g.0))?;
        let params = self.schemes.get(idx).ok_or(Error::UnknownScheme(idx))?;
        if !params.active {
            return Err(Error::UnknownScheme(idx));
        }
        Ok(params.psi.quad(pf, pg))
    }

    /// Adds or replaces `φ(f)`.
    pub(crate) fn set_phi(&mut self, f: FactId, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        match self.rows.get(&f) {
            Some(&r) => self.phi[r * self.dim..(r + 1) * self.dim].copy_from_slice(v),
            None => {
                self.rows.insert(f, self.rows.len());
                self.phi.extend_from_slice(v);
            }
        }
    }

    fn row(&self, f: FactId) -> Result<usize> {
        self.rows.get(&f).copied().ok_or(Error::UnknownFact(f.0))
    }
}

fn check_schemes(db: &Database, schemes: &[TargetedScheme]) -> Result<RelId> {
    let first = schemes
        .first()
        .ok_or_else(|| Error::InvalidArgument("scheme list is empty".to_string()))?;
    let start = first.scheme.start;
    for ts in schemes {
        ts.validate(db.schema())?;
        if ts.scheme.start != start {
            return Err(Error::InvalidArgument(
                "all schemes must share one start relation".to_string(),
            ));
        }
    }
    Ok(start)
}

/// One training tuple; the destinations `g, g'` enter only through `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingSample {
    pub f: FactId,
    pub partner: FactId,
    pub scheme: usize,
}

/// Analytic gradients of the per-sample loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `r · ψ φ(f')`
    pub phi_f: Vec<f64>,
    /// `r · ψᵀ φ(f)`
    pub phi_partner: Vec<f64>,
    /// `r · φ(f) φ(f')ᵀ`, row-major, before symmetrization.
    pub psi: Vec<f64>,
    /// `r = φ(f)ᵀψφ(f') − κ`
    pub residual: f64,
}

impl Gradients {
    /// The ψ gradient projected onto symmetric matrices, `(G + Gᵀ)/2`.
    pub fn psi_symmetric(&self) -> Vec<f64> {
        let k = self.phi_f.len();
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = 0.5 * (self.psi[i * k + j] + self.psi[j * k + i]);
            }
        }
        out
    }
}

/// The per-sample loss `½ r²`.
pub fn sample_loss(model: &EmbeddingModel, sample: &TrainingSample, kappa: f64) -> Result<f64> {
    let r = model.bilinear(sample.f, sample.partner, sample.scheme)? - kappa;
    Ok(0.5 * r * r)
}

pub fn loss_and_gradients(
    model: &EmbeddingModel,
    sample: &TrainingSample,
    kappa: f64,
) -> Result<(f64, Gradients)> {
    let k = model.dim;
    let pf = model.phi(sample.f).ok_or(Error::UnknownFact(sample.f.0))?;
    let pg = model
        .phi(sample.partner)
        .ok_or(Error::UnknownFact(sample.partner.0))?;
    let psi = &model
        .schemes
        .get(sample.scheme)
        .ok_or(Error::UnknownScheme(sample.scheme))?
        .psi;
    let mut u = vec![0.0; k];
    let mut v = vec![0.0; k];
    psi.mul_vec(pg, &mut u);
    psi.mul_vec(pf, &mut v);
    let r = pf.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - kappa;
    let mut g_psi = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g_psi[i * k + j] = r * pf[i] * pg[j];
        }
    }
    Ok((
        0.5 * r * r,
        Gradients {
            phi_f: u.iter().map(|x| r * x).collect(),
            phi_partner: v.iter().map(|x| r * x).collect(),
            psi: g_psi,
            residual: r,
        },
    ))
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    pf: Vec<f64>,
    pg: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Scratch {
            pf: vec![0.0; k],
            pg: vec![0.0; k],
            u: vec![0.0; k],
            v: vec![0.0; k],
        }
    }
}

/// One SGD step on a single sample; returns the loss before the update.
pub fn sgd_step(
    model: &mut EmbeddingModel,
    sample: &TrainingSample,
    kappa: f64,
    lr: f64,
) -> Result<f64> {
    let mut scratch = Scratch::new(model.dim);
    step_in_place(model, sample, kappa, lr, &mut scratch)
}

fn step_in_place(
    model: &mut EmbeddingModel,
    sample: &TrainingSample,
    kappa: f64,
    lr: f64,
    s: &mut Scratch,
) -> Result<f64> {
    if sample.f == sample.partner {
        return Err(Error::InvalidArgument("sample needs f != f'".to_string()));
    }
    let k = model.dim;
    let rf = model.row(sample.f)?;
    let rg = model.row(sample.partner)?;
    s.pf.copy_from_slice(&model.phi[rf * k..(rf + 1) * k]);
    s.pg.copy_from_slice(&model.phi[rg * k..(rg + 1) * k]);
    let params = model
        .schemes
        .get_mut(sample.scheme)
        .ok_or(Error::UnknownScheme(sample.scheme))?;
    let psi = &mut params.psi;
    psi.mul_vec(&s.pg, &mut s.u);
    psi.mul_vec(&s.pf, &mut s.v);
    let r = s.pf.iter().zip(&s.u).map(|(a, b)| a * b).sum::<f64>() - kappa;
    if !r.is_finite() {
        return Err(Error::NonFinite(format!(
            "residual {r} for facts {} and {} on scheme {}",
            sample.f.0, sample.partner.0, sample.scheme
        )));
    }
    let loss = 0.5 * r * r;
    if r == 0.0 {
        return Ok(loss);
    }
    let step = lr * r;
    for i in 0..k {
        for j in i..k {
            let g = 0.5 * step * (s.pf[i] * s.pg[j] + s.pf[j] * s.pg[i]);
            psi.data[i * k + j] -= g;
            if i != j {
                psi.data[j * k + i] = psi.data[i * k + j];
            }
        }
    }
    for i in 0..k {
        model.phi[rf * k + i] = s.pf[i] - step * s.u[i];
        model.phi[rg * k + i] = s.pg[i] - step * s.v[i];
    }
    Ok(loss)
}

/// Source of elapsed seconds for epoch timing. `core` has no clock, so the
/// caller supplies one.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

impl<F: Fn() -> f64> Clock for F {
    fn now(&self) -> f64 {
        self()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean sample loss of this epoch per model scheme; `None` for retired
    /// schemes and schemes without a usable sample.
    pub epoch_loss: Vec<Option<f64>>,
    /// `L_i`: mean loss over all epochs so far, per model scheme.
    pub cumulative_loss: Vec<Option<f64>>,
    pub mean_loss: Option<f64>,
    pub wall_time: f64,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    sample: TrainingSample,
    kappa: f64,
}

/// Stateful trainer: one model, one RNG stream, loss accumulators.
pub struct Trainer<'a> {
    db: &'a Database,
    cfg: TrainConfig,
    model: EmbeddingModel,
    kernels: Vec<Kernel>,
    start_facts: Vec<FactId>,
    rng: Rng,
    cumulative: Vec<(f64, usize)>,
    epochs_done: usize,
    scratch: Scratch,
    pending: Vec<Pending>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        db: &'a Database,
        kernels: &Kernels,
        schemes: &[TargetedScheme],
        cfg: TrainConfig,
    ) -> Result<Self> {
        let model = EmbeddingModel::init(db, schemes, &cfg)?;
        Trainer::with_model(db, kernels, model, cfg)
    }

    /// Continues training an existing model.
    pub fn with_model(
        db: &'a Database,
        kernels: &Kernels,
        model: EmbeddingModel,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.dim != cfg.dim {
            return Err(Error::InvalidArgument(format!(
                "model dimension {} differs from configured {}",
                model.dim, cfg.dim
            )));
        }
        let start_facts: Vec<FactId> = db.facts_of(model.start).to_vec();
        if start_facts.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "relation `{}` needs at least two facts to form pairs",
                db.schema().relation(model.start).name
            )));
        }
        for &f in &start_facts {
            model.row(f)?;
        }
        for s in &model.schemes {
            s.scheme.validate(db.schema())?;
        }
        let kernels = model
            .schemes
            .iter()
            .map(|s| *kernels.for_target(db, &s.scheme))
            .collect();
        let n = model.schemes.len();
        Ok(Trainer {
            db,
            cfg,
            kernels,
            start_facts,
            rng: rng_for(cfg.seed, "train", 0),
            cumulative: vec![(0.0, 0); n],
            epochs_done: 0,
            scratch: Scratch::new(cfg.dim),
            pending: Vec::new(),
            model,
        })
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn into_model(self) -> EmbeddingModel {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn retire(&mut self, idx: usize) -> Result<()> {
        self.model.retire(idx)
    }

    pub fn run_epoch(&mut self, clock: &dyn Clock) -> Result<EpochStats> {
        self.run_epoch_observed(clock, &mut |_, _| {})
    }

    /// Runs one epoch and reports every applied sample with its loss.
    pub fn run_epoch_observed(
        &mut self,
        clock: &dyn Clock,
        observe: &mut dyn FnMut(&TrainingSample, f64),
    ) -> Result<EpochStats> {
        let t0 = clock.now();
        let active = self.model.active_indices();
        let n = self.start_facts.len();
        let mut skipped = 0;
        self.pending.clear();
        for (i, &f) in self.start_facts.iter().enumerate() {
            for &idx in &active {
                let ts = &self.model.schemes[idx].scheme;
                for _ in 0..self.cfg.n_samples {
                    let mut j = self.rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    let partner = self.start_facts[j];
                    let a = attr_sample_unchecked(self.db, f, ts, self.cfg.retry_cap, &mut self.rng);
                    let b = attr_sample_unchecked(
                        self.db,
                        partner,
                        ts,
                        self.cfg.retry_cap,
                        &mut self.rng,
                    );
                    match (a, b) {
                        (Some(a), Some(b)) => self.pending.push(Pending {
                            sample: TrainingSample {
                                f,
                                partner,
                                scheme: idx,
                            },
                            kappa: self.kernels[idx].eval(a, b)?,
                        }),
                        _ => skipped += 1,
                    }
                }
            }
        }
        self.pending.shuffle(&mut self.rng);

        let n_schemes = self.model.schemes.len();
        let mut epoch_sum = vec![(0.0, 0usize); n_schemes];
        for p in &self.pending {
            let loss = step_in_place(
                &mut self.model,
                &p.sample,
                p.kappa,
                self.cfg.learning_rate,
                &mut self.scratch,
            )?;
            observe(&p.sample, loss);
            let e = &mut epoch_sum[p.sample.scheme];
            e.0 += loss;
            e.1 += 1;
        }
        let wall_time = clock.now() - t0;

        self.epochs_done += 1;
        let mut total = (0.0, 0usize);
        for (c, e) in self.cumulative.iter_mut().zip(&epoch_sum) {
            c.0 += e.0;
            c.1 += e.1;
            total.0 += e.0;
            total.1 += e.1;
        }
        let mean = |(s, c): &(f64, usize)| (*c > 0).then(|| s / *c as f64);
        Ok(EpochStats {
            epoch: self.epochs_done,
            epoch_loss: epoch_sum.iter().map(mean).collect(),
            cumulative_loss: self.cumulative.iter().map(mean).collect(),
            mean_loss: mean(&total),
            wall_time,
            samples_used: self.pending.len(),
            samples_skipped: skipped,
        })
    }
}

/// Trains `cfg.epochs` epochs from a fresh model, calling `on_epoch` after
/// each one.
pub fn train(
    db: &Database,
    kernels: &Kernels,
    schemes: &[TargetedScheme],
    cfg: TrainConfig,
    clock: &dyn Clock,
    on_epoch: &mut dyn FnMut(&EpochStats, &EmbeddingModel),
) -> Result<(EmbeddingModel, Vec<EpochStats>)> {
    let mut trainer = Trainer::new(db, kernels, schemes, cfg)?;
    let mut stats = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let s = trainer.run_epoch(clock)?;
        on_epoch(&s, trainer.model());
        stats.push(s);
    }
    Ok((trainer.into_model(), stats))
}
