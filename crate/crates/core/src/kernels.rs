//! Attribute kernels and the expected kernel similarity between destination
//! distributions.
//!
//! `KD(d_{s,f}[A], d_{s,f'}[A])` is the expectation of `κ_A` over two
//! independent random walks, one from each start fact, with null targets
//! renormalized away. Despite the customary name "expected kernel distance"
//! it is a similarity: 1 for identical point masses, 0 for disjoint
//! categorical supports.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::relational::{Database, DomainKind, FactId, RelId, Value};
use crate::walks::{dest_attr_sample, exact_dest_distribution, TargetedScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// 1 on equal categories, else 0.
    CategoricalEquality,
    /// 1 on equal strings, else 0.
    TextEquality,
    /// `exp(-(a-b)^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
}

impl Kernel {
    pub fn kind(&self) -> DomainKind {
        match self {
            Kernel::CategoricalEquality => DomainKind::Categorical,
            Kernel::TextEquality => DomainKind::Text,
            Kernel::Gaussian { .. } => DomainKind::Numeric,
        }
    }

    pub fn eval(&self, a: &Value, b: &Value) -> Result<f64> {
        match (self, a, b) {
            (_, Value::Null, _) | (_, _, Value::Null) => {
                Err(Error::Kernel("kernel applied to null".to_string()))
            }
            (Kernel::CategoricalEquality, Value::Categorical(x), Value::Categorical(y))
            | (Kernel::TextEquality, Value::Text(x), Value::Text(y)) => {
                Ok(if x == y { 1.0 } else { 0.0 })
            }
            (Kernel::Gaussian { sigma }, Value::Numeric(x), Value::Numeric(y)) => {
                let d = x - y;
                Ok(math::exp(-(d * d) / (2.0 * sigma * sigma)))
            }
            _ => Err(Error::Kernel(format!(
                "{} kernel cannot compare `{a}` and `{b}`",
                self.kind().as_str()
            ))),
        }
    }
}

/// One kernel per attribute of every relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernels {
    per_relation: Vec<Vec<Kernel>>,
}

impl Kernels {
    /// Equality kernels for categorical and text attributes; Gaussian kernels
    /// for numeric attributes with `sigma` the sample standard deviation of
    /// the active domain (1 when that is degenerate).
    pub fn defaults(db: &Database) -> Self {
        let schema = db.schema();
        let per_relation = schema
            .relations()
            .iter()
            .enumerate()
            .map(|(r, rel)| {
                rel.attributes
                    .iter()
                    .enumerate()
                    .map(|(a, decl)| match decl.kind {
                        DomainKind::Categorical => Kernel::CategoricalEquality,
                        DomainKind::Text => Kernel::TextEquality,
                        DomainKind::Numeric => {
                            let xs: Vec<f64> = db
                                .active_domain_of(RelId(r), a)
                                .iter()
                                .filter_map(Value::as_f64)
                                .collect();
                            let (_, sd) = math::mean_std(&xs);
                            let sigma = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
                            Kernel::Gaussian { sigma }
                        }
                    })
                    .collect()
            })
            .collect();
        Kernels { per_relation }
    }

    pub fn get(&self, rel: RelId, attr: usize) -> &Kernel {
        &self.per_relation[rel.0][attr]
    }

    /// Replaces one kernel; the kernel must fit the attribute's domain.
    pub fn set(&mut self, db: &Database, rel: RelId, attr: usize, kernel: Kernel) -> Result<()> {
        let decl = &db.schema().relation(rel).attributes[attr];
        if decl.kind != kernel.kind() {
            return Err(Error::Kernel(format!(
                "{} kernel does not fit `{}` ({})",
                kernel.kind().as_str(),
                decl.name,
                decl.kind.as_str()
            )));
        }
        if let Kernel::Gaussian { sigma } = kernel {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Kernel(format!("sigma must be positive, got {sigma}")));
            }
        }
        self.per_relation[rel.0][attr] = kernel;
        Ok(())
    }

    pub fn for_target(&self, db: &Database, ts: &TargetedScheme) -> &Kernel {
        self.get(ts.scheme.end_relation(db.schema()), ts.target)
    }
}

/// Exact expected kernel similarity of two start facts under `ts`.
pub fn kd_exact(
    db: &Database,
    f: FactId,
    g: FactId,
    ts: &TargetedScheme,
    kernel: &Kernel,
) -> Result<f64> {
    let df = exact_dest_distribution(db, f, &ts.scheme)?.without_nulls(db, ts.target);
    let dg = exact_dest_distribution(db, g, &ts.scheme)?.without_nulls(db, ts.target);
    if df.is_empty() || dg.is_empty() {
        return Err(Error::NoSamples(format!(
            "no non-null destination for fact {} or {}",
            f.0, g.0
        )));
    }
    let mut total = 0.0;
    for (&a, &pa) in &df.support {
        for (&b, &pb) in &dg.support {
            total += pa * pb * kernel.eval(db.value(a, ts.target), db.value(b, ts.target))?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdEstimate {
    pub value: f64,
    pub n_pairs: usize,
    /// Sample standard deviation over `sqrt(n_pairs)`.
    pub stderr: f64,
}

/// Monte Carlo estimate of [`kd_exact`] from `n` independent destination
/// pairs. Pairs where either walk dead-ends are skipped and not counted.
#[allow(clippy::too_many_arguments)]
pub fn kd_mc<R: Rng + ?Sized>(
    db: &Database,
    f: FactId,
    g: FactId,
    ts: &TargetedScheme,
    kernel: &Kernel,
    n: usize,
    retry_cap: usize,
    rng: &mut R,
) -> Result<KdEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("kd_mc needs n >= 1".to_string()));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let a = dest_attr_sample(db, f, ts, retry_cap, rng)?;
        let b = dest_attr_sample(db, g, ts, retry_cap, rng)?;
        if let (Some(a), Some(b)) = (a, b) {
            values.push(kernel.eval(a, b)?);
        }
    }
    if values.is_empty() {
        return Err(Error::NoSamples(format!(
            "all {n} pairs dead-ended for facts {} and {}",
            f.0, g.0
        )));
    }
    let (mean, sd) = math::mean_std(&values);
    Ok(KdEstimate {
        value: mean,
        n_pairs: values.len(),
        stderr: sd / math::sqrt(values.len() as f64),
    })
}
