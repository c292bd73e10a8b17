//! Score files, selection manifests and epoch logs.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use relwalk_core::selection::{rank_order, SchemeScore, SelectionResult, StrategyId};
use relwalk_core::{DatabaseSchema, EpochStats, TargetedScheme};
use serde::{Deserialize, Serialize};

use crate::exit::DataError;

pub const MANIFEST_VERSION: u32 = 1;

/// CSV with columns `scheme_text, target_attr, strategy, score, rank,
/// diagnostics`, rows in canonical scheme order, rank 1 = most valuable.
pub fn write_scores(scores: &[SchemeScore], schema: &DatabaseSchema, path: &Path) -> Result<()> {
    let order = rank_order(scores);
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["scheme_text", "target_attr", "strategy", "score", "rank", "diagnostics"])?;
    for (i, s) in scores.iter().enumerate() {
        let mut diag = s.diagnostic.clone().unwrap_or_default();
        if let Some(n) = s.n_samples {
            if !diag.is_empty() {
                diag.push_str("; ");
            }
            diag.push_str(&format!("n_samples={n}"));
        }
        w.write_record([
            s.tws.scheme.render(schema),
            s.tws.target_name(schema).to_string(),
            s.strategy.as_str().to_string(),
            s.score.to_string(),
            rank[i].to_string(),
            diag,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub version: u32,
    pub strategy: String,
    pub ratio: f64,
    pub kept: Vec<String>,
    pub removed: Vec<String>,
    pub seed: u64,
}

impl SelectionManifest {
    pub fn new(
        result: &SelectionResult,
        strategy: StrategyId,
        seed: u64,
        schema: &DatabaseSchema,
    ) -> Self {
        SelectionManifest {
            version: MANIFEST_VERSION,
            strategy: strategy.as_str().to_string(),
            ratio: result.ratio,
            kept: result.kept.iter().map(|t| t.render(schema)).collect(),
            removed: result.removed.iter().map(|t| t.render(schema)).collect(),
            seed,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: SelectionManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if m.version != MANIFEST_VERSION {
            bail!(
                "selection manifest version {} is not supported (expected {MANIFEST_VERSION})",
                m.version
            );
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::manifest::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Maps scheme texts back to schemes of `all`, returned in the canonical
/// order of `all`.
pub fn resolve_schemes(
    texts: &[String],
    all: &[TargetedScheme],
    schema: &DatabaseSchema,
) -> Result<Vec<TargetedScheme>> {
    let mut by_text: HashMap<String, usize> = HashMap::new();
    for (i, t) in all.iter().enumerate() {
        if by_text.insert(t.render(schema), i).is_some() {
            bail!(DataError(format!("scheme text `{}` is ambiguous", t.render(schema))));
        }
    }
    let mut picked = Vec::with_capacity(texts.len());
    for text in texts {
        match by_text.get(text) {
            Some(&i) => picked.push(i),
            None => bail!(DataError(format!("manifest names unknown scheme `{text}`"))),
        }
    }
    picked.sort_unstable();
    picked.dedup();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

/// Long-format epoch log: one row per epoch and scheme.
pub struct EpochLog {
    writer: csv::Writer<std::fs::File>,
    texts: Vec<String>,
    elapsed: f64,
}

impl EpochLog {
    pub fn create(path: &Path, schemes: &[TargetedScheme], schema: &DatabaseSchema) -> Result<Self> {
        let mut writer =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record([
            "epoch",
            "wall_time",
            "cumulative_time",
            "scheme",
            "trained",
            "epoch_loss",
            "cumulative_loss",
        ])?;
        Ok(EpochLog {
            writer,
            texts: schemes.iter().map(|t| t.render(schema)).collect(),
            elapsed: 0.0,
        })
    }

    pub fn record(&mut self, stats: &EpochStats) -> Result<()> {
        self.elapsed += stats.wall_time;
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for (i, text) in self.texts.iter().enumerate() {
            self.writer.write_record([
                stats.epoch.to_string(),
                stats.wall_time.to_string(),
                self.elapsed.to_string(),
                text.clone(),
                stats.epoch_loss[i].is_some().to_string(),
                fmt(stats.epoch_loss[i]),
                fmt(stats.cumulative_loss[i]),
            ])?;
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// Writes `(time, accuracy)` rows with a header.
pub fn write_curve(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "time,accuracy")?;
    for (t, a) in points {
        writeln!(f, "{t},{a}")?;
    }
    Ok(())
}
