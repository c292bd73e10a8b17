//! Tuple embeddings for relational databases learned from foreign-key random
//! walks, together with strategies for selecting which targeted walk schemes
//! to train on.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, wall-clock
//! timing and the command line live in the `relwalk` companion crate.
//!
//! Module map:
//!
//! * [`relational`]: schemas, foreign keys, facts and the FK traversal index.
//! * [`walks`]: walk-scheme enumeration, random walks, exact destination laws.
//! * [`kernels`]: per-attribute kernels and the expected kernel similarity.
//! * [`trainer`]: the bilinear embedding model and its SGD trainer.
//! * [`selection`]: scheme scoring strategies, selection and online elimination.
//! * [`extension`]: embedding newly inserted tuples with frozen parameters.
//! * [`eval`]: downstream classifier, cross validation and time-to-threshold.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod eval;
pub mod extension;
pub mod kernels;
pub mod linalg;
pub mod relational;
pub mod seed;
pub mod selection;
pub mod trainer;
pub mod walks;

pub use error::{Error, Result};
pub use kernels::{kd_exact, kd_mc, KdEstimate, Kernel, Kernels};
pub use relational::{
    AttributeDecl, Database, DatabaseSchema, DomainKind, Fact, FactId, FkId, ForeignKey, RelId,
    RelationSchema, Value,
};
pub use trainer::{EmbeddingModel, EpochStats, TrainConfig, Trainer};
pub use walks::{Direction, TargetedScheme, Walk, WalkScheme, WalkStep};
