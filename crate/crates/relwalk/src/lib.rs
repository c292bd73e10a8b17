//! File formats, datasets, experiments and the command line for
//! `relwalk-core`.

pub mod config;
pub mod dataset;
pub mod descriptor;
pub mod exit;
pub mod experiment;
pub mod formats;
pub mod manifest;
pub mod model_io;
pub mod synth;
