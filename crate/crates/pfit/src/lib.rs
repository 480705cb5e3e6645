//! File formats, synthetic data and the `pfit` command-line tool around the
//! `pfit-core` prototype head.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{load_config, RunConfig};
pub use dataset::{load_dataset, save_dataset};
pub use error::{Error, Result};
pub use synthetic::{generate_synthetic, SynthSpec};
