//! Dynamic-capacity prototypical head.
//!
//! A set of learned prototypes sits on top of a feature encoder. Each
//! prototype carries its own class logits (or a scalar estimate for
//! regression) and a variance; predictions mix the per-prototype outputs by
//! normalized Gaussian responsibility. During training, prototypes are spawned
//! when an example lies too far from every prototype of its class, and pruned
//! when their discounted importance over a sliding window stays negligible.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line
//! live in the `pfit` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod encoder;
pub mod error;
pub mod inference;
pub mod math;
pub mod objective;
pub mod store;
pub mod train;

pub use config::TrainConfig;
pub use data::{ClassLabel, Dataset, EmbeddedExample, Example, Target, Task};
pub use dynamics::{ImportanceWindow, Lambda};
pub use encoder::{Encoder, EncoderKind, EncoderSpec};
pub use error::{Error, Result};
pub use inference::{ImportanceRow, Prediction};
pub use store::{HeadMode, Prototype, PrototypeId, PrototypeStore};
pub use train::{HistoryRow, TrainState, Trainer};
