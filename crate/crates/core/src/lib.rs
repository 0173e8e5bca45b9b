//! Reward extrapolation from two suboptimal demonstrations.
//!
//! The crate covers the whole learning loop on toy environments with known
//! ground-truth rewards:
//!
//! - [`env`]: deterministic benchmark environments, demonstration policies
//!   and trajectory recording.
//! - [`genetics`]: crossover / mutation / interval selection that grows a
//!   multi-rank dataset out of one good and one bad demonstration.
//! - [`ranking`]: snippet subsampling and ordered snippet pairs.
//! - [`reward`]: the feed-forward reward model and its pairwise ranking loss.
//! - [`baselines`]: ranked-demonstration, noise-injection and behavioral
//!   cloning comparators.
//! - [`policy`]: value iteration and cross-entropy search on a learned reward.
//! - [`metrics`]: extrapolation and policy comparison statistics.
//!
//! Everything is `no_std` + `alloc`; file formats and orchestration live in
//! the `genil` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod dataset;
pub mod env;
pub mod error;
pub mod genetics;
mod math;
pub mod metrics;
pub mod mlp;
pub mod policy;
pub mod ranking;
pub mod reward;
pub mod seed;

pub use dataset::RankedDataset;
pub use env::{Action, EnvKind, EnvSpec, Environment, Source, State, Trajectory};
pub use error::{Error, Result};
