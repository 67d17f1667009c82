//! Deterministic, seedable simulator of an IoT data market in which sellers
//! with correlated data form coalitions to resist price depression from
//! information leakage.
//!
//! The crate is organized around the market pipeline:
//!
//! - [`synth`] generates correlated seller datasets with known ground truth.
//! - [`learner`] trains the buyer-side regression model, scores data by its
//!   marginal contribution to convergence, and runs the buyer's
//!   type-estimation attack.
//! - [`valuation`] holds the valuation functions: set-based, learning
//!   precision, and leakage-depressed linear pricing.
//! - [`leakage`] estimates pairwise correlation online, derives the
//!   normalized influence matrix, and prices opportunity/coalition costs.
//! - [`coalition`] is the market core: coalition value, feasibility,
//!   hedonic preferences, and the three-phase MAJP solver.
//! - [`oracle`] is an independent brute-force ground truth used to
//!   cross-check the solver.
//! - [`experiment`] composes everything into seeded, reproducible scenario
//!   runs, Monte Carlo batches, and CSV reports; [`config`] is the file
//!   format behind the `dmarket` CLI.

pub mod coalition;
pub mod config;
pub mod error;
pub mod experiment;
pub mod leakage;
pub mod learner;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod synth;
pub mod valuation;

pub use error::{Error, Result};
