//! Decentralized data-parallel SGD on a ring of learners.
//!
//! The crate is split into four layers:
//!
//! - [`mixing`]: doubly stochastic mixing matrices (fixed ring, randomized
//!   ring, uniform allreduce), their spectra and consensus-decay bounds.
//! - [`objectives`]: toy training tasks with exact gradients and seeded
//!   synthetic datasets.
//! - [`engine`]: the synchronous allreduce, fixed-mixing, random-mixing,
//!   delay-by-one and generic-staleness update rules, plus the training loop.
//! - [`chronos`]: a discrete-event timing model of the cluster used for
//!   straggler experiments and for event-ordered ("coupled") training.

pub mod chronos;
pub mod engine;
mod error;
pub mod linalg;
pub mod mixing;
pub mod objectives;
pub mod rng;

pub use error::{Error, Result};
