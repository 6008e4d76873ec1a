//! Hybrid quantum-classical user scheduling for single-cell massive MIMO downlink.
//!
//! The pipeline runs from correlated Rician channel statistics
//! ([`channel`]) through schedule evaluation ([`rate`]) to a learned
//! scheduling policy: a classical pre-layer compresses the beam-gain features
//! into rotation angles, a variational circuit simulated in [`quantum`]
//! transforms them, and a classical post-layer produces per-user logits
//! ([`model`]). Policies are trained with REINFORCE ([`training`]) and
//! benchmarked against a small CNN and exhaustive, greedy and random
//! schedulers ([`experiment`]).

pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod model;
pub mod quantum;
pub mod rate;
pub mod report;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
