//! Posterior sampling and maximum-likelihood fitting.

pub mod adapt;
pub mod diagnostics;
pub mod draws;
pub mod mle;
pub mod nuts;
pub mod optim;
pub mod rng;
pub mod tvarma;

pub use draws::{sample_chains, sample_posterior, summarize, ChainDiagnostics, Diagnostics, PosteriorDraws, Summary};
pub use nuts::{run_chain, ChainOutput, SamplerConfig};
pub use mle::{fit_mle_darma, FitFailure, InitStrategy, MleConfig, MleResult};
pub use optim::BfgsConfig;
pub use tvarma::{fit_tvarma, tvarma_spec};
