//! Offline reinforcement learning with latent-variable advantage-weighted
//! policies, on small analytic control tasks.
//!
//! The crate implements the full training stack from scratch: a reverse-mode
//! autodiff tape and dense networks ([`autodiff`]), analytic environments
//! with scripted data-collection policies ([`env`]), offline transition
//! datasets with a binary on-disk format ([`dataset`]), twin Q-critics with
//! advantage weighting ([`critic`]), a conditional latent-variable action
//! policy trained on an advantage-weighted variational bound ([`cvae`]), a
//! bounded deterministic latent policy trained by deterministic policy
//! gradients ([`latent`]), the alternating training loop plus baselines and
//! ablations ([`trainer`]), and evaluation / histogram tooling ([`eval`]).

pub mod autodiff;
pub mod critic;
pub mod cvae;
pub mod dataset;
pub mod env;
pub mod latent;
pub mod error;
pub mod rng;
pub mod wire;

pub use error::{Error, Result};
