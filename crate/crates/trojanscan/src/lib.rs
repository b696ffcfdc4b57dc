//! Black-box Trojan (backdoor) detection for neural networks.
//!
//! A Trojaned classifier behaves normally on clean inputs but maps inputs
//! carrying an attacker-chosen trigger to a malicious label. This crate
//! detects such models from their input-output behavior alone: it trains a
//! zoo of benign and deliberately Trojaned shadow models over a generic
//! distribution of trigger settings, then fits a small meta-classifier over
//! the shadow models' responses to a set of query inputs that is optimized
//! jointly with the meta-classifier by backpropagating through the shadow
//! models.
//!
//! Module map:
//! - [`diffnet`]: reverse-mode differentiable MLP core (tape, losses, Adam,
//!   input gradients).
//! - [`data`]: dataset container for the synthetic task.
//! - [`trojan`]: trigger function, attack-setting samplers, dataset
//!   poisoning, shadow-zoo generation.
//! - [`mntd`]: query-based feature extraction, meta-classifier training
//!   (two-class and one-class), target scoring, AUC.
//! - [`arms_race`]: adaptive attacker with white-box knowledge of a
//!   detector, and the frozen-random-detector countermeasure.
//! - [`artifacts`]: on-disk formats (model JSON, zoo manifest, meta state,
//!   reports).
//! - [`cli`]: config-driven experiment orchestration.

pub mod arms_race;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod data;
pub mod diffnet;
pub mod error;
pub mod mntd;
pub mod rng;
pub mod trojan;

pub use error::{Error, Result};
