//! Perfect simulation of Markov chain stationary laws and Feynman–Kac path
//! measures through atomic regeneration, built on Bernoulli factories.
//!
//! Layout:
//! - [`factory`]: coin abstractions and the linear Bernoulli factory.
//! - [`regen`]: perfect samplers for chains with a singleton atom.
//! - [`smc`]: particle filters, conditional SMC and estimators.
//! - [`atomext`]: the atom-extended Feynman–Kac model and path sampler.
//! - [`diagnostics`]: checks on the regeneration lower bound.
//! - [`tours`]: parallel regeneration tours.
//! - [`models`]: concrete models and exact oracles.
//! - [`experiments`]: reproducible checks shared by tests and the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomext;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod factory;
pub mod models;
pub mod regen;
pub mod smc;
pub mod stream;
pub mod tours;

pub use error::{Error, Result};
