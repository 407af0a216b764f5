//! Cyclical MCMC on Gaussian-mixture targets.
//!
//! The sampler sweeps the inverse temperature `β` from 1 down to a floor and
//! back once per cycle of `L` Metropolis–Hastings steps and keeps the state
//! at each cycle end. [`spectral`] rebuilds the same scheme on a finite grid,
//! where every law can be propagated exactly and the convergence bounds
//! checked number by number.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod spectral;
pub mod targets;

pub use error::{Error, Result};
