//! Entropy-based informative training-sample selection.
//!
//! The crate is `no_std` (with `alloc`) and holds every numeric piece of the
//! workflow: synthetic group-structured datasets and leakage-free splits, a
//! small probabilistic classifier with a two-stage Adam schedule, prediction
//! entropy scoring and subset selection, a Gaussian-process optimizer for the
//! informative proportion, and the evaluation statistics used to compare a
//! model trained on the full set against one trained on the selected subset.
//!
//! File formats, orchestration and the command line live in the `infosel`
//! companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bayesopt;
pub mod classifier;
pub mod dataset;
pub mod entropy;
mod error;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
