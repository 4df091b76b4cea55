//! File formats, the end-to-end pipeline and the command-line front end for
//! entropy-based informative sample selection. The numerical work lives in
//! `infosel-core`.

pub mod artifacts;
pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod verify;

pub use error::{Error, Result};
pub use infosel_core as core;
