//! Classical and differentiable population-based optimizers (PSO, GA, DE,
//! CMA-ES) built on a small reverse-mode autodiff tape.

pub mod classic;
pub mod diff;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod linalg;
pub mod outer;
pub mod problems;
pub mod relax;
pub mod tape;

pub use error::{Error, Result};
