//! Spectral engine for one convex-integration stage of the 2D
//! Boussinesq–Reynolds system on the torus, with numerical checks of the
//! identities and estimates the construction relies on.

pub mod error;
pub mod fft;
pub mod fields;
pub mod blocks;
pub mod util;
pub mod evolution;
pub mod stage;
pub mod stress;
pub mod scheme;
pub mod pipeline;
pub mod verification;
pub mod config;
pub mod io;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
