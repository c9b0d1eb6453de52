//! Mean-square random unstable invariant manifolds and stable invariant sets
//! of spectrally discretized stochastic evolution equations with non-dense
//! domain, computed by Lyapunov–Perron fixed points over Monte Carlo
//! ensembles.

pub mod condexp;
pub mod config;
pub mod error;
pub mod io;
pub mod lyapunov_perron;
pub mod resolvent;
pub mod spectral_problem;
pub mod stochastic;
pub mod validate;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
