pub mod covariance;
pub mod error;
pub mod kernel;
pub mod orthopoly;
pub mod propagator;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod scenario;
pub mod sde;
pub mod specfun;
pub mod stats;

pub use error::{ChainError, Result};
