//! Numerical laboratory for generalised multiple intersection local times of Brownian motion:
//! chaos spectra of delta-increments, simplex quadrature of heat-kernel products, conditioned
//! path sampling, measure pairings, and the constrained path-energy minimisation behind the
//! large-deviation upper bound.

pub mod chaos;
pub mod error;
pub mod kernel;
pub mod par;
pub mod path;
pub mod qp;
pub mod quad;
pub mod rate;
pub mod sampler;
pub mod simplex;
pub mod theta;

pub use error::{Error, Result};
pub use kernel::Point;
