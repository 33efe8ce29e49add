pub mod adjoint_opt;
pub mod cli;
pub mod control_cost;
pub mod error;
pub mod forward;
pub mod fracops;
pub mod propagators;
pub mod quadrature;
pub mod specfun;
pub mod spectral;

pub use error::{Error, Result};
