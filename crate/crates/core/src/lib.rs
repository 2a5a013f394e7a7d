//! Decoy-state QKD with fluctuating sources: simulation, worst-case bounds,
//! and an exact finite-ensemble oracle for auditing the bound chain.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod par;
pub mod presets;
pub mod rng;
pub mod simulator;
pub mod source;
pub mod sweep;

pub use error::{Error, Result};
pub use par::Execution;
