//! Compositional value iteration for string diagrams of open MDPs.

pub mod benchgen;
pub mod diagram;
pub mod engine;
pub mod error;
pub mod mdp;
pub mod numeric;
pub mod pareto;

pub use error::{Error, Result};
