//! Simulation and evaluation engine for LLM coding-tutoring sessions.

pub mod agents;
pub mod backend;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod reward;

pub use error::{Error, Result};
