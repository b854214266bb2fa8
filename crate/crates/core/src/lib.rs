//! Metamorphic testing and black-box repair for named entity recognition.

pub mod backend;
pub mod config;
pub mod error;
pub mod eval;
pub mod filters;
pub mod model;
pub mod mr;
pub mod mutation;
pub mod oracles;
pub mod pipeline;
pub mod repair;
pub mod syntax;

pub use error::{Error, Result};
