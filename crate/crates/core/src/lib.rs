//! Pair-wise temporal relation extraction between annotated events in
//! short narratives.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod pairgen;
pub mod sieve;
pub mod tempgraph;
pub mod tensor;

pub use error::{Error, Result};
