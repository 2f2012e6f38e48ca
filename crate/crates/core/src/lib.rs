//! Contract-verified ML pipeline orchestration.
//!
//! A run profiles the dataset, plans one blueprint per implementation track
//! under a shared interface contract, generates the preprocessing and modeling
//! stages, verifies each stage and the assembled pipeline in a sandbox, and
//! repairs failures under a bounded debugging budget.

pub mod assemble;
pub mod codegen;
pub mod debug;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod layout;
pub mod llm;
pub mod model;
pub mod par;
pub mod perception;
pub mod planning;
pub mod retrieval;
pub mod sandbox;
pub mod source;
pub mod stats;
pub mod verify;
pub mod worker;

pub use error::{Error, Result};
