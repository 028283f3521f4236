//! Explainable recommendation by walking a user-item-entity graph.
//!
//! An agent starts at a user vertex and walks up to T hops over an
//! integrated graph that merges user-item interactions (the reserved
//! `Interact` relation) with an item-linked knowledge graph. Training
//! uses REINFORCE with a DistMult-shaped terminal reward; inference uses
//! beam search and returns the traversed path as the explanation for
//! each recommended item.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod ingest;
pub mod kge;
pub mod math;
pub mod policy;
pub mod trainer;

pub use config::RunConfig;
pub use error::{EkarError, Result};
