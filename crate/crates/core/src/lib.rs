//! Multi-agent semantic navigation: procedural scenes, egocentric perception,
//! semantic mapping, map-sharing communication, hierarchical policies and an
//! evaluation harness.

pub mod category;
pub mod cli;
pub mod comms;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod perception;
pub mod policy;
pub mod priors;
pub mod replay;
pub mod scene;
pub mod semantic_map;

pub use error::{Error, Result};
