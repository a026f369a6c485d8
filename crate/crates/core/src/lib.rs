//! Toolkit for graph-structured mobile GUI environments.

pub mod action_space;
pub mod episode;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod reward;
pub mod sampler;
pub mod subtasks;
pub mod synth;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
