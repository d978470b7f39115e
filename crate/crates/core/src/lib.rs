//! Workflow provenance for the scientific machine-learning lifecycle.

pub mod capture;
pub mod manager;
pub mod model;
pub mod queries;
pub mod spec;
pub mod store;
pub mod synthbench;
