//! Experiment runner for the wyner-core workbench: plan files, parallel
//! sweeps with deterministic output, summaries and the acceptance suite.

pub mod criteria;
pub mod plan;
pub mod run;
pub mod source;
pub mod summary;
