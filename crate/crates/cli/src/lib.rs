//! Command-line front end for the brainscore pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod svg;
