//! Data ingestion, run configuration, the five-step estimation pipeline and
//! report emission behind the `labormarkdown` command.

pub mod capital;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;
