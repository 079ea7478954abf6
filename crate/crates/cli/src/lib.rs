//! Batch front end for the dispatch library: dataset IO, case-file import,
//! options parsing, and the multi-stage run pipeline.

pub mod dataio;
pub mod matpower;
pub mod optfile;
pub mod pipeline;
