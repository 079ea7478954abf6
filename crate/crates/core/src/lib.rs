//! Zonal and nodal electricity market clearing at desk scale.
//!
//! The crate covers the full chain from a validated dataset to market results:
//! DC power flow sensitivities ([`grid`]), N-1 secure constraint assembly,
//! redundant-constraint elimination ([`redundancy`]), an exact LP solver with
//! duals ([`solver`]), market clearing and redispatch ([`market`]) and
//! flow-based market coupling parametrization ([`fbmc`]).
//!
//! IO, file formats and the pipeline CLI live in the companion
//! `flowmark-cli` crate.

pub mod fbmc;
pub mod grid;
pub mod market;
pub mod redundancy;
pub mod solver;
pub mod types;

pub use types::{Dataset, Options, ValidationReport};
