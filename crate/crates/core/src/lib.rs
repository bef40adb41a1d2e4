//! Finite truncations of Read-type operators built from lay-off
//! intervals, a (b)-fan and a (c)-fan, with verifiers for the identities
//! and estimates these constructions satisfy.

pub mod basis;
pub mod build;
pub mod error;
pub mod geometry;
pub mod hypercyclic;
pub mod mmio;
pub mod negligibility;
pub mod operator;
pub mod polynet;
pub mod profiles;
pub mod reflexivity;
pub mod report;
pub mod scalar;
pub mod schedule;
pub mod sparse;
pub mod suites;
pub mod unicell;

pub use error::{LabError, Result};
