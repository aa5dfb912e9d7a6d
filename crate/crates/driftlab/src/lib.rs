//! Experiment tooling around `driftlab-core`: CSV streams and schedule
//! sidecars, plan files, strategy orchestration and report emission. The
//! `driftlab` binary is a thin wrapper over [`run`].

mod error;
pub mod ingest;
pub mod plan;
pub mod report;
pub mod run;

pub use error::{Error, Result};
