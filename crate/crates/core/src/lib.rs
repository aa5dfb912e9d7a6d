//! Label-free concept drift detection for deployed neural regressors and
//! classifiers.
//!
//! A feedforward network with dropout is queried with Monte Carlo Dropout:
//! `T` stochastic forward passes per instance give a point prediction (the
//! pass mean) and a scalar uncertainty (predictive entropy for classifiers,
//! predictive variance for regressors). That uncertainty stream is fed to an
//! ADWIN change detector, and a detection triggers retraining on the most
//! recent labelled batch. No true labels are needed to decide *when* to
//! retrain.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! experiment orchestration live in the `driftlab` companion crate.
//!
//! Module map:
//!
//!  - [`nnet`]: dropout MLP, Adam training, gradient checking, MC inference.
//!  - [`uncertainty`]: predictive mean, entropy, variance.
//!  - [`detectors`]: ADWIN, the two-sample KS test and KSWIN.
//!  - [`synth`]: drifting Friedman and Mixed stream generators.
//!  - [`stream`]: datasets, partitioning, label pools, standardization.
//!  - [`strategies`]: the retraining strategies and alpha calibration.
//!  - [`metrics`]: MTD/FAC/MDC, RMSE, MCC and the uncertainty decile report.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod detectors;
mod error;
pub mod metrics;
pub mod nnet;
pub mod rng;
pub mod strategies;
pub mod stream;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};

/// Learning task of a dataset and of the network head serving it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Regression,
    Classification,
}

/// A supervised target: a real value or a dense class index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Real(f64),
    Class(usize),
}

impl Target {
    pub fn task(&self) -> Task {
        match self {
            Target::Real(_) => Task::Regression,
            Target::Class(_) => Task::Classification,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match *self {
            Target::Real(v) => Some(v),
            Target::Class(_) => None,
        }
    }

    pub fn as_class(&self) -> Option<usize> {
        match *self {
            Target::Class(c) => Some(c),
            Target::Real(_) => None,
        }
    }
}
