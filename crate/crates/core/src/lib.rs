//! Jump (threshold) effects in heterogeneous nonparametric panel
//! regressions: one-sided local linear estimates per unit, simultaneous
//! max-type tests for existence and homogeneity of jumps, threshold search
//! over a grid, and a seeded Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod cli;
pub mod critical;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod montecarlo;
pub mod panel;
pub mod seed;
pub mod variance;

pub use bandwidth::{BandwidthMode, BandwidthPolicy};
pub use critical::{CriticalMethod, Sidedness};
pub use error::{Error, ErrorClass, Result};
pub use estimator::{estimate_jump, JumpWeights, UnitJumpFit};
pub use inference::{
    search_thresholds, test_existence, test_homogeneity, Center, TestConfig, TestKind, TestResult,
    ThresholdSearchResult, ThresholdSpec, Truncation,
};
pub use kernel::{Kernel, KernelMoments, Side, SideSums};
pub use panel::{PanelData, Unit};
pub use variance::{SigmaC, VarianceEstimate};
