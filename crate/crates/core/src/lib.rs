//! Benchmark engine for statistical forecasting of low-dimensional chaotic
//! systems: a registry of canonical flows, surrogate-based timescale
//! alignment, dynamical invariants, a suite of forecasting models, point-wise
//! metrics, the benchmark harness, and cross-model analyses.

pub mod alignment;
pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod invariants;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod stats;

pub use alignment::{align_system, AlignmentConfig, AlignmentResult};
pub use dynamics::{
    attractor_trajectory, integrate, registry, sample_attractor, system_by_name, SystemSpec,
    Trajectory,
};
pub use error::{Error, Result};
