//! Dynamical invariants: Lyapunov spectra, correlation and Kaplan-Yorke
//! dimensions, multiscale entropy.

mod dimension;
mod entropy;
mod lyapunov;

pub use dimension::{correlation_dimension, kaplan_yorke, CorrelationConfig, CorrelationDimension};
pub use entropy::{coarse_grain, multiscale_entropy, multivariate_sample_entropy, MultiscaleEntropy};
pub use lyapunov::{
    agree_two_sig_figs, ensemble_lyapunov, ensemble_spectrum, lyapunov_max_naive,
    lyapunov_max_naive_ensemble, lyapunov_spectrum_qr, lyapunov_spectrum_qr_detailed, EnsembleMode,
    EnsembleSize, NaiveLyapunov, PerturbationConfig, QrSpectrum, DELAY_EXPONENTS,
    TWO_SIG_FIG_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentResult;
use crate::dynamics::SystemSpec;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantConfig {
    pub long: EnsembleSize,
    pub short: EnsembleSize,
    /// Skip the short ensemble and its ergodicity check.
    pub check_ergodicity: bool,
    pub perturbation: PerturbationConfig,
    /// Minimum completed runs per chain for the naive estimator.
    pub naive_min_runs: usize,
    pub correlation: CorrelationConfig,
    /// Aligned samples used for D2 and entropy.
    pub sample_points: usize,
    pub entropy_points: usize,
    pub max_scale: usize,
    pub seed: u64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            long: EnsembleMode::Long.default_size(),
            short: EnsembleMode::Short.default_size(),
            check_ergodicity: true,
            perturbation: PerturbationConfig::default(),
            naive_min_runs: 3,
            correlation: CorrelationConfig::default(),
            sample_points: 10_000,
            entropy_points: 2000,
            max_scale: 5,
            seed: 0,
        }
    }
}

/// Annotated invariants of one system. Exponents are per unit natural time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSet {
    pub system: String,
    pub lyapunov_spectrum: Vec<f64>,
    pub lyapunov_max: f64,
    /// Time-averaged Jacobian trace along the long ensemble.
    pub mean_trace: f64,
    pub lyapunov_short: Option<f64>,
    pub lyapunov_naive: Option<f64>,
    pub corr_dim: f64,
    pub corr_dim_irregular: bool,
    pub ky_dim: f64,
    pub mse: f64,
    pub mse_infinite: bool,
    pub t_peak: f64,
    /// Long and short ensembles disagree beyond two significant figures.
    pub ergodicity_warning: bool,
}

impl InvariantSet {
    /// Lyapunov time `1 / lambda_max` in natural units.
    pub fn lyapunov_time(&self) -> f64 {
        1.0 / self.lyapunov_max
    }

    /// Samples per Lyapunov time at the aligned granularity.
    pub fn samples_per_lyapunov_time(&self, alignment: &AlignmentResult) -> f64 {
        self.lyapunov_time() / alignment.sample_dt()
    }
}

pub fn compute_invariants(
    spec: &SystemSpec,
    alignment: &AlignmentResult,
    config: &InvariantConfig,
) -> Result<InvariantSet> {
    let long = ensemble_spectrum(spec, alignment, config.long, config.seed)?;
    let lyapunov_max = long.exponents[0];
    let short = if config.check_ergodicity {
        Some(ensemble_spectrum(spec, alignment, config.short, config.seed.wrapping_add(1))?.exponents[0])
    } else {
        None
    };
    let naive = lyapunov_max_naive_ensemble(
        spec,
        alignment,
        &config.perturbation,
        config.long,
        config.naive_min_runs,
        config.seed,
    )?
    .exponent();
    let traj = alignment.trajectory(spec, config.seed.wrapping_add(3), config.sample_points)?;
    let d2 = correlation_dimension(&traj, &config.correlation)?;
    let mse = multiscale_entropy(&traj.slice(0, config.entropy_points.min(traj.len())), config.max_scale)?;
    Ok(InvariantSet {
        system: spec.name.clone(),
        ky_dim: kaplan_yorke(&long.exponents)?,
        lyapunov_spectrum: long.exponents,
        lyapunov_max,
        mean_trace: long.mean_trace,
        lyapunov_short: short,
        lyapunov_naive: naive,
        corr_dim: d2.dimension,
        corr_dim_irregular: d2.irregular_scaling,
        mse: mse.value,
        mse_infinite: mse.infinite,
        t_peak: alignment.t_peak,
        ergodicity_warning: short.is_some_and(|s| !agree_two_sig_figs(lyapunov_max, s)),
    })
}
