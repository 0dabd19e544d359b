//! Forecasting models behind a uniform fit / autoregressive-rollout interface.

mod classical;
mod linear;
mod reservoir;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

pub use reservoir::{nvar_feature_count, Reservoir};

/// Rollouts stop once any output exceeds this multiple of the training amplitude.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Effective spectral radius above which an ESN configuration is flagged.
pub const ECHO_STATE_LIMIT: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    NaiveMean,
    NaiveDrift,
    NaiveSeasonal,
    KalmanUnforced,
    LinearRidge,
    FourierRegression,
    ExpSmoothing,
    Theta,
    FourTheta,
    DLinear,
    NLinear,
    #[serde(rename = "ESN")]
    Esn,
    #[serde(rename = "NVAR")]
    Nvar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperClass {
    Lookback,
    Leakage,
}

impl ModelKind {
    pub const ALL: [ModelKind; 13] = [
        ModelKind::NaiveMean,
        ModelKind::NaiveDrift,
        ModelKind::NaiveSeasonal,
        ModelKind::KalmanUnforced,
        ModelKind::LinearRidge,
        ModelKind::FourierRegression,
        ModelKind::ExpSmoothing,
        ModelKind::Theta,
        ModelKind::FourTheta,
        ModelKind::DLinear,
        ModelKind::NLinear,
        ModelKind::Esn,
        ModelKind::Nvar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveMean => "NaiveMean",
            ModelKind::NaiveDrift => "NaiveDrift",
            ModelKind::NaiveSeasonal => "NaiveSeasonal",
            ModelKind::KalmanUnforced => "KalmanUnforced",
            ModelKind::LinearRidge => "LinearRidge",
            ModelKind::FourierRegression => "FourierRegression",
            ModelKind::ExpSmoothing => "ExpSmoothing",
            ModelKind::Theta => "Theta",
            ModelKind::FourTheta => "FourTheta",
            ModelKind::DLinear => "DLinear",
            ModelKind::NLinear => "NLinear",
            ModelKind::Esn => "ESN",
            ModelKind::Nvar => "NVAR",
        }
    }

    pub fn hyper_class(self) -> HyperClass {
        match self {
            ModelKind::Esn | ModelKind::Nvar => HyperClass::Leakage,
            _ => HyperClass::Lookback,
        }
    }

    pub fn is_naive(self) -> bool {
        matches!(self, ModelKind::NaiveMean | ModelKind::NaiveDrift | ModelKind::NaiveSeasonal)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hyper {
    Lookback(usize),
    Leakage(f64),
}

impl Hyper {
    pub fn lookback(self) -> usize {
        match self {
            Hyper::Lookback(l) => l,
            Hyper::Leakage(_) => 1,
        }
    }

    pub fn leakage(self) -> f64 {
        match self {
            Hyper::Leakage(a) => a,
            Hyper::Lookback(_) => 1.0,
        }
    }

    fn class(self) -> HyperClass {
        match self {
            Hyper::Lookback(_) => HyperClass::Lookback,
            Hyper::Leakage(_) => HyperClass::Leakage,
        }
    }
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::Lookback(l) => write!(f, "lookback={l}"),
            Hyper::Leakage(a) => write!(f, "leakage={a}"),
        }
    }
}

/// Admissible bounds and the tuning grid for each hyperparameter class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lookback_range: Vec<usize>,
    pub leakage_range: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lookback_range: vec![2, 5, 10, 20, 35, 50],
            leakage_range: vec![0.01, 0.1, 0.3, 0.6, 0.9, 1.2],
        }
    }
}

pub const LOOKBACK_BOUNDS: (usize, usize) = (1, 50);
pub const LEAKAGE_BOUNDS: (f64, f64) = (0.01, 1.2);

impl HyperGrid {
    pub fn values(&self, kind: ModelKind) -> Vec<Hyper> {
        match kind.hyper_class() {
            HyperClass::Lookback => self.lookback_range.iter().map(|&l| Hyper::Lookback(l)).collect(),
            HyperClass::Leakage => self.leakage_range.iter().map(|&a| Hyper::Leakage(a)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sorted_l = self.lookback_range.windows(2).all(|w| w[0] < w[1]);
        let sorted_a = self.leakage_range.windows(2).all(|w| w[0] < w[1]);
        if self.lookback_range.is_empty() || self.leakage_range.is_empty() || !sorted_l || !sorted_a {
            return Err(Error::InvalidArgument("hyperparameter grids must be nonempty and sorted".into()));
        }
        for &l in &self.lookback_range {
            check_hyper(ModelKind::LinearRidge, Hyper::Lookback(l))?;
        }
        for &a in &self.leakage_range {
            check_hyper(ModelKind::Esn, Hyper::Leakage(a))?;
        }
        Ok(())
    }
}

fn check_hyper(kind: ModelKind, hyper: Hyper) -> Result<()> {
    let ok = hyper.class() == kind.hyper_class()
        && match hyper {
            Hyper::Lookback(l) => (LOOKBACK_BOUNDS.0..=LOOKBACK_BOUNDS.1).contains(&l),
            Hyper::Leakage(a) => (LEAKAGE_BOUNDS.0..=LEAKAGE_BOUNDS.1).contains(&a),
        };
    if ok {
        Ok(())
    } else {
        Err(Error::HyperOutOfGrid {
            kind: kind.name().into(),
            value: hyper.to_string(),
        })
    }
}

/// Fixed architectural constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub reservoir_size: usize,
    pub spectral_radius: f64,
    pub connectivity: f64,
    pub input_scaling: f64,
    pub input_connectivity: f64,
    /// Half-width of the uniform per-unit bias; breaks the odd symmetry of
    /// the tanh update.
    pub bias_scaling: f64,
    pub esn_ridge: f64,
    /// Teacher-forced reservoir states discarded before the readout fit.
    pub washout: usize,
    pub nvar_delay: usize,
    pub nvar_taps: usize,
    pub nvar_ridge: f64,
    pub linear_ridge: f64,
    pub theta: f64,
    pub dlinear_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            reservoir_size: 500,
            spectral_radius: 0.99,
            connectivity: 0.1,
            input_scaling: 1.0,
            input_connectivity: 0.2,
            bias_scaling: 1.0,
            esn_ridge: 1e-4,
            washout: 100,
            nvar_delay: 100,
            nvar_taps: 2,
            nvar_ridge: 1e-4,
            linear_ridge: 0.01,
            theta: 2.0,
            dlinear_kernel: 25,
        }
    }
}

/// Per-dimension standardization fitted on the training history.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Scaler {
    pub(crate) mean: Vec<f64>,
    pub(crate) scale: Vec<f64>,
}

impl Scaler {
    pub(crate) fn fit(traj: &Trajectory) -> Self {
        let dim = traj.dim();
        let n = traj.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in traj.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for row in traj.rows() {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.scale[i % d])
            .collect()
    }

    pub(crate) fn inverse(&self, values: &mut [f64]) {
        let d = self.mean.len();
        values
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = *v * self.scale[i % d] + self.mean[i % d]);
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Fitted {
    Classical(classical::Fitted),
    Linear(linear::Fitted),
    Reservoir(reservoir::Fitted),
}

/// A forecasting model; `fit` produces immutable parameters used by `predict`.
#[derive(Clone, Debug)]
pub struct ForecastModel {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub dim: usize,
    pub seed: u64,
    pub config: ModelConfig,
    reservoir: Option<std::sync::Arc<Reservoir>>,
    fitted: Option<Fitted>,
    amplitude: f64,
}

/// Autoregressive rollout, possibly truncated at divergence.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub trajectory: Option<Trajectory>,
    pub horizon: usize,
    pub diverged: bool,
}

impl Forecast {
    pub fn len(&self) -> usize {
        self.trajectory.as_ref().map_or(0, Trajectory::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub dim: usize,
    pub seed: u64,
    pub fitted: bool,
    pub parameter_count: usize,
    /// Effective spectral radius of the leaky reservoir update, ESN only.
    pub effective_spectral_radius: Option<f64>,
    pub stability_flag: bool,
}

pub fn make_model(kind: ModelKind, hyper: Hyper, dim: usize, seed: u64) -> Result<ForecastModel> {
    make_model_with(kind, hyper, dim, seed, ModelConfig::default())
}

pub fn make_model_with(
    kind: ModelKind,
    hyper: Hyper,
    dim: usize,
    seed: u64,
    config: ModelConfig,
) -> Result<ForecastModel> {
    check_hyper(kind, hyper)?;
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let reservoir = match kind {
        ModelKind::Esn => Some(Reservoir::cached(&config, dim, seed)?),
        _ => None,
    };
    Ok(ForecastModel {
        kind,
        hyper,
        dim,
        seed,
        config,
        reservoir,
        fitted: None,
        amplitude: 0.0,
    })
}

impl ForecastModel {
    /// Points of history the rollout reads before the forecast origin.
    pub fn required_warmup(&self) -> usize {
        match self.kind {
            ModelKind::Esn => self.config.washout,
            ModelKind::Nvar => reservoir::nvar_span(&self.config) + 1,
            ModelKind::NaiveMean | ModelKind::NaiveDrift | ModelKind::FourierRegression => 1,
            ModelKind::NaiveSeasonal => 1,
            _ => self.hyper.lookback(),
        }
    }

    /// Shortest admissible training history.
    pub fn required_history(&self) -> usize {
        match self.kind {
            ModelKind::Esn => self.config.washout + 2 * self.dim + 10,
            ModelKind::Nvar => reservoir::nvar_span(&self.config) + 2 * nvar_feature_count(self.dim, self.config.nvar_taps),
            _ => (2 * self.hyper.lookback()).max(4),
        }
    }

    pub fn reservoir(&self) -> Option<&Reservoir> {
        self.reservoir.as_deref()
    }

    /// Effective spectral radius of `(1 - a) I + a W` for ESNs.
    pub fn effective_spectral_radius(&self) -> Option<f64> {
        self.reservoir.as_ref().map(|r| r.effective_radius(self.hyper.leakage()))
    }

    pub fn stability_flag(&self) -> bool {
        self.effective_spectral_radius().is_some_and(|r| r > ECHO_STATE_LIMIT)
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn fit(&mut self, history: &Trajectory) -> Result<()> {
        if history.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "history has dimension {}, model expects {}",
                history.dim(),
                self.dim
            )));
        }
        let needed = self.required_history();
        if history.len() < needed {
            return Err(Error::HistoryTooShort {
                needed,
                got: history.len(),
            });
        }
        let fitted = match self.kind {
            ModelKind::NaiveMean
            | ModelKind::NaiveDrift
            | ModelKind::NaiveSeasonal
            | ModelKind::KalmanUnforced
            | ModelKind::FourierRegression
            | ModelKind::ExpSmoothing
            | ModelKind::Theta
            | ModelKind::FourTheta => Fitted::Classical(classical::fit(self, history)?),
            ModelKind::LinearRidge | ModelKind::DLinear | ModelKind::NLinear => {
                Fitted::Linear(linear::fit(self, history)?)
            }
            ModelKind::Esn | ModelKind::Nvar => Fitted::Reservoir(reservoir::fit(self, history)?),
        };
        self.amplitude = history.amplitude();
        self.fitted = Some(fitted);
        Ok(())
    }

    /// Fully autoregressive rollout of `horizon` steps past the end of `warmup`.
    pub fn predict(&self, warmup: &Trajectory, horizon: usize) -> Result<Forecast> {
        let fitted = self.fitted.as_ref().ok_or(Error::NotFitted)?;
        if warmup.dim() != self.dim {
            return Err(Error::InvalidArgument("warmup dimension mismatch".into()));
        }
        let needed = self.required_warmup();
        if warmup.len() < needed {
            return Err(Error::HistoryTooShort {
                needed,
                got: warmup.len(),
            });
        }
        let limit = DIVERGENCE_FACTOR * self.amplitude.max(f64::MIN_POSITIVE);
        let mut sink = Rollout::new(self.dim, horizon, limit);
        match fitted {
            Fitted::Classical(f) => classical::predict(self, f, warmup, &mut sink)?,
            Fitted::Linear(f) => linear::predict(self, f, warmup, &mut sink)?,
            Fitted::Reservoir(f) => reservoir::predict(self, f, warmup, &mut sink)?,
        }
        sink.finish(warmup)
    }

    pub fn parameter_count(&self) -> usize {
        match &self.fitted {
            None => 0,
            Some(Fitted::Classical(f)) => f.parameter_count(),
            Some(Fitted::Linear(f)) => f.parameter_count(),
            Some(Fitted::Reservoir(f)) => f.parameter_count(),
        }
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            kind: self.kind,
            hyper: self.hyper,
            dim: self.dim,
            seed: self.seed,
            fitted: self.is_fitted(),
            parameter_count: self.parameter_count(),
            effective_spectral_radius: self.effective_spectral_radius(),
            stability_flag: self.stability_flag(),
        }
    }

    /// Stored per-dimension mean of a fitted NaiveMean.
    pub fn stored_mean(&self) -> Option<&[f64]> {
        match &self.fitted {
            Some(Fitted::Classical(f)) => f.mean(),
            _ => None,
        }
    }

    /// Stored `(motif, period)` of a fitted NaiveSeasonal, `period x dim` row-major.
    pub fn seasonal_motif(&self) -> Option<(&[f64], usize)> {
        match &self.fitted {
            Some(Fitted::Classical(f)) => f.motif(),
            _ => None,
        }
    }

    /// Raw-unit weights of a fitted LinearRidge, `(lookback * dim) x dim`,
    /// oldest lag first.
    pub fn linear_coefficients(&self) -> Option<nalgebra::DMatrix<f64>> {
        match (&self.fitted, self.kind) {
            (Some(Fitted::Linear(f)), ModelKind::LinearRidge) => Some(f.raw_weights(self.dim)),
            _ => None,
        }
    }

    /// RMS one-step training error of a fitted NVAR.
    pub fn training_residual(&self) -> Option<f64> {
        match &self.fitted {
            Some(Fitted::Reservoir(f)) => f.training_residual(),
            _ => None,
        }
    }
}

/// Collects rollout rows and stops at the first non-finite or oversized one.
pub(crate) struct Rollout {
    dim: usize,
    horizon: usize,
    limit: f64,
    values: Vec<f64>,
    diverged: bool,
}

impl Rollout {
    fn new(dim: usize, horizon: usize, limit: f64) -> Self {
        Self {
            dim,
            horizon,
            limit,
            values: Vec::with_capacity(horizon * dim),
            diverged: false,
        }
    }

    /// Appends a row; returns false once the rollout must stop.
    pub(crate) fn push(&mut self, row: &[f64]) -> bool {
        if self.is_done() {
            return false;
        }
        if row.iter().any(|v| !v.is_finite() || v.abs() > self.limit) {
            self.diverged = true;
            return false;
        }
        self.values.extend_from_slice(row);
        !self.is_done()
    }

    pub(crate) fn is_done(&self) -> bool {
        self.diverged || self.values.len() >= self.horizon * self.dim
    }

    pub(crate) fn horizon(&self) -> usize {
        self.horizon
    }

    fn finish(self, warmup: &Trajectory) -> Result<Forecast> {
        let n = self.values.len() / self.dim;
        let trajectory = if n == 0 {
            None
        } else {
            let mut t = Trajectory::from_raw(self.values, self.dim, warmup.dt, warmup.system_name.clone())
                .with_t0(warmup.time(warmup.len() - 1) + warmup.dt);
            t.granularity = warmup.granularity;
            Some(t)
        };
        Ok(Forecast {
            trajectory,
            horizon: self.horizon,
            diverged: self.diverged,
        })
    }
}

