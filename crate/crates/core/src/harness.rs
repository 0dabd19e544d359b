//! Benchmark orchestration: timescale-aligned splits, hyperparameter tuning,
//! fitting on the test history, autoregressive rollout, scoring, and a
//! resumable campaign over (system, model, seed) triples.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{align_system, AlignmentConfig, AlignmentResult, GRANULARITY};
use crate::analysis::{invariant_recovery, InvariantRecovery, RecoveryConfig};
use crate::dynamics::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::invariants::{ensemble_spectrum, EnsembleMode, EnsembleSize};
use crate::metrics::{
    error_curve_on_grid, error_doubling_time, horizon_grid, valid_prediction_time, DoublingTime, ErrorCurve,
    MetricContext, MetricKind,
};
use crate::models::{make_model_with, Forecast, ForecastModel, Hyper, HyperGrid, ModelConfig, ModelKind};
use crate::stats::median;

/// Environment variable holding the campaign worker count.
pub const WORKERS_ENV: &str = "CHAOSBENCH_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// History `t*` in dominant periods.
    pub train_periods: f64,
    /// Validation window after the training history, in periods.
    pub val_periods: f64,
    /// Forecast length in periods.
    pub test_horizon_periods: f64,
    /// Points per dominant period.
    pub granularity: f64,
    pub hyper_grid: HyperGrid,
    pub seeds: Vec<u64>,
    pub metric_for_tuning: MetricKind,
    pub model: ModelConfig,
    pub alignment: AlignmentConfig,
    /// Ensemble for the reference `lambda_max` that sets the Lyapunov time.
    pub lyapunov: EnsembleSize,
    /// Every forecast step up to this count appears on the curve grid.
    pub curve_dense: usize,
    /// Geometric grid points after the dense part.
    pub curve_points: usize,
    /// sMAPE threshold of the valid prediction time.
    pub vpt_threshold: f64,
    /// Reference time of the error-doubling horizon, in periods.
    pub doubling_reference_periods: f64,
    /// Score invariant recovery on each full-horizon forecast.
    pub invariant_recovery: bool,
    pub recovery: RecoveryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_periods: 10.0,
            val_periods: 2.0,
            test_horizon_periods: 50.0,
            granularity: GRANULARITY,
            hyper_grid: HyperGrid::default(),
            seeds: (0..5).collect(),
            metric_for_tuning: MetricKind::Smape,
            model: ModelConfig::default(),
            alignment: AlignmentConfig::default(),
            lyapunov: EnsembleMode::Long.default_size(),
            curve_dense: 20,
            curve_points: 60,
            vpt_threshold: 50.0,
            doubling_reference_periods: 0.1,
            invariant_recovery: true,
            recovery: RecoveryConfig::default(),
        }
    }
}

fn points(periods: f64, granularity: f64) -> usize {
    (periods * granularity).round() as usize
}

impl ExperimentConfig {
    pub fn history_points(&self) -> usize {
        points(self.train_periods, self.granularity)
    }

    pub fn val_points(&self) -> usize {
        points(self.val_periods, self.granularity)
    }

    pub fn test_points(&self) -> usize {
        points(self.test_horizon_periods, self.granularity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.granularity != GRANULARITY {
            return Err(Error::InvalidArgument(format!(
                "granularity must match the aligned sampling of {GRANULARITY} points per period"
            )));
        }
        if !(self.train_periods >= self.val_periods && self.val_periods > 0.0 && self.test_horizon_periods > 0.0) {
            return Err(Error::InvalidArgument("need train_periods >= val_periods > 0 and a positive horizon".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("no seeds".into()));
        }
        self.hyper_grid.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// A system with its alignment and reference Lyapunov exponent.
#[derive(Clone, Debug)]
pub struct SystemContext {
    pub spec: SystemSpec,
    pub alignment: AlignmentResult,
    pub lyapunov_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SystemCache {
    system: String,
    param_hash: String,
    alignment: AlignmentResult,
    lyapunov_max: f64,
}

impl SystemContext {
    pub fn prepare(spec: &SystemSpec, config: &ExperimentConfig) -> Result<Self> {
        let alignment = align_system(spec, 0, &config.alignment)?;
        let lyapunov_max = ensemble_spectrum(spec, &alignment, config.lyapunov, 0)?.exponents[0];
        if !(lyapunov_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{} has no positive Lyapunov exponent ({lyapunov_max})",
                spec.name
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            alignment,
            lyapunov_max,
        })
    }

    /// Like [`SystemContext::prepare`], reusing a JSON cache in `dir` keyed by
    /// the parameter hash.
    pub fn prepare_cached(spec: &SystemSpec, config: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let path = dir.join(format!("{}.json", spec.name));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(c) = serde_json::from_str::<SystemCache>(&text) {
                if c.param_hash == spec.param_hash() {
                    return Ok(Self {
                        spec: spec.clone(),
                        alignment: c.alignment,
                        lyapunov_max: c.lyapunov_max,
                    });
                }
            }
        }
        let ctx = Self::prepare(spec, config)?;
        let cache = SystemCache {
            system: spec.name.clone(),
            param_hash: spec.param_hash(),
            alignment: ctx.alignment.clone(),
            lyapunov_max: ctx.lyapunov_max,
        };
        fs::create_dir_all(dir)?;
        write_atomic(&path, serde_json::to_string_pretty(&cache)?.as_bytes())?;
        Ok(ctx)
    }

    /// Aligned samples per Lyapunov time.
    pub fn samples_per_lyapunov_time(&self) -> f64 {
        1.0 / (self.lyapunov_max * self.alignment.sample_dt())
    }
}

/// Training and test trajectories from distinct initial conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// History plus validation window.
    pub train: Trajectory,
    /// History followed by the held-out forecast target.
    pub test: Trajectory,
    /// Index of the forecast origin in `test`; also the history length.
    pub origin: usize,
}

impl Split {
    /// Held-out continuation after the origin.
    pub fn truth(&self) -> Trajectory {
        self.test.slice(self.origin, self.test.len())
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn generate_split(ctx: &SystemContext, config: &ExperimentConfig, seed: u64) -> Result<Split> {
    let h = config.history_points();
    let train = ctx.alignment.trajectory(&ctx.spec, mix(seed, 1), h + config.val_points())?;
    let test = ctx.alignment.trajectory(&ctx.spec, mix(seed, 2), h + config.test_points())?;
    Ok(Split {
        train,
        test,
        origin: h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub hyper: Hyper,
    /// Validation score per grid value; `None` for skipped, failed or
    /// divergent configurations.
    pub scores: Vec<(Hyper, Option<f64>)>,
    /// No grid value produced a score; `hyper` is the grid minimum.
    pub failed: bool,
}

fn score_forecast(metric: MetricKind, truth: &Trajectory, forecast: &Forecast, ctx: &MetricContext) -> Option<f64> {
    if forecast.diverged {
        return None;
    }
    let f = forecast.trajectory.as_ref()?;
    let v = crate::metrics::evaluate(metric, truth, f, ctx).ok()?;
    let v = if metric.higher_is_better() { -v } else { v };
    v.is_finite().then_some(v)
}

/// Grid search with a single rolling origin: each value is fitted on the
/// `history` points before the validation window, which it then forecasts.
/// Ties go to the smaller value; echo state networks outside the echo-state
/// regime are skipped.
pub fn tune(kind: ModelKind, train: &Trajectory, history: usize, config: &ExperimentConfig, seed: u64) -> Result<TuneOutcome> {
    let grid = config.hyper_grid.values(kind);
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let origin = train.len() - config.val_points();
    if history > origin {
        return Err(Error::InvalidArgument("history exceeds the training split".into()));
    }
    let fit_on = train.slice(origin - history, origin);
    let target = train.slice(origin, train.len());
    let metric_ctx = MetricContext::from_training(&fit_on);
    let mut scores = Vec::with_capacity(grid.len());
    for &hyper in &grid {
        let mut model = make_model_with(kind, hyper, train.dim(), seed, config.model.clone())?;
        let s = if model.stability_flag() || history < model.required_history() || model.fit(&fit_on).is_err() {
            None
        } else {
            model
                .predict(&fit_on, target.len())
                .ok()
                .and_then(|f| score_forecast(config.metric_for_tuning, &target, &f, &metric_ctx))
        };
        scores.push((hyper, s));
    }
    let best = scores
        .iter()
        .filter_map(|(h, s)| Some((*h, (*s)?)))
        .fold(None::<(Hyper, f64)>, |acc, (h, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((h, s)),
        });
    Ok(TuneOutcome {
        hyper: best.map_or(grid[0], |b| b.0),
        failed: best.is_none(),
        scores,
    })
}

/// CPU time consumed by the calling thread.
fn thread_cpu_seconds() -> Result<f64> {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Err(Error::Io("thread CPU clock unavailable".into()));
    }
    Ok(ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9)
}

/// A fitted model, its rollout from the origin, and the fit's CPU time.
pub struct FitOutcome {
    pub model: ForecastModel,
    pub forecast: Forecast,
    pub walltime: f64,
}

/// Fits on the `history` points of `test` before `origin` and rolls out
/// `horizon` steps. Nothing at or after `origin` is read.
pub fn fit_and_forecast(
    kind: ModelKind,
    hyper: Hyper,
    test: &Trajectory,
    origin: usize,
    history: usize,
    horizon: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<FitOutcome> {
    if history > origin {
        return Err(Error::InvalidArgument("history longer than the data before the origin".into()));
    }
    let past = test.slice(origin - history, origin);
    let mut model = make_model_with(kind, hyper, test.dim(), seed, config.model.clone())?;
    let t0 = thread_cpu_seconds()?;
    model.fit(&past)?;
    let walltime = (thread_cpu_seconds()? - t0).max(1e-9);
    let forecast = model.predict(&past, horizon)?;
    Ok(FitOutcome {
        model,
        forecast,
        walltime,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub system: String,
    pub model: ModelKind,
    pub seed: u64,
    pub tuned_hyper: Hyper,
    pub tuning_failed: bool,
    pub tuning_scores: Vec<(Hyper, Option<f64>)>,
    /// One curve per metric kind, on a shared horizon grid.
    pub error_curves: Vec<ErrorCurve>,
    pub invariant_recovery: Option<InvariantRecovery>,
    pub train_walltime_seconds: f64,
    pub divergence_flag: bool,
    /// Points actually produced by the rollout.
    pub forecast_len: usize,
    pub history_len: usize,
    pub lyapunov_max: f64,
    pub t_peak: f64,
    /// In Lyapunov times.
    pub valid_prediction_time: f64,
    pub error_doubling_time: DoublingTime,
    /// Set when the triple could not be run; scores are then empty.
    pub failure: Option<String>,
}

impl BenchmarkRecord {
    pub fn curve(&self, metric: MetricKind) -> Option<&ErrorCurve> {
        self.error_curves.iter().find(|c| c.metric == metric)
    }

    /// Curve value at `lyapunov_time` Lyapunov times after the origin.
    pub fn value_at(&self, metric: MetricKind, lyapunov_time: f64) -> Option<f64> {
        self.curve(metric)?.value_at_lyapunov_time(lyapunov_time)
    }

    fn failed(system: &str, ctx: Option<&SystemContext>, kind: ModelKind, seed: u64, config: &ExperimentConfig, reason: String) -> Self {
        Self {
            system: system.into(),
            model: kind,
            seed,
            tuned_hyper: config.hyper_grid.values(kind)[0],
            tuning_failed: true,
            tuning_scores: Vec::new(),
            error_curves: Vec::new(),
            invariant_recovery: None,
            train_walltime_seconds: 0.0,
            divergence_flag: false,
            forecast_len: 0,
            history_len: 0,
            lyapunov_max: ctx.map_or(0.0, |c| c.lyapunov_max),
            t_peak: ctx.map_or(0.0, |c| c.alignment.t_peak),
            valid_prediction_time: 0.0,
            error_doubling_time: DoublingTime {
                value: 0.0,
                never_doubled: false,
            },
            failure: Some(reason),
        }
    }

    fn key(&self) -> (String, ModelKind, u64) {
        (self.system.clone(), self.model, self.seed)
    }
}

/// Curve grid: dense and geometric points plus every whole Lyapunov time.
fn curve_grid(len: usize, per_lyapunov_time: f64, config: &ExperimentConfig) -> Vec<usize> {
    let mut grid = horizon_grid(len, config.curve_dense, config.curve_points);
    let mut k = 1.0;
    while (k * per_lyapunov_time).floor() as usize <= len {
        let h = (k * per_lyapunov_time).floor() as usize;
        if h >= 1 {
            grid.push(h);
        }
        k += 1.0;
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

pub fn run_experiment(ctx: &SystemContext, kind: ModelKind, config: &ExperimentConfig, seed: u64) -> Result<BenchmarkRecord> {
    run_experiment_with_history(ctx, kind, config, seed, config.history_points())
}

/// [`run_experiment`] with only the last `history` points before each origin
/// available for tuning and fitting.
pub fn run_experiment_with_history(
    ctx: &SystemContext,
    kind: ModelKind,
    config: &ExperimentConfig,
    seed: u64,
    history: usize,
) -> Result<BenchmarkRecord> {
    config.validate()?;
    let split = generate_split(ctx, config, seed)?;
    let tuned = tune(kind, &split.train, history, config, seed)?;
    let truth = split.truth();
    let out = fit_and_forecast(
        kind,
        tuned.hyper,
        &split.test,
        split.origin,
        history,
        truth.len(),
        config,
        seed,
    )?;
    let lam = ctx.lyapunov_max;
    let metric_ctx = MetricContext::from_training(&split.test.slice(split.origin - history, split.origin));
    let grid = curve_grid(truth.len(), ctx.samples_per_lyapunov_time(), config);
    let empty = Trajectory::from_raw(Vec::new(), truth.dim(), truth.dt, truth.system_name.clone());
    let forecast = out.forecast.trajectory.clone().unwrap_or(empty);
    let forecast = forecast.with_granularity(config.granularity);
    let mut curves = Vec::with_capacity(MetricKind::ALL.len());
    for metric in MetricKind::ALL {
        let mut c = error_curve_on_grid(metric, &truth, &forecast, &metric_ctx, lam, &grid)?;
        // non-finite values cannot round-trip through JSON
        c.values.iter_mut().for_each(|v| *v = v.filter(|x| x.is_finite()));
        curves.push(c);
    }
    let full: Vec<usize> = (1..=truth.len()).collect();
    let smape = error_curve_on_grid(MetricKind::Smape, &truth, &forecast, &metric_ctx, lam, &full)?;
    let vpt = valid_prediction_time(&smape, config.vpt_threshold)?;
    let reference = config.doubling_reference_periods * ctx.alignment.t_peak;
    let doubling = if forecast.len() >= 10 {
        error_doubling_time(&truth.slice(0, forecast.len()), &forecast, lam, reference)?
    } else {
        DoublingTime {
            value: 0.0,
            never_doubled: false,
        }
    };
    let recovery = if config.invariant_recovery && !forecast.is_empty() {
        Some(invariant_recovery(&truth, &forecast, &config.recovery)?)
    } else {
        None
    };
    Ok(BenchmarkRecord {
        system: ctx.spec.name.clone(),
        model: kind,
        seed,
        tuned_hyper: tuned.hyper,
        tuning_failed: tuned.failed,
        tuning_scores: tuned.scores,
        error_curves: curves,
        invariant_recovery: recovery,
        train_walltime_seconds: out.walltime,
        divergence_flag: out.forecast.diverged,
        forecast_len: forecast.len(),
        history_len: history,
        lyapunov_max: lam,
        t_peak: ctx.alignment.t_peak,
        valid_prediction_time: vpt,
        error_doubling_time: doubling,
        failure: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TitrationPoint {
    pub history_len: usize,
    /// Median over seeds of sMAPE at one Lyapunov time.
    pub median_smape: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
    pub skipped: Option<String>,
}

/// Error at one Lyapunov time as a function of the available history. Each
/// length reuses the standard splits and forecast origins, so the longest
/// admissible length reproduces [`run_experiment`].
pub fn titrate_history(
    ctx: &SystemContext,
    kind: ModelKind,
    config: &ExperimentConfig,
    history_lengths: &[usize],
) -> Result<Vec<TitrationPoint>> {
    if history_lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("history lengths must increase".into()));
    }
    let max = config.history_points();
    let shortest_admissible = config
        .hyper_grid
        .values(kind)
        .into_iter()
        .filter_map(|h| make_model_with(kind, h, ctx.spec.dim, 0, config.model.clone()).ok())
        .map(|m| m.required_history())
        .min()
        .unwrap_or(usize::MAX);
    let mut out = Vec::with_capacity(history_lengths.len());
    for &len in history_lengths {
        let skipped = if len > max {
            Some(format!("history of {len} points exceeds the configured {max}"))
        } else if len < shortest_admissible {
            Some(format!(
                "history of {len} points is shorter than twice the lookback ({shortest_admissible} needed)"
            ))
        } else {
            None
        };
        if let Some(reason) = skipped {
            out.push(TitrationPoint {
                history_len: len,
                median_smape: None,
                per_seed: Vec::new(),
                skipped: Some(reason),
            });
            continue;
        }
        let per_seed: Vec<Option<f64>> = config
            .seeds
            .iter()
            .map(|&s| {
                run_experiment_with_history(ctx, kind, config, s, len)
                    .ok()
                    .and_then(|r| r.value_at(MetricKind::Smape, 1.0))
            })
            .collect();
        let v: Vec<f64> = per_seed.iter().map(|v| v.unwrap_or(200.0)).collect();
        out.push(TitrationPoint {
            history_len: len,
            median_smape: Some(median(&v)),
            per_seed,
            skipped: None,
        });
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available cores.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub systems: Vec<String>,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub version: String,
}

/// One row of `results.csv`. Walltime is the last column.
#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    system: &'a str,
    model: &'a str,
    seed: u64,
    hyper: String,
    tuning_failed: bool,
    diverged: bool,
    forecast_len: usize,
    lyapunov_max: f64,
    smape_1lt: Option<f64>,
    valid_prediction_time: f64,
    doubling_time: f64,
    never_doubled: bool,
    spectrum_error: Option<f64>,
    corr_dim_error: Option<f64>,
    lyapunov_error: Option<f64>,
    failure: Option<&'a str>,
    train_walltime_seconds: f64,
}

#[derive(Debug, Serialize)]
struct LongRow<'a> {
    system: &'a str,
    model: &'a str,
    seed: u64,
    metric: &'a str,
    horizon: f64,
    lyapunov_horizon: f64,
    value: Option<f64>,
    divergent_flag: bool,
}

pub fn record_path(dir: &Path, system: &str, kind: ModelKind, seed: u64) -> PathBuf {
    dir.join("records").join(format!("{system}__{}__{seed}.json", kind.name()))
}

pub fn load_records(dir: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir.join("records"))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(serde_json::from_str(&fs::read_to_string(&path)?)?);
        }
    }
    out.sort_by_key(|r: &BenchmarkRecord| r.key());
    Ok(out)
}

/// Writes `results.csv` (one row per triple) and `records.csv` (long-form
/// curves), sorted by system, model and seed.
pub fn write_tables(records: &[BenchmarkRecord], dir: &Path) -> Result<()> {
    let mut sorted: Vec<&BenchmarkRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut results = csv::Writer::from_path(dir.join("results.csv"))?;
    let mut long = csv::Writer::from_path(dir.join("records.csv"))?;
    for r in sorted {
        let rec = r.invariant_recovery.as_ref();
        results.serialize(ResultRow {
            system: &r.system,
            model: r.model.name(),
            seed: r.seed,
            hyper: r.tuned_hyper.to_string(),
            tuning_failed: r.tuning_failed,
            diverged: r.divergence_flag,
            forecast_len: r.forecast_len,
            lyapunov_max: r.lyapunov_max,
            smape_1lt: r.value_at(MetricKind::Smape, 1.0),
            valid_prediction_time: r.valid_prediction_time,
            doubling_time: r.error_doubling_time.value,
            never_doubled: r.error_doubling_time.never_doubled,
            spectrum_error: rec.and_then(|x| x.power_spectrum),
            corr_dim_error: rec.and_then(|x| x.corr_dim),
            lyapunov_error: rec.and_then(|x| x.lyapunov_max),
            failure: r.failure.as_deref(),
            train_walltime_seconds: r.train_walltime_seconds,
        })?;
        for c in &r.error_curves {
            for (i, (h, v)) in c.horizons.iter().zip(&c.values).enumerate() {
                long.serialize(LongRow {
                    system: &r.system,
                    model: r.model.name(),
                    seed: r.seed,
                    metric: c.metric.name(),
                    horizon: *h,
                    lyapunov_horizon: h * c.lyapunov_scale,
                    value: *v,
                    divergent_flag: c.divergent_from.is_some_and(|d| i >= d),
                })?;
            }
        }
    }
    results.flush()?;
    long.flush()?;
    Ok(())
}

/// Runs every (system, model, seed) triple, writing each record to
/// `dir/records/` as it completes. Triples whose record already exists are
/// loaded instead of recomputed, so an interrupted campaign resumes where it
/// stopped. Failures are recorded per triple.
pub fn run_campaign(
    config: &ExperimentConfig,
    systems: &[SystemSpec],
    kinds: &[ModelKind],
    dir: &Path,
    workers: usize,
) -> Result<Vec<BenchmarkRecord>> {
    config.validate()?;
    if systems.is_empty() || kinds.is_empty() {
        return Err(Error::InvalidArgument("empty system or model selection".into()));
    }
    fs::create_dir_all(dir.join("records"))?;
    let manifest = Manifest {
        config_hash: config.hash(),
        config: config.clone(),
        systems: systems.iter().map(|s| s.name.clone()).collect(),
        models: kinds.to_vec(),
        seeds: config.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let manifest_path = dir.join("manifest.json");
    if let Ok(text) = fs::read_to_string(&manifest_path) {
        let old: Manifest = serde_json::from_str(&text)?;
        if old.config_hash != manifest.config_hash {
            return Err(Error::InvalidArgument(format!(
                "{} holds a campaign with a different configuration",
                dir.display()
            )));
        }
    }
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cache_dir = dir.join("systems");
    let contexts: Vec<std::result::Result<SystemContext, String>> = pool.install(|| {
        systems
            .par_iter()
            .map(|s| SystemContext::prepare_cached(s, config, &cache_dir).map_err(|e| e.to_string()))
            .collect()
    });
    let mut triples = Vec::new();
    for (si, s) in systems.iter().enumerate() {
        for &k in kinds {
            for &seed in &config.seeds {
                triples.push((si, s.name.clone(), k, seed));
            }
        }
    }
    let records: Vec<BenchmarkRecord> = pool.install(|| {
        triples
            .par_iter()
            .map(|(si, name, kind, seed)| -> Result<BenchmarkRecord> {
                let path = record_path(dir, name, *kind, *seed);
                if let Ok(text) = fs::read_to_string(&path) {
                    if let Ok(r) = serde_json::from_str::<BenchmarkRecord>(&text) {
                        return Ok(r);
                    }
                }
                let record = match &contexts[*si] {
                    Ok(ctx) => run_experiment(ctx, *kind, config, *seed)
                        .unwrap_or_else(|e| BenchmarkRecord::failed(name, Some(ctx), *kind, *seed, config, e.to_string())),
                    Err(e) => BenchmarkRecord::failed(name, None, *kind, *seed, config, e.clone()),
                };
                write_atomic(&path, serde_json::to_string(&record)?.as_bytes())?;
                Ok(record)
            })
            .collect::<Result<_>>()
    })?;
    let mut records = records;
    records.sort_by_key(|r| r.key());
    write_tables(&records, dir)?;
    Ok(records)
}

/// Median over seeds of `metric` at `lyapunov_time`, keyed by system and model.
pub fn median_table(records: &[BenchmarkRecord], metric: MetricKind, lyapunov_time: f64) -> BTreeMap<(String, ModelKind), f64> {
    let mut cells: BTreeMap<(String, ModelKind), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.failure.is_none()) {
        let v = r.value_at(metric, lyapunov_time).unwrap_or(f64::INFINITY);
        cells.entry((r.system.clone(), r.model)).or_default().push(v);
    }
    cells.into_iter().map(|(k, v)| (k, median(&v))).collect()
}
