//! Cross-model and cross-system statistics over benchmark records: rank
//! correlations between models, correlation of error with chaoticity,
//! recovery of invariants from forecasts, cost versus accuracy and summary
//! prediction horizons.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::power_spectrum;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::harness::BenchmarkRecord;
use crate::invariants::{correlation_dimension, CorrelationConfig};
use crate::metrics::MetricKind;
use crate::models::ModelKind;
use crate::stats::{average_ranks, mean, median, pearson, spearman, std_dev};

/// Errors `eps_ik(t)` of models `i` on systems `k` at horizons `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPanel {
    pub models: Vec<String>,
    pub systems: Vec<String>,
    /// In Lyapunov times.
    pub horizons: Vec<f64>,
    /// `errors[model][system][horizon]`; missing values rank as worst.
    pub errors: Vec<Vec<Vec<f64>>>,
}

impl RankPanel {
    pub fn new(models: Vec<String>, systems: Vec<String>, horizons: Vec<f64>, errors: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let shape_ok = errors.len() == models.len()
            && errors
                .iter()
                .all(|m| m.len() == systems.len() && m.iter().all(|s| s.len() == horizons.len()));
        if !shape_ok {
            return Err(Error::InvalidArgument("panel shape does not match its labels".into()));
        }
        Ok(Self {
            models,
            systems,
            horizons,
            errors,
        })
    }

    /// Median over seeds of `metric` at each Lyapunov-time horizon. Systems or
    /// models absent from `records` are dropped.
    pub fn from_records(records: &[BenchmarkRecord], metric: MetricKind, horizons: &[f64]) -> Result<Self> {
        let mut cells: BTreeMap<(ModelKind, String), Vec<&BenchmarkRecord>> = BTreeMap::new();
        for r in records {
            cells.entry((r.model, r.system.clone())).or_default().push(r);
        }
        let models: Vec<ModelKind> = {
            let mut m: Vec<_> = cells.keys().map(|k| k.0).collect();
            m.dedup();
            m
        };
        let mut systems: Vec<String> = cells.keys().map(|k| k.1.clone()).collect();
        systems.sort();
        systems.dedup();
        // keep only systems every model was run on
        systems.retain(|s| models.iter().all(|m| cells.contains_key(&(*m, s.clone()))));
        let errors = models
            .iter()
            .map(|m| {
                systems
                    .iter()
                    .map(|s| {
                        let rs = &cells[&(*m, s.clone())];
                        horizons
                            .iter()
                            .map(|&t| {
                                let v: Vec<f64> = rs
                                    .iter()
                                    .map(|r| r.value_at(metric, t).unwrap_or(f64::INFINITY))
                                    .collect();
                                median(&v)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(
            models.iter().map(|m| m.name().to_string()).collect(),
            systems,
            horizons.to_vec(),
            errors,
        )
    }

    /// Errors of every model across systems at horizon index `t`.
    pub fn column(&self, model: usize, t: usize) -> Vec<f64> {
        self.errors[model].iter().map(|s| s[t]).collect()
    }

    /// `R_ik(t)`: average ranks of systems per model.
    pub fn ranks(&self, t: usize) -> Vec<Vec<f64>> {
        (0..self.models.len()).map(|i| average_ranks(&self.column(i, t))).collect()
    }
}

fn check_horizon(panel: &RankPanel, t: usize) -> Result<()> {
    if t >= panel.horizons.len() {
        return Err(Error::InvalidArgument(format!("horizon index {t} out of range")));
    }
    Ok(())
}

/// `C_ij(t)`: Spearman correlation between the system rankings of models `i`
/// and `j`. `None` marks a model whose ranks have zero variance.
pub fn rank_correlation_matrix(panel: &RankPanel, t: usize) -> Result<Vec<Vec<Option<f64>>>> {
    check_horizon(panel, t)?;
    if panel.systems.len() < 3 {
        return Err(Error::InvalidArgument("rank correlation needs at least 3 systems".into()));
    }
    let ranks = panel.ranks(t);
    let k = ranks.len();
    let mut c = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = pearson(&ranks[i], &ranks[j]);
            // the self term is exactly 1 wherever defined
            let v = if i == j { v.map(|_| 1.0) } else { v };
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

/// `C_i(t) = sum_j C_ij(t)`; undefined when any entry of the row is.
pub fn mutual_correlation(panel: &RankPanel, t: usize) -> Result<Vec<Option<f64>>> {
    Ok(rank_correlation_matrix(panel, t)?
        .iter()
        .map(|row| row.iter().copied().sum::<Option<f64>>())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: Option<f64>,
    /// Percentile bootstrap 95% interval.
    pub ci: Option<(f64, f64)>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCorrelation {
    /// Mean over models of the per-model Spearman coefficient.
    pub rho: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub per_model: Vec<Option<f64>>,
}

pub const DEFAULT_BOOTSTRAP: usize = 500;

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

fn percentile_ci(mut samples: Vec<f64>) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    Some((
        crate::stats::quantile_sorted(&samples, 0.025),
        crate::stats::quantile_sorted(&samples, 0.975),
    ))
}

/// Spearman correlation between each model's error and `lambda_max` across
/// systems, averaged over models; systems are resampled with replacement for
/// the interval.
pub fn correlate_with_lyapunov(
    panel: &RankPanel,
    lyapunov: &[f64],
    t: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<LyapunovCorrelation> {
    check_horizon(panel, t)?;
    if lyapunov.len() != panel.systems.len() {
        return Err(Error::InvalidArgument("one exponent per system required".into()));
    }
    if n_bootstrap < 100 {
        return Err(Error::InvalidArgument("at least 100 bootstrap draws required".into()));
    }
    let k = panel.systems.len();
    if k < 3 {
        return Ok(LyapunovCorrelation {
            rho: None,
            ci: None,
            per_model: vec![None; panel.models.len()],
        });
    }
    let cols: Vec<Vec<f64>> = (0..panel.models.len()).map(|i| panel.column(i, t)).collect();
    let per_model: Vec<Option<f64>> = cols.iter().map(|c| spearman(c, lyapunov)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_bootstrap);
    let mut idx = vec![0; k];
    for _ in 0..n_bootstrap {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..k));
        let lam: Vec<f64> = idx.iter().map(|&i| lyapunov[i]).collect();
        let stat = mean_defined(cols.iter().map(|c| {
            let e: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
            spearman(&e, &lam)
        }));
        draws.extend(stat);
    }
    Ok(LyapunovCorrelation {
        rho: mean_defined(per_model.iter().copied()),
        ci: percentile_ci(draws),
        per_model,
    })
}

/// Spearman coefficient with a bootstrap interval over resampled pairs.
pub fn bootstrap_spearman(x: &[f64], y: &[f64], n_bootstrap: usize, seed: u64) -> Correlation {
    let n = x.len();
    let rho = spearman(x, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::new();
    if rho.is_some() {
        for _ in 0..n_bootstrap {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let a: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            draws.extend(spearman(&a, &b));
        }
    }
    Correlation {
        rho,
        ci: percentile_ci(draws),
        n,
    }
}

/// Coarse model families used to group the cost/accuracy fits.
pub fn model_group(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::NaiveMean | ModelKind::NaiveDrift | ModelKind::NaiveSeasonal => "naive",
        ModelKind::LinearRidge | ModelKind::DLinear | ModelKind::NLinear => "linear",
        ModelKind::Esn | ModelKind::Nvar => "reservoir",
        _ => "statistical",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalltimeCorrelation {
    pub overall: Correlation,
    pub per_group: BTreeMap<String, Correlation>,
}

/// Spearman correlation between sMAPE at one Lyapunov time and training
/// walltime. Negative values mean slower models forecast better.
pub fn error_vs_walltime(records: &[BenchmarkRecord], n_bootstrap: usize, seed: u64) -> Result<WalltimeCorrelation> {
    let pairs: Vec<(ModelKind, f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.model, r.value_at(MetricKind::Smape, 1.0)?, r.train_walltime_seconds)))
        .collect();
    if pairs.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 scored records, got {}",
            pairs.len()
        )));
    }
    let corr = |sel: &[&(ModelKind, f64, f64)], seed: u64| {
        let e: Vec<f64> = sel.iter().map(|p| p.1).collect();
        let w: Vec<f64> = sel.iter().map(|p| p.2).collect();
        bootstrap_spearman(&e, &w, n_bootstrap, seed)
    };
    let all: Vec<_> = pairs.iter().collect();
    let mut per_group = BTreeMap::new();
    for (g, group) in ["linear", "naive", "reservoir", "statistical"].into_iter().enumerate() {
        let sel: Vec<_> = pairs.iter().filter(|p| model_group(p.0) == group).collect();
        if sel.len() >= 3 {
            per_group.insert(group.to_string(), corr(&sel, seed.wrapping_add(g as u64 + 1)));
        }
    }
    Ok(WalltimeCorrelation {
        overall: corr(&all, seed),
        per_group,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestHorizon {
    pub system: String,
    pub model: ModelKind,
    /// Median over seeds, in Lyapunov times.
    pub valid_prediction_time: f64,
    pub doubling_time: f64,
    /// The same horizon in natural time units.
    pub valid_prediction_time_natural: f64,
    pub lyapunov_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub best: Vec<BestHorizon>,
    pub vpt_mean: f64,
    pub vpt_std: f64,
    pub doubling_mean: f64,
    pub doubling_std: f64,
}

/// Best model per system by median valid prediction time, with the mean and
/// standard deviation of the best horizons across systems.
pub fn horizon_statistics(records: &[BenchmarkRecord]) -> Result<HorizonSummary> {
    let scored: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    if scored.is_empty() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    let mut cells: BTreeMap<(String, ModelKind), Vec<&BenchmarkRecord>> = BTreeMap::new();
    for r in scored {
        cells.entry((r.system.clone(), r.model)).or_default().push(r);
    }
    let mut best: BTreeMap<String, BestHorizon> = BTreeMap::new();
    for ((system, model), rs) in cells {
        let vpt = median(&rs.iter().map(|r| r.valid_prediction_time).collect::<Vec<_>>());
        let doubling = median(&rs.iter().map(|r| r.error_doubling_time.value).collect::<Vec<_>>());
        let lam = rs[0].lyapunov_max;
        let entry = BestHorizon {
            system: system.clone(),
            model,
            valid_prediction_time: vpt,
            doubling_time: doubling,
            valid_prediction_time_natural: vpt / lam,
            lyapunov_max: lam,
        };
        match best.get(&system) {
            Some(b) if b.valid_prediction_time >= vpt => {}
            _ => {
                best.insert(system, entry);
            }
        }
    }
    let best: Vec<BestHorizon> = best.into_values().collect();
    let vpt: Vec<f64> = best.iter().map(|b| b.valid_prediction_time).collect();
    let dbl: Vec<f64> = best.iter().map(|b| b.doubling_time).collect();
    Ok(HorizonSummary {
        vpt_mean: mean(&vpt),
        vpt_std: std_dev(&vpt),
        doubling_mean: mean(&dbl),
        doubling_std: std_dev(&dbl),
        best,
    })
}

/// Settings for the data-driven Lyapunov estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataLyapunovConfig {
    /// Samples each local map advances.
    pub evolve: usize,
    pub neighbors: usize,
    /// Candidates closer than this in time to the reference are excluded.
    pub theiler: usize,
    /// Chosen neighbors are at least this many samples apart, so the cloud
    /// spans several passes instead of one nearby segment.
    pub neighbor_gap: usize,
    /// Delay-embedding dimension applied to scalar series.
    pub scalar_embedding: usize,
    /// Embedding lag in samples.
    pub lag: usize,
}

impl Default for DataLyapunovConfig {
    fn default() -> Self {
        Self {
            evolve: 20,
            neighbors: 30,
            theiler: 25,
            neighbor_gap: 3,
            scalar_embedding: 4,
            lag: 25,
        }
    }
}

/// Delay vectors `(x_t, x_{t-lag}, ...)` of a scalar series.
fn delay_embed(x: &[f64], dim: usize, lag: usize) -> Vec<f64> {
    let start = (dim - 1) * lag;
    (start..x.len()).flat_map(|t| (0..dim).map(move |k| x[t - k * lag])).collect()
}

/// Lyapunov spectrum of a sampled trajectory from local linear maps fitted on
/// nearest-neighbor clouds, chained with QR re-orthonormalization along the
/// orbit. Exponents are per unit time, sorted descending.
pub fn lyapunov_from_data(traj: &Trajectory, config: &DataLyapunovConfig) -> Result<Vec<f64>> {
    let embedded;
    let (x, d) = if traj.dim() == 1 && config.scalar_embedding > 1 {
        embedded = delay_embed(traj.values(), config.scalar_embedding, config.lag.max(1));
        (&embedded[..], config.scalar_embedding)
    } else {
        (traj.values(), traj.dim())
    };
    let n = x.len() / d;
    let m = config.evolve.max(1);
    let k = config.neighbors;
    if k < d + 1 {
        return Err(Error::InvalidArgument(format!("need at least {} neighbors", d + 1)));
    }
    if n < 2 * config.theiler + (k + 1) * config.neighbor_gap.max(1) + m + 2 {
        return Err(Error::InvalidArgument("trajectory too short for local maps".into()));
    }
    let last = n - m;
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut sums = vec![0.0; d];
    let mut steps = 0usize;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(last);
    let mut nb: Vec<usize> = Vec::with_capacity(k);
    let mut i = 0;
    while i < last {
        let xi = &x[i * d..(i + 1) * d];
        dist.clear();
        for j in 0..last {
            if j.abs_diff(i) > config.theiler {
                let xj = &x[j * d..(j + 1) * d];
                dist.push((xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum(), j));
            }
        }
        dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nb.clear();
        for &(_, j) in &dist {
            if nb.iter().all(|&c| c.abs_diff(j) >= config.neighbor_gap) {
                nb.push(j);
                if nb.len() == k {
                    break;
                }
            }
        }
        if nb.len() < k {
            return Err(Error::InvalidArgument("not enough separated neighbors".into()));
        }
        // affine local fit: centered displacements now and m samples later
        let mut a = DMatrix::<f64>::zeros(k, d);
        let mut b = DMatrix::<f64>::zeros(k, d);
        for (r, &j) in nb.iter().enumerate() {
            for c in 0..d {
                a[(r, c)] = x[j * d + c];
                b[(r, c)] = x[(j + m) * d + c];
            }
        }
        for mut col in a.column_iter_mut().chain(b.column_iter_mut()) {
            let mu = col.mean();
            col.add_scalar_mut(-mu);
        }
        let gram = a.tr_mul(&a);
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        if !(hi > 0.0) || lo <= 1e-12 * hi {
            return Err(Error::Singular);
        }
        let jac = gram.cholesky().ok_or(Error::Singular)?.solve(&a.tr_mul(&b)).transpose();
        let qr = (&jac * &q).qr();
        let r = qr.r();
        for (s, c) in sums.iter_mut().zip(0..d) {
            *s += r[(c, c)].abs().max(f64::MIN_POSITIVE).ln();
        }
        q = qr.q();
        steps += 1;
        i += m;
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("no usable reference points".into()));
    }
    let span = (steps * m) as f64 * traj.dt;
    let mut out: Vec<f64> = sums.iter().map(|s| s / span).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// Shorter forecasts skip the dimension and Lyapunov estimates.
    pub min_points: usize,
    pub spectrum_bands: usize,
    pub correlation: CorrelationConfig,
    pub lyapunov: DataLyapunovConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            min_points: 2000,
            spectrum_bands: 40,
            correlation: CorrelationConfig::default(),
            lyapunov: DataLyapunovConfig::default(),
        }
    }
}

/// Invariants estimated identically from one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantEstimates {
    pub corr_dim: Option<f64>,
    pub lyapunov_spectrum: Option<Vec<f64>>,
}

/// `|eta - eta_hat|` per invariant; `None` where the forecast makes the
/// invariant undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantRecovery {
    /// RMSE between normalized log band powers.
    pub power_spectrum: Option<f64>,
    pub corr_dim: Option<f64>,
    pub lyapunov_max: Option<f64>,
    /// RMSE across exponents.
    pub lyapunov_spectrum: Option<f64>,
    pub truth: InvariantEstimates,
    pub predicted: InvariantEstimates,
    /// Forecast too short for the dimension and Lyapunov estimates.
    pub partial: bool,
}

fn is_constant(traj: &Trajectory) -> bool {
    let first = traj.row(0);
    traj.rows().all(|r| r.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0)))
}

/// Band-averaged power per coordinate, normalized to unit total power, on
/// `bands` log-spaced frequency bands. Empty bands are `None`.
fn band_spectrum(traj: &Trajectory, bands: usize) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(bands * traj.dim());
    for c in 0..traj.dim() {
        let ps = power_spectrum(&traj.column(c), traj.dt)?;
        let total: f64 = ps.iter().map(|p| p.1).sum();
        let (f_lo, f_hi) = (ps[0].0.ln(), ps[ps.len() - 1].0.ln());
        let mut acc = vec![(0.0, 0usize); bands];
        for (f, p) in &ps {
            let pos = ((f.ln() - f_lo) / (f_hi - f_lo) * bands as f64) as usize;
            let slot = &mut acc[pos.min(bands - 1)];
            slot.0 += p / total;
            slot.1 += 1;
        }
        out.extend(acc.iter().map(|(s, n)| (*n > 0).then(|| s / *n as f64)));
    }
    Ok(out)
}

fn spectrum_distance(truth: &Trajectory, forecast: &Trajectory, bands: usize) -> Option<f64> {
    if is_constant(forecast) {
        return None;
    }
    let a = band_spectrum(truth, bands).ok()?;
    let b = band_spectrum(forecast, bands).ok()?;
    // both spectra share one frequency grid, so empty bands coincide
    let floor = 1e-12;
    let sq: Vec<f64> = a
        .iter()
        .zip(&b)
        .filter_map(|(x, y)| Some(((*x)?.max(floor).log10() - y.unwrap_or(0.0).max(floor).log10()).powi(2)))
        .collect();
    (!sq.is_empty()).then(|| mean(&sq).sqrt())
}

fn estimates(traj: &Trajectory, config: &RecoveryConfig) -> InvariantEstimates {
    if traj.len() < config.min_points || is_constant(traj) || !traj.is_finite() {
        return InvariantEstimates::default();
    }
    InvariantEstimates {
        corr_dim: correlation_dimension(traj, &config.correlation).ok().map(|d| d.dimension),
        lyapunov_spectrum: lyapunov_from_data(traj, &config.lyapunov).ok(),
    }
}

/// Compares invariants of a forecast with those of the true continuation. A
/// truncated forecast is compared against the matching prefix of the truth.
pub fn invariant_recovery(truth: &Trajectory, forecast: &Trajectory, config: &RecoveryConfig) -> Result<InvariantRecovery> {
    if truth.dim() != forecast.dim() || forecast.len() > truth.len() {
        return Err(Error::InvalidArgument("forecast does not match truth".into()));
    }
    let truth = truth.slice(0, forecast.len());
    let partial = forecast.len() < config.min_points;
    let t = estimates(&truth, config);
    let p = estimates(forecast, config);
    let abs = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
    let lyap_max = abs(
        t.lyapunov_spectrum.as_ref().map(|s| s[0]),
        p.lyapunov_spectrum.as_ref().map(|s| s[0]),
    );
    let lyap_spec = match (&t.lyapunov_spectrum, &p.lyapunov_spectrum) {
        (Some(a), Some(b)) => Some(mean(&a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect::<Vec<_>>()).sqrt()),
        _ => None,
    };
    Ok(InvariantRecovery {
        power_spectrum: if forecast.len() >= 16 {
            spectrum_distance(&truth, forecast, config.spectrum_bands)
        } else {
            None
        },
        corr_dim: abs(t.corr_dim, p.corr_dim),
        lyapunov_max: lyap_max,
        lyapunov_spectrum: lyap_spec,
        truth: t,
        predicted: p,
        partial,
    })
}

#[derive(Debug, Serialize)]
struct RankCorrRow<'a> {
    model_i: &'a str,
    model_j: &'a str,
    horizon: f64,
    value: Option<f64>,
}

#[derive(Debug, Serialize)]
struct LyapCorrRow {
    horizon: f64,
    rho: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MutualRow<'a> {
    model: &'a str,
    horizon: f64,
    value: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RecoveryRow<'a> {
    system: &'a str,
    model: &'a str,
    seed: u64,
    power_spectrum: Option<f64>,
    corr_dim: Option<f64>,
    lyapunov_max: Option<f64>,
    lyapunov_spectrum: Option<f64>,
    partial: bool,
}

/// Lyapunov-time horizons at which the panel statistics are tabulated.
pub const PANEL_HORIZONS: [f64; 8] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub records: usize,
    pub walltime: Option<WalltimeCorrelation>,
    pub horizons: Option<HorizonSummary>,
}

/// Writes the analysis tables for a set of records into `dir`.
pub fn write_analysis(records: &[BenchmarkRecord], dir: &Path, n_bootstrap: usize, seed: u64) -> Result<AnalysisSummary> {
    fs::create_dir_all(dir)?;
    let panel = RankPanel::from_records(records, MetricKind::Smape, &PANEL_HORIZONS)?;
    let mut rank = csv::Writer::from_path(dir.join("rank_corr.csv"))?;
    let mut mutual = csv::Writer::from_path(dir.join("mutual_corr.csv"))?;
    let mut lyap = csv::Writer::from_path(dir.join("lyap_corr.csv"))?;
    let mut lam_by_system: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records {
        lam_by_system.insert(&r.system, r.lyapunov_max);
    }
    let lams: Vec<f64> = panel.systems.iter().map(|s| lam_by_system[s.as_str()]).collect();
    if panel.systems.len() >= 3 {
        for (t, &h) in panel.horizons.iter().enumerate() {
            let c = rank_correlation_matrix(&panel, t)?;
            for (i, row) in c.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    rank.serialize(RankCorrRow {
                        model_i: &panel.models[i],
                        model_j: &panel.models[j],
                        horizon: h,
                        value: *v,
                    })?;
                }
                mutual.serialize(MutualRow {
                    model: &panel.models[i],
                    horizon: h,
                    value: row.iter().copied().sum(),
                })?;
            }
            let lc = correlate_with_lyapunov(&panel, &lams, t, n_bootstrap, seed)?;
            lyap.serialize(LyapCorrRow {
                horizon: h,
                rho: lc.rho,
                ci_lo: lc.ci.map(|c| c.0),
                ci_hi: lc.ci.map(|c| c.1),
            })?;
        }
    }
    rank.flush()?;
    mutual.flush()?;
    lyap.flush()?;

    let mut rec = csv::Writer::from_path(dir.join("invariant_recovery.csv"))?;
    for r in records {
        if let Some(ir) = &r.invariant_recovery {
            rec.serialize(RecoveryRow {
                system: &r.system,
                model: r.model.name(),
                seed: r.seed,
                power_spectrum: ir.power_spectrum,
                corr_dim: ir.corr_dim,
                lyapunov_max: ir.lyapunov_max,
                lyapunov_spectrum: ir.lyapunov_spectrum,
                partial: ir.partial,
            })?;
        }
    }
    rec.flush()?;

    let horizons = horizon_statistics(records).ok();
    if let Some(h) = &horizons {
        let mut w = csv::Writer::from_path(dir.join("horizons.csv"))?;
        for b in &h.best {
            w.serialize(b)?;
        }
        w.flush()?;
    }
    let walltime = error_vs_walltime(records, n_bootstrap, seed).ok();
    let summary = AnalysisSummary {
        records: records.len(),
        walltime,
        horizons,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
