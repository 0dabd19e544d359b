//! Point-wise forecast accuracy metrics and cumulative error curves.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::stats::{kendall_tau, mean, pearson, spearman, std_dev};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    Smape,
    Spearman,
    Nrmse,
    Mase,
    R2,
    Wape,
    Mse,
    Mae,
    Pearson,
    KendallTau,
    Mape,
    Marre,
    Rmsle,
    Cv,
}

impl MetricKind {
    pub const ALL: [MetricKind; 14] = [
        MetricKind::Smape,
        MetricKind::Spearman,
        MetricKind::Nrmse,
        MetricKind::Mase,
        MetricKind::R2,
        MetricKind::Wape,
        MetricKind::Mse,
        MetricKind::Mae,
        MetricKind::Pearson,
        MetricKind::KendallTau,
        MetricKind::Mape,
        MetricKind::Marre,
        MetricKind::Rmsle,
        MetricKind::Cv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Smape => "smape",
            MetricKind::Spearman => "spearman",
            MetricKind::Nrmse => "nrmse",
            MetricKind::Mase => "mase",
            MetricKind::R2 => "r2",
            MetricKind::Wape => "wape",
            MetricKind::Mse => "mse",
            MetricKind::Mae => "mae",
            MetricKind::Pearson => "pearson",
            MetricKind::KendallTau => "kendall_tau",
            MetricKind::Mape => "mape",
            MetricKind::Marre => "marre",
            MetricKind::Rmsle => "rmsle",
            MetricKind::Cv => "cv",
        }
    }

    /// Closed range of attainable values.
    pub fn range(self) -> (f64, f64) {
        match self {
            MetricKind::Smape => (0.0, 200.0),
            MetricKind::Spearman | MetricKind::Pearson | MetricKind::KendallTau => (-1.0, 1.0),
            MetricKind::R2 => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(
            self,
            MetricKind::Spearman | MetricKind::Pearson | MetricKind::KendallTau | MetricKind::R2
        )
    }

    /// Sum of non-negative per-point terms divided by the window length.
    fn is_pointwise_mean(self) -> bool {
        matches!(self, MetricKind::Smape | MetricKind::Mse | MetricKind::Mae | MetricKind::Mape)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == key || (key == "kendall" && *k == MetricKind::KendallTau))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Per-system normalization constants taken from the training data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    /// Per-dimension standard deviation of the training trajectory (NRMSE).
    pub sigma: Option<Vec<f64>>,
}

impl MetricContext {
    pub fn from_training(train: &Trajectory) -> Self {
        Self {
            sigma: Some((0..train.dim()).map(|c| std_dev(&train.column(c))).collect()),
        }
    }
}

fn undefined(kind: MetricKind, reason: &str) -> Error {
    Error::MetricUndefined {
        metric: kind.name().into(),
        reason: reason.into(),
    }
}

fn smape_term(y: f64, f: f64) -> f64 {
    let den = y.abs() + f.abs();
    if den == 0.0 {
        0.0
    } else {
        (y - f).abs() / den
    }
}

fn metric_1d(kind: MetricKind, y: &[f64], f: &[f64], sigma: Option<f64>) -> Result<f64> {
    let n = y.len() as f64;
    let abs_err = || y.iter().zip(f).map(|(a, b)| (a - b).abs());
    let mse = || y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let v = match kind {
        MetricKind::Smape => 200.0 / n * y.iter().zip(f).map(|(a, b)| smape_term(*a, *b)).sum::<f64>(),
        MetricKind::Mse => mse(),
        MetricKind::Mae => abs_err().sum::<f64>() / n,
        MetricKind::Nrmse => {
            let s = sigma.ok_or_else(|| undefined(kind, "no training standard deviation supplied"))?;
            if s <= 0.0 {
                return Err(undefined(kind, "training standard deviation is zero"));
            }
            mse().sqrt() / s
        }
        MetricKind::Mase => {
            if y.len() < 3 {
                return Err(undefined(kind, "needs at least 3 points"));
            }
            let naive = y.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1.0);
            if naive == 0.0 {
                return Err(undefined(kind, "naive forecast error is zero"));
            }
            abs_err().sum::<f64>() / n / naive
        }
        MetricKind::R2 => {
            let m = mean(y);
            let ss_tot: f64 = y.iter().map(|a| (a - m) * (a - m)).sum();
            if ss_tot == 0.0 {
                return Err(undefined(kind, "truth has zero variance"));
            }
            1.0 - mse() * n / ss_tot
        }
        MetricKind::Wape => {
            let den: f64 = y.iter().map(|a| a.abs()).sum();
            if den == 0.0 {
                return Err(undefined(kind, "truth is identically zero"));
            }
            abs_err().sum::<f64>() / den
        }
        MetricKind::Mape => {
            if y.iter().any(|a| *a == 0.0) {
                return Err(undefined(kind, "truth contains zeros"));
            }
            100.0 / n * y.iter().zip(f).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>()
        }
        MetricKind::Marre => {
            let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            if hi == lo {
                return Err(undefined(kind, "truth has zero range"));
            }
            100.0 / n * abs_err().sum::<f64>() / (hi - lo)
        }
        MetricKind::Rmsle => {
            let lo = y.iter().chain(f).fold(f64::INFINITY, |l, v| l.min(*v));
            let shift = 1.0 - lo;
            let s: f64 = y
                .iter()
                .zip(f)
                .map(|(a, b)| ((a + shift).ln_1p() - (b + shift).ln_1p()).powi(2))
                .sum();
            (s / n).sqrt()
        }
        MetricKind::Cv => {
            let m = mean(y).abs();
            if m == 0.0 {
                return Err(undefined(kind, "truth has zero mean"));
            }
            100.0 * mse().sqrt() / m
        }
        MetricKind::Pearson => pearson(y, f).ok_or_else(|| undefined(kind, "zero variance"))?,
        MetricKind::Spearman => spearman(y, f).ok_or_else(|| undefined(kind, "zero rank variance"))?,
        MetricKind::KendallTau => kendall_tau(y, f).ok_or_else(|| undefined(kind, "all pairs tied"))?,
    };
    Ok(v)
}

fn check_shapes(truth: &Trajectory, forecast: &Trajectory) -> Result<()> {
    if truth.dim() != forecast.dim() || truth.len() != forecast.len() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: truth {}x{}, forecast {}x{}",
            truth.len(),
            truth.dim(),
            forecast.len(),
            forecast.dim()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("metrics need at least 2 points".into()));
    }
    Ok(())
}

fn evaluate_prefix(kind: MetricKind, truth: &Trajectory, forecast: &Trajectory, len: usize, ctx: &MetricContext) -> Result<f64> {
    let dim = truth.dim();
    let mut total = 0.0;
    for c in 0..dim {
        let y: Vec<f64> = truth.values()[..len * dim].iter().skip(c).step_by(dim).copied().collect();
        let f: Vec<f64> = forecast.values()[..len * dim].iter().skip(c).step_by(dim).copied().collect();
        let sigma = ctx.sigma.as_ref().and_then(|s| s.get(c).copied());
        total += metric_1d(kind, &y, &f, sigma)?;
    }
    Ok(total / dim as f64)
}

/// Metric value over the whole window. Multivariate series average the
/// per-dimension values.
pub fn evaluate(kind: MetricKind, truth: &Trajectory, forecast: &Trajectory, ctx: &MetricContext) -> Result<f64> {
    check_shapes(truth, forecast)?;
    evaluate_prefix(kind, truth, forecast, truth.len(), ctx)
}

/// Cumulative error `eps(t)` evaluated over `[origin, t]` at a grid of
/// horizons. The first forecast point sits one step after the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub metric: MetricKind,
    /// Natural time since the forecast origin.
    pub horizons: Vec<f64>,
    /// `None` where the metric is undefined or the rollout had diverged.
    pub values: Vec<Option<f64>>,
    pub lyapunov_scale: f64,
    /// Index of the first horizon past the end of a truncated rollout.
    pub divergent_from: Option<usize>,
}

impl ErrorCurve {
    pub fn lyapunov_horizons(&self) -> Vec<f64> {
        self.horizons.iter().map(|h| h * self.lyapunov_scale).collect()
    }

    /// Value at the last grid horizon not exceeding `lyapunov_time` (in units
    /// of `1 / lambda_max`).
    pub fn value_at_lyapunov_time(&self, lyapunov_time: f64) -> Option<f64> {
        let target = lyapunov_time / self.lyapunov_scale;
        let idx = self.horizons.partition_point(|h| *h <= target * (1.0 + 1e-12));
        if idx == 0 {
            return None;
        }
        self.values[idx - 1]
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied().flatten()
    }
}

/// Forecast step counts for the curve grid: every point up to `dense`, then
/// geometric spacing out to `len`. Always contains `len` itself.
pub fn horizon_grid(len: usize, dense: usize, points: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=dense.min(len)).collect();
    if len > dense {
        let lo = (dense.max(1) as f64).ln();
        let hi = (len as f64).ln();
        for i in 1..=points {
            let h = (lo + (hi - lo) * i as f64 / points as f64).exp().round() as usize;
            if h > *grid.last().unwrap_or(&0) {
                grid.push(h.min(len));
            }
        }
        if *grid.last().unwrap() != len {
            grid.push(len);
        }
    }
    grid
}

/// Error curve at every forecast step.
pub fn error_curve(
    kind: MetricKind,
    truth: &Trajectory,
    forecast: &Trajectory,
    ctx: &MetricContext,
    lyapunov_max: f64,
) -> Result<ErrorCurve> {
    let grid: Vec<usize> = (1..=truth.len()).collect();
    error_curve_on_grid(kind, truth, forecast, ctx, lyapunov_max, &grid)
}

/// Error curve at the given step counts. A `forecast` shorter than `truth`
/// is a truncated rollout; horizons beyond its end are marked divergent.
pub fn error_curve_on_grid(
    kind: MetricKind,
    truth: &Trajectory,
    forecast: &Trajectory,
    ctx: &MetricContext,
    lyapunov_max: f64,
    grid: &[usize],
) -> Result<ErrorCurve> {
    if truth.dim() != forecast.dim() || forecast.len() > truth.len() {
        return Err(Error::InvalidArgument("forecast does not match truth".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.first() == Some(&0) || grid.last().is_some_and(|&g| g > truth.len()) {
        return Err(Error::InvalidArgument("horizon grid must be increasing within the window".into()));
    }
    let dim = truth.dim();
    let available = forecast.len();
    let dt = truth.dt;
    let mut values = Vec::with_capacity(grid.len());
    let prefix = if kind.is_pointwise_mean() && kind != MetricKind::Mape {
        // running sums per dimension
        let mut acc = vec![0.0; dim];
        let mut sums = Vec::with_capacity(available);
        for i in 0..available {
            for c in 0..dim {
                let (y, f) = (truth.row(i)[c], forecast.row(i)[c]);
                acc[c] += match kind {
                    MetricKind::Smape => 200.0 * smape_term(y, f),
                    MetricKind::Mse => (y - f) * (y - f),
                    _ => (y - f).abs(),
                };
            }
            sums.push(acc.iter().sum::<f64>());
        }
        Some(sums)
    } else {
        None
    };
    let mut divergent_from = None;
    for (gi, &h) in grid.iter().enumerate() {
        if h > available {
            divergent_from.get_or_insert(gi);
            values.push(None);
            continue;
        }
        let v = match &prefix {
            Some(sums) => Some(sums[h - 1] / (h * dim) as f64),
            None if h < 2 => None,
            None => evaluate_prefix(kind, truth, forecast, h, ctx).ok(),
        };
        values.push(v);
    }
    if kind == MetricKind::Nrmse && ctx.sigma.is_none() {
        return Err(undefined(kind, "no training standard deviation supplied"));
    }
    Ok(ErrorCurve {
        metric: kind,
        horizons: grid.iter().map(|&h| h as f64 * dt).collect(),
        values,
        lyapunov_scale: lyapunov_max,
        divergent_from,
    })
}

/// Largest horizon, in Lyapunov times, up to which the curve stays strictly
/// below `threshold` (first-crossing convention). Undefined or divergent
/// points count as crossings.
pub fn valid_prediction_time(curve: &ErrorCurve, threshold: f64) -> Result<f64> {
    if curve.horizons.is_empty() || !(threshold > 0.0) {
        return Err(Error::InvalidArgument("empty curve or non-positive threshold".into()));
    }
    let below = curve
        .values
        .iter()
        .take_while(|v| v.is_some_and(|x| x < threshold))
        .count();
    Ok(if below == 0 {
        0.0
    } else {
        curve.horizons[below - 1] * curve.lyapunov_scale
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingTime {
    /// In Lyapunov times since the forecast origin; the window length when
    /// the error never doubled.
    pub value: f64,
    pub never_doubled: bool,
}

/// First horizon at which the pointwise error, summed over coordinates,
/// reaches twice its value at `reference_time` after the origin.
pub fn error_doubling_time(
    truth: &Trajectory,
    forecast: &Trajectory,
    lyapunov_max: f64,
    reference_time: f64,
) -> Result<DoublingTime> {
    check_shapes(truth, forecast)?;
    if truth.len() < 10 {
        return Err(Error::InvalidArgument("doubling time needs at least 10 points".into()));
    }
    let dt = truth.dt;
    let err: Vec<f64> = truth
        .rows()
        .zip(forecast.rows())
        .map(|(y, f)| y.iter().zip(f).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let r = ((reference_time / dt).round() as usize).clamp(1, err.len()) - 1;
    let sentinel = DoublingTime {
        value: err.len() as f64 * dt * lyapunov_max,
        never_doubled: true,
    };
    let e0 = err[r];
    if e0 == 0.0 {
        return Ok(sentinel);
    }
    Ok(err[r + 1..]
        .iter()
        .position(|e| *e >= 2.0 * e0)
        .map(|k| DoublingTime {
            value: (r + 2 + k) as f64 * dt * lyapunov_max,
            never_doubled: false,
        })
        .unwrap_or(sentinel))
}

/// One row of the long-form curve table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub system: String,
    pub model: String,
    pub metric: String,
    pub horizon: f64,
    pub lyapunov_horizon: f64,
    pub value: Option<f64>,
    pub divergent_flag: bool,
}

pub fn curve_rows(system: &str, model: &str, curve: &ErrorCurve) -> Vec<CurveRow> {
    curve
        .horizons
        .iter()
        .zip(&curve.values)
        .enumerate()
        .map(|(i, (h, v))| CurveRow {
            system: system.into(),
            model: model.into(),
            metric: curve.metric.name().into(),
            horizon: *h,
            lyapunov_horizon: h * curve.lyapunov_scale,
            value: *v,
            divergent_flag: curve.divergent_from.is_some_and(|d| i >= d),
        })
        .collect()
}

pub fn write_curves_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> Trajectory {
        Trajectory::new(v.to_vec(), 1, 0.1, "t").unwrap()
    }

    fn eval(kind: MetricKind, y: &[f64], f: &[f64]) -> f64 {
        evaluate(kind, &series(y), &series(f), &MetricContext::default()).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert!((eval(MetricKind::Smape, &[1.0, 1.0], &[3.0, 1.0]) - 50.0).abs() < 1e-12);
        assert!((eval(MetricKind::Wape, &[1.0, 2.0, 3.0], &[1.0, 2.0, 6.0]) - 0.5).abs() < 1e-12);
        assert!((eval(MetricKind::Mase, &[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!(eval(MetricKind::R2, &[1.0, 2.0, 6.0], &[3.0, 3.0, 3.0]).abs() < 1e-12);
        assert!((eval(MetricKind::Mape, &[2.0, 4.0], &[1.0, 5.0]) - 37.5).abs() < 1e-12);
        assert!((eval(MetricKind::Marre, &[0.0, 4.0], &[1.0, 4.0]) - 12.5).abs() < 1e-12);
        assert!((eval(MetricKind::Cv, &[2.0, 2.0], &[3.0, 1.0]) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_needs_sigma() {
        let y = series(&[1.0, 2.0, 3.0]);
        let f = series(&[1.0, 2.0, 4.0]);
        assert!(evaluate(MetricKind::Nrmse, &y, &f, &MetricContext::default()).is_err());
        let ctx = MetricContext { sigma: Some(vec![2.0]) };
        let v = evaluate(MetricKind::Nrmse, &y, &f, &ctx).unwrap();
        assert!((v - (1.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let z = series(&[0.0, 0.0, 0.0]);
        let f = series(&[1.0, 0.0, 0.0]);
        let ctx = MetricContext::default();
        for kind in [MetricKind::Wape, MetricKind::Mape, MetricKind::Mase, MetricKind::R2, MetricKind::Cv] {
            assert!(matches!(evaluate(kind, &z, &f, &ctx), Err(Error::MetricUndefined { .. })), "{kind}");
        }
    }

    #[test]
    fn names_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
        }
    }

    #[test]
    fn perfect_forecast_curve_is_zero() {
        let y = series(&(0..50).map(|i| (i as f64 * 0.3).sin() + 2.0).collect::<Vec<_>>());
        let c = error_curve(MetricKind::Smape, &y, &y, &MetricContext::default(), 1.0).unwrap();
        assert!(c.values.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn final_horizon_matches_evaluate() {
        let y: Vec<f64> = (0..80).map(|i| (i as f64 * 0.2).sin()).collect();
        let f: Vec<f64> = (0..80).map(|i| (i as f64 * 0.21).sin() + 0.1).collect();
        let (y, f) = (series(&y), series(&f));
        let ctx = MetricContext { sigma: Some(vec![0.7]) };
        for kind in MetricKind::ALL {
            let c = error_curve(kind, &y, &f, &ctx, 0.9).unwrap();
            let whole = evaluate(kind, &y, &f, &ctx).ok();
            match (c.last(), whole) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{kind}"),
                (a, b) => assert_eq!(a.is_some(), b.is_some(), "{kind}"),
            }
        }
    }

    #[test]
    fn anti_phase_switch_raises_cumulative_smape() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin() + 0.05).collect();
        let f: Vec<f64> = y.iter().enumerate().map(|(i, v)| if i < 100 { *v } else { -v }).collect();
        let c = error_curve(MetricKind::Smape, &series(&y), &series(&f), &MetricContext::default(), 1.0).unwrap();
        let v: Vec<f64> = c.values.iter().map(|v| v.unwrap()).collect();
        assert!(v[..100].iter().all(|x| *x == 0.0));
        assert!(v[100..].windows(2).all(|w| w[1] > w[0]));
    }

    fn ramp_curve(values: Vec<f64>, dt: f64, lambda: f64) -> ErrorCurve {
        ErrorCurve {
            metric: MetricKind::Smape,
            horizons: (1..=values.len()).map(|i| i as f64 * dt).collect(),
            values: values.into_iter().map(Some).collect(),
            lyapunov_scale: lambda,
            divergent_from: None,
        }
    }

    #[test]
    fn valid_prediction_time_cases() {
        let always = ramp_curve(vec![10.0; 500], 0.01, 1.0);
        assert!((valid_prediction_time(&always, 50.0).unwrap() - 5.0).abs() < 1e-12);
        // crosses 50 at lambda t = 1.5
        let crossing = ramp_curve((1..=500).map(|i| 50.0 * (i as f64 * 0.01) / 1.5).collect(), 0.01, 1.0);
        assert!((valid_prediction_time(&crossing, 50.0).unwrap() - 1.5).abs() <= 0.01 + 1e-12);
        let high = ramp_curve(vec![80.0; 10], 0.01, 1.0);
        assert_eq!(valid_prediction_time(&high, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn doubling_of_exponential_error() {
        let lambda = 0.9;
        let dt = 0.01;
        let n = 2000;
        let y = Trajectory::new(vec![0.0; n], 1, dt, "t").unwrap();
        let f: Vec<f64> = (1..=n).map(|i| 1e-3 * (lambda * i as f64 * dt).exp()).collect();
        let f = Trajectory::new(f, 1, dt, "t").unwrap();
        let reference = 0.1;
        let d = error_doubling_time(&y, &f, lambda, reference).unwrap();
        assert!(!d.never_doubled);
        let since_reference = d.value / lambda - reference;
        assert!((since_reference - 2f64.ln() / lambda).abs() <= dt + 1e-12, "{since_reference}");
    }

    #[test]
    fn doubling_sentinels() {
        let y = series(&[1.0; 100]);
        let constant = series(&[1.5; 100]);
        let d = error_doubling_time(&y, &constant, 1.0, 0.1).unwrap();
        // window of 100 points at spacing 0.1
        assert!(d.never_doubled && (d.value - 10.0).abs() < 1e-12);
        assert!(error_doubling_time(&y, &y, 1.0, 0.1).unwrap().never_doubled);
    }

    #[test]
    fn horizon_grid_is_increasing_and_complete() {
        let g = horizon_grid(5000, 100, 60);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 5000);
        assert_eq!(horizon_grid(50, 100, 10), (1..=50).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_rollouts_mark_divergence() {
        let y = series(&[1.0; 20]);
        let f = series(&[1.0; 12]);
        let c = error_curve(MetricKind::Mae, &y, &f, &MetricContext::default(), 1.0).unwrap();
        assert_eq!(c.divergent_from, Some(12));
        assert!(c.values[12..].iter().all(Option::is_none));
        let rows = curve_rows("s", "m", &c);
        assert!(rows[12].divergent_flag && !rows[11].divergent_flag);
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("system,model,metric,horizon,lyapunov_horizon,value,divergent_flag"));
    }

    fn finite_vec(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn smape_bounded_and_symmetric(y in finite_vec(2..40), f in finite_vec(2..40)) {
            let n = y.len().min(f.len());
            let v = eval(MetricKind::Smape, &y[..n], &f[..n]);
            prop_assert!((0.0..=200.0).contains(&v));
            prop_assert!((v - eval(MetricKind::Smape, &f[..n], &y[..n])).abs() < 1e-9);
        }

        #[test]
        fn smape_is_200_for_opposite_signs(y in proptest::collection::vec(0.1f64..10.0, 2..30), s in 0.1f64..5.0) {
            let f: Vec<f64> = y.iter().map(|v| -v * s).collect();
            prop_assert!((eval(MetricKind::Smape, &y, &f) - 200.0).abs() < 1e-9);
        }

        #[test]
        fn relative_errors_are_scale_invariant(
            y in proptest::collection::vec(0.5f64..10.0, 3..30),
            noise in proptest::collection::vec(-1.0f64..1.0, 30),
            c in 0.01f64..100.0,
        ) {
            let f: Vec<f64> = y.iter().zip(&noise).map(|(a, e)| a + e).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let fs: Vec<f64> = f.iter().map(|v| v * c).collect();
            for kind in [MetricKind::Mape, MetricKind::Wape, MetricKind::Mase] {
                let a = eval(kind, &y, &f);
                let b = eval(kind, &ys, &fs);
                prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn correlations_are_affine_invariant(
            y in finite_vec(5..40),
            f in finite_vec(40..41),
            a in 0.01f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let f = &f[..y.len()];
            let g: Vec<f64> = f.iter().map(|v| a * v + b).collect();
            for kind in [MetricKind::Pearson, MetricKind::Spearman] {
                let p = evaluate(kind, &series(&y), &series(f), &MetricContext::default());
                let q = evaluate(kind, &series(&y), &series(&g), &MetricContext::default());
                if let (Ok(p), Ok(q)) = (p, q) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn cumulative_totals_never_decrease(y in finite_vec(3..60), f in finite_vec(60..61)) {
            let f = &f[..y.len()];
            let c = error_curve(MetricKind::Mae, &series(&y), &series(f), &MetricContext::default(), 1.0).unwrap();
            let totals: Vec<f64> = c.values.iter().enumerate().map(|(i, v)| v.unwrap() * (i + 1) as f64).collect();
            prop_assert!(totals.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }

        #[test]
        fn mse_and_rmse_rank_candidates_identically(
            y in finite_vec(5..20),
            fs in proptest::collection::vec(finite_vec(20..21), 3..6),
        ) {
            let n = y.len();
            let ctx = MetricContext { sigma: Some(vec![3.0]) };
            let mse: Vec<f64> = fs.iter().map(|f| evaluate(MetricKind::Mse, &series(&y), &series(&f[..n]), &ctx).unwrap()).collect();
            let nrmse: Vec<f64> = fs.iter().map(|f| evaluate(MetricKind::Nrmse, &series(&y), &series(&f[..n]), &ctx).unwrap()).collect();
            for i in 0..mse.len() {
                for j in 0..mse.len() {
                    if mse[i] < mse[j] {
                        prop_assert!(nrmse[i] <= nrmse[j]);
                    }
                }
            }
        }
    }
}
