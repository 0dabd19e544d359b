//! Naive baselines, exponential smoothing, the Theta family, Fourier
//! extrapolation and an unforced linear Kalman propagator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ForecastModel, ModelKind, Rollout, Scaler};
use crate::alignment::power_spectrum;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{ridge, ridge_with_intercept};

#[derive(Clone, Debug)]
pub(crate) enum Fitted {
    Mean(Vec<f64>),
    Drift(Vec<f64>),
    Seasonal {
        /// `period x dim`, the last history point sits at phase `period - 1`.
        motif: Vec<f64>,
        period: usize,
    },
    Kalman {
        /// Row-vector transition: `z' = z W + b`.
        w: DMatrix<f64>,
        b: DVector<f64>,
        q: DMatrix<f64>,
        scaler: Scaler,
    },
    /// Frequencies in cycles per sample, per dimension.
    Fourier(Vec<Vec<f64>>),
    /// Smoothing constant per dimension.
    Smoothing(Vec<f64>),
}

impl Fitted {
    pub(crate) fn parameter_count(&self) -> usize {
        match self {
            Fitted::Mean(v) | Fitted::Drift(v) | Fitted::Smoothing(v) => v.len(),
            Fitted::Seasonal { motif, .. } => motif.len(),
            Fitted::Kalman { w, b, q, .. } => w.len() + b.len() + q.len(),
            Fitted::Fourier(f) => f.iter().map(|v| 2 * v.len() + 1).sum(),
        }
    }

    pub(crate) fn mean(&self) -> Option<&[f64]> {
        match self {
            Fitted::Mean(v) => Some(v),
            _ => None,
        }
    }

    pub(crate) fn motif(&self) -> Option<(&[f64], usize)> {
        match self {
            Fitted::Seasonal { motif, period } => Some((motif, *period)),
            _ => None,
        }
    }
}

const ALPHAS: [f64; 20] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0,
];

pub(super) fn fit(model: &ForecastModel, history: &Trajectory) -> Result<Fitted> {
    let dim = history.dim();
    let n = history.len();
    let lookback = model.hyper.lookback();
    Ok(match model.kind {
        ModelKind::NaiveMean => Fitted::Mean((0..dim).map(|c| history.column(c).iter().sum::<f64>() / n as f64).collect()),
        ModelKind::NaiveDrift => Fitted::Drift(
            history
                .row(n - 1)
                .iter()
                .zip(history.row(0))
                .map(|(last, first)| (last - first) / (n - 1) as f64)
                .collect(),
        ),
        ModelKind::NaiveSeasonal => {
            let period = dominant_period(history)?.min(n);
            let windows = n / period;
            let mut motif = vec![0.0; period * dim];
            for k in 0..windows {
                let start = n - (k + 1) * period;
                for j in 0..period {
                    for c in 0..dim {
                        motif[j * dim + c] += history.row(start + j)[c] / windows as f64;
                    }
                }
            }
            Fitted::Seasonal { motif, period }
        }
        ModelKind::KalmanUnforced => {
            let scaler = Scaler::fit(history);
            let z = scaler.forward(history.values());
            let x = DMatrix::from_row_slice(n - 1, dim, &z[..(n - 1) * dim]);
            let y = DMatrix::from_row_slice(n - 1, dim, &z[dim..]);
            let (w, b) = ridge_with_intercept(&x, &y, model.config.linear_ridge)?;
            let mut resid = &y - &x * &w;
            for mut row in resid.row_iter_mut() {
                row -= b.transpose();
            }
            let q = resid.tr_mul(&resid) / (n - 1) as f64;
            Fitted::Kalman { w, b, q, scaler }
        }
        ModelKind::FourierRegression => {
            Fitted::Fourier((0..dim).map(|c| peak_frequencies(&history.column(c), lookback)).collect())
        }
        ModelKind::ExpSmoothing | ModelKind::Theta | ModelKind::FourTheta => Fitted::Smoothing(
            (0..dim)
                .map(|c| select_alpha(model.kind, model.config.theta, &history.column(c), lookback))
                .collect(),
        ),
        _ => unreachable!("not a classical model"),
    })
}

pub(super) fn predict(model: &ForecastModel, fitted: &Fitted, warmup: &Trajectory, sink: &mut Rollout) -> Result<()> {
    let dim = warmup.dim();
    let m = warmup.len();
    let horizon = sink.horizon();
    let last = warmup.row(m - 1).to_vec();
    let mut row = vec![0.0; dim];
    match fitted {
        Fitted::Mean(mean) => {
            for _ in 0..horizon {
                if !sink.push(mean) {
                    break;
                }
            }
        }
        Fitted::Drift(slope) => {
            for h in 1..=horizon {
                row.iter_mut()
                    .zip(&last)
                    .zip(slope)
                    .for_each(|((r, l), s)| *r = l + s * h as f64);
                if !sink.push(&row) {
                    break;
                }
            }
        }
        Fitted::Seasonal { motif, period } => {
            let p = *period;
            let phase = align_phase(motif, p, warmup);
            for h in 1..=horizon {
                let j = (phase + h) % p;
                if !sink.push(&motif[j * dim..(j + 1) * dim]) {
                    break;
                }
            }
        }
        Fitted::Kalman { w, b, q, scaler } => {
            let lookback = model.hyper.lookback().min(m);
            let z = scaler.forward(&warmup.values()[(m - lookback) * dim..]);
            let mut x = DVector::from_column_slice(&z[..dim]);
            let a = w.transpose();
            // observation noise taken equal to the process noise
            let r = q.clone();
            let mut p = r.clone();
            let eye = DMatrix::<f64>::identity(dim, dim);
            for t in 1..lookback {
                x = &a * &x + b;
                p = &a * &p * a.transpose() + q;
                let s = &p + &r;
                let k = match s.clone().try_inverse() {
                    Some(inv) => &p * inv,
                    None => return Err(Error::Singular),
                };
                let obs = DVector::from_column_slice(&z[t * dim..(t + 1) * dim]);
                x += &k * (obs - &x);
                p = (&eye - &k) * &p;
            }
            for _ in 0..horizon {
                x = &a * &x + b;
                row.copy_from_slice(x.as_slice());
                scaler.inverse(&mut row);
                if !sink.push(&row) {
                    break;
                }
            }
        }
        Fitted::Fourier(freqs) => {
            let mut columns = Vec::with_capacity(dim);
            for (c, f) in freqs.iter().enumerate() {
                columns.push(fourier_extrapolate(&warmup.column(c), f, horizon)?);
            }
            for h in 0..horizon {
                row.iter_mut().zip(&columns).for_each(|(r, col)| *r = col[h]);
                if !sink.push(&row) {
                    break;
                }
            }
        }
        Fitted::Smoothing(alphas) => {
            let lookback = model.hyper.lookback().min(m);
            let columns: Vec<Vec<f64>> = (0..dim)
                .map(|c| {
                    let col = warmup.column(c);
                    window_forecast(model.kind, model.config.theta, &col[m - lookback..], alphas[c], horizon)
                })
                .collect();
            for h in 0..horizon {
                row.iter_mut().zip(&columns).for_each(|(r, col)| *r = col[h]);
                if !sink.push(&row) {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Dominant period in samples: the granularity tag when present, otherwise
/// the periodogram peak of the first coordinate.
fn dominant_period(history: &Trajectory) -> Result<usize> {
    if let Some(g) = history.granularity {
        return Ok((g.round() as usize).max(1));
    }
    let spectrum = power_spectrum(&history.column(0), 1.0)?;
    let (f, _) = spectrum
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::EmptySpectrum)?;
    Ok(((1.0 / f).round() as usize).max(1))
}

/// Motif phase of the last warmup point, by least squares over one period.
fn align_phase(motif: &[f64], period: usize, warmup: &Trajectory) -> usize {
    let dim = warmup.dim();
    let m = warmup.len();
    let span = period.min(m);
    let mut best = (f64::INFINITY, period - 1);
    for s in 0..period {
        let mut err = 0.0;
        for j in 0..span {
            let phase = (s + period * span - j) % period;
            let w = warmup.row(m - 1 - j);
            for c in 0..dim {
                let d = w[c] - motif[phase * dim + c];
                err += d * d;
            }
        }
        // prefer the phase continuing the fit history on ties
        let rank = if s == period - 1 { err } else { err * (1.0 + 1e-12) };
        if rank < best.0 {
            best = (rank, s);
        }
    }
    best.1
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Windowed DTFT power at `f` cycles per sample.
fn dtft_power(x: &[f64], window: &[f64], f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (t, (v, w)) in x.iter().zip(window).enumerate() {
        let ph = 2.0 * PI * f * t as f64;
        re += v * w * ph.cos();
        im -= v * w * ph.sin();
    }
    re * re + im * im
}

/// The `k` strongest periodogram peaks, each refined off the bin grid by
/// golden-section search on the windowed DTFT.
fn peak_frequencies(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let window = hann(n);
    let mut buf: Vec<Complex<f64>> = centered
        .iter()
        .zip(&window)
        .map(|(v, w)| Complex::new(v * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    let mut peaks: Vec<usize> = (1..power.len().saturating_sub(1))
        .filter(|&i| power[i] > power[i - 1] && power[i] >= power[i + 1] && power[i] > 0.0)
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    peaks.truncate(k);
    let bin = 1.0 / n as f64;
    peaks
        .into_iter()
        .map(|i| {
            let (mut lo, mut hi) = ((i as f64 - 1.0) * bin, (i as f64 + 1.0) * bin);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut a = hi - g * (hi - lo);
            let mut b = lo + g * (hi - lo);
            let (mut fa, mut fb) = (dtft_power(&centered, &window, a), dtft_power(&centered, &window, b));
            for _ in 0..40 {
                if fa > fb {
                    hi = b;
                    b = a;
                    fb = fa;
                    a = hi - g * (hi - lo);
                    fa = dtft_power(&centered, &window, a);
                } else {
                    lo = a;
                    a = b;
                    fa = fb;
                    b = lo + g * (hi - lo);
                    fb = dtft_power(&centered, &window, b);
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Least-squares amplitudes and phases on the warmup, continued past its end.
fn fourier_extrapolate(x: &[f64], freqs: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let m = x.len();
    let p = 1 + 2 * freqs.len();
    let basis = |t: f64, out: &mut [f64]| {
        out[0] = 1.0;
        for (j, f) in freqs.iter().enumerate() {
            let ph = 2.0 * PI * f * t;
            out[1 + 2 * j] = ph.cos();
            out[2 + 2 * j] = ph.sin();
        }
    };
    let mut design = DMatrix::zeros(m, p);
    let mut row = vec![0.0; p];
    for t in 0..m {
        basis(t as f64, &mut row);
        for j in 0..p {
            design[(t, j)] = row[j];
        }
    }
    let y = DMatrix::from_column_slice(m, 1, x);
    let coef = ridge(&design, &y, 1e-8)?;
    Ok((0..horizon)
        .map(|h| {
            basis((m + h) as f64, &mut row);
            row.iter().zip(coef.iter()).map(|(a, b)| a * b).sum()
        })
        .collect())
}

fn ses_level(y: &[f64], alpha: f64) -> f64 {
    y[1..].iter().fold(y[0], |level, v| alpha * v + (1.0 - alpha) * level)
}

/// Univariate forecast from a trailing window.
fn window_forecast(kind: ModelKind, theta: f64, y: &[f64], alpha: f64, horizon: usize) -> Vec<f64> {
    if kind == ModelKind::ExpSmoothing {
        return vec![ses_level(y, alpha); horizon];
    }
    let l = y.len();
    let (a, b) = if l < 2 {
        (y[0], 0.0)
    } else {
        let t: Vec<f64> = (0..l).map(|i| i as f64).collect();
        let (slope, icept) = crate::stats::linear_fit(&t, y);
        (icept, slope)
    };
    let trend = |t: f64| a + b * t;
    let line = |th: f64| -> Vec<f64> { y.iter().enumerate().map(|(i, v)| th * v + (1.0 - th) * trend(i as f64)).collect() };
    match kind {
        ModelKind::Theta => {
            let level = ses_level(&line(theta), alpha);
            (1..=horizon)
                .map(|h| level / theta + (1.0 - 1.0 / theta) * trend((l - 1 + h) as f64))
                .collect()
        }
        _ => {
            // the theta = 0 line is the trend itself
            let levels: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|th| ses_level(&line(*th), alpha)).collect();
            (1..=horizon)
                .map(|h| {
                    let t = (l - 1 + h) as f64;
                    let lines: f64 = [1.0, 2.0, 3.0]
                        .iter()
                        .zip(&levels)
                        .map(|(th, lv)| lv / th + (1.0 - 1.0 / th) * trend(t))
                        .sum();
                    (trend(t) + lines) / 4.0
                })
                .collect()
        }
    }
}

/// Smoothing constant minimizing one-step errors over the last fifth of the
/// training series, each forecast made from the preceding `lookback` points.
fn select_alpha(kind: ModelKind, theta: f64, y: &[f64], lookback: usize) -> f64 {
    let n = y.len();
    let tail = (n / 5).max(10).min(n - lookback);
    let origins = n - tail..n;
    let mut best = (f64::INFINITY, ALPHAS[0]);
    for &alpha in &ALPHAS {
        let err: f64 = origins
            .clone()
            .map(|t| {
                let f = window_forecast(kind, theta, &y[t - lookback..t], alpha, 1)[0];
                (f - y[t]) * (f - y[t])
            })
            .sum();
        if err < best.0 {
            best = (err, alpha);
        }
    }
    best.1
}
