//! Surrogate-based timescale alignment.
//!
//! Each system's dominant period `t_peak` is taken from the strongest
//! periodogram bin that beats a phase-randomized surrogate ensemble; benchmark
//! trajectories are then delivered at a fixed number of points per `t_peak`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{attractor_trajectory, burn_in_step, SystemSpec, Trajectory};
use crate::error::{Error, Result};

/// Delivered points per dominant period.
pub const GRANULARITY: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub n_surrogates: usize,
    pub quantile: f64,
    /// State coordinate whose spectrum is tested; `None` tests every
    /// coordinate on variance-normalized power.
    pub coordinate: Option<usize>,
    /// Pilot length in resampled points.
    pub pilot_points: usize,
    /// Integration steps per delivered sample.
    pub oversample: usize,
    pub transient_periods: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            n_surrogates: 100,
            quantile: 0.95,
            coordinate: None,
            pilot_points: 1 << 13,
            oversample: 2,
            transient_periods: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub system: String,
    pub param_hash: String,
    /// Dominant significant period, natural time units.
    pub t_peak: f64,
    /// Longest significant period.
    pub t_max: f64,
    /// Raw integration step.
    pub dt_integration: f64,
    /// Integration steps per delivered sample.
    pub resample_factor: usize,
    pub granularity: f64,
    /// `(frequency, power)` of every significant bin.
    pub significant_frequencies: Vec<(f64, f64)>,
    pub seed: u64,
}

impl AlignmentResult {
    /// Spacing of delivered samples.
    pub fn sample_dt(&self) -> f64 {
        self.t_peak / self.granularity
    }

    /// Integrates `n_points` aligned samples on the attractor.
    pub fn trajectory(&self, spec: &SystemSpec, seed: u64, n_points: usize) -> Result<Trajectory> {
        let raw_points = (n_points - 1) * self.resample_factor + 1;
        let raw = attractor_trajectory(spec, seed, 20.0, self.dt_integration, raw_points)?;
        let mut out = resample(&raw, self)?;
        if out.len() > n_points {
            out = out.slice(0, n_points);
        }
        Ok(out.with_seed(seed))
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn is_constant(series: &[f64]) -> bool {
    let first = series[0];
    series.iter().all(|v| (v - first).abs() <= 1e-12 * first.abs().max(1.0))
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 16 {
        return Err(Error::InvalidArgument(format!(
            "spectrum needs at least 16 samples, got {}",
            series.len()
        )));
    }
    if is_constant(series) {
        return Err(Error::EmptySpectrum);
    }
    Ok(())
}

fn windowed_power(series: &[f64], window: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .zip(window)
        .map(|(x, w)| Complex::new((x - mean) * w, 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let norm: f64 = window.iter().map(|w| w * w).sum();
    (1..=n / 2).map(|k| buf[k].norm_sqr() / norm).collect()
}

fn frequencies(n: usize, dt: f64) -> Vec<f64> {
    (1..=n / 2).map(|k| k as f64 / (n as f64 * dt)).collect()
}

/// One-sided periodogram of the mean-removed, Hann-windowed series.
/// Frequencies are in cycles per time unit; the zero bin is omitted.
pub fn power_spectrum(series: &[f64], dt: f64) -> Result<Vec<(f64, f64)>> {
    check_series(series)?;
    let mut planner = FftPlanner::new();
    let power = windowed_power(series, &hann(series.len()), &mut planner);
    Ok(frequencies(series.len(), dt).into_iter().zip(power).collect())
}

/// Phase-randomized surrogate: Fourier amplitudes of the series are kept,
/// phases are drawn i.i.d. uniform, and the inverse transform is real.
pub fn phase_surrogate<R: Rng>(series: &[f64], rng: &mut R) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    phase_surrogate_with(series, rng, &mut planner)
}

fn phase_surrogate_with<R: Rng>(series: &[f64], rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = series.len();
    let mut spec: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    for k in 1..n.div_ceil(2) {
        let phase = rng.random::<f64>() * 2.0 * PI;
        let z = Complex::from_polar(spec[k].norm(), phase);
        spec[k] = z;
        spec[n - k] = z.conj();
    }
    if n % 2 == 0 {
        // the Nyquist bin must stay real; keep its magnitude, randomize sign
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        spec[n / 2] = Complex::new(sign * spec[n / 2].norm(), 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|z| z.re / n as f64).collect()
}

/// Surrogate whose Fourier amplitudes are those of the series permuted across
/// frequencies, with i.i.d. uniform phases. It keeps the mean, variance and
/// amplitude distribution; a phase surrogate alone keeps every stationary
/// tone intact and so cannot serve as a null for frequency significance.
fn shuffled_surrogate<R: Rng>(series: &[f64], rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = series.len();
    let mut spec: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let half = n.div_ceil(2);
    let mut amps: Vec<f64> = (1..half).map(|k| spec[k].norm()).collect();
    amps.shuffle(rng);
    for (k, a) in (1..half).zip(amps) {
        let z = Complex::from_polar(a, rng.random::<f64>() * 2.0 * PI);
        spec[k] = z;
        spec[n - k] = z.conj();
    }
    if n % 2 == 0 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        spec[n / 2] = Complex::new(sign * spec[n / 2].norm(), 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|z| z.re / n as f64).collect()
}

/// Bins whose windowed power exceeds the per-bin `quantile` of an ensemble of
/// frequency-shuffled phase surrogates. Returns `(frequency, power)` pairs in increasing frequency.
pub fn surrogate_significant_frequencies(
    series: &[f64],
    dt: f64,
    n_surrogates: usize,
    quantile: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_surrogates < 20 {
        return Err(Error::InvalidArgument("need at least 20 surrogates".into()));
    }
    if !(quantile > 0.5 && quantile < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {quantile} outside (0.5, 1)")));
    }
    check_series(series)?;
    let n = series.len();
    let window = hann(n);
    let mut planner = FftPlanner::new();
    let power = windowed_power(series, &window, &mut planner);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surrogate_power = vec![Vec::with_capacity(n_surrogates); power.len()];
    for _ in 0..n_surrogates {
        let s = shuffled_surrogate(series, &mut rng, &mut planner);
        for (bin, p) in windowed_power(&s, &window, &mut planner).into_iter().enumerate() {
            surrogate_power[bin].push(p);
        }
    }
    let freqs = frequencies(n, dt);
    Ok(surrogate_power
        .iter()
        .enumerate()
        .filter_map(|(bin, surr)| {
            let threshold = crate::stats::quantile(surr, quantile);
            (power[bin] > threshold).then_some((freqs[bin], power[bin]))
        })
        .collect())
}

/// Dominant and longest significant periods of a series.
pub fn significant_periods(
    series: &[f64],
    dt: f64,
    config: &AlignmentConfig,
    seed: u64,
) -> Result<Option<(f64, f64, Vec<(f64, f64)>)>> {
    let sig = surrogate_significant_frequencies(series, dt, config.n_surrogates, config.quantile, seed)?;
    if sig.is_empty() {
        return Ok(None);
    }
    let peak = sig.iter().copied().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let lowest = sig[0].0;
    Ok(Some((1.0 / peak.0, 1.0 / lowest, sig)))
}

/// Pilot integration, surrogate significance test, and timestep selection.
pub fn align_system(spec: &SystemSpec, seed: u64, config: &AlignmentConfig) -> Result<AlignmentResult> {
    if let Some(c) = config.coordinate.filter(|&c| c >= spec.dim) {
        return Err(Error::InvalidArgument(format!("coordinate {c} out of range for {}", spec.name)));
    }
    let dt = burn_in_step(spec);
    let stride = 2;
    let raw = attractor_trajectory(
        spec,
        seed,
        config.transient_periods,
        dt,
        (config.pilot_points - 1) * stride + 1,
    )?;
    let coords: Vec<usize> = match config.coordinate {
        Some(c) => vec![c],
        None => (0..spec.dim).collect(),
    };
    let sample_spacing = dt * stride as f64;
    let n_bins = config.pilot_points / 2;
    let half_width = (n_bins / 200).max(2);
    let mut significant: Vec<(f64, f64)> = Vec::new();
    let mut flagged = vec![false; n_bins];
    let mut score = vec![0.0; n_bins];
    let mut raw_score = vec![0.0; n_bins];
    for (i, &c) in coords.iter().enumerate() {
        let series: Vec<f64> = raw.rows().step_by(stride).map(|r| r[c]).collect();
        let var = crate::stats::variance(&series);
        let sig = match significant_periods(&series, sample_spacing, config, seed.wrapping_add(i as u64)) {
            Ok(Some((_, _, sig))) => sig,
            Ok(None) | Err(Error::EmptySpectrum) => continue,
            Err(e) => return Err(e),
        };
        let spectrum = power_spectrum(&series, sample_spacing)?;
        let weighted: Vec<f64> = spectrum.iter().map(|(f, p)| f * p / var).collect();
        raw_score.iter_mut().zip(&weighted).for_each(|(r, w)| *r += w);
        for (k, s) in score.iter_mut().enumerate() {
            let lo = k.saturating_sub(half_width);
            let hi = (k + half_width + 1).min(n_bins);
            *s += weighted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        }
        for (f, p) in sig {
            let bin = (f * config.pilot_points as f64 * sample_spacing).round() as usize - 1;
            flagged[bin] = true;
            let p = p / var;
            match significant.iter_mut().find(|(g, _)| (g - f).abs() <= 1e-9 * f) {
                Some(slot) => slot.1 = slot.1.max(p),
                None => significant.push((f, p)),
            }
        }
    }
    if significant.is_empty() {
        return Err(Error::AlignmentFailure {
            system: spec.name.clone(),
        });
    }
    significant.sort_by(|a, b| a.0.total_cmp(&b.0));
    // dominant bin by locally averaged power per log-frequency, summed over
    // coordinates, so slow drifts and single-bin fluctuations do not win
    let peak_bin = (0..n_bins)
        .filter(|&k| flagged[k])
        .max_by(|&a, &b| score[a].total_cmp(&score[b]))
        .expect("flagged bin exists");
    let peak_bin = (peak_bin.saturating_sub(half_width)..(peak_bin + half_width + 1).min(n_bins))
        .filter(|&k| flagged[k])
        .max_by(|&a, &b| raw_score[a].total_cmp(&raw_score[b]))
        .unwrap_or(peak_bin);
    let t_peak = config.pilot_points as f64 * sample_spacing / (peak_bin + 1) as f64;
    let t_max = 1.0 / significant[0].0;
    let sample_dt = t_peak / GRANULARITY;
    let mut resample_factor = config.oversample.max(1);
    // keep the raw step below t_max / 10 as well
    while sample_dt / resample_factor as f64 > t_max / 10.0 {
        resample_factor += 1;
    }
    if let Some(tau) = spec.delay() {
        while sample_dt / resample_factor as f64 > tau {
            resample_factor += 1;
        }
    }
    Ok(AlignmentResult {
        system: spec.name.clone(),
        param_hash: spec.param_hash(),
        t_peak,
        t_max,
        dt_integration: sample_dt / resample_factor as f64,
        resample_factor,
        granularity: GRANULARITY,
        significant_frequencies: significant,
        seed,
    })
}

/// Linear-interpolation resampling to `granularity` points per `t_peak`.
pub fn resample(traj: &Trajectory, alignment: &AlignmentResult) -> Result<Trajectory> {
    let target = alignment.sample_dt();
    if target < traj.dt * (1.0 - 1e-9) {
        return Err(Error::UpsamplingRefused {
            source_spacing: traj.dt,
            target,
        });
    }
    let dim = traj.dim();
    let span = (traj.len() - 1) as f64 * traj.dt;
    let n_out = (span / target * (1.0 + 1e-12)).floor() as usize + 1;
    let mut values = Vec::with_capacity(n_out * dim);
    for j in 0..n_out {
        let pos = j as f64 * target / traj.dt;
        let mut lo = pos.floor() as usize;
        let mut w = pos - lo as f64;
        if (pos - pos.round()).abs() < 1e-9 {
            lo = pos.round() as usize;
            w = 0.0;
        }
        if lo >= traj.len() - 1 {
            lo = traj.len() - 1;
            w = 0.0;
        }
        let a = traj.row(lo);
        if w == 0.0 {
            values.extend_from_slice(a);
        } else {
            let b = traj.row(lo + 1);
            values.extend(a.iter().zip(b).map(|(x, y)| x + w * (y - x)));
        }
    }
    let mut out = Trajectory::new(values, dim, target, traj.system_name.clone())?;
    out.t0 = traj.t0;
    out.seed = traj.seed;
    Ok(out.with_granularity(alignment.granularity))
}
