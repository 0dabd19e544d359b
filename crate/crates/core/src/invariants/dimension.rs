use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::stats::{linear_fit, quantile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Pairs closer than this many samples in time are excluded.
    pub theiler: usize,
    pub n_radii: usize,
    /// Scaling region as quantiles of the pair-distance distribution.
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    /// Radii whose correlation sum counts fewer pairs are unusable.
    pub min_pairs: u64,
    /// Longer inputs are thinned by an integer stride.
    pub max_points: usize,
    pub distance_samples: usize,
    pub seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            theiler: 100,
            n_radii: 20,
            lower_quantile: 0.001,
            upper_quantile: 0.05,
            min_pairs: 100,
            max_points: 10_000,
            distance_samples: 200_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDimension {
    pub dimension: f64,
    pub radii: Vec<f64>,
    /// Correlation sum `C(r)` at each radius.
    pub correlation_sum: Vec<f64>,
    /// Local slopes between successive radii vary by more than 20%.
    pub irregular_scaling: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Grassberger-Procaccia correlation dimension: the least-squares slope of
/// `ln C(r)` against `ln r` over log-spaced radii in the scaling region.
pub fn correlation_dimension(traj: &Trajectory, config: &CorrelationConfig) -> Result<CorrelationDimension> {
    if traj.len() < 2000 {
        return Err(Error::InvalidArgument(format!(
            "correlation dimension needs at least 2000 points, got {}",
            traj.len()
        )));
    }
    if !(0.0 < config.lower_quantile && config.lower_quantile < config.upper_quantile && config.upper_quantile < 1.0)
        || config.n_radii < 2
    {
        return Err(Error::InvalidArgument("bad scaling-region configuration".into()));
    }
    let stride = traj.len().div_ceil(config.max_points.max(2));
    let points: Vec<&[f64]> = traj.rows().step_by(stride).collect();
    let n = points.len();
    let theiler = config.theiler.div_ceil(stride);
    if theiler + 1 >= n {
        return Err(Error::InvalidArgument("Theiler window exceeds series length".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampled = Vec::with_capacity(config.distance_samples);
    while sampled.len() < config.distance_samples {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i.abs_diff(j) > theiler {
            sampled.push(sq_dist(points[i], points[j]).sqrt());
        }
    }
    let r_lo = quantile(&sampled, config.lower_quantile);
    let r_hi = quantile(&sampled, config.upper_quantile);
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(Error::DimensionUndefined { usable: 0 });
    }
    let k = config.n_radii;
    let radii: Vec<f64> = (0..k)
        .map(|i| (r_lo.ln() + (r_hi.ln() - r_lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect();
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();

    // hist[b] counts pairs whose squared distance falls below r2[b] but not r2[b-1]
    let hist = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; k + 1],
            |mut h, i| {
                for j in (i + theiler + 1)..n {
                    let d = sq_dist(points[i], points[j]);
                    h[r2.partition_point(|&r| r <= d)] += 1;
                }
                h
            },
        )
        .reduce(
            || vec![0u64; k + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total_pairs: u64 = hist.iter().sum();
    let mut cumulative = 0u64;
    let counts: Vec<u64> = hist[..k]
        .iter()
        .map(|c| {
            cumulative += c;
            cumulative
        })
        .collect();

    let usable: Vec<usize> = (0..k).filter(|&i| counts[i] >= config.min_pairs).collect();
    if usable.len() < 5 {
        return Err(Error::DimensionUndefined { usable: usable.len() });
    }
    let xs: Vec<f64> = usable.iter().map(|&i| radii[i].ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|&i| (counts[i] as f64 / total_pairs as f64).ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    let irregular = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .any(|local| (local - slope).abs() > 0.2 * slope.abs());
    Ok(CorrelationDimension {
        dimension: slope.max(0.0),
        radii,
        correlation_sum: counts.iter().map(|&c| c as f64 / total_pairs as f64).collect(),
        irregular_scaling: irregular,
    })
}

/// Kaplan-Yorke dimension of a descending Lyapunov spectrum.
pub fn kaplan_yorke(spectrum: &[f64]) -> Result<f64> {
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::UnsortedSpectrum);
    }
    if spectrum.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    let mut partial = 0.0;
    for (j, &l) in spectrum.iter().enumerate() {
        if partial + l < 0.0 {
            return Ok(if j == 0 { 0.0 } else { j as f64 + partial / l.abs() });
        }
        partial += l;
    }
    Ok(spectrum.len() as f64)
}
