use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::stats::std_dev;

/// Embedding dimension per channel.
pub const EMBEDDING: usize = 2;
/// Tolerance as a fraction of the total standard deviation.
pub const TOLERANCE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleEntropy {
    /// Mean over scales; infinite when any scale had no matches.
    pub value: f64,
    pub per_scale: Vec<f64>,
    pub infinite: bool,
}

/// Non-overlapping window means of every channel.
pub fn coarse_grain(values: &[f64], dim: usize, scale: usize) -> Vec<f64> {
    let n = values.len() / dim / scale;
    let mut out = vec![0.0; n * dim];
    for w in 0..n {
        for s in 0..scale {
            let row = &values[(w * scale + s) * dim..(w * scale + s + 1) * dim];
            for c in 0..dim {
                out[w * dim + c] += row[c];
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= scale as f64);
    out
}

fn count_matches(vectors: &[Vec<f64>], r: f64) -> (u64, u64) {
    let n = vectors.len();
    let matches = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &vectors[i];
            vectors[i + 1..]
                .iter()
                .filter(|b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= r))
                .count() as u64
        })
        .sum();
    (matches, (n as u64) * (n as u64 - 1) / 2)
}

/// Multivariate sample entropy with `EMBEDDING` lags per channel and unit delay.
/// Channels are standardized, so the tolerance is `TOLERANCE` times the total
/// standard deviation. Returns infinity when no template pair matches.
pub fn multivariate_sample_entropy(values: &[f64], dim: usize, r: f64) -> f64 {
    let m = EMBEDDING;
    let n = values.len() / dim;
    if n <= m + 1 {
        return f64::INFINITY;
    }
    let count = n - m;
    let template = |i: usize, extend: Option<usize>| -> Vec<f64> {
        let mut v = Vec::with_capacity(m * dim + 1);
        for c in 0..dim {
            let len = if extend == Some(c) { m + 1 } else { m };
            for l in 0..len {
                v.push(values[(i + l) * dim + c]);
            }
        }
        v
    };
    let base: Vec<Vec<f64>> = (0..count).map(|i| template(i, None)).collect();
    let extended: Vec<Vec<f64>> = (0..dim)
        .flat_map(|c| (0..count).map(move |i| (i, c)))
        .map(|(i, c)| template(i, Some(c)))
        .collect();
    let (b_hits, b_pairs) = count_matches(&base, r);
    let (a_hits, a_pairs) = count_matches(&extended, r);
    if b_hits == 0 || a_hits == 0 {
        return f64::INFINITY;
    }
    let b = b_hits as f64 / b_pairs as f64;
    let a = a_hits as f64 / a_pairs as f64;
    -(a / b).ln()
}

/// Mean multivariate sample entropy over coarse-graining scales `1..=max_scale`.
pub fn multiscale_entropy(traj: &Trajectory, max_scale: usize) -> Result<MultiscaleEntropy> {
    if traj.len() < 1000 {
        return Err(Error::InvalidArgument(format!(
            "multiscale entropy needs at least 1000 points, got {}",
            traj.len()
        )));
    }
    if max_scale == 0 {
        return Err(Error::InvalidArgument("max_scale must be >= 1".into()));
    }
    let dim = traj.dim();
    let mut standardized = traj.values().to_vec();
    for c in 0..dim {
        let col = traj.column(c);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = std_dev(&col);
        for row in standardized.chunks_exact_mut(dim) {
            row[c] -= mean;
            if sd > 0.0 {
                row[c] /= sd;
            }
        }
    }
    let total_sd = std_dev(&standardized);
    if total_sd == 0.0 {
        return Ok(MultiscaleEntropy {
            value: 0.0,
            per_scale: vec![0.0; max_scale],
            infinite: false,
        });
    }
    let r = TOLERANCE * total_sd;
    let per_scale: Vec<f64> = (1..=max_scale)
        .map(|s| multivariate_sample_entropy(&coarse_grain(&standardized, dim, s), dim, r))
        .collect();
    let infinite = per_scale.iter().any(|v| v.is_infinite());
    Ok(MultiscaleEntropy {
        value: per_scale.iter().sum::<f64>() / max_scale as f64,
        per_scale,
        infinite,
    })
}
