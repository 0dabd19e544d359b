//! Ridge-regressed linear autoregressions: a multivariate lookback window
//! (LinearRidge) and the channel-independent DLinear and NLinear heads.

use nalgebra::{DMatrix, DVector};

use super::{ForecastModel, ModelKind, Rollout, Scaler};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::linalg::ridge_with_intercept;

#[derive(Clone, Debug)]
pub(crate) struct Fitted {
    /// `features x outputs`
    w: DMatrix<f64>,
    b: DVector<f64>,
    scaler: Scaler,
}

impl Fitted {
    pub(crate) fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Weights mapping raw (unscaled) stacked lags to the next raw state.
    /// Only meaningful for LinearRidge.
    pub(crate) fn raw_weights(&self, dim: usize) -> DMatrix<f64> {
        let mut w = self.w.clone();
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                w[(i, j)] *= self.scaler.scale[j % dim] / self.scaler.scale[i % dim];
            }
        }
        w
    }
}

/// Moving average with edge replication, the DLinear trend extractor.
fn moving_average(x: &[f64], kernel: usize) -> Vec<f64> {
    let half = kernel.saturating_sub(1) / 2;
    let n = x.len() as isize;
    (0..x.len())
        .map(|i| {
            let i = i as isize;
            let s: f64 = (i - half as isize..=i + (kernel - 1 - half) as isize)
                .map(|j| x[j.clamp(0, n - 1) as usize])
                .sum();
            s / kernel as f64
        })
        .collect()
}

/// Feature vector of one channel window for the channel-independent heads.
fn channel_features(kind: ModelKind, window: &[f64], kernel: usize, out: &mut Vec<f64>) {
    out.clear();
    match kind {
        ModelKind::DLinear => {
            let trend = moving_average(window, kernel);
            out.extend_from_slice(&trend);
            out.extend(window.iter().zip(&trend).map(|(v, t)| v - t));
        }
        _ => {
            let last = window[window.len() - 1];
            out.extend(window.iter().map(|v| v - last));
        }
    }
}

pub(super) fn fit(model: &ForecastModel, history: &Trajectory) -> Result<Fitted> {
    let dim = history.dim();
    let n = history.len();
    let l = model.hyper.lookback();
    let scaler = Scaler::fit(history);
    let z = scaler.forward(history.values());
    let samples = n - l;
    let (w, b) = match model.kind {
        ModelKind::LinearRidge => {
            let x = DMatrix::from_fn(samples, l * dim, |r, c| z[r * dim + c]);
            let y = DMatrix::from_fn(samples, dim, |r, c| z[(r + l) * dim + c]);
            ridge_with_intercept(&x, &y, model.config.linear_ridge)?
        }
        _ => {
            let p = if model.kind == ModelKind::DLinear { 2 * l } else { l };
            let mut x = DMatrix::zeros(samples * dim, p);
            let mut y = DMatrix::zeros(samples * dim, 1);
            let mut feats = Vec::with_capacity(p);
            let mut window = vec![0.0; l];
            for c in 0..dim {
                for r in 0..samples {
                    for (k, v) in window.iter_mut().enumerate() {
                        *v = z[(r + k) * dim + c];
                    }
                    channel_features(model.kind, &window, model.config.dlinear_kernel, &mut feats);
                    let row = c * samples + r;
                    for (k, f) in feats.iter().enumerate() {
                        x[(row, k)] = *f;
                    }
                    let next = z[(r + l) * dim + c];
                    y[(row, 0)] = if model.kind == ModelKind::NLinear { next - window[l - 1] } else { next };
                }
            }
            ridge_with_intercept(&x, &y, model.config.linear_ridge)?
        }
    };
    Ok(Fitted { w, b, scaler })
}

pub(super) fn predict(model: &ForecastModel, fitted: &Fitted, warmup: &Trajectory, sink: &mut Rollout) -> Result<()> {
    let dim = warmup.dim();
    let m = warmup.len();
    let l = model.hyper.lookback();
    // scaled window, oldest row first
    let mut window = fitted.scaler.forward(&warmup.values()[(m - l) * dim..]);
    let mut next = vec![0.0; dim];
    let mut feats = Vec::new();
    let mut channel = vec![0.0; l];
    loop {
        match model.kind {
            ModelKind::LinearRidge => {
                for (j, o) in next.iter_mut().enumerate() {
                    *o = fitted.b[j] + window.iter().enumerate().map(|(i, v)| v * fitted.w[(i, j)]).sum::<f64>();
                }
            }
            _ => {
                for (c, o) in next.iter_mut().enumerate() {
                    for (k, v) in channel.iter_mut().enumerate() {
                        *v = window[k * dim + c];
                    }
                    channel_features(model.kind, &channel, model.config.dlinear_kernel, &mut feats);
                    let head = fitted.b[0] + feats.iter().enumerate().map(|(i, f)| f * fitted.w[(i, 0)]).sum::<f64>();
                    *o = if model.kind == ModelKind::NLinear { head + channel[l - 1] } else { head };
                }
            }
        }
        window.drain(..dim);
        window.extend_from_slice(&next);
        let mut row = next.clone();
        fitted.scaler.inverse(&mut row);
        if !sink.push(&row) {
            break;
        }
    }
    Ok(())
}
