//! Echo state network and nonlinear vector autoregression.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ForecastModel, ModelConfig, ModelKind, Rollout, Scaler};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{ridge, ridge_with_intercept, Csr};

/// Fixed random reservoir, rescaled to the configured spectral radius.
#[derive(Debug)]
pub struct Reservoir {
    pub w: Csr,
    /// `size x dim`, row-major.
    pub w_in: Vec<f64>,
    pub bias: Vec<f64>,
    pub dim: usize,
    /// Eigenvalues of the rescaled `w`.
    pub eigenvalues: Vec<Complex<f64>>,
}

type CacheKey = (u64, usize, usize, [u64; 5]);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Reservoir>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Reservoir>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Reservoir {
    pub fn sample(config: &ModelConfig, dim: usize, seed: u64) -> Result<Self> {
        let n = config.reservoir_size;
        if n == 0 || !(config.connectivity > 0.0 && config.connectivity <= 1.0) {
            return Err(Error::InvalidArgument("bad reservoir configuration".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.random::<f64>() < config.connectivity {
                    triplets.push((i, j, StandardNormal.sample(&mut rng)));
                }
            }
        }
        let mut w = Csr::from_triplets(n, &triplets);
        let eig = w.to_dense().complex_eigenvalues();
        let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if radius == 0.0 {
            return Err(Error::InvalidArgument("reservoir is nilpotent; raise connectivity".into()));
        }
        let c = config.spectral_radius / radius;
        w.scale(c);
        let w_in = (0..n * dim)
            .map(|_| {
                if rng.random::<f64>() < config.input_connectivity {
                    config.input_scaling * rng.random_range(-1.0..=1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let bias = (0..n)
            .map(|_| config.bias_scaling * rng.random_range(-1.0..=1.0))
            .collect();
        Ok(Self {
            w,
            w_in,
            bias,
            dim,
            eigenvalues: eig.iter().map(|z| z * c).collect(),
        })
    }

    /// Shared per-process copy; sampling and the eigen-decomposition run once
    /// per `(seed, dim, configuration)`.
    pub fn cached(config: &ModelConfig, dim: usize, seed: u64) -> Result<Arc<Self>> {
        let key = (
            seed,
            dim,
            config.reservoir_size,
            [
                config.spectral_radius.to_bits(),
                config.connectivity.to_bits(),
                config.input_scaling.to_bits(),
                config.input_connectivity.to_bits(),
                config.bias_scaling.to_bits(),
            ],
        );
        if let Some(r) = cache().lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let r = Arc::new(Self::sample(config, dim, seed)?);
        cache().lock().unwrap().entry(key).or_insert_with(|| r.clone());
        Ok(r)
    }

    pub fn size(&self) -> usize {
        self.w.n
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spectral radius of the leaky update Jacobian at the origin, `(1 - a) I + a W`.
    pub fn effective_radius(&self, leakage: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| (z * leakage + (1.0 - leakage)).norm())
            .fold(0.0, f64::max)
    }

    /// Leaky tanh update with input `u`.
    fn step(&self, state: &mut [f64], u: &[f64], leakage: f64, scratch: &mut [f64]) {
        self.w.mul_vec(state, scratch);
        for (i, (x, pre)) in state.iter_mut().zip(scratch.iter()).enumerate() {
            let drive: f64 = self.w_in[i * self.dim..(i + 1) * self.dim].iter().zip(u).map(|(a, b)| a * b).sum();
            *x = (1.0 - leakage) * *x + leakage * (pre + drive + self.bias[i]).tanh();
        }
    }
}

/// `1 + kD + kD(kD + 1) / 2`: constant, linear taps and unique quadratic monomials.
pub fn nvar_feature_count(dim: usize, taps: usize) -> usize {
    let lin = dim * taps;
    1 + lin + lin * (lin + 1) / 2
}

fn tap_spacing(config: &ModelConfig) -> usize {
    (config.nvar_delay / config.nvar_taps.max(1)).max(1)
}

/// Lag of the oldest tap.
pub(crate) fn nvar_span(config: &ModelConfig) -> usize {
    tap_spacing(config) * config.nvar_taps.saturating_sub(1)
}

fn nvar_features(z: &[f64], t: usize, dim: usize, config: &ModelConfig, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let s = tap_spacing(config);
    for k in 0..config.nvar_taps {
        let row = t - k * s;
        out.extend_from_slice(&z[row * dim..(row + 1) * dim]);
    }
    let lin = dim * config.nvar_taps;
    for i in 0..lin {
        for j in i..lin {
            out.push(out[1 + i] * out[1 + j]);
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Fitted {
    Esn {
        /// `(size + dim) x dim`
        w_out: DMatrix<f64>,
        b: Vec<f64>,
        scaler: Scaler,
    },
    Nvar {
        /// `features x dim`
        w: DMatrix<f64>,
        scaler: Scaler,
        /// RMS one-step error on the training pairs, in data units.
        residual: f64,
    },
}

impl Fitted {
    pub(crate) fn parameter_count(&self) -> usize {
        match self {
            Fitted::Esn { w_out, b, .. } => w_out.len() + b.len(),
            Fitted::Nvar { w, .. } => w.len(),
        }
    }

    pub(crate) fn training_residual(&self) -> Option<f64> {
        match self {
            Fitted::Nvar { residual, .. } => Some(*residual),
            Fitted::Esn { .. } => None,
        }
    }
}

pub(super) fn fit(model: &ForecastModel, history: &Trajectory) -> Result<Fitted> {
    let dim = history.dim();
    let n = history.len();
    let a = model.hyper.leakage();
    let scaler = Scaler::fit(history);
    let z = scaler.forward(history.values());
    match model.kind {
        ModelKind::Esn => {
            let res = model.reservoir.as_ref().expect("ESN without reservoir");
            let size = res.size();
            let washout = model.config.washout;
            let rows = n - 1 - washout;
            let mut x = DMatrix::zeros(rows, size + dim);
            let mut y = DMatrix::zeros(rows, dim);
            let mut state = vec![0.0; size];
            let mut scratch = vec![0.0; size];
            for t in 0..n - 1 {
                let u = &z[t * dim..(t + 1) * dim];
                res.step(&mut state, u, a, &mut scratch);
                if t >= washout {
                    let r = t - washout;
                    for (j, v) in state.iter().chain(u).enumerate() {
                        x[(r, j)] = *v;
                    }
                    for c in 0..dim {
                        y[(r, c)] = z[(t + 1) * dim + c];
                    }
                }
            }
            let (w_out, b) = ridge_with_intercept(&x, &y, model.config.esn_ridge)?;
            Ok(Fitted::Esn {
                w_out,
                b: b.iter().copied().collect(),
                scaler,
            })
        }
        ModelKind::Nvar => {
            let span = nvar_span(&model.config);
            let p = nvar_feature_count(dim, model.config.nvar_taps);
            let rows = n - 1 - span;
            let mut x = DMatrix::zeros(rows, p);
            let mut y = DMatrix::zeros(rows, dim);
            let mut feats = Vec::with_capacity(p);
            for r in 0..rows {
                let t = r + span;
                nvar_features(&z, t, dim, &model.config, &mut feats);
                for (j, f) in feats.iter().enumerate() {
                    x[(r, j)] = *f;
                }
                for c in 0..dim {
                    y[(r, c)] = (z[(t + 1) * dim + c] - (1.0 - a) * z[t * dim + c]) / a;
                }
            }
            let w = ridge(&x, &y, model.config.nvar_ridge)?;
            let pred = &x * &w;
            let mut sq = 0.0;
            for r in 0..rows {
                let t = r + span;
                for c in 0..dim {
                    let next = (1.0 - a) * z[t * dim + c] + a * pred[(r, c)];
                    let err = (next - z[(t + 1) * dim + c]) * scaler.scale[c];
                    sq += err * err;
                }
            }
            Ok(Fitted::Nvar {
                w,
                scaler,
                residual: (sq / (rows * dim) as f64).sqrt(),
            })
        }
        _ => unreachable!("not a reservoir model"),
    }
}

pub(super) fn predict(model: &ForecastModel, fitted: &Fitted, warmup: &Trajectory, sink: &mut Rollout) -> Result<()> {
    let dim = warmup.dim();
    let a = model.hyper.leakage();
    match fitted {
        Fitted::Esn { w_out, b, scaler } => {
            let res = model.reservoir.as_ref().expect("ESN without reservoir");
            let size = res.size();
            let z = scaler.forward(warmup.values());
            let mut state = vec![0.0; size];
            let mut scratch = vec![0.0; size];
            let mut u = vec![0.0; dim];
            let mut next = vec![0.0; dim];
            for row in z.chunks_exact(dim) {
                u.copy_from_slice(row);
                res.step(&mut state, &u, a, &mut scratch);
            }
            loop {
                for (c, o) in next.iter_mut().enumerate() {
                    *o = b[c]
                        + state
                            .iter()
                            .chain(u.iter())
                            .enumerate()
                            .map(|(j, v)| v * w_out[(j, c)])
                            .sum::<f64>();
                }
                let mut row = next.clone();
                scaler.inverse(&mut row);
                if !sink.push(&row) {
                    break;
                }
                u.copy_from_slice(&next);
                res.step(&mut state, &u, a, &mut scratch);
            }
        }
        Fitted::Nvar { w, scaler, .. } => {
            let span = nvar_span(&model.config);
            let m = warmup.len();
            let mut z = scaler.forward(&warmup.values()[(m - span - 1) * dim..]);
            let mut feats = Vec::with_capacity(w.nrows());
            loop {
                let t = z.len() / dim - 1;
                nvar_features(&z, t, dim, &model.config, &mut feats);
                let mut next: Vec<f64> = (0..dim)
                    .map(|c| {
                        let f: f64 = feats.iter().enumerate().map(|(j, v)| v * w[(j, c)]).sum();
                        (1.0 - a) * z[t * dim + c] + a * f
                    })
                    .collect();
                z.extend_from_slice(&next);
                // only the oldest tap is ever read back
                if z.len() > 4 * (span + 1) * dim {
                    z.drain(..(z.len() / dim - span - 1) * dim);
                }
                scaler.inverse(&mut next);
                if !sink.push(&next) {
                    break;
                }
            }
        }
    }
    Ok(())
}
