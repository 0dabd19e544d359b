use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentResult;
use crate::dynamics::{
    check_finite_state as check_state, sample_attractor, DelayWindow, Dynamics, Rk4, SystemSpec, DIVERGENCE_BOUND,
};
use crate::error::{Error, Result};

/// Exponents tracked for delay systems, whose state is a history window.
pub const DELAY_EXPONENTS: usize = 5;

/// Initial and stopping separations for the two-trajectory estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub xi_norm: f64,
    pub stop_norm: f64,
    /// Give up after this much natural time without reaching `stop_norm`.
    pub max_time: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            xi_norm: 1e-14,
            stop_norm: 1e-8,
            max_time: 1e4,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_norm > 0.0 && self.xi_norm < self.stop_norm) || self.xi_norm > 1e-14 {
            return Err(Error::InvalidArgument(format!(
                "need 0 < xi_norm <= 1e-14 and xi_norm < stop_norm, got {} / {}",
                self.xi_norm, self.stop_norm
            )));
        }
        Ok(())
    }
}

/// Outcome of the two-trajectory estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NaiveLyapunov {
    Exponent(f64),
    /// The separation never reached the stopping threshold.
    NonChaotic,
}

impl NaiveLyapunov {
    pub fn exponent(self) -> Option<f64> {
        match self {
            NaiveLyapunov::Exponent(l) => Some(l),
            NaiveLyapunov::NonChaotic => None,
        }
    }
}

/// Column-major frame of `k` tangent vectors of length `n`, re-orthonormalized
/// by modified Gram-Schmidt (equivalent to a thin QR with positive diagonal).
struct Frame {
    n: usize,
    k: usize,
    v: Vec<f64>,
}

impl Frame {
    /// Seeded random orthonormal frame. An axis-aligned start can sit on an
    /// invariant subspace and take arbitrarily long to relax.
    fn random(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let v = (0..n * k).map(|_| StandardNormal.sample(rng)).collect();
        let mut frame = Self { n, k, v };
        frame
            .orthonormalize(&mut vec![0.0; k])
            .expect("gaussian frame has full rank");
        frame
    }

    /// Orthonormalizes in place and adds `ln R_jj` to `acc`.
    fn orthonormalize(&mut self, acc: &mut [f64]) -> Result<()> {
        let n = self.n;
        for j in 0..self.k {
            for i in 0..j {
                let (head, tail) = self.v.split_at_mut(j * n);
                let qi = &head[i * n..(i + 1) * n];
                let vj = &mut tail[..n];
                let dot: f64 = qi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
                vj.iter_mut().zip(qi).for_each(|(b, a)| *b -= dot * a);
            }
            let vj = &mut self.v[j * n..(j + 1) * n];
            let norm = vj.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Jacobian(format!("tangent vector {j} collapsed (norm {norm})")));
            }
            vj.iter_mut().for_each(|x| *x /= norm);
            acc[j] += norm.ln();
        }
        Ok(())
    }
}

/// Integrates state and tangent frame together. The frame is re-orthonormalized
/// after every step and its log-stretching accumulated.
struct TangentFlow<'a> {
    spec: &'a SystemSpec,
    dt: f64,
    kind: FlowKind,
    frame: Frame,
    rng: ChaCha8Rng,
    jac: Vec<f64>,
    trace_sum: f64,
}

enum FlowKind {
    Ode { x: Vec<f64>, packed: Vec<f64>, rk: Rk4 },
    Delay { w: DelayWindow },
}

impl<'a> TangentFlow<'a> {
    fn new(spec: &'a SystemSpec, x0: &[f64], dt: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (kind, frame) = match spec.dynamics {
            Dynamics::Ode { .. } => {
                let d = spec.dim;
                let packed = vec![0.0; d + d * d];
                (
                    FlowKind::Ode {
                        x: x0.to_vec(),
                        packed,
                        rk: Rk4::new(d + d * d),
                    },
                    Frame::random(d, d, &mut rng),
                )
            }
            Dynamics::Delay { tau, .. } => {
                if dt > tau {
                    return Err(Error::InvalidArgument(format!("dt {dt} exceeds delay {tau}")));
                }
                let w = DelayWindow::constant(x0[0], tau, dt);
                let n = w.window.len();
                (FlowKind::Delay { w }, Frame::random(n, DELAY_EXPONENTS.min(n), &mut rng))
            }
        };
        Ok(Self {
            spec,
            dt,
            kind,
            frame,
            rng,
            jac: vec![0.0; spec.dim * spec.dim.max(2)],
            trace_sum: 0.0,
        })
    }

    /// Starts a delay flow from a full history window rather than a constant.
    fn with_window(mut self, window: &[f64]) -> Self {
        if let FlowKind::Delay { w } = &mut self.kind {
            w.window.copy_from_slice(window);
        }
        self
    }

    fn reset_frame(&mut self) {
        self.frame = Frame::random(self.frame.n, self.frame.k, &mut self.rng);
    }

    fn step(&mut self, acc: &mut [f64], step_index: usize) -> Result<()> {
        let spec = self.spec;
        match &mut self.kind {
            FlowKind::Ode { x, packed, rk } => {
                let d = spec.dim;
                packed[..d].copy_from_slice(x);
                // frame is column-major; packed stores it as Y[i, j] = packed[d + i*d + j]
                for j in 0..d {
                    for i in 0..d {
                        packed[d + i * d + j] = self.frame.v[j * d + i];
                    }
                }
                let jac = &mut self.jac;
                let mut trace = 0.0;
                let mut first = true;
                rk.step(
                    |s, out| {
                        spec.rhs(&s[..d], &mut out[..d]);
                        spec.jacobian(&s[..d], jac);
                        if first {
                            trace = (0..d).map(|i| jac[i * d + i]).sum();
                            first = false;
                        }
                        let y = &s[d..];
                        let dy = &mut out[d..];
                        for i in 0..d {
                            for j in 0..d {
                                let mut acc = 0.0;
                                for k in 0..d {
                                    acc += jac[i * d + k] * y[k * d + j];
                                }
                                dy[i * d + j] = acc;
                            }
                        }
                    },
                    packed,
                    self.dt,
                );
                self.trace_sum += trace;
                x.copy_from_slice(&packed[..d]);
                check_state(x, step_index)?;
                for j in 0..d {
                    for i in 0..d {
                        self.frame.v[j * d + i] = packed[d + i * d + j];
                    }
                }
            }
            FlowKind::Delay { w } => {
                let Dynamics::Delay { rhs, d_dx, d_dlag, .. } = spec.dynamics else {
                    unreachable!()
                };
                let p = &spec.params;
                let dt = self.dt;
                let n = w.window.len();
                let x = w.current();
                let l0 = DelayWindow::lagged(&w.window, w.lag_steps, 0.0);
                let lh = DelayWindow::lagged(&w.window, w.lag_steps, 0.5);
                let l1 = DelayWindow::lagged(&w.window, w.lag_steps, 1.0);
                let k1 = rhs(x, l0, p);
                let x2 = x + 0.5 * dt * k1;
                let k2 = rhs(x2, lh, p);
                let x3 = x + 0.5 * dt * k2;
                let k3 = rhs(x3, lh, p);
                let x4 = x + dt * k3;
                let partials = [
                    (d_dx(x, l0, p), d_dlag(x, l0, p)),
                    (d_dx(x2, lh, p), d_dlag(x2, lh, p)),
                    (d_dx(x3, lh, p), d_dlag(x3, lh, p)),
                    (d_dx(x4, l1, p), d_dlag(x4, l1, p)),
                ];
                self.trace_sum += partials[0].0;
                for j in 0..self.frame.k {
                    let v = &mut self.frame.v[j * n..(j + 1) * n];
                    let dx = v[n - 1];
                    let dl0 = DelayWindow::lagged(v, w.lag_steps, 0.0);
                    let dlh = DelayWindow::lagged(v, w.lag_steps, 0.5);
                    let dl1 = DelayWindow::lagged(v, w.lag_steps, 1.0);
                    let dk1 = partials[0].0 * dx + partials[0].1 * dl0;
                    let dk2 = partials[1].0 * (dx + 0.5 * dt * dk1) + partials[1].1 * dlh;
                    let dk3 = partials[2].0 * (dx + 0.5 * dt * dk2) + partials[2].1 * dlh;
                    let dk4 = partials[3].0 * (dx + dt * dk3) + partials[3].1 * dl1;
                    let next = dx + dt / 6.0 * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);
                    v.copy_within(1.., 0);
                    v[n - 1] = next;
                }
                let next = w.step(rhs, p);
                check_state(&[next], step_index)?;
            }
        }
        self.frame.orthonormalize(acc)
    }
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Lyapunov spectrum together with the time-averaged Jacobian trace along
/// the same trajectory (the trace is only meaningful for ODEs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QrSpectrum {
    pub exponents: Vec<f64>,
    pub mean_trace: f64,
}

/// Lyapunov spectrum by QR re-orthonormalization of a tangent frame carried
/// with the flow, in units of inverse natural time, sorted descending.
pub fn lyapunov_spectrum_qr(spec: &SystemSpec, x0: &[f64], dt: f64, n_steps: usize) -> Result<Vec<f64>> {
    Ok(lyapunov_spectrum_qr_detailed(spec, x0, dt, n_steps, 0)?.exponents)
}

/// As [`lyapunov_spectrum_qr`], with `spinup_steps` of frame alignment that
/// are integrated but not averaged.
pub fn lyapunov_spectrum_qr_detailed(
    spec: &SystemSpec,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    spinup_steps: usize,
) -> Result<QrSpectrum> {
    if n_steps == 0 || !(dt > 0.0) {
        return Err(Error::InvalidArgument("need n_steps >= 1 and dt > 0".into()));
    }
    let mut flow = TangentFlow::new(spec, x0, dt, 0)?;
    let mut r = run_flow(&mut flow, n_steps, spinup_steps)?;
    r.exponents = sorted_desc(r.exponents);
    Ok(r)
}

fn run_flow(flow: &mut TangentFlow<'_>, n_steps: usize, spinup_steps: usize) -> Result<QrSpectrum> {
    let k = flow.frame.k;
    let mut scratch = vec![0.0; k];
    for s in 0..spinup_steps {
        flow.step(&mut scratch, s + 1)?;
    }
    flow.trace_sum = 0.0;
    let mut acc = vec![0.0; k];
    for s in 0..n_steps {
        flow.step(&mut acc, spinup_steps + s + 1)?;
    }
    let t = n_steps as f64 * flow.dt;
    Ok(QrSpectrum {
        // column order, not sorted: sorting finite-time values member by
        // member would bias ensemble averages upward
        exponents: acc.into_iter().map(|a| a / t).collect(),
        mean_trace: flow.trace_sum / n_steps as f64,
    })
}

fn random_direction(n: usize, norm: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x * norm / len).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `f(p + d) - f(p)` for a separation `d` far below the state scale, taken as
/// a symmetric directional difference so rounding in `p + d` does not swamp
/// the result. Larger separations are differenced directly.
fn separation_rate<F: FnMut(&[f64], &mut [f64])>(
    mut f: F,
    p: &[f64],
    d: &[f64],
    scratch: &mut [Vec<f64>; 3],
    out: &mut [f64],
) {
    let len = norm(d);
    if len == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let h = 1e-6 * norm(p).max(1.0);
    let [q, fa, fb] = scratch;
    if len >= h {
        q.iter_mut().zip(p.iter().zip(d)).for_each(|(q, (a, b))| *q = a + b);
        f(q, fa);
        f(p, fb);
        out.iter_mut().zip(fa.iter().zip(fb.iter())).for_each(|(o, (a, b))| *o = a - b);
        return;
    }
    let c = h / len;
    q.iter_mut().zip(p.iter().zip(d)).for_each(|(q, (a, b))| *q = a + c * b);
    f(q, fa);
    q.iter_mut().zip(p.iter().zip(d)).for_each(|(q, (a, b))| *q = a - c * b);
    f(q, fb);
    let scale = len / (2.0 * h);
    out.iter_mut().zip(fa.iter().zip(fb.iter())).for_each(|(o, (a, b))| *o = (a - b) * scale);
}

/// A base trajectory and the separation `x' - x` of a perturbed copy,
/// integrated together with the same RK4 stages.
enum PairFlow {
    Ode { z: Vec<f64>, rk: Rk4, scratch: [Vec<f64>; 3] },
    Delay { w: DelayWindow, sep: Vec<f64> },
}

impl PairFlow {
    fn new(spec: &SystemSpec, base: BaseState, dt: f64) -> Self {
        match base {
            BaseState::Ode(x) => {
                let n = x.len();
                let mut z = x;
                z.resize(2 * n, 0.0);
                PairFlow::Ode {
                    z,
                    rk: Rk4::new(2 * n),
                    scratch: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
                }
            }
            BaseState::Delay(window) => {
                let Dynamics::Delay { tau, .. } = spec.dynamics else {
                    unreachable!()
                };
                let mut w = DelayWindow::constant(0.0, tau, dt);
                w.window.copy_from_slice(&window);
                let n = window.len();
                PairFlow::Delay { w, sep: vec![0.0; n] }
            }
        }
    }

    fn state(&self) -> &[f64] {
        match self {
            PairFlow::Ode { z, .. } => &z[..z.len() / 2],
            PairFlow::Delay { w, .. } => &w.window,
        }
    }

    fn separation(&self) -> &[f64] {
        match self {
            PairFlow::Ode { z, .. } => &z[z.len() / 2..],
            PairFlow::Delay { sep, .. } => sep,
        }
    }

    fn separation_mut(&mut self) -> &mut [f64] {
        match self {
            PairFlow::Ode { z, .. } => {
                let n = z.len() / 2;
                &mut z[n..]
            }
            PairFlow::Delay { sep, .. } => sep,
        }
    }

    /// Sets the perturbed copy to `x (1 + xi)`.
    fn perturb(&mut self, xi: &[f64]) {
        let x = self.state().to_vec();
        self.separation_mut()
            .iter_mut()
            .zip(x.iter().zip(xi))
            .for_each(|(d, (x, e))| *d = x * e);
    }

    fn step(&mut self, spec: &SystemSpec, dt: f64, step_index: usize) -> Result<()> {
        match self {
            PairFlow::Ode { z, rk, scratch } => {
                let n = z.len() / 2;
                rk.step(
                    |s, out| {
                        let (x, d) = s.split_at(n);
                        let (fx, fd) = out.split_at_mut(n);
                        spec.rhs(x, fx);
                        separation_rate(|a, b| spec.rhs(a, b), x, d, scratch, fd);
                    },
                    z,
                    dt,
                );
                check_state(&z[..n], step_index)
            }
            PairFlow::Delay { w, sep } => {
                let Dynamics::Delay { rhs, .. } = spec.dynamics else {
                    unreachable!()
                };
                let p = &spec.params;
                let n = sep.len();
                let x = w.current();
                let lags = [0.0, 0.5, 0.5, 1.0].map(|o| DelayWindow::lagged(&w.window, w.lag_steps, o));
                let dlags = [0.0, 0.5, 0.5, 1.0].map(|o| DelayWindow::lagged(sep, w.lag_steps, o));
                let f = |a: &[f64], o: &mut [f64]| o[0] = rhs(a[0], a[1], p);
                let mut scratch = [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
                let mut rate = [0.0];
                let dx = sep[n - 1];
                let (mut xs, mut ds) = (x, dx);
                let mut kd = [0.0; 4];
                for (stage, c) in [0.0, 0.5, 0.5, 1.0].into_iter().enumerate() {
                    if stage > 0 {
                        let kx = rhs(xs, lags[stage - 1], p);
                        xs = x + c * dt * kx;
                        ds = dx + c * dt * kd[stage - 1];
                    }
                    separation_rate(f, &[xs, lags[stage]], &[ds, dlags[stage]], &mut scratch, &mut rate);
                    kd[stage] = rate[0];
                }
                let next_sep = dx + dt / 6.0 * (kd[0] + 2.0 * kd[1] + 2.0 * kd[2] + kd[3]);
                sep.copy_within(1.., 0);
                sep[n - 1] = next_sep;
                let next = w.step(rhs, p);
                check_state(&[next], step_index)
            }
        }
    }
}

/// Seeded point on the attractor in the form each flow kind starts from.
enum BaseState {
    Ode(Vec<f64>),
    Delay(Vec<f64>),
}

fn base_state(spec: &SystemSpec, alignment: &AlignmentResult, seed: u64) -> Result<BaseState> {
    match spec.dynamics {
        Dynamics::Ode { .. } => Ok(BaseState::Ode(sample_attractor(spec, seed, 10.0)?)),
        Dynamics::Delay { tau, rhs, .. } => {
            let dt = alignment.dt_integration;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut w = DelayWindow::constant(spec.default_state[0] * (1.0 + 1e-2 * z), tau, dt);
            let burn = (20.0 * alignment.t_peak.max(spec.period_hint) / dt).ceil() as usize;
            for _ in 0..burn {
                let v = w.step(rhs, &spec.params);
                if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
                    return Err(Error::TransientDivergence {
                        system: spec.name.clone(),
                    });
                }
            }
            Ok(BaseState::Delay(w.window))
        }
    }
}

enum RunOutcome {
    /// `(ln(sep / sep0), steps)` at the first step beyond the threshold.
    Separated(f64, usize),
    /// Step budget exhausted, or the separation vanished.
    Stalled,
}

fn naive_run(
    spec: &SystemSpec,
    flow: &mut PairFlow,
    config: &PerturbationConfig,
    dt: f64,
    budget: usize,
    step_offset: usize,
) -> Result<RunOutcome> {
    let sep0 = norm(flow.separation());
    if sep0 == 0.0 {
        return Err(Error::InvalidArgument("perturbation vanished (state at origin?)".into()));
    }
    for step in 1..=budget {
        flow.step(spec, dt, step_offset + step)?;
        let sep = norm(flow.separation());
        if sep > config.stop_norm {
            return Ok(RunOutcome::Separated((sep / sep0).ln(), step));
        }
        if sep == 0.0 {
            return Ok(RunOutcome::Stalled);
        }
    }
    Ok(RunOutcome::Stalled)
}

/// Largest exponent from the growth of a single perturbation
/// `x'(0) = x0 (1 + xi)` until the separation first exceeds `stop_norm`.
pub fn lyapunov_max_naive(
    spec: &SystemSpec,
    x0: &[f64],
    config: &PerturbationConfig,
    dt: f64,
    seed: u64,
) -> Result<NaiveLyapunov> {
    config.validate()?;
    let base = match spec.dynamics {
        Dynamics::Ode { .. } => BaseState::Ode(x0.to_vec()),
        Dynamics::Delay { tau, .. } => {
            if dt > tau {
                return Err(Error::InvalidArgument(format!("dt {dt} exceeds delay {tau}")));
            }
            BaseState::Delay(DelayWindow::constant(x0[0], tau, dt).window)
        }
    };
    let mut flow = PairFlow::new(spec, base, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = random_direction(flow.state().len(), config.xi_norm, &mut rng);
    flow.perturb(&xi);
    let budget = (config.max_time / dt).ceil() as usize;
    Ok(match naive_run(spec, &mut flow, config, dt, budget, 0)? {
        RunOutcome::Separated(growth, steps) => NaiveLyapunov::Exponent(growth / (steps as f64 * dt)),
        RunOutcome::Stalled => NaiveLyapunov::NonChaotic,
    })
}

/// Naive estimator over an ensemble of seeded base trajectories, the same ones
/// [`ensemble_spectrum`] uses for the given seed. Along each, consecutive runs
/// restart from the current separation rescaled to its initial size; runs
/// that begin inside the spin-up are discarded, and each chain continues
/// until it has covered the ensemble length and completed `min_runs` runs.
/// The estimate pools total log-growth over total elapsed time.
pub fn lyapunov_max_naive_ensemble(
    spec: &SystemSpec,
    alignment: &AlignmentResult,
    config: &PerturbationConfig,
    size: EnsembleSize,
    min_runs: usize,
    seed: u64,
) -> Result<NaiveLyapunov> {
    config.validate()?;
    let dt = alignment.dt_integration;
    let sub = alignment.resample_factor;
    let spin = size.spinup_samples * sub;
    let span = spin + size.samples * sub;
    let run_budget = (config.max_time / dt).ceil() as usize;
    let mut growth = 0.0;
    let mut elapsed = 0usize;
    for chain in 0..size.trajectories as u64 {
        let chain_seed = chain_seed(seed, chain);
        let mut flow = PairFlow::new(spec, base_state(spec, alignment, chain_seed)?, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(chain_seed ^ 0x5eed);
        let xi = random_direction(flow.state().len(), config.xi_norm, &mut rng);
        flow.perturb(&xi);
        let sep0 = norm(flow.separation());
        let (mut t, mut runs) = (0usize, 0usize);
        while t < span || runs < min_runs {
            match naive_run(spec, &mut flow, config, dt, run_budget, t)? {
                RunOutcome::Separated(g, steps) => {
                    if t >= spin {
                        growth += g;
                        elapsed += steps;
                        runs += 1;
                    }
                    t += steps;
                }
                RunOutcome::Stalled => return Ok(NaiveLyapunov::NonChaotic),
            }
            let scale = sep0 / norm(flow.separation());
            flow.separation_mut().iter_mut().for_each(|d| *d *= scale);
        }
    }
    Ok(NaiveLyapunov::Exponent(growth / (elapsed as f64 * dt)))
}

fn chain_seed(seed: u64, chain: u64) -> u64 {
    seed.wrapping_mul(7_919).wrapping_add(chain)
}

/// Ensemble sizes for the long/short consistency check. Lengths are in
/// aligned samples (granularity points per dominant period).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleMode {
    Long,
    Short,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSize {
    pub trajectories: usize,
    pub samples: usize,
    /// Samples of frame alignment discarded before averaging.
    pub spinup_samples: usize,
}

impl EnsembleMode {
    pub fn default_size(self) -> EnsembleSize {
        match self {
            EnsembleMode::Long => EnsembleSize {
                trajectories: 20,
                samples: 5000,
                spinup_samples: 2000,
            },
            EnsembleMode::Short => EnsembleSize {
                trajectories: 5000,
                samples: 100,
                spinup_samples: 2000,
            },
        }
    }
}

/// Ensemble-averaged QR spectrum. Initial conditions for successive members
/// are taken along seeded base trajectories, each member restarting from a
/// fresh random tangent frame.
pub fn ensemble_spectrum(
    spec: &SystemSpec,
    alignment: &AlignmentResult,
    size: EnsembleSize,
    seed: u64,
) -> Result<QrSpectrum> {
    let dt = alignment.dt_integration;
    let sub = alignment.resample_factor;
    let n_steps = size.samples * sub;
    let spin = size.spinup_samples * sub;
    // members per base trajectory; short ensembles chain many members
    let per_chain = if size.samples >= 1000 { 1 } else { 25 };
    if size.trajectories == 0 || size.samples == 0 {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let n_chains = size.trajectories.div_ceil(per_chain);
    let chains: Vec<(Vec<f64>, f64)> = (0..n_chains)
        .into_par_iter()
        .map(|chain| -> Result<(Vec<f64>, f64)> {
            let chain_seed = chain_seed(seed, chain as u64);
            let mut flow = match base_state(spec, alignment, chain_seed)? {
                BaseState::Ode(x0) => TangentFlow::new(spec, &x0, dt, chain_seed)?,
                BaseState::Delay(window) => {
                    TangentFlow::new(spec, &window[window.len() - 1..], dt, chain_seed)?.with_window(&window)
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(chain_seed ^ 0xfa5e);
            let mut sum = vec![0.0; flow.frame.k];
            let mut trace = 0.0;
            for _ in 0..per_chain.min(size.trajectories - chain * per_chain) {
                flow.reset_frame();
                // chained members would otherwise start at a fixed orbital phase
                let offset = if per_chain > 1 {
                    rng.random_range(0..size.samples.max(1) * sub)
                } else {
                    0
                };
                let r = run_flow(&mut flow, n_steps, spin + offset)?;
                trace += r.mean_trace;
                sum.iter_mut().zip(&r.exponents).for_each(|(a, b)| *a += b);
            }
            Ok((sum, trace))
        })
        .collect::<Result<_>>()?;
    // fixed summation order keeps results independent of the worker count
    let mut sum = vec![0.0; chains[0].0.len()];
    let mut trace = 0.0;
    for (s, t) in &chains {
        sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        trace += t;
    }
    let n = size.trajectories as f64;
    Ok(QrSpectrum {
        exponents: sorted_desc(sum.into_iter().map(|s| s / n).collect()),
        mean_trace: trace / n,
    })
}

/// Largest exponent from an ensemble in the given mode.
pub fn ensemble_lyapunov(
    spec: &SystemSpec,
    alignment: &AlignmentResult,
    mode: EnsembleMode,
    seed: u64,
) -> Result<f64> {
    Ok(ensemble_spectrum(spec, alignment, mode.default_size(), seed)?.exponents[0])
}

/// Relative disagreement tolerated between two estimates said to agree to two
/// significant figures: half a unit in the second significant digit of a
/// leading-digit-one number.
pub const TWO_SIG_FIG_TOLERANCE: f64 = 0.05;

pub fn agree_two_sig_figs(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= TWO_SIG_FIG_TOLERANCE * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::system_by_name;

    fn linear(rates: [f64; 3]) -> SystemSpec {
        fn rhs(x: &[f64], p: &[f64], o: &mut [f64]) {
            for i in 0..3 {
                o[i] = p[i] * x[i];
            }
        }
        fn jac(_: &[f64], p: &[f64], o: &mut [f64]) {
            o.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..3 {
                o[i * 3 + i] = p[i];
            }
        }
        SystemSpec {
            name: "Linear".into(),
            dim: 3,
            param_names: vec!["a", "b", "c"],
            params: rates.to_vec(),
            dynamics: Dynamics::Ode { rhs, jacobian: Some(jac) },
            default_state: vec![1.0, 1.0, 1.0],
            period_hint: 1.0,
        }
    }

    #[test]
    fn diagonal_linear_flow_recovers_rates() {
        let spec = linear([-1.0, -2.0, -3.0]);
        let l = lyapunov_spectrum_qr_detailed(&spec, &[1.0, 1.0, 1.0], 0.01, 2000, 2000)
            .unwrap()
            .exponents;
        for (got, want) in l.iter().zip([-1.0, -2.0, -3.0]) {
            assert!((got - want).abs() < 1e-3, "{l:?}");
        }
    }

    #[test]
    fn hopf_limit_cycle_has_zero_leading_exponent() {
        fn rhs(x: &[f64], _: &[f64], o: &mut [f64]) {
            let r2 = x[0] * x[0] + x[1] * x[1];
            o[0] = x[0] * (1.0 - r2) - x[1];
            o[1] = x[1] * (1.0 - r2) + x[0];
            o[2] = -x[2];
        }
        let spec = SystemSpec {
            name: "Hopf".into(),
            dim: 3,
            param_names: vec![],
            params: vec![],
            dynamics: Dynamics::Ode { rhs, jacobian: None },
            default_state: vec![1.0, 0.0, 0.0],
            period_hint: 6.28,
        };
        let l = lyapunov_spectrum_qr(&spec, &[1.0, 0.0, 0.5], 0.01, 20_000).unwrap();
        assert!(l[0].abs() < 0.02, "{l:?}");
    }

    #[test]
    fn naive_estimator_on_linear_flows() {
        let cfg = PerturbationConfig::default();
        let unstable = linear([1.0, 1.0, 1.0]);
        // at 1e-14 relative the perturbation is tens of ulps; coarse steps keep
        // rounding noise well below the 1% tolerance
        let l = lyapunov_max_naive(&unstable, &[1.0, 2.0, 3.0], &cfg, 0.1, 4).unwrap();
        assert!((l.exponent().unwrap() - 1.0).abs() < 0.01, "{l:?}");
        let stable = linear([-1.0, -1.0, -1.0]);
        let cfg = PerturbationConfig { max_time: 50.0, ..cfg };
        assert_eq!(
            lyapunov_max_naive(&stable, &[1.0, 2.0, 3.0], &cfg, 0.01, 4).unwrap(),
            NaiveLyapunov::NonChaotic
        );
    }

    #[test]
    fn invalid_perturbation_config_is_rejected() {
        let cfg = PerturbationConfig {
            xi_norm: 1e-6,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lorenz_spectrum_sums_to_trace() {
        let lorenz = system_by_name("Lorenz").unwrap();
        let x0 = sample_attractor(&lorenz, 0, 10.0).unwrap();
        let r = lyapunov_spectrum_qr_detailed(&lorenz, &x0, 0.005, 100_000, 1000).unwrap();
        let sum: f64 = r.exponents.iter().sum();
        let expected = -(10.0 + 1.0 + 8.0 / 3.0);
        assert!((sum / expected - 1.0).abs() < 0.01, "{sum}");
        assert!((r.exponents[0] - 0.9056).abs() < 0.05 * 0.9056, "{:?}", r.exponents);
    }

    #[test]
    fn two_sig_fig_rule() {
        assert!(agree_two_sig_figs(0.91, 0.90));
        assert!(!agree_two_sig_figs(0.95, 0.85));
    }
}
