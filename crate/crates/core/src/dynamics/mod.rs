//! Chaotic-system registry and fixed-step integration on attractors.

mod systems;
mod trajectory;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use systems::{registry, system_by_name};
pub use trajectory::{Trajectory, TrajectoryEnvelope};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

pub type RhsFn = fn(x: &[f64], p: &[f64], out: &mut [f64]);
/// Writes the row-major `D×D` Jacobian of the right-hand side.
pub type JacobianFn = fn(x: &[f64], p: &[f64], out: &mut [f64]);
/// Scalar delay equation `f(x(t), x(t - tau))`.
pub type DelayFn = fn(x: f64, x_lag: f64, p: &[f64]) -> f64;

#[derive(Clone, Copy)]
pub enum Dynamics {
    Ode { rhs: RhsFn, jacobian: Option<JacobianFn> },
    Delay {
        rhs: DelayFn,
        d_dx: DelayFn,
        d_dlag: DelayFn,
        tau: f64,
    },
}

/// A named dynamical system with literature parameters.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub param_names: Vec<&'static str>,
    pub params: Vec<f64>,
    pub dynamics: Dynamics,
    pub default_state: Vec<f64>,
    /// Rough oscillation period used before alignment has run.
    pub period_hint: f64,
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.named_params())
            .field("delay", &self.delay())
            .finish()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SystemSummary {
    pub name: String,
    pub dim: usize,
    pub params: Vec<(String, f64)>,
    pub delay: Option<f64>,
}

impl SystemSpec {
    pub fn delay(&self) -> Option<f64> {
        match self.dynamics {
            Dynamics::Delay { tau, .. } => Some(tau),
            Dynamics::Ode { .. } => None,
        }
    }

    pub fn is_delay(&self) -> bool {
        self.delay().is_some()
    }

    pub fn named_params(&self) -> Vec<(String, f64)> {
        self.param_names
            .iter()
            .zip(&self.params)
            .map(|(n, v)| (n.to_string(), *v))
            .collect()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| *n == name).map(|i| self.params[i])
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            name: self.name.clone(),
            dim: self.dim,
            params: self.named_params(),
            delay: self.delay(),
        }
    }

    /// Stable hash of name and parameter values, used as a cache key.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        if let Some(tau) = self.delay() {
            h.update(tau.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Evaluates the vector field. For delay systems `x` is `[x(t), x(t - tau)]`
    /// and the output has length 1.
    pub fn rhs(&self, x: &[f64], out: &mut [f64]) {
        match self.dynamics {
            Dynamics::Ode { rhs, .. } => rhs(x, &self.params, out),
            Dynamics::Delay { rhs, .. } => out[0] = rhs(x[0], x[1], &self.params),
        }
    }

    /// Row-major Jacobian of [`Self::rhs`]; analytic when registered, central
    /// differences otherwise. Delay systems return the 1×2 row `[df/dx, df/dlag]`.
    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        match self.dynamics {
            Dynamics::Ode { jacobian: Some(j), .. } => j(x, &self.params, out),
            Dynamics::Ode { rhs, jacobian: None } => {
                finite_difference_jacobian(|s, o| rhs(s, &self.params, o), x, self.dim, out)
            }
            Dynamics::Delay { d_dx, d_dlag, .. } => {
                out[0] = d_dx(x[0], x[1], &self.params);
                out[1] = d_dlag(x[0], x[1], &self.params);
            }
        }
    }

    /// Number of inputs the right-hand side reads.
    pub fn rhs_input_len(&self) -> usize {
        if self.is_delay() {
            2
        } else {
            self.dim
        }
    }
}

/// Central-difference Jacobian of an `n → n` map.
pub fn finite_difference_jacobian<F>(f: F, x: &[f64], n: usize, out: &mut [f64])
where
    F: Fn(&[f64], &mut [f64]),
{
    let m = out.len() / x.len();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        f(&xp, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..m {
            out[i * x.len() + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    debug_assert!(n == m || m == 1);
}

/// Relative Frobenius discrepancy between the registered Jacobian and central
/// differences at `x`.
pub fn jacobian_fd_discrepancy(spec: &SystemSpec, x: &[f64]) -> f64 {
    let n_in = spec.rhs_input_len();
    let n_out = if spec.is_delay() { 1 } else { spec.dim };
    let mut analytic = vec![0.0; n_in * n_out];
    spec.jacobian(x, &mut analytic);
    let mut numeric = vec![0.0; n_in * n_out];
    finite_difference_jacobian(|s, o| spec.rhs(s, o), x, n_out, &mut numeric);
    let diff: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Reusable RK4 scratch space for an ODE of dimension `n`.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub(crate) fn step<F: FnMut(&[f64], &mut [f64])>(&mut self, mut f: F, x: &mut [f64], dt: f64) {
        let n = x.len();
        f(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// History window for method-of-steps integration of a scalar delay equation.
/// `window[len - 1]` is the current value, `window[len - 1 - j]` the value `j`
/// steps in the past.
#[derive(Clone, Debug)]
pub(crate) struct DelayWindow {
    pub(crate) window: Vec<f64>,
    /// `tau / dt`
    pub(crate) lag_steps: f64,
    pub(crate) dt: f64,
}

impl DelayWindow {
    pub(crate) fn constant(x0: f64, tau: f64, dt: f64) -> Self {
        let lag_steps = tau / dt;
        let len = lag_steps.ceil() as usize + 2;
        Self {
            window: vec![x0; len],
            lag_steps,
            dt,
        }
    }

    pub(crate) fn current(&self) -> f64 {
        self.window[self.window.len() - 1]
    }

    /// Linear interpolation of `buf` at `offset` steps after the current time
    /// minus the delay.
    pub(crate) fn lagged(buf: &[f64], lag_steps: f64, offset: f64) -> f64 {
        let pos = (buf.len() - 1) as f64 + offset - lag_steps;
        let lo = pos.floor();
        let w = pos - lo;
        let lo = lo as usize;
        if w == 0.0 {
            buf[lo]
        } else {
            buf[lo] * (1.0 - w) + buf[lo + 1] * w
        }
    }

    /// One RK4 step; returns the new value and pushes it into the window.
    pub(crate) fn step(&mut self, f: DelayFn, p: &[f64]) -> f64 {
        let x = self.current();
        let dt = self.dt;
        let lag0 = Self::lagged(&self.window, self.lag_steps, 0.0);
        let lag_half = Self::lagged(&self.window, self.lag_steps, 0.5);
        let lag1 = Self::lagged(&self.window, self.lag_steps, 1.0);
        let k1 = f(x, lag0, p);
        let k2 = f(x + 0.5 * dt * k1, lag_half, p);
        let k3 = f(x + 0.5 * dt * k2, lag_half, p);
        let k4 = f(x + dt * k3, lag1, p);
        let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        self.window.copy_within(1.., 0);
        let last = self.window.len() - 1;
        self.window[last] = next;
        next
    }
}

pub(crate) fn check_finite_state(x: &[f64], step: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
        return Err(Error::Divergence { step });
    }
    Ok(())
}

/// Fixed-step RK4 trajectory of `n_steps + 1` points starting at `x0`.
///
/// Delay systems are integrated by the method of steps with a constant
/// pre-history equal to `x0` and linear interpolation of lagged values; this
/// requires `dt <= tau`.
pub fn integrate(spec: &SystemSpec, x0: &[f64], dt: f64, n_steps: usize) -> Result<Trajectory> {
    validate_integration(spec, x0, dt, n_steps)?;
    let mut values = Vec::with_capacity((n_steps + 1) * spec.dim);
    values.extend_from_slice(x0);
    match spec.dynamics {
        Dynamics::Ode { rhs, .. } => {
            let mut x = x0.to_vec();
            let mut rk = Rk4::new(spec.dim);
            for step in 1..=n_steps {
                rk.step(|s, o| rhs(s, &spec.params, o), &mut x, dt);
                check_finite_state(&x, step)?;
                values.extend_from_slice(&x);
            }
        }
        Dynamics::Delay { rhs, tau, .. } => {
            let mut w = DelayWindow::constant(x0[0], tau, dt);
            for step in 1..=n_steps {
                let x = w.step(rhs, &spec.params);
                check_finite_state(&[x], step)?;
                values.push(x);
            }
        }
    }
    Trajectory::new(values, spec.dim, dt, spec.name.clone())
}

fn validate_integration(spec: &SystemSpec, x0: &[f64], dt: f64, n_steps: usize) -> Result<()> {
    if x0.len() != spec.dim {
        return Err(Error::InvalidArgument(format!(
            "{} expects a {}-vector, got {}",
            spec.name,
            spec.dim,
            x0.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
        return Err(Error::InvalidArgument("dt must be positive and n_steps >= 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    if let Some(tau) = spec.delay() {
        if dt > tau {
            return Err(Error::InvalidArgument(format!("dt {dt} exceeds delay {tau}")));
        }
    }
    Ok(())
}

/// Relative scale of the multiplicative perturbation applied to the default
/// state before burn-in.
pub const SAMPLE_PERTURBATION: f64 = 1e-2;

/// Integration step used for burn-in before a system has been aligned.
pub fn burn_in_step(spec: &SystemSpec) -> f64 {
    let dt = spec.period_hint / 200.0;
    match spec.delay() {
        Some(tau) => dt.min(tau),
        None => dt,
    }
}

fn perturbed_default(spec: &SystemSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.default_state
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v * (1.0 + SAMPLE_PERTURBATION * z) + if *v == 0.0 { SAMPLE_PERTURBATION * z } else { 0.0 }
        })
        .collect()
}

/// Seeded point on the attractor: perturbs the default state and discards a
/// transient of `transient_periods` nominal periods.
pub fn sample_attractor(spec: &SystemSpec, seed: u64, transient_periods: f64) -> Result<Vec<f64>> {
    if transient_periods < 10.0 {
        return Err(Error::InvalidArgument(format!(
            "transient_periods must be >= 10, got {transient_periods}"
        )));
    }
    let dt = burn_in_step(spec);
    let n = (transient_periods * spec.period_hint / dt).ceil() as usize;
    let x0 = perturbed_default(spec, seed);
    let traj = integrate(spec, &x0, dt, n).map_err(|_| Error::TransientDivergence {
        system: spec.name.clone(),
    })?;
    Ok(traj.last_row().to_vec())
}

/// Seeded trajectory on the attractor at step `dt`. Burn-in and recording run
/// as one continuous integration, so delay systems keep their history window.
pub fn attractor_trajectory(
    spec: &SystemSpec,
    seed: u64,
    transient_periods: f64,
    dt: f64,
    n_points: usize,
) -> Result<Trajectory> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("need at least 2 points".into()));
    }
    let traj = match spec.dynamics {
        Dynamics::Ode { .. } => {
            let x0 = sample_attractor(spec, seed, transient_periods)?;
            integrate(spec, &x0, dt, n_points - 1)?
        }
        Dynamics::Delay { .. } => {
            let x0 = perturbed_default(spec, seed);
            let skip = (transient_periods * spec.period_hint / dt).ceil() as usize;
            let full = integrate(spec, &x0, dt, skip + n_points - 1).map_err(|e| match e {
                Error::Divergence { step } if step <= skip => Error::TransientDivergence {
                    system: spec.name.clone(),
                },
                other => other,
            })?;
            full.slice(skip, skip + n_points).with_t0(0.0)
        }
    };
    Ok(traj.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> SystemSpec {
        fn rhs(x: &[f64], _: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
        }
        SystemSpec {
            name: "Decay".into(),
            dim: 1,
            param_names: vec![],
            params: vec![],
            dynamics: Dynamics::Ode { rhs, jacobian: None },
            default_state: vec![1.0],
            period_hint: 1.0,
        }
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let t = integrate(&decay(), &[1.0], 0.1, 10).unwrap();
        assert_eq!(t.len(), 11);
        assert!((t.last_row()[0] - (-1.0f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn rk4_global_error_is_fourth_order() {
        let spec = decay();
        let err = |dt: f64| {
            let n = (2.0 / dt).round() as usize;
            let t = integrate(&spec, &[1.0], dt, n).unwrap();
            (t.last_row()[0] - (-2.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn lorenz_fixed_point_stays_put() {
        let lorenz = system_by_name("Lorenz").unwrap();
        let t = integrate(&lorenz, &[0.0, 0.0, 0.0], 0.01, 500).unwrap();
        assert!(t.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn divergence_names_the_step() {
        fn blowup(x: &[f64], _: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[0];
        }
        let spec = SystemSpec {
            dynamics: Dynamics::Ode { rhs: blowup, jacobian: None },
            ..decay()
        };
        match integrate(&spec, &[1.0], 0.1, 100) {
            Err(Error::Divergence { step }) => assert!(step > 1 && step < 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn integration_is_bit_deterministic() {
        let lorenz = system_by_name("Lorenz").unwrap();
        let a = integrate(&lorenz, &lorenz.default_state, 0.005, 2000).unwrap();
        let b = integrate(&lorenz, &lorenz.default_state, 0.005, 2000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = decay();
        assert!(integrate(&spec, &[1.0], -0.1, 10).is_err());
        assert!(integrate(&spec, &[1.0], 0.1, 0).is_err());
        assert!(integrate(&spec, &[f64::NAN], 0.1, 1).is_err());
        assert!(integrate(&spec, &[1.0, 2.0], 0.1, 1).is_err());
    }

    #[test]
    fn delay_system_with_constant_equilibrium_history_is_stationary() {
        let mg = system_by_name("MackeyGlass").unwrap();
        // x* solves beta / (1 + x^n) = gamma, i.e. x* = 1 for beta = 2 gamma
        let t = integrate(&mg, &[1.0], 0.5, 200).unwrap();
        assert!(t.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sample_attractor_is_seed_deterministic() {
        let lorenz = system_by_name("Lorenz").unwrap();
        let a = sample_attractor(&lorenz, 11, 10.0).unwrap();
        let b = sample_attractor(&lorenz, 11, 10.0).unwrap();
        let c = sample_attractor(&lorenz, 12, 10.0).unwrap();
        assert_eq!(a, b);
        let sep: f64 = a.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(sep > 1e-3);
        let mut f = vec![0.0; 3];
        lorenz.rhs(&a, &mut f);
        assert!(f.iter().map(|v| v * v).sum::<f64>() > 0.0);
    }

    #[test]
    fn short_transient_is_rejected() {
        let lorenz = system_by_name("Lorenz").unwrap();
        assert!(sample_attractor(&lorenz, 0, 5.0).is_err());
    }
}
