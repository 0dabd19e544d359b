//! Canonical chaotic flows with literature-standard parameters.

use super::{Dynamics, SystemSpec};

macro_rules! jac {
    ($out:ident, $($v:expr),+ $(,)?) => {{
        let vals = [$($v),+];
        $out.copy_from_slice(&vals);
    }};
}

fn lorenz(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (s, r, b) = (p[0], p[1], p[2]);
    o[0] = s * (x[1] - x[0]);
    o[1] = x[0] * (r - x[2]) - x[1];
    o[2] = x[0] * x[1] - b * x[2];
}
fn lorenz_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (s, r, b) = (p[0], p[1], p[2]);
    jac!(o, -s, s, 0.0, r - x[2], -1.0, -x[0], x[1], x[0], -b);
}

fn rossler(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    o[0] = -x[1] - x[2];
    o[1] = x[0] + a * x[1];
    o[2] = b + x[2] * (x[0] - c);
}
fn rossler_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, _, c) = (p[0], p[1], p[2]);
    jac!(o, 0.0, -1.0, -1.0, 1.0, a, 0.0, x[2], 0.0, x[0] - c);
}

fn chua(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (alpha, beta, m0, m1) = (p[0], p[1], p[2], p[3]);
    let h = m1 * x[0] + 0.5 * (m0 - m1) * ((x[0] + 1.0).abs() - (x[0] - 1.0).abs());
    o[0] = alpha * (x[1] - x[0] - h);
    o[1] = x[0] - x[1] + x[2];
    o[2] = -beta * x[1];
}
fn chua_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (alpha, beta, m0, m1) = (p[0], p[1], p[2], p[3]);
    let dh = if x[0].abs() < 1.0 { m0 } else { m1 };
    jac!(o, alpha * (-1.0 - dh), alpha, 0.0, 1.0, -1.0, 1.0, 0.0, -beta, 0.0);
}

fn thomas(x: &[f64], p: &[f64], o: &mut [f64]) {
    let b = p[0];
    o[0] = x[1].sin() - b * x[0];
    o[1] = x[2].sin() - b * x[1];
    o[2] = x[0].sin() - b * x[2];
}
fn thomas_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let b = p[0];
    jac!(o, -b, x[1].cos(), 0.0, 0.0, -b, x[2].cos(), x[0].cos(), 0.0, -b);
}

fn halvorsen(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    o[0] = -a * x[0] - 4.0 * x[1] - 4.0 * x[2] - x[1] * x[1];
    o[1] = -a * x[1] - 4.0 * x[2] - 4.0 * x[0] - x[2] * x[2];
    o[2] = -a * x[2] - 4.0 * x[0] - 4.0 * x[1] - x[0] * x[0];
}
fn halvorsen_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    jac!(
        o,
        -a,
        -4.0 - 2.0 * x[1],
        -4.0,
        -4.0,
        -a,
        -4.0 - 2.0 * x[2],
        -4.0 - 2.0 * x[0],
        -4.0,
        -a
    );
}

fn dadras(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c, d, e) = (p[0], p[1], p[2], p[3], p[4]);
    o[0] = x[1] - a * x[0] + b * x[1] * x[2];
    o[1] = c * x[1] - x[0] * x[2] + x[2];
    o[2] = d * x[0] * x[1] - e * x[2];
}
fn dadras_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c, d, e) = (p[0], p[1], p[2], p[3], p[4]);
    jac!(
        o,
        -a,
        1.0 + b * x[2],
        b * x[1],
        -x[2],
        c,
        1.0 - x[0],
        d * x[1],
        d * x[0],
        -e
    );
}

fn chen(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    o[0] = a * (x[1] - x[0]);
    o[1] = (c - a) * x[0] - x[0] * x[2] + c * x[1];
    o[2] = x[0] * x[1] - b * x[2];
}
fn chen_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    jac!(o, -a, a, 0.0, c - a - x[2], c, -x[0], x[1], x[0], -b);
}

fn lu_chen(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    o[0] = a * (x[1] - x[0]);
    o[1] = -x[0] * x[2] + c * x[1];
    o[2] = x[0] * x[1] - b * x[2];
}
fn lu_chen_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    jac!(o, -a, a, 0.0, -x[2], c, -x[0], x[1], x[0], -b);
}

fn sprott_b(x: &[f64], _: &[f64], o: &mut [f64]) {
    o[0] = x[1] * x[2];
    o[1] = x[0] - x[1];
    o[2] = 1.0 - x[0] * x[1];
}
fn sprott_b_jac(x: &[f64], _: &[f64], o: &mut [f64]) {
    jac!(o, 0.0, x[2], x[1], 1.0, -1.0, 0.0, -x[1], -x[0], 0.0);
}

fn sprott_c(x: &[f64], _: &[f64], o: &mut [f64]) {
    o[0] = x[1] * x[2];
    o[1] = x[0] - x[1];
    o[2] = 1.0 - x[0] * x[0];
}
fn sprott_c_jac(x: &[f64], _: &[f64], o: &mut [f64]) {
    jac!(o, 0.0, x[2], x[1], 1.0, -1.0, 0.0, -2.0 * x[0], 0.0, 0.0);
}

fn sprott_d(x: &[f64], _: &[f64], o: &mut [f64]) {
    o[0] = -x[1];
    o[1] = x[0] + x[2];
    o[2] = x[0] * x[2] + 3.0 * x[1] * x[1];
}
fn sprott_d_jac(x: &[f64], _: &[f64], o: &mut [f64]) {
    jac!(o, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, x[2], 6.0 * x[1], x[0]);
}

fn sprott_f(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    o[0] = x[1] + x[2];
    o[1] = -x[0] + a * x[1];
    o[2] = x[0] * x[0] - x[2];
}
fn sprott_f_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    jac!(o, 0.0, 1.0, 1.0, -1.0, a, 0.0, 2.0 * x[0], 0.0, -1.0);
}

fn sprott_g(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    o[0] = a * x[0] + x[2];
    o[1] = x[0] * x[2] - x[1];
    o[2] = -x[0] + x[1];
}
fn sprott_g_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let a = p[0];
    jac!(o, a, 0.0, 1.0, x[2], -1.0, x[0], -1.0, 1.0, 0.0);
}

fn aizawa(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c, d, e, f) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let (u, v, w) = (x[0], x[1], x[2]);
    o[0] = (w - b) * u - d * v;
    o[1] = d * u + (w - b) * v;
    o[2] = c + a * w - w * w * w / 3.0 - (u * u + v * v) * (1.0 + e * w) + f * w * u * u * u;
}
fn aizawa_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, _, d, e, f) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let (u, v, w) = (x[0], x[1], x[2]);
    jac!(
        o,
        w - b,
        -d,
        u,
        d,
        w - b,
        v,
        -2.0 * u * (1.0 + e * w) + 3.0 * f * w * u * u,
        -2.0 * v * (1.0 + e * w),
        a - w * w - e * (u * u + v * v) + f * u * u * u
    );
}

fn rucklidge(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (k, l) = (p[0], p[1]);
    o[0] = -k * x[0] + l * x[1] - x[1] * x[2];
    o[1] = x[0];
    o[2] = -x[2] + x[1] * x[1];
}
fn rucklidge_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (k, l) = (p[0], p[1]);
    jac!(o, -k, l - x[2], -x[1], 1.0, 0.0, 0.0, 0.0, 2.0 * x[1], -1.0);
}

fn genesio_tesi(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    o[0] = x[1];
    o[1] = x[2];
    o[2] = -c * x[0] - b * x[1] - a * x[2] + x[0] * x[0];
}
fn genesio_tesi_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (a, b, c) = (p[0], p[1], p[2]);
    jac!(o, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -c + 2.0 * x[0], -b, -a);
}

// Forced Duffing oscillator, lifted to an autonomous flow by a harmonic
// oscillator (u, v) = (cos wt, sin wt) that supplies the forcing phase.
fn duffing(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (delta, alpha, beta, gamma, omega) = (p[0], p[1], p[2], p[3], p[4]);
    o[0] = x[1];
    o[1] = -delta * x[1] - alpha * x[0] - beta * x[0].powi(3) + gamma * x[2];
    o[2] = -omega * x[3];
    o[3] = omega * x[2];
}
fn duffing_jac(x: &[f64], p: &[f64], o: &mut [f64]) {
    let (delta, alpha, beta, gamma, omega) = (p[0], p[1], p[2], p[3], p[4]);
    jac!(
        o,
        0.0,
        1.0,
        0.0,
        0.0,
        -alpha - 3.0 * beta * x[0] * x[0],
        -delta,
        gamma,
        0.0,
        0.0,
        0.0,
        0.0,
        -omega,
        0.0,
        0.0,
        omega,
        0.0
    );
}

fn mackey_glass(x: f64, lag: f64, p: &[f64]) -> f64 {
    let (beta, gamma, n) = (p[0], p[1], p[2]);
    beta * lag / (1.0 + lag.abs().powf(n)) - gamma * x
}
fn mackey_glass_dx(_: f64, _: f64, p: &[f64]) -> f64 {
    -p[1]
}
fn mackey_glass_dlag(_: f64, lag: f64, p: &[f64]) -> f64 {
    let (beta, n) = (p[0], p[2]);
    let ln = lag.abs().powf(n);
    beta * (1.0 + ln - n * ln) / ((1.0 + ln) * (1.0 + ln))
}

fn ode(
    name: &str,
    names: &[&'static str],
    params: &[f64],
    rhs: super::RhsFn,
    jac: super::JacobianFn,
    state: &[f64],
    period_hint: f64,
) -> SystemSpec {
    SystemSpec {
        name: name.to_string(),
        dim: state.len(),
        param_names: names.to_vec(),
        params: params.to_vec(),
        dynamics: Dynamics::Ode {
            rhs,
            jacobian: Some(jac),
        },
        default_state: state.to_vec(),
        period_hint,
    }
}

/// The canonical system registry. Every entry is a dissipative chaotic flow
/// (or delay equation) with a positive largest Lyapunov exponent.
pub fn registry() -> Vec<SystemSpec> {
    vec![
        ode(
            "Lorenz",
            &["sigma", "rho", "beta"],
            &[10.0, 28.0, 8.0 / 3.0],
            lorenz,
            lorenz_jac,
            &[-12.6202, -15.3650, 29.2289],
            0.75,
        ),
        ode(
            "Rossler",
            &["a", "b", "c"],
            &[0.2, 0.2, 5.7],
            rossler,
            rossler_jac,
            &[8.4344, -4.5819, 0.3259],
            6.0,
        ),
        ode(
            "Chua",
            &["alpha", "beta", "m0", "m1"],
            &[15.6, 28.0, -8.0 / 7.0, -5.0 / 7.0],
            chua,
            chua_jac,
            &[-1.2960, 0.1693, 1.7586],
            2.0,
        ),
        ode("Thomas", &["b"], &[0.18], thomas, thomas_jac, &[-3.6485, -2.1240, 0.2342], 20.0),
        ode(
            "Halvorsen",
            &["a"],
            &[1.27],
            halvorsen,
            halvorsen_jac,
            &[-7.4517, -8.4309, -0.9735],
            2.5,
        ),
        ode(
            "Dadras",
            &["a", "b", "c", "d", "e"],
            &[3.0, 2.7, 1.7, 2.0, 9.0],
            dadras,
            dadras_jac,
            &[-0.2887, 1.0171, -0.0926],
            2.5,
        ),
        ode(
            "Chen",
            &["a", "b", "c"],
            &[35.0, 3.0, 28.0],
            chen,
            chen_jac,
            &[7.3761, 5.0000, 24.9862],
            0.4,
        ),
        ode(
            "LuChen",
            &["a", "b", "c"],
            &[36.0, 3.0, 20.0],
            lu_chen,
            lu_chen_jac,
            &[9.2618, 10.2216, 18.7029],
            0.5,
        ),
        ode("SprottB", &[], &[], sprott_b, sprott_b_jac, &[2.9311, 1.8165, -0.0570], 5.0),
        ode("SprottC", &[], &[], sprott_c, sprott_c_jac, &[1.5826, 1.0057, 0.6117], 5.0),
        ode("SprottD", &[], &[], sprott_d, sprott_d_jac, &[-2.9580, 1.0018, 1.7064], 6.0),
        ode("SprottF", &["a"], &[0.5], sprott_f, sprott_f_jac, &[-2.0818, -3.0925, 3.3603], 7.0),
        ode("SprottG", &["a"], &[0.4], sprott_g, sprott_g_jac, &[0.4378, 0.0165, 0.2383], 8.0),
        ode(
            "Aizawa",
            &["a", "b", "c", "d", "e", "f"],
            &[0.95, 0.7, 0.6, 3.5, 0.25, 0.1],
            aizawa,
            aizawa_jac,
            &[0.5774, -1.2914, 0.9395],
            2.0,
        ),
        ode(
            "Rucklidge",
            &["kappa", "lambda"],
            &[2.0, 6.7],
            rucklidge,
            rucklidge_jac,
            &[4.2149, -3.3029, 11.2084],
            4.0,
        ),
        ode(
            "GenesioTesi",
            &["a", "b", "c"],
            &[0.44, 1.1, 1.0],
            genesio_tesi,
            genesio_tesi_jac,
            &[0.0558, -0.1670, -0.1111],
            6.0,
        ),
        ode(
            "Duffing",
            &["delta", "alpha", "beta", "gamma", "omega"],
            &[0.05, 0.0, 1.0, 7.5, 1.0],
            duffing,
            duffing_jac,
            &[-0.1973, -0.4704, 0.0489, -0.9934],
            6.3,
        ),
        SystemSpec {
            name: "MackeyGlass".to_string(),
            dim: 1,
            param_names: vec!["beta", "gamma", "n"],
            params: vec![0.2, 0.1, 10.0],
            dynamics: Dynamics::Delay {
                rhs: mackey_glass,
                d_dx: mackey_glass_dx,
                d_dlag: mackey_glass_dlag,
                tau: 17.0,
            },
            default_state: vec![1.2],
            period_hint: 50.0,
        },
    ]
}

pub fn system_by_name(name: &str) -> crate::error::Result<SystemSpec> {
    registry()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| crate::error::Error::UnknownSystem(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{attractor_trajectory, jacobian_fd_discrepancy};

    #[test]
    fn registry_has_required_members() {
        let reg = registry();
        assert!(reg.len() >= 17);
        for name in ["Lorenz", "Rossler", "Chua", "Thomas", "Halvorsen", "Dadras", "Chen", "Duffing", "MackeyGlass"] {
            assert!(reg.iter().any(|s| s.name == name), "{name} missing");
        }
        assert!(reg.iter().filter(|s| s.name.starts_with("Sprott")).count() >= 4);
        assert_eq!(reg.iter().filter(|s| s.is_delay()).count(), 1);
        let lorenz = system_by_name("lorenz").unwrap();
        assert_eq!(lorenz.param("sigma"), Some(10.0));
        assert_eq!(lorenz.param("rho"), Some(28.0));
        assert!((lorenz.param("beta").unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!(system_by_name("MackeyGlass").unwrap().delay().unwrap() > 0.0);
    }

    #[test]
    fn dims_and_rhs_are_finite_at_default_state() {
        for s in registry() {
            assert!(s.dim >= 3 || s.is_delay(), "{}", s.name);
            let mut out = vec![0.0; s.dim];
            let x: Vec<f64> = if s.is_delay() {
                vec![s.default_state[0], s.default_state[0]]
            } else {
                s.default_state.clone()
            };
            s.rhs(&x, &mut out);
            assert!(out.iter().all(|v| v.is_finite()), "{}", s.name);
        }
    }

    #[test]
    fn jacobians_match_finite_differences_on_the_attractor() {
        for s in registry() {
            let traj = attractor_trajectory(&s, 3, 10.0, s.period_hint / 50.0, 500).unwrap();
            for k in 0..10 {
                let i = 17 + k * 47;
                let x: Vec<f64> = if s.is_delay() {
                    let lag = (s.delay().unwrap() / traj.dt).round() as usize;
                    vec![traj.row(i + lag.min(i))[0], traj.row(i)[0]]
                } else {
                    traj.row(i).to_vec()
                };
                let err = jacobian_fd_discrepancy(&s, &x);
                assert!(err < 1e-5, "{}: relative error {err}", s.name);
            }
        }
    }
}
