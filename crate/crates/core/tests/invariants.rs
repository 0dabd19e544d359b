use chaosbench::invariants::*;
use chaosbench::*;

fn aligned(name: &str) -> (SystemSpec, AlignmentResult) {
    let spec = system_by_name(name).unwrap();
    let a = align_system(&spec, 0, &AlignmentConfig::default()).unwrap();
    (spec, a)
}

fn wide() -> EnsembleSize {
    EnsembleSize {
        trajectories: 60,
        ..EnsembleMode::Long.default_size()
    }
}

#[test]
fn spectrum_sum_matches_mean_trace_for_every_system() {
    for spec in registry() {
        let a = align_system(&spec, 0, &AlignmentConfig::default()).unwrap();
        let q = ensemble_spectrum(&spec, &a, EnsembleMode::Long.default_size(), 0).unwrap();
        let sum: f64 = q.exponents.iter().sum();
        if spec.is_delay() {
            // only the leading exponents are tracked
            assert!(q.exponents.len() == DELAY_EXPONENTS);
            continue;
        }
        assert!(
            (sum - q.mean_trace).abs() < 0.01 * q.mean_trace.abs(),
            "{}: {sum} vs {}",
            spec.name,
            q.mean_trace
        );
    }
}

#[test]
fn three_dimensional_flows_have_one_null_exponent() {
    for spec in registry().into_iter().filter(|s| s.dim == 3 && !s.is_delay()) {
        let a = align_system(&spec, 0, &AlignmentConfig::default()).unwrap();
        let l = ensemble_spectrum(&spec, &a, wide(), 0).unwrap().exponents;
        assert!(l[0] > 0.0, "{}: {l:?}", spec.name);
        assert!(l[1].abs() < 0.05 * l[0], "{}: {l:?}", spec.name);
        assert!(l[2] < 0.0, "{}: {l:?}", spec.name);
    }
}

#[test]
fn lorenz_exponent_and_trace() {
    let (spec, a) = aligned("Lorenz");
    let q = ensemble_spectrum(&spec, &a, wide(), 0).unwrap();
    let sum: f64 = q.exponents.iter().sum();
    assert!((sum + 13.0 + 2.0 / 3.0).abs() < 0.01 * 13.667, "{sum}");
    assert!((q.exponents[0] - 0.9).abs() < 0.05 * 0.9, "{:?}", q.exponents);
    let naive = lyapunov_max_naive_ensemble(&spec, &a, &PerturbationConfig::default(), wide(), 3, 0)
        .unwrap()
        .exponent()
        .unwrap();
    assert!((naive - q.exponents[0]).abs() < 0.05 * q.exponents[0], "{naive}");
}

#[test]
fn lorenz_long_and_short_ensembles_agree() {
    let (spec, a) = aligned("Lorenz");
    let long = ensemble_lyapunov(&spec, &a, EnsembleMode::Long, 0).unwrap();
    let short = ensemble_lyapunov(&spec, &a, EnsembleMode::Short, 1).unwrap();
    assert!(agree_two_sig_figs(long, short), "{long} vs {short}");
}

#[test]
fn rossler_is_chaotic_but_slower_than_lorenz() {
    let (lorenz, la) = aligned("Lorenz");
    let (rossler, ra) = aligned("Rossler");
    let l = ensemble_lyapunov(&lorenz, &la, EnsembleMode::Long, 0).unwrap();
    let r = ensemble_lyapunov(&rossler, &ra, EnsembleMode::Long, 0).unwrap();
    let rn = lyapunov_max_naive_ensemble(
        &rossler,
        &ra,
        &PerturbationConfig::default(),
        EnsembleMode::Long.default_size(),
        3,
        0,
    )
    .unwrap()
    .exponent()
    .unwrap();
    assert!(r > 0.0 && r < l, "{r} vs {l}");
    assert!(rn > 0.0 && rn < l);
}

#[test]
fn lorenz_correlation_dimension() {
    let (spec, a) = aligned("Lorenz");
    let traj = a.trajectory(&spec, 5, 10_000).unwrap();
    let base = CorrelationConfig::default();
    let d = correlation_dimension(&traj, &base).unwrap().dimension;
    assert!((d - 2.05).abs() < 0.15, "{d}");
    let coarse = correlation_dimension(
        &traj,
        &CorrelationConfig {
            n_radii: base.n_radii / 2,
            ..base.clone()
        },
    )
    .unwrap()
    .dimension;
    let fine = correlation_dimension(
        &traj,
        &CorrelationConfig {
            n_radii: base.n_radii * 2,
            ..base
        },
    )
    .unwrap()
    .dimension;
    assert!((d - coarse).abs() < 0.05, "{d} vs {coarse}");
    assert!((d - fine).abs() < 0.05, "{d} vs {fine}");
}

#[test]
fn correlation_dimension_is_rotation_invariant() {
    let (spec, a) = aligned("Lorenz");
    let traj = a.trajectory(&spec, 6, 6000).unwrap();
    let (s1, c1) = 0.7f64.sin_cos();
    let (s2, c2) = 1.9f64.sin_cos();
    let rotated: Vec<f64> = traj
        .rows()
        .flat_map(|r| {
            let (x, y) = (c1 * r[0] - s1 * r[1], s1 * r[0] + c1 * r[1]);
            let (y, z) = (c2 * y - s2 * r[2], s2 * y + c2 * r[2]);
            [x, y, z]
        })
        .collect();
    let rotated = Trajectory::new(rotated, 3, traj.dt, "rotated").unwrap();
    let cfg = CorrelationConfig::default();
    let d = correlation_dimension(&traj, &cfg).unwrap().dimension;
    let dr = correlation_dimension(&rotated, &cfg).unwrap().dimension;
    assert!((d - dr).abs() < 0.05, "{d} vs {dr}");
}

#[test]
fn lorenz_entropy_converges_in_length() {
    let (spec, a) = aligned("Lorenz");
    let traj = a.trajectory(&spec, 7, 8000).unwrap();
    let short = multiscale_entropy(&traj.slice(0, 4000), 5).unwrap();
    let long = multiscale_entropy(&traj, 5).unwrap();
    assert!(!short.infinite && !long.infinite);
    assert!((short.value - long.value).abs() < 0.1 * long.value, "{} vs {}", short.value, long.value);
}

#[test]
fn invariant_set_round_trips_through_json() {
    let (spec, a) = aligned("Lorenz");
    let config = InvariantConfig {
        check_ergodicity: false,
        ..Default::default()
    };
    let set = compute_invariants(&spec, &a, &config).unwrap();
    assert!(set.lyapunov_spectrum.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(set.lyapunov_max, set.lyapunov_spectrum[0]);
    assert!(set.ky_dim >= 0.0 && set.corr_dim >= 0.0);
    assert!((set.ky_dim - 2.06).abs() < 0.05, "{}", set.ky_dim);
    let json = serde_json::to_string(&set).unwrap();
    let back: InvariantSet = serde_json::from_str(&json).unwrap();
    assert_eq!(set, back);
}
