use chaosbench::analysis::*;
use chaosbench::harness::{generate_split, BenchmarkRecord, ExperimentConfig, SystemContext};
use chaosbench::metrics::{evaluate, DoublingTime, ErrorCurve, MetricContext, MetricKind};
use chaosbench::models::{Hyper, ModelKind};
use chaosbench::{system_by_name, Trajectory};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Panel with one horizon from `errors[model][system]`.
fn panel(errors: &[Vec<f64>]) -> RankPanel {
    RankPanel::new(
        (0..errors.len()).map(|i| format!("m{i}")).collect(),
        (0..errors[0].len()).map(|k| format!("s{k}")).collect(),
        vec![1.0],
        errors.iter().map(|m| m.iter().map(|e| vec![*e]).collect()).collect(),
    )
    .unwrap()
}

fn close(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() < 1e-12)
}

#[test]
fn identical_and_reversed_rankings() {
    let p = panel(&[vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0], vec![4.0, 3.0, 2.0, 1.0]]);
    let c = rank_correlation_matrix(&p, 0).unwrap();
    assert!(close(c[0][1], 1.0));
    assert!((c[0][2].unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn single_transposition_gives_point_eight() {
    let p = panel(&[
        vec![1.0, 2.0, 3.0, 4.0],
        vec![1.0, 2.0, 4.0, 3.0],
        vec![2.0, 1.0, 3.0, 4.0],
        vec![1.0, 3.0, 2.0, 4.0],
    ]);
    let c = rank_correlation_matrix(&p, 0).unwrap();
    assert!((c[0][1].unwrap() - 0.8).abs() < 1e-12);
    let mutual = mutual_correlation(&p, 0).unwrap();
    for (row, m) in c.iter().zip(&mutual) {
        assert_eq!(row.iter().copied().sum::<Option<f64>>(), *m);
    }
}

#[test]
fn identical_models_have_mutual_correlation_k() {
    let e = vec![0.3, 0.1, 0.7, 0.2, 0.9];
    let p = panel(&vec![e; 4]);
    assert!(mutual_correlation(&p, 0).unwrap().into_iter().all(|m| close(m, 4.0)));
}

#[test]
fn independent_model_has_mutual_correlation_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let errors: Vec<Vec<f64>> = (0..4).map(|_| (0..400).map(|_| rng.random()).collect()).collect();
    let m = mutual_correlation(&panel(&errors), 0).unwrap();
    for v in m {
        assert!((v.unwrap() - 1.0).abs() < 0.3);
    }
}

#[test]
fn zero_variance_model_is_undefined() {
    let p = panel(&[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]]);
    let c = rank_correlation_matrix(&p, 0).unwrap();
    assert_eq!(c[0][0], None);
    assert_eq!(c[0][1], None);
    assert_eq!(mutual_correlation(&p, 0).unwrap()[0], None);
    assert!(rank_correlation_matrix(&panel(&[vec![1.0, 2.0]]), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_is_symmetric_and_monotone_invariant(
        errors in proptest::collection::vec(proptest::collection::vec(0.01f64..100.0, 6), 2..6)
    ) {
        let p = panel(&errors);
        let c = rank_correlation_matrix(&p, 0).unwrap();
        for i in 0..c.len() {
            prop_assert_eq!(c[i][i], Some(1.0));
            for j in 0..c.len() {
                prop_assert_eq!(c[i][j], c[j][i]);
            }
        }
        let warped: Vec<Vec<f64>> = errors.iter().map(|m| m.iter().map(|e| e.ln() * 3.0 + e.powi(3)).collect()).collect();
        prop_assert_eq!(&rank_correlation_matrix(&panel(&warped), 0).unwrap(), &c);
        let m = mutual_correlation(&p, 0).unwrap();
        for (row, v) in c.iter().zip(&m) {
            prop_assert_eq!(row.iter().copied().sum::<Option<f64>>(), *v);
        }
    }
}

#[test]
fn errors_equal_to_lambda_correlate_perfectly() {
    let lam = vec![0.9, 0.07, 0.46, 2.0, 0.2, 0.1];
    let p = panel(&[lam.clone(), lam.iter().map(|l| l * 10.0).collect()]);
    let r = correlate_with_lyapunov(&p, &lam, 0, 200, 0).unwrap();
    assert!(close(r.rho, 1.0));
    let (lo, hi) = r.ci.unwrap();
    assert!(close(Some(lo), 1.0) && close(Some(hi), 1.0));
}

fn null_panel(k: usize, rng: &mut ChaCha8Rng) -> (RankPanel, Vec<f64>) {
    let lam: Vec<f64> = (0..k).map(|i| 0.1 + i as f64).collect();
    let errors: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut e = lam.clone();
            e.shuffle(rng);
            e
        })
        .collect();
    (panel(&errors), lam)
}

#[test]
fn permuted_errors_have_an_interval_around_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (p, lam) = null_panel(17, &mut rng);
    let r = correlate_with_lyapunov(&p, &lam, 0, DEFAULT_BOOTSTRAP, 1).unwrap();
    let (lo, hi) = r.ci.unwrap();
    assert!(lo < 0.0 && hi > 0.0, "{lo} {hi}");
}

#[test]
fn interval_narrows_with_more_systems() {
    // averaged over panels so one unlucky permutation cannot decide it
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let width = |k: usize, rng: &mut ChaCha8Rng| {
        let w: Vec<f64> = (0..20)
            .map(|s| {
                let (p, lam) = null_panel(k, rng);
                let (lo, hi) = correlate_with_lyapunov(&p, &lam, 0, 200, s).unwrap().ci.unwrap();
                hi - lo
            })
            .collect();
        chaosbench::stats::mean(&w)
    };
    let (w10, w17) = (width(10, &mut rng), width(17, &mut rng));
    assert!(w17 < w10, "{w10} {w17}");
}

#[test]
fn bootstrap_requires_enough_draws() {
    let lam = vec![1.0, 2.0, 3.0];
    assert!(correlate_with_lyapunov(&panel(&[lam.clone()]), &lam, 0, 10, 0).is_err());
}

fn record(system: &str, model: ModelKind, seed: u64, smape_1lt: f64, walltime: f64, vpt: f64) -> BenchmarkRecord {
    BenchmarkRecord {
        system: system.into(),
        model,
        seed,
        tuned_hyper: Hyper::Lookback(2),
        tuning_failed: false,
        tuning_scores: Vec::new(),
        error_curves: vec![ErrorCurve {
            metric: MetricKind::Smape,
            horizons: vec![0.5, 1.0, 2.0],
            values: vec![Some(smape_1lt / 2.0), Some(smape_1lt), Some(smape_1lt * 1.5)],
            lyapunov_scale: 1.0,
            divergent_from: None,
        }],
        invariant_recovery: None,
        train_walltime_seconds: walltime,
        divergence_flag: false,
        forecast_len: 5000,
        history_len: 1000,
        lyapunov_max: 0.5,
        t_peak: 1.0,
        valid_prediction_time: vpt,
        error_doubling_time: DoublingTime {
            value: vpt * 1.1,
            never_doubled: false,
        },
        failure: None,
    }
}

#[test]
fn walltime_correlation_orientation() {
    // faster always worse: error falls as walltime grows
    let worse: Vec<_> = (0..12)
        .map(|i| record("s", ModelKind::ALL[i % 13], i as u64, 100.0 - i as f64, 0.1 * (i + 1) as f64, 1.0))
        .collect();
    let r = error_vs_walltime(&worse, 200, 0).unwrap();
    assert!(close(r.overall.rho, -1.0));
    let better: Vec<_> = (0..12)
        .map(|i| record("s", ModelKind::ALL[i % 13], i as u64, 1.0 + i as f64, 0.1 * (i + 1) as f64, 1.0))
        .collect();
    assert!(close(error_vs_walltime(&better, 200, 0).unwrap().overall.rho, 1.0));
    assert!(error_vs_walltime(&better[..5], 200, 0).is_err());
}

#[test]
fn horizon_statistics_of_a_single_record() {
    let r = record("Lorenz", ModelKind::Nvar, 0, 5.0, 0.01, 1.7);
    let h = horizon_statistics(std::slice::from_ref(&r)).unwrap();
    assert_eq!(h.vpt_mean, 1.7);
    assert_eq!(h.vpt_std, 0.0);
    assert!((h.best[0].valid_prediction_time_natural - 1.7 / 0.5).abs() < 1e-12);
}

#[test]
fn best_model_per_system_is_selected() {
    let rs = vec![
        record("A", ModelKind::NaiveMean, 0, 100.0, 0.01, 0.1),
        record("A", ModelKind::Nvar, 0, 5.0, 0.01, 2.0),
        record("B", ModelKind::Esn, 0, 5.0, 0.01, 4.0),
        record("B", ModelKind::NaiveDrift, 0, 50.0, 0.01, 0.5),
    ];
    let h = horizon_statistics(&rs).unwrap();
    let models: Vec<_> = h.best.iter().map(|b| b.model).collect();
    assert_eq!(models, vec![ModelKind::Nvar, ModelKind::Esn]);
    assert_eq!(h.vpt_mean, 3.0);
    assert_eq!(h.vpt_std, 1.0);
}

#[test]
fn panels_build_from_records() {
    let mut rs = Vec::new();
    for (k, sys) in ["A", "B", "C"].iter().enumerate() {
        for seed in 0..3 {
            rs.push(record(sys, ModelKind::Nvar, seed, k as f64 + seed as f64, 0.1, 1.0));
            rs.push(record(sys, ModelKind::NaiveMean, seed, 10.0 - k as f64, 0.1, 1.0));
        }
    }
    let p = RankPanel::from_records(&rs, MetricKind::Smape, &[1.0]).unwrap();
    assert_eq!(p.systems, vec!["A", "B", "C"]);
    assert_eq!(p.models, vec!["NaiveMean", "NVAR"]);
    // medians over seeds 0..3 are k + 1
    assert_eq!(p.column(1, 0), vec![1.0, 2.0, 3.0]);
    let c = rank_correlation_matrix(&p, 0).unwrap();
    assert!((c[0][1].unwrap() + 1.0).abs() < 1e-12);
}

fn lorenz_truth() -> (SystemContext, Trajectory) {
    let config = ExperimentConfig::default();
    let ctx = SystemContext::prepare(&system_by_name("Lorenz").unwrap(), &config).unwrap();
    let truth = generate_split(&ctx, &config, 0).unwrap().truth();
    (ctx, truth)
}

#[test]
fn data_driven_lyapunov_matches_the_equations_on_lorenz() {
    let (ctx, truth) = lorenz_truth();
    let l = lyapunov_from_data(&truth, &DataLyapunovConfig::default()).unwrap();
    assert_eq!(l.len(), 3);
    let rel = (l[0] - ctx.lyapunov_max).abs() / ctx.lyapunov_max;
    assert!(rel < 0.15, "{} vs {}", l[0], ctx.lyapunov_max);
}

#[test]
fn recovery_of_truth_is_exact() {
    let (_, truth) = lorenz_truth();
    let r = invariant_recovery(&truth, &truth, &RecoveryConfig::default()).unwrap();
    assert!(!r.partial);
    assert_eq!(r.power_spectrum, Some(0.0));
    assert_eq!(r.corr_dim, Some(0.0));
    assert_eq!(r.lyapunov_max, Some(0.0));
    assert_eq!(r.lyapunov_spectrum, Some(0.0));
}

#[test]
fn constant_forecast_has_undefined_lyapunov_recovery() {
    let (_, truth) = lorenz_truth();
    let mean: Vec<f64> = (0..3).map(|c| chaosbench::stats::mean(&truth.column(c))).collect();
    let flat = Trajectory::new(mean.repeat(truth.len()), 3, truth.dt, "flat").unwrap();
    let r = invariant_recovery(&truth, &flat, &RecoveryConfig::default()).unwrap();
    assert_eq!(r.lyapunov_max, None);
    assert_eq!(r.lyapunov_spectrum, None);
    assert_eq!(r.corr_dim, None);
    assert_eq!(r.power_spectrum, None);
}

#[test]
fn spectra_ignore_phase() {
    let (ctx, _) = lorenz_truth();
    let config = ExperimentConfig::default();
    let long = ctx.alignment.trajectory(&ctx.spec, 77, 5025).unwrap();
    let truth = long.slice(0, 5000);
    let shifted = long.slice(25, 5025);
    let r = invariant_recovery(&truth, &shifted, &RecoveryConfig {
        min_points: usize::MAX,
        ..config.recovery
    })
    .unwrap();
    let s = evaluate(MetricKind::Smape, &truth, &shifted, &MetricContext::default()).unwrap();
    assert!(r.partial);
    let spec = r.power_spectrum.unwrap();
    assert!(spec < 0.1, "{spec}");
    assert!(s > 50.0, "{s}");
}

#[test]
fn truncated_forecasts_are_partial() {
    let (_, truth) = lorenz_truth();
    let r = invariant_recovery(&truth, &truth.slice(0, 500), &RecoveryConfig::default()).unwrap();
    assert!(r.partial);
    assert_eq!(r.corr_dim, None);
    assert_eq!(r.power_spectrum, Some(0.0));
}
