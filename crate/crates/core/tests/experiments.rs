use levyfilter::experiments::*;
use levyfilter::filter::Psi;
use levyfilter::models::{build_example6, build_linear_gaussian, Example6Params, Field, Intensity, ModelPreset};
use levyfilter::noise::{LevyMeasureSpec, MarkSampler, Region};
use levyfilter::sde::FastMode;
use levyfilter::stats::mean;
use levyfilter::Error;

fn ex6() -> ModelPreset {
    build_example6(Example6Params::default()).unwrap()
}

fn exact(dt: f64) -> DtRule {
    DtRule { dt_slow: dt, fast_mode: FastMode::ExactOu }
}

/// `h = 0`, constant intensity and a unit-rate small-jump measure.
fn pure_thinning(lambda: f64) -> ModelPreset {
    let mut p = ex6();
    p.observation.h = Field::zero(1);
    p.closed_form.as_mut().unwrap().hbar = Field::zero(1);
    p.observation.lambda = Intensity::Constant(lambda);
    p.observation.lambda_lower = lambda;
    p.observation.nu3_small = LevyMeasureSpec::new(1.0, MarkSampler::Uniform { a: -0.9, b: 0.9 }, Region::U3).unwrap();
    p
}

#[test]
fn poisson_series_is_one() {
    for (lambda, rate, t) in [(0.5, 1.0, 1.0), (0.1, 3.0, 2.0), (1.0, 5.0, 1.0)] {
        assert!((poisson_likelihood_mean(lambda, rate, t) - 1.0).abs() < 1e-13);
    }
}

#[test]
fn uninformative_likelihood_is_exactly_one() {
    let r = martingale_check(&pure_thinning(1.0), 0.1, 200, 1.0, exact(0.01), 3).unwrap();
    assert_eq!(r.lambda_mean, 1.0);
    assert_eq!(r.lambda_se, 0.0);
    assert_eq!(r.inverse_mean, 1.0);
    assert_eq!(r.max_inverse_rho0, Some(1.0));
}

#[test]
fn thinning_likelihood_matches_poisson_series() {
    let r = martingale_check(&pure_thinning(0.5), 0.1, 4000, 1.0, exact(0.01), 5).unwrap();
    let target = poisson_likelihood_mean(0.5, 1.0, 1.0);
    assert!((r.lambda_mean - target).abs() < 3.0 * r.lambda_se, "{r:?}");
    assert!((r.inverse_mean - target).abs() < 3.0 * r.inverse_se, "{r:?}");
}

#[test]
fn example6_likelihood_has_mean_one_both_ways() {
    let r = martingale_check(&ex6(), 0.1, 2000, 1.0, exact(0.01), 8).unwrap();
    assert!((r.lambda_mean - 1.0).abs() < 3.0 * r.lambda_se, "{r:?}");
    assert!((r.inverse_mean - 1.0).abs() < 3.0 * r.inverse_se, "{r:?}");
    let m = r.max_inverse_rho0.unwrap();
    assert!(m.is_finite() && m > 0.0);
}

#[test]
fn stationary_variance_root() {
    assert!((stationary_variance(1.0, 3f64.sqrt()) - 1.0).abs() < 1e-15);
    // The Riccati equation settles on the root.
    let lg = LinearGaussian { a: 1.0, c: 0.0, sigma: 3f64.sqrt(), x0: 0.0 };
    let (_, p) = kalman_bucy(&lg, &vec![0.0; 10_000], 1e-3, 0.0, 0.0);
    assert!((p.last().unwrap() - 1.0).abs() < 0.01);
}

#[test]
fn noise_free_kalman_follows_the_ode() {
    let lg = LinearGaussian { a: 2.0, c: 1.0, sigma: 0.0, x0: 3.0 };
    let dy = vec![0.37; 500];
    let (m, p) = kalman_bucy(&lg, &dy, 1e-3, 3.0, 0.0);
    assert!(p.iter().all(|&v| v == 0.0));
    let mut x = 3.0;
    for mk in &m[1..] {
        x += (-2.0 * x + 1.0) * 1e-3;
        assert_eq!(*mk, x);
    }
}

#[test]
fn kalman_oracle_rejects_nonlinear_models() {
    assert!(matches!(LinearGaussian::from_preset(&ex6()), Err(Error::InvalidArgument(_))));
    let mut p = build_linear_gaussian(1.0, 0.0, 1.0, 0.0).unwrap();
    p.slow_fast.b1 = Field::parse(&["-x[0] + 0.1 * x[0] * x[0]"]).unwrap();
    assert!(LinearGaussian::from_preset(&p).is_err());
    let lg = LinearGaussian::from_preset(&build_linear_gaussian(1.5, 0.5, 2.0, 0.3).unwrap()).unwrap();
    assert_eq!(lg, LinearGaussian { a: 1.5, c: 0.5, sigma: 2.0, x0: 0.3 });
}

#[test]
fn particle_filter_tracks_kalman_bucy() {
    let p = build_linear_gaussian(1.0, 0.5, 1.0, 0.0).unwrap();
    let r = kalman_comparison(&p, 2000, 1.0, 1e-3, 11).unwrap();
    assert_eq!(r.times.len(), 1001);
    assert!(r.oracle_variance[1..].iter().all(|&v| v > 0.0));
    assert!(r.rmse < 0.05, "rmse {}", r.rmse);
}

#[test]
fn signal_study_is_reproducible_and_detects_equal_laws() {
    let p = build_linear_gaussian(1.0, 0.0, 1.0, 0.0).unwrap();
    let a = signal_convergence_study(&p, &[0.5, 0.1], 400, 1.0, exact(0.01), 4).unwrap();
    let b = signal_convergence_study(&p, &[0.5, 0.1], 400, 1.0, exact(0.01), 4).unwrap();
    assert_eq!(a.ks, b.ks);
    // The signal does not depend on the fast variable: only sampling noise.
    assert!(a.ks.iter().all(|&k| k < ks_critical_1pct(400, 400)));
}

#[test]
fn signal_ks_noise_floor_shrinks_like_inverse_root_n() {
    // A fast-independent signal has the same law for every epsilon, so the
    // KS statistic is pure two-sample noise with mean ~ c / sqrt(n).
    let p = build_linear_gaussian(1.0, 0.0, 1.0, 0.0).unwrap();
    let floor = |n: usize| {
        let ks: Vec<f64> = (0..30)
            .map(|s| signal_convergence_study(&p, &[0.01], n, 0.5, exact(0.05), 100 + s).unwrap().ks[0])
            .collect();
        mean(&ks)
    };
    let ratio = floor(400) / floor(1600);
    assert!((ratio / 2.0 - 1.0).abs() < 0.3, "ratio {ratio}");
}

fn settings(replications: usize) -> ConvergenceSettings {
    ConvergenceSettings {
        epsilons: vec![0.5, 0.1],
        replications,
        particles: 100,
        psis: vec![Psi::Tanh, Psi::Indicator { a: -0.5, b: 0.5 }],
        horizon: 0.5,
        dt_rule: exact(0.01),
        seed: 9,
        ess_fraction: 0.5,
        martingale_runs: 50,
    }
}

#[test]
fn convergence_report_shape_and_bounds() {
    let r = filter_convergence_study(&ex6(), &settings(8)).unwrap();
    assert!(!r.insufficient_replications);
    assert_eq!(r.per_eps.len(), 2);
    for e in &r.per_eps {
        for g in &e.gaps {
            let (lo, hi) = g.psi.bounds();
            assert!(g.mean_gap >= 0.0 && g.mean_gap <= hi - lo);
            assert!(g.gap_se > 0.0);
            assert_eq!(g.pi_full.len(), 8);
        }
    }
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("epsilon,psi,mean_gap,gap_se,ks_pi,ks_signal,martingale_mean,martingale_se\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    let again = filter_convergence_study(&ex6(), &settings(8)).unwrap();
    let mut csv2 = Vec::new();
    again.write_csv(&mut csv2).unwrap();
    assert_eq!(csv.as_bytes(), &csv2[..]);
}

#[test]
fn single_replication_is_flagged() {
    let r = filter_convergence_study(&ex6(), &settings(1)).unwrap();
    assert!(r.insufficient_replications);
}

#[test]
fn fast_independent_model_has_no_filter_gap() {
    // Full and homogenized dynamics coincide and share particle noise.
    let p = build_linear_gaussian(1.0, 0.5, 1.0, 0.0).unwrap();
    let r = filter_convergence_study(&p, &settings(6)).unwrap();
    for e in &r.per_eps {
        for g in &e.gaps {
            assert!(g.mean_gap < 1e-9, "{}", g.mean_gap);
        }
    }
}

#[test]
fn convergence_rejects_bad_epsilon_grids() {
    let mut s = settings(2);
    s.epsilons = vec![0.1, 0.5];
    assert!(filter_convergence_study(&ex6(), &s).is_err());
    s.epsilons = vec![];
    assert!(filter_convergence_study(&ex6(), &s).is_err());
}
