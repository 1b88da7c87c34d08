use super::*;
use crate::experiments::ks_statistic;
use crate::models::{build_example6, Example6Params, Field, ModelPreset};
use crate::sde::simulate_homogenized;
use crate::stats::mean;

fn ex6() -> ModelPreset {
    build_example6(Example6Params::default()).unwrap()
}

fn measure_at(p: &ModelPreset, x: f64, n: usize, seed: u64) -> EmpiricalMeasure {
    estimate_invariant_measure(&p.slow_fast, &[x], 10.0, n, 10, 0.01, FastMode::Euler, &mut RngStream::new(seed, 0)).unwrap()
}

fn sample_variance(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Welford>().variance()
}

#[test]
fn example6_invariant_moments() {
    let p = ex6();
    let m = measure_at(&p, 0.0, 100_000, 1);
    let zs = m.coordinate(0);
    assert_eq!(m.len(), 100_000);
    assert!(mean(&zs).abs() < 0.02, "mean {}", mean(&zs));
    assert!((sample_variance(&zs) - 1.0).abs() < 0.05, "variance {}", sample_variance(&zs));
    assert!(m.warnings.is_empty(), "{:?}", m.warnings);
}

#[test]
fn exact_ou_sampling_matches_invariant_law() {
    let p = ex6();
    let m = estimate_invariant_measure(&p.slow_fast, &[1.0], 10.0, 50_000, 1, 0.5, FastMode::ExactOu, &mut RngStream::new(2, 0)).unwrap();
    let zs = m.coordinate(0);
    assert!(mean(&zs).abs() < 0.03);
    assert!((sample_variance(&zs) - 1.0).abs() < 0.04);
}

#[test]
fn frozen_null_dynamics_give_point_mass() {
    let mut p = ex6();
    p.slow_fast.b2 = Field::zero(1);
    p.slow_fast.sigma2 = Field::zero(1);
    p.slow_fast.z0 = vec![1.25];
    let m = measure_at(&p, 0.0, 1000, 3);
    assert!(m.samples.iter().all(|z| z[0] == 1.25));
    assert!(m.warnings.is_empty());
}

#[test]
fn disjoint_streams_agree() {
    let p = ex6();
    let a = measure_at(&p, 0.5, 20_000, 10).coordinate(0);
    let b = measure_at(&p, 0.5, 20_000, 11).coordinate(0);
    let se = |v: &[f64]| batch_means_std_error(v, 20);
    assert!((mean(&a) - mean(&b)).abs() < 3.0 * se(&a).hypot(se(&b)));
    let sq = |v: &[f64]| v.iter().map(|z| z * z).collect::<Vec<_>>();
    let (a2, b2) = (sq(&a), sq(&b));
    assert!((mean(&a2) - mean(&b2)).abs() < 3.0 * se(&a2).hypot(se(&b2)));
}

#[test]
fn non_stationary_start_is_flagged() {
    let mut p = ex6();
    p.slow_fast.z0 = vec![40.0];
    let m = estimate_invariant_measure(&p.slow_fast, &[0.0], 0.0, 1000, 1, 0.002, FastMode::Euler, &mut RngStream::new(1, 0)).unwrap();
    assert_eq!(m.warnings.len(), 1);
}

#[test]
fn too_few_samples_rejected() {
    let p = ex6();
    let r = estimate_invariant_measure(&p.slow_fast, &[0.0], 1.0, 999, 1, 0.01, FastMode::Euler, &mut RngStream::new(1, 0));
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn example6_averages() {
    let p = ex6();
    for x in [-2.0, 0.0, 0.7] {
        let m = measure_at(&p, x, 20_000, 4);
        let c = average_coefficients(&p.slow_fast, &p.observation, &[x], &m).unwrap();
        assert!(c.bbar1[0].abs() < 3.0 * c.bbar1_se[0], "bbar1 {} se {}", c.bbar1[0], c.bbar1_se[0]);
        assert_eq!(c.abar, vec![1.0]);
        assert_eq!(c.hbar, vec![f64::atan(x)]);
    }
}

#[test]
fn averaging_checks_dimensions() {
    let p = ex6();
    let m = measure_at(&p, 0.0, 1000, 4);
    assert!(average_coefficients(&p.slow_fast, &p.observation, &[0.0, 1.0], &m).is_err());
    assert!(average_coefficients(&p.slow_fast, &p.observation, &[0.5], &m).is_err());
}

#[test]
fn standard_error_shrinks_like_inverse_root_n() {
    let p = ex6();
    let reps = 200;
    let run = |n: usize| -> (f64, f64) {
        let (vals, ses): (Vec<f64>, Vec<f64>) = (0..reps)
            .map(|r| {
                let m = estimate_invariant_measure(&p.slow_fast, &[0.0], 5.0, n, 5, 0.01, FastMode::Euler, &mut RngStream::new(1000 + n as u64, r)).unwrap();
                let c = average_coefficients(&p.slow_fast, &p.observation, &[0.0], &m).unwrap();
                (c.bbar1[0], c.bbar1_se[0])
            })
            .unzip();
        (sample_variance(&vals).sqrt(), mean(&ses))
    };
    let (sd1, se1) = run(2000);
    let (sd2, se2) = run(4000);
    let target = 0.5f64.sqrt();
    assert!((sd2 / sd1 / target - 1.0).abs() < 0.2, "empirical ratio {}", sd2 / sd1);
    assert!((se2 / se1 / target - 1.0).abs() < 0.2, "reported ratio {}", se2 / se1);
}

#[test]
fn closed_form_homogenized_example6() {
    let p = Example6Params {
        sigma1: -1.5,
        ..Example6Params::default()
    };
    let preset = build_example6(p).unwrap();
    let h = build_homogenized(&preset, HomogenizationMode::ClosedForm, None).unwrap();
    let mut out = [0.0];
    for x in [-3.0, 0.0, 2.0] {
        h.bbar1(&[x], &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        h.sigmabar1(&[x], &mut out).unwrap();
        assert_eq!(out[0], 1.5);
        h.hbar(&[x], &mut out).unwrap();
        assert_eq!(out[0], f64::atan(x));
    }
    assert_eq!(*h.provenance(), Provenance::ClosedForm);
}

#[test]
fn fast_independent_model_is_its_own_average() {
    let mut p = ex6();
    p.closed_form = None;
    p.slow_fast.b1 = Field::parse(&["-x[0]"]).unwrap();
    p.slow_fast.sigma1 = Field::parse(&["2 + cos(x[0])"]).unwrap();
    let h = build_homogenized(&p, HomogenizationMode::ClosedForm, None).unwrap();
    let mut out = [0.0];
    for x in [-1.0, 0.25, 3.0] {
        h.bbar1(&[x], &mut out).unwrap();
        assert_eq!(out[0], -x);
        h.sigmabar1(&[x], &mut out).unwrap();
        assert!((out[0] - (2.0 + f64::cos(x))).abs() < 1e-15);
        h.hbar(&[x], &mut out).unwrap();
        assert_eq!(out[0], f64::atan(x));
    }
    let mut z_dependent = ex6();
    z_dependent.closed_form = None;
    assert!(build_homogenized(&z_dependent, HomogenizationMode::ClosedForm, None).is_err());
}

fn mc_params(seed: u64) -> AveragingParams {
    AveragingParams {
        burn_in: 5.0,
        n_samples: 5000,
        stride: 10,
        dt: 0.01,
        mode: FastMode::Euler,
        seed,
    }
}

#[test]
fn lattice_matches_closed_form() {
    let p = ex6();
    let lattice = Lattice::new(vec![(0..13).map(|i| -3.0 + 0.5 * i as f64).collect()]).unwrap();
    let h = build_homogenized(&p, HomogenizationMode::Lattice(lattice), Some(mc_params(5))).unwrap();
    let (_, nodes) = h.lattice_nodes().unwrap();
    let pooled_se = (nodes.iter().map(|c| c.bbar1_se[0].powi(2)).sum::<f64>() / nodes.len() as f64).sqrt();
    let max_gap = nodes.iter().map(|c| c.bbar1[0].abs()).fold(0.0, f64::max);
    assert!(max_gap < 3.0 * pooled_se, "max gap {max_gap}, pooled se {pooled_se}");
    // Interpolated queries stay between node values; exact parts stay exact.
    let mut out = [0.0];
    h.abar(&[0.3], &mut out).unwrap();
    assert!((out[0] - 1.0).abs() < 1e-15);
    h.hbar(&[0.25], &mut out).unwrap();
    let expected = 0.5 * (f64::atan(0.0) + f64::atan(0.5));
    assert!((out[0] - expected).abs() < 1e-15);
    assert!(matches!(
        h.bbar1(&[3.5], &mut out),
        Err(Error::Extrapolation { axis: 0, .. })
    ));
}

#[test]
fn lattice_covering_adds_guard_band() {
    let l = Lattice::covering(&[-1.0], &[1.0], 11).unwrap();
    assert!((l.axes()[0][0] + 1.2).abs() < 1e-12);
    assert!((l.axes()[0][10] - 1.2).abs() < 1e-12);
    let corners = l.corners(&[1.2]).unwrap();
    assert_eq!(corners, vec![(10, 1.0)]);
}

#[test]
fn on_demand_cache_is_order_independent() {
    let p = ex6();
    let xs = [0.1, -0.4, 0.1 + 1e-8, 0.9];
    let eval = |order: &[usize]| {
        let h = build_homogenized(&p, HomogenizationMode::OnDemand, Some(mc_params(9))).unwrap();
        let mut vals = vec![0.0; xs.len()];
        for &i in order {
            let mut out = [0.0];
            h.bbar1(&[xs[i]], &mut out).unwrap();
            vals[i] = out[0];
        }
        vals
    };
    let a = eval(&[0, 1, 2, 3]);
    let b = eval(&[3, 2, 1, 0]);
    assert_eq!(a, b);
    assert_eq!(a[0], a[2]);
    assert_ne!(a[0], a[1]);
}

#[test]
fn law_of_homogenized_endpoint_ignores_factor_choice() {
    let p = ex6();
    let mut slow = p.slow_fast.clone();
    slow.n = 2;
    slow.l = 2;
    slow.x0 = vec![0.0, 0.0];
    slow.f1 = Field::zero(2);
    let abar = [2.0, 1.0, 1.0, 2.0];
    let chol = factor_diffusion(&abar, 2).unwrap();
    // Symmetric square root: (sqrt(3) + 1) / 2 on the diagonal, (sqrt(3) - 1) / 2 off it.
    let (a, b) = ((3f64.sqrt() + 1.0) / 2.0, (3f64.sqrt() - 1.0) / 2.0);
    let sym = [a, b, b, a];
    assert!(recompose(&sym, 2).iter().zip(&abar).all(|(x, y)| (x - y).abs() < 1e-12));
    assert_ne!(chol, sym.to_vec());

    let model = |f: &[f64]| {
        HomogenizedModel::with_given_factor(slow.clone(), p.observation.clone(), Field::zero(2), Field::constant(f), Field::zero(1)).unwrap()
    };
    let (h1, h2) = (model(&chol), model(&sym));
    let ends = |h: &HomogenizedModel, seed: u64| -> Vec<Vec<f64>> {
        (0..5000)
            .map(|i| simulate_homogenized(h, 1.0, 0.05, &mut RngStream::new(seed, i)).unwrap().final_x().to_vec())
            .collect()
    };
    let (e1, e2) = (ends(&h1, 100), ends(&h2, 200));
    let critical = 1.63 * (2.0f64 / 5000.0).sqrt();
    for c in 0..2 {
        let a: Vec<f64> = e1.iter().map(|x| x[c]).collect();
        let b: Vec<f64> = e2.iter().map(|x| x[c]).collect();
        let ks = ks_statistic(&a, &b).unwrap();
        assert!(ks < critical, "coordinate {c}: KS {ks}");
    }
    // Cross-coordinate law: the sum has variance 6 under both factors.
    let sums = |e: &[Vec<f64>]| e.iter().map(|x| x[0] + x[1]).collect::<Vec<f64>>();
    let ks = ks_statistic(&sums(&e1), &sums(&e2)).unwrap();
    assert!(ks < critical, "sum: KS {ks}");
}
