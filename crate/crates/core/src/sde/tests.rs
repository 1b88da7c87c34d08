use super::*;
use crate::averaging::{build_homogenized, HomogenizationMode, HomogenizedModel};
use crate::models::{build_example6, Example6Params, Field, Intensity, ModelPreset};
use crate::noise::{JumpEvent, LevyMeasureSpec, MarkSampler, Region};
use crate::stats::{mean, std_error, Welford};

fn ex6(epsilon: f64) -> ModelPreset {
    build_example6(Example6Params {
        epsilon,
        ..Example6Params::default()
    })
    .unwrap()
}

fn variance(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Welford>().variance()
}

#[test]
fn null_dynamics_keep_initial_state() {
    let mut p = ex6(0.1);
    p.slow_fast.x0 = vec![0.7];
    p.slow_fast.b1 = Field::zero(1);
    p.slow_fast.sigma1 = Field::zero(1);
    let scheme = StepScheme::for_epsilon(0.01, 0.1, FastMode::ExactOu).unwrap();
    let path = simulate_full(&p.slow_fast, &p.observation, 1.0, &scheme, &mut PathStreams::new(3, 0)).unwrap();
    assert!(path.x.iter().all(|x| x[0] == 0.7));
    assert!(path.z.iter().any(|z| z[0] != 0.0));
}

#[test]
fn observation_without_sensor_or_jumps_is_brownian() {
    let mut p = ex6(0.1);
    p.observation.h = Field::zero(1);
    p.observation.nu3_small = LevyMeasureSpec::zero(Region::U3);
    p.observation.nu3_large = LevyMeasureSpec::zero(Region::U3Complement);
    let scheme = StepScheme::new(0.01, 0.01, FastMode::ExactOu).unwrap();
    let path = simulate_full(&p.slow_fast, &p.observation, 1.0, &scheme, &mut PathStreams::new(5, 2)).unwrap();

    let mut b = ObservationStreams::new(5, 2).brownian;
    let mut y = 0.0;
    let mut inc = [0.0];
    for k in 0..100 {
        fill_gaussian(&mut b, 0.1, &mut inc);
        y += inc[0];
        assert_eq!(path.y[k + 1][0], y);
    }
}

#[test]
fn slow_variance_near_homogenized_value_for_small_epsilon() {
    let p = ex6(0.01);
    let scheme = StepScheme::for_epsilon(0.01, 0.01, FastMode::ExactOu).unwrap();
    let ends: Vec<f64> = (0..5000)
        .map(|i| {
            simulate_signal_endpoint(&p.slow_fast, 1.0, &scheme, &mut SignalStreams::new(11, i))
                .unwrap()[0]
        })
        .collect();
    let v = variance(&ends);
    assert!((v - 1.0).abs() < 0.1, "Var(X_1) = {v}");
}

#[test]
fn determinism_is_bitwise() {
    let p = ex6(0.05);
    let scheme = StepScheme::for_epsilon(0.01, 0.05, FastMode::Euler).unwrap();
    let a = simulate_full(&p.slow_fast, &p.observation, 0.5, &scheme, &mut PathStreams::new(9, 4)).unwrap();
    let b = simulate_full(&p.slow_fast, &p.observation, 0.5, &scheme, &mut PathStreams::new(9, 4)).unwrap();
    assert_eq!(a, b);
    let c = simulate_full(&p.slow_fast, &p.observation, 0.5, &scheme, &mut PathStreams::new(9, 5)).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn stiffness_and_grid_errors() {
    let p = ex6(0.01);
    let coarse = StepScheme::new(0.01, 0.01, FastMode::Euler).unwrap();
    let err = simulate_full(&p.slow_fast, &p.observation, 1.0, &coarse, &mut PathStreams::new(1, 0));
    assert!(matches!(err, Err(Error::StiffnessRejected { .. })));
    let ok = StepScheme::new(0.01, 0.01, FastMode::ExactOu).unwrap();
    assert!(simulate_full(&p.slow_fast, &p.observation, 0.999, &ok, &mut PathStreams::new(1, 0)).is_err());
}

#[test]
fn blow_up_reports_integration_failure() {
    let mut p = ex6(1.0);
    p.slow_fast.b1 = Field::parse(&["exp(exp(x[0]))"]).unwrap();
    p.slow_fast.x0 = vec![3.0];
    let scheme = StepScheme::new(0.1, 0.1, FastMode::ExactOu).unwrap();
    match simulate_full(&p.slow_fast, &p.observation, 5.0, &scheme, &mut PathStreams::new(1, 0)) {
        Err(Error::IntegrationFailure { time, .. }) => assert!(time > 0.0 && time <= 5.0),
        other => panic!("expected integration failure, got {other:?}"),
    }
}

#[test]
fn observation_jumps_are_logged_exactly() {
    let mut p = ex6(0.1);
    p.observation.nu3_small = LevyMeasureSpec::new(4.0, MarkSampler::Uniform { a: -0.9, b: 0.9 }, Region::U3).unwrap();
    p.observation.nu3_large =
        LevyMeasureSpec::new(3.0, MarkSampler::Uniform { a: 1.0, b: 2.0 }, Region::U3Complement).unwrap();
    let scheme = StepScheme::new(0.01, 0.01, FastMode::ExactOu).unwrap();
    let path = simulate_full(&p.slow_fast, &p.observation, 2.0, &scheme, &mut PathStreams::new(21, 0)).unwrap();
    let mut no_jumps = p.clone();
    no_jumps.observation.nu3_small = LevyMeasureSpec::zero(Region::U3);
    no_jumps.observation.nu3_large = LevyMeasureSpec::zero(Region::U3Complement);
    let base = simulate_full(&no_jumps.slow_fast, &no_jumps.observation, 2.0, &scheme, &mut PathStreams::new(21, 0)).unwrap();
    assert!(!path.jumps.observation_small.is_empty());
    assert!(!path.jumps.observation_large.is_empty());

    // Logged increments are the kernels at the logged marks.
    for j in &path.jumps.observation_small {
        assert!(j.mark.abs() < 1.0);
        assert_eq!(j.delta, vec![j.mark]);
    }
    for j in &path.jumps.observation_large {
        assert!(j.mark.abs() >= 1.0);
        assert_eq!(j.delta, vec![j.mark]);
    }
    // The signal does not see observation noise.
    assert_eq!(path.x, base.x);
    // Y minus its jump-free twin moves only by logged jumps and the
    // (constant) small-jump compensator drift.
    let comp = 0.7 * p.observation.nu3_small.integrate(|u| u);
    let mut jump_sum = 0.0;
    for k in 0..path.steps() {
        let in_step: f64 = path
            .jumps
            .observation_small
            .iter()
            .chain(&path.jumps.observation_large)
            .filter(|j| j.step == k)
            .map(|j| j.delta[0])
            .sum();
        jump_sum += in_step;
        for j in path.jumps.observation_small.iter().filter(|j| j.step == k) {
            let t0 = path.times[k];
            assert!(j.time > t0 - 1e-12 && j.time <= path.times[k + 1] + 1e-12);
        }
        let diff = path.y[k + 1][0] - base.y[k + 1][0];
        let expected = jump_sum - comp * path.times[k + 1];
        assert!((diff - expected).abs() < 1e-12, "step {k}: {diff} vs {expected}");
    }
}

#[test]
fn slow_jumps_are_logged_exactly() {
    let mut p = ex6(0.1);
    p.slow_fast.f1 = Field::parse(&["u[0] * cos(x[0])"]).unwrap();
    p.slow_fast.nu1 = LevyMeasureSpec::new(3.0, MarkSampler::Uniform { a: 0.0, b: 1.0 }, Region::U1).unwrap();
    let scheme = StepScheme::new(0.01, 0.01, FastMode::ExactOu).unwrap();
    let path = simulate_full(&p.slow_fast, &p.observation, 2.0, &scheme, &mut PathStreams::new(8, 0)).unwrap();
    assert!(path.jumps.slow.len() > 1);
    for j in &path.jumps.slow {
        let x_left = path.x[j.step][0];
        assert_eq!(j.delta, vec![j.mark * x_left.cos()]);
    }
}

#[test]
fn compensated_observation_is_centered() {
    // lambda = 1 (no thinning), bounded small-jump kernel, no large jumps.
    let mut p = ex6(0.1);
    p.observation.lambda = Intensity::Constant(1.0);
    p.observation.lambda_lower = 1.0;
    p.observation.f3 = Field::parse(&["u[0] + 0.5"]).unwrap();
    p.observation.nu3_small = LevyMeasureSpec::new(3.0, MarkSampler::Uniform { a: -0.5, b: 0.9 }, Region::U3).unwrap();
    p.observation.nu3_large = LevyMeasureSpec::zero(Region::U3Complement);
    let scheme = StepScheme::new(0.05, 0.05, FastMode::ExactOu).unwrap();
    let vals: Vec<f64> = (0..10_000)
        .map(|i| {
            let path = simulate_full(&p.slow_fast, &p.observation, 1.0, &scheme, &mut PathStreams::new(31, i)).unwrap();
            let h_int: f64 = path.bbar_increments.iter().map(|b| b[0]).sum::<f64>();
            let brownian = {
                let mut s = ObservationStreams::new(31, i).brownian;
                let mut total = 0.0;
                let mut inc = [0.0];
                for _ in 0..path.steps() {
                    fill_gaussian(&mut s, 0.05f64.sqrt(), &mut inc);
                    total += inc[0];
                }
                total
            };
            // Y_T - ∫h ds = B_T + compensated jumps.
            path.y.last().unwrap()[0] - (h_int - brownian)
        })
        .collect();
    let (m, se) = (mean(&vals), std_error(&vals));
    assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
}

#[test]
fn frozen_fast_is_ou_with_unit_invariant_variance() {
    let p = ex6(0.1);
    let mut s = RngStream::new(4, 0);
    let path = simulate_frozen_fast(&p.slow_fast, &[0.3], &[0.0], 20_000.0, 0.01, &mut s, FastMode::Euler).unwrap();
    let zs: Vec<f64> = path.z.iter().skip(1000).map(|z| z[0]).collect();
    let v = variance(&zs);
    assert!((v - 1.0).abs() < 0.05, "variance {v}");
    // Lag-s autocorrelation ~ e^{-s}.
    let lag = 50;
    let m = mean(&zs);
    let cov: f64 = zs.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum::<f64>()
        / (zs.len() - lag) as f64;
    let rho = cov / v;
    assert!((rho - (-0.5f64).exp()).abs() < 0.05, "autocorrelation {rho}");
}

#[test]
fn frozen_fast_null_dynamics() {
    let mut p = ex6(0.1);
    p.slow_fast.b2 = Field::zero(1);
    p.slow_fast.sigma2 = Field::zero(1);
    p.slow_fast.exact_ou_sigma = None;
    let path = simulate_frozen_fast(&p.slow_fast, &[0.0], &[2.5], 1.0, 0.01, &mut RngStream::new(1, 1), FastMode::Euler).unwrap();
    assert!(path.z.iter().all(|z| z[0] == 2.5));
}

#[test]
fn exact_ou_step_moments() {
    let mut s = RngStream::new(6, 0);
    let sigma2 = 2f64.sqrt();
    let far: Vec<f64> = (0..100_000).map(|_| exact_ou_step(1.0, 50.0, sigma2, &mut s)).collect();
    assert!(mean(&far).abs() < 0.01);
    assert!((variance(&far) - 1.0).abs() < 0.02);
    let half: Vec<f64> = (0..100_000).map(|_| exact_ou_step(0.0, 2f64.ln(), sigma2, &mut s)).collect();
    assert!((variance(&half) - 0.75).abs() < 0.015);
    let near = exact_ou_step(1.0, 1e-8, sigma2, &mut s);
    assert!((near - 1.0).abs() < 1e-3);
}

fn homogenized(p: &ModelPreset) -> HomogenizedModel {
    build_homogenized(p, HomogenizationMode::ClosedForm, None).unwrap()
}

#[test]
fn homogenized_example6_is_centered() {
    let p = ex6(0.1);
    let h = homogenized(&p);
    let ends: Vec<f64> = (0..4000)
        .map(|i| simulate_homogenized(&h, 1.0, 0.01, &mut RngStream::new(2, i)).unwrap().final_x()[0])
        .collect();
    assert!(mean(&ends).abs() < 3.0 * std_error(&ends));
    assert!((variance(&ends) - 1.0).abs() < 0.08);
}

#[test]
fn homogenized_constant_drift_is_deterministic() {
    let mut p = ex6(0.1);
    p.closed_form = None;
    p.slow_fast.b1 = Field::constant(&[0.3]);
    p.slow_fast.sigma1 = Field::zero(1);
    p.slow_fast.x0 = vec![1.0];
    let h = homogenized(&p);
    let path = simulate_homogenized(&h, 2.0, 0.01, &mut RngStream::new(1, 0)).unwrap();
    for (t, x) in path.times.iter().zip(&path.x) {
        assert!((x[0] - (1.0 + 0.3 * t)).abs() < 1e-12);
    }
}

#[test]
fn homogenized_compensated_jumps_are_centered() {
    let mut p = ex6(0.1);
    p.closed_form = None;
    p.slow_fast.b1 = Field::zero(1);
    p.slow_fast.sigma1 = Field::zero(1);
    p.slow_fast.f1 = Field::constant(&[1.0]);
    p.slow_fast.nu1 = LevyMeasureSpec::new(2.0, MarkSampler::Point(1.0), Region::U1).unwrap();
    let h = homogenized(&p);
    let ends: Vec<f64> = (0..10_000)
        .map(|i| simulate_homogenized(&h, 1.0, 0.1, &mut RngStream::new(3, i)).unwrap().final_x()[0])
        .collect();
    assert!(mean(&ends).abs() < 3.0 * std_error(&ends));
    // Var = rate * T for unit jumps.
    assert!((variance(&ends) - 2.0).abs() < 0.1);
}

#[test]
fn csv_dump_has_header_and_full_precision() {
    let p = ex6(0.1);
    let scheme = StepScheme::new(0.1, 0.1, FastMode::ExactOu).unwrap();
    let path = simulate_full(&p.slow_fast, &p.observation, 1.0, &scheme, &mut PathStreams::new(1, 0)).unwrap();
    let mut buf = Vec::new();
    path.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_0,z_0,y_0");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    for (row, k) in rows.iter().zip(0..) {
        assert_eq!(row[1], path.x[k][0]);
        assert_eq!(row[3], path.y[k][0]);
    }
}

#[test]
fn reference_observation_record_has_expected_jump_rate() {
    let p = ex6(0.1);
    let mut total = 0usize;
    for i in 0..2000 {
        let rec = ObservationRecord::sample_reference(&p.observation, 1.0, 0.01, &mut ObservationStreams::new(4, i)).unwrap();
        total += rec.small_marks.iter().map(Vec::len).sum::<usize>();
        assert_eq!(rec.steps(), 100);
    }
    let rate = total as f64 / 2000.0;
    assert!((rate - 1.0).abs() < 0.07, "rate {rate}");
}

/// Serves Brownian increments aggregated from one fixed fine path, so that
/// runs on different grids see the same Brownian motion.
struct FinePathNoise {
    fine_dt: f64,
    slow: Vec<f64>,
    fast: Vec<f64>,
    slow_pos: usize,
    fast_pos: usize,
}

impl FinePathNoise {
    fn new(seed: u32, fine_dt: f64, horizon: f64) -> Self {
        let count = (horizon / fine_dt).round() as usize;
        let mut s = RngStream::new(77, seed as u64);
        let mut draw = |k| {
            let mut v = vec![0.0; k];
            fill_gaussian(&mut s, fine_dt.sqrt(), &mut v);
            v
        };
        let slow = draw(count);
        let fast = draw(count);
        Self { fine_dt, slow, fast, slow_pos: 0, fast_pos: 0 }
    }

    fn take(fine_dt: f64, src: &[f64], pos: &mut usize, sd: f64) -> f64 {
        let r = (sd * sd / fine_dt).round() as usize;
        let v = src[*pos..*pos + r].iter().sum();
        *pos += r;
        v
    }
}

impl SignalNoise for FinePathNoise {
    fn slow_gauss(&mut self, sd: f64, out: &mut [f64]) {
        out[0] = Self::take(self.fine_dt, &self.slow, &mut self.slow_pos, sd);
    }
    fn fast_gauss(&mut self, sd: f64, out: &mut [f64]) {
        out[0] = Self::take(self.fine_dt, &self.fast, &mut self.fast_pos, sd);
    }
    fn slow_jumps(&mut self, _: &LevyMeasureSpec, _: f64) -> Result<Vec<JumpEvent>> {
        Ok(Vec::new())
    }
    fn fast_jumps(&mut self, _: &LevyMeasureSpec, _: f64, _: f64) -> Result<Vec<JumpEvent>> {
        Ok(Vec::new())
    }
}

/// RMS endpoint errors against a fine-grid reference on shared Brownian
/// paths, for `dt` and `dt / 4`.
fn endpoint_errors(p: &ModelPreset, dt: f64, paths: u32) -> (f64, f64) {
    let fine = dt / 64.0;
    let run = |step: f64, noise: &mut FinePathNoise| {
        let scheme = StepScheme::new(step, step, FastMode::Euler).unwrap();
        let mut stepper = FullStepper::new(&p.slow_fast, &scheme).unwrap();
        let (mut x, mut z) = (p.slow_fast.x0.clone(), p.slow_fast.z0.clone());
        for k in 0..(1.0 / step).round() as usize {
            stepper.step(k, k as f64 * step, &mut x, &mut z, noise, None, None).unwrap();
        }
        x[0]
    };
    let (mut e1, mut e4) = (0.0, 0.0);
    for i in 0..paths {
        let noise = FinePathNoise::new(i, fine, 1.0);
        let reference = run(fine, &mut noise_clone(&noise));
        let coarse = run(dt, &mut noise_clone(&noise));
        let quarter = run(dt / 4.0, &mut noise_clone(&noise));
        e1 += (coarse - reference).powi(2);
        e4 += (quarter - reference).powi(2);
    }
    ((e1 / paths as f64).sqrt(), (e4 / paths as f64).sqrt())
}

fn noise_clone(n: &FinePathNoise) -> FinePathNoise {
    FinePathNoise {
        fine_dt: n.fine_dt,
        slow: n.slow.clone(),
        fast: n.fast.clone(),
        slow_pos: 0,
        fast_pos: 0,
    }
}

#[test]
fn strong_order_one_half_for_multiplicative_noise() {
    let mut p = ex6(1.0);
    p.slow_fast.sigma1 = Field::parse(&["1 + 0.5 * sin(x[0])"]).unwrap();
    p.slow_fast.sigma2 = Field::parse(&["1.4142135623730951 * (1 + 0.5 * cos(z[0]))"]).unwrap();
    p.slow_fast.exact_ou_sigma = None;
    let (e1, e4) = endpoint_errors(&p, 1.0 / 16.0, 400);
    let ratio = e1 / e4;
    assert!((1.5..=2.7).contains(&ratio), "ratio {ratio} ({e1} vs {e4})");
}

#[test]
fn additive_noise_example_converges_at_first_order() {
    let p = ex6(1.0);
    let (e1, e4) = endpoint_errors(&p, 1.0 / 16.0, 400);
    let ratio = e1 / e4;
    assert!(ratio > 3.0, "ratio {ratio} ({e1} vs {e4})");
}
