//! Sampled checks of the standing assumptions on coefficients.
//!
//! Violations are report entries, never errors. Lipschitz and growth checks
//! need declared constants and are skipped otherwise.

use rand::Rng;
use serde::Serialize;

use super::ModelPreset;
use crate::expr::Args;
use crate::noise::RngStream;

// Slack for floating-point rounding in the inequalities.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Largest observed `lhs - rhs` (0 when satisfied everywhere).
    pub max_violation: f64,
    pub violations: usize,
    pub samples: usize,
    /// A state where the largest violation was observed.
    pub witness: Option<String>,
    pub skipped: bool,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            max_violation: 0.0,
            violations: 0,
            samples: 0,
            witness: None,
            skipped: false,
        }
    }

    fn skipped(name: &str) -> Self {
        Self {
            skipped: true,
            ..Self::new(name)
        }
    }

    /// Records `lhs <= rhs` (or a strict inequality when `strict`).
    fn record(&mut self, lhs: f64, rhs: f64, strict: bool, witness: impl FnOnce() -> String) {
        self.samples += 1;
        let excess = lhs - rhs;
        let bad = if !lhs.is_finite() {
            true
        } else if strict {
            excess >= 0.0
        } else {
            excess > SLACK * (1.0 + rhs.abs())
        };
        if bad {
            self.violations += 1;
            let magnitude = if lhs.is_finite() { excess.max(0.0) } else { f64::INFINITY };
            if self.witness.is_none() || magnitude > self.max_violation {
                self.max_violation = magnitude;
                self.witness = Some(witness());
            }
        }
    }

    pub fn is_violated(&self) -> bool {
        self.violations > 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub preset: String,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn violated(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.is_violated())
    }

    pub fn is_clean(&self) -> bool {
        self.violated().next().is_none()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// States are drawn uniformly from the cube `[-radius, radius]`.
    pub radius: f64,
    /// Time horizon for time-dependent observation terms.
    pub horizon: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            radius: 10.0,
            horizon: 1.0,
        }
    }
}

pub fn validate_assumptions(
    preset: &ModelPreset,
    sample_count: usize,
    stream: &mut RngStream,
) -> ValidationReport {
    validate_assumptions_with(preset, sample_count, stream, ValidationOptions::default())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn validate_assumptions_with(
    preset: &ModelPreset,
    sample_count: usize,
    stream: &mut RngStream,
    opts: ValidationOptions,
) -> ValidationReport {
    let sf = &preset.slow_fast;
    let ob = &preset.observation;
    let (n, m, l, d) = (sf.n, sf.m, sf.l, ob.d);
    let r = opts.radius;
    let mut warnings = Vec::new();

    let point = |rng: &mut RngStream, dim: usize| -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-r..=r)).collect()
    };

    let names_h1b1 = [
        "slow lipschitz: drift",
        "slow lipschitz: diffusion",
        "slow lipschitz: jump",
    ];
    let names_h1b2 = [
        "fast lipschitz: drift",
        "fast lipschitz: diffusion",
        "fast lipschitz: jump",
    ];
    let name_h2 = "slow growth";

    let mut checks = Vec::new();
    match sf.bounds {
        None => {
            warnings.push("no Lipschitz constants declared; Lipschitz and growth checks skipped".into());
            for name in names_h1b1.iter().chain(&[name_h2]).chain(&names_h1b2) {
                checks.push(CheckResult::skipped(name));
            }
        }
        Some(bounds) => {
            let mut h1b1: Vec<CheckResult> = names_h1b1.iter().map(|s| CheckResult::new(s)).collect();
            let mut h2 = CheckResult::new(name_h2);
            let mut h1b2: Vec<CheckResult> = names_h1b2.iter().map(|s| CheckResult::new(s)).collect();

            let (mut b_a, mut b_b) = (vec![0.0; n], vec![0.0; n]);
            let (mut s_a, mut s_b) = (vec![0.0; n * l], vec![0.0; n * l]);
            let (mut c_a, mut c_b) = (vec![0.0; m], vec![0.0; m]);
            let (mut q_a, mut q_b) = (vec![0.0; m * m], vec![0.0; m * m]);
            let (mut fa, mut fb) = (vec![0.0; n.max(m)], vec![0.0; n.max(m)]);

            for i in 0..sample_count {
                let x1 = point(stream, n);
                let z1 = point(stream, m);
                // Every other pair is local, to probe small increments.
                let (x2, z2) = if i % 2 == 0 {
                    (point(stream, n), point(stream, m))
                } else {
                    let h = 10f64.powf(stream.random_range(-6.0..0.0));
                    (
                        x1.iter().map(|v| v + h * stream.random_range(-1.0..1.0)).collect(),
                        z1.iter().map(|v| v + h * stream.random_range(-1.0..1.0)).collect::<Vec<_>>(),
                    )
                };
                let a1 = Args::new(0.0, &x1, &z1, &[]);
                let a2 = Args::new(0.0, &x2, &z2, &[]);
                let dx2 = dist2(&x1, &x2);
                let dz2 = dist2(&z1, &z2);
                let wit = || format!("x1={x1:?}, z1={z1:?}, x2={x2:?}, z2={z2:?}");

                sf.b1.eval(&a1, &mut b_a);
                sf.b1.eval(&a2, &mut b_b);
                h1b1[0].record(dist2(&b_a, &b_b).sqrt(), bounds.l1 * (dx2.sqrt() + dz2.sqrt()), false, wit);
                sf.sigma1.eval(&a1, &mut s_a);
                sf.sigma1.eval(&a2, &mut s_b);
                h1b1[1].record(dist2(&s_a, &s_b), bounds.l1 * (dx2 + dz2), false, wit);
                let jump_diff = sf.nu1.integrate(|u| {
                    sf.f1.eval(&Args::new(0.0, &x1, &[], &[u]), &mut fa[..n]);
                    sf.f1.eval(&Args::new(0.0, &x2, &[], &[u]), &mut fb[..n]);
                    dist2(&fa[..n], &fb[..n])
                });
                h1b1[2].record(jump_diff, bounds.l1 * dx2, false, wit);

                let jump_size = sf.nu1.integrate(|u| {
                    sf.f1.eval(&Args::new(0.0, &x1, &[], &[u]), &mut fa[..n]);
                    norm2(&fa[..n])
                });
                h2.record(norm2(&b_a) + norm2(&s_a) + jump_size, bounds.l2, false, || {
                    format!("x={x1:?}, z={z1:?}")
                });

                sf.b2.eval(&a1, &mut c_a);
                sf.b2.eval(&a2, &mut c_b);
                h1b2[0].record(dist2(&c_a, &c_b).sqrt(), bounds.l3 * (dx2.sqrt() + dz2.sqrt()), false, wit);
                sf.sigma2.eval(&a1, &mut q_a);
                sf.sigma2.eval(&a2, &mut q_b);
                h1b2[1].record(dist2(&q_a, &q_b), bounds.l3 * (dx2 + dz2), false, wit);
                let jump_diff = sf.nu2.integrate(|u| {
                    sf.f2.eval(&Args::new(0.0, &x1, &z1, &[u]), &mut fa[..m]);
                    sf.f2.eval(&Args::new(0.0, &x2, &z2, &[u]), &mut fb[..m]);
                    dist2(&fa[..m], &fb[..m])
                });
                h1b2[2].record(jump_diff, bounds.l3 * (dx2 + dz2), false, wit);
            }
            checks.extend(h1b1);
            checks.push(h2);
            checks.extend(h1b2);
        }
    }

        let mut h_check = CheckResult::new("sensor bounded");
    let mut f3_check = CheckResult::new("small-jump kernel square integrable");
    let mut lam_check = CheckResult::new("intensity in [lower, 1)");
    let mut region_check = CheckResult::new("observation jump regions");
    let mut hv = vec![0.0; d];
    let mut f3v = vec![0.0; d];
    for _ in 0..sample_count {
        let x = point(stream, n);
        let z = point(stream, m);
        let t = stream.random_range(0.0..=opts.horizon);
        ob.h.eval(&Args::new(t, &x, &z, &[]), &mut hv);
        h_check.record(norm2(&hv).sqrt(), ob.h_bound, false, || format!("x={x:?}, z={z:?}"));

        let energy = opts.horizon
            * ob.nu3_small.integrate(|u| {
                ob.f3.eval(&Args::new(t, &[], &[], &[u]), &mut f3v);
                norm2(&f3v)
            });
        f3_check.record(if energy.is_finite() { 0.0 } else { f64::INFINITY }, 0.0, false, || {
            format!("t={t}")
        });

        if !ob.nu3_small.is_null() {
            let u = ob.nu3_small.marks().sample(stream);
            let lam = ob.lambda.eval(t, &x, u);
            let wit = || format!("t={t}, x={x:?}, u={u}, lambda={lam}");
            lam_check.record(ob.lambda_lower, lam, false, wit);
            lam_check.samples -= 1;
            lam_check.record(lam, 1.0, true, wit);
        }
    }
    if !(ob.lambda_lower > 0.0 && ob.lambda_lower < 1.0) {
        lam_check.record(ob.lambda_lower, 1.0, true, || {
            format!("declared lower bound l={}", ob.lambda_lower)
        });
    }
    let (lo, hi) = ob.nu3_small.marks().support();
    if !ob.nu3_small.is_null() {
        region_check.record(lo.abs().max(hi.abs()), ob.u3_radius, true, || {
            format!("nu3_small support [{lo}, {hi}]")
        });
    }
    let (lo, hi) = ob.nu3_large.marks().support();
    if !ob.nu3_large.is_null() {
        let inner = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
        region_check.record(ob.u3_radius, inner, false, || {
            format!("nu3_large support [{lo}, {hi}]")
        });
    }
    checks.extend([h_check, f3_check, lam_check, region_check]);
    warnings.push(
        "ergodicity of the frozen fast process is not checked here; see averaging diagnostics"
            .into(),
    );

    ValidationReport {
        preset: preset.name.clone(),
        checks,
        warnings,
    }
}
