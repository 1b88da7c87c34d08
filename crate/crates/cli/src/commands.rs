//! One function per subcommand. Each writes its artifacts under the output
//! directory and a short summary to stdout.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use levyfilter::averaging::{average_coefficients, build_homogenized, estimate_invariant_measure, HomogenizationMode};
use levyfilter::experiments::{filter_convergence_study, ConvergenceSettings, DtRule};
use levyfilter::filter::{run_filter, FilterConfig, FilterDynamics};
use levyfilter::models::{validate_assumptions, ModelPreset};
use levyfilter::noise::{derive_seed, RngStream};
use levyfilter::sde::{format_value, simulate_full, PathStreams, StepScheme};

use crate::config::RunConfig;
use crate::svg::{emit_svg, Series};
use crate::{CliError, Command, Common, FilterArgs};

/// Seed tag of the filter particles, distinct from the observation path.
const PARTICLE_TAG: u64 = 1;
const VALIDATION_TAG: u64 = 2;

/// Config file (if any), then `--preset`, then the other flags.
pub fn resolve_config(command: &Command) -> Result<RunConfig, CliError> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig {
            preset: None,
            model: None,
            observation: None,
            run: Default::default(),
        },
    };
    if let Some(p) = &common.preset {
        cfg.preset = Some(p.clone());
    }
    apply_common(&mut cfg, common)?;
    let r = &mut cfg.run;
    match command {
        Command::Simulate { .. } => {}
        Command::Average { x, samples, .. } => {
            if let Some(x) = x {
                r.x = Some(x.clone());
            }
            if let Some(n) = samples {
                r.averaging.n_samples = *n;
            }
            if let Some(s) = common.seed {
                r.averaging.seed = s;
            }
        }
        Command::Filter { filter, homogenized, .. } => {
            apply_filter(r, filter);
            r.homogenized |= *homogenized;
        }
        Command::Converge {
            filter,
            replications,
            martingale_runs,
            ..
        } => {
            apply_filter(r, filter);
            if let Some(n) = replications {
                r.replications = *n;
            }
            if let Some(n) = martingale_runs {
                r.martingale_runs = *n;
            }
        }
        Command::Validate { samples, .. } => {
            if let Some(n) = samples {
                r.validation_samples = *n;
            }
        }
    }
    let preset = cfg.preset()?;
    cfg.run.fast_mode = Some(cfg.fast_mode(&preset));
    Ok(cfg)
}

fn apply_common(cfg: &mut RunConfig, c: &Common) -> Result<(), CliError> {
    let r = &mut cfg.run;
    if let Some(s) = c.seed {
        r.seed = s;
    }
    if let Some(h) = c.horizon {
        r.horizon = h;
    }
    if let Some(dt) = c.dt {
        r.dt = dt;
    }
    if let Some(m) = c.fast_mode {
        r.fast_mode = Some(m);
    }
    if let Some(eps) = &c.eps {
        if eps.is_empty() {
            return Err(CliError::config("--eps", "empty epsilon list"));
        }
        r.epsilons = eps.clone();
        r.epsilon = Some(eps[0]);
    }
    Ok(())
}

fn apply_filter(r: &mut crate::RunParams, f: &FilterArgs) {
    if let Some(n) = f.particles {
        r.particles = n;
    }
    if let Some(p) = &f.psi {
        r.psi = vec![p.clone()];
    }
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let out = &command.common().out;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    write_json(out, "config.json", cfg)?;
    let preset = cfg.preset()?;
    match command {
        Command::Simulate { .. } => simulate(&preset, cfg, out),
        Command::Average { .. } => average(&preset, cfg, out),
        Command::Filter { .. } => filter(&preset, cfg, out),
        Command::Converge { plot, .. } => converge(&preset, cfg, out, *plot),
        Command::Validate { .. } => validate(&preset, cfg, out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path, source })
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Io {
            path: dir.join(name),
            source,
        })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    write_with(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn epsilon_model(preset: &ModelPreset, cfg: &RunConfig) -> ModelPreset {
    match cfg.run.epsilon {
        Some(e) => preset.clone().with_epsilon(e),
        None => preset.clone(),
    }
}

fn scheme(preset: &ModelPreset, cfg: &RunConfig) -> Result<StepScheme, CliError> {
    Ok(StepScheme::for_epsilon(
        cfg.run.dt,
        preset.slow_fast.epsilon,
        cfg.fast_mode(preset),
    )?)
}

fn simulate(preset: &ModelPreset, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = epsilon_model(preset, cfg);
    let scheme = scheme(&model, cfg)?;
    let path = simulate_full(
        &model.slow_fast,
        &model.observation,
        cfg.run.horizon,
        &scheme,
        &mut PathStreams::new(cfg.run.seed, 0),
    )?;
    write_with(out, "path.csv", |w| path.write_csv(w))?;
    write_json(out, "jumps.json", &path.jumps)?;
    let summary = json!({
        "epsilon": model.slow_fast.epsilon,
        "steps": path.steps(),
        "dt_slow": scheme.dt_slow,
        "dt_fast": scheme.dt_fast,
        "final_x": path.final_x(),
        "slow_jumps": path.jumps.slow.len(),
        "fast_jumps": path.jumps.fast.len(),
        "observation_small_jumps": path.jumps.observation_small.len(),
        "observation_large_jumps": path.jumps.observation_large.len(),
        "rejected_observation_jumps": path.jumps.rejected_observation,
    });
    write_json(out, "summary.json", &summary)?;
    println!(
        "simulated {} steps (epsilon {}), final x = {:?}",
        path.steps(),
        model.slow_fast.epsilon,
        path.final_x()
    );
    Ok(())
}

fn average(preset: &ModelPreset, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sf = &preset.slow_fast;
    let p = cfg.run.averaging;
    let x = cfg.run.x.clone().unwrap_or_else(|| sf.x0.clone());
    let mut stream = RngStream::new(p.seed, 0);
    let measure = estimate_invariant_measure(sf, &x, p.burn_in, p.n_samples, p.stride, p.dt, p.mode, &mut stream)?;
    let coeffs = average_coefficients(sf, &preset.observation, &x, &measure)?;
    write_with(out, "invariant_samples.csv", |w| {
        let header: Vec<String> = (0..sf.m).map(|i| format!("z_{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in &measure.samples {
            let row: Vec<String> = s.iter().map(|v| format_value(*v)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    let summary = json!({
        "coefficients": coeffs,
        "samples": measure.len(),
        "burn_in": measure.burn_in_used,
        "stride": measure.thinning_stride,
        "dt": measure.dt,
        "warnings": measure.warnings,
    });
    write_json(out, "averaged.json", &summary)?;
    for w in &measure.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "x = {:?}: bbar1 = {:?} (se {:?}), abar = {:?}, hbar = {:?}",
        coeffs.x, coeffs.bbar1, coeffs.bbar1_se, coeffs.abar, coeffs.hbar
    );
    Ok(())
}

fn filter(preset: &ModelPreset, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = epsilon_model(preset, cfg);
    let scheme = scheme(&model, cfg)?;
    let psis = cfg.psis()?;
    let path = simulate_full(
        &model.slow_fast,
        &model.observation,
        cfg.run.horizon,
        &scheme,
        &mut PathStreams::new(cfg.run.seed, 0),
    )?;
    let record = path.observation_record();
    let hmodel;
    let dynamics = if cfg.run.homogenized {
        hmodel = build_homogenized(&model, HomogenizationMode::ClosedForm, None)?;
        FilterDynamics::Homogenized { model: &hmodel, scheme }
    } else {
        FilterDynamics::Full {
            model: &model.slow_fast,
            obs: &model.observation,
            scheme,
        }
    };
    let config = FilterConfig {
        particles: cfg.run.particles,
        ess_fraction: cfg.run.ess_fraction,
        root_seed: derive_seed(cfg.run.seed, &[PARTICLE_TAG]),
        resample: true,
    };
    let result = run_filter(&dynamics, &record, &psis, &config)?;
    write_with(out, "path.csv", |w| path.write_csv(w))?;
    write_with(out, "filter.csv", |w| result.write_csv(w))?;
    let finals: Vec<_> = psis
        .iter()
        .enumerate()
        .map(|(j, p)| json!({"psi": p, "pi_T": result.final_pi(j)}))
        .collect();
    let summary = json!({
        "dynamics": if cfg.run.homogenized { "homogenized" } else { "full" },
        "epsilon": model.slow_fast.epsilon,
        "particles": cfg.run.particles,
        "final": finals,
        "true_final_x": path.final_x(),
        "resample_times": result.resample_times,
        "diagnostics": result.diagnostics,
    });
    write_json(out, "summary.json", &summary)?;
    for (j, p) in psis.iter().enumerate() {
        println!("pi_T({p}) = {}", result.final_pi(j));
    }
    println!("resamplings: {}", result.diagnostics.resample_count);
    Ok(())
}

fn converge(preset: &ModelPreset, cfg: &RunConfig, out: &Path, plot: bool) -> Result<(), CliError> {
    let r = &cfg.run;
    let settings = ConvergenceSettings {
        epsilons: r.epsilons.clone(),
        replications: r.replications,
        particles: r.particles,
        psis: cfg.psis()?,
        horizon: r.horizon,
        dt_rule: DtRule {
            dt_slow: r.dt,
            fast_mode: cfg.fast_mode(preset),
        },
        seed: r.seed,
        ess_fraction: r.ess_fraction,
        martingale_runs: r.martingale_runs,
    };
    let report = filter_convergence_study(preset, &settings)?;
    write_with(out, "convergence.csv", |w| report.write_csv(w))?;
    write_with(out, "replications.csv", |w| report.write_replications_csv(w))?;
    write_json(out, "summary.json", &report)?;
    if report.insufficient_replications {
        eprintln!("warning: fewer than two replications; standard errors are undefined");
    }
    for e in &report.per_eps {
        for g in &e.gaps {
            println!(
                "epsilon {:<8} {:<20} mean gap {:.6} (se {:.6})  ks_pi {:.4}",
                e.epsilon,
                g.psi.to_string(),
                g.mean_gap,
                g.gap_se,
                g.ks_pi
            );
        }
    }
    if plot {
        let series: Vec<Series> = settings
            .psis
            .iter()
            .enumerate()
            .map(|(j, p)| Series {
                label: format!("mean gap {p}"),
                points: report.per_eps.iter().map(|e| (e.epsilon, e.gaps[j].mean_gap)).collect(),
            })
            .collect();
        let svg = emit_svg(&series, true, true)?;
        write_with(out, "gap_vs_epsilon.svg", |w| w.write_all(svg.as_bytes()))?;
    }
    Ok(())
}

fn validate(preset: &ModelPreset, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut stream = RngStream::new(derive_seed(cfg.run.seed, &[VALIDATION_TAG]), 0);
    let report = validate_assumptions(preset, cfg.run.validation_samples, &mut stream);
    write_json(out, "validation.json", &report)?;
    for c in &report.checks {
        let status = if c.skipped {
            "skipped"
        } else if c.is_violated() {
            "VIOLATED"
        } else {
            "ok"
        };
        println!("{:<40} {status:<8} max violation {:.3e}", c.name, c.max_violation);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("violations: {}", report.violated().count());
    Ok(())
}
