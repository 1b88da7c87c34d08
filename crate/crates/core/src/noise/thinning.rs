use rand::Rng;

use super::{JumpEvent, RngStream};
use crate::error::{Error, Result};

/// Acceptance flag per base event: event `i` is kept with probability
/// `lambda(t_i, state(t_i), u_i)`. One uniform is consumed per event.
///
/// Intensities must lie in (0, 1]; the upper end is the un-thinned limit.
pub fn thinning_decisions<S, L, F>(
    events: &[JumpEvent],
    lambda_fn: L,
    mut state_lookup: F,
    stream: &mut RngStream,
) -> Result<Vec<bool>>
where
    S: AsRef<[f64]>,
    L: Fn(f64, &[f64], f64) -> f64,
    F: FnMut(f64) -> S,
{
    events
        .iter()
        .map(|e| {
            let state = state_lookup(e.time);
            let lam = lambda_fn(e.time, state.as_ref(), e.mark);
            if !(lam > 0.0 && lam <= 1.0) {
                return Err(Error::ModelViolation {
                    what: format!("thinning intensity {lam} outside (0,1]"),
                    point: format!("t={}, x={:?}, u={}", e.time, state.as_ref(), e.mark),
                });
            }
            let u: f64 = stream.random();
            Ok(u < lam)
        })
        .collect()
}

/// The accepted sub-sequence of `events`. The base events stay with the
/// caller for compensator bookkeeping.
pub fn thin_jumps<S, L, F>(
    events: &[JumpEvent],
    lambda_fn: L,
    state_lookup: F,
    stream: &mut RngStream,
) -> Result<Vec<JumpEvent>>
where
    S: AsRef<[f64]>,
    L: Fn(f64, &[f64], f64) -> f64,
    F: FnMut(f64) -> S,
{
    let keep = thinning_decisions(events, lambda_fn, state_lookup, stream)?;
    Ok(events
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| JumpEvent {
            accepted: true,
            ..*e
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_poisson_jumps, LevyMeasureSpec, MarkSampler, Region};
    use crate::stats::Welford;

    fn base(seed: u64, intensity: f64, horizon: f64) -> Vec<JumpEvent> {
        let spec =
            LevyMeasureSpec::new(intensity, MarkSampler::Uniform { a: -1.0, b: 1.0 }, Region::U3)
                .unwrap();
        sample_poisson_jumps(&mut RngStream::new(seed, 0), &spec, horizon, 1.0).unwrap()
    }

    #[test]
    fn constant_half_thinning_halves_count() {
        let w: Welford = (0..20_000)
            .map(|i| {
                let ev = base(i, 1.0, 2.0);
                let kept =
                    thin_jumps(&ev, |_, _, _| 0.5, |_| [0.0], &mut RngStream::new(i, 1)).unwrap();
                kept.len() as f64
            })
            .collect();
        assert!((w.mean() - 1.0).abs() < 4.0 * w.std_error());
    }

    #[test]
    fn near_one_keeps_everything() {
        let mut total = 0;
        let mut kept = 0;
        for i in 0..2_000 {
            let ev = base(i, 3.0, 1.0);
            total += ev.len();
            kept += thin_jumps(&ev, |_, _, _| 1.0 - 1e-9, |_| [0.0], &mut RngStream::new(i, 1))
                .unwrap()
                .len();
        }
        assert_eq!(total, kept);
    }

    #[test]
    fn logistic_at_zero_accepts_half() {
        // lambda = 0.1 + 0.8 / (1 + e^{-x}), x = 0  ->  0.5
        let lam = |_: f64, x: &[f64], _: f64| 0.1 + 0.8 / (1.0 + (-x[0]).exp());
        let mut stream = RngStream::new(77, 0);
        let n = 100_000;
        let events: Vec<JumpEvent> = (0..n)
            .map(|i| JumpEvent {
                time: (i + 1) as f64 / n as f64,
                mark: 0.0,
                accepted: true,
            })
            .collect();
        let keep = thinning_decisions(&events, lam, |_| [0.0], &mut stream).unwrap();
        let frac = keep.iter().filter(|k| **k).count() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 4.0 * se, "{frac}");
    }

    #[test]
    fn out_of_range_intensity_names_point() {
        let ev = [JumpEvent {
            time: 0.25,
            mark: 0.5,
            accepted: true,
        }];
        let err = thin_jumps(&ev, |_, _, _| 1.5, |_| [2.0], &mut RngStream::new(1, 1)).unwrap_err();
        match err {
            Error::ModelViolation { point, .. } => {
                assert!(point.contains("t=0.25") && point.contains("u=0.5"))
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(thin_jumps(&ev, |_, _, _| 0.0, |_| [2.0], &mut RngStream::new(1, 1)).is_err());
    }
}
