use crate::stats::pairwise_sum;

/// Normalized weights `exp(w_i - max) / sum` from log-weights.
pub fn normalized_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total = pairwise_sum(&raw);
    raw.into_iter().map(|w| w / total).collect()
}

/// `(sum w)^2 / sum w^2`, in `[1, N]`.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let w = normalized_weights(log_weights);
    let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    let ess = 1.0 / pairwise_sum(&sq);
    ess.clamp(1.0, log_weights.len() as f64)
}

/// Ancestor indices of `count` offspring drawn by systematic resampling
/// with points `offset + k / count`, `offset` in `[0, 1/count)`.
pub fn systematic_resample(weights: &[f64], count: usize, offset: f64) -> Vec<usize> {
    debug_assert!(offset >= 0.0 && offset < 1.0 / count as f64);
    let last = weights.len() - 1;
    let mut ancestors = Vec::with_capacity(count);
    let mut j = 0;
    let mut cumulative = weights[0];
    for k in 0..count {
        let u = offset + k as f64 / count as f64;
        while u >= cumulative && j < last {
            j += 1;
            cumulative += weights[j];
        }
        ancestors.push(j);
    }
    ancestors
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(ancestors: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &a in ancestors {
            c[a] += 1;
        }
        c
    }

    #[test]
    fn two_particle_enumeration() {
        for i in 0..1000 {
            let offset = 0.25 * i as f64 / 1000.0;
            let a = systematic_resample(&[0.75, 0.25], 4, offset);
            assert_eq!(counts(&a, 2), vec![3, 1], "offset {offset}");
        }
    }

    #[test]
    fn equal_weights_keep_every_particle() {
        let n = 37;
        let w = vec![1.0 / n as f64; n];
        for offset in [1e-9, 0.5 / n as f64, 0.999 / n as f64] {
            let a = systematic_resample(&w, n, offset);
            assert_eq!(a, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dominant_particle_takes_all() {
        let n = 10;
        let mut lw = vec![-40.0; n];
        lw[3] = 0.0;
        let w = normalized_weights(&lw);
        assert!(w[3] > 1.0 - 1.0 / n as f64);
        let a = systematic_resample(&w, n, 0.05);
        assert!(a.iter().all(|&i| i == 3));
    }

    #[test]
    fn ess_extremes() {
        assert!((effective_sample_size(&[0.0; 8]) - 8.0).abs() < 1e-12);
        assert!((effective_sample_size(&[0.0, -1000.0, -1000.0]) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ess_in_range(lw in proptest::collection::vec(-50.0f64..50.0, 1..200)) {
            let ess = effective_sample_size(&lw);
            prop_assert!(ess >= 1.0 && ess <= lw.len() as f64);
        }

        #[test]
        fn offspring_counts_are_floor_or_ceil(
            lw in proptest::collection::vec(-5.0f64..5.0, 1..100),
            frac in 0.0f64..1.0,
        ) {
            let n = lw.len();
            let w = normalized_weights(&lw);
            let a = systematic_resample(&w, n, frac / n as f64);
            prop_assert_eq!(a.len(), n);
            prop_assert!(a.windows(2).all(|p| p[0] <= p[1]));
            for (i, c) in counts(&a, n).into_iter().enumerate() {
                let expected = w[i] * n as f64;
                prop_assert!((c as f64) >= expected.floor() - 1.0 && (c as f64) <= expected.ceil() + 1.0);
            }
        }
    }
}
