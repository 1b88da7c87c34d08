//! Random streams, Brownian increments, finite-activity Poisson random
//! measures and state-dependent thinning.
//!
//! Every noise source of a path (or particle) draws from its own
//! [`RngStream`]. Stream ids follow `source_code * 2^32 + path_index`, so
//! sources never share a sequence and a path's noise does not depend on how
//! many paths run or in which order.

mod levy;
mod rng;
mod thinning;

pub use levy::{
    sample_poisson_count, sample_poisson_jumps, JumpEvent, LevyMeasureSpec, MarkSampler, Region,
};
pub use rng::{derive_seed, NoiseSource, RngStream};
pub use thinning::{thin_jumps, thinning_decisions};

use crate::error::{Error, Result};
use rand_distr::{Distribution, StandardNormal};

/// `count` independent `dim`-vectors of N(0, dt) coordinates.
pub fn brownian_increments(
    stream: &mut RngStream,
    dim: usize,
    dt: f64,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::invalid("brownian dimension must be positive"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let sd = dt.sqrt();
    Ok((0..count)
        .map(|_| {
            let mut v = vec![0.0; dim];
            fill_gaussian(stream, sd, &mut v);
            v
        })
        .collect())
}

/// Fills `out` with independent N(0, sd^2) draws.
#[inline]
pub fn fill_gaussian(stream: &mut RngStream, sd: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        let g: f64 = StandardNormal.sample(stream);
        *o = sd * g;
    }
}

#[inline]
pub fn standard_normal(stream: &mut RngStream) -> f64 {
    StandardNormal.sample(stream)
}
