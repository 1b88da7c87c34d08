use crate::error::Result;
use crate::noise::{
    derive_seed, fill_gaussian, sample_poisson_jumps, JumpEvent, LevyMeasureSpec, NoiseSource,
    RngStream,
};

/// Source of the signal noise (V, W, N_p1, N_p2) for one path or particle.
pub trait SignalNoise {
    /// Fills `out` with N(0, sd^2) draws for the slow Brownian motion.
    fn slow_gauss(&mut self, sd: f64, out: &mut [f64]);
    /// Fills `out` with N(0, sd^2) draws for the fast Brownian motion.
    fn fast_gauss(&mut self, sd: f64, out: &mut [f64]);
    /// Slow jump atoms on `(0, horizon]`.
    fn slow_jumps(&mut self, spec: &LevyMeasureSpec, horizon: f64) -> Result<Vec<JumpEvent>>;
    /// Fast jump atoms on `(0, horizon]` at intensity `rate_scale * spec`.
    fn fast_jumps(
        &mut self,
        spec: &LevyMeasureSpec,
        horizon: f64,
        rate_scale: f64,
    ) -> Result<Vec<JumpEvent>>;
}

/// A single stream serves every source, in call order.
impl SignalNoise for RngStream {
    fn slow_gauss(&mut self, sd: f64, out: &mut [f64]) {
        fill_gaussian(self, sd, out);
    }

    fn fast_gauss(&mut self, sd: f64, out: &mut [f64]) {
        fill_gaussian(self, sd, out);
    }

    fn slow_jumps(&mut self, spec: &LevyMeasureSpec, horizon: f64) -> Result<Vec<JumpEvent>> {
        sample_poisson_jumps(self, spec, horizon, 1.0)
    }

    fn fast_jumps(
        &mut self,
        spec: &LevyMeasureSpec,
        horizon: f64,
        rate_scale: f64,
    ) -> Result<Vec<JumpEvent>> {
        sample_poisson_jumps(self, spec, horizon, rate_scale)
    }
}

/// One stream per signal noise source.
///
/// Slow and fast sources never share a stream, so a homogenized particle
/// that only consumes the slow sources sees the same slow noise as a full
/// particle built from the same seed and index.
#[derive(Debug, Clone)]
pub struct SignalStreams {
    pub slow_brownian: RngStream,
    pub fast_brownian: RngStream,
    pub slow_jumps: RngStream,
    pub fast_jumps: RngStream,
}

impl SignalStreams {
    pub fn new(root_seed: u64, index: u32) -> Self {
        Self {
            slow_brownian: RngStream::for_source(root_seed, NoiseSource::SlowBrownian, index),
            fast_brownian: RngStream::for_source(root_seed, NoiseSource::FastBrownian, index),
            slow_jumps: RngStream::for_source(root_seed, NoiseSource::SlowJumps, index),
            fast_jumps: RngStream::for_source(root_seed, NoiseSource::FastJumps, index),
        }
    }

    /// Fresh streams for slot `index` after the `generation`-th resampling.
    pub fn regenerated(root_seed: u64, generation: u64, index: u32) -> Self {
        Self::new(derive_seed(root_seed, &[generation]), index)
    }
}

impl SignalNoise for SignalStreams {
    fn slow_gauss(&mut self, sd: f64, out: &mut [f64]) {
        fill_gaussian(&mut self.slow_brownian, sd, out);
    }

    fn fast_gauss(&mut self, sd: f64, out: &mut [f64]) {
        fill_gaussian(&mut self.fast_brownian, sd, out);
    }

    fn slow_jumps(&mut self, spec: &LevyMeasureSpec, horizon: f64) -> Result<Vec<JumpEvent>> {
        sample_poisson_jumps(&mut self.slow_jumps, spec, horizon, 1.0)
    }

    fn fast_jumps(
        &mut self,
        spec: &LevyMeasureSpec,
        horizon: f64,
        rate_scale: f64,
    ) -> Result<Vec<JumpEvent>> {
        sample_poisson_jumps(&mut self.fast_jumps, spec, horizon, rate_scale)
    }
}

/// Streams of the observation noise: B, the base jump measure, and the
/// thinning acceptance draws.
#[derive(Debug, Clone)]
pub struct ObservationStreams {
    pub brownian: RngStream,
    pub jumps: RngStream,
    pub thinning: RngStream,
}

impl ObservationStreams {
    pub fn new(root_seed: u64, index: u32) -> Self {
        Self {
            brownian: RngStream::for_source(root_seed, NoiseSource::ObservationBrownian, index),
            jumps: RngStream::for_source(root_seed, NoiseSource::ObservationJumps, index),
            thinning: RngStream::for_source(root_seed, NoiseSource::Thinning, index),
        }
    }
}

/// All streams of one simulated path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub signal: SignalStreams,
    pub observation: ObservationStreams,
}

impl PathStreams {
    pub fn new(root_seed: u64, path_index: u32) -> Self {
        Self {
            signal: SignalStreams::new(root_seed, path_index),
            observation: ObservationStreams::new(root_seed, path_index),
        }
    }
}
