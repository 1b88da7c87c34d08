use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::factor::{factor_diffusion, recompose};
use super::{average_coefficients, estimate_invariant_measure, AveragedCoefficients};
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::models::{Field, ModelPreset, ObservationModel, SlowFastModel};
use crate::noise::{derive_seed, RngStream};
use crate::sde::FastMode;

/// Settings of the Monte Carlo averaging runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingParams {
    pub burn_in: f64,
    pub n_samples: usize,
    pub stride: usize,
    pub dt: f64,
    pub mode: FastMode,
    pub seed: u64,
}

impl Default for AveragingParams {
    fn default() -> Self {
        Self {
            burn_in: 10.0,
            n_samples: 10_000,
            stride: 10,
            dt: 0.01,
            mode: FastMode::Euler,
            seed: 0,
        }
    }
}

/// Fraction of the requested span added on each side by
/// [`Lattice::covering`].
pub const GUARD_BAND: f64 = 0.1;

/// Tensor grid of slow states with multilinear interpolation. Queries
/// outside the grid are errors, never clamped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("lattice needs at least one axis"));
        }
        for (i, axis) in axes.iter().enumerate() {
            if axis.len() < 2 || axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid(format!(
                    "lattice axis {i} must have at least two strictly increasing points"
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Uniform grid with `points` nodes per axis over `[lo, hi]` widened by
    /// the guard band on both sides.
    pub fn covering(lo: &[f64], hi: &[f64], points: usize) -> Result<Self> {
        if lo.len() != hi.len() || points < 2 {
            return Err(Error::invalid("lattice bounds mismatch or fewer than two points"));
        }
        let axes = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| {
                let pad = GUARD_BAND * (b - a);
                let (a, b) = (a - pad, b + pad);
                (0..points)
                    .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
                    .collect()
            })
            .collect();
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Coordinates of node `index` (last axis fastest).
    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut x = vec![0.0; self.dim()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            x[i] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        x
    }

    fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    /// Interpolation corners `(node index, weight)` for `x`.
    pub fn corners(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "lattice query has {} components, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let mut cells = Vec::with_capacity(self.dim());
        for (axis_index, (&q, axis)) in x.iter().zip(&self.axes).enumerate() {
            let (lo, hi) = (axis[0], *axis.last().unwrap());
            if !(q >= lo && q <= hi) {
                return Err(Error::Extrapolation {
                    axis: axis_index,
                    query: q,
                    lo,
                    hi,
                });
            }
            let upper = axis.partition_point(|&a| a <= q).clamp(1, axis.len() - 1);
            let lower = upper - 1;
            let frac = (q - axis[lower]) / (axis[upper] - axis[lower]);
            cells.push((lower, frac));
        }
        let mut out = Vec::with_capacity(1 << self.dim());
        let mut multi = vec![0usize; self.dim()];
        for mask in 0..(1usize << self.dim()) {
            let mut w = 1.0;
            for (i, &(lower, frac)) in cells.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    multi[i] = lower + 1;
                    w *= frac;
                } else {
                    multi[i] = lower;
                    w *= 1.0 - frac;
                }
            }
            if w != 0.0 {
                out.push((self.flat_index(&multi), w));
            }
        }
        Ok(out)
    }
}

/// How a homogenized model was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    /// The slow coefficients do not depend on the fast state.
    FastIndependent,
    GivenFactor,
    MonteCarlo { params: AveragingParams, lattice_nodes: Option<usize> },
}

#[derive(Debug, Clone)]
pub enum HomogenizationMode {
    ClosedForm,
    Lattice(Lattice),
    OnDemand,
}

struct NodeValues {
    coeffs: AveragedCoefficients,
    sigma: Vec<f64>,
}

enum Kind {
    Fields {
        bbar1: Field,
        abar: Field,
        hbar: Field,
        const_sigma: Option<Vec<f64>>,
    },
    GivenFactor {
        bbar1: Field,
        sigma: Field,
        hbar: Field,
    },
    FastIndependent,
    Lattice {
        lattice: Lattice,
        nodes: Vec<AveragedCoefficients>,
    },
    OnDemand {
        params: AveragingParams,
        cache: Mutex<HashMap<Vec<i64>, Arc<NodeValues>>>,
    },
}

/// Averaged slow dynamics `dX = bbar1 dt + sigmabar1 dV + ∫ f1 dÑ_p1` and
/// averaged sensor `hbar`. The slow jumps and the observation model are
/// inherited unchanged.
pub struct HomogenizedModel {
    slow: SlowFastModel,
    observation: ObservationModel,
    kind: Kind,
    provenance: Provenance,
}

impl fmt::Debug for HomogenizedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogenizedModel")
            .field("n", &self.slow.n)
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// Cache keys round each coordinate to this resolution.
pub const CACHE_RESOLUTION: f64 = 1e-6;

impl HomogenizedModel {
    pub fn slow(&self) -> &SlowFastModel {
        &self.slow
    }

    pub fn observation(&self) -> &ObservationModel {
        &self.observation
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n(&self) -> usize {
        self.slow.n
    }

    pub fn d(&self) -> usize {
        self.observation.d
    }

    /// A homogenized model with an explicitly chosen diffusion factor
    /// (`n x n`, row-major).
    pub fn with_given_factor(
        slow: SlowFastModel,
        observation: ObservationModel,
        bbar1: Field,
        sigmabar1: Field,
        hbar: Field,
    ) -> Result<Self> {
        let n = slow.n;
        if bbar1.dim() != n || sigmabar1.dim() != n * n || hbar.dim() != observation.d {
            return Err(Error::invalid("given homogenized coefficients have wrong dimensions"));
        }
        Ok(Self {
            slow,
            observation,
            kind: Kind::GivenFactor {
                bbar1,
                sigma: sigmabar1,
                hbar,
            },
            provenance: Provenance::GivenFactor,
        })
    }

    fn from_closed_form(preset: &ModelPreset) -> Result<Self> {
        let cf = preset
            .closed_form
            .as_ref()
            .ok_or_else(|| Error::invalid("preset has no closed-form averages"))?;
        let n = preset.slow_fast.n;
        let const_sigma = match cf.abar.exprs() {
            Some(e) if e.iter().all(|e| e.is_const()) => {
                let a = cf.abar.eval_vec(&Args::new(0.0, &preset.slow_fast.x0, &[], &[]));
                Some(factor_diffusion(&a, n)?)
            }
            _ => None,
        };
        Ok(Self {
            slow: preset.slow_fast.clone(),
            observation: preset.observation.clone(),
            kind: Kind::Fields {
                bbar1: cf.bbar1.clone(),
                abar: cf.abar.clone(),
                hbar: cf.hbar.clone(),
                const_sigma,
            },
            provenance: Provenance::ClosedForm,
        })
    }

    fn fast_independent(preset: &ModelPreset) -> Result<Self> {
        let sf = &preset.slow_fast;
        if sf.b1.uses_z() || sf.sigma1.uses_z() || preset.observation.h.uses_z() {
            return Err(Error::invalid(
                "no closed-form averages and the slow coefficients depend on the fast state",
            ));
        }
        Ok(Self {
            slow: sf.clone(),
            observation: preset.observation.clone(),
            kind: Kind::FastIndependent,
            provenance: Provenance::FastIndependent,
        })
    }

    /// `(lattice, averaged values per node)` for lattice-mode models.
    pub fn lattice_nodes(&self) -> Option<(&Lattice, &[AveragedCoefficients])> {
        match &self.kind {
            Kind::Lattice { lattice, nodes } => Some((lattice, nodes)),
            _ => None,
        }
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.slow.n {
            return Err(Error::invalid(format!(
                "x has {} components, expected {}",
                x.len(),
                self.slow.n
            )));
        }
        Ok(())
    }

    fn on_demand(&self, params: &AveragingParams, cache: &Mutex<HashMap<Vec<i64>, Arc<NodeValues>>>, x: &[f64]) -> Result<Arc<NodeValues>> {
        let key: Vec<i64> = x.iter().map(|v| (v / CACHE_RESOLUTION).round() as i64).collect();
        if let Some(v) = cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(v));
        }
        // Computed outside the lock; the value depends only on the key, so a
        // concurrent duplicate computation yields the same entry.
        let x_key: Vec<f64> = key.iter().map(|&k| k as f64 * CACHE_RESOLUTION).collect();
        let tags: Vec<u64> = key.iter().map(|&k| k as u64).collect();
        let mut stream = RngStream::new(derive_seed(params.seed, &tags), 0);
        let coeffs = average_at(&self.slow, &self.observation, &x_key, params, &mut stream)?;
        let sigma = factor_diffusion(&coeffs.abar, self.slow.n)?;
        let values = Arc::new(NodeValues { coeffs, sigma });
        let mut guard = cache.lock().unwrap();
        Ok(Arc::clone(guard.entry(key).or_insert(values)))
    }

    fn interpolate(
        lattice: &Lattice,
        nodes: &[AveragedCoefficients],
        x: &[f64],
        pick: impl Fn(&AveragedCoefficients) -> &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (idx, w) in lattice.corners(x)? {
            for (o, v) in out.iter_mut().zip(pick(&nodes[idx])) {
                *o += w * v;
            }
        }
        Ok(())
    }

    pub fn bbar1(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        match &self.kind {
            Kind::Fields { bbar1, .. } | Kind::GivenFactor { bbar1, .. } => {
                bbar1.eval(&Args::new(0.0, x, &[], &[]), out)
            }
            Kind::FastIndependent => self.slow.b1.eval(&Args::new(0.0, x, &self.slow.z0, &[]), out),
            Kind::Lattice { lattice, nodes } => {
                Self::interpolate(lattice, nodes, x, |c| &c.bbar1, out)?
            }
            Kind::OnDemand { params, cache } => {
                out.copy_from_slice(&self.on_demand(params, cache, x)?.coeffs.bbar1)
            }
        }
        Ok(())
    }

    /// `sigmabar1 sigmabar1^T` as a row-major `n x n` matrix.
    pub fn abar(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        let n = self.slow.n;
        match &self.kind {
            Kind::Fields { abar, .. } => abar.eval(&Args::new(0.0, x, &[], &[]), out),
            Kind::GivenFactor { sigma, .. } => {
                let s = sigma.eval_vec(&Args::new(0.0, x, &[], &[]));
                out.copy_from_slice(&recompose(&s, n));
            }
            Kind::FastIndependent => {
                let s = self.slow.sigma1.eval_vec(&Args::new(0.0, x, &self.slow.z0, &[]));
                out.copy_from_slice(&recompose(&s, n));
            }
            Kind::Lattice { lattice, nodes } => {
                Self::interpolate(lattice, nodes, x, |c| &c.abar, out)?
            }
            Kind::OnDemand { params, cache } => {
                out.copy_from_slice(&self.on_demand(params, cache, x)?.coeffs.abar)
            }
        }
        Ok(())
    }

    /// Lower-triangular factor of `abar(x)` (or the given factor).
    pub fn sigmabar1(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        let n = self.slow.n;
        match &self.kind {
            Kind::Fields {
                const_sigma: Some(s),
                ..
            } => out.copy_from_slice(s),
            Kind::GivenFactor { sigma, .. } => sigma.eval(&Args::new(0.0, x, &[], &[]), out),
            Kind::OnDemand { params, cache } => {
                out.copy_from_slice(&self.on_demand(params, cache, x)?.sigma)
            }
            _ => {
                let mut a = vec![0.0; n * n];
                self.abar(x, &mut a)?;
                out.copy_from_slice(&factor_diffusion(&a, n)?);
            }
        }
        Ok(())
    }

    pub fn hbar(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        match &self.kind {
            Kind::Fields { hbar, .. } | Kind::GivenFactor { hbar, .. } => {
                hbar.eval(&Args::new(0.0, x, &[], &[]), out)
            }
            Kind::FastIndependent => self
                .observation
                .h
                .eval(&Args::new(0.0, x, &self.slow.z0, &[]), out),
            Kind::Lattice { lattice, nodes } => {
                Self::interpolate(lattice, nodes, x, |c| &c.hbar, out)?
            }
            Kind::OnDemand { params, cache } => {
                out.copy_from_slice(&self.on_demand(params, cache, x)?.coeffs.hbar)
            }
        }
        Ok(())
    }
}

fn average_at(
    slow: &SlowFastModel,
    obs: &ObservationModel,
    x: &[f64],
    params: &AveragingParams,
    stream: &mut RngStream,
) -> Result<AveragedCoefficients> {
    let measure = estimate_invariant_measure(
        slow,
        x,
        params.burn_in,
        params.n_samples,
        params.stride,
        params.dt,
        params.mode,
        stream,
    )?;
    average_coefficients(slow, obs, x, &measure)
}

/// Builds the homogenized model of `preset`.
///
/// `ClosedForm` uses the preset's analytic averages, or the original slow
/// coefficients when they do not depend on the fast state. The Monte Carlo
/// modes need `params`.
pub fn build_homogenized(
    preset: &ModelPreset,
    mode: HomogenizationMode,
    params: Option<AveragingParams>,
) -> Result<HomogenizedModel> {
    preset.validate()?;
    let need_params = || params.ok_or_else(|| Error::invalid("Monte Carlo averaging needs parameters"));
    match mode {
        HomogenizationMode::ClosedForm => {
            if preset.closed_form.is_some() {
                HomogenizedModel::from_closed_form(preset)
            } else {
                HomogenizedModel::fast_independent(preset)
            }
        }
        HomogenizationMode::Lattice(lattice) => {
            let params = need_params()?;
            if lattice.dim() != preset.slow_fast.n {
                return Err(Error::invalid(format!(
                    "lattice has {} axes, expected {}",
                    lattice.dim(),
                    preset.slow_fast.n
                )));
            }
            let nodes = (0..lattice.node_count())
                .into_par_iter()
                .map(|i| {
                    let mut stream = RngStream::new(params.seed, i as u64);
                    average_at(
                        &preset.slow_fast,
                        &preset.observation,
                        &lattice.node(i),
                        &params,
                        &mut stream,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let count = nodes.len();
            Ok(HomogenizedModel {
                slow: preset.slow_fast.clone(),
                observation: preset.observation.clone(),
                kind: Kind::Lattice { lattice, nodes },
                provenance: Provenance::MonteCarlo {
                    params,
                    lattice_nodes: Some(count),
                },
            })
        }
        HomogenizationMode::OnDemand => {
            let params = need_params()?;
            Ok(HomogenizedModel {
                slow: preset.slow_fast.clone(),
                observation: preset.observation.clone(),
                kind: Kind::OnDemand {
                    params,
                    cache: Mutex::new(HashMap::new()),
                },
                provenance: Provenance::MonteCarlo {
                    params,
                    lattice_nodes: None,
                },
            })
        }
    }
}
