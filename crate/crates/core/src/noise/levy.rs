use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RngStream;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Distribution of jump marks on the (scalar) mark space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarkSampler {
    Uniform { a: f64, b: f64 },
    Gauss { mu: f64, sigma: f64 },
    Point(f64),
    Exp { rate: f64 },
}

impl MarkSampler {
    fn validate(self) -> Result<Self> {
        let ok = match self {
            MarkSampler::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            MarkSampler::Gauss { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            MarkSampler::Point(v) => v.is_finite(),
            MarkSampler::Exp { rate } => rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::invalid(format!("improper mark distribution {self}")))
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            MarkSampler::Uniform { a, b } => a + (b - a) * stream.random::<f64>(),
            MarkSampler::Gauss { mu, sigma } => {
                let g: f64 = StandardNormal.sample(stream);
                mu + sigma * g
            }
            MarkSampler::Point(v) => v,
            MarkSampler::Exp { rate } => -(1.0 - stream.random::<f64>()).ln() / rate,
        }
    }

    /// E[f(mark)]: exact for point masses, 128-point Gauss-Legendre otherwise.
    pub fn expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let rule = GaussLegendre::standard();
        match *self {
            MarkSampler::Point(v) => f(v),
            MarkSampler::Uniform { a, b } => rule.integrate(a, b, f) / (b - a),
            MarkSampler::Gauss { mu, sigma } => {
                let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                rule.integrate(mu - 10.0 * sigma, mu + 10.0 * sigma, |u| {
                    let r = (u - mu) / sigma;
                    f(u) * norm * (-0.5 * r * r).exp()
                })
            }
            MarkSampler::Exp { rate } => {
                rule.integrate(0.0, 60.0 / rate, |u| f(u) * rate * (-rate * u).exp())
            }
        }
    }

    /// Visits quadrature nodes `(u, w)` with `sum(w) = 1` approximating the law.
    pub fn for_each_node(&self, mut visit: impl FnMut(f64, f64)) {
        let rule = GaussLegendre::standard();
        let mut on = |a: f64, b: f64, density: &dyn Fn(f64) -> f64| {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let u = mid + half * x;
                visit(u, w * half * density(u));
            }
        };
        match *self {
            MarkSampler::Point(v) => visit(v, 1.0),
            MarkSampler::Uniform { a, b } => on(a, b, &|_| 1.0 / (b - a)),
            MarkSampler::Gauss { mu, sigma } => {
                let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                on(mu - 10.0 * sigma, mu + 10.0 * sigma, &|u| {
                    let r = (u - mu) / sigma;
                    norm * (-0.5 * r * r).exp()
                })
            }
            MarkSampler::Exp { rate } => on(0.0, 60.0 / rate, &|u| rate * (-rate * u).exp()),
        }
    }

    /// Smallest interval containing the support (infinite ends for Gauss/Exp).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            MarkSampler::Uniform { a, b } => (a, b),
            MarkSampler::Gauss { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            MarkSampler::Point(v) => (v, v),
            MarkSampler::Exp { .. } => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for MarkSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkSampler::Uniform { a, b } => write!(f, "uniform({a:?},{b:?})"),
            MarkSampler::Gauss { mu, sigma } => write!(f, "gauss({mu:?},{sigma:?})"),
            MarkSampler::Point(v) => write!(f, "point({v:?})"),
            MarkSampler::Exp { rate } => write!(f, "exp({rate:?})"),
        }
    }
}

impl FromStr for MarkSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("bad mark sampler `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let sampler = match (name, args.as_slice()) {
            ("uniform", [a, b]) => MarkSampler::Uniform { a: *a, b: *b },
            ("gauss", [mu, sigma]) => MarkSampler::Gauss { mu: *mu, sigma: *sigma },
            ("point", [v]) => MarkSampler::Point(*v),
            ("exp", [rate]) => MarkSampler::Exp { rate: *rate },
            _ => return Err(bad()),
        };
        sampler.validate()
    }
}

impl TryFrom<String> for MarkSampler {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MarkSampler> for String {
    fn from(m: MarkSampler) -> String {
        m.to_string()
    }
}

/// Which split of the mark space a measure lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    U1,
    U2,
    U3,
    U3Complement,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevySpec {
    intensity: f64,
    marks: MarkSampler,
    region: Region,
}

/// A finite Lévy measure: `total_intensity * Law(marks)` restricted to `region`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLevySpec")]
pub struct LevyMeasureSpec {
    #[serde(rename = "intensity")]
    total_intensity: f64,
    marks: MarkSampler,
    region: Region,
}

impl TryFrom<RawLevySpec> for LevyMeasureSpec {
    type Error = Error;

    fn try_from(raw: RawLevySpec) -> Result<Self> {
        LevyMeasureSpec::new(raw.intensity, raw.marks, raw.region)
    }
}

impl LevyMeasureSpec {
    pub fn new(total_intensity: f64, marks: MarkSampler, region: Region) -> Result<Self> {
        if total_intensity.is_nan() || total_intensity < 0.0 {
            return Err(Error::invalid(format!(
                "jump intensity must be non-negative, got {total_intensity}"
            )));
        }
        if total_intensity.is_infinite() {
            return Err(Error::UnsupportedMeasure(
                "only finite-activity measures are supported".into(),
            ));
        }
        Ok(Self {
            total_intensity,
            marks: marks.validate()?,
            region,
        })
    }

    /// The null measure on `region`.
    pub fn zero(region: Region) -> Self {
        Self {
            total_intensity: 0.0,
            marks: MarkSampler::Point(0.0),
            region,
        }
    }

    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    pub fn marks(&self) -> &MarkSampler {
        &self.marks
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn is_null(&self) -> bool {
        self.total_intensity == 0.0
    }

    /// `out = ∫ f(u) nu(du)` for vector-valued `f`; `scratch` has `out.len()`.
    pub fn integrate_into(
        &self,
        out: &mut [f64],
        scratch: &mut [f64],
        mut f: impl FnMut(f64, &mut [f64]),
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.is_null() {
            return;
        }
        let scale = self.total_intensity;
        self.marks.for_each_node(|u, w| {
            f(u, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += scale * w * s;
            }
        });
    }

    /// `∫ f(u) nu(du)`.
    pub fn integrate(&self, f: impl FnMut(f64) -> f64) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        self.total_intensity * self.marks.expectation(f)
    }
}

/// One atom of a Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
    pub accepted: bool,
}

/// Poisson(mean) count. Inversion for small means keeps per-step sampling
/// cheap; larger means defer to `rand_distr`.
pub fn sample_poisson_count(stream: &mut RngStream, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        let u: f64 = stream.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(stream) as u64
    }
}

/// Atoms on (0, horizon] of a Poisson random measure with intensity
/// `rate_scale * spec`, sorted by time.
pub fn sample_poisson_jumps(
    stream: &mut RngStream,
    spec: &LevyMeasureSpec,
    horizon: f64,
    rate_scale: f64,
) -> Result<Vec<JumpEvent>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(rate_scale > 0.0) || !rate_scale.is_finite() {
        return Err(Error::invalid(format!(
            "rate scale must be positive, got {rate_scale}"
        )));
    }
    if spec.total_intensity.is_infinite() {
        return Err(Error::UnsupportedMeasure("infinite total intensity".into()));
    }
    let count = sample_poisson_count(stream, spec.total_intensity * rate_scale * horizon);
    let mut times: Vec<f64> = (0..count)
        .map(|_| horizon * (1.0 - stream.random::<f64>()))
        .collect();
    times.sort_by(f64::total_cmp);
    Ok(times
        .into_iter()
        .map(|time| JumpEvent {
            time,
            mark: spec.marks.sample(stream),
            accepted: true,
        })
        .collect())
}
