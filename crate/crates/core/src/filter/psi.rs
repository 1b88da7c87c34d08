use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the Gaussian mollifier applied to indicator test functions.
pub const MOLLIFIER_WIDTH: f64 = 1e-2;

/// Output range of polynomial test functions.
pub const POLY_CLIP: f64 = 10.0;

/// Bounded test functions of the first slow coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Psi {
    Tanh,
    Arctan,
    /// `1_[a,b]` convolved with a centered Gaussian of width
    /// [`MOLLIFIER_WIDTH`].
    Indicator { a: f64, b: f64 },
    /// `c0 + c1 x + c2 x^2` clipped to `[-POLY_CLIP, POLY_CLIP]`.
    Poly { c0: f64, c1: f64, c2: f64 },
    Constant(f64),
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl Psi {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = x[0];
        match *self {
            Psi::Tanh => v.tanh(),
            Psi::Arctan => v.atan(),
            Psi::Indicator { a, b } => {
                let w = normal_cdf((v - a) / MOLLIFIER_WIDTH) - normal_cdf((v - b) / MOLLIFIER_WIDTH);
                w.clamp(0.0, 1.0)
            }
            Psi::Poly { c0, c1, c2 } => (c0 + v * (c1 + v * c2)).clamp(-POLY_CLIP, POLY_CLIP),
            Psi::Constant(c) => c,
        }
    }

    /// `(inf psi, sup psi)`.
    pub fn bounds(&self) -> (f64, f64) {
        use std::f64::consts::FRAC_PI_2;
        match *self {
            Psi::Tanh => (-1.0, 1.0),
            Psi::Arctan => (-FRAC_PI_2, FRAC_PI_2),
            Psi::Indicator { .. } => (0.0, 1.0),
            Psi::Poly { .. } => (-POLY_CLIP, POLY_CLIP),
            Psi::Constant(c) => (c, c),
        }
    }

    /// Column-friendly name, e.g. `indicator(0,1)`.
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psi::Tanh => write!(f, "tanh"),
            Psi::Arctan => write!(f, "arctan"),
            Psi::Indicator { a, b } => write!(f, "indicator({a},{b})"),
            Psi::Poly { c0, c1, c2 } => write!(f, "poly({c0},{c1},{c2})"),
            Psi::Constant(c) => write!(f, "const({c})"),
        }
    }
}

fn parse_args(s: &str, name: &str, count: usize) -> Result<Vec<f64>> {
    let inner = s
        .strip_prefix(name)
        .and_then(|r| r.trim().strip_prefix('('))
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected `{name}(...)`, got `{s}`")))?;
    let vals = inner
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{}` in `{s}`", v.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != count || vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("`{name}` takes {count} finite arguments, got `{s}`")));
    }
    Ok(vals)
}

impl FromStr for Psi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "tanh" => return Ok(Psi::Tanh),
            "arctan" | "atan" => return Ok(Psi::Arctan),
            "one" => return Ok(Psi::Constant(1.0)),
            _ => {}
        }
        if s.starts_with("indicator") {
            let v = parse_args(s, "indicator", 2)?;
            if !(v[0] < v[1]) {
                return Err(Error::Parse(format!("indicator needs a < b, got `{s}`")));
            }
            Ok(Psi::Indicator { a: v[0], b: v[1] })
        } else if s.starts_with("poly") {
            let v = parse_args(s, "poly", 3)?;
            Ok(Psi::Poly { c0: v[0], c1: v[1], c2: v[2] })
        } else if s.starts_with("const") {
            Ok(Psi::Constant(parse_args(s, "const", 1)?[0]))
        } else {
            Err(Error::Parse(format!("unknown test function `{s}`")))
        }
    }
}

impl TryFrom<String> for Psi {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Psi> for String {
    fn from(p: Psi) -> String {
        p.to_string()
    }
}

/// Parses a comma-separated list such as `tanh,indicator(0,1)`, splitting
/// only at top-level commas.
pub fn parse_psi_list(s: &str) -> Result<Vec<Psi>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].parse()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_roundtrip() {
        for src in ["tanh", "arctan", "indicator(0,1.5)", "poly(1,-2,0.5)", "const(1)"] {
            let p: Psi = src.parse().unwrap();
            assert_eq!(p.to_string(), src);
            assert_eq!(p.to_string().parse::<Psi>().unwrap(), p);
        }
        assert!("indicator(1,0)".parse::<Psi>().is_err());
        assert!("poly(1,2)".parse::<Psi>().is_err());
        assert!("sinh".parse::<Psi>().is_err());
    }

    #[test]
    fn list_parsing_respects_parentheses() {
        let l = parse_psi_list("tanh,indicator(0,1),poly(0,1,0)").unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l[1], Psi::Indicator { a: 0.0, b: 1.0 });
    }

    #[test]
    fn mollified_indicator() {
        let p = Psi::Indicator { a: 0.0, b: 1.0 };
        assert!((p.eval(&[0.5]) - 1.0).abs() < 1e-12);
        assert!(p.eval(&[-0.5]) < 1e-12);
        assert!((p.eval(&[0.0]) - 0.5).abs() < 1e-12);
        assert!((p.eval(&[1.0]) - 0.5).abs() < 1e-12);
        // One mollifier width inside the edge: Phi(1).
        assert!((p.eval(&[0.01]) - 0.841_344_746_068_542_9).abs() < 1e-9);
    }

    #[test]
    fn values_within_bounds() {
        let psis = [
            Psi::Tanh,
            Psi::Arctan,
            Psi::Indicator { a: -1.0, b: 2.0 },
            Psi::Poly { c0: 1.0, c1: 3.0, c2: -2.0 },
            Psi::Constant(0.3),
        ];
        for p in psis {
            let (lo, hi) = p.bounds();
            for i in -200..=200 {
                let v = p.eval(&[i as f64 * 0.37]);
                assert!(v >= lo && v <= hi, "{p} at {i}");
            }
        }
    }
}
