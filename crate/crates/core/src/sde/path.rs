use std::io::{self, Write};

use serde::Serialize;

use super::scheme::{grid_steps, StepScheme};
use super::streams::ObservationStreams;
use crate::error::{Error, Result};
use crate::models::ObservationModel;
use crate::noise::{fill_gaussian, sample_poisson_jumps};

/// A jump that was applied to a state, with the exact increment added.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedJump {
    /// Slow step `k` such that the jump lies in `(t_k, t_{k+1}]`.
    pub step: usize,
    pub time: f64,
    pub mark: f64,
    pub delta: Vec<f64>,
}

/// Applied jumps per source. Rejected observation events are only counted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct JumpLog {
    pub slow: Vec<LoggedJump>,
    pub fast: Vec<LoggedJump>,
    pub observation_small: Vec<LoggedJump>,
    pub observation_large: Vec<LoggedJump>,
    pub rejected_observation: usize,
}

/// Grid values of (X, Z, Y) on `[0, T]` together with the information a
/// filter needs: the increments of the reference Brownian motion
/// `B + ∫ h dt` and the accepted small observation jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPath {
    pub scheme: StepScheme,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub jumps: JumpLog,
    pub bbar_increments: Vec<Vec<f64>>,
}

impl JointPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_x(&self) -> &[f64] {
        self.x.last().unwrap()
    }

    pub fn observation_record(&self) -> ObservationRecord {
        let mut small_marks = vec![Vec::new(); self.steps()];
        for j in &self.jumps.observation_small {
            small_marks[j.step].push((j.time, j.mark));
        }
        ObservationRecord {
            dt: self.scheme.dt_slow,
            bbar_increments: self.bbar_increments.clone(),
            small_marks,
        }
    }

    /// CSV with header `t,x_0..,z_0..,y_0..`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (n, m, d) = (self.x[0].len(), self.z[0].len(), self.y[0].len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..m).map(|i| format!("z_{i}")));
        header.extend((0..d).map(|i| format!("y_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let row: Vec<String> = std::iter::once(self.times[k])
                .chain(self.x[k].iter().copied())
                .chain(self.z[k].iter().copied())
                .chain(self.y[k].iter().copied())
                .map(format_value)
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// What a filter consumes from the observation: per slow step, the
/// increment of the reference Brownian motion and the small-jump atoms
/// `(time, mark)` that fell in the step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub dt: f64,
    pub bbar_increments: Vec<Vec<f64>>,
    pub small_marks: Vec<Vec<(f64, f64)>>,
}

impl ObservationRecord {
    pub fn steps(&self) -> usize {
        self.bbar_increments.len()
    }

    /// An observation drawn under the reference measure: `Bbar` is a
    /// standard Brownian motion and the small jumps arrive at rate
    /// `nu3_small`, independent of any signal.
    pub fn sample_reference(
        obs: &ObservationModel,
        horizon: f64,
        dt: f64,
        streams: &mut ObservationStreams,
    ) -> Result<Self> {
        let steps = grid_steps(horizon, dt)?;
        let sd = dt.sqrt();
        let mut bbar_increments = Vec::with_capacity(steps);
        let mut small_marks = Vec::with_capacity(steps);
        for k in 0..steps {
            let mut inc = vec![0.0; obs.d];
            fill_gaussian(&mut streams.brownian, sd, &mut inc);
            bbar_increments.push(inc);
            let t0 = k as f64 * dt;
            let marks = if obs.nu3_small.is_null() {
                Vec::new()
            } else {
                sample_poisson_jumps(&mut streams.jumps, &obs.nu3_small, dt, 1.0)?
                    .into_iter()
                    .map(|e| (t0 + e.time, e.mark))
                    .collect()
            };
            small_marks.push(marks);
        }
        Ok(Self {
            dt,
            bbar_increments,
            small_marks,
        })
    }

    pub fn check_grid(&self, dt: f64) -> Result<()> {
        if (self.dt - dt).abs() > 1e-12 * dt {
            return Err(Error::invalid(format!(
                "observation grid dt={} does not match filter dt={dt}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Grid path of the frozen fast process.
#[derive(Debug, Clone, PartialEq)]
pub struct FastPath {
    pub times: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

/// Grid path of the homogenized slow process.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowPath {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl SlowPath {
    pub fn final_x(&self) -> &[f64] {
        self.x.last().unwrap()
    }
}
