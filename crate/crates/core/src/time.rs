//! Uniform time grids and sampled controls.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{self, Field, NormTag};

/// Uniform steps of size `dt` on `[0, T]`; the last step is shortened so that
/// the horizon is exactly `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
    last: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        let ratio = horizon / dt;
        let mut steps = (ratio - 1e-9).ceil().max(1.0) as usize;
        let mut last = horizon - (steps - 1) as f64 * dt;
        // drop slivers that would make a badly conditioned final step
        if last < 1e-9 * dt && steps > 1 {
            steps -= 1;
            last += dt;
        }
        Ok(Self { dt, steps, last })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Size of step `k` (from `t_k` to `t_{k+1}`).
    pub fn step_size(&self, k: usize) -> f64 {
        if k + 1 == self.steps {
            self.last
        } else {
            self.dt
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon()
        } else {
            k as f64 * self.dt
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.steps - 1) as f64 * self.dt + self.last
    }

    /// Index of the step containing time `t`.
    pub fn step_at(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        ((t / self.dt).floor() as usize).min(self.steps - 1)
    }
}

/// Piecewise-constant control: one field per step, each inside the ball of radius `ρ`.
#[derive(Clone, Debug)]
pub struct Control {
    time: TimeGrid,
    steps: Vec<Field>,
    radius: f64,
    norm: NormTag,
}

impl Control {
    pub fn new(time: TimeGrid, steps: Vec<Field>, radius: f64, norm: NormTag) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid("rho", format!("must be positive, got {radius}")));
        }
        if steps.len() != time.steps() {
            return Err(Error::Shape(format!(
                "control has {} steps, time grid has {}",
                steps.len(),
                time.steps()
            )));
        }
        for (k, u) in steps.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::NonFinite("control"));
            }
            let n = hilbert::norm(u, norm);
            if n > radius * (1.0 + 1e-12) {
                return Err(Error::Inadmissible {
                    step: k,
                    norm: n,
                    radius,
                });
            }
        }
        Ok(Self {
            time,
            steps,
            radius,
            norm,
        })
    }

    pub fn zeros(time: TimeGrid, like: &Field, radius: f64, norm: NormTag) -> Result<Self> {
        Self::new(time, vec![like.zeros_like(); time.steps()], radius, norm)
    }

    /// Same field on every step.
    pub fn constant(time: TimeGrid, u: &Field, radius: f64, norm: NormTag) -> Result<Self> {
        Self::new(time, vec![u.clone(); time.steps()], radius, norm)
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn steps(&self) -> &[Field] {
        &self.steps
    }

    pub fn step(&self, k: usize) -> &Field {
        &self.steps[k]
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm_tag(&self) -> NormTag {
        self.norm
    }

    pub fn norms(&self) -> Vec<f64> {
        self.steps.iter().map(|u| hilbert::norm(u, self.norm)).collect()
    }

    /// Piecewise-constant resampling onto another time grid (by step midpoints).
    pub fn resample(&self, time: TimeGrid) -> Result<Self> {
        let steps = (0..time.steps())
            .map(|k| {
                let mid = time.time(k) + 0.5 * time.step_size(k);
                self.steps[self.time.step_at(mid)].clone()
            })
            .collect();
        Self::new(time, steps, self.radius, self.norm)
    }

    /// `(Σ_k dt_k ‖u_k - v_k‖²)^{1/2}` in the control norm.
    pub fn l2_distance(&self, other: &Control) -> f64 {
        let mut s = 0.0;
        for k in 0..self.time.steps() {
            s += self.time.step_size(k) * hilbert::norm(&self.steps[k].sub(&other.steps[k]), self.norm).powi(2);
        }
        s.sqrt()
    }
}
