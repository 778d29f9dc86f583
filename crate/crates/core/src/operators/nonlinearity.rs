use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Scalar nonlinearity `β: ℝ → ℝ` with `β(0) = 0`, from a closed catalog.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `slope · r`
    Linear { slope: f64 },
    /// `linear · r + cubic · r³`
    Cubic { linear: f64, cubic: f64 },
    /// `slope · r + gain · r³/(1 + r²)`
    SaturatingRational { slope: f64, gain: f64 },
    /// `slope · r + gain · tanh r`
    Logistic { slope: f64, gain: f64 },
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::Linear { slope: 0.0 }
    }
}

impl Nonlinearity {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Nonlinearity::Linear { slope } => slope * r,
            Nonlinearity::Cubic { linear, cubic } => linear * r + cubic * r * r * r,
            Nonlinearity::SaturatingRational { slope, gain } => {
                let r2 = r * r;
                slope * r + gain * r * r2 / (1.0 + r2)
            }
            Nonlinearity::Logistic { slope, gain } => slope * r + gain * r.tanh(),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Nonlinearity::Linear { slope } => slope,
            Nonlinearity::Cubic { linear, cubic } => linear + 3.0 * cubic * r * r,
            Nonlinearity::SaturatingRational { slope, gain } => {
                let r2 = r * r;
                let d = 1.0 + r2;
                slope + gain * (3.0 * r2 + r2 * r2) / (d * d)
            }
            Nonlinearity::Logistic { slope, gain } => {
                let s = 1.0 / r.cosh();
                slope + gain * s * s
            }
        }
    }

    /// Growth exponent `κ` in `|β'(r)| ≤ L(|r|^κ + 1)`.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            Nonlinearity::Cubic { cubic, .. } if cubic != 0.0 => 2.0,
            _ => 0.0,
        }
    }

    /// `inf_r β'(r)` (may be `-∞`).
    pub fn min_slope(&self) -> f64 {
        // (3s + s²)/(1 + s)² on s = r² ranges over [0, 9/8]
        match *self {
            Nonlinearity::Linear { slope } => slope,
            Nonlinearity::Cubic { linear, cubic } => {
                if cubic >= 0.0 {
                    linear
                } else {
                    f64::NEG_INFINITY
                }
            }
            Nonlinearity::SaturatingRational { slope, gain } => slope + (1.125 * gain).min(0.0),
            Nonlinearity::Logistic { slope, gain } => slope + gain.min(0.0),
        }
    }

    pub fn is_linear(&self) -> bool {
        match *self {
            Nonlinearity::Linear { .. } => true,
            Nonlinearity::Cubic { cubic, .. } => cubic == 0.0,
            Nonlinearity::SaturatingRational { gain, .. } | Nonlinearity::Logistic { gain, .. } => gain == 0.0,
        }
    }

    pub(crate) fn validate(&self, name: &'static str) -> Result<()> {
        let params: Vec<f64> = match *self {
            Nonlinearity::Linear { slope } => vec![slope],
            Nonlinearity::Cubic { linear, cubic } => vec![linear, cubic],
            Nonlinearity::SaturatingRational { slope, gain } | Nonlinearity::Logistic { slope, gain } => {
                vec![slope, gain]
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid(name, "parameters must be finite"));
        }
        Ok(())
    }
}

/// Two-variable reaction term `f(y, z)` with `f(0, 0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Reaction {
    /// `a·y + b·z`
    Linear { a: f64, b: f64 },
    /// `a·tanh y + b·tanh z`
    Tanh { a: f64, b: f64 },
    /// `gain · y · z²/(1 + z²)`
    ProductRational { gain: f64 },
}

impl Reaction {
    pub fn eval(&self, y: f64, z: f64) -> f64 {
        match *self {
            Reaction::Linear { a, b } => a * y + b * z,
            Reaction::Tanh { a, b } => a * y.tanh() + b * z.tanh(),
            Reaction::ProductRational { gain } => {
                let z2 = z * z;
                gain * y * z2 / (1.0 + z2)
            }
        }
    }

    /// `(∂f/∂y, ∂f/∂z)`
    pub fn gradient(&self, y: f64, z: f64) -> [f64; 2] {
        match *self {
            Reaction::Linear { a, b } => [a, b],
            Reaction::Tanh { a, b } => {
                let (sy, sz) = (1.0 / y.cosh(), 1.0 / z.cosh());
                [a * sy * sy, b * sz * sz]
            }
            Reaction::ProductRational { gain } => {
                let z2 = z * z;
                let d = 1.0 + z2;
                [gain * z2 / d, gain * y * 2.0 * z / (d * d)]
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Reaction::Linear { .. })
    }

    pub(crate) fn validate(&self, name: &'static str) -> Result<()> {
        let ok = match *self {
            Reaction::Linear { a, b } | Reaction::Tanh { a, b } => a.is_finite() && b.is_finite(),
            Reaction::ProductRational { gain } => gain.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(name, "parameters must be finite"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, r: f64) -> f64 {
        let h = 1e-6;
        (f(r + h) - f(r - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cat = [
            Nonlinearity::Linear { slope: 2.0 },
            Nonlinearity::Cubic { linear: 0.5, cubic: 1.5 },
            Nonlinearity::SaturatingRational { slope: 0.5, gain: 2.0 },
            Nonlinearity::Logistic { slope: 1.0, gain: -0.3 },
        ];
        for b in cat {
            assert_eq!(b.eval(0.0), 0.0);
            for r in [-2.3, -0.4, 0.0, 0.7, 3.1] {
                let fd = central(|s| b.eval(s), r);
                assert!((fd - b.derivative(r)).abs() < 1e-6 * (1.0 + fd.abs()), "{b:?} at {r}");
                assert!(b.derivative(r) >= b.min_slope() - 1e-12);
            }
        }
    }

    #[test]
    fn saturating_slope_bound_is_attained() {
        let b = Nonlinearity::SaturatingRational { slope: 0.0, gain: 1.0 };
        assert!((b.derivative(3f64.sqrt()) - 1.125).abs() < 1e-12);
        let neg = Nonlinearity::SaturatingRational { slope: 1.0, gain: -0.5 };
        assert!((neg.min_slope() - (1.0 - 0.5625)).abs() < 1e-12);
    }

    #[test]
    fn reaction_gradients() {
        let cat = [
            Reaction::Linear { a: 1.0, b: -0.5 },
            Reaction::Tanh { a: 0.3, b: 0.8 },
            Reaction::ProductRational { gain: 1.2 },
        ];
        for f in cat {
            assert_eq!(f.eval(0.0, 0.0), 0.0);
            for (y, z) in [(0.3, -1.1), (-2.0, 0.5)] {
                let g = f.gradient(y, z);
                assert!((central(|s| f.eval(s, z), y) - g[0]).abs() < 1e-6);
                assert!((central(|s| f.eval(y, s), z) - g[1]).abs() < 1e-6);
            }
        }
        // f(0, z) = 0 and f(y, z) y ≥ 0
        let pr = Reaction::ProductRational { gain: 1.0 };
        assert_eq!(pr.eval(0.0, 4.0), 0.0);
        assert!(pr.eval(-1.0, 2.0) * -1.0 >= 0.0);
    }
}
