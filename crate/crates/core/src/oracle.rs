//! Ground-truth minimal times for one- and two-dimensional reductions.
//!
//! Spatially constant solutions on a Neumann grid satisfy an ODE in the node
//! value; these are solved in closed form (scalar linear case) or by exhaustive
//! search over bang-bang controls with few switches.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{Nonlinearity, OperatorKind, Reaction};
use crate::parallel::{self, Execution};

/// Outcome of a minimal-time computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MinTime {
    Reached { time: f64 },
    Infeasible,
}

impl MinTime {
    pub fn time(self) -> Option<f64> {
        match self {
            MinTime::Reached { time } => Some(time),
            MinTime::Infeasible => None,
        }
    }
}

/// Minimal time for `y' + a y = u`, `|u| ≤ ρ`, from `y0` to `c`.
///
/// The target must be holdable, `ρ > |a c|`; otherwise the result is infeasible.
pub fn analytic_min_time_scalar(a: f64, y0: f64, c: f64, rho: f64) -> Result<MinTime> {
    for (name, v) in [("a", a), ("y0", y0), ("c", c)] {
        if !v.is_finite() {
            return Err(invalid(name, "must be finite"));
        }
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    if c == y0 {
        return Ok(MinTime::Reached { time: 0.0 });
    }
    if rho <= (a * c).abs() {
        return Ok(MinTime::Infeasible);
    }
    let u = rho * (c - y0).signum();
    if a == 0.0 {
        return Ok(MinTime::Reached { time: (c - y0).abs() / rho });
    }
    let ratio = (a * c - u) / (a * y0 - u);
    let t = -ratio.ln() / a;
    Ok(if ratio > 0.0 && t.is_finite() && t >= 0.0 {
        MinTime::Reached { time: t }
    } else {
        MinTime::Infeasible
    })
}

/// Right-hand side family of a reduction, written as `y' = -A(y) + e₁ u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OdeDynamics {
    /// `A(y) = a₁ y + β(y)`
    Scalar { a1: f64, beta: Nonlinearity },
    /// `A(y, z) = (f(y, z), g(y, z))`
    Pair { f: Reaction, g: Reaction },
    /// `A(y) = M y`
    Linear { m: [[f64; 2]; 2] },
}

impl OdeDynamics {
    pub fn dimension(&self) -> usize {
        match self {
            OdeDynamics::Scalar { .. } => 1,
            _ => 2,
        }
    }

    fn rhs(&self, y: [f64; 2], u: f64) -> [f64; 2] {
        match self {
            OdeDynamics::Scalar { a1, beta } => [u - a1 * y[0] - beta.eval(y[0]), 0.0],
            OdeDynamics::Pair { f, g } => [u - f.eval(y[0], y[1]), -g.eval(y[0], y[1])],
            OdeDynamics::Linear { m } => [
                u - m[0][0] * y[0] - m[0][1] * y[1],
                -m[1][0] * y[0] - m[1][1] * y[1],
            ],
        }
    }
}

/// What counts as reaching the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OdeTarget {
    /// First component crosses `value` (interpolated inside the step).
    FirstComponent { value: f64 },
    /// Euclidean distance to `value` at most `tol` at a grid time.
    Full { value: Vec<f64>, tol: f64 },
}

/// Low-dimensional reduction `y' = -A(y) + e₁ u`, `|u| ≤ ρ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeReduction {
    pub dynamics: OdeDynamics,
    pub rho: f64,
    pub y0: Vec<f64>,
    pub target: OdeTarget,
    /// Search horizon.
    pub horizon: f64,
    /// RK4 substeps per switching interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    8
}

impl OdeReduction {
    pub fn new(dynamics: OdeDynamics, rho: f64, y0: Vec<f64>, target: OdeTarget, horizon: f64) -> Result<Self> {
        let r = Self {
            dynamics,
            rho,
            y0,
            target,
            horizon,
            substeps: default_substeps(),
        };
        r.validate()?;
        Ok(r)
    }

    /// Spatially constant reduction of an operator on a Neumann grid, with the
    /// control acting on the first component.
    pub fn from_operator(kind: &OperatorKind, rho: f64, y0: Vec<f64>, target: OdeTarget, horizon: f64) -> Result<Self> {
        let dynamics = match kind {
            OperatorKind::PotentialDrift { beta, a1, .. } => OdeDynamics::Scalar { a1: *a1, beta: *beta },
            OperatorKind::ReactionDiffusion2 { f, g, .. } => OdeDynamics::Pair { f: *f, g: *g },
            OperatorKind::FitzHughNagumo {
                alpha0, sigma, gamma, ..
            } => OdeDynamics::Linear {
                m: [[*alpha0, 1.0], [-*sigma, *gamma]],
            },
            other => {
                return Err(Error::Unsupported(format!(
                    "no ODE reduction for {} (pointwise part needed)",
                    other.name()
                )))
            }
        };
        Self::new(dynamics, rho, y0, target, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dynamics.dimension();
        if self.y0.len() != d {
            return Err(Error::Shape(format!("y0 has {} entries, dynamics has dimension {d}", self.y0.len())));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be positive"));
        }
        if let OdeTarget::Full { value, tol } = &self.target {
            if value.len() != d {
                return Err(Error::Shape("target dimension differs from the dynamics".into()));
            }
            if !(*tol > 0.0) {
                return Err(invalid("tol", "must be positive"));
            }
        }
        let finite = match &self.dynamics {
            OdeDynamics::Scalar { a1, beta } => a1.is_finite() && beta.validate("beta").is_ok(),
            OdeDynamics::Pair { f, g } => f.validate("f").is_ok() && g.validate("g").is_ok(),
            OdeDynamics::Linear { m } => m.iter().flatten().all(|v| v.is_finite()),
        };
        if !finite || self.y0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dynamics", "parameters must be finite"));
        }
        Ok(())
    }

    fn state0(&self) -> [f64; 2] {
        [self.y0[0], self.y0.get(1).copied().unwrap_or(0.0)]
    }

    fn rk4(&self, y: [f64; 2], u: f64, h: f64) -> [f64; 2] {
        let f = |s: [f64; 2]| self.dynamics.rhs(s, u);
        let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
        let k1 = f(y);
        let k2 = f(add(y, k1, 0.5 * h));
        let k3 = f(add(y, k2, 0.5 * h));
        let k4 = f(add(y, k3, h));
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    /// One switching interval of length `dt`; returns the end state and the
    /// (interpolated) hit offset inside the interval, if any.
    fn advance(&self, y: [f64; 2], u: f64, dt: f64) -> ([f64; 2], Option<f64>) {
        let h = dt / self.substeps as f64;
        let mut s = y;
        for i in 0..self.substeps {
            let next = self.rk4(s, u, h);
            if let Some(frac) = self.crossing(s, next) {
                return (next, Some((i as f64 + frac) * h));
            }
            s = next;
        }
        (s, None)
    }

    fn crossing(&self, a: [f64; 2], b: [f64; 2]) -> Option<f64> {
        match &self.target {
            OdeTarget::FirstComponent { value } => {
                let (da, db) = (a[0] - value, b[0] - value);
                if db == 0.0 {
                    Some(1.0)
                } else if da * db < 0.0 {
                    Some(da / (da - db))
                } else {
                    None
                }
            }
            OdeTarget::Full { value, tol } => {
                let d = (b[0] - value[0]).hypot(b.get(1).copied().unwrap_or(0.0) - value.get(1).copied().unwrap_or(0.0));
                (d <= *tol).then_some(1.0)
            }
        }
    }

    fn at_target(&self, y: [f64; 2]) -> bool {
        match &self.target {
            OdeTarget::FirstComponent { value } => y[0] == *value,
            OdeTarget::Full { value, tol } => {
                (y[0] - value[0]).hypot(y[1] - value.get(1).copied().unwrap_or(0.0)) <= *tol
            }
        }
    }
}

/// Best bang-bang control found by [`brute_force_min_time`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BangBang {
    pub time: MinTime,
    /// Sign of the first arc.
    pub initial_sign: f64,
    pub switch_times: Vec<f64>,
    pub sequences_explored: u64,
}

/// `f64` minimum shared across threads (nonnegative values order like their bits).
struct AtomicMin(AtomicU64);

impl AtomicMin {
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    fn offer(&self, v: f64) {
        self.0.fetch_min(v.to_bits(), Ordering::Relaxed);
    }
}

#[derive(Clone, Debug)]
struct Found {
    time: f64,
    sign: f64,
    switches: Vec<usize>,
}

fn better(a: Option<Found>, b: Option<Found>) -> Option<Found> {
    match (a, b) {
        (Some(x), Some(y)) => {
            // ties resolved by the sequence itself so that the result is order independent
            if (y.time, y.switches.len(), &y.switches) < (x.time, x.switches.len(), &x.switches) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

struct Search<'a> {
    red: &'a OdeReduction,
    dt: f64,
    steps: usize,
    best: AtomicMin,
    explored: AtomicU64,
}

impl Search<'_> {
    /// Follows an arc of sign `sign` from grid index `start`, branching into
    /// switches at every later grid point.
    fn arc(&self, y: [f64; 2], start: usize, sign: f64, left: usize, prefix: &mut Vec<usize>) -> Option<Found> {
        self.explored.fetch_add(1, Ordering::Relaxed);
        let u = sign * self.red.rho;
        let mut s = y;
        let mut found = None;
        for j in start..self.steps {
            let t = j as f64 * self.dt;
            if t >= self.best.get() {
                break;
            }
            if left > 0 && j > start {
                prefix.push(j);
                let sub = self.arc(s, j, -sign, left - 1, prefix);
                prefix.pop();
                found = better(found, sub);
            }
            let (next, hit) = self.advance(s, u, t);
            if let Some(th) = hit {
                self.best.offer(th);
                found = better(
                    found,
                    Some(Found {
                        time: th,
                        sign: 0.0,
                        switches: prefix.clone(),
                    }),
                );
                break;
            }
            s = next;
        }
        found
    }

    fn advance(&self, s: [f64; 2], u: f64, t: f64) -> ([f64; 2], Option<f64>) {
        let (next, off) = self.red.advance(s, u, self.dt);
        (next, off.map(|o| t + o))
    }
}

/// Smallest time at which a bang control `±ρ` with at most `switch_budget`
/// switches on the grid `k·Δt` reaches the target.
pub fn brute_force_min_time(red: &OdeReduction, dt: f64, switch_budget: usize) -> Result<BangBang> {
    brute_force_with(red, dt, switch_budget, Execution::default())
}

pub fn brute_force_with(red: &OdeReduction, dt: f64, switch_budget: usize, exec: Execution) -> Result<BangBang> {
    red.validate()?;
    if !(dt.is_finite() && dt > 0.0 && dt < red.horizon) {
        return Err(invalid("dt", "must be positive and below the horizon"));
    }
    if switch_budget > 3 {
        return Err(invalid("switch_budget", format!("at most 3, got {switch_budget}")));
    }
    if red.at_target(red.state0()) {
        return Ok(BangBang {
            time: MinTime::Reached { time: 0.0 },
            initial_sign: 1.0,
            switch_times: Vec::new(),
            sequences_explored: 0,
        });
    }
    let search = Search {
        red,
        dt,
        steps: (red.horizon / dt).ceil() as usize,
        best: AtomicMin(AtomicU64::new(f64::INFINITY.to_bits())),
        explored: AtomicU64::new(0),
    };
    // first arc per sign, then fan out over the first switch point
    let mut roots = Vec::new();
    for sign in [1.0, -1.0] {
        let mut s = red.state0();
        for j in 0..search.steps {
            roots.push((sign, j, s));
            let (next, _) = red.advance(s, sign * red.rho, dt);
            s = next;
            if !s[0].is_finite() || !s[1].is_finite() {
                break;
            }
        }
    }
    let results = parallel::map(exec, &roots, |&(sign, j, s)| {
        let tag = |f: Option<Found>| f.map(|x| Found { sign, ..x });
        if j == 0 {
            // the unswitched arc, also carrying all branches of its own level
            return tag(search.arc(s, 0, sign, 0, &mut Vec::new()));
        }
        if switch_budget == 0 || j as f64 * dt >= search.best.get() {
            return None;
        }
        let mut prefix = vec![j];
        tag(search.arc(s, j, -sign, switch_budget - 1, &mut prefix))
    });
    let best = results.into_iter().fold(None, better);
    let explored = search.explored.load(Ordering::Relaxed);
    Ok(match best {
        Some(f) => BangBang {
            time: MinTime::Reached { time: f.time },
            initial_sign: f.sign,
            switch_times: f.switches.iter().map(|&j| j as f64 * dt).collect(),
            sequences_explored: explored,
        },
        None => BangBang {
            time: MinTime::Infeasible,
            initial_sign: 1.0,
            switch_times: Vec::new(),
            sequences_explored: explored,
        },
    })
}
