//! Backward Euler integration of `y' + A_H y = B u` with Newton's method.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::Field;
use crate::operators::{ControlMap, OperatorSpec, SpaceRoles};
use crate::time::{Control, TimeGrid};

type Lu = LU<f64, Dyn, Dyn>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardOptions {
    /// Newton stops when `‖F(x)‖_∞ ≤ tol · (1 + ‖y‖_∞)`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Maximum number of step halvings after a Newton failure.
    pub max_halvings: u32,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton: 30,
            max_halvings: 6,
        }
    }
}

/// Per-state diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub h_norm: f64,
    pub v_norm: f64,
    pub ah_norm: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub substeps: usize,
}

/// States `y_0, …, y_N` of a forward solve with diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    time: TimeGrid,
    states: Vec<Field>,
    /// Substep states of each step (the last one is `y_{k+1}`).
    substates: Vec<Vec<Field>>,
    diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        time: TimeGrid,
        states: Vec<Field>,
        substates: Vec<Vec<Field>>,
        diagnostics: Vec<StepDiagnostics>,
    ) -> Self {
        Self {
            time,
            states,
            substates,
            diagnostics,
        }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &Field {
        &self.states[k]
    }

    pub fn terminal(&self) -> &Field {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn substates(&self, k: usize) -> &[Field] {
        &self.substates[k]
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `max_k ‖y_k‖_V`
    pub fn max_v_norm(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |m, d| m.max(d.v_norm))
    }

    /// `Σ_k dt_k ‖A_H y_{k+1}‖²_H`
    pub fn ah_energy(&self) -> f64 {
        (0..self.time.steps())
            .map(|k| self.time.step_size(k) * self.diagnostics[k + 1].ah_norm.powi(2))
            .sum()
    }

    /// CSV with columns `t,h_norm,v_norm,ah_norm,newton_iterations,residual,substeps`
    /// and optionally one column per nodal value.
    pub fn to_csv(&self, include_nodes: bool) -> String {
        let mut s = String::from("t,h_norm,v_norm,ah_norm,newton_iterations,residual,substeps");
        if include_nodes {
            let y = &self.states[0];
            for c in 0..y.components() {
                for i in 0..y.nodes() {
                    let _ = write!(s, ",y{c}_{i}");
                }
            }
        }
        s.push('\n');
        for (k, (y, d)) in self.states.iter().zip(&self.diagnostics).enumerate() {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}",
                self.time.time(k),
                d.h_norm,
                d.v_norm,
                d.ah_norm,
                d.newton_iterations,
                d.residual,
                d.substeps
            );
            if include_nodes {
                for v in y.values() {
                    let _ = write!(s, ",{v}");
                }
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn diagnostics_for(spec: &OperatorSpec, roles: &SpaceRoles, y: &Field) -> Result<StepDiagnostics> {
    Ok(StepDiagnostics {
        h_norm: roles.h_norm(y),
        v_norm: roles.v_norm(y),
        ah_norm: roles.h_norm(&spec.apply_A(y)?),
        newton_iterations: 0,
        residual: 0.0,
        substeps: 0,
    })
}

struct StepOutcome {
    states: Vec<Field>,
    iterations: usize,
    residual: f64,
}

/// Reusable integrator; caches factorizations of `I + h A'` for linear operators.
pub struct Integrator<'a> {
    spec: &'a OperatorSpec,
    map: &'a ControlMap,
    opts: ForwardOptions,
    roles: SpaceRoles,
    linear_jacobian: Option<DMatrix<f64>>,
    cache: RefCell<Vec<(u64, Rc<Lu>, Option<Rc<Lu>>)>>,
}

const CACHE_SLOTS: usize = 6;

impl<'a> Integrator<'a> {
    pub fn new(spec: &'a OperatorSpec, map: &'a ControlMap, opts: ForwardOptions) -> Result<Self> {
        if !(opts.newton_tol > 0.0) || opts.max_newton == 0 {
            return Err(invalid("newton_tol", "tolerance and iteration cap must be positive"));
        }
        let linear_jacobian = if spec.is_linear() {
            Some(spec.jacobian(&Field::zeros(spec.grid(), spec.components()))?)
        } else {
            None
        };
        Ok(Self {
            spec,
            map,
            opts,
            roles: spec.roles(),
            linear_jacobian,
            cache: RefCell::new(Vec::new()),
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        self.spec
    }

    pub fn map(&self) -> &ControlMap {
        self.map
    }

    pub fn roles(&self) -> &SpaceRoles {
        &self.roles
    }

    fn system_matrix(&self, x: &Field, h: f64) -> Result<DMatrix<f64>> {
        let j = match &self.linear_jacobian {
            Some(j) => j.clone(),
            None => self.spec.jacobian(x)?,
        };
        let n = j.nrows();
        Ok(DMatrix::identity(n, n) + j * h)
    }

    fn cached(&self, h: f64, transpose: bool) -> Result<Rc<Lu>> {
        let key = h.to_bits();
        let mut cache = self.cache.borrow_mut();
        if let Some(pos) = cache.iter().position(|e| e.0 == key) {
            let entry = &mut cache[pos];
            if !transpose {
                return Ok(entry.1.clone());
            }
            if let Some(t) = &entry.2 {
                return Ok(t.clone());
            }
            let m = self.system_matrix(&Field::zeros(self.spec.grid(), self.spec.components()), h)?;
            let t = Rc::new(m.transpose().lu());
            entry.2 = Some(t.clone());
            return Ok(t);
        }
        let m = self.system_matrix(&Field::zeros(self.spec.grid(), self.spec.components()), h)?;
        let lu = Rc::new(m.clone().lu());
        let t = if transpose { Some(Rc::new(m.transpose().lu())) } else { None };
        if cache.len() >= CACHE_SLOTS {
            cache.remove(0);
        }
        cache.push((key, lu.clone(), t.clone()));
        Ok(if transpose { t.unwrap() } else { lu })
    }

    /// Factorization of `I + h A'(x)` (or its transpose).
    pub(crate) fn factor(&self, x: &Field, h: f64, transpose: bool) -> Result<Rc<Lu>> {
        if self.linear_jacobian.is_some() {
            return self.cached(h, transpose);
        }
        let m = self.system_matrix(x, h)?;
        Ok(Rc::new(if transpose { m.transpose().lu() } else { m.lu() }))
    }

    /// Solves `x + h A(x) = rhs` by Newton's method starting from `guess`.
    fn newton(&self, guess: &Field, rhs: &Field, h: f64, scale: f64) -> Result<(Field, usize, f64)> {
        let tol = self.opts.newton_tol * (1.0 + scale);
        let residual_of = |x: &Field| -> Result<(Field, f64)> {
            let mut r = x.sub(rhs);
            r.axpy(h, &self.spec.apply_A(x)?);
            let n = r.max_abs();
            Ok((r, n))
        };
        if self.linear_jacobian.is_some() {
            let lu = self.cached(h, false)?;
            let sol = lu
                .solve(&DVector::from_column_slice(rhs.values()))
                .ok_or(Error::SingularSystem { step: 0 })?;
            let x = rhs.with_values(sol.as_slice().to_vec());
            let (_, res) = residual_of(&x)?;
            if !res.is_finite() {
                return Err(Error::NewtonFailure {
                    iterations: 1,
                    residual: res,
                });
            }
            return Ok((x, 1, res));
        }
        let mut x = guess.clone();
        let (mut r, mut res) = residual_of(&x)?;
        if !res.is_finite() {
            return Err(Error::NewtonFailure { iterations: 0, residual: res });
        }
        for it in 0..self.opts.max_newton {
            if res <= tol {
                return Ok((x, it, res));
            }
            let lu = self.factor(&x, h, false)?;
            let delta = lu
                .solve(&DVector::from_column_slice(r.values()))
                .ok_or(Error::NewtonFailure {
                    iterations: it,
                    residual: res,
                })?;
            let delta = x.with_values(delta.as_slice().to_vec());
            // backtracking on the residual
            let mut lambda = 1.0;
            loop {
                let mut trial = x.clone();
                trial.axpy(-lambda, &delta);
                let (tr, tres) = residual_of(&trial)?;
                if tres.is_finite() && (tres < res || lambda < 1e-3) {
                    x = trial;
                    r = tr;
                    res = tres;
                    break;
                }
                if lambda < 1e-3 {
                    return Err(Error::NewtonFailure { iterations: it, residual: tres });
                }
                lambda *= 0.5;
            }
            if !res.is_finite() {
                break;
            }
        }
        if res <= tol {
            return Ok((x, self.opts.max_newton, res));
        }
        Err(Error::NewtonFailure {
            iterations: self.opts.max_newton,
            residual: res,
        })
    }

    fn step(&self, y: &Field, bu: &Field, dt: f64) -> std::result::Result<StepOutcome, f64> {
        let scale = y.max_abs();
        let mut last = f64::NAN;
        for halving in 0..=self.opts.max_halvings {
            let m = 1usize << halving;
            let h = dt / m as f64;
            let mut x = y.clone();
            let mut states = Vec::with_capacity(m);
            let mut iterations = 0;
            let mut residual: f64 = 0.0;
            let mut ok = true;
            for _ in 0..m {
                let mut rhs = x.clone();
                rhs.axpy(h, bu);
                match self.newton(&x, &rhs, h, scale) {
                    Ok((next, it, res)) => {
                        iterations += it;
                        residual = residual.max(res);
                        states.push(next.clone());
                        x = next;
                    }
                    Err(Error::NewtonFailure { residual, .. }) => {
                        last = residual;
                        ok = false;
                        break;
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(StepOutcome {
                    states,
                    iterations,
                    residual,
                });
            }
        }
        Err(last)
    }

    /// One backward Euler step `y⁺ + Δt A_H(y⁺) = y + Δt B u`.
    pub fn step_implicit(&self, y: &Field, u: &Field, dt: f64) -> Result<Field> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        self.spec.check_field(y)?;
        let bu = self.map.apply_B(u)?;
        self.step(y, &bu, dt)
            .map(|o| o.states.into_iter().last().unwrap())
            .map_err(|residual| Error::StepFailure {
                step: 0,
                halvings: self.opts.max_halvings,
                residual,
            })
    }

    /// Full forward solve over the control's time grid.
    pub fn solve(&self, y0: &Field, control: &Control) -> Result<Trajectory> {
        self.spec.check_field(y0)?;
        if !y0.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        let time = *control.time();
        let mut states = Vec::with_capacity(time.steps() + 1);
        let mut substates = Vec::with_capacity(time.steps());
        let mut diagnostics = Vec::with_capacity(time.steps() + 1);
        states.push(y0.clone());
        let d0 = diagnostics_for(self.spec, &self.roles, y0)?;
        if !(d0.h_norm.is_finite() && d0.v_norm.is_finite() && d0.ah_norm.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        diagnostics.push(d0);
        for k in 0..time.steps() {
            let bu = self.map.apply_B(control.step(k))?;
            let y = &states[k];
            let out = self.step(y, &bu, time.step_size(k)).map_err(|residual| Error::StepFailure {
                step: k,
                halvings: self.opts.max_halvings,
                residual,
            })?;
            let next = out.states.last().unwrap().clone();
            let mut d = diagnostics_for(self.spec, &self.roles, &next)?;
            d.newton_iterations = out.iterations;
            d.residual = out.residual;
            d.substeps = out.states.len();
            if !(d.h_norm.is_finite() && d.v_norm.is_finite() && d.ah_norm.is_finite()) {
                return Err(Error::NonFinite("trajectory diagnostics"));
            }
            diagnostics.push(d);
            substates.push(out.states);
            states.push(next);
        }
        Ok(Trajectory {
            time,
            states,
            substates,
            diagnostics,
        })
    }
}

/// Convenience wrapper: one implicit step with default options.
pub fn step_implicit(spec: &OperatorSpec, map: &ControlMap, y: &Field, u: &Field, dt: f64) -> Result<Field> {
    Integrator::new(spec, map, ForwardOptions::default())?.step_implicit(y, u, dt)
}

/// Convenience wrapper: forward solve with default options.
pub fn solve_forward(spec: &OperatorSpec, map: &ControlMap, y0: &Field, control: &Control) -> Result<Trajectory> {
    Integrator::new(spec, map, ForwardOptions::default())?.solve(y0, control)
}
