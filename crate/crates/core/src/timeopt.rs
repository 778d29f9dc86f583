//! Penalized minimal-time problem
//!
//! `J_ε(T, u) = T + (1/2ε)‖P(y(T) - y_tar)‖²_H + (ε/2)∫‖Pu‖²_U [+ (1/2)∫‖h‖²_U]`,
//! where `h(t) = ∫₀ᵗ P(u - u_ref)` is only present when a reference control is set.
//!
//! The inner problem (fixed `T`) is solved by a damped fixed-point iteration on
//! `u = (εF + N_K)^{-1}(-(B^* p̄ + G))`, the outer one by golden-section search in `T`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointState};
use crate::error::{invalid, Error, Result};
use crate::forward::{ForwardOptions, Integrator, Trajectory};
use crate::hilbert::{duality_map_F, resolvent_eF_NK, Field};
use crate::operators::{ControlMap, OperatorSpec};
use crate::time::{Control, TimeGrid};

/// Controls of the damped fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    /// Converged when the stationarity residual is below `tol · ρ √T`; the
    /// iteration also stops (unconverged) once an accepted step moves less than that.
    pub tol: f64,
    pub max_iterations: usize,
    pub theta0: f64,
    /// Give up (non-converged) once the damping drops below this.
    pub theta_min: f64,
    /// Iteration cap for the probes of the `T` search; the selected horizon is
    /// then re-solved with `max_iterations`.
    pub probe_iterations: usize,
    /// History length of the Anderson extrapolation tried before each damped step (0 disables it).
    pub anderson_depth: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
            theta0: 0.5,
            theta_min: 1e-10,
            probe_iterations: 50,
            anderson_depth: 5,
        }
    }
}

/// Golden-section settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterOptions {
    /// Stop when the bracket is narrower than `width_tol · T_hi`.
    pub width_tol: f64,
    /// Relative step of the central difference reported as `dJ/dT`.
    pub fd_step: f64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            width_tol: 1e-4,
            fd_step: 1e-6,
        }
    }
}

/// `(P_ε)`: data of the penalized problem.
#[derive(Clone, Debug)]
pub struct PenalizedProblem {
    pub spec: OperatorSpec,
    pub map: ControlMap,
    pub y0: Field,
    pub y_tar: Field,
    pub rho: f64,
    pub eps: f64,
    pub dt: f64,
    pub u_ref: Option<Control>,
    pub inner: InnerOptions,
    pub outer: OuterOptions,
    pub forward: ForwardOptions,
}

impl PenalizedProblem {
    pub fn new(
        spec: OperatorSpec,
        map: ControlMap,
        y0: Field,
        y_tar: Field,
        rho: f64,
        eps: f64,
        dt: f64,
    ) -> Result<Self> {
        let p = Self {
            spec,
            map,
            y0,
            y_tar,
            rho,
            eps,
            dt,
            u_ref: None,
            inner: InnerOptions::default(),
            outer: OuterOptions::default(),
            forward: ForwardOptions::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut p = self.clone();
        p.eps = eps;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid("rho", format!("must be positive, got {}", self.rho)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let i = &self.inner;
        if !(i.tol > 0.0 && i.max_iterations > 0 && i.probe_iterations > 0 && i.theta0 > 0.0 && i.theta0 <= 1.0 && i.theta_min > 0.0) {
            return Err(invalid("inner", "tol, max_iterations, theta0 in (0, 1] and theta_min must be positive"));
        }
        if !(self.outer.width_tol > 0.0 && self.outer.fd_step > 0.0) {
            return Err(invalid("outer", "width_tol and fd_step must be positive"));
        }
        self.spec.check_field(&self.y0)?;
        self.spec.check_field(&self.y_tar)?;
        if self.map.project(&self.y0.sub(&self.y_tar)).max_abs() == 0.0 {
            return Err(invalid("y0", "P y0 already equals P y_tar"));
        }
        Ok(())
    }

    /// `‖P A_H y_tar‖_H`, the surrogate for the smallest radius that can hold the target.
    pub fn target_residual(&self) -> Result<f64> {
        Ok(self.spec.roles().h_norm(&self.map.project(&self.spec.apply_A(&self.y_tar)?)))
    }

    fn integrator(&self) -> Result<Integrator<'_>> {
        Integrator::new(&self.spec, &self.map, self.forward)
    }

    fn zero_control(&self, time: TimeGrid) -> Result<Control> {
        Control::zeros(time, &self.y0, self.rho, self.map.norm())
    }

    /// Brings a warm start onto `time`, restricted to the controlled components.
    fn warm_start(&self, time: TimeGrid, warm: Option<&Control>) -> Result<Control> {
        match warm {
            None => self.zero_control(time),
            Some(c) => {
                let r = c.resample(time)?;
                let steps = r.steps().iter().map(|u| self.map.restrict(u)).collect();
                Control::new(time, steps, self.rho, self.map.norm())
            }
        }
    }
}

/// Everything derived from one forward solve.
struct Evaluation {
    traj: Trajectory,
    j: f64,
    miss: f64,
    /// `h_{k+1}` for each step (empty without `u_ref`).
    h: Vec<Field>,
}

fn evaluate(prob: &PenalizedProblem, integ: &Integrator<'_>, u: &Control, u_ref: Option<&Control>) -> Result<Evaluation> {
    let traj = integ.solve(&prob.y0, u)?;
    let time = *u.time();
    let roles = integ.roles();
    let miss = roles.h_norm(&prob.map.project(&traj.terminal().sub(&prob.y_tar)));
    let mut reg = 0.0;
    for k in 0..time.steps() {
        reg += time.step_size(k) * prob.map.control_norm(u.step(k)).powi(2);
    }
    let mut j = time.horizon() + miss * miss / (2.0 * prob.eps) + 0.5 * prob.eps * reg;
    let mut h = Vec::new();
    if let Some(r) = u_ref {
        let mut acc = u.step(0).zeros_like();
        let mut energy = 0.0;
        for k in 0..time.steps() {
            let dk = time.step_size(k);
            let d = prob.map.restrict(&prob.map.project(&u.step(k).sub(r.step(k))));
            acc.axpy(dk, &d);
            energy += dk * prob.map.control_norm(&acc).powi(2);
            h.push(acc.clone());
        }
        j += 0.5 * energy;
    }
    if !j.is_finite() {
        return Err(Error::NonFinite("penalized functional"));
    }
    Ok(Evaluation { traj, j, miss, h })
}

/// `G_k = Σ_{j ≥ k} Δt_j F(h_{j+1})`, the gradient of the `h` term per unit step.
fn h_gradient(prob: &PenalizedProblem, time: &TimeGrid, h: &[Field]) -> Result<Vec<Field>> {
    let mut out = vec![Field::zeros(prob.y0.grid(), prob.y0.components()); time.steps()];
    if h.is_empty() {
        return Ok(out);
    }
    let mut acc = out[0].clone();
    for k in (0..time.steps()).rev() {
        acc.axpy(time.step_size(k), &duality_map_F(&h[k], prob.map.norm())?);
        out[k] = prob.map.restrict(&acc);
    }
    Ok(out)
}

/// Adjoint with terminal value `G_H P(y_N - y_tar)/ε`.
fn adjoint_for(prob: &PenalizedProblem, integ: &Integrator<'_>, traj: &Trajectory) -> Result<AdjointState> {
    let miss = prob.map.project(&traj.terminal().sub(&prob.y_tar));
    let terminal = prob.map.project(&integ.roles().h_gram(&miss)).scaled(1.0 / prob.eps);
    solve_adjoint(integ, traj, &terminal)
}

/// `B^* p̄_k` on every step.
fn bstar_adjoint(prob: &PenalizedProblem, adj: &AdjointState) -> Result<Vec<Field>> {
    adj.step_means().iter().map(|p| prob.map.apply_Bstar(p)).collect()
}

/// `(εF + N_K)^{-1}(-(B^* p̄_k + G_k))` per step.
fn fixed_point_target(prob: &PenalizedProblem, time: TimeGrid, bp: &[Field], g: &[Field]) -> Result<Control> {
    let steps = bp
        .iter()
        .zip(g)
        .map(|(b, gk)| {
            let zeta = prob.map.restrict(&b.add(gk)).scaled(-1.0);
            resolvent_eF_NK(&zeta, prob.map.norm(), prob.eps, prob.rho)
        })
        .collect::<Result<Vec<_>>>()?;
    Control::new(time, steps, prob.rho, prob.map.norm())
}

fn l2_in_time(prob: &PenalizedProblem, a: &Control, b: &Control) -> f64 {
    let t = a.time();
    (0..t.steps())
        .map(|k| t.step_size(k) * prob.map.control_norm(&a.step(k).sub(b.step(k))).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn blend(prob: &PenalizedProblem, u: &Control, target: &Control, theta: f64) -> Result<Control> {
    let steps = u
        .steps()
        .iter()
        .zip(target.steps())
        .map(|(a, b)| {
            let mut c = a.scaled(1.0 - theta);
            c.axpy(theta, b);
            c
        })
        .collect();
    Control::new(*u.time(), steps, prob.rho, prob.map.norm())
}

/// Nodal values of a control scaled by `sqrt(Δt_k w_i)`.
fn flatten(u: &Control) -> Vec<f64> {
    let t = u.time();
    let mut out = Vec::with_capacity(t.steps() * u.step(0).len());
    for (k, f) in u.steps().iter().enumerate() {
        let w = f.grid().weights();
        let sd = t.step_size(k).sqrt();
        out.extend(f.values().iter().enumerate().map(|(i, v)| v * sd * w[i % w.len()].sqrt()));
    }
    out
}

fn unflatten(prob: &PenalizedProblem, like: &Control, x: &[f64]) -> Result<Control> {
    let t = *like.time();
    let mut steps = Vec::with_capacity(t.steps());
    let mut off = 0;
    for (k, f) in like.steps().iter().enumerate() {
        let w = f.grid().weights();
        let sd = t.step_size(k).sqrt();
        let vals = (0..f.len()).map(|i| x[off + i] / (sd * w[i % w.len()].sqrt())).collect();
        off += f.len();
        let mut c = prob.map.restrict(&f.with_values(vals));
        let n = prob.map.control_norm(&c);
        if n > prob.rho {
            c = c.scaled(prob.rho / n);
        }
        steps.push(c);
    }
    Control::new(t, steps, prob.rho, prob.map.norm())
}

/// Anderson extrapolation of the fixed-point map from residual differences.
struct Anderson {
    depth: usize,
    du: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            du: Vec::new(),
            df: Vec::new(),
            last: None,
        }
    }

    fn reset(&mut self) {
        self.du.clear();
        self.df.clear();
        self.last = None;
    }

    /// Records `(u, f = Φ(u) - u)` and returns the extrapolated point, if any.
    fn push(&mut self, u: Vec<f64>, f: Vec<f64>) -> Option<Vec<f64>> {
        if self.depth == 0 {
            return None;
        }
        if let Some((u0, f0)) = self.last.take() {
            self.du.push(u.iter().zip(&u0).map(|(a, b)| a - b).collect());
            self.df.push(f.iter().zip(&f0).map(|(a, b)| a - b).collect());
            if self.du.len() > self.depth {
                self.du.remove(0);
                self.df.remove(0);
            }
        }
        self.last = Some((u.clone(), f.clone()));
        let m = self.df.len();
        if m == 0 {
            return None;
        }
        let a = DMatrix::from_fn(f.len(), m, |i, j| self.df[j][i]);
        let gamma = a.svd(true, true).solve(&DVector::from_column_slice(&f), 1e-12).ok()?;
        let mut x: Vec<f64> = u.iter().zip(&f).map(|(a, b)| a + b).collect();
        for j in 0..m {
            let g = gamma[j];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi -= g * (self.du[j][i] + self.df[j][i]);
            }
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// `J_ε(T, u)`; `u` must live on a grid with horizon `T`.
pub fn eval_J_eps(prob: &PenalizedProblem, horizon: f64, u: &Control) -> Result<f64> {
    prob.validate()?;
    if (u.time().horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::Shape(format!(
            "control horizon {} differs from T = {horizon}",
            u.time().horizon()
        )));
    }
    let integ = prob.integrator()?;
    let u_ref = prob.u_ref.as_ref().map(|r| r.resample(*u.time())).transpose()?;
    Ok(evaluate(prob, &integ, u, u_ref.as_ref())?.j)
}

/// Accepted iterates over which a negligible decrease of `J` ends the iteration.
const STAGNATION_WINDOW: usize = 5;

/// Converged (or best) iterate of the inner problem at a fixed horizon.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub control: Control,
    pub trajectory: Trajectory,
    pub adjoint: AdjointState,
    pub j: f64,
    pub miss: f64,
    /// `‖u - (εF + N_K)^{-1}(-(B^* p̄ + G))‖_{L²(0,T;U)}`
    pub stationarity: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// `J` after each accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
    h: Vec<Field>,
    h_grad: Vec<Field>,
}

/// Damped fixed-point iteration for the control at horizon `T`.
pub fn inner_solve_control(prob: &PenalizedProblem, horizon: f64, warm: Option<&Control>) -> Result<InnerSolution> {
    inner_capped(prob, horizon, warm, prob.inner.max_iterations)
}

fn inner_capped(prob: &PenalizedProblem, horizon: f64, warm: Option<&Control>, cap: usize) -> Result<InnerSolution> {
    prob.validate()?;
    let time = TimeGrid::new(horizon, prob.dt)?;
    let integ = prob.integrator()?;
    let u_ref = prob.u_ref.as_ref().map(|r| r.resample(time)).transpose()?;
    let tol = prob.inner.tol * prob.rho * time.horizon().sqrt();

    let mut u = prob.warm_start(time, warm)?;
    let mut eval = evaluate(prob, &integ, &u, u_ref.as_ref())?;
    let mut evaluations = 1;
    let mut history = vec![eval.j];
    let mut theta = prob.inner.theta0;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut anderson = Anderson::new(prob.inner.anderson_depth);
    let mut change = f64::INFINITY;
    loop {
        let adj = adjoint_for(prob, &integ, &eval.traj)?;
        let bp = bstar_adjoint(prob, &adj)?;
        let g = h_gradient(prob, &time, &eval.h)?;
        let target = fixed_point_target(prob, time, &bp, &g)?;
        let res = l2_in_time(prob, &u, &target);
        if res <= tol {
            converged = true;
        }
        let flat = history.len() > STAGNATION_WINDOW
            && history[history.len() - 1 - STAGNATION_WINDOW] - eval.j <= 1e-12 * eval.j.abs().max(1.0);
        if converged || stalled || flat || change <= tol || iterations >= cap {
            return Ok(InnerSolution {
                control: u,
                trajectory: eval.traj,
                adjoint: adj,
                j: eval.j,
                miss: eval.miss,
                stationarity: res,
                iterations,
                evaluations,
                converged,
                history,
                h: eval.h,
                h_grad: g,
            });
        }
        iterations += 1;
        let uf = flatten(&u);
        let ff: Vec<f64> = flatten(&target).iter().zip(&uf).map(|(a, b)| a - b).collect();
        if let Some(x) = anderson.push(uf, ff) {
            let cand = unflatten(prob, &u, &x)?;
            let ce = evaluate(prob, &integ, &cand, u_ref.as_ref())?;
            evaluations += 1;
            if ce.j < eval.j {
                change = l2_in_time(prob, &u, &cand);
                u = cand;
                eval = ce;
                history.push(eval.j);
                continue;
            }
            anderson.reset();
        }
        loop {
            let cand = blend(prob, &u, &target, theta)?;
            let ce = evaluate(prob, &integ, &cand, u_ref.as_ref())?;
            evaluations += 1;
            if ce.j <= eval.j + 1e-14 * eval.j.abs().max(1.0) {
                change = theta * res;
                u = cand;
                eval = ce;
                history.push(eval.j);
                theta = (2.0 * theta).min(1.0);
                break;
            }
            theta *= 0.5;
            if theta < prob.inner.theta_min {
                stalled = true;
                break;
            }
        }
    }
}

/// Residuals and counters of a penalized solve at its selected horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub eps: f64,
    pub rho: f64,
    pub dt: f64,
    /// `T_ε*`
    pub t_opt: f64,
    pub j_value: f64,
    /// `‖P(y(T) - y_tar)‖_H`
    pub terminal_miss: f64,
    /// Inner fixed-point (stationarity) residual.
    pub stationarity_residual: f64,
    /// Time average of the `T`-stationarity identity residual at `ε` level.
    pub transversality_residual: f64,
    /// Time average of `|ρ‖B^*p‖_* + (A_H y, p) - 1|`.
    pub maximum_principle_residual: f64,
    /// Time average of `‖u - ρF^{-1}(-B^*p)/‖B^*p‖_*‖_U` over steps with `B^*p ≠ 0`.
    pub bang_bang_residual: f64,
    pub bang_bang_skipped: usize,
    /// Share of steps with `‖u‖_U ≥ 0.99ρ`.
    pub saturation_fraction: f64,
    /// Central difference of `J_ε` in `T` at `T_ε*`.
    pub dj_dt: f64,
    /// `∫‖Pu‖²_U`
    pub control_energy: f64,
    /// `∫‖h‖²_U` (zero without a reference control).
    pub h_energy: f64,
    /// `ρ - ‖P A_H y_tar‖_H`; nonpositive values flag a target the bound cannot hold.
    pub rho_margin: f64,
    pub inner_iterations: usize,
    pub inner_evaluations: usize,
    pub total_inner_iterations: usize,
    pub probes: usize,
    pub inner_converged: bool,
    /// The minimizer sits at an end of the bracket.
    pub boundary: bool,
    pub bracket: [f64; 2],
}

/// A penalized optimum with its control, state and adjoint.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub report: OptimalityReport,
    pub solution: InnerSolution,
}

impl Optimum {
    pub fn control(&self) -> &Control {
        &self.solution.control
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.solution.trajectory
    }

    pub fn adjoint(&self) -> &AdjointState {
        &self.solution.adjoint
    }

    /// CSV of `t,u_norm,bstar_p_norm,max_principle` per step.
    pub fn profile_csv(&self, prob: &PenalizedProblem) -> Result<String> {
        let rows = profile(prob, &self.solution)?;
        let mut s = String::from("t,u_norm,bstar_p_norm,max_principle\n");
        for r in rows {
            let _ = writeln!(s, "{},{},{},{}", r.t, r.u_norm, r.bp_norm, r.max_principle);
        }
        Ok(s)
    }
}

struct ProfileRow {
    t: f64,
    dt: f64,
    u_norm: f64,
    bp_norm: f64,
    max_principle: f64,
    bang_bang: Option<f64>,
    transversality: f64,
}

fn profile(prob: &PenalizedProblem, sol: &InnerSolution) -> Result<Vec<ProfileRow>> {
    let time = *sol.control.time();
    let norm = prob.map.norm();
    let bp = bstar_adjoint(prob, &sol.adjoint)?;
    let h_end = sol.h.last().map_or(0.0, |h| prob.map.control_norm(h).powi(2));
    let bp_scale = bp.iter().fold(0.0f64, |m, b| m.max(prob.map.control_dual_norm(b)));
    let mut rows = Vec::with_capacity(time.steps());
    for k in 0..time.steps() {
        let u = prob.map.restrict(sol.control.step(k));
        let p = sol.adjoint.step_mean(k);
        let y = sol.trajectory.state(k + 1);
        let ay_p = prob.spec.apply_A(y)?.weighted_dot(p);
        let bpn = prob.map.control_dual_norm(&bp[k]);
        let un = prob.map.control_norm(&u);
        let max_principle = (prob.rho * bpn + ay_p - 1.0).abs();
        let bang_bang = if bpn > 1e-12 * bp_scale.max(f64::MIN_POSITIVE) {
            let sign = prob.map.negative_sign(&bp[k], prob.rho)?;
            Some(prob.map.control_norm(&u.sub(&sign)))
        } else {
            None
        };
        let fu = duality_map_F(&u, norm)?;
        let g = &sol.h_grad[k];
        let mut z = prob.map.restrict(&bp[k].add(g));
        z.axpy(prob.eps, &fu);
        let transversality = (prob.rho * prob.map.control_dual_norm(&z) + ay_p + u.weighted_dot(g) + 0.5 * prob.eps * un * un
            - 1.0
            - 0.5 * h_end)
            .abs();
        rows.push(ProfileRow {
            t: time.time(k),
            dt: time.step_size(k),
            u_norm: un,
            bp_norm: bpn,
            max_principle,
            bang_bang,
            transversality,
        });
    }
    Ok(rows)
}

fn report_for(
    prob: &PenalizedProblem,
    sol: &InnerSolution,
    dj_dt: f64,
    probes: usize,
    total_inner: usize,
    boundary: bool,
    bracket: [f64; 2],
) -> Result<OptimalityReport> {
    let time = *sol.control.time();
    let horizon = time.horizon();
    let rows = profile(prob, sol)?;
    let avg = |f: &dyn Fn(&ProfileRow) -> f64| rows.iter().map(|r| r.dt * f(r)).sum::<f64>() / horizon;
    let (mut bb_sum, mut bb_time, mut skipped) = (0.0, 0.0, 0);
    for r in &rows {
        match r.bang_bang {
            Some(v) => {
                bb_sum += r.dt * v;
                bb_time += r.dt;
            }
            None => skipped += 1,
        }
    }
    let saturated = rows.iter().filter(|r| r.u_norm >= 0.99 * prob.rho).count();
    let control_energy = rows.iter().map(|r| r.dt * r.u_norm * r.u_norm).sum();
    let h_energy = sol
        .h
        .iter()
        .enumerate()
        .map(|(k, h)| time.step_size(k) * prob.map.control_norm(h).powi(2))
        .sum();
    Ok(OptimalityReport {
        eps: prob.eps,
        rho: prob.rho,
        dt: prob.dt,
        t_opt: horizon,
        j_value: sol.j,
        terminal_miss: sol.miss,
        stationarity_residual: sol.stationarity,
        transversality_residual: avg(&|r| r.transversality),
        maximum_principle_residual: avg(&|r| r.max_principle),
        bang_bang_residual: if bb_time > 0.0 { bb_sum / bb_time } else { 0.0 },
        bang_bang_skipped: skipped,
        saturation_fraction: saturated as f64 / rows.len() as f64,
        dj_dt,
        control_energy,
        h_energy,
        rho_margin: prob.rho - prob.target_residual()?,
        inner_iterations: sol.iterations,
        inner_evaluations: sol.evaluations,
        total_inner_iterations: total_inner,
        probes,
        inner_converged: sol.converged,
        boundary,
        bracket,
    })
}

/// Golden-section search for `T_ε*` in `bracket`.
pub fn outer_minimize(prob: &PenalizedProblem, bracket: [f64; 2], warm: Option<&Control>) -> Result<Optimum> {
    prob.validate()?;
    let [lo, hi] = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(invalid("t_bracket", format!("need 0 < T_lo < T_hi, got [{lo}, {hi}]")));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let width = prob.outer.width_tol * hi;
    let mut probes = 0;
    let mut total_inner = 0;
    let mut last: Option<Control> = warm.cloned();
    let mut solve = |t: f64, last: &mut Option<Control>| -> Result<InnerSolution> {
        let s = inner_capped(prob, t, last.as_ref(), prob.inner.probe_iterations)?;
        probes += 1;
        total_inner += s.iterations;
        // unconverged iterates make poor starting points on the other side of T*
        if s.converged {
            *last = Some(s.control.clone());
        }
        Ok(s)
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut sc = solve(c, &mut last)?;
    let mut sd = solve(d, &mut last)?;
    while b - a > width {
        if sc.j <= sd.j {
            b = d;
            d = c;
            sd = sc;
            c = b - inv_phi * (b - a);
            sc = solve(c, &mut last)?;
        } else {
            a = c;
            c = d;
            sc = sd;
            d = a + inv_phi * (b - a);
            sd = solve(d, &mut last)?;
        }
    }
    let probe = if sc.j <= sd.j { sc } else { sd };
    let t = probe.control.time().horizon();
    let best = if probe.converged {
        probe
    } else {
        let s = inner_solve_control(prob, t, Some(&probe.control))?;
        total_inner += s.iterations;
        s
    };
    let boundary = t - lo <= 2.0 * width || hi - t <= 2.0 * width;
    let step = prob.outer.fd_step * t;
    let jp = inner_solve_control(prob, t + step, Some(&best.control))?.j;
    let jm = inner_solve_control(prob, t - step, Some(&best.control))?.j;
    let dj_dt = (jp - jm) / (2.0 * step);
    let report = report_for(prob, &best, dj_dt, probes, total_inner, boundary, bracket)?;
    Ok(Optimum { report, solution: best })
}

/// Solves along a decreasing `ε` schedule, warm-starting each level from the previous one.
/// With `chain_reference`, each level uses the previous optimum as `u_ref`.
pub fn eps_continuation(
    prob: &PenalizedProblem,
    schedule: &[f64],
    bracket: [f64; 2],
    chain_reference: bool,
) -> Result<Vec<Optimum>> {
    if schedule.is_empty() {
        return Err(invalid("eps_schedule", "must not be empty"));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("eps_schedule", "must be strictly decreasing"));
    }
    let mut out: Vec<Optimum> = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let mut p = prob.with_eps(eps)?;
        let warm = out.last().map(|o| o.solution.control.clone());
        if chain_reference {
            if let Some(w) = &warm {
                p.u_ref = Some(w.clone());
            }
        }
        out.push(outer_minimize(&p, bracket, warm.as_ref())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Boundary, Grid, NormTag};
    use crate::operators::{Nonlinearity, OperatorKind};

    fn scalar(eps: f64, dt: f64) -> PenalizedProblem {
        let g = Grid::line(1.0, 3, Boundary::Neumann).unwrap();
        let spec = OperatorSpec::new(
            OperatorKind::PotentialDrift {
                beta: Nonlinearity::Linear { slope: 0.0 },
                a1: 1.0,
                drift: [0.0; 2],
            },
            &g,
        )
        .unwrap();
        let y0 = Field::zeros(&g, 1);
        let y_tar = Field::constant(&g, 1, 0.5);
        PenalizedProblem::new(spec, ControlMap::identity(NormTag::L2), y0, y_tar, 1.0, eps, dt).unwrap()
    }

    #[test]
    fn short_horizon_saturates() {
        let p = scalar(1e-2, 1e-2);
        let s = inner_solve_control(&p, 0.4, None).unwrap();
        assert!(s.converged);
        assert!(s.control.norms().iter().all(|n| (n - 1.0).abs() < 1e-12));
        assert!(s.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn reference_equal_to_control_adds_nothing() {
        let mut p = scalar(1e-1, 1e-2);
        let t = TimeGrid::new(0.5, 1e-2).unwrap();
        let u = Control::constant(t, &Field::constant(p.y0.grid(), 1, 0.7), 1.0, NormTag::L2).unwrap();
        let base = eval_J_eps(&p, 0.5, &u).unwrap();
        p.u_ref = Some(u.clone());
        assert!((eval_J_eps(&p, 0.5, &u).unwrap() - base).abs() < 1e-14);
    }

    #[test]
    fn rejects_target_already_reached() {
        let p = scalar(1e-1, 1e-2);
        let bad = PenalizedProblem::new(p.spec.clone(), p.map.clone(), p.y0.clone(), p.y0.clone(), 1.0, 0.1, 0.01);
        assert!(matches!(bad, Err(Error::InvalidParameter { name: "y0", .. })));
        assert!(p.with_eps(0.0).is_err());
    }
}
