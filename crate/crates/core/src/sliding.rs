//! Sign feedback `u = -ρ Sign(B^* P(y - y_tar))`, hit detection, the explicit
//! hit-time bound and post-hit sliding along `P y = P y_tar`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::{diagnostics_for, ForwardOptions, Integrator, Trajectory};
use crate::operators::SpaceRoles;
use crate::hilbert::Field;
use crate::operators::{ControlMap, ControlMode, OperatorSpec};
use crate::time::TimeGrid;

/// `-ρ F^{-1}(v)/‖v‖_{U*}` with `v = B^*(G_H P(y - y_tar))`; zero when `v = 0`.
pub fn sign_feedback(spec: &OperatorSpec, map: &ControlMap, y: &Field, y_tar: &Field, rho: f64) -> Result<Field> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    let roles = spec.roles();
    let v = map.apply_Bstar(&roles.h_gram(&map.project(&y.sub(y_tar))))?;
    map.negative_sign(&v, rho)
}

/// `T_* = (1/C₁) ln[(ργ_B - a)/(ργ_B - a - C₁ d₀)]`, or `d₀/(ργ_B - a)` when `C₁ = 0`.
/// `None` when the radius is too small for the bound to apply.
pub fn hit_time_bound(a: f64, c1: f64, gamma_b: f64, rho: f64, d0: f64) -> Option<f64> {
    let margin = rho * gamma_b - a;
    if !(margin > 0.0) || !(c1 >= 0.0) {
        return None;
    }
    if c1 * d0 < 1e-12 * margin {
        return Some(d0 / margin);
    }
    if margin <= c1 * d0 {
        return None;
    }
    Some(-(-c1 * d0 / margin).ln_1p() / c1)
}

/// Constants entering the hit-time bound, typically from an audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub gamma_b: f64,
}

#[derive(Clone, Debug)]
pub struct SlidingOptions {
    pub rho: f64,
    pub t_max: f64,
    pub dt: f64,
    pub hit_tol: f64,
    /// Switch to the equivalent control after the hit (otherwise keep the feedback).
    pub continuation: bool,
    pub bound: Option<BoundConstants>,
    pub forward: ForwardOptions,
}

impl SlidingOptions {
    pub fn new(rho: f64, t_max: f64, dt: f64, hit_tol: f64) -> Self {
        Self {
            rho,
            t_max,
            dt,
            hit_tol,
            continuation: true,
            bound: None,
            forward: ForwardOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SlidingRun {
    pub trajectory: Trajectory,
    /// Control applied on each step.
    pub controls: Vec<Field>,
    pub control_norms: Vec<f64>,
    /// `‖P(y_k - y_tar)‖_H` at every grid time.
    pub deviations: Vec<f64>,
    pub hit_time: Option<f64>,
    pub hit_step: Option<usize>,
    pub t_star: Option<f64>,
    /// `‖P A_H y_tar‖_H`
    pub target_residual: f64,
    pub rho: f64,
    pub hit_tol: f64,
}

/// JSON-friendly summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlidingSummary {
    pub hit_time: Option<f64>,
    pub t_star: Option<f64>,
    pub rho: f64,
    pub hit_tol: f64,
    pub dt: f64,
    pub horizon: f64,
    pub initial_deviation: f64,
    pub final_deviation: f64,
    pub max_post_hit_deviation: Option<f64>,
    pub target_residual: f64,
}

impl SlidingRun {
    pub fn summary(&self) -> SlidingSummary {
        let post = self
            .hit_step
            .map(|k| self.deviations[k..].iter().fold(0.0f64, |m, &d| m.max(d)));
        SlidingSummary {
            hit_time: self.hit_time,
            t_star: self.t_star,
            rho: self.rho,
            hit_tol: self.hit_tol,
            dt: self.trajectory.time().dt(),
            horizon: self.trajectory.time().horizon(),
            initial_deviation: self.deviations[0],
            final_deviation: *self.deviations.last().unwrap(),
            max_post_hit_deviation: post,
            target_residual: self.target_residual,
        }
    }

    /// CSV of `t,deviation,control_norm,hit`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,deviation,control_norm,hit\n");
        let time = self.trajectory.time();
        for (k, d) in self.deviations.iter().enumerate() {
            let un = self.control_norms.get(k).copied().unwrap_or(0.0);
            let hit = self.hit_step.is_some_and(|h| k >= h);
            let _ = writeln!(s, "{},{},{},{}", time.time(k), d, un, u8::from(hit));
        }
        s
    }
}

/// Closed-loop simulation under the sign feedback, with sliding continuation
/// after the first hit of `hit_tol`.
pub fn run_sliding(
    spec: &OperatorSpec,
    map: &ControlMap,
    y0: &Field,
    y_tar: &Field,
    opts: &SlidingOptions,
) -> Result<SlidingRun> {
    if !(opts.hit_tol.is_finite() && opts.hit_tol > 0.0) {
        return Err(invalid("hit_tol", "must be positive"));
    }
    if !(opts.rho.is_finite() && opts.rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    spec.check_field(y0)?;
    spec.check_field(y_tar)?;
    let time = TimeGrid::new(opts.t_max, opts.dt)?;
    let integ = Integrator::new(spec, map, opts.forward)?;
    let roles = integ.roles().clone();
    let deviation = |y: &Field| roles.h_norm(&map.project(&y.sub(y_tar)));
    let target_residual = roles.h_norm(&map.project(&spec.apply_A(y_tar)?));
    let can_slide = opts.continuation && continuation_supported(map);

    let mut states = vec![y0.clone()];
    let mut substates = Vec::new();
    let mut diagnostics = vec![diagnostics_for(spec, &roles, y0)?];
    let mut controls = Vec::new();
    let mut control_norms = Vec::new();
    let mut deviations = vec![deviation(y0)];
    let mut hit_time = None;
    let mut hit_step = None;
    if deviations[0] <= opts.hit_tol {
        hit_time = Some(0.0);
        hit_step = Some(0);
    }
    for k in 0..time.steps() {
        let dt = time.step_size(k);
        let y = states[k].clone();
        let (next, u) = if hit_step.is_some() && can_slide {
            continuation_step(&integ, &y, y_tar, opts.rho, dt, time.time(k))?
        } else {
            let u = sign_feedback(spec, map, &y, y_tar, opts.rho)?;
            (integ.step_implicit(&y, &u, dt)?, u)
        };
        control_norms.push(map.control_norm(&u));
        controls.push(u);
        let d = deviation(&next);
        if hit_step.is_none() {
            // the sign feedback can jump across the band in one step, so look along the segment
            let a = map.project(&y.sub(y_tar));
            let delta = map.project(&next.sub(&y));
            if let Some(frac) = segment_entry(&roles, &a, &delta, opts.hit_tol)? {
                hit_time = Some(time.time(k) + frac * dt);
                hit_step = Some(k + 1);
            }
        }
        deviations.push(d);
        let mut diag = diagnostics_for(spec, &roles, &next)?;
        diag.substeps = 1;
        diagnostics.push(diag);
        substates.push(vec![next.clone()]);
        states.push(next);
    }
    let t_star = opts
        .bound
        .and_then(|b| hit_time_bound(target_residual, b.c1, b.gamma_b, opts.rho, deviations[0]));
    Ok(SlidingRun {
        trajectory: Trajectory::from_parts(time, states, substates, diagnostics),
        controls,
        control_norms,
        deviations,
        hit_time,
        hit_step,
        t_star,
        target_residual,
        rho: opts.rho,
        hit_tol: opts.hit_tol,
    })
}

/// First `s ∈ [0, 1]` with `‖a + s δ‖_H ≤ tol`, if any.
fn segment_entry(roles: &SpaceRoles, a: &Field, delta: &Field, tol: f64) -> Result<Option<f64>> {
    let aa = roles.h_inner(a, a)?;
    let ad = roles.h_inner(a, delta)?;
    let dd = roles.h_inner(delta, delta)?;
    let tol2 = tol * tol;
    if aa <= tol2 {
        return Ok(Some(0.0));
    }
    if dd <= 0.0 {
        return Ok(None);
    }
    let s_min = (-ad / dd).clamp(0.0, 1.0);
    let closest = aa + s_min * (2.0 * ad + s_min * dd);
    if closest > tol2 {
        return Ok(None);
    }
    // smaller root of dd s² + 2 ad s + (aa - tol²) = 0
    let disc = (ad * ad - dd * (aa - tol2)).max(0.0);
    let s = (-ad - disc.sqrt()) / dd;
    Ok(Some(s.clamp(0.0, s_min)))
}

fn continuation_supported(map: &ControlMap) -> bool {
    !matches!(map.mode(), ControlMode::NonlocalKernel(_))
}

/// Result of [`sliding_continuation`].
#[derive(Clone, Debug)]
pub struct SlidingSegment {
    pub trajectory: Trajectory,
    /// Equivalent control on each step.
    pub controls: Vec<Field>,
    pub control_norms: Vec<f64>,
    /// `‖P(y - y_tar)‖_H` at every grid time.
    pub deviations: Vec<f64>,
}

/// Evolves the state with the projected components held on the target by the
/// equivalent control `ũ = (A(y_tar,P, z))_P`, where `z` solves the free
/// components' implicit step with the projected ones pinned.
pub fn sliding_continuation(
    spec: &OperatorSpec,
    map: &ControlMap,
    state_at_hit: &Field,
    y_tar: &Field,
    rho: f64,
    t_extra: f64,
    dt: f64,
) -> Result<SlidingSegment> {
    if !continuation_supported(map) {
        return Err(Error::Unsupported("sliding continuation needs a local control map".into()));
    }
    spec.check_field(state_at_hit)?;
    spec.check_field(y_tar)?;
    let time = TimeGrid::new(t_extra, dt)?;
    let integ = Integrator::new(spec, map, ForwardOptions::default())?;
    let roles = integ.roles().clone();
    let deviation = |y: &Field| roles.h_norm(&map.project(&y.sub(y_tar)));
    let mut states = vec![state_at_hit.clone()];
    let mut substates = Vec::new();
    let mut diagnostics = vec![diagnostics_for(spec, &roles, state_at_hit)?];
    let mut controls = Vec::new();
    let mut control_norms = Vec::new();
    let mut deviations = vec![deviation(state_at_hit)];
    for k in 0..time.steps() {
        let (next, u) = continuation_step(&integ, &states[k], y_tar, rho, time.step_size(k), time.time(k))?;
        control_norms.push(map.control_norm(&u));
        controls.push(u);
        deviations.push(deviation(&next));
        let mut diag = diagnostics_for(spec, &roles, &next)?;
        diag.substeps = 1;
        diagnostics.push(diag);
        substates.push(vec![next.clone()]);
        states.push(next);
    }
    Ok(SlidingSegment {
        trajectory: Trajectory::from_parts(time, states, substates, diagnostics),
        controls,
        control_norms,
        deviations,
    })
}

/// One step of the sliding continuation; returns the new state and `ũ`.
fn continuation_step(
    integ: &Integrator<'_>,
    y: &Field,
    y_tar: &Field,
    rho: f64,
    dt: f64,
    t: f64,
) -> Result<(Field, Field)> {
    let spec = integ.spec();
    let map = integ.map();
    let nc = spec.components();
    let n = spec.grid().total_nodes();
    let kept = map.projection().kept(nc);
    // pinned projected components, free components by a reduced implicit step
    let mut x = y.clone();
    for c in 0..kept {
        x.component_mut(c).copy_from_slice(y_tar.component(c));
    }
    if kept < nc {
        let free = kept * n..nc * n;
        let m = free.len();
        let scale = y.max_abs();
        let mut converged = false;
        let mut res = f64::INFINITY;
        for _ in 0..30 {
            let a = spec.apply_A(&x)?;
            let r: Vec<f64> = free
                .clone()
                .map(|i| x.values()[i] + dt * a.values()[i] - y.values()[i])
                .collect();
            res = r.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
            if res <= 1e-10 * (1.0 + scale) {
                converged = true;
                break;
            }
            let j = spec.jacobian(&x)?;
            let sub = DMatrix::identity(m, m) + j.view((free.start, free.start), (m, m)) * dt;
            let delta = sub
                .lu()
                .solve(&DVector::from_vec(r))
                .ok_or(Error::SingularSystem { step: 0 })?;
            for (i, d) in free.clone().zip(delta.iter()) {
                x.values_mut()[i] -= d;
            }
        }
        if !converged {
            return Err(Error::NewtonFailure {
                iterations: 30,
                residual: res,
            });
        }
    }
    let a = spec.apply_A(&x)?;
    let mut u = a.zeros_like();
    for c in 0..kept {
        u.component_mut(c).copy_from_slice(a.component(c));
    }
    let un = map.control_norm(&u);
    if un > rho * (1.0 + 1e-12) {
        return Err(Error::Saturation {
            norm: un,
            radius: rho,
            time: t,
        });
    }
    let next = integ.step_implicit(y, &u, dt)?;
    Ok((next, u))
}
