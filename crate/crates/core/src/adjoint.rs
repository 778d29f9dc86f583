//! Linearized (variation) and adjoint sweeps along a stored trajectory.
//!
//! The adjoint step is the algebraic transpose of the forward linearized step in
//! the weighted pairing, so `⟨Y_N, p_N⟩_W = Σ_k Δt_k ⟨B v_k, p̄_k⟩_W` holds to
//! rounding error.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::forward::{diagnostics_for, Integrator, StepDiagnostics, Trajectory};
use crate::hilbert::Field;
use crate::time::{Control, TimeGrid};

/// Backward adjoint states `p_0, …, p_N` and per-step means `p̄_k` (the
/// quantity paired with the control on step `k`).
#[derive(Clone, Debug)]
pub struct AdjointState {
    time: TimeGrid,
    states: Vec<Field>,
    means: Vec<Field>,
}

impl AdjointState {
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
        self.states.last().expect("adjoint has a terminal state")
    }

    /// `p̄_k`
    pub fn step_mean(&self, k: usize) -> &Field {
        &self.means[k]
    }

    pub fn step_means(&self) -> &[Field] {
        &self.means
    }
}

fn weight_vector(f: &Field) -> Vec<f64> {
    let w = f.grid().weights();
    let n = w.len();
    (0..f.len()).map(|i| w[i % n]).collect()
}

/// Solves `Y' + A'(y(t)) Y = B v`, `Y(0) = 0`, with the trajectory's frozen states.
pub fn solve_variation(integ: &Integrator<'_>, traj: &Trajectory, v: &Control) -> Result<Trajectory> {
    let time = *traj.time();
    if v.time().steps() != time.steps() {
        return Err(Error::Shape("variation control is on a different time grid".into()));
    }
    let spec = integ.spec();
    let mut y = traj.state(0).zeros_like();
    let mut states = vec![y.clone()];
    let mut substates = Vec::with_capacity(time.steps());
    let mut diagnostics = vec![diagnostics_for(spec, integ.roles(), &y)?];
    for k in 0..time.steps() {
        let subs = traj.substates(k);
        let m = subs.len();
        let h = time.step_size(k) / m as f64;
        let bv = integ.map().apply_B(v.step(k))?;
        let mut inner = Vec::with_capacity(m);
        for x in subs {
            let mut rhs = y.clone();
            rhs.axpy(h, &bv);
            let lu = integ.factor(x, h, false)?;
            let sol = lu
                .solve(&DVector::from_column_slice(rhs.values()))
                .ok_or(Error::SingularSystem { step: k })?;
            y = y.with_values(sol.as_slice().to_vec());
            inner.push(y.clone());
        }
        let mut d: StepDiagnostics = diagnostics_for(spec, integ.roles(), &y)?;
        d.substeps = m;
        diagnostics.push(d);
        substates.push(inner);
        states.push(y.clone());
    }
    Ok(Trajectory::from_parts(time, states, substates, diagnostics))
}

/// Backward sweep `-p' + A'(y(t))^* p = 0` from `p(T) = terminal`.
pub fn solve_adjoint(integ: &Integrator<'_>, traj: &Trajectory, terminal: &Field) -> Result<AdjointState> {
    integ.spec().check_field(terminal)?;
    let time = *traj.time();
    let w = weight_vector(terminal);
    let n = time.steps();
    let mut states = vec![terminal.zeros_like(); n + 1];
    let mut means = vec![terminal.zeros_like(); n];
    let mut q = terminal.clone();
    states[n] = q.clone();
    for k in (0..n).rev() {
        let subs = traj.substates(k);
        let m = subs.len();
        let h = time.step_size(k) / m as f64;
        let mut sum = vec![0.0; q.len()];
        for x in subs.iter().rev() {
            let wq: Vec<f64> = q.values().iter().zip(&w).map(|(a, b)| a * b).collect();
            let lu = integ.factor(x, h, true)?;
            let sol = lu
                .solve(&DVector::from_vec(wq))
                .ok_or(Error::SingularSystem { step: k })?;
            let r: Vec<f64> = sol.iter().zip(&w).map(|(a, b)| a / b).collect();
            for (s, v) in sum.iter_mut().zip(&r) {
                *s += v;
            }
            q = q.with_values(r);
        }
        let inv_m = 1.0 / m as f64;
        means[k] = q.with_values(sum.into_iter().map(|s| s * inv_m).collect());
        states[k] = q.clone();
    }
    if states.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("adjoint state"));
    }
    Ok(AdjointState { time, states, means })
}

/// `Σ_k Δt_k ⟨B v_k, p̄_k⟩_W`, the right side of the discrete duality identity.
pub fn adjoint_pairing(integ: &Integrator<'_>, adj: &AdjointState, v: &Control) -> Result<f64> {
    let mut s = 0.0;
    for k in 0..adj.time.steps() {
        let bv = integ.map().apply_B(v.step(k))?;
        s += adj.time.step_size(k) * bv.weighted_dot(adj.step_mean(k));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ForwardOptions;
    use crate::hilbert::{random_smooth_field, seeded_rng, Boundary, Grid, NormTag};
    use crate::operators::{ControlMap, Nonlinearity, OperatorKind, OperatorSpec};

    #[test]
    fn duality_identity_and_zero_terminal() {
        let g = Grid::line(1.0, 16, Boundary::Robin(1.0)).unwrap();
        let spec = OperatorSpec::new(
            OperatorKind::PotentialDrift {
                beta: Nonlinearity::Cubic { linear: 0.1, cubic: 1.0 },
                a1: 0.0,
                drift: [0.7, 0.0],
            },
            &g,
        )
        .unwrap();
        let map = ControlMap::identity(NormTag::L2);
        let integ = Integrator::new(&spec, &map, ForwardOptions::default()).unwrap();
        let mut rng = seeded_rng(21);
        let y0 = random_smooth_field(&g, 1, 1.0, &mut rng);
        let t = TimeGrid::new(0.1, 0.01).unwrap();
        let us: Vec<Field> = (0..t.steps()).map(|_| random_smooth_field(&g, 1, 0.3, &mut rng)).collect();
        let vs: Vec<Field> = (0..t.steps()).map(|_| random_smooth_field(&g, 1, 0.3, &mut rng)).collect();
        let u = Control::new(t, us, 100.0, NormTag::L2).unwrap();
        let v = Control::new(t, vs, 100.0, NormTag::L2).unwrap();
        let traj = integ.solve(&y0, &u).unwrap();
        let var = solve_variation(&integ, &traj, &v).unwrap();
        let pt = random_smooth_field(&g, 1, 1.0, &mut rng);
        let adj = solve_adjoint(&integ, &traj, &pt).unwrap();
        let lhs = var.terminal().weighted_dot(&pt);
        let rhs = adjoint_pairing(&integ, &adj, &v).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} {rhs}");
        let zero = solve_adjoint(&integ, &traj, &pt.zeros_like()).unwrap();
        assert!(zero.states().iter().all(|p| p.max_abs() == 0.0));
    }
}
