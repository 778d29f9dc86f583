use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::nonlinearity::{Nonlinearity, Reaction};
use crate::error::{invalid, Error, Result};
use crate::hilbert::{self, stencil, Boundary, Field, Grid, NormTag, SparseMatrix};

fn default_pi_slope() -> f64 {
    -1.0
}

/// The operator families of the toolkit. `L` below is the discrete `-Δ` with the
/// grid's boundary condition for the component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `A y = L y + β(y) + a₁ y - ∇·(b y)` with `b_i = drift_i · sin(π x_i / L_i)`.
    PotentialDrift {
        #[serde(default)]
        beta: Nonlinearity,
        #[serde(default)]
        a1: f64,
        #[serde(default)]
        drift: [f64; 2],
    },
    /// `A y = L β(y)` on a Dirichlet grid, measured in `H^{-1}`.
    PorousMedia { beta: Nonlinearity },
    /// `A(y, z) = (D₁ L y + f(y, z), D₂ L z + g(y, z))`.
    ReactionDiffusion2 { d1: f64, d2: f64, f: Reaction, g: Reaction },
    /// `A(y, z) = (D₁ L y + α₀ y + z, -σ y + γ z)`; no diffusion in `z`.
    FitzHughNagumo { d1: f64, alpha0: f64, sigma: f64, gamma: f64 },
    /// Components `(σ, φ)`:
    /// `A(σ, φ) = (k L σ - k l L φ, ν L φ + β(φ) + π φ + γ l φ - γ σ)`.
    PhaseField {
        k: f64,
        l: f64,
        nu: f64,
        gamma: f64,
        beta: Nonlinearity,
        #[serde(default = "default_pi_slope")]
        pi_slope: f64,
    },
}

impl OperatorKind {
    pub fn components(&self) -> usize {
        match self {
            OperatorKind::PotentialDrift { .. } | OperatorKind::PorousMedia { .. } => 1,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::PotentialDrift { .. } => "potential_drift",
            OperatorKind::PorousMedia { .. } => "porous_media",
            OperatorKind::ReactionDiffusion2 { .. } => "reaction_diffusion2",
            OperatorKind::FitzHughNagumo { .. } => "fitz_hugh_nagumo",
            OperatorKind::PhaseField { .. } => "phase_field",
        }
    }
}

/// Per-component space roles: the pivot space `H` and the energy space `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceRoles {
    pub h: Vec<NormTag>,
    pub v: Vec<NormTag>,
}

impl SpaceRoles {
    pub fn h_inner(&self, a: &Field, b: &Field) -> Result<f64> {
        hilbert::inner_product_mixed(a, b, &self.h)
    }

    pub fn h_norm(&self, a: &Field) -> f64 {
        hilbert::norm_mixed(a, &self.h)
    }

    pub fn v_norm(&self, a: &Field) -> f64 {
        hilbert::norm_mixed(a, &self.v)
    }

    /// Weighted-pairing representative of the `H` inner product: `(a, b)_H = ⟨a, G_H b⟩_W`.
    pub fn h_gram(&self, a: &Field) -> Field {
        hilbert::gram_apply_mixed(a, &self.h)
    }

    /// `G_H^{-1}`: maps a weighted-pairing representative back into `H`.
    pub fn h_riesz(&self, a: &Field) -> Field {
        hilbert::riesz_mixed(a, &self.h)
    }

    /// `Γ_H = G_H^{-1} G_V`, the restriction of the canonical isomorphism to `H`.
    pub fn gamma_h(&self, y: &Field) -> Field {
        hilbert::riesz_mixed(&hilbert::gram_apply_mixed(y, &self.v), &self.h)
    }
}

#[derive(Clone, Debug)]
struct Block {
    row: usize,
    col: usize,
    coeff: f64,
    matrix: Arc<SparseMatrix>,
}

/// A configured operator `A` on a grid, with derivative and exact adjoint.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    kind: OperatorKind,
    grid: Arc<Grid>,
    blocks: Vec<Block>,
    /// Row mask per component: 0 at Dirichlet-pinned nodes.
    active: Vec<Vec<f64>>,
    inv_weights: Vec<f64>,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, grid: &Arc<Grid>) -> Result<Self> {
        validate(&kind, grid)?;
        let n = grid.total_nodes();
        let comps = kind.components();
        let lap = |c: usize| grid.laplacian(c);
        let block = |row, col, coeff, matrix| Block {
            row,
            col,
            coeff,
            matrix,
        };
        let mut blocks = Vec::new();
        match &kind {
            OperatorKind::PotentialDrift { drift, .. } => {
                blocks.push(block(0, 0, 1.0, lap(0)));
                if drift.iter().any(|&d| d != 0.0) {
                    blocks.push(block(0, 0, 1.0, Arc::new(stencil::drift(grid, grid.boundary(0), *drift))));
                }
            }
            OperatorKind::PorousMedia { .. } => {}
            OperatorKind::ReactionDiffusion2 { d1, d2, .. } => {
                blocks.push(block(0, 0, *d1, lap(0)));
                blocks.push(block(1, 1, *d2, lap(1)));
            }
            OperatorKind::FitzHughNagumo { d1, .. } => blocks.push(block(0, 0, *d1, lap(0))),
            OperatorKind::PhaseField { k, l, nu, .. } => {
                blocks.push(block(0, 0, *k, lap(0)));
                blocks.push(block(0, 1, -k * l, lap(1)));
                blocks.push(block(1, 1, *nu, lap(1)));
            }
        }
        let active = (0..comps)
            .map(|c| (0..n).map(|i| if grid.is_pinned(c, i) { 0.0 } else { 1.0 }).collect())
            .collect();
        Ok(Self {
            kind,
            grid: grid.clone(),
            blocks,
            active,
            inv_weights: grid.weights().iter().map(|w| 1.0 / w).collect(),
        })
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.kind.components()
    }

    /// Total number of unknowns.
    pub fn dim(&self) -> usize {
        self.components() * self.grid.total_nodes()
    }

    pub fn is_linear(&self) -> bool {
        match &self.kind {
            OperatorKind::PotentialDrift { beta, .. }
            | OperatorKind::PorousMedia { beta }
            | OperatorKind::PhaseField { beta, .. } => beta.is_linear(),
            OperatorKind::ReactionDiffusion2 { f, g, .. } => f.is_linear() && g.is_linear(),
            OperatorKind::FitzHughNagumo { .. } => true,
        }
    }

    /// True when `A'(y)` is symmetric in the weighted pairing for every `y`.
    pub fn is_self_adjoint(&self) -> bool {
        match &self.kind {
            OperatorKind::PotentialDrift { drift, .. } => drift.iter().all(|&d| d == 0.0),
            _ => false,
        }
    }

    pub fn roles(&self) -> SpaceRoles {
        use NormTag::*;
        match &self.kind {
            OperatorKind::PotentialDrift { .. } => SpaceRoles { h: vec![L2], v: vec![H1] },
            OperatorKind::PorousMedia { .. } => SpaceRoles {
                h: vec![Hminus1],
                v: vec![L2],
            },
            OperatorKind::FitzHughNagumo { .. } => SpaceRoles {
                h: vec![L2, L2],
                v: vec![H1, L2],
            },
            _ => SpaceRoles {
                h: vec![L2, L2],
                v: vec![H1, H1],
            },
        }
    }

    pub fn check_field(&self, y: &Field) -> Result<()> {
        if !self.grid.same_as(y.grid()) {
            return Err(Error::Shape("field is on a different grid than the operator".into()));
        }
        if y.components() != self.components() {
            return Err(Error::Shape(format!(
                "operator {} has {} components, field has {}",
                self.kind.name(),
                self.components(),
                y.components()
            )));
        }
        Ok(())
    }

    /// Pointwise part at one node: value and Jacobian `∂r/∂y` (row-major).
    fn pointwise(&self, y: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        match &self.kind {
            OperatorKind::PotentialDrift { beta, a1, .. } => {
                ([a1 * y[0] + beta.eval(y[0]), 0.0], [[a1 + beta.derivative(y[0]), 0.0], [0.0, 0.0]])
            }
            OperatorKind::PorousMedia { .. } => ([0.0; 2], [[0.0; 2]; 2]),
            OperatorKind::ReactionDiffusion2 { f, g, .. } => {
                ([f.eval(y[0], y[1]), g.eval(y[0], y[1])], [f.gradient(y[0], y[1]), g.gradient(y[0], y[1])])
            }
            OperatorKind::FitzHughNagumo {
                alpha0, sigma, gamma, ..
            } => (
                [alpha0 * y[0] + y[1], -sigma * y[0] + gamma * y[1]],
                [[*alpha0, 1.0], [-sigma, *gamma]],
            ),
            OperatorKind::PhaseField { l, gamma, beta, pi_slope, .. } => {
                let lin = pi_slope + gamma * l;
                (
                    [0.0, beta.eval(y[1]) + lin * y[1] - gamma * y[0]],
                    [[0.0, 0.0], [-gamma, beta.derivative(y[1]) + lin]],
                )
            }
        }
    }

    fn porous_beta(&self) -> Option<&Nonlinearity> {
        match &self.kind {
            OperatorKind::PorousMedia { beta } => Some(beta),
            _ => None,
        }
    }

    fn node_values(&self, y: &Field, i: usize) -> [f64; 2] {
        let n = self.grid.total_nodes();
        let v = y.values();
        if self.components() == 2 {
            [v[i], v[n + i]]
        } else {
            [v[i], 0.0]
        }
    }

    /// `A_H y`
    pub fn apply_A(&self, y: &Field) -> Result<Field> {
        self.check_field(y)?;
        let n = self.grid.total_nodes();
        let nc = self.components();
        let mut out = vec![0.0; nc * n];
        for b in &self.blocks {
            b.matrix
                .mul_add(y.component(b.col), b.coeff, &mut out[b.row * n..(b.row + 1) * n]);
        }
        if let Some(beta) = self.porous_beta() {
            let by: Vec<f64> = y.component(0).iter().map(|&r| beta.eval(r)).collect();
            self.grid.laplacian(0).mul_add(&by, 1.0, &mut out[..n]);
        } else {
            for i in 0..n {
                let (r, _) = self.pointwise(self.node_values(y, i));
                for c in 0..nc {
                    out[c * n + i] += self.active[c][i] * r[c];
                }
            }
        }
        Ok(y.with_values(out))
    }

    /// `A'(y) z`
    pub fn apply_Aprime(&self, y: &Field, z: &Field) -> Result<Field> {
        self.check_field(y)?;
        self.check_field(z)?;
        let n = self.grid.total_nodes();
        let nc = self.components();
        let mut out = vec![0.0; nc * n];
        for b in &self.blocks {
            b.matrix
                .mul_add(z.component(b.col), b.coeff, &mut out[b.row * n..(b.row + 1) * n]);
        }
        if let Some(beta) = self.porous_beta() {
            let dz: Vec<f64> = y
                .component(0)
                .iter()
                .zip(z.component(0))
                .map(|(&r, &s)| beta.derivative(r) * s)
                .collect();
            self.grid.laplacian(0).mul_add(&dz, 1.0, &mut out[..n]);
        } else {
            for i in 0..n {
                let (_, j) = self.pointwise(self.node_values(y, i));
                let zi = self.node_values(z, i);
                for r in 0..nc {
                    let mut acc = 0.0;
                    for c in 0..nc {
                        acc += j[r][c] * zi[c];
                    }
                    out[r * n + i] += self.active[r][i] * acc;
                }
            }
        }
        Ok(y.with_values(out))
    }

    /// `W^{-1} Sᵀ W p`: the transpose of a sparse block in the weighted pairing.
    fn weighted_transpose_add(&self, m: &SparseMatrix, p: &[f64], scale: f64, out: &mut [f64]) {
        let w = self.grid.weights();
        let wp: Vec<f64> = p.iter().zip(w).map(|(a, b)| a * b).collect();
        let mut tmp = vec![0.0; p.len()];
        m.mul_transpose_add(&wp, scale, &mut tmp);
        for ((o, t), iw) in out.iter_mut().zip(&tmp).zip(&self.inv_weights) {
            *o += t * iw;
        }
    }

    /// `(A'(y))^* p`, the exact transpose of [`Self::apply_Aprime`] in the weighted pairing.
    pub fn apply_Aprime_adjoint(&self, y: &Field, p: &Field) -> Result<Field> {
        self.check_field(y)?;
        self.check_field(p)?;
        let n = self.grid.total_nodes();
        let nc = self.components();
        let mut out = vec![0.0; nc * n];
        for b in &self.blocks {
            self.weighted_transpose_add(
                &b.matrix,
                p.component(b.row),
                b.coeff,
                &mut out[b.col * n..(b.col + 1) * n],
            );
        }
        if let Some(beta) = self.porous_beta() {
            let mut lp = vec![0.0; n];
            self.weighted_transpose_add(&self.grid.laplacian(0), p.component(0), 1.0, &mut lp);
            for ((o, l), &r) in out.iter_mut().zip(&lp).zip(y.component(0)) {
                *o += beta.derivative(r) * l;
            }
        } else {
            for i in 0..n {
                let (_, j) = self.pointwise(self.node_values(y, i));
                let pi = self.node_values(p, i);
                for c in 0..nc {
                    let mut acc = 0.0;
                    for r in 0..nc {
                        acc += j[r][c] * self.active[r][i] * pi[r];
                    }
                    out[c * n + i] += acc;
                }
            }
        }
        Ok(y.with_values(out))
    }

    /// Dense Jacobian of `A` at `y` (unknowns ordered component-major).
    pub fn jacobian(&self, y: &Field) -> Result<DMatrix<f64>> {
        self.check_field(y)?;
        let n = self.grid.total_nodes();
        let nc = self.components();
        let mut m = DMatrix::zeros(nc * n, nc * n);
        for b in &self.blocks {
            b.matrix.add_to_dense(&mut m, b.row * n, b.col * n, b.coeff);
        }
        if let Some(beta) = self.porous_beta() {
            let d: Vec<f64> = y.component(0).iter().map(|&r| beta.derivative(r)).collect();
            self.grid.laplacian(0).add_scaled_columns_to_dense(&mut m, 0, 0, 1.0, &d);
        } else {
            for i in 0..n {
                let (_, j) = self.pointwise(self.node_values(y, i));
                for r in 0..nc {
                    if self.active[r][i] == 0.0 {
                        continue;
                    }
                    for c in 0..nc {
                        m[(r * n + i, c * n + i)] += j[r][c];
                    }
                }
            }
        }
        Ok(m)
    }
}

fn validate(kind: &OperatorKind, grid: &Grid) -> Result<()> {
    let positive = |name: &'static str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(name, format!("must be positive, got {v}")))
        }
    };
    let finite = |name: &'static str, v: f64| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(invalid(name, "must be finite"))
        }
    };
    match kind {
        OperatorKind::PotentialDrift { beta, a1, drift } => {
            beta.validate("beta")?;
            finite("a1", *a1)?;
            finite("drift", drift[0])?;
            finite("drift", drift[1])?;
            if beta.min_slope() < 0.0 {
                return Err(invalid("beta", "must be monotone nondecreasing"));
            }
        }
        OperatorKind::PorousMedia { beta } => {
            beta.validate("beta")?;
            if !(beta.min_slope() > 0.0) {
                return Err(invalid("beta", "requires beta' >= a0 > 0"));
            }
            if beta.growth_exponent() >= 1.0 {
                return Err(invalid("beta", "growth exponent must be below 1 (slow diffusion)"));
            }
            if grid.boundary(0) != Boundary::Dirichlet {
                return Err(invalid("boundary", "porous media requires a Dirichlet boundary"));
            }
        }
        OperatorKind::ReactionDiffusion2 { d1, d2, f, g } => {
            positive("d1", *d1)?;
            positive("d2", *d2)?;
            f.validate("f")?;
            g.validate("g")?;
        }
        OperatorKind::FitzHughNagumo {
            d1,
            alpha0,
            sigma,
            gamma,
        } => {
            positive("d1", *d1)?;
            finite("alpha0", *alpha0)?;
            finite("sigma", *sigma)?;
            finite("gamma", *gamma)?;
        }
        OperatorKind::PhaseField {
            k,
            l,
            nu,
            gamma,
            beta,
            pi_slope,
        } => {
            positive("k", *k)?;
            positive("nu", *nu)?;
            finite("l", *l)?;
            finite("gamma", *gamma)?;
            finite("pi_slope", *pi_slope)?;
            beta.validate("beta")?;
            if beta.min_slope() < 0.0 {
                return Err(invalid("beta", "must be monotone nondecreasing"));
            }
            if grid.boundary(0) != grid.boundary(1) {
                return Err(invalid("boundary", "phase field components must share a boundary condition"));
            }
        }
    }
    Ok(())
}
