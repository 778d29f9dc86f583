//! Dense spectral decomposition of the discrete Laplacian.
//!
//! The discrete `-Δ` is self-adjoint in the trapezoid-weighted inner product, so
//! `W^{1/2} L W^{-1/2}` is symmetric and its eigenvectors, rescaled by
//! `W^{-1/2}`, form a weighted-orthonormal basis. Two-dimensional grids use the
//! tensor product of the per-axis bases. Dirichlet boundary nodes carry no
//! degrees of freedom: basis vectors vanish there.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::field::Field;
use super::grid::{Boundary, Grid};
use super::stencil::{self, SparseMatrix};
use crate::error::{Error, Result};

#[derive(Debug)]
struct AxisBasis {
    /// Ascending eigenvalues of the 1D operator.
    eigenvalues: Vec<f64>,
    /// `n x m` weighted-orthonormal eigenvectors (zero rows at pinned nodes).
    vectors: DMatrix<f64>,
    weights: Vec<f64>,
}

impl AxisBasis {
    fn build(n: usize, length: f64, bc: Boundary) -> Self {
        let h = length / (n - 1) as f64;
        let weights: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        let active: Vec<usize> = match bc {
            Boundary::Dirichlet => (1..n - 1).collect(),
            _ => (0..n).collect(),
        };
        let m = active.len();
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in stencil::laplacian_1d_triplets(n, h, bc) {
            dense[(r, c)] += v;
        }
        let mut sym = DMatrix::<f64>::zeros(m, m);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                sym[(a, b)] = weights[i].sqrt() * dense[(i, j)] / weights[j].sqrt();
            }
        }
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vectors = DMatrix::<f64>::zeros(n, m);
        let mut eigenvalues = Vec::with_capacity(m);
        for (k, &src) in order.iter().enumerate() {
            // tiny negative round-off on the Neumann kernel
            eigenvalues.push(eig.eigenvalues[src].max(0.0));
            // fix the sign so that the first active entry is nonnegative
            let col = eig.eigenvectors.column(src);
            let sign = if col.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0) < 0.0 {
                -1.0
            } else {
                1.0
            };
            for (a, &i) in active.iter().enumerate() {
                vectors[(i, k)] = sign * col[a] / weights[i].sqrt();
            }
        }
        Self {
            eigenvalues,
            vectors,
            weights,
        }
    }

    fn modes(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Spectral realization of `Γ_H = -Δ + shift·I` for one boundary condition.
#[derive(Clone, Debug)]
pub struct SpectralLaplacian {
    boundary: Boundary,
    shift: f64,
    dim: usize,
    nodes: [usize; 2],
    axes: Arc<Vec<AxisBasis>>,
    stencil: Arc<SparseMatrix>,
    /// Modes in ascending eigenvalue order: (unshifted eigenvalue, per-axis index).
    modes: Arc<Vec<(f64, [usize; 2])>>,
}

impl SpectralLaplacian {
    pub(crate) fn build(grid: &Grid, boundary: Boundary, shift: f64) -> Self {
        let nodes = grid.nodes();
        let extent = grid.extent();
        let mut axes = vec![AxisBasis::build(nodes[0], extent[0], boundary)];
        if grid.dim() == 2 {
            axes.push(AxisBasis::build(nodes[1], extent[1], boundary));
        }
        let mut modes = Vec::new();
        if grid.dim() == 1 {
            for (i, &l) in axes[0].eigenvalues.iter().enumerate() {
                modes.push((l, [i, 0]));
            }
        } else {
            for (j, &ly) in axes[1].eigenvalues.iter().enumerate() {
                for (i, &lx) in axes[0].eigenvalues.iter().enumerate() {
                    modes.push((lx + ly, [i, j]));
                }
            }
            modes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Self {
            boundary,
            shift,
            dim: grid.dim(),
            nodes,
            axes: Arc::new(axes),
            stencil: Arc::new(stencil::laplacian(grid, boundary)),
            modes: Arc::new(modes),
        }
    }

    /// Builds a fresh decomposition for `grid` with an explicit shift.
    pub fn new(grid: &Grid, boundary: Boundary, shift: f64) -> Result<Self> {
        if !(shift.is_finite() && shift >= 0.0) {
            return Err(crate::error::invalid("shift", "must be finite and nonnegative"));
        }
        Ok(Self::build(grid, boundary, shift))
    }

    /// Same eigenbasis with a different identity shift.
    pub fn with_shift(&self, shift: f64) -> Self {
        Self {
            shift,
            ..self.clone()
        }
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn stencil(&self) -> &SparseMatrix {
        &self.stencil
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Ascending eigenvalues (shift included).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.0 + self.shift).collect()
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.modes[k].0 + self.shift
    }

    /// Nodal values of the `k`-th eigenvector (weighted-orthonormal).
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let [i, j] = self.modes[k].1;
        let vx = self.axes[0].vectors.column(i);
        if self.dim == 1 {
            return vx.iter().copied().collect();
        }
        let vy = self.axes[1].vectors.column(j);
        let mut out = Vec::with_capacity(self.nodes[0] * self.nodes[1]);
        for y in vy.iter() {
            for x in vx.iter() {
                out.push(x * y);
            }
        }
        out
    }

    pub(crate) fn check_nodes(&self, grid: &Grid) -> Result<()> {
        if grid.nodes() != self.nodes || grid.dim() != self.dim {
            return Err(Error::Shape(format!(
                "spectrum built for {:?} nodes, field has {:?}",
                self.nodes,
                grid.nodes()
            )));
        }
        Ok(())
    }

    /// Applies `g(λ)` to one component's nodal values: `Σ g(λ_k) (v, e_k) e_k`.
    pub fn apply_fn(&self, values: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let ax = &self.axes[0];
        if self.dim == 1 {
            let weighted: Vec<f64> = values.iter().zip(&ax.weights).map(|(v, w)| v * w).collect();
            let wv = DMatrix::from_column_slice(values.len(), 1, &weighted);
            let mut coeff = ax.vectors.tr_mul(&wv);
            for k in 0..ax.modes() {
                coeff[k] *= g(ax.eigenvalues[k] + self.shift);
            }
            return (&ax.vectors * coeff).as_slice().to_vec();
        }
        let ay = &self.axes[1];
        let (nx, ny) = (self.nodes[0], self.nodes[1]);
        let mut f = DMatrix::from_column_slice(nx, ny, values);
        for j in 0..ny {
            for i in 0..nx {
                f[(i, j)] *= ax.weights[i] * ay.weights[j];
            }
        }
        let mut coeff = ax.vectors.tr_mul(&f) * &ay.vectors;
        for j in 0..ay.modes() {
            for i in 0..ax.modes() {
                coeff[(i, j)] *= g(ax.eigenvalues[i] + ay.eigenvalues[j] + self.shift);
            }
        }
        let out = &ax.vectors * coeff * ay.vectors.transpose();
        out.as_slice().to_vec()
    }

    /// Maximum deviation of the eigenvector Gram matrix from the identity in the
    /// weighted inner product (checked per axis; the tensor product inherits it).
    pub fn orthonormality_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for ax in self.axes.iter() {
            let n = ax.vectors.nrows();
            let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&ax.weights[..n]));
            let gram = ax.vectors.transpose() * w * &ax.vectors;
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    err = err.max((gram[(i, j)] - target).abs());
                }
            }
        }
        err
    }
}

fn per_component(y: &Field, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
    let mut out = y.clone();
    for c in 0..y.components() {
        let v = f(y.component(c));
        out.component_mut(c).copy_from_slice(&v);
    }
    out
}

/// `Γ y`: the stencil `-Δ` (with Robin boundary terms) plus the identity shift,
/// applied to every component.
pub fn gamma_apply(y: &Field, s: &SpectralLaplacian) -> Result<Field> {
    s.check_nodes(y.grid())?;
    Ok(per_component(y, |v| {
        let mut out = s.stencil.mul(v);
        if s.shift != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += s.shift * x;
            }
        }
        out
    }))
}

/// Yosida approximation `Γ (I + νΓ)^{-1} y`, computed spectrally.
pub fn yosida_apply(y: &Field, s: &SpectralLaplacian, nu: f64) -> Result<Field> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(crate::error::invalid("nu", format!("must be positive, got {nu}")));
    }
    s.check_nodes(y.grid())?;
    Ok(per_component(y, |v| s.apply_fn(v, |l| l / (1.0 + nu * l))))
}

/// Spectral power `Γ^α y` for `α ∈ [-1, 1]`.
pub fn gamma_power(y: &Field, s: &SpectralLaplacian, alpha: f64) -> Result<Field> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(crate::error::invalid("alpha", format!("must lie in [-1, 1], got {alpha}")));
    }
    s.check_nodes(y.grid())?;
    if alpha < 0.0 {
        let smallest = s.eigenvalue(0);
        if smallest <= 1e-12 * s.eigenvalue(s.len() - 1).max(1.0) {
            return Err(Error::Singular { eigenvalue: smallest });
        }
    }
    Ok(per_component(y, |v| {
        s.apply_fn(v, |l| if alpha == 0.0 { 1.0 } else if l == 0.0 { 0.0 } else { l.powf(alpha) })
    }))
}

/// `Γ^{-1} y` (requires a positive spectrum).
pub fn gamma_inverse(y: &Field, s: &SpectralLaplacian) -> Result<Field> {
    gamma_power(y, s, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn eigenvectors_are_weighted_orthonormal() {
        for bc in [Boundary::Dirichlet, Boundary::Neumann, Boundary::Robin(0.5)] {
            let g = Grid::line(1.0, 33, bc).unwrap();
            let s = g.spectrum(0);
            assert!(s.orthonormality_error() < 1e-10, "{bc}");
            let g2 = Grid::new(2, [1.0, 2.0], [7, 9], vec![bc]).unwrap();
            assert!(g2.spectrum(0).orthonormality_error() < 1e-10);
        }
    }

    #[test]
    fn eigenvalue_signs_follow_the_boundary_condition() {
        let n = Grid::line(1.0, 17, Boundary::Neumann).unwrap();
        assert!(n.spectrum(0).eigenvalue(0).abs() < 1e-9);
        assert!((n.canonical_spectrum(0).eigenvalue(0) - 1.0).abs() < 1e-9);
        let d = Grid::line(1.0, 17, Boundary::Dirichlet).unwrap();
        assert!(d.spectrum(0).eigenvalue(0) > 9.0);
        assert_eq!(d.spectrum(0).len(), 15);
        let r = Grid::line(1.0, 17, Boundary::Robin(1.0)).unwrap();
        assert!(r.spectrum(0).eigenvalue(0) > 0.0);
    }

    #[test]
    fn dirichlet_ground_state_approaches_pi_squared() {
        let g = Grid::line(1.0, 257, Boundary::Dirichlet).unwrap();
        let l0 = g.spectrum(0).eigenvalue(0);
        assert!((l0 - PI * PI).abs() < 1e-3, "{l0}");
    }

    #[test]
    fn stencil_and_spectral_forms_agree() {
        let g = Grid::new(2, [1.0, 1.0], [6, 5], vec![Boundary::Robin(0.3)]).unwrap();
        let s = g.spectrum(0);
        let y = Field::from_fn(&g, 1, |_, x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let a = gamma_apply(&y, &s).unwrap();
        let b = s.apply_fn(y.values(), |l| l);
        for (u, v) in a.values().iter().zip(&b) {
            assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn negative_power_of_neumann_kernel_is_singular() {
        let g = Grid::line(1.0, 9, Boundary::Neumann).unwrap();
        let y = Field::constant(&g, 1, 1.0);
        assert!(matches!(gamma_power(&y, &g.spectrum(0), -0.5), Err(Error::Singular { .. })));
        assert!(gamma_power(&y, &g.canonical_spectrum(0), -0.5).is_ok());
        assert!(gamma_power(&y, &g.spectrum(0), 1.5).is_err());
        assert!(yosida_apply(&y, &g.spectrum(0), 0.0).is_err());
    }
}
