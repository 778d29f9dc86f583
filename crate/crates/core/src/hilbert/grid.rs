use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::spectral::SpectralLaplacian;
use super::stencil::{self, SparseMatrix};
use crate::error::{invalid, Result};

/// Boundary condition of one state component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
    /// `∂y/∂ν + γ y = 0` with `γ > 0`.
    Robin(f64),
}

impl Boundary {
    pub(crate) fn robin_coefficient(self) -> f64 {
        match self {
            Boundary::Robin(g) => g,
            _ => 0.0,
        }
    }

    /// Shift that makes the canonical isomorphism invertible (`I - Δ` for Neumann).
    pub fn canonical_shift(self) -> f64 {
        match self {
            Boundary::Neumann => 1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Dirichlet => write!(f, "dirichlet"),
            Boundary::Neumann => write!(f, "neumann"),
            Boundary::Robin(g) => write!(f, "robin({g})"),
        }
    }
}

/// Uniform structured grid on `[0, L₁] (× [0, L₂])` with trapezoid quadrature weights.
///
/// Boundary conditions are listed per state component; a component index past
/// the end of the list uses the last entry. Spectral decompositions and stencils
/// are built lazily and cached.
pub struct Grid {
    dim: usize,
    extent: [f64; 2],
    nodes: [usize; 2],
    boundary: Vec<Boundary>,
    weights: Vec<f64>,
    spectra: Vec<OnceLock<Arc<SpectralLaplacian>>>,
    stencils: Vec<OnceLock<Arc<SparseMatrix>>>,
}

impl Grid {
    pub fn new(dim: usize, extent: [f64; 2], nodes: [usize; 2], boundary: Vec<Boundary>) -> Result<Arc<Self>> {
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        let mut extent = extent;
        let mut nodes = nodes;
        if dim == 1 {
            extent[1] = 0.0;
            nodes[1] = 1;
        }
        for axis in 0..dim {
            if nodes[axis] < 3 {
                return Err(invalid("nodes", format!("need at least 3 nodes per axis, got {}", nodes[axis])));
            }
            if !(extent[axis].is_finite() && extent[axis] > 0.0) {
                return Err(invalid("extent", format!("must be positive, got {}", extent[axis])));
            }
        }
        if boundary.is_empty() {
            return Err(invalid("boundary", "at least one boundary condition is required"));
        }
        for bc in &boundary {
            if let Boundary::Robin(g) = bc {
                if !(g.is_finite() && *g > 0.0) {
                    return Err(invalid("boundary", format!("robin coefficient must be positive, got {g}")));
                }
            }
        }
        let axis_weights = |axis: usize| -> Vec<f64> {
            let n = nodes[axis];
            let h = extent[axis] / (n - 1) as f64;
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        };
        let wx = axis_weights(0);
        let weights = if dim == 1 {
            wx
        } else {
            let wy = axis_weights(1);
            let mut w = Vec::with_capacity(nodes[0] * nodes[1]);
            for y in &wy {
                for x in &wx {
                    w.push(x * y);
                }
            }
            w
        };
        let nb = boundary.len();
        Ok(Arc::new(Self {
            dim,
            extent,
            nodes,
            boundary,
            weights,
            spectra: (0..nb).map(|_| OnceLock::new()).collect(),
            stencils: (0..nb).map(|_| OnceLock::new()).collect(),
        }))
    }

    /// One-dimensional grid on `[0, length]`.
    pub fn line(length: f64, nodes: usize, boundary: Boundary) -> Result<Arc<Self>> {
        Self::new(1, [length, 0.0], [nodes, 1], vec![boundary])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn nodes(&self) -> [usize; 2] {
        self.nodes
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        let mut h = [0.0; 2];
        for axis in 0..self.dim {
            h[axis] = self.extent[axis] / (self.nodes[axis] - 1) as f64;
        }
        h
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundary
    }

    fn boundary_index(&self, component: usize) -> usize {
        component.min(self.boundary.len() - 1)
    }

    pub fn boundary(&self, component: usize) -> Boundary {
        self.boundary[self.boundary_index(component)]
    }

    /// Coordinates of a node.
    pub fn coordinates(&self, node: usize) -> [f64; 2] {
        let h = self.spacing();
        let ix = node % self.nodes[0];
        let iy = node / self.nodes[0];
        [ix as f64 * h[0], iy as f64 * h[1]]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let ix = node % self.nodes[0];
        let iy = node / self.nodes[0];
        let on_x = ix == 0 || ix == self.nodes[0] - 1;
        let on_y = self.dim == 2 && (iy == 0 || iy == self.nodes[1] - 1);
        on_x || on_y
    }

    /// True when the node carries no degree of freedom for the component
    /// (boundary node under a Dirichlet condition).
    pub fn is_pinned(&self, component: usize, node: usize) -> bool {
        self.boundary(component) == Boundary::Dirichlet && self.is_boundary_node(node)
    }

    /// Unshifted spectral decomposition of `-Δ` for a component's boundary condition.
    pub fn spectrum(&self, component: usize) -> Arc<SpectralLaplacian> {
        let idx = self.boundary_index(component);
        self.spectra[idx]
            .get_or_init(|| Arc::new(SpectralLaplacian::build(self, self.boundary[idx], 0.0)))
            .clone()
    }

    /// Spectrum of the canonical isomorphism for the component
    /// (`-Δ` for Dirichlet/Robin, `I - Δ` for Neumann).
    pub fn canonical_spectrum(&self, component: usize) -> Arc<SpectralLaplacian> {
        let base = self.spectrum(component);
        let shift = self.boundary(component).canonical_shift();
        if shift == 0.0 {
            base
        } else {
            Arc::new(base.with_shift(shift))
        }
    }

    /// Cached `-Δ` stencil for the component.
    pub fn laplacian(&self, component: usize) -> Arc<SparseMatrix> {
        let idx = self.boundary_index(component);
        self.stencils[idx]
            .get_or_init(|| Arc::new(stencil::laplacian(self, self.boundary[idx])))
            .clone()
    }

    /// Structural equality: same geometry and boundary conditions.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.extent == other.extent
            && self.nodes == other.nodes
            && self.boundary == other.boundary
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("extent", &self.extent)
            .field("nodes", &self.nodes)
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}
