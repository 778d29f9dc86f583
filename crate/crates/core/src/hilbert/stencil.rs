//! Sparse finite-difference stencils on uniform grids.

use nalgebra::DMatrix;

use super::grid::{Boundary, Grid};

/// Compressed sparse row matrix acting on flat nodal vectors.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds an `n x n` matrix from triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out += scale * M x`
    pub fn mul_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            out[r] += scale * acc;
        }
    }

    /// `out += scale * M^T x`
    pub fn mul_transpose_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for r in 0..self.n {
            let xr = scale * x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.vals[k] * xr;
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_add(x, 1.0, &mut out);
        out
    }

    /// Adds `scale * M` into the block of `dense` starting at `(row_off, col_off)`.
    pub fn add_to_dense(&self, dense: &mut DMatrix<f64>, row_off: usize, col_off: usize, scale: f64) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                dense[(row_off + r, col_off + self.col_idx[k])] += scale * self.vals[k];
            }
        }
    }

    /// Adds `scale * M diag(d)` into `dense`.
    pub fn add_scaled_columns_to_dense(
        &self,
        dense: &mut DMatrix<f64>,
        row_off: usize,
        col_off: usize,
        scale: f64,
        d: &[f64],
    ) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                dense[(row_off + r, col_off + c)] += scale * self.vals[k] * d[c];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.add_to_dense(&mut m, 0, 0, 1.0);
        m
    }
}

/// One-dimensional `-d²/dx²` with ghost-node elimination at Neumann/Robin ends.
/// Dirichlet ends produce empty boundary rows and no boundary columns.
pub(crate) fn laplacian_1d_triplets(n: usize, h: f64, bc: Boundary) -> Vec<(usize, usize, f64)> {
    let inv_h2 = 1.0 / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 1..n - 1 {
        t.push((i, i - 1, -inv_h2));
        t.push((i, i, 2.0 * inv_h2));
        t.push((i, i + 1, -inv_h2));
    }
    match bc {
        Boundary::Dirichlet => {
            t.retain(|&(r, c, _)| c != 0 && c != n - 1 && r != 0 && r != n - 1);
        }
        Boundary::Neumann | Boundary::Robin(_) => {
            let gamma = bc.robin_coefficient();
            let diag = 2.0 * inv_h2 + 2.0 * gamma / h;
            t.push((0, 0, diag));
            t.push((0, 1, -2.0 * inv_h2));
            t.push((n - 1, n - 1, diag));
            t.push((n - 1, n - 2, -2.0 * inv_h2));
        }
    }
    t
}

/// Discrete `-Δ` on the whole grid for the given boundary condition.
pub fn laplacian(grid: &Grid, bc: Boundary) -> SparseMatrix {
    let nx = grid.nodes()[0];
    let hx = grid.spacing()[0];
    let tx = laplacian_1d_triplets(nx, hx, bc);
    let triplets = if grid.dim() == 1 {
        tx
    } else {
        let ny = grid.nodes()[1];
        let ty = laplacian_1d_triplets(ny, grid.spacing()[1], bc);
        let mut t = Vec::with_capacity((tx.len() * ny) + (ty.len() * nx));
        for iy in 0..ny {
            for &(r, c, v) in &tx {
                t.push((iy * nx + r, iy * nx + c, v));
            }
        }
        for ix in 0..nx {
            for &(r, c, v) in &ty {
                t.push((r * nx + ix, c * nx + ix, v));
            }
        }
        t
    };
    SparseMatrix::from_triplets(grid.total_nodes(), pin_filter(grid, bc, triplets))
}

/// Drops rows and columns of Dirichlet-pinned nodes.
pub(crate) fn pin_filter(
    grid: &Grid,
    bc: Boundary,
    mut triplets: Vec<(usize, usize, f64)>,
) -> Vec<(usize, usize, f64)> {
    if bc == Boundary::Dirichlet {
        triplets.retain(|&(r, c, _)| !grid.is_boundary_node(r) && !grid.is_boundary_node(c));
    }
    triplets
}

/// Centered discretization of `-∇·(b y)` for a velocity field whose component
/// along each axis is `amplitude[axis] * sin(π x_axis / L_axis)`, set to zero on
/// boundary nodes so that `b·ν = 0`. Ghost values reflect `y` evenly and `b` oddly.
pub fn drift(grid: &Grid, bc: Boundary, amplitude: [f64; 2]) -> SparseMatrix {
    let nodes = grid.nodes();
    let mut triplets = Vec::new();
    for axis in 0..grid.dim() {
        let amp = amplitude[axis];
        if amp == 0.0 {
            continue;
        }
        let n = nodes[axis];
        let h = grid.spacing()[axis];
        let len = grid.extent()[axis];
        let b: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    amp * (std::f64::consts::PI * i as f64 * h / len).sin()
                }
            })
            .collect();
        let mut line = Vec::with_capacity(2 * n);
        for i in 1..n - 1 {
            line.push((i, i + 1, -b[i + 1] / (2.0 * h)));
            line.push((i, i - 1, b[i - 1] / (2.0 * h)));
        }
        line.push((0, 1, -b[1] / h));
        line.push((n - 1, n - 2, b[n - 2] / h));
        let (other, stride_axis, stride_other) = if axis == 0 {
            (if grid.dim() == 2 { nodes[1] } else { 1 }, 1, nodes[0])
        } else {
            (nodes[0], nodes[0], 1)
        };
        for j in 0..other {
            for &(r, c, v) in &line {
                if v != 0.0 {
                    triplets.push((r * stride_axis + j * stride_other, c * stride_axis + j * stride_other, v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(grid.total_nodes(), pin_filter(grid, bc, triplets))
}
