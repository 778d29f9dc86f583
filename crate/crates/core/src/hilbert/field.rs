use std::sync::Arc;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Nodal values of `n` state components on a grid, stored component-major.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Arc<Grid>, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(crate::error::invalid("components", "need at least one component"));
        }
        if values.len() != components * grid.total_nodes() {
            return Err(Error::Shape(format!(
                "expected {} values ({} components x {} nodes), got {}",
                components * grid.total_nodes(),
                components,
                grid.total_nodes(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self {
            grid: grid.clone(),
            components,
            values,
        })
    }

    pub fn zeros(grid: &Arc<Grid>, components: usize) -> Self {
        Self::constant(grid, components, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, components: usize, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            components: components.max(1),
            values: vec![value; components.max(1) * grid.total_nodes()],
        }
    }

    /// Samples `f(component, coordinates)` at every node.
    pub fn from_fn(grid: &Arc<Grid>, components: usize, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let n = grid.total_nodes();
        let components = components.max(1);
        let mut values = Vec::with_capacity(components * n);
        for c in 0..components {
            for node in 0..n {
                values.push(f(c, grid.coordinates(node)));
            }
        }
        Self {
            grid: grid.clone(),
            components,
            values,
        }
    }

    /// Stacks single-component slices into one field.
    pub fn from_components(grid: &Arc<Grid>, parts: &[Vec<f64>]) -> Result<Self> {
        let values: Vec<f64> = parts.iter().flatten().copied().collect();
        Self::new(grid, parts.len(), values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn nodes(&self) -> usize {
        self.grid.total_nodes()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.nodes();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.nodes();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Same grid and component count.
    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if !(Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid)) {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        if self.components != other.components {
            return Err(Error::Shape(format!(
                "component count {} vs {}",
                self.components, other.components
            )));
        }
        Ok(())
    }

    /// A field of the same shape with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            components: self.components,
            values,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_values(vec![0.0; self.values.len()])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert_eq!(self.values.len(), x.values.len());
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &Field) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Field) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Zeroes the values at Dirichlet-pinned nodes of each component.
    pub fn mask_pinned(&mut self) {
        let n = self.nodes();
        for c in 0..self.components {
            if self.grid.boundary(c) != super::grid::Boundary::Dirichlet {
                continue;
            }
            for node in 0..n {
                if self.grid.is_boundary_node(node) {
                    self.values[c * n + node] = 0.0;
                }
            }
        }
    }

    /// Plain quadrature pairing `Σ_c Σ_i w_i a_i b_i`.
    pub fn weighted_dot(&self, other: &Field) -> f64 {
        let w = self.grid.weights();
        let n = w.len();
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| w[i % n] * a * b)
            .sum()
    }

    /// Largest absolute nodal value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
