use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{dual_norm, duality_map_inverse, Field, NormTag};

/// Component projection `P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Full,
    FirstComponent,
}

impl Projection {
    pub fn apply(self, y: &Field) -> Field {
        match self {
            Projection::Full => y.clone(),
            Projection::FirstComponent => {
                let mut out = y.clone();
                for c in 1..y.components() {
                    out.component_mut(c).fill(0.0);
                }
                out
            }
        }
    }

    /// Components kept by the projection.
    pub fn kept(self, components: usize) -> usize {
        match self {
            Projection::Full => components,
            Projection::FirstComponent => 1,
        }
    }
}

/// How the control enters the state equation.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlMode {
    Identity,
    /// `B(u₁, u₂) = (u₁, 0)`.
    FirstComponentOnly,
    /// `(Bu)(x) = ∫ K(x, z) u(z) dz`, discretized with the grid weights and
    /// applied to each component.
    NonlocalKernel(DMatrix<f64>),
}

/// Control operator `B`, its adjoint, the control space norm and `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMap {
    mode: ControlMode,
    norm: NormTag,
    projection: Projection,
}

impl ControlMap {
    pub fn new(mode: ControlMode, norm: NormTag, projection: Projection) -> Result<Self> {
        if mode == ControlMode::FirstComponentOnly && projection != Projection::FirstComponent {
            return Err(invalid("projection", "first_component_only control requires P = first_component"));
        }
        if let ControlMode::NonlocalKernel(k) = &mode {
            if k.nrows() != k.ncols() {
                return Err(Error::Shape(format!("kernel must be square, got {}x{}", k.nrows(), k.ncols())));
            }
            if k.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("kernel"));
            }
        }
        Ok(Self {
            mode,
            norm,
            projection,
        })
    }

    pub fn identity(norm: NormTag) -> Self {
        Self {
            mode: ControlMode::Identity,
            norm,
            projection: Projection::Full,
        }
    }

    pub fn first_component(norm: NormTag) -> Self {
        Self {
            mode: ControlMode::FirstComponentOnly,
            norm,
            projection: Projection::FirstComponent,
        }
    }

    pub fn mode(&self) -> &ControlMode {
        &self.mode
    }

    pub fn norm(&self) -> NormTag {
        self.norm
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn project(&self, y: &Field) -> Field {
        self.projection.apply(y)
    }

    fn check(&self, f: &Field) -> Result<()> {
        if let ControlMode::NonlocalKernel(k) = &self.mode {
            if k.nrows() != f.nodes() {
                return Err(Error::Shape(format!(
                    "kernel is {}x{}, grid has {} nodes",
                    k.nrows(),
                    k.ncols(),
                    f.nodes()
                )));
            }
        }
        Ok(())
    }

    /// Components of `u` that reach the state (the rest is discarded by `B`).
    pub fn controlled_components(&self, components: usize) -> usize {
        match self.mode {
            ControlMode::FirstComponentOnly => 1,
            _ => components,
        }
    }

    /// `B u`; rows at Dirichlet-pinned nodes are zero.
    pub fn apply_B(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut out = match &self.mode {
            ControlMode::Identity => u.clone(),
            ControlMode::FirstComponentOnly => Projection::FirstComponent.apply(u),
            ControlMode::NonlocalKernel(k) => {
                let w = u.grid().weights();
                let mut out = u.zeros_like();
                for c in 0..u.components() {
                    let wu: Vec<f64> = u.component(c).iter().zip(w).map(|(a, b)| a * b).collect();
                    let r = k * nalgebra::DVector::from_vec(wu);
                    out.component_mut(c).copy_from_slice(r.as_slice());
                }
                out
            }
        };
        out.mask_pinned();
        Ok(out)
    }

    /// `B^* v`, the exact transpose of [`Self::apply_B`] in the weighted pairing.
    pub fn apply_Bstar(&self, v: &Field) -> Result<Field> {
        self.check(v)?;
        let mut masked = v.clone();
        masked.mask_pinned();
        Ok(match &self.mode {
            ControlMode::Identity => masked,
            ControlMode::FirstComponentOnly => Projection::FirstComponent.apply(&masked),
            ControlMode::NonlocalKernel(k) => {
                let w = v.grid().weights();
                let mut out = v.zeros_like();
                for c in 0..v.components() {
                    let wv: Vec<f64> = masked.component(c).iter().zip(w).map(|(a, b)| a * b).collect();
                    let r = k.tr_mul(&nalgebra::DVector::from_vec(wv));
                    out.component_mut(c).copy_from_slice(r.as_slice());
                }
                out
            }
        })
    }

    /// Control norm restricted to the controlled components.
    pub fn control_norm(&self, u: &Field) -> f64 {
        crate::hilbert::norm(&self.restrict(u), self.norm)
    }

    /// Dual norm of a `U*` representative, restricted to the controlled components.
    pub fn control_dual_norm(&self, z: &Field) -> f64 {
        dual_norm(&self.restrict(z), self.norm)
    }

    /// Zeroes the components that `B` discards.
    pub fn restrict(&self, u: &Field) -> Field {
        match self.mode {
            ControlMode::FirstComponentOnly => Projection::FirstComponent.apply(u),
            _ => u.clone(),
        }
    }

    /// Sign feedback direction `-Sign(z) = -F^{-1}(z)/‖z‖_*` (zero at `z = 0`).
    pub(crate) fn negative_sign(&self, z: &Field, rho: f64) -> Result<Field> {
        let z = self.restrict(z);
        let zn = dual_norm(&z, self.norm);
        if zn == 0.0 {
            return Ok(z.zeros_like());
        }
        let mut u = duality_map_inverse(&z, self.norm)?.scaled(-rho / zn);
        let un = crate::hilbert::norm(&u, self.norm);
        if un > rho {
            u = u.scaled(rho / un);
        }
        Ok(u)
    }
}
