//! Discrete function spaces on uniform grids.

mod duality;
mod field;
mod grid;
mod norms;
mod random;
mod spectral;
pub mod stencil;

pub use duality::{duality_map_F, duality_map_inverse, resolvent_eF_NK};
pub use field::Field;
pub use grid::{Boundary, Grid};
pub use norms::{
    dual_norm, gram_apply, gram_apply_mixed, inner_product, inner_product_mixed, norm, norm_mixed, riesz, riesz_mixed,
    NormTag,
};
pub use random::{random_nodal_field, random_smooth_field, seeded_rng, SMOOTH_MODES};
pub use spectral::{gamma_apply, gamma_inverse, gamma_power, yosida_apply, SpectralLaplacian};
pub use stencil::SparseMatrix;
