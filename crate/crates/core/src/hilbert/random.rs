use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::field::Field;
use super::grid::Grid;

/// Deterministic generator used throughout the toolkit.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Number of low modes mixed into a smooth random field.
pub const SMOOTH_MODES: usize = 8;

/// Random combination of the lowest eigenmodes of each component's Laplacian,
/// with Gaussian coefficients decaying like `1/(1+k)`, scaled by `amplitude`.
pub fn random_smooth_field<R: Rng + ?Sized>(grid: &Arc<Grid>, components: usize, amplitude: f64, rng: &mut R) -> Field {
    let mut out = Field::zeros(grid, components);
    for c in 0..out.components() {
        let s = grid.spectrum(c);
        let modes = SMOOTH_MODES.min(s.len());
        let slot = out.component_mut(c);
        for k in 0..modes {
            let coeff: f64 = rng.sample::<f64, _>(StandardNormal) * amplitude / (1.0 + k as f64);
            for (v, e) in slot.iter_mut().zip(s.eigenvector(k)) {
                *v += coeff * e;
            }
        }
    }
    out
}

/// Independent uniform nodal values in `[-amplitude, amplitude]`, zero at pinned nodes.
pub fn random_nodal_field<R: Rng + ?Sized>(grid: &Arc<Grid>, components: usize, amplitude: f64, rng: &mut R) -> Field {
    let mut out = Field::zeros(grid, components);
    for v in out.values_mut() {
        *v = amplitude * rng.random_range(-1.0..=1.0);
    }
    out.mask_pinned();
    out
}
