//! Duality mappings of the control space and the resolvent of `εF + N_K`,
//! where `K` is the closed ball of radius `ρ`.

use super::field::Field;
use super::norms::{dual_norm, gram_apply, norm, riesz, NormTag};
use crate::error::{invalid, Error, Result};

fn power_map(u: &Field, p: f64) -> Field {
    let n = {
        let w = u.grid().weights();
        let len = w.len();
        let s: f64 = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| w[i % len] * v.abs().powf(p))
            .sum();
        s.powf(1.0 / p)
    };
    if n == 0.0 {
        return u.zeros_like();
    }
    let scale = n.powf(2.0 - p);
    u.map(|v| scale * v.signum() * v.abs().powf(p - 1.0))
}

/// Duality mapping `F: U → U*`, returned as its weighted-pairing representative.
///
/// `⟨F(u), u⟩ = ‖u‖²` and `‖F(u)‖_* = ‖u‖`; `F(0) = 0`.
pub fn duality_map_F(u: &Field, tag: NormTag) -> Result<Field> {
    tag.validate(u.grid(), u.components())?;
    Ok(match tag {
        NormTag::Lp(p) if p != 2 => power_map(u, p as f64),
        _ => gram_apply(u, tag),
    })
}

/// `F^{-1}: U* → U`, the duality mapping of the dual space.
pub fn duality_map_inverse(z: &Field, tag: NormTag) -> Result<Field> {
    tag.validate(z.grid(), z.components())?;
    Ok(match tag.conjugate_exponent() {
        Some(q) => power_map(z, q),
        None => riesz(z, tag),
    })
}

/// `(εF + N_K)^{-1}(ζ)`: the maximizer of `⟨ζ, u⟩ - (ε/2)‖u‖²` over `‖u‖ ≤ ρ`.
///
/// With `ε = 0` this is the normal-cone inverse `ρ F^{-1}(ζ)/‖ζ‖_*`, which is
/// multivalued at `ζ = 0`.
pub fn resolvent_eF_NK(zeta: &Field, tag: NormTag, eps: f64, rho: f64) -> Result<Field> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(invalid("eps", format!("must be nonnegative, got {eps}")));
    }
    let zn = dual_norm(zeta, tag);
    if zn == 0.0 {
        if eps == 0.0 {
            return Err(Error::Indeterminate);
        }
        return Ok(zeta.zeros_like());
    }
    let dir = duality_map_inverse(zeta, tag)?;
    let factor = if eps == 0.0 { rho / zn } else { (1.0 / eps).min(rho / zn) };
    let mut u = dir.scaled(factor);
    // guard round-off on the saturated branch
    let un = norm(&u, tag);
    if un > rho {
        u = u.scaled(rho / un);
    }
    Ok(u)
}
