use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::field::Field;
use super::grid::{Boundary, Grid};
use crate::error::{invalid, Error, Result};

/// Which discrete space a field is measured in.
///
/// Hilbert tags carry a Gram operator `G` so that `(a, b) = Σ_c ⟨a_c, G b_c⟩_W`
/// with `W` the trapezoid weights. Dual objects are represented through the same
/// weighted pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormTag {
    L2,
    /// Graph norm of the canonical isomorphism (`-Δ`, or `I - Δ` for Neumann).
    H1,
    /// Dual of [`NormTag::H1`]: Gram operator `Γ^{-1}`.
    H1Dual,
    /// `L^p` with `p ∈ {2, 4}`.
    Lp(u32),
    /// `H^{-1}` on a Dirichlet grid: Gram operator `(-Δ)^{-1}`.
    Hminus1,
}

impl NormTag {
    pub fn is_hilbert(self) -> bool {
        !matches!(self, NormTag::Lp(p) if p != 2)
    }

    /// Dual exponent for `L^p` tags.
    pub fn conjugate_exponent(self) -> Option<f64> {
        match self {
            NormTag::Lp(p) if p != 2 => Some(p as f64 / (p as f64 - 1.0)),
            _ => None,
        }
    }

    /// Checks that the tag is usable on this grid for the first `components` components.
    pub fn validate(self, grid: &Grid, components: usize) -> Result<()> {
        match self {
            NormTag::Lp(p) if p != 2 && p != 4 => Err(invalid("norm", format!("only p = 2 or 4 supported, got {p}"))),
            NormTag::Hminus1 => {
                for c in 0..components {
                    if grid.boundary(c) != Boundary::Dirichlet {
                        return Err(invalid("norm", "hminus1 requires Dirichlet boundary conditions"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NormTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormTag::L2 => write!(f, "l2"),
            NormTag::H1 => write!(f, "h1"),
            NormTag::H1Dual => write!(f, "h1dual"),
            NormTag::Lp(p) => write!(f, "l{p}"),
            NormTag::Hminus1 => write!(f, "hminus1"),
        }
    }
}

impl FromStr for NormTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "l2" => Ok(NormTag::L2),
            "h1" => Ok(NormTag::H1),
            "h1dual" | "h1_dual" => Ok(NormTag::H1Dual),
            "hminus1" | "h-1" => Ok(NormTag::Hminus1),
            _ => {
                let p = t
                    .strip_prefix("lp")
                    .or_else(|| t.strip_prefix('l'))
                    .and_then(|rest| rest.trim_matches(|c| c == '(' || c == ')').parse::<u32>().ok())
                    .ok_or_else(|| invalid("norm", format!("unknown norm tag `{s}`")))?;
                if p == 2 {
                    Ok(NormTag::L2)
                } else if p == 4 {
                    Ok(NormTag::Lp(4))
                } else {
                    Err(invalid("norm", format!("only p = 2 or 4 supported, got {p}")))
                }
            }
        }
    }
}

impl TryFrom<String> for NormTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NormTag> for String {
    fn from(t: NormTag) -> String {
        t.to_string()
    }
}

/// Gram operator of a Hilbert tag on one component's nodal values.
pub(crate) fn gram_component(grid: &Grid, component: usize, tag: NormTag, v: &[f64]) -> Vec<f64> {
    match tag {
        NormTag::L2 | NormTag::Lp(_) => v.to_vec(),
        NormTag::H1 => canonical_apply(grid, component, v),
        NormTag::H1Dual => grid.canonical_spectrum(component).apply_fn(v, inv),
        NormTag::Hminus1 => grid.spectrum(component).apply_fn(v, inv),
    }
}

/// Inverse Gram operator (Riesz map from a weighted-pairing representative of a
/// dual element back to the primal space).
pub(crate) fn inverse_gram_component(grid: &Grid, component: usize, tag: NormTag, v: &[f64]) -> Vec<f64> {
    match tag {
        NormTag::L2 | NormTag::Lp(_) => v.to_vec(),
        NormTag::H1 => grid.canonical_spectrum(component).apply_fn(v, inv),
        NormTag::H1Dual => canonical_apply(grid, component, v),
        NormTag::Hminus1 => grid.laplacian(component).mul(v),
    }
}

fn inv(l: f64) -> f64 {
    if l > 0.0 {
        1.0 / l
    } else {
        0.0
    }
}

fn canonical_apply(grid: &Grid, component: usize, v: &[f64]) -> Vec<f64> {
    let mut out = grid.laplacian(component).mul(v);
    let shift = grid.boundary(component).canonical_shift();
    if shift != 0.0 {
        for (o, x) in out.iter_mut().zip(v) {
            *o += shift * x;
        }
    }
    out
}

fn per_component(y: &Field, tags: &[NormTag], f: impl Fn(usize, NormTag, &[f64]) -> Vec<f64>) -> Field {
    let mut out = y.clone();
    for c in 0..y.components() {
        let tag = tags[c.min(tags.len() - 1)];
        let v = f(c, tag, y.component(c));
        out.component_mut(c).copy_from_slice(&v);
    }
    out
}

/// `G y` with one tag per component (the last tag repeats).
pub fn gram_apply_mixed(y: &Field, tags: &[NormTag]) -> Field {
    per_component(y, tags, |c, t, v| gram_component(y.grid(), c, t, v))
}

pub fn gram_apply(y: &Field, tag: NormTag) -> Field {
    gram_apply_mixed(y, &[tag])
}

/// `G^{-1} z`: the Riesz representative of a dual element.
pub fn riesz_mixed(z: &Field, tags: &[NormTag]) -> Field {
    per_component(z, tags, |c, t, v| inverse_gram_component(z.grid(), c, t, v))
}

pub fn riesz(z: &Field, tag: NormTag) -> Field {
    riesz_mixed(z, &[tag])
}

/// Inner product; for `L^p` tags this is the plain weighted pairing.
pub fn inner_product(a: &Field, b: &Field, tag: NormTag) -> Result<f64> {
    inner_product_mixed(a, b, &[tag])
}

pub fn inner_product_mixed(a: &Field, b: &Field, tags: &[NormTag]) -> Result<f64> {
    a.check_compatible(b)?;
    if tags.is_empty() {
        return Err(invalid("norm", "empty tag list"));
    }
    Ok(a.weighted_dot(&gram_apply_mixed(b, tags)))
}

fn lp_norm(a: &Field, p: f64) -> f64 {
    let w = a.grid().weights();
    let n = w.len();
    let s: f64 = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| w[i % n] * v.abs().powf(p))
        .sum();
    s.powf(1.0 / p)
}

pub fn norm(a: &Field, tag: NormTag) -> f64 {
    norm_mixed(a, &[tag])
}

pub fn norm_mixed(a: &Field, tags: &[NormTag]) -> f64 {
    if tags.len() == 1 {
        if let NormTag::Lp(p) = tags[0] {
            if p != 2 {
                return lp_norm(a, p as f64);
            }
        }
    }
    a.weighted_dot(&gram_apply_mixed(a, tags)).max(0.0).sqrt()
}

/// Norm of a dual element given by its weighted-pairing representative.
pub fn dual_norm(z: &Field, tag: NormTag) -> f64 {
    match tag.conjugate_exponent() {
        Some(q) => lp_norm(z, q),
        None => z.weighted_dot(&riesz(z, tag)).max(0.0).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_constant_and_sine_norms() {
        let g = Grid::line(1.0, 11, Boundary::Neumann).unwrap();
        let one = Field::constant(&g, 1, 1.0);
        assert!((inner_product(&one, &one, NormTag::L2).unwrap() - 1.0).abs() < 1e-14);
        let d = Grid::line(1.0, 257, Boundary::Dirichlet).unwrap();
        let s = Field::from_fn(&d, 1, |_, x| (PI * x[0]).sin());
        assert!((norm(&s, NormTag::L2) - 0.5f64.sqrt()).abs() < 1e-10);
        // seminorm² ≈ π²/2
        assert!((norm(&s, NormTag::H1).powi(2) - PI * PI / 2.0).abs() < 1e-3);
    }

    #[test]
    fn tags_round_trip_through_strings() {
        for t in [NormTag::L2, NormTag::H1, NormTag::H1Dual, NormTag::Lp(4), NormTag::Hminus1] {
            assert_eq!(t.to_string().parse::<NormTag>().unwrap(), t);
        }
        assert_eq!("lp(4)".parse::<NormTag>().unwrap(), NormTag::Lp(4));
        assert!("l3".parse::<NormTag>().is_err());
    }

    #[test]
    fn hminus1_needs_dirichlet() {
        let g = Grid::line(1.0, 5, Boundary::Neumann).unwrap();
        assert!(NormTag::Hminus1.validate(&g, 1).is_err());
        assert!(NormTag::Lp(3).validate(&g, 1).is_err());
        let d = Grid::line(1.0, 5, Boundary::Dirichlet).unwrap();
        assert!(NormTag::Hminus1.validate(&d, 1).is_ok());
    }

    #[test]
    fn dual_norms_are_dual_to_primal_norms() {
        let g = Grid::line(1.0, 9, Boundary::Robin(1.0)).unwrap();
        let a = Field::from_fn(&g, 1, |_, x| (3.0 * x[0]).cos() + x[0]);
        for tag in [NormTag::L2, NormTag::H1, NormTag::H1Dual] {
            // sup over b of <a, b>/|b| is attained at b = G^{-1} a
            let b = riesz(&a, tag);
            let ratio = a.weighted_dot(&b) / norm(&b, tag);
            assert!((ratio - dual_norm(&a, tag)).abs() < 1e-10, "{tag}");
        }
    }
}
