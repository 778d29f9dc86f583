use std::f64::consts::PI;

use mintime::hilbert::{
    duality_map_F, duality_map_inverse, gamma_apply, gamma_inverse, gamma_power, norm, random_smooth_field,
    resolvent_eF_NK, seeded_rng, yosida_apply, Boundary, Field, Grid, NormTag, SpectralLaplacian,
};
use proptest::prelude::*;

fn rel(a: &Field, b: &Field) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1e-300)
}

#[test]
fn l2_norm_of_sine_mode() {
    let g = Grid::line(1.0, 401, Boundary::Dirichlet).unwrap();
    let u = Field::from_fn(&g, 1, |_, x| (PI * x[0]).sin());
    assert!((norm(&u, NormTag::L2) - 0.5f64.sqrt()).abs() < 1e-5);
}

#[test]
fn lp_duality_map_matches_pointwise_formula() {
    let g = Grid::line(1.0, 21, Boundary::Neumann).unwrap();
    let u = random_smooth_field(&g, 1, 1.5, &mut seeded_rng(4));
    let n = norm(&u, NormTag::Lp(4));
    let f = duality_map_F(&u, NormTag::Lp(4)).unwrap();
    // ‖u‖^{2-p} |u|^{p-2} u with p = 4
    let expect = u.map(|v| v * v * v / (n * n));
    assert!(rel(&f, &expect) < 1e-12);
    let back = duality_map_inverse(&f, NormTag::Lp(4)).unwrap();
    assert!(rel(&back, &u) < 1e-9);
}

#[test]
fn l2_resolvent_closed_form() {
    let g = Grid::line(1.0, 11, Boundary::Neumann).unwrap();
    let z = random_smooth_field(&g, 1, 1.0, &mut seeded_rng(8));
    let zn = norm(&z, NormTag::L2);
    // interior branch: ζ/ε
    let eps = 1.0;
    let r = resolvent_eF_NK(&z, NormTag::L2, eps, 10.0 * zn).unwrap();
    assert!(rel(&r, &z.scaled(1.0 / eps)) < 1e-12);
    // saturated branch: ρ ζ/‖ζ‖
    let rho = 0.1 * zn;
    let r = resolvent_eF_NK(&z, NormTag::L2, 0.5, rho).unwrap();
    assert!(rel(&r, &z.scaled(rho / zn)) < 1e-10);
}

#[test]
fn gamma_powers_compose() {
    let g = Grid::line(1.0, 33, Boundary::Dirichlet).unwrap();
    let s = SpectralLaplacian::new(&g, Boundary::Dirichlet, 0.0).unwrap();
    let mut y = random_smooth_field(&g, 1, 1.0, &mut seeded_rng(2));
    y.mask_pinned();
    let half = gamma_power(&gamma_power(&y, &s, 0.5).unwrap(), &s, 0.5).unwrap();
    let full = gamma_apply(&y, &s).unwrap();
    assert!(rel(&half, &full) < 1e-10);
    let back = gamma_inverse(&full, &s).unwrap();
    assert!(rel(&back, &y) < 1e-10);
    assert!(s.orthonormality_error() < 1e-10);
}

#[test]
fn yosida_approximation_grows_toward_generator() {
    let g = Grid::line(1.0, 33, Boundary::Dirichlet).unwrap();
    let s = SpectralLaplacian::new(&g, Boundary::Dirichlet, 0.0).unwrap();
    let mut y = random_smooth_field(&g, 1, 1.0, &mut seeded_rng(3));
    y.mask_pinned();
    let full = norm(&gamma_apply(&y, &s).unwrap(), NormTag::L2);
    let mut last = 0.0;
    for nu in [1.0, 1e-1, 1e-2, 1e-3, 1e-5] {
        let n = norm(&yosida_apply(&y, &s, nu).unwrap(), NormTag::L2);
        assert!(n >= last && n <= full * (1.0 + 1e-12));
        last = n;
    }
    assert!((full - last) / full < 1e-2);
}

fn tags() -> [(NormTag, Boundary); 4] {
    [
        (NormTag::L2, Boundary::Neumann),
        (NormTag::H1, Boundary::Neumann),
        (NormTag::Lp(4), Boundary::Neumann),
        (NormTag::Hminus1, Boundary::Dirichlet),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn duality_map_is_homogeneous(seed in 0u64..10_000, scale in 0.1f64..10.0, t in 0usize..4) {
        let (tag, bc) = tags()[t];
        let g = Grid::line(1.0, 17, bc).unwrap();
        let mut u = random_smooth_field(&g, 1, 1.0, &mut seeded_rng(seed));
        u.mask_pinned();
        let a = duality_map_F(&u.scaled(scale), tag).unwrap();
        let b = duality_map_F(&u, tag).unwrap().scaled(scale);
        prop_assert!(rel(&a, &b) < 1e-9);
        let n = norm(&u, tag);
        prop_assert!((a.weighted_dot(&u.scaled(scale)) - scale * scale * n * n).abs() <= 1e-9 * scale * scale * n * n);
    }

    #[test]
    fn resolvent_stays_in_ball(seed in 0u64..10_000, eps in 1e-3f64..2.0, rho in 0.05f64..3.0, t in 0usize..4) {
        let (tag, bc) = tags()[t];
        let g = Grid::line(1.0, 17, bc).unwrap();
        let mut z = random_smooth_field(&g, 1, 2.0, &mut seeded_rng(seed));
        z.mask_pinned();
        let u = resolvent_eF_NK(&z, tag, eps, rho).unwrap();
        prop_assert!(norm(&u, tag) <= rho * (1.0 + 1e-9));
    }
}
