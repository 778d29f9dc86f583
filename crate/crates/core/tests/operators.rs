use std::f64::consts::PI;

use mintime::hilbert::{random_smooth_field, seeded_rng, Boundary, Field, Grid, NormTag};
use mintime::operators::{
    audit_with, AuditOptions, ControlMap, Nonlinearity, OperatorKind, OperatorSpec, Reaction,
};
use mintime::parallel::Execution;
use nalgebra::DVector;
use proptest::prelude::*;

fn kinds() -> Vec<(OperatorKind, Boundary)> {
    vec![
        (
            OperatorKind::PotentialDrift {
                beta: Nonlinearity::SaturatingRational { slope: 0.5, gain: 1.0 },
                a1: -0.2,
                drift: [0.4, 0.0],
            },
            Boundary::Robin(0.7),
        ),
        (
            OperatorKind::PorousMedia {
                beta: Nonlinearity::SaturatingRational { slope: 1.0, gain: 0.5 },
            },
            Boundary::Dirichlet,
        ),
        (
            OperatorKind::ReactionDiffusion2 {
                d1: 0.6,
                d2: 1.2,
                f: Reaction::ProductRational { gain: 0.5 },
                g: Reaction::Tanh { a: 0.3, b: -1.0 },
            },
            Boundary::Neumann,
        ),
        (
            OperatorKind::FitzHughNagumo {
                d1: 1.0,
                alpha0: -0.5,
                sigma: 0.9,
                gamma: 0.2,
            },
            Boundary::Dirichlet,
        ),
        (
            OperatorKind::PhaseField {
                k: 0.8,
                l: 1.1,
                nu: 0.5,
                gamma: 0.6,
                beta: Nonlinearity::Logistic { slope: 0.2, gain: 1.0 },
                pi_slope: 0.3,
            },
            Boundary::Neumann,
        ),
    ]
}

fn sample(g: &std::sync::Arc<Grid>, nc: usize, seed: u64) -> Field {
    let mut f = random_smooth_field(g, nc, 1.0, &mut seeded_rng(seed));
    f.mask_pinned();
    f
}

#[test]
fn every_kind_vanishes_at_zero() {
    for (kind, bc) in kinds() {
        let g = Grid::line(1.0, 19, bc).unwrap();
        let spec = OperatorSpec::new(kind, &g).unwrap();
        let z = Field::zeros(&g, spec.components());
        assert!(spec.apply_A(&z).unwrap().max_abs() < 1e-14);
    }
}

#[test]
fn porous_linear_law_on_sine_mode() {
    let r = 2.5;
    let g = Grid::line(1.0, 201, Boundary::Dirichlet).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::PorousMedia {
            beta: Nonlinearity::Linear { slope: r },
        },
        &g,
    )
    .unwrap();
    let y = Field::from_fn(&g, 1, |_, x| (PI * x[0]).sin());
    let ay = spec.apply_A(&y).unwrap();
    let expect = y.scaled(r * PI * PI);
    assert!(ay.sub(&expect).max_abs() < 1e-3 * expect.max_abs());
}

#[test]
fn linear_kind_derivative_is_itself() {
    let g = Grid::line(1.0, 25, Boundary::Dirichlet).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::FitzHughNagumo {
            d1: 1.0,
            alpha0: 0.3,
            sigma: 1.0,
            gamma: 0.5,
        },
        &g,
    )
    .unwrap();
    assert!(spec.is_linear());
    let y = sample(&g, 2, 1);
    let z = sample(&g, 2, 2);
    let d = spec.apply_Aprime(&y, &z).unwrap();
    assert!(d.sub(&spec.apply_A(&z).unwrap()).max_abs() < 1e-12 * d.max_abs());
}

#[test]
fn jacobian_agrees_with_directional_derivative() {
    for (k, (kind, bc)) in kinds().into_iter().enumerate() {
        let g = Grid::line(1.0, 15, bc).unwrap();
        let spec = OperatorSpec::new(kind, &g).unwrap();
        let nc = spec.components();
        let y = sample(&g, nc, 10 + k as u64);
        let z = sample(&g, nc, 20 + k as u64);
        let jac = spec.jacobian(&y).unwrap();
        let jz = &jac * DVector::from_column_slice(z.values());
        let d = spec.apply_Aprime(&y, &z).unwrap();
        let err = d.values().iter().zip(jz.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10 * d.max_abs().max(1.0), "{}: {err}", spec.kind().name());
    }
}

#[test]
fn fhn_adjoint_is_weighted_jacobian_transpose() {
    let g = Grid::line(1.0, 13, Boundary::Neumann).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::FitzHughNagumo {
            d1: 0.7,
            alpha0: 0.1,
            sigma: 2.0,
            gamma: 0.3,
        },
        &g,
    )
    .unwrap();
    let y = sample(&g, 2, 5);
    let p = sample(&g, 2, 6);
    let n = g.total_nodes();
    let w: Vec<f64> = (0..2 * n).map(|i| g.weights()[i % n]).collect();
    let jac = spec.jacobian(&y).unwrap();
    // W⁻¹ Jᵀ W p
    let wp = DVector::from_iterator(2 * n, p.values().iter().zip(&w).map(|(a, b)| a * b));
    let jt = jac.transpose() * wp;
    let dense: Vec<f64> = jt.iter().zip(&w).map(|(a, b)| a / b).collect();
    let fast = spec.apply_Aprime_adjoint(&y, &p).unwrap();
    let err = fast.values().iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-11 * fast.max_abs());
}

#[test]
fn identity_map_has_unit_observability() {
    let g = Grid::line(1.0, 21, Boundary::Dirichlet).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::PotentialDrift {
            beta: Nonlinearity::Cubic { linear: 0.0, cubic: 1.0 },
            a1: 0.0,
            drift: [0.0; 2],
        },
        &g,
    )
    .unwrap();
    let report = audit_with(&spec, &ControlMap::identity(NormTag::L2), &AuditOptions::new(200, 3)).unwrap();
    assert!((report.c_star - 1.0).abs() < 1e-9);
    assert!(report.monotonicity.pass && report.monotonicity.coercivity > 0.0);
    // monotone cubic with zero target: no sliding constant needed
    assert!(report.c1 <= 1e-9 && report.c3 <= 1e-9);
    assert!(report.a_zero < 1e-14);
}

#[test]
fn audit_is_reproducible_across_executions() {
    let (kind, bc) = kinds().remove(2);
    let g = Grid::line(1.0, 17, bc).unwrap();
    let spec = OperatorSpec::new(kind, &g).unwrap();
    let map = ControlMap::first_component(NormTag::L2);
    let mut opts = AuditOptions::new(150, 11);
    opts.execution = Execution::Sequential;
    let a = audit_with(&spec, &map, &opts).unwrap();
    opts.execution = Execution::Parallel;
    let b = audit_with(&spec, &map, &opts).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn derivative_adjoint_pairing(seed in 0u64..100_000, k in 0usize..5, nodes in 8usize..30) {
        let (kind, bc) = kinds().remove(k);
        let g = Grid::line(1.0, nodes, bc).unwrap();
        let spec = OperatorSpec::new(kind, &g).unwrap();
        let nc = spec.components();
        let y = sample(&g, nc, seed);
        let z = sample(&g, nc, seed + 1);
        let p = sample(&g, nc, seed + 2);
        let lhs = spec.apply_Aprime(&y, &z).unwrap().weighted_dot(&p);
        let rhs = z.weighted_dot(&spec.apply_Aprime_adjoint(&y, &p).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }
}

#[test]
fn linear_pair_on_constants_is_pure_reaction() {
    let g = Grid::line(1.0, 9, Boundary::Neumann).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::ReactionDiffusion2 {
            d1: 1.0,
            d2: 2.0,
            f: Reaction::Linear { a: 0.7, b: -0.2 },
            g: Reaction::Linear { a: 1.5, b: 0.4 },
        },
        &g,
    )
    .unwrap();
    let ay = spec.apply_A(&Field::constant(&g, 2, 1.0)).unwrap();
    assert!(ay.component(0).iter().all(|v| (v - 0.5).abs() < 1e-12));
    assert!(ay.component(1).iter().all(|v| (v - 1.9).abs() < 1e-12));
}

#[test]
fn operator_kinds_round_trip_through_json() {
    for (kind, _) in kinds() {
        let text = serde_json::to_string(&kind).unwrap();
        assert!(text.contains("\"kind\""));
        let back: OperatorKind = serde_json::from_str(&text).unwrap();
        assert_eq!(back, kind);
    }
    let parsed: OperatorKind =
        serde_json::from_str(r#"{"kind":"porous_media","beta":{"family":"linear","slope":2.0}}"#).unwrap();
    assert_eq!(parsed.components(), 1);
}
