//! Acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use mintime::adjoint::{adjoint_pairing, solve_adjoint, solve_variation};
use mintime::forward::{ForwardOptions, Integrator};
use mintime::hilbert::{
    dual_norm, duality_map_F, norm, random_nodal_field, random_smooth_field, resolvent_eF_NK, seeded_rng, Boundary,
    Field, Grid, NormTag,
};
use mintime::operators::{
    audit_with, AuditOptions, ControlMap, Nonlinearity, OperatorKind, OperatorSpec, Reaction,
};
use mintime::oracle::{analytic_min_time_scalar, brute_force_min_time, OdeReduction, OdeTarget};
use mintime::sliding::{run_sliding, sliding_continuation, SlidingOptions};
use mintime::time::{Control, TimeGrid};
use mintime::timeopt::{eps_continuation, Optimum, PenalizedProblem};
use nalgebra::{DMatrix, DVector};

/// Bypasses the test harness capture so the line shows up in plain `cargo test` output.
fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stdout().lock(), "\nacceptance {n:>2} {tag} {name}: {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn all_kinds() -> Vec<(OperatorKind, Boundary)> {
    vec![
        (
            OperatorKind::PotentialDrift {
                beta: Nonlinearity::Cubic { linear: 0.2, cubic: 1.0 },
                a1: 0.3,
                drift: [0.6, 0.0],
            },
            Boundary::Robin(1.5),
        ),
        (
            OperatorKind::PorousMedia {
                beta: Nonlinearity::Logistic { slope: 0.5, gain: 1.0 },
            },
            Boundary::Dirichlet,
        ),
        (
            OperatorKind::ReactionDiffusion2 {
                d1: 1.0,
                d2: 0.5,
                f: Reaction::Tanh { a: 1.0, b: -0.7 },
                g: Reaction::ProductRational { gain: 0.8 },
            },
            Boundary::Neumann,
        ),
        (
            OperatorKind::FitzHughNagumo {
                d1: 0.8,
                alpha0: 0.3,
                sigma: 1.2,
                gamma: 0.4,
            },
            Boundary::Neumann,
        ),
        (
            OperatorKind::PhaseField {
                k: 1.0,
                l: 0.5,
                nu: 0.7,
                gamma: 0.9,
                beta: Nonlinearity::Cubic { linear: 0.0, cubic: 1.0 },
                pi_slope: -1.0,
            },
            Boundary::Neumann,
        ),
    ]
}

fn masked(mut f: Field) -> Field {
    f.mask_pinned();
    f
}

#[test]
fn c01_adjoint_exactness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (kind, bc) in all_kinds() {
        for i in 0..20u64 {
            let nodes = 16 + (i as usize * 48) / 19;
            let g = Grid::line(1.0, nodes, bc).unwrap();
            let spec = OperatorSpec::new(kind.clone(), &g).unwrap();
            let nc = spec.components();
            let map = if nc == 2 && i % 2 == 1 {
                ControlMap::first_component(NormTag::L2)
            } else {
                ControlMap::identity(NormTag::L2)
            };
            let integ = Integrator::new(&spec, &map, ForwardOptions::default()).unwrap();
            let mut rng = seeded_rng(1000 + i);
            let y0 = masked(random_smooth_field(&g, nc, 0.8, &mut rng));
            let t = TimeGrid::new(0.05, 0.01).unwrap();
            let mut draw = |a: f64| -> Vec<Field> {
                (0..t.steps()).map(|_| masked(random_smooth_field(&g, nc, a, &mut rng))).collect()
            };
            let u = Control::new(t, draw(0.5), 1e6, NormTag::L2).unwrap();
            let v = Control::new(t, draw(1.0), 1e6, NormTag::L2).unwrap();
            let pt = masked(random_smooth_field(&g, nc, 1.0, &mut seeded_rng(5000 + i)));
            let traj = integ.solve(&y0, &u).unwrap();
            let var = solve_variation(&integ, &traj, &v).unwrap();
            let adj = solve_adjoint(&integ, &traj, &pt).unwrap();
            let lhs = var.terminal().weighted_dot(&pt);
            let rhs = adjoint_pairing(&integ, &adj, &v).unwrap();
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "adjoint exactness",
        worst <= 1e-10 && secs < 10.0,
        &format!("{count} instances, worst relative residual {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn c02_derivative_fidelity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (k, (kind, bc)) in all_kinds().into_iter().enumerate() {
        for i in 0..5u64 {
            let g = Grid::line(1.0, 24 + 8 * i as usize, bc).unwrap();
            let spec = OperatorSpec::new(kind.clone(), &g).unwrap();
            let nc = spec.components();
            let mut rng = seeded_rng(77 * k as u64 + i);
            let y = masked(random_smooth_field(&g, nc, 1.0, &mut rng));
            let z = masked(random_smooth_field(&g, nc, 1.0, &mut rng));
            let h = 1e-4;
            let mut plus = y.clone();
            plus.axpy(h, &z);
            let mut minus = y.clone();
            minus.axpy(-h, &z);
            let fd = spec.apply_A(&plus).unwrap().sub(&spec.apply_A(&minus).unwrap()).scaled(0.5 / h);
            let exact = spec.apply_Aprime(&y, &z).unwrap();
            worst = worst.max(fd.sub(&exact).max_abs() / exact.max_abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "derivative fidelity",
        worst <= 1e-5 && secs < 5.0,
        &format!("five kinds, worst relative error {worst:.2e}, {secs:.2}s"),
    );
}

/// `‖u‖_{L⁴}` straight from the trapezoid weights.
fn l4_norm(u: &Field) -> f64 {
    let w = u.grid().weights();
    let n = w.len();
    u.values().iter().enumerate().map(|(i, v)| w[i % n] * v.powi(4)).sum::<f64>().powf(0.25)
}

/// `‖u‖_{H⁻¹}` on a 1D Dirichlet grid: `Σ h u_i ((-Δ_h)^{-1} u)_i` over interior nodes.
fn hminus1_norm(u: &Field) -> f64 {
    let n = u.nodes();
    let h = u.grid().spacing()[0];
    let m = n - 2;
    let lap = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 2.0 / (h * h),
        1 => -1.0 / (h * h),
        _ => 0.0,
    });
    let x = DVector::from_iterator(m, u.values()[1..n - 1].iter().copied());
    let s = lap.lu().solve(&x).unwrap();
    (h * x.dot(&s)).sqrt()
}

/// Compass search for the unconstrained minimum of `(μ/2)‖u‖² - ⟨ζ, u⟩` over the free nodes.
fn compass(zeta: &Field, free: &[usize], nrm: &dyn Fn(&Field) -> f64, mu: f64, start: &[f64]) -> Vec<f64> {
    let build = |x: &[f64]| {
        let mut vals = vec![0.0; zeta.len()];
        for (k, &i) in free.iter().enumerate() {
            vals[i] = x[k];
        }
        zeta.with_values(vals)
    };
    let cost = |x: &[f64]| {
        let u = build(x);
        let r = nrm(&u);
        0.5 * mu * r * r - zeta.weighted_dot(&u)
    };
    let mut x = start.to_vec();
    let mut fx = cost(&x);
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut step = scale;
    while step > 1e-14 * scale {
        let mut improved = false;
        for k in 0..x.len() {
            for s in [step, -step] {
                let mut y = x.clone();
                y[k] += s;
                let mut fy = cost(&y);
                while fy < fx {
                    x = y.clone();
                    fx = fy;
                    improved = true;
                    y[k] += s;
                    fy = cost(&y);
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}

/// Brute-force `argmin (ε/2)‖u‖² - ⟨ζ, u⟩` over `‖u‖ ≤ ρ`: derivative-free search on the
/// penalized problem, bisecting on the ball multiplier when the free minimum lies outside.
fn brute_resolvent(zeta: &Field, free: &[usize], nrm: &dyn Fn(&Field) -> f64, eps: f64, rho: f64) -> Field {
    let build = |x: &[f64]| {
        let mut vals = vec![0.0; zeta.len()];
        for (k, &i) in free.iter().enumerate() {
            vals[i] = x[k];
        }
        zeta.with_values(vals)
    };
    let start: Vec<f64> = free.iter().map(|&i| zeta.values()[i]).collect();
    let x0 = compass(zeta, free, nrm, eps, &start);
    if nrm(&build(&x0)) <= rho {
        return build(&x0);
    }
    let (mut lo, mut hi) = (0.0, eps.max(1.0));
    let mut x = x0;
    loop {
        x = compass(zeta, free, nrm, eps + hi, &x);
        if nrm(&build(&x)) <= rho {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        x = compass(zeta, free, nrm, eps + mid, &x);
        if nrm(&build(&x)) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    build(&compass(zeta, free, nrm, eps + hi, &x))
}

#[test]
fn c03_duality_map_contract() {
    let line = Grid::line(1.0, 33, Boundary::Neumann).unwrap();
    let dir = Grid::line(1.0, 33, Boundary::Dirichlet).unwrap();
    let cases: [(NormTag, &Arc<Grid>, &dyn Fn(&Field) -> f64); 3] = [
        (NormTag::L2, &line, &|u| u.weighted_dot(u).sqrt()),
        (NormTag::Lp(4), &line, &l4_norm),
        (NormTag::Hminus1, &dir, &hminus1_norm),
    ];
    let mut worst_pair: f64 = 0.0;
    let mut worst_dual: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for (t, (tag, g, reference)) in cases.iter().enumerate() {
        let mut rng = seeded_rng(300 + t as u64);
        for i in 0..1000 {
            let u = if i % 2 == 0 {
                random_smooth_field(g, 1, 2.0, &mut rng)
            } else {
                random_nodal_field(g, 1, 1.0, &mut rng)
            };
            let u = masked(u);
            let n = norm(&u, *tag);
            let f = duality_map_F(&u, *tag).unwrap();
            worst_pair = worst_pair.max((f.weighted_dot(&u) - n * n).abs() / (n * n));
            worst_dual = worst_dual.max((dual_norm(&f, *tag) - n).abs() / n);
            worst_norm = worst_norm.max((reference(&u) - n).abs() / n);
        }
    }
    let contract = worst_pair <= 1e-9 && worst_dual <= 1e-9 && worst_norm <= 1e-9;

    let small = Grid::line(1.0, 7, Boundary::Neumann).unwrap();
    let small_dir = Grid::line(1.0, 8, Boundary::Dirichlet).unwrap();
    let all: Vec<usize> = (0..7).collect();
    let interior: Vec<usize> = (1..7).collect();
    let small_cases: [(NormTag, &Arc<Grid>, &[usize], &dyn Fn(&Field) -> f64); 3] = [
        (NormTag::L2, &small, &all, &|u| u.weighted_dot(u).sqrt()),
        (NormTag::Lp(4), &small, &all, &l4_norm),
        (NormTag::Hminus1, &small_dir, &interior, &hminus1_norm),
    ];
    let mut worst_res: f64 = 0.0;
    for (t, (tag, g, free, nrm)) in small_cases.iter().enumerate() {
        let mut rng = seeded_rng(900 + t as u64);
        for i in 0..6 {
            let z = masked(random_smooth_field(g, 1, 1.0, &mut rng));
            // alternate between the interior and the saturated branch
            let (eps, rho) = if i % 2 == 0 { (1.0, 10.0) } else { (0.2, 0.3) };
            let fast = resolvent_eF_NK(&z, *tag, eps, rho).unwrap();
            let slow = brute_resolvent(&z, free, *nrm, eps, rho);
            let e = fast.sub(&slow).max_abs() / fast.max_abs();
            worst_res = worst_res.max(e);
        }
    }
    verdict(
        3,
        "duality-map contract",
        contract && worst_res <= 1e-6,
        &format!(
            "pairing {worst_pair:.1e}, dual norm {worst_dual:.1e}, norm vs reference {worst_norm:.1e}, resolvent vs search {worst_res:.1e}"
        ),
    );
}

fn scalar_problem() -> PenalizedProblem {
    let g = Grid::line(1.0, 3, Boundary::Neumann).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::PotentialDrift {
            beta: Nonlinearity::Linear { slope: 0.0 },
            a1: 1.0,
            drift: [0.0; 2],
        },
        &g,
    )
    .unwrap();
    let y0 = Field::zeros(&g, 1);
    let y_tar = Field::constant(&g, 1, 0.5);
    let mut p = PenalizedProblem::new(spec, ControlMap::identity(NormTag::L2), y0, y_tar, 1.0, 0.1, 1e-3).unwrap();
    p.outer.width_tol = 1e-6;
    p
}

const SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

struct ScalarRun {
    prob: PenalizedProblem,
    levels: Vec<Optimum>,
    seconds: f64,
}

fn scalar_run() -> &'static ScalarRun {
    static RUN: OnceLock<ScalarRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let prob = scalar_problem();
        let start = Instant::now();
        let levels = eps_continuation(&prob, &SCHEDULE, [0.1, 3.0], false).unwrap();
        ScalarRun {
            prob,
            levels,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn c04_minimal_time_oracle() {
    let run = scalar_run();
    let t_or = analytic_min_time_scalar(1.0, 0.0, 0.5, 1.0).unwrap().time().unwrap();
    let last = &run.levels.last().unwrap().report;
    let err = (last.t_opt - t_or).abs();
    verdict(
        4,
        "minimal-time oracle equivalence",
        err <= 1e-2 && (t_or - std::f64::consts::LN_2).abs() < 1e-15 && run.seconds < 60.0,
        &format!("T_eps = {:.6} vs ln 2 = {t_or:.6}, error {err:.1e}, {:.1}s", last.t_opt, run.seconds),
    );
}

#[test]
fn c05_terminal_miss_scaling() {
    let run = scalar_run();
    let rho = run.prob.rho;
    let t_or = analytic_min_time_scalar(1.0, 0.0, 0.5, rho).unwrap().time().unwrap();
    // J_eps at the optimum is at most J_eps of the oracle control, T_or (1 + eps rho² |Ω| / 2)
    let measure = run.prob.spec.grid().measure();
    let c = rho * rho * measure * t_or;
    let mut ok = true;
    let mut parts = Vec::new();
    for lvl in &run.levels {
        let r = &lvl.report;
        let bound = (2.0 * r.eps * t_or + r.eps * r.eps * c).sqrt();
        ok &= r.terminal_miss <= bound;
        parts.push(format!("eps {:.0e}: {:.2e} <= {:.2e}", r.eps, r.terminal_miss, bound));
    }
    verdict(5, "terminal-miss scaling", ok, &parts.join(", "));
}

fn pair_problem() -> PenalizedProblem {
    let g = Grid::new(1, [1.0, 1.0], [3, 1], vec![Boundary::Neumann, Boundary::Neumann]).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::ReactionDiffusion2 {
            d1: 1.0,
            d2: 1.0,
            f: Reaction::Linear { a: 1.0, b: 0.5 },
            g: Reaction::Linear { a: -0.5, b: 1.0 },
        },
        &g,
    )
    .unwrap();
    let y0 = Field::zeros(&g, 2);
    let y_tar = Field::from_components(&g, &[vec![0.5; 3], vec![0.0; 3]]).unwrap();
    let map = ControlMap::first_component(NormTag::L2);
    let mut p = PenalizedProblem::new(spec, map, y0, y_tar, 1.0, 0.1, 1e-3).unwrap();
    p.outer.width_tol = 1e-6;
    p
}

#[test]
fn c06_maximum_principle_residuals() {
    let scalar = &scalar_run().levels.last().unwrap().report;
    let prob = pair_problem();
    let pair_levels = eps_continuation(&prob, &SCHEDULE, [0.1, 3.0], false).unwrap();
    let pair = &pair_levels.last().unwrap().report;
    // the brute-force oracle tells us what the pair instance should reach
    let red = OdeReduction::from_operator(
        prob.spec.kind(),
        1.0,
        vec![0.0, 0.0],
        OdeTarget::FirstComponent { value: 0.5 },
        3.0,
    )
    .unwrap();
    let t_or = brute_force_min_time(&red, 1e-2, 3).unwrap().time.time().unwrap();
    let ok = [scalar, pair]
        .iter()
        .all(|r| r.maximum_principle_residual <= 0.05 && r.saturation_fraction >= 0.95);
    let close = (pair.t_opt - t_or).abs() <= 0.05 * t_or;
    verdict(
        6,
        "maximum-principle residuals",
        ok && close,
        &format!(
            "scalar residual {:.1e} saturation {:.2}; pair residual {:.1e} saturation {:.2}, T {:.4} vs oracle {:.4}",
            scalar.maximum_principle_residual,
            scalar.saturation_fraction,
            pair.maximum_principle_residual,
            pair.saturation_fraction,
            pair.t_opt,
            t_or
        ),
    );
}

#[test]
fn c07_sliding_controllability() {
    let start = Instant::now();
    let g = Grid::line(1.0, 33, Boundary::Dirichlet).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::PotentialDrift {
            beta: Nonlinearity::Linear { slope: 0.0 },
            a1: 0.0,
            drift: [0.0; 2],
        },
        &g,
    )
    .unwrap();
    let map = ControlMap::identity(NormTag::L2);
    let y0 = masked(Field::from_fn(&g, 1, |_, x| (std::f64::consts::PI * x[0]).sin()));
    let y_tar = Field::zeros(&g, 1);
    let dt = 1e-3;
    let mut hits = Vec::new();
    for rho in [5.0, 10.0, 20.0, 40.0] {
        let opts = SlidingOptions::new(rho, 0.3, dt, 1e-3);
        let run = run_sliding(&spec, &map, &y0, &y_tar, &opts).unwrap();
        hits.push(run.hit_time.unwrap_or(f64::INFINITY));
    }
    let bound = 0.0707 * (1.0 + 5.0 * dt / 0.0707);
    let monotone = hits.windows(2).all(|w| w[1] <= w[0]);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        "sliding controllability",
        hits[1] <= bound && monotone && secs < 10.0,
        &format!("hit times {hits:.4?} for rho 5/10/20/40, bound at rho 10 {bound:.4}, {secs:.2}s"),
    );
}

#[test]
fn c08_manifold_invariance() {
    let g = Grid::new(1, [1.0, 1.0], [41, 1], vec![Boundary::Neumann, Boundary::Neumann]).unwrap();
    let (fa, fb) = (1.0, 1.0);
    let d1 = 1.0;
    let spec = OperatorSpec::new(
        OperatorKind::ReactionDiffusion2 {
            d1,
            d2: 0.5,
            f: Reaction::Tanh { a: fa, b: fb },
            g: Reaction::Tanh { a: -1.0, b: 0.5 },
        },
        &g,
    )
    .unwrap();
    let map = ControlMap::first_component(NormTag::Lp(4));
    let pi = std::f64::consts::PI;
    let amp = 0.5;
    let y_tar = Field::from_fn(&g, 2, |c, x| if c == 0 { amp * (pi * x[0]).cos() } else { 0.0 });
    let y0 = Field::from_fn(&g, 2, |c, x| if c == 0 { 0.0 } else { 0.3 * (2.0 * pi * x[0]).cos() });
    // ‖ũ‖ ≤ D₁‖Δy₁^tar‖_∞ + sup|f| on a unit interval; the cosine is an exact
    // eigenvector of the Neumann stencil with eigenvalue below π²
    let rho_needed = d1 * amp * pi * pi + fa.abs() + fb.abs();
    let rho = 1.5 * rho_needed;
    let (dt, hit_tol) = (5e-4, 1e-3);
    let mut opts = SlidingOptions::new(rho, 1.0, dt, hit_tol);
    opts.continuation = false;
    let run = run_sliding(&spec, &map, &y0, &y_tar, &opts).unwrap();
    let k = run.hit_step.expect("manifold reached");
    let seg = sliding_continuation(&spec, &map, run.trajectory.state(k), &y_tar, rho, 1.0, dt).unwrap();
    let max_dev = seg.deviations.iter().fold(0.0f64, |m, d| m.max(*d));
    let max_u = seg.control_norms.iter().fold(0.0f64, |m, u| m.max(*u));
    let tol = 5.0 * (dt + hit_tol);
    verdict(
        8,
        "manifold invariance",
        max_dev <= tol && max_u <= rho,
        &format!(
            "hit at {:.4}, max deviation {max_dev:.2e} <= {tol:.1e}, max equivalent control {max_u:.3} <= rho {rho:.3}",
            run.hit_time.unwrap()
        ),
    );
}

#[test]
fn c09_hypothesis_audit() {
    let g = Grid::line(1.0, 32, Boundary::Dirichlet).unwrap();
    let spec = OperatorSpec::new(
        OperatorKind::PorousMedia {
            beta: Nonlinearity::Logistic { slope: 0.5, gain: 1.0 },
        },
        &g,
    )
    .unwrap();
    let map = ControlMap::identity(NormTag::Hminus1);
    let report = audit_with(&spec, &map, &AuditOptions::new(500, 42)).unwrap();
    let a1 = report.monotonicity.coercivity;
    verdict(
        9,
        "hypothesis audit recovery",
        a1 >= 0.45 && (report.c_star - 1.0).abs() < 1e-9,
        &format!("alpha1 = {a1:.4}, C* = {:.12}", report.c_star),
    );
}

const SMALL_OPTIMIZE: &str = r#"
command = "optimize"
seed = 5

[grid]
extent = [1.0]
nodes = [3]
boundary = ["neumann"]

[operator]
kind = "potential_drift"
a1 = 1.0

[control]
mode = "identity"
rho = 1.0

[initial]
components = [{ profile = "random", amplitude = 0.05 }]

[target]
components = [{ profile = "constant", value = 0.5 }]

[numerics]
dt = 1e-2
eps_schedule = [1e-1, 1e-2]
t_bracket = [0.1, 3.0]
"#;

fn run_cli(config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mintime"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn c10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_OPTIMIZE).unwrap();
    let a = run_cli(&cfg, &dir.path().join("a"));
    let b = run_cli(&cfg, &dir.path().join("b"));
    let ra = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let rb = std::fs::read(dir.path().join("b/report.json")).unwrap();
    verdict(
        10,
        "determinism",
        a.status.success() && b.status.success() && ra == rb && !ra.is_empty(),
        &format!("two optimize runs, report.json {} bytes, identical: {}", ra.len(), ra == rb),
    );
}
