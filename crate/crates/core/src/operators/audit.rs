//! Empirical estimation of the structural constants of an operator/control pair.
//!
//! Each inequality is sampled over random smooth fields and the best constants
//! consistent with the samples are reported. Degenerate samples (zero
//! denominators) are skipped and counted.

use serde::{Deserialize, Serialize};

use super::control_map::ControlMap;
use super::spec::OperatorSpec;
use crate::error::{invalid, Result};
use crate::hilbert::{random_smooth_field, seeded_rng, Field};
use crate::parallel::{self, Execution};

/// Sampling configuration.
#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub samples: usize,
    pub seed: u64,
    /// Scale of the random fields.
    pub amplitude: f64,
    /// Target used by the sliding-type inequalities (zero when absent).
    pub target: Option<Field>,
    pub execution: Execution,
}

impl AuditOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            amplitude: 1.0,
            target: None,
            execution: Execution::default(),
        }
    }
}

/// Fit of `s ≥ c_lo · a - c_shift · b` over samples `(s, a, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityFit {
    /// Coefficient of the positive term (`α₁` or `α₃`).
    pub coercivity: f64,
    /// Coefficient of the lower-order term (`α₂` or `α₄`).
    pub shift: f64,
    /// Fraction of samples with nonnegative slack.
    pub satisfied_fraction: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub skipped: usize,
    /// `⟨Ay - Aȳ, y - ȳ⟩ ≥ α₁‖y - ȳ‖²_V - α₂‖y - ȳ‖²_H`
    pub monotonicity: CoercivityFit,
    /// `(A_H y, Γ_H y)_H ≥ α₃‖Γ_H y‖²_H - α₄‖y‖²_V`
    pub regularity: CoercivityFit,
    /// `‖Pv‖_H ≤ C*‖B^*v‖_{U*}` (identity maps give exactly 1).
    pub c_star: f64,
    /// Same with the `V*` norm on the left.
    pub c_star_vdual: f64,
    /// `‖B^* w‖_{U*} ≥ γ_B ‖w‖_H` on the projected range.
    pub b_coercivity: f64,
    pub c_star_pass: bool,
    /// `⟨Ay - Aŷ, P(y - ŷ)⟩ ≥ -C₃‖P(y - ŷ)‖²_H`, `ŷ` = target on the projected
    /// components and the sample's own values elsewhere.
    pub c3: f64,
    /// `(A_H y - A_H y_tar, P(y - y_tar))_H ≥ -C₁‖P(y - y_tar)‖²_H`.
    pub c1: f64,
    /// `‖P A_H y_tar‖_H`
    pub target_residual: f64,
    /// `‖A 0‖` (should vanish).
    pub a_zero: f64,
}

#[derive(Default)]
struct Sample {
    a1: Option<(f64, f64, f64)>,
    a2: Option<(f64, f64, f64)>,
    d3: Option<(f64, f64, f64)>,
    d4: Option<(f64, f64)>,
    c1: Option<(f64, f64)>,
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Audits with default amplitude, zero target and parallel sampling.
pub fn audit_hypotheses(spec: &OperatorSpec, map: &ControlMap, samples: usize, seed: u64) -> Result<AuditReport> {
    audit_with(spec, map, &AuditOptions::new(samples, seed))
}

pub fn audit_with(spec: &OperatorSpec, map: &ControlMap, opts: &AuditOptions) -> Result<AuditReport> {
    if opts.samples < 100 {
        return Err(invalid("samples", format!("need at least 100, got {}", opts.samples)));
    }
    if !(opts.amplitude.is_finite() && opts.amplitude > 0.0) {
        return Err(invalid("amplitude", "must be positive"));
    }
    let grid = spec.grid().clone();
    let nc = spec.components();
    let target = match &opts.target {
        Some(t) => {
            spec.check_field(t)?;
            t.clone()
        }
        None => Field::zeros(&grid, nc),
    };
    let roles = spec.roles();
    let a_target = spec.apply_A(&target)?;
    let target_residual = roles.h_norm(&map.project(&a_target));
    let a_zero = spec.apply_A(&Field::zeros(&grid, nc))?.max_abs();

    let run = |i: usize| -> Result<Sample> {
        let mut rng = seeded_rng(sample_seed(opts.seed, i));
        let y = random_smooth_field(&grid, nc, opts.amplitude, &mut rng);
        let ybar = random_smooth_field(&grid, nc, opts.amplitude, &mut rng);
        let v = random_smooth_field(&grid, nc, opts.amplitude, &mut rng);
        let mut s = Sample::default();
        let ay = spec.apply_A(&y)?;
        let d = y.sub(&ybar);
        let a1 = roles.h_inner(&ay.sub(&spec.apply_A(&ybar)?), &d)?;
        let (va, hb) = (roles.v_norm(&d).powi(2), roles.h_norm(&d).powi(2));
        if va > 0.0 && hb > 0.0 {
            s.a1 = Some((a1, va, hb));
        }
        let gy = roles.gamma_h(&y);
        let a2 = roles.h_inner(&ay, &gy)?;
        let (ga, vb) = (roles.h_norm(&gy).powi(2), roles.v_norm(&y).powi(2));
        if ga > 0.0 {
            s.a2 = Some((a2, ga, vb));
        }
        let gv = roles.h_gram(&v);
        let bstar = map.control_dual_norm(&map.apply_Bstar(&gv)?);
        let pv = map.project(&v);
        let pv_h = roles.h_norm(&pv);
        let gpv = roles.h_gram(&pv);
        let pv_vdual = gpv.weighted_dot(&crate::hilbert::riesz_mixed(&gpv, &roles.v)).max(0.0).sqrt();
        if pv_h > 0.0 {
            s.d3 = Some((pv_h, bstar, pv_vdual));
        }
        // ŷ: target on the projected components, the sample elsewhere
        let mut yhat = y.clone();
        let kept = map.projection().kept(nc);
        for c in 0..kept {
            yhat.component_mut(c).copy_from_slice(target.component(c));
        }
        let pd = map.project(&y.sub(&yhat));
        let b4 = roles.h_norm(&pd).powi(2);
        if b4 > 0.0 {
            let s4 = roles.h_inner(&ay.sub(&spec.apply_A(&yhat)?), &pd)?;
            s.d4 = Some((s4, b4));
        }
        let pt = map.project(&y.sub(&target));
        let bt = roles.h_norm(&pt).powi(2);
        if bt > 0.0 {
            let st = roles.h_inner(&ay.sub(&a_target), &pt)?;
            s.c1 = Some((st, bt));
        }
        Ok(s)
    };
    let results = parallel::map_range(opts.execution, opts.samples, run);
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        samples.push(r?);
    }

    let mut skipped = 0;
    let a1: Vec<_> = samples.iter().filter_map(|s| s.a1).collect();
    let a2: Vec<_> = samples.iter().filter_map(|s| s.a2).collect();
    let d3: Vec<_> = samples.iter().filter_map(|s| s.d3).collect();
    let d4: Vec<_> = samples.iter().filter_map(|s| s.d4).collect();
    let c1: Vec<_> = samples.iter().filter_map(|s| s.c1).collect();
    skipped += opts.samples - a1.len();

    let monotonicity = fit(&a1);
    let regularity = fit(&a2);
    let mut c_star: f64 = 0.0;
    let mut c_star_vdual: f64 = 0.0;
    let mut b_coercivity = f64::INFINITY;
    for &(h, b, vd) in &d3 {
        if b == 0.0 {
            c_star = f64::INFINITY;
            c_star_vdual = f64::INFINITY;
            b_coercivity = 0.0;
            continue;
        }
        c_star = c_star.max(h / b);
        c_star_vdual = c_star_vdual.max(vd / b);
        b_coercivity = b_coercivity.min(b / h);
    }
    if d3.is_empty() {
        b_coercivity = 0.0;
    }
    let worst = |v: &[(f64, f64)]| v.iter().fold(0.0f64, |m, &(s, b)| m.max(-s / b));
    Ok(AuditReport {
        samples: opts.samples,
        skipped,
        monotonicity,
        regularity,
        c_star,
        c_star_vdual,
        b_coercivity,
        c_star_pass: c_star.is_finite() && !d3.is_empty(),
        c3: worst(&d4),
        c1: worst(&c1),
        target_residual,
        a_zero,
    })
}

/// `shift = 2·max(0, max(-s/b))`, then `coercivity` = 1% quantile of `(s + shift·b)/a`.
fn fit(samples: &[(f64, f64, f64)]) -> CoercivityFit {
    if samples.is_empty() {
        return CoercivityFit {
            coercivity: 0.0,
            shift: 0.0,
            satisfied_fraction: 0.0,
            pass: false,
        };
    }
    let worst = samples
        .iter()
        .map(|&(s, _, b)| if b > 0.0 { -s / b } else { f64::NEG_INFINITY })
        .fold(0.0f64, f64::max);
    let shift = 2.0 * worst;
    let mut ratios: Vec<f64> = samples.iter().map(|&(s, a, b)| (s + shift * b) / a).collect();
    ratios.sort_by(f64::total_cmp);
    let idx = ((ratios.len() as f64) * 0.01).floor() as usize;
    let coercivity = ratios[idx.min(ratios.len() - 1)];
    let ok = samples
        .iter()
        .filter(|&&(s, a, b)| {
            let slack = s + shift * b - coercivity * a;
            slack >= -1e-12 * (s.abs() + shift * b + coercivity.abs() * a)
        })
        .count();
    let satisfied_fraction = ok as f64 / samples.len() as f64;
    CoercivityFit {
        coercivity,
        shift,
        satisfied_fraction,
        pass: coercivity > 0.0 && satisfied_fraction >= 0.99,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Boundary, Grid, NormTag};
    use crate::operators::{Nonlinearity, OperatorKind, Reaction};

    #[test]
    fn porous_monotonicity_recovers_a0() {
        let g = Grid::line(1.0, 24, Boundary::Dirichlet).unwrap();
        let spec = OperatorSpec::new(
            OperatorKind::PorousMedia {
                beta: Nonlinearity::SaturatingRational { slope: 0.5, gain: 1.0 },
            },
            &g,
        )
        .unwrap();
        let map = ControlMap::identity(NormTag::Hminus1);
        let r = audit_hypotheses(&spec, &map, 200, 5).unwrap();
        assert!(r.monotonicity.pass);
        assert!(r.monotonicity.coercivity >= 0.45, "{r:?}");
        assert!((r.c_star - 1.0).abs() < 1e-9);
        assert_eq!(r.a_zero, 0.0);
    }

    #[test]
    fn case_two_reaction_has_zero_c3() {
        let g = Grid::line(1.0, 16, Boundary::Neumann).unwrap();
        let spec = OperatorSpec::new(
            OperatorKind::ReactionDiffusion2 {
                d1: 1.0,
                d2: 1.0,
                f: Reaction::ProductRational { gain: 1.0 },
                g: Reaction::Linear { a: 0.0, b: 0.5 },
            },
            &g,
        )
        .unwrap();
        let map = ControlMap::first_component(NormTag::L2);
        let r = audit_hypotheses(&spec, &map, 150, 9).unwrap();
        assert_eq!(r.c3, 0.0);
        assert!((r.c_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_execution_independent() {
        let g = Grid::line(1.0, 12, Boundary::Robin(1.0)).unwrap();
        let spec = OperatorSpec::new(
            OperatorKind::PotentialDrift {
                beta: Nonlinearity::Cubic { linear: 0.0, cubic: 1.0 },
                a1: 0.0,
                drift: [0.5, 0.0],
            },
            &g,
        )
        .unwrap();
        let map = ControlMap::identity(NormTag::L2);
        let mut o = AuditOptions::new(120, 1);
        o.execution = Execution::Sequential;
        let a = audit_with(&spec, &map, &o).unwrap();
        o.execution = Execution::Parallel;
        let b = audit_with(&spec, &map, &o).unwrap();
        assert_eq!(a, b);
        assert!(audit_hypotheses(&spec, &map, 10, 1).is_err());
    }
}
