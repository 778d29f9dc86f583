use std::fmt::Write as _;
use std::path::Path;

use mintime::forward::{ForwardOptions, Integrator};
use mintime::hilbert::Field;
use mintime::operators::{audit_with, AuditOptions};
use mintime::oracle::{analytic_min_time_scalar, brute_force_min_time, BangBang, MinTime, OdeReduction};
use mintime::sliding::{run_sliding, SlidingOptions};
use mintime::time::{Control, TimeGrid};
use mintime::timeopt::{eps_continuation, InnerOptions, OptimalityReport, OuterOptions, PenalizedProblem};
use serde::Serialize;

use crate::config::{Command, ConfigError, OracleMethod, RunConfig};
use crate::output::{control_csv, write_json, write_text};
use crate::RunError;

pub(crate) fn dispatch(cfg: &RunConfig, out: &Path) -> Result<(), RunError> {
    let command = cfg.command();
    let numerical = |error| RunError::Numerical { command, error };
    match command {
        Command::Simulate => simulate(cfg, out, numerical),
        Command::Slide => slide(cfg, out, numerical),
        Command::Optimize => optimize(cfg, out, numerical),
        Command::Audit => audit(cfg, out, numerical),
        Command::Oracle => oracle(cfg, out, numerical),
    }
}

fn forward_options(cfg: &RunConfig) -> ForwardOptions {
    ForwardOptions {
        newton_tol: cfg.numerics.newton_tol,
        max_newton: cfg.numerics.max_newton,
        max_halvings: cfg.numerics.max_halvings,
    }
}

fn missing(field: &str) -> RunError {
    ConfigError::new(field, "missing").into()
}

#[derive(Serialize)]
struct SimulateReport {
    horizon: f64,
    dt: f64,
    steps: usize,
    initial_h_norm: f64,
    terminal_h_norm: f64,
    max_v_norm: f64,
    ah_energy: f64,
    newton_iterations: usize,
    max_residual: f64,
}

fn simulate(cfg: &RunConfig, out: &Path, num: impl Fn(mintime::Error) -> RunError) -> Result<(), RunError> {
    let grid = cfg.build_grid()?;
    let spec = cfg.build_spec(&grid)?;
    let map = cfg.build_map(&grid)?;
    let nc = spec.components();
    let y0 = cfg.build_field(cfg.initial.as_ref().ok_or_else(|| missing("initial"))?, "initial", &grid, nc)?;
    let rho = cfg.rho()?;
    let dt = cfg.numerics.dt.ok_or_else(|| missing("numerics.dt"))?;
    let horizon = cfg.numerics.horizon.ok_or_else(|| missing("numerics.horizon"))?;
    let time = TimeGrid::new(horizon, dt).map_err(&num)?;
    let ctl = cfg.control.as_ref().ok_or_else(|| missing("control"))?;
    let u = match &ctl.value {
        Some(b) => cfg.build_field(b, "control.value", &grid, nc)?,
        None => Field::zeros(&grid, nc),
    };
    let control = Control::constant(time, &u, rho, map.norm()).map_err(&num)?;
    let integ = Integrator::new(&spec, &map, forward_options(cfg)).map_err(&num)?;
    let traj = integ.solve(&y0, &control).map_err(&num)?;
    let diags = traj.diagnostics();
    let report = SimulateReport {
        horizon: time.horizon(),
        dt,
        steps: time.steps(),
        initial_h_norm: diags[0].h_norm,
        terminal_h_norm: diags[diags.len() - 1].h_norm,
        max_v_norm: traj.max_v_norm(),
        ah_energy: traj.ah_energy(),
        newton_iterations: diags.iter().map(|d| d.newton_iterations).sum(),
        max_residual: diags.iter().fold(0.0, |m, d| m.max(d.residual)),
    };
    write_json(out, "report.json", &report)?;
    write_text(out, "trajectory.csv", &traj.to_csv(true))?;
    write_text(out, "control.csv", &control_csv(&time, control.steps(), &control.norms()))?;
    let mut res = String::from("t,newton_iterations,residual,substeps\n");
    for (k, d) in diags.iter().enumerate() {
        let _ = writeln!(res, "{},{},{},{}", time.time(k), d.newton_iterations, d.residual, d.substeps);
    }
    write_text(out, "residuals.csv", &res)?;
    Ok(())
}

fn slide(cfg: &RunConfig, out: &Path, num: impl Fn(mintime::Error) -> RunError) -> Result<(), RunError> {
    let grid = cfg.build_grid()?;
    let spec = cfg.build_spec(&grid)?;
    let map = cfg.build_map(&grid)?;
    let nc = spec.components();
    let y0 = cfg.build_field(cfg.initial.as_ref().ok_or_else(|| missing("initial"))?, "initial", &grid, nc)?;
    let y_tar = cfg.build_field(cfg.target.as_ref().ok_or_else(|| missing("target"))?, "target", &grid, nc)?;
    let n = &cfg.numerics;
    let mut opts = SlidingOptions::new(
        cfg.rho()?,
        n.horizon.ok_or_else(|| missing("numerics.horizon"))?,
        n.dt.ok_or_else(|| missing("numerics.dt"))?,
        n.hit_tol,
    );
    opts.continuation = n.continuation;
    opts.bound = n.bound;
    opts.forward = forward_options(cfg);
    let run = run_sliding(&spec, &map, &y0, &y_tar, &opts).map_err(&num)?;
    let time = *run.trajectory.time();
    write_json(out, "report.json", &run.summary())?;
    write_text(out, "trajectory.csv", &run.trajectory.to_csv(true))?;
    write_text(out, "control.csv", &control_csv(&time, &run.controls, &run.control_norms))?;
    write_text(out, "residuals.csv", &run.to_csv())?;
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    #[serde(flatten)]
    last: &'a OptimalityReport,
    target_residual: f64,
    levels: Vec<&'a OptimalityReport>,
}

fn optimize(cfg: &RunConfig, out: &Path, num: impl Fn(mintime::Error) -> RunError) -> Result<(), RunError> {
    let grid = cfg.build_grid()?;
    let spec = cfg.build_spec(&grid)?;
    let map = cfg.build_map(&grid)?;
    let nc = spec.components();
    let y0 = cfg.build_field(cfg.initial.as_ref().ok_or_else(|| missing("initial"))?, "initial", &grid, nc)?;
    let y_tar = cfg.build_field(cfg.target.as_ref().ok_or_else(|| missing("target"))?, "target", &grid, nc)?;
    let n = &cfg.numerics;
    let schedule = &n.eps_schedule;
    let bracket = n.t_bracket.ok_or_else(|| missing("numerics.t_bracket"))?;
    let dt = n.dt.ok_or_else(|| missing("numerics.dt"))?;
    let mut prob = PenalizedProblem::new(spec, map, y0, y_tar, cfg.rho()?, schedule[0], dt).map_err(&num)?;
    prob.inner = InnerOptions {
        tol: n.inner_tol,
        max_iterations: n.max_inner,
        probe_iterations: n.probe_iterations,
        ..InnerOptions::default()
    };
    prob.outer = OuterOptions {
        width_tol: n.width_tol,
        fd_step: n.fd_step,
    };
    prob.forward = forward_options(cfg);
    let levels = eps_continuation(&prob, schedule, bracket, n.chain_reference).map_err(&num)?;
    let best = levels.last().expect("nonempty schedule");
    let report = OptimizeReport {
        last: &best.report,
        target_residual: prob.target_residual().map_err(&num)?,
        levels: levels.iter().map(|l| &l.report).collect(),
    };
    let final_prob = prob.with_eps(best.report.eps).map_err(&num)?;
    let control = best.control();
    write_json(out, "report.json", &report)?;
    write_text(out, "trajectory.csv", &best.trajectory().to_csv(true))?;
    write_text(out, "control.csv", &control_csv(control.time(), control.steps(), &control.norms()))?;
    write_text(out, "residuals.csv", &best.profile_csv(&final_prob).map_err(&num)?)?;
    Ok(())
}

fn audit(cfg: &RunConfig, out: &Path, num: impl Fn(mintime::Error) -> RunError) -> Result<(), RunError> {
    let grid = cfg.build_grid()?;
    let spec = cfg.build_spec(&grid)?;
    let map = cfg.build_map(&grid)?;
    let mut opts = AuditOptions::new(cfg.numerics.samples, cfg.seed());
    opts.amplitude = cfg.numerics.amplitude;
    if let Some(t) = &cfg.target {
        opts.target = Some(cfg.build_field(t, "target", &grid, spec.components())?);
    }
    let report = audit_with(&spec, &map, &opts).map_err(&num)?;
    write_json(out, "report.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum OracleReport {
    Analytic { a: f64, y0: f64, c: f64, rho: f64, result: MinTime },
    BruteForce { reduction: OdeReduction, dt: f64, switch_budget: usize, result: BangBang },
}

fn oracle(cfg: &RunConfig, out: &Path, num: impl Fn(mintime::Error) -> RunError) -> Result<(), RunError> {
    let o = cfg.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    let rho = cfg.rho()?;
    let report = match o.method {
        OracleMethod::Analytic => {
            let a = o.a.ok_or_else(|| missing("oracle.a"))?;
            let c = o.c.ok_or_else(|| missing("oracle.c"))?;
            let y0 = match o.y0.as_deref() {
                Some([v]) => *v,
                _ => return Err(ConfigError::new("oracle.y0", "analytic oracle needs one value").into()),
            };
            let result = analytic_min_time_scalar(a, y0, c, rho).map_err(&num)?;
            OracleReport::Analytic { a, y0, c, rho, result }
        }
        OracleMethod::BruteForce => {
            let kind = cfg.operator.as_ref().ok_or_else(|| missing("operator"))?;
            let reduction = OdeReduction::from_operator(
                kind,
                rho,
                o.y0.clone().ok_or_else(|| missing("oracle.y0"))?,
                o.goal.clone().ok_or_else(|| missing("oracle.goal"))?,
                o.horizon.ok_or_else(|| missing("oracle.horizon"))?,
            )
            .map_err(&num)?;
            let dt = cfg.numerics.dt.ok_or_else(|| missing("numerics.dt"))?;
            let result = brute_force_min_time(&reduction, dt, o.switch_budget).map_err(&num)?;
            OracleReport::BruteForce {
                reduction,
                dt,
                switch_budget: o.switch_budget,
                result,
            }
        }
    };
    write_json(out, "report.json", &report)?;
    Ok(())
}
