//! Run configuration file.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use mintime::hilbert::{random_smooth_field, seeded_rng, Boundary, Field, Grid, NormTag};
use mintime::operators::{ControlMap, ControlMode, OperatorKind, OperatorSpec, Projection};
use mintime::oracle::OdeTarget;
use mintime::sliding::BoundConstants;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Slide,
    Optimize,
    Audit,
    Oracle,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Simulate => "simulate",
            Command::Slide => "slide",
            Command::Optimize => "optimize",
            Command::Audit => "audit",
            Command::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

/// Config problem: the offending field and what is wrong with it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

type Check<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<ProfileBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ProfileBlock>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "one")]
    pub dim: usize,
    pub extent: Vec<f64>,
    pub nodes: Vec<usize>,
    /// One entry per state component; the last one repeats.
    pub boundary: Vec<Boundary>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    Identity,
    FirstComponentOnly,
    NonlocalKernel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub mode: MapMode,
    #[serde(default = "l2")]
    pub norm: NormTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Projection>,
    /// Gaussian kernel for `nonlocal_kernel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelBlock>,
    /// Constant open-loop control for `simulate` (zero when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ProfileBlock>,
}

fn l2() -> NormTag {
    NormTag::L2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub width: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

/// Per-component profiles; missing trailing components are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    pub components: Vec<Profile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude · Π sin(mode π x_i / L_i)`
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    /// `amplitude · Π cos(mode π x_i / L_i)`
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Nodal values in grid order.
    Nodes {
        values: Vec<f64>,
    },
    /// Random smooth field drawn from the run seed.
    Random {
        amplitude: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Horizon of `simulate` and `slide`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "max_newton")]
    pub max_newton: usize,
    #[serde(default = "max_halvings")]
    pub max_halvings: u32,
    #[serde(default = "hit_tol")]
    pub hit_tol: f64,
    #[serde(default = "yes")]
    pub continuation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConstants>,
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_bracket: Option<[f64; 2]>,
    #[serde(default = "width_tol")]
    pub width_tol: f64,
    #[serde(default = "fd_step")]
    pub fd_step: f64,
    #[serde(default = "inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "max_inner")]
    pub max_inner: usize,
    #[serde(default = "probe_iterations")]
    pub probe_iterations: usize,
    #[serde(default)]
    pub chain_reference: bool,
    #[serde(default = "samples")]
    pub samples: usize,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn newton_tol() -> f64 {
    1e-10
}
fn max_newton() -> usize {
    30
}
fn max_halvings() -> u32 {
    6
}
fn hit_tol() -> f64 {
    1e-3
}
fn yes() -> bool {
    true
}
fn width_tol() -> f64 {
    1e-4
}
fn fd_step() -> f64 {
    1e-6
}
fn inner_tol() -> f64 {
    1e-8
}
fn max_inner() -> usize {
    500
}
fn probe_iterations() -> usize {
    50
}
fn samples() -> usize {
    1000
}

impl Default for Numerics {
    fn default() -> Self {
        toml::from_str("").expect("all numerics fields have defaults")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Closed form for `y' + a y = u`.
    Analytic,
    /// Bang-bang enumeration on the spatially constant reduction of the operator.
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub method: OracleMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<OdeTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "switch_budget")]
    pub switch_budget: usize,
}

fn switch_budget() -> usize {
    3
}

/// Parses a config file; TOML errors carry line and column.
pub fn load(path: &Path) -> Check<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| ConfigError::new(e.field, format!("{} ({})", e.message, path.display())))
}

pub fn parse(text: &str) -> Check<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let field = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].lines().count().max(1);
                format!("line {line}")
            }
            None => "config".to_string(),
        };
        ConfigError::new(field, e.message().trim().to_string())
    })
}

fn need<'a, T>(v: &'a Option<T>, field: &str) -> Check<&'a T> {
    v.as_ref().ok_or_else(|| ConfigError::new(field, "missing"))
}

fn positive(v: f64, field: &str) -> Check<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Settles the command (CLI argument wins only if the file agrees) and the seed.
    pub fn resolve(mut self, cli_command: Option<Command>, cli_seed: Option<u64>) -> Check<Self> {
        self.command = match (cli_command, self.command) {
            (Some(a), Some(b)) if a != b => {
                return Err(ConfigError::new("command", format!("file says `{b}`, command line says `{a}`")))
            }
            (Some(a), _) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => return Err(ConfigError::new("command", "missing")),
        };
        if let Some(s) = cli_seed {
            self.seed = Some(s);
        }
        self.seed.get_or_insert(0);
        Ok(self)
    }

    pub fn command(&self) -> Command {
        self.command.expect("resolved config")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checks that the blocks needed by the command are present and in range.
    pub fn validate(&self) -> Check<()> {
        let cmd = self.command.ok_or_else(|| ConfigError::new("command", "missing"))?;
        let n = &self.numerics;
        positive(n.newton_tol, "numerics.newton_tol")?;
        positive(n.hit_tol, "numerics.hit_tol")?;
        positive(n.amplitude, "numerics.amplitude")?;
        if cmd == Command::Oracle {
            let o = need(&self.oracle, "oracle")?;
            self.rho()?;
            match o.method {
                OracleMethod::Analytic => {
                    need(&o.a, "oracle.a")?;
                    need(&o.y0, "oracle.y0")?;
                    need(&o.c, "oracle.c")?;
                }
                OracleMethod::BruteForce => {
                    need(&self.operator, "operator")?;
                    need(&o.y0, "oracle.y0")?;
                    need(&o.goal, "oracle.goal")?;
                    positive(*need(&o.horizon, "oracle.horizon")?, "oracle.horizon")?;
                    positive(*need(&n.dt, "numerics.dt")?, "numerics.dt")?;
                    if o.switch_budget > 3 {
                        return Err(ConfigError::new("oracle.switch_budget", "at most 3"));
                    }
                }
            }
            return Ok(());
        }
        let g = need(&self.grid, "grid")?;
        if g.extent.len() != g.dim || g.nodes.len() != g.dim {
            return Err(ConfigError::new("grid", format!("extent and nodes need {} entries", g.dim)));
        }
        need(&self.operator, "operator")?;
        need(&self.control, "control")?;
        match cmd {
            Command::Audit => {
                if n.samples < 100 {
                    return Err(ConfigError::new("numerics.samples", "at least 100"));
                }
            }
            Command::Simulate => {
                self.rho()?;
                positive(*need(&n.dt, "numerics.dt")?, "numerics.dt")?;
                positive(*need(&n.horizon, "numerics.horizon")?, "numerics.horizon")?;
                need(&self.initial, "initial")?;
            }
            Command::Slide => {
                self.rho()?;
                positive(*need(&n.dt, "numerics.dt")?, "numerics.dt")?;
                positive(*need(&n.horizon, "numerics.horizon")?, "numerics.horizon")?;
                need(&self.initial, "initial")?;
                need(&self.target, "target")?;
            }
            Command::Optimize => {
                self.rho()?;
                positive(*need(&n.dt, "numerics.dt")?, "numerics.dt")?;
                need(&self.initial, "initial")?;
                need(&self.target, "target")?;
                let [lo, hi] = *need(&n.t_bracket, "numerics.t_bracket")?;
                if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                    return Err(ConfigError::new("numerics.t_bracket", "need 0 < lo < hi"));
                }
                if n.eps_schedule.is_empty() {
                    return Err(ConfigError::new("numerics.eps_schedule", "missing"));
                }
                for e in &n.eps_schedule {
                    positive(*e, "numerics.eps_schedule")?;
                }
                if n.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(ConfigError::new("numerics.eps_schedule", "must be strictly decreasing"));
                }
                positive(n.width_tol, "numerics.width_tol")?;
                positive(n.fd_step, "numerics.fd_step")?;
                positive(n.inner_tol, "numerics.inner_tol")?;
            }
            Command::Oracle => unreachable!(),
        }
        Ok(())
    }

    pub fn rho(&self) -> Check<f64> {
        let c = need(&self.control, "control")?;
        positive(*need(&c.rho, "control.rho")?, "control.rho")
    }

    pub fn build_grid(&self) -> Check<Arc<Grid>> {
        let g = need(&self.grid, "grid")?;
        let mut extent = [1.0; 2];
        let mut nodes = [1; 2];
        for i in 0..g.dim.min(2) {
            extent[i] = *g.extent.get(i).ok_or_else(|| ConfigError::new("grid.extent", "too short"))?;
            nodes[i] = *g.nodes.get(i).ok_or_else(|| ConfigError::new("grid.nodes", "too short"))?;
        }
        Grid::new(g.dim, extent, nodes, g.boundary.clone()).map_err(|e| core_field("grid", e))
    }

    pub fn build_spec(&self, grid: &Arc<Grid>) -> Check<OperatorSpec> {
        let kind = need(&self.operator, "operator")?;
        OperatorSpec::new(kind.clone(), grid).map_err(|e| core_field("operator", e))
    }

    pub fn build_map(&self, grid: &Arc<Grid>) -> Check<ControlMap> {
        let c = need(&self.control, "control")?;
        let (mode, default_proj) = match c.mode {
            MapMode::Identity => (ControlMode::Identity, Projection::Full),
            MapMode::FirstComponentOnly => (ControlMode::FirstComponentOnly, Projection::FirstComponent),
            MapMode::NonlocalKernel => {
                let k = need(&c.kernel, "control.kernel")?;
                let width = positive(k.width, "control.kernel.width")?;
                let n = grid.total_nodes();
                let m = mintime_kernel(grid, n, width, k.amplitude);
                (ControlMode::NonlocalKernel(m), Projection::Full)
            }
        };
        ControlMap::new(mode, c.norm, c.projection.unwrap_or(default_proj)).map_err(|e| core_field("control", e))
    }

    /// Field from a profile block, sized to the operator's components.
    pub fn build_field(&self, block: &ProfileBlock, name: &str, grid: &Arc<Grid>, components: usize) -> Check<Field> {
        if block.components.len() > components {
            return Err(ConfigError::new(
                format!("{name}.components"),
                format!("{} profiles for {components} state components", block.components.len()),
            ));
        }
        let n = grid.total_nodes();
        let ext = grid.extent();
        let dim = grid.dim();
        let mut parts = vec![vec![0.0; n]; components];
        let mut rng = seeded_rng(self.seed().wrapping_add(name_salt(name)));
        for (c, p) in block.components.iter().enumerate() {
            let coords = |i: usize| grid.coordinates(i);
            let part = &mut parts[c];
            match p {
                Profile::Constant { value } => part.fill(*value),
                Profile::Sine { amplitude, mode } | Profile::Cosine { amplitude, mode } => {
                    let sine = matches!(p, Profile::Sine { .. });
                    for (i, v) in part.iter_mut().enumerate() {
                        let x = coords(i);
                        let mut s = *amplitude;
                        for (a, xa) in x.iter().enumerate().take(dim) {
                            let arg = *mode as f64 * std::f64::consts::PI * xa / ext[a];
                            s *= if sine { arg.sin() } else { arg.cos() };
                        }
                        *v = s;
                    }
                }
                Profile::Gaussian {
                    amplitude,
                    center,
                    width,
                } => {
                    let field = format!("{name}.components[{c}]");
                    if center.len() != dim {
                        return Err(ConfigError::new(field, format!("center needs {dim} entries")));
                    }
                    positive(*width, &field)?;
                    for (i, v) in part.iter_mut().enumerate() {
                        let x = coords(i);
                        let r2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                        *v = amplitude * (-r2 / (2.0 * width * width)).exp();
                    }
                }
                Profile::Nodes { values } => {
                    if values.len() != n {
                        return Err(ConfigError::new(
                            format!("{name}.components[{c}].values"),
                            format!("expected {n} nodal values, got {}", values.len()),
                        ));
                    }
                    part.copy_from_slice(values);
                }
                Profile::Random { amplitude } => {
                    let f = random_smooth_field(grid, 1, *amplitude, &mut rng);
                    part.copy_from_slice(f.values());
                }
            }
            if part.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::new(format!("{name}.components[{c}]"), "non-finite value"));
            }
        }
        Field::from_components(grid, &parts).map_err(|e| core_field(name, e))
    }
}

fn name_salt(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn mintime_kernel(grid: &Grid, n: usize, width: f64, amplitude: f64) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let (x, z) = (grid.coordinates(i), grid.coordinates(j));
        let r2 = (x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2);
        amplitude * (-r2 / (2.0 * width * width)).exp()
    })
}

/// Core validation errors keep their parameter name under the block prefix.
fn core_field(block: &str, e: mintime::Error) -> ConfigError {
    match e {
        mintime::Error::InvalidParameter { name, reason } => ConfigError::new(format!("{block}.{name}"), reason),
        other => ConfigError::new(block, other.to_string()),
    }
}
