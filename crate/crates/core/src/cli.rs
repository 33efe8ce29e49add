//! Command-line front end: JSON problem configuration, the commands
//! `basis`, `forward`, `adjoint`, `gradcheck`, `optimize` and `verify`, and
//! their artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adjoint_opt::{
    duality_gap, finite_difference_check, AdjointScheme, optimize, solve_linearized, ControlProblem, OptimOptions,
};
use crate::control_cost::{
    eval_cost, fmt_f64, project_admissible, AdmissibleSet, ControlOperator, ControlSignal, CostSpec,
};
use crate::error::{Error, Result};
use crate::forward::{mild_residual, ForwardProblem, Nonlinearity, PicardOptions, ProblemIndices, Trajectory};
use crate::fracops::{rl_integral, Direction, GradedTimeGrid, ScalarTrajectory};
use crate::specfun::{ml_eval, SeriesControl};
use crate::spectral::{build_basis, EigenBasis, OperatorSpec, PhysicalGrid, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    Basis,
    Forward,
    Adjoint,
    Gradcheck,
    Optimize,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "subdiff", version, about = "Time-fractional semilinear parabolic solver and optimal control")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandName,
    /// Problem configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; overrides the config field (0 = auto).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_modes: usize,
    /// Spatial quadrature resolution (intervals, or interior nodes for
    /// Wentzell bases).
    pub n_space: usize,
    pub n_steps: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

fn default_grading() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Zero,
    /// `amplitude · e_mode` in coefficient space.
    SingleMode,
    Constant,
    /// `4 a x (L - x) / L²`, vanishing at both ends.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    Coefficients(Vec<f64>),
    Preset {
        name: PresetName,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_usize")]
        mode: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::Preset {
            name: PresetName::Zero,
            amplitude: 1.0,
            mode: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckOptions {
    pub epsilons: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            epsilons: vec![1e-3, 1e-4, 1e-5],
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub operator: OperatorSpec,
    pub indices: ProblemIndices,
    #[serde(default = "Nonlinearity::zero")]
    pub nonlinearity: Nonlinearity,
    #[serde(default = "ControlOperator::interior")]
    pub control: ControlOperator,
    pub grids: GridConfig,
    #[serde(default)]
    pub initial: InitialDatum,
    /// Constant value of the starting control at every node.
    #[serde(default)]
    pub initial_control: f64,
    pub cost: CostSpec,
    #[serde(default)]
    pub admissible_set: Option<AdmissibleSet>,
    #[serde(default)]
    pub picard: PicardOptions,
    #[serde(default)]
    pub adjoint_scheme: AdjointScheme,
    #[serde(default)]
    pub optimizer: OptimOptions,
    #[serde(default)]
    pub gradcheck: GradcheckOptions,
    #[serde(default)]
    pub series: SeriesControl,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate_grids(&self) -> Result<()> {
        let g = &self.grids;
        if g.n_modes == 0 {
            return Err(Error::config("grids.n_modes", "must be at least 1"));
        }
        if g.n_space < 2 {
            return Err(Error::config("grids.n_space", "must be at least 2"));
        }
        if g.n_steps < 2 {
            return Err(Error::config("grids.n_steps", "must be at least 2"));
        }
        if !(g.grading >= 1.0 && g.grading.is_finite()) {
            return Err(Error::config("grids.grading", "must be >= 1"));
        }
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return Err(Error::config("grids.T", "must be positive and finite"));
        }
        Ok(())
    }
}

const TARGET_SEMINORM_WARN: f64 = 1e6;

/// Indices derived from a configuration, echoed in `resolved_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub theta: f64,
    pub xi: f64,
    pub sigma: f64,
    pub control_dim: usize,
    pub time_nodes: usize,
    pub eigenvalues: Vec<f64>,
    /// Weighted derivative seminorm of the interior target (zero unless sampled).
    pub target_y_seminorm: f64,
}

/// A validated configuration with everything built from it.
#[derive(Debug)]
pub struct Setup {
    pub config: ProblemConfig,
    pub problem: ControlProblem,
    pub z0: ControlSignal,
}

impl Setup {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        config.validate_grids()?;
        config.operator.validate()?;
        config.indices.validate()?;
        config.nonlinearity.validate()?;
        config.picard.validate()?;
        config.optimizer.validate()?;
        config.series.validate()?;
        if config.gradcheck.epsilons.iter().any(|e| !(*e > 0.0)) || config.gradcheck.epsilons.is_empty() {
            return Err(Error::config("gradcheck.epsilons", "must be a nonempty list of positive numbers"));
        }
        let g = &config.grids;
        let grid = PhysicalGrid::for_operator(&config.operator, g.n_space)?;
        let basis = Arc::new(build_basis(&config.operator, g.n_modes, grid)?);
        config.control.validate(&basis)?;
        let dim = config.control.dim(&basis);
        if let Some(set) = &config.admissible_set {
            set.validate(dim)?;
            if set.rho != config.indices.rho {
                return Err(Error::config("admissible_set.rho", "must equal indices.rho"));
            }
        }
        let u0 = initial_state(&config.initial, &basis)?;
        let tgrid = GradedTimeGrid::new(g.horizon, g.n_steps, g.grading)?;
        let forward = ForwardProblem::new(
            basis,
            config.indices,
            config.nonlinearity.clone(),
            config.control.clone(),
            tgrid.clone(),
            config.series,
        )?;
        let z0 = ControlSignal::from_fn(&tgrid, dim, |_, _| config.initial_control);
        let problem = ControlProblem::new(
            forward,
            u0,
            config.cost.clone(),
            config.admissible_set.clone(),
            config.picard,
        )?
        .with_adjoint_scheme(config.adjoint_scheme);
        let setup = Setup { config, problem, z0 };
        let ty = setup.target_y_seminorm();
        if !(ty <= TARGET_SEMINORM_WARN) {
            warn!("cost.z_q has weighted derivative seminorm {ty:e}; the target may be too rough for the state space");
        }
        Ok(setup)
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        self.problem.forward.basis()
    }

    pub fn derived(&self) -> Derived {
        let idx = &self.config.indices;
        Derived {
            theta: idx.theta(),
            xi: idx.xi(),
            sigma: idx.sigma(),
            control_dim: self.problem.forward.control_dim(),
            time_nodes: self.problem.forward.grid().len(),
            eigenvalues: self.basis().eigenvalues().to_vec(),
            target_y_seminorm: self.target_y_seminorm(),
        }
    }

    fn target_y_seminorm(&self) -> f64 {
        let basis = self.basis();
        self.config
            .cost
            .z_q
            .y_seminorm(self.problem.forward.grid(), basis.grid().quad_weights(), self.config.indices.theta())
    }

    pub fn resolved_config(&self) -> Value {
        json!({ "config": self.config, "derived": self.derived() })
    }
}

fn initial_state(init: &InitialDatum, basis: &EigenBasis) -> Result<SpectralField> {
    let n = basis.n_modes();
    match init {
        InitialDatum::Coefficients(c) => {
            if c.len() != n {
                return Err(Error::config("initial.coefficients", format!("expected {n} coefficients, got {}", c.len())));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("initial.coefficients", "must be finite"));
            }
            Ok(SpectralField::new(c.clone()))
        }
        InitialDatum::Preset { name, amplitude, mode } => {
            if !amplitude.is_finite() {
                return Err(Error::config("initial.preset.amplitude", "must be finite"));
            }
            match name {
                PresetName::Zero => Ok(SpectralField::zeros(n)),
                PresetName::SingleMode => {
                    if *mode == 0 || *mode > n {
                        return Err(Error::config("initial.preset.mode", format!("must lie in 1..={n}")));
                    }
                    Ok(SpectralField::unit(n, mode - 1).scaled(*amplitude))
                }
                PresetName::Constant => basis.analyze(&vec![*amplitude; basis.grid().n_values()]),
                PresetName::Bump => {
                    let l = basis.grid().length();
                    let mut v: Vec<f64> =
                        basis.grid().nodes().iter().map(|x| 4.0 * amplitude * x * (l - x) / (l * l)).collect();
                    v.resize(basis.grid().n_values(), 0.0);
                    basis.analyze(&v)
                }
            }
        }
    }
}

/// Uniform random values in `[-1, 1]` per node, from `seed`.
pub fn random_direction(grid: &GradedTimeGrid, dim: usize, seed: u64) -> ControlSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
    ControlSignal {
        grid: grid.clone(),
        values,
    }
}

/// `max_n |I^{1-γ}_{t,T} w_n (T)|`, zero when `γ = 1`.
pub fn terminal_condition(w: &Trajectory, gamma: f64) -> Result<f64> {
    if gamma >= 1.0 {
        return Ok(0.0);
    }
    let states = w.nominal_states();
    let mut worst: f64 = 0.0;
    for m in 0..states[0].len() {
        let series = states.iter().map(|s| s.coeffs[m]).collect();
        let iw = rl_integral(&ScalarTrajectory::new(w.grid.clone(), series)?, 1.0 - gamma, Direction::Right)?;
        worst = worst.max(iw.values.last().copied().unwrap_or(0.0).abs());
    }
    Ok(worst)
}

/// Artifacts of one command, keyed by file name.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    /// `false` when `verify` found a failing check.
    pub success: bool,
}

impl Artifacts {
    fn push(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn push_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.push(name, s);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

/// Runs `command` on a validated setup and collects its artifacts.
pub fn run_command(command: CommandName, setup: &Setup) -> Result<Artifacts> {
    let mut art = Artifacts {
        success: true,
        ..Default::default()
    };
    art.push_json("resolved_config.json", &setup.resolved_config())?;
    match command {
        CommandName::Basis => basis_command(setup, &mut art)?,
        CommandName::Forward => forward_command(setup, &mut art)?,
        CommandName::Adjoint => adjoint_command(setup, &mut art)?,
        CommandName::Gradcheck => gradcheck_command(setup, &mut art)?,
        CommandName::Optimize => optimize_command(setup, &mut art)?,
        CommandName::Verify => {
            let checks = verify_checks(setup)?;
            art.success = checks.iter().all(|c| c.pass);
            art.push_json("verify.json", &json!({ "all_pass": art.success, "checks": checks }))?;
        }
    }
    Ok(art)
}

fn basis_command(setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let b = setup.basis();
    let g = b.grid();
    let mut csv = String::from("x");
    for n in 0..b.n_modes() {
        csv.push_str(&format!(",mode_{}", n + 1));
    }
    csv.push('\n');
    let mut xs = g.nodes().to_vec();
    if g.boundary_weights().is_some() {
        xs.extend([0.0, g.length()]);
    }
    for (i, x) in xs.iter().enumerate() {
        csv.push_str(&fmt_f64(*x));
        for n in 0..b.n_modes() {
            csv.push(',');
            csv.push_str(&fmt_f64(b.mode_values(n)[i]));
        }
        csv.push('\n');
    }
    art.push("physical.csv", csv);
    let report = json!({
        "basis": b.export(),
        "gram_deviation": gram_deviation(b),
    });
    art.push_json("report.json", &report)
}

fn gram_deviation(b: &EigenBasis) -> f64 {
    let g = b.gram();
    let mut worst: f64 = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn forward_command(setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let cp = &setup.problem;
    let (traj, report) = cp.state(&setup.z0)?;
    let basis = setup.basis();
    art.push("trajectory.csv", traj.to_mode_csv());
    art.push("physical.csv", traj.to_physical_csv(basis));
    let cost = if traj.is_complete() {
        Some(eval_cost(basis, cp.forward.control(), &traj, &setup.z0, &cp.cost)?)
    } else {
        warn!("forward solve stopped early: {:?}", traj.status);
        None
    };
    let residual = mild_residual(&cp.forward, &traj, &setup.z0, &cp.u0)?.into_iter().fold(0.0, f64::max);
    art.push_json(
        "report.json",
        &json!({ "status": traj.status, "solve": report, "mild_residual": residual, "cost": cost }),
    )
}

fn adjoint_command(setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let cp = &setup.problem;
    let ev = cp.evaluate(&setup.z0)?;
    art.push("trajectory.csv", ev.adjoint.to_mode_csv());
    art.push("physical.csv", ev.adjoint.to_physical_csv(setup.basis()));
    art.push("gradient.csv", ev.gradient.to_csv());
    let h = random_direction(cp.forward.grid(), cp.forward.control_dim(), setup.config.seed);
    let eta = solve_linearized(&cp.forward, &ev.state, &h)?;
    let report = json!({
        "cost": ev.cost,
        "gradient_norm": ev.gradient.l2_norm(&cp.weights()),
        "terminal_condition": terminal_condition(&ev.adjoint, setup.config.indices.gamma)?,
        "duality_gap": duality_gap(&cp.forward, &ev.psi, &eta, &ev.adjoint, &h)?,
        "inserted_nodes": ev.state.inserted_nodes(),
    });
    art.push_json("report.json", &report)
}

fn gradcheck_command(setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let cp = &setup.problem;
    let h = random_direction(cp.forward.grid(), cp.forward.control_dim(), setup.config.seed);
    let fd = finite_difference_check(cp, &setup.z0, &h, &setup.config.gradcheck.epsilons)?;
    let pass = fd.best_relative_error <= setup.config.gradcheck.tolerance;
    if !pass {
        warn!("gradient check failed: best relative error {:e}", fd.best_relative_error);
    }
    art.push_json("report.json", &json!({ "check": fd, "tolerance": setup.config.gradcheck.tolerance, "pass": pass }))
}

fn optimize_command(setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let cp = &setup.problem;
    let (z, report) = optimize(cp, &setup.z0, &setup.config.optimizer)?;
    let (traj, _) = cp.state(&z)?;
    art.push("control.csv", z.to_csv());
    art.push("trajectory.csv", traj.to_mode_csv());
    art.push("physical.csv", traj.to_physical_csv(setup.basis()));
    art.push_json("report.json", &report)
}

/// One row of the `verify` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }
}

/// The invariant suite evaluated on the configured problem.
pub fn verify_checks(setup: &Setup) -> Result<Vec<Check>> {
    let cp = &setup.problem;
    let fwd = &cp.forward;
    let basis = setup.basis();
    let idx = setup.config.indices;
    let ctl = setup.config.series;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.config.seed);
    let mut checks = Vec::new();

    let mut err: f64 = 0.0;
    for i in 0..=44 {
        let x = -20.0 + 0.5 * i as f64;
        err = err.max((ml_eval(1.0, 1.0, x, ctl)? - x.exp()).abs());
    }
    checks.push(Check::at_most("specfun.ml_exponential", err, 1e-10));
    // e · erfc(1)
    let err = (ml_eval(0.5, 1.0, -1.0, ctl)? - 0.427_583_576_155_807).abs();
    checks.push(Check::at_most("specfun.ml_erfc", err, 1e-9));

    checks.push(Check::at_most("spectral.gram_identity", gram_deviation(basis), 5e-8));
    let c: Vec<f64> = (0..basis.n_modes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let back = basis.analyze(&basis.synthesize(&SpectralField::new(c.clone()))?)?;
    let err = back.coeffs.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("spectral.transform_roundtrip", err, 1e-10));

    let control = fwd.control();
    let weights = fwd.control_weights();
    let mut err: f64 = 0.0;
    for _ in 0..20 {
        let z: Vec<f64> = (0..weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = SpectralField::new((0..basis.n_modes()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let lhs = control.apply_b(basis, &z)?.dot(&v);
        let bv = control.apply_b_star(basis, &v)?;
        let rhs: f64 = z.iter().zip(&bv).zip(&weights).map(|((a, b), w)| a * b * w).sum();
        err = err.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    checks.push(Check::at_most("control.adjoint_identity", err, 1e-10));

    let linear = ForwardProblem::new(
        basis.clone(),
        idx,
        Nonlinearity::zero(),
        control.clone(),
        fwd.grid().clone(),
        ctl,
    )?;
    let zero = ControlSignal::zeros(fwd.grid(), weights.len());
    let (lin, _) = linear.solve(&zero, &cp.u0, &cp.picard)?;
    let mut err: f64 = 0.0;
    for (t, u) in lin.times.iter().zip(&lin.states) {
        for (n, l) in basis.eigenvalues().iter().enumerate() {
            let want = ml_eval(idx.gamma, 1.0, -l * t.powf(idx.gamma), ctl)? * cp.u0.coeffs[n];
            err = err.max((u.coeffs[n] - want).abs());
        }
    }
    checks.push(Check::at_most("forward.linear_exactness", err, 1e-9));

    let (traj, report) = cp.state(&setup.z0)?;
    checks.push(Check::at_most("forward.completed", if traj.is_complete() { 0.0 } else { 1.0 }, 0.0));
    if !traj.is_complete() {
        warn!("forward solve blew up; skipping the adjoint checks");
        return Ok(checks);
    }
    let scale = report.max_valpha_norm.max(1.0);
    let res = mild_residual(fwd, &traj, &setup.z0, &cp.u0)?.into_iter().fold(0.0, f64::max);
    checks.push(Check::at_most("forward.mild_residual", res, 10.0 * cp.picard.tol * scale));
    let (again, _) = cp.state(&setup.z0)?;
    checks.push(Check::at_most("forward.reproducible", if again == traj { 0.0 } else { 1.0 }, 0.0));

    let ev = cp.evaluate(&setup.z0)?;
    checks.push(Check::at_most("adjoint.terminal_condition", terminal_condition(&ev.adjoint, idx.gamma)?, 1e-10));
    let h = random_direction(fwd.grid(), weights.len(), setup.config.seed);
    let eta = solve_linearized(fwd, &ev.state, &h)?;
    checks.push(Check::at_most("adjoint.duality_gap", duality_gap(fwd, &ev.psi, &eta, &ev.adjoint, &h)?, 1e-6));
    let fd = finite_difference_check(cp, &setup.z0, &h, &setup.config.gradcheck.epsilons)?;
    checks.push(Check::at_most("adjoint.gradient_fd", fd.best_relative_error, setup.config.gradcheck.tolerance));

    let z1 = random_direction(fwd.grid(), weights.len(), setup.config.seed.wrapping_add(1)).scaled(3.0);
    let z2 = random_direction(fwd.grid(), weights.len(), setup.config.seed.wrapping_add(2)).scaled(3.0);
    let mid = z1.axpy(1.0, &z2).scaled(0.5);
    let j2 = |z: &ControlSignal| 0.5 * cp.cost.zeta * z.inner(z, &weights);
    let gap = j2(&mid) - 0.5 * (j2(&z1) + j2(&z2));
    checks.push(Check::at_most("control.j2_convexity", gap, 1e-12 * (1.0 + j2(&z1) + j2(&z2))));
    if let Some(set) = &cp.set {
        let clamp_only = AdmissibleSet {
            enforce_derivative_bound: false,
            ..set.clone()
        };
        let (p1, _) = project_admissible(&z1, &clamp_only, &weights);
        let (p2, _) = project_admissible(&z2, &clamp_only, &weights);
        let expansion = p1.axpy(-1.0, &p2).l2_norm(&weights) - z1.axpy(-1.0, &z2).l2_norm(&weights);
        checks.push(Check::at_most("control.projection_nonexpansive", expansion, 1e-12));
        let (pp, _) = project_admissible(&p1, &clamp_only, &weights);
        checks.push(Check::at_most("control.projection_idempotent", pp.max_abs_diff(&p1), 0.0));
    }
    Ok(checks)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("SUBDIFF_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Exit status of a CLI error: 2 for invalid configurations, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Parses the configuration, runs the command and writes its artifacts.
/// Returns `Ok(false)` when `verify` reports a failing check.
pub fn run(cli: &Cli) -> Result<bool> {
    let config = ProblemConfig::load(&cli.config)?;
    let threads = cli.threads.unwrap_or(config.threads);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            warn!("could not configure the thread pool: {e}");
        }
    }
    let setup = Setup::new(config)?;
    info!("theta = {}, running {:?}", setup.derived().theta, cli.command);
    let art = run_command(cli.command, &setup)?;
    art.write(&cli.out)?;
    Ok(art.success)
}

/// Entry point of the `subdiff` binary; returns the process exit code.
pub fn main() -> i32 {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("verify: some checks failed; see verify.json");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
