//! Command-line entry point: flat key-value configs, subcommand dispatch,
//! and the external CSV/JSON artifact formats.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::asymptotics::{
    epsilon_sweep, epsilon_sweep_multi, AsymptoticsError, SweepOptions,
};
use crate::domain::{
    build_domain, DomainError, DomainGrid, Geometry, GreenBackend, GreenOperator, ScalarField,
};
use crate::geom::Point;
use crate::landscape::{
    kr_minimize, ConfinementBall, KrInit, KrMinimizeOptions, LandscapeError, VortexConfiguration,
};
use crate::output;
use crate::pointvortex::{
    convention_self_test, equilibrium_residual, pv_integrate, PointVortexState, PvError,
};
use crate::profiles::{
    check_hypotheses, limiting_profile, power_profile, ProfileError, ProfileFunction,
};
use crate::solver::{
    fixed_point_solve, multi_solve, solve_with_escalation, IterationParams, MultiVortexComponent,
    MultiVortexSpec, SolveResult, SolverConfig, SolverError, SolverInit,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad preconditions, unwritable paths: exit 2.
    Validation(String),
    /// Runtime solver failures: exit 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("io: {e}"))
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::BadExponent(_) | ProfileError::BadArgument(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BadConfig(_)
            | SolverError::BadSpec(_)
            | SolverError::ResolutionInadequate { .. }
            | SolverError::SignViolation(_)
            | SolverError::Domain(_) => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<LandscapeError> for CliError {
    fn from(e: LandscapeError) -> Self {
        match e {
            LandscapeError::NoInteriorCriticalPoint => CliError::Solver(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PvError> for CliError {
    fn from(e: PvError) -> Self {
        match e {
            PvError::BadStepping { .. } | PvError::Landscape(_) | PvError::Domain(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<AsymptoticsError> for CliError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::BadInput(_) => CliError::Validation(e.to_string()),
            AsymptoticsError::Domain(d) => d.into(),
            AsymptoticsError::Profile(p) => p.into(),
            AsymptoticsError::Solver(s) => s.into(),
            aborted => CliError::Solver(aborted.to_string()),
        }
    }
}

fn log(msg: &str) {
    if std::env::var_os("VORTEX_NO_COLOR").is_some() {
        eprintln!("[vortex2d] {msg}");
    } else {
        eprintln!("\x1b[36m[vortex2d]\x1b[0m {msg}");
    }
}

/// Flat dotted-key configuration with full-echo tracking: every key read
/// (or defaulted) lands in the echo map embedded in run records, and
/// unread keys are rejected.
struct Config {
    values: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    echo: BTreeMap<String, String>,
}

impl Config {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Validation(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Validation(format!("duplicate config key `{key}`")));
            }
        }
        Ok(Config { values, consumed: BTreeSet::new(), echo: BTreeMap::new() })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
            self.echo.insert(key.to_string(), v.clone().unwrap());
        }
        v
    }

    fn str_or(&mut self, key: &str, default: &str) -> String {
        match self.take(key) {
            Some(v) => v,
            None => {
                self.echo.insert(key.to_string(), default.to_string());
                default.to_string()
            }
        }
    }

    fn f64_req(&mut self, key: &str) -> Result<f64, CliError> {
        let v = self
            .take(key)
            .ok_or_else(|| CliError::Validation(format!("missing config key `{key}`")))?;
        v.parse()
            .map_err(|_| CliError::Validation(format!("config key `{key}`: bad float `{v}`")))
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.take(key) {
            Some(v) => v.parse().map_err(|_| {
                CliError::Validation(format!("config key `{key}`: bad float `{v}`"))
            }),
            None => {
                self.echo.insert(key.to_string(), format!("{default}"));
                Ok(default)
            }
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.take(key) {
            Some(v) => v.parse().map_err(|_| {
                CliError::Validation(format!("config key `{key}`: bad integer `{v}`"))
            }),
            None => {
                self.echo.insert(key.to_string(), format!("{default}"));
                Ok(default)
            }
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.take(key) {
            Some(v) => v.parse().map_err(|_| {
                CliError::Validation(format!("config key `{key}`: bad integer `{v}`"))
            }),
            None => {
                self.echo.insert(key.to_string(), format!("{default}"));
                Ok(default)
            }
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.take(key) {
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(CliError::Validation(format!(
                    "config key `{key}`: bad bool `{v}`"
                ))),
            },
            None => {
                self.echo.insert(key.to_string(), format!("{default}"));
                Ok(default)
            }
        }
    }

    fn f64_list_req(&mut self, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Validation(format!("missing config key `{key}`")))?;
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CliError::Validation(format!("config key `{key}`: bad float `{s}`"))
                })
            })
            .collect()
    }

    /// `x,y; x,y; ...`
    fn points_req(&mut self, key: &str) -> Result<Vec<Point>, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Validation(format!("missing config key `{key}`")))?;
        parse_points(&raw)
            .map_err(|e| CliError::Validation(format!("config key `{key}`: {e}")))
    }

    fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<&String> =
            self.values.keys().filter(|k| !self.consumed.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!(
                "unknown config keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }

    fn echo_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.echo
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }
}

fn parse_points(raw: &str) -> Result<Vec<Point>, String> {
    raw.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let parts: Vec<&str> = pair.split(',').map(|s| s.trim()).collect();
            if parts.len() != 2 {
                return Err(format!("expected `x,y`, got `{pair}`"));
            }
            let x: f64 = parts[0].parse().map_err(|_| format!("bad float `{}`", parts[0]))?;
            let y: f64 = parts[1].parse().map_err(|_| format!("bad float `{}`", parts[1]))?;
            Ok(Point::new(x, y))
        })
        .collect()
}

fn load_geometry(cfg: &mut Config) -> Result<(std::sync::Arc<DomainGrid>, GreenBackend), CliError> {
    let kind = cfg.str_or("geometry.kind", "disc");
    let grid = match kind.as_str() {
        "disc" => {
            let cx = cfg.f64_or("geometry.center_x", 0.0)?;
            let cy = cfg.f64_or("geometry.center_y", 0.0)?;
            let radius = cfg.f64_or("geometry.radius", 1.0)?;
            let resolution = cfg.f64_req("geometry.resolution")?;
            build_domain(Geometry::Disc { center: Point::new(cx, cy), radius }, resolution)?
        }
        "rectangle" => {
            let width = cfg.f64_req("geometry.width")?;
            let height = cfg.f64_req("geometry.height")?;
            let resolution = cfg.f64_req("geometry.resolution")?;
            build_domain(Geometry::Rectangle { width, height }, resolution)?
        }
        "custom" => {
            let path = cfg.take("geometry.mask_path").ok_or_else(|| {
                CliError::Validation("custom geometry needs geometry.mask_path".into())
            })?;
            load_mask_file(Path::new(&path))?
        }
        other => {
            return Err(CliError::Validation(format!("geometry.kind `{other}` unknown")));
        }
    };
    let backend = match cfg.str_or("green.backend", "auto").as_str() {
        "auto" => match grid.geometry() {
            Geometry::Disc { .. } => GreenBackend::AnalyticDisc,
            _ => GreenBackend::FiniteDifference,
        },
        "analytic-disc" => GreenBackend::AnalyticDisc,
        "finite-difference" => GreenBackend::FiniteDifference,
        other => {
            return Err(CliError::Validation(format!("green.backend `{other}` unknown")));
        }
    };
    Ok((grid, backend))
}

/// Custom mask file: header `nx,ny,spacing,origin_x,origin_y`, then ny
/// rows of nx `0`/`1` characters, bottom row first.
fn load_mask_file(path: &Path) -> Result<std::sync::Arc<DomainGrid>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("mask {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("empty mask file".into()))?;
    let parts: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    if parts.len() != 5 {
        return Err(CliError::Validation(
            "mask header must be `nx,ny,spacing,origin_x,origin_y`".into(),
        ));
    }
    let nx: usize = parts[0].parse().map_err(|_| CliError::Validation("bad nx".into()))?;
    let ny: usize = parts[1].parse().map_err(|_| CliError::Validation("bad ny".into()))?;
    let spacing: f64 =
        parts[2].parse().map_err(|_| CliError::Validation("bad spacing".into()))?;
    let ox: f64 = parts[3].parse().map_err(|_| CliError::Validation("bad origin_x".into()))?;
    let oy: f64 = parts[4].parse().map_err(|_| CliError::Validation("bad origin_y".into()))?;
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        let row = lines.next().ok_or_else(|| {
            CliError::Validation(format!("mask file ended before row {j}"))
        })?;
        let row = row.trim();
        if row.len() != nx {
            return Err(CliError::Validation(format!(
                "mask row {j} has {} cells, expected {nx}",
                row.len()
            )));
        }
        for (i, ch) in row.chars().enumerate() {
            mask[j * nx + i] = ch == '1';
        }
    }
    Ok(DomainGrid::from_mask(nx, ny, spacing, Point::new(ox, oy), mask)?)
}

fn load_profile(cfg: &mut Config) -> Result<ProfileFunction, CliError> {
    let kind = cfg.str_or("profile.kind", "power");
    match kind.as_str() {
        "power" => {
            let p = cfg.f64_or("profile.p", 1.0)?;
            Ok(power_profile(p)?)
        }
        other => Err(CliError::Validation(format!(
            "profile.kind `{other}` unknown (built-in: power)"
        ))),
    }
}

fn load_iteration(cfg: &mut Config) -> Result<IterationParams, CliError> {
    let defaults = IterationParams::default();
    Ok(IterationParams {
        tol_fixed_point: cfg.f64_or("solver.tol_fixed_point", defaults.tol_fixed_point)?,
        tol_mu: cfg.f64_or("solver.tol_mu", defaults.tol_mu)?,
        max_iter: cfg.usize_or("solver.max_iter", defaults.max_iter)?,
        damping: cfg.f64_or("solver.damping", defaults.damping)?,
    })
}

fn load_solver_config(
    cfg: &mut Config,
    grid: &std::sync::Arc<DomainGrid>,
) -> Result<SolverConfig, CliError> {
    let epsilon = cfg.f64_req("solver.epsilon")?;
    let lambda = cfg.f64_or("solver.lambda", 50.0)?;
    let kappa = cfg.f64_or("solver.kappa", 1.0)?;
    let profile = load_profile(cfg)?;
    let iteration = load_iteration(cfg)?;
    let init_kind = cfg.str_or("solver.init", "uniform-patch");
    let (init, init_field) = match init_kind.as_str() {
        "uniform-patch" => {
            let cx = cfg.f64_or("solver.init_center_x", 0.0)?;
            let cy = cfg.f64_or("solver.init_center_y", 0.0)?;
            (SolverInit::UniformPatch { center: Point::new(cx, cy) }, None)
        }
        "user-field" => {
            let path = cfg.take("solver.init_path").ok_or_else(|| {
                CliError::Validation("user-field init needs solver.init_path".into())
            })?;
            let field = load_field_csv(Path::new(&path), grid)?;
            (SolverInit::UserField, Some(field))
        }
        other => {
            return Err(CliError::Validation(format!("solver.init `{other}` unknown")));
        }
    };
    Ok(SolverConfig { epsilon, lambda, kappa, profile, iteration, init, init_field })
}

/// Reads a grid dump (`x,y,value`) back onto the given grid.
fn load_field_csv(
    path: &Path,
    grid: &std::sync::Arc<DomainGrid>,
) -> Result<ScalarField, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("field {}: {e}", path.display())))?;
    let mut values = vec![0.0; grid.n_cells()];
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(CliError::Validation(format!(
                "field row {i}: expected `x,y,value`"
            )));
        }
        let x: f64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("field row {i}: bad x")))?;
        let y: f64 = cols[1]
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("field row {i}: bad y")))?;
        let v: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("field row {i}: bad value")))?;
        if let Some(k) = grid.locate(Point::new(x, y)) {
            values[k] = v;
        }
    }
    Ok(ScalarField::from_values(grid.clone(), values))
}

fn point_json(p: Point) -> serde_json::Value {
    serde_json::json!([p.x, p.y])
}

fn solve_record(result: &SolveResult, doublings: u32) -> serde_json::Value {
    serde_json::json!({
        "epsilon": result.epsilon,
        "lambda": result.lambda,
        "mu": result.mu,
        "energy_E": result.energy_kinetic,
        "energy_F": result.energy_penalty,
        "energy_total": result.energy_total,
        "energy_initial": result.energy_initial,
        "iterations": result.iterations,
        "residual_L1": result.residual_l1,
        "patch_area": result.patch_area,
        "support_diameter": result.support_diameter,
        "center": point_json(result.center),
        "steady_residual": result.steady_residual,
        "circulation": result.omega.circulation(),
        "lambda_doublings": doublings,
    })
}

#[derive(Parser)]
#[command(name = "vortex2d", version, about = "Steady 2D Euler vortex toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key-value config file (`section.key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker cap for concurrent phases.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Run every sweep epsilon independently (no warm start).
    #[arg(long, default_value_t = false)]
    cold: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Robin function and its gradient at given points.
    Robin(RunArgs),
    /// Minimize the Kirchhoff-Routh function.
    KrMin(RunArgs),
    /// Limiting radial core profile by shooting.
    Profile(RunArgs),
    /// Numerical checks of the profile hypotheses.
    CheckHypotheses(RunArgs),
    /// Single-vortex variational solve.
    Solve(RunArgs),
    /// Multi-vortex variational solve with support balls.
    MultiSolve(RunArgs),
    /// Epsilon sweep with law fits.
    Sweep(RunArgs),
    /// Point-vortex trajectory integration.
    PvSim(RunArgs),
}

pub fn run_main() -> i32 {
    let cli = Cli::parse();
    let (args, run): (&RunArgs, fn(&RunArgs, &mut Config) -> Result<(), CliError>) =
        match &cli.command {
            Command::Robin(a) => (a, cmd_robin),
            Command::KrMin(a) => (a, cmd_kr_min),
            Command::Profile(a) => (a, cmd_profile),
            Command::CheckHypotheses(a) => (a, cmd_check_hypotheses),
            Command::Solve(a) => (a, cmd_solve),
            Command::MultiSolve(a) => (a, cmd_multi_solve),
            Command::Sweep(a) => (a, cmd_sweep),
            Command::PvSim(a) => (a, cmd_pv_sim),
        };
    let mut cfg = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            log(&format!("error: {}", e.message()));
            return e.exit_code();
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        log(&format!("error: output dir {}: {e}", args.out.display()));
        return 2;
    }
    match run(args, &mut cfg) {
        Ok(()) => 0,
        Err(e) => {
            log(&format!("error: {}", e.message()));
            e.exit_code()
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = output::to_json_g17(value);
    text.push('\n');
    output::write_text(path, &text)?;
    log(&format!("wrote {}", path.display()));
    Ok(())
}

fn write_csv(path: &Path, text: &str) -> Result<(), CliError> {
    output::write_text(path, text)?;
    log(&format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_robin(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let points = cfg.points_req("robin.points")?;
    cfg.finish()?;
    let op = GreenOperator::with_backend(grid, backend)?;
    let mut rows = Vec::new();
    for p in points {
        let h = op.robin(p)?;
        let g = op.robin_grad(p)?;
        rows.push(serde_json::json!({
            "x": p.x, "y": p.y, "robin": h, "grad": [g.x, g.y],
        }));
    }
    write_json(
        &args.out.join("robin.json"),
        &serde_json::json!({ "config": cfg.echo_json(), "points": rows }),
    )
}

fn cmd_kr_min(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let strengths = cfg.f64_list_req("kr.strengths")?;
    let seed = cfg.u64_or("seed", 0)?;
    let opts = KrMinimizeOptions {
        tol: cfg.f64_or("kr.tol", 1e-8)?,
        max_iter: cfg.usize_or("kr.max_iter", 2000)?,
        n_starts: cfg.usize_or("kr.starts", 32)?,
        balls: match cfg.take("kr.balls") {
            None => None,
            Some(raw) => {
                let mut balls = Vec::new();
                for part in raw.split(';').filter(|s| !s.trim().is_empty()) {
                    let nums: Vec<f64> = part
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| {
                            CliError::Validation(format!("kr.balls: bad entry `{part}`"))
                        })?;
                    if nums.len() != 3 {
                        return Err(CliError::Validation(
                            "kr.balls entries are `cx,cy,radius`".into(),
                        ));
                    }
                    balls.push(ConfinementBall {
                        center: Point::new(nums[0], nums[1]),
                        radius: nums[2],
                    });
                }
                Some(balls)
            }
        },
    };
    let init = match cfg.str_or("kr.init", "multistart").as_str() {
        "multistart" => KrInit::Multistart { seed },
        raw => KrInit::Points(
            parse_points(raw).map_err(|e| CliError::Validation(format!("kr.init: {e}")))?,
        ),
    };
    cfg.finish()?;
    let op = GreenOperator::with_backend(grid, backend)?;
    let report = kr_minimize(&op, &strengths, init, &opts)?;
    let eq_res = equilibrium_residual(
        &op,
        &PointVortexState::new(report.configuration.clone()),
    )?;
    write_json(
        &args.out.join("kr_min.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "points": report.configuration.points.iter().map(|p| point_json(*p)).collect::<Vec<_>>(),
            "strengths": report.configuration.strengths,
            "value": report.value,
            "grad_norm": report.grad_norm,
            "hessian_eigs": report.isolatedness.hessian_eigs,
            "zero_modes": report.isolatedness.zero_modes,
            "isolated_minimum": report.isolatedness.isolated_minimum,
            "iterations": report.iterations,
            "converged_starts": report.converged_starts,
            "equilibrium_residual": eq_res,
        }),
    )
}

fn cmd_profile(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let profile = load_profile(cfg)?;
    let kappa = cfg.f64_or("profile.kappa", 1.0)?;
    let tol = cfg.f64_or("profile.tol", 1e-9)?;
    cfg.finish()?;
    let radial = limiting_profile(&profile, kappa, tol)?;
    write_csv(&args.out.join("profile.csv"), &output::radial_profile_csv(&radial))?;
    write_json(
        &args.out.join("profile.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "kappa": radial.kappa,
            "peak": radial.peak,
            "support_radius": radial.support_radius,
            "mass": radial.mass(),
            "mass_map_monotone": radial.mass_map_monotone,
        }),
    )
}

fn cmd_check_hypotheses(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let profile = load_profile(cfg)?;
    let s_max = cfg.f64_or("hyp.s_max", 100.0)?;
    let n = cfg.usize_or("hyp.n", 400)?;
    let taus = match cfg.take("hyp.taus") {
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("hyp.taus: bad float `{s}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?,
        None => vec![0.5, 1.0],
    };
    cfg.finish()?;
    let report = check_hypotheses(&profile, s_max, n, &taus)?;
    write_json(
        &args.out.join("hypotheses.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "delta0": profile.delta0,
            "delta1": profile.delta1,
            "all_passed": report.all_passed(),
            "report": serde_json::to_value(&report).expect("serializable"),
        }),
    )
}

fn cmd_solve(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let solver_cfg = load_solver_config(cfg, &grid)?;
    let escalate = cfg.bool_or("solver.escalate", true)?;
    let dump = cfg.bool_or("output.dump_fields", false)?;
    cfg.finish()?;
    let op = GreenOperator::with_backend(grid, backend)?;
    let (result, doublings) = if escalate {
        solve_with_escalation(&op, &solver_cfg)?
    } else {
        (fixed_point_solve(&op, &solver_cfg)?, 0)
    };
    log(&format!(
        "solve converged: {} iterations, mu = {:.6}, E = {:.6}",
        result.iterations, result.mu, result.energy_total
    ));
    let mut record = solve_record(&result, doublings);
    record["config"] = cfg.echo_json();
    write_json(&args.out.join("solve.json"), &record)?;
    if dump {
        write_csv(&args.out.join("omega.csv"), &output::field_csv_of(result.omega.field()))?;
        write_csv(&args.out.join("psi.csv"), &output::field_csv_of(&result.psi.field))?;
    }
    Ok(())
}

fn cmd_multi_solve(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let epsilon = cfg.f64_req("solver.epsilon")?;
    let lambda = cfg.f64_or("solver.lambda", 50.0)?;
    let params = load_iteration(cfg)?;
    let k = cfg.usize_or("multi.k", 0)?;
    if k == 0 {
        return Err(CliError::Validation("multi.k must be >= 1".into()));
    }
    let spec = load_multi_spec_with_k(cfg, epsilon, lambda, k)?;
    let dump = cfg.bool_or("output.dump_fields", false)?;
    cfg.finish()?;
    let op = GreenOperator::with_backend(grid, backend)?;
    let result = multi_solve(&op, &spec, &params)?;
    log(&format!(
        "multi-solve converged: {} iterations, residual {:.3e}",
        result.iterations, result.residual_l1
    ));
    let components: Vec<serde_json::Value> = result
        .components
        .iter()
        .map(|c| {
            serde_json::json!({
                "mu": c.mu,
                "circulation": c.circulation,
                "center": point_json(c.center),
                "support_diameter": c.support_diameter,
                "patch_area": c.patch_area,
                "energy_component": c.energy_component,
            })
        })
        .collect();
    write_json(
        &args.out.join("multi_solve.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "epsilon": epsilon,
            "lambda": lambda,
            "mu_i": result.components.iter().map(|c| c.mu).collect::<Vec<_>>(),
            "components": components,
            "energy_E": result.energy_kinetic,
            "energy_total": result.energy_total,
            "energy_initial": result.energy_initial,
            "iterations": result.iterations,
            "residual_L1": result.residual_l1,
            "steady_residual": result.steady_residual,
        }),
    )?;
    if dump {
        write_csv(&args.out.join("omega.csv"), &output::field_csv_of(result.omega.field()))?;
        write_csv(&args.out.join("g_omega.csv"), &output::field_csv_of(&result.g_omega.field))?;
        for (i, c) in result.components.iter().enumerate() {
            write_csv(
                &args.out.join(format!("omega_{}.csv", i + 1)),
                &output::field_csv_of(c.omega.field()),
            )?;
        }
    }
    Ok(())
}

fn cmd_sweep(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let epsilons = cfg.f64_list_req("sweep.epsilons")?;
    let cold = args.cold || cfg.bool_or("sweep.cold", false)?;
    let multi_k = cfg.usize_or("multi.k", 0)?;
    let opts = SweepOptions {
        cold,
        escalate: cfg.bool_or("sweep.escalate", true)?,
        compare_profile: cfg.bool_or("sweep.compare_profile", true)?,
        jobs: args.jobs.max(1),
    };
    let op = GreenOperator::with_backend(grid.clone(), backend)?;

    if multi_k > 0 {
        let epsilon = epsilons[0];
        let lambda = cfg.f64_or("solver.lambda", 50.0)?;
        let params = load_iteration(cfg)?;
        let spec = load_multi_spec_with_k(cfg, epsilon, lambda, multi_k)?;
        cfg.finish()?;
        let report = epsilon_sweep_multi(&op, &spec, &params, &epsilons, &opts)?;
        for i in 0..multi_k {
            write_csv(
                &args.out.join(format!("sweep_component_{}.csv", i + 1)),
                &output::multi_sweep_component_csv(&report, i),
            )?;
        }
        write_json(
            &args.out.join("sweep_fits.json"),
            &serde_json::json!({
                "config": cfg.echo_json(),
                "mu_fits": serde_json::to_value(&report.mu_fits).expect("serializable"),
                "energy_fit": serde_json::to_value(&report.energy_fit).expect("serializable"),
                "records": serde_json::to_value(&report.records).expect("serializable"),
            }),
        )?;
        return Ok(());
    }

    let mut base = load_solver_config(cfg, &grid)?;
    base.epsilon = epsilons[0];
    cfg.finish()?;
    let report = epsilon_sweep(&op, &base, &epsilons, &opts)?;
    write_csv(&args.out.join("sweep.csv"), &output::sweep_csv(&report))?;
    let fits = report.fits.as_ref().map(|f| {
        serde_json::json!({
            "mu_slope": f.mu.slope,
            "mu_intercept": f.mu.intercept,
            "mu_r2": f.mu.r2,
            "E_slope": f.energy.slope,
            "E_intercept": f.energy.intercept,
            "E_r2": f.energy.r2,
            "diam_ratio_max": f.diam_ratio_max,
        })
    });
    write_json(
        &args.out.join("sweep_fits.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "fits": fits,
            "records": serde_json::to_value(&report.records).expect("serializable"),
        }),
    )
}

fn load_multi_spec_with_k(
    cfg: &mut Config,
    epsilon: f64,
    lambda: f64,
    k: usize,
) -> Result<MultiVortexSpec, CliError> {
    let shared_r0 = cfg.f64_or("multi.r0", 0.1)?;
    let mut components = Vec::with_capacity(k);
    for i in 1..=k {
        let cx = cfg.f64_req(&format!("multi.{i}.center_x"))?;
        let cy = cfg.f64_req(&format!("multi.{i}.center_y"))?;
        let strength = cfg.f64_req(&format!("multi.{i}.strength"))?;
        let p = cfg.f64_or(&format!("multi.{i}.p"), 1.0)?;
        let radius = cfg.f64_or(&format!("multi.{i}.radius"), shared_r0)?;
        components.push(MultiVortexComponent {
            profile: power_profile(p)?,
            strength,
            center: Point::new(cx, cy),
            ball_radius: radius,
        });
    }
    Ok(MultiVortexSpec { components, epsilon, lambda })
}

fn cmd_pv_sim(args: &RunArgs, cfg: &mut Config) -> Result<(), CliError> {
    let (grid, backend) = load_geometry(cfg)?;
    let points = cfg.points_req("pv.points")?;
    let strengths = cfg.f64_list_req("pv.strengths")?;
    let dt = cfg.f64_req("pv.dt")?;
    let t_end = cfg.f64_req("pv.t_end")?;
    let stride = cfg.usize_or("pv.sample_stride", 1)?;
    cfg.finish()?;
    let op = GreenOperator::with_backend(grid, backend)?;
    convention_self_test(&op)?;
    let cfg_pv = VortexConfiguration::new(points, strengths)?;
    let state = PointVortexState::new(cfg_pv);
    let initial_residual = equilibrium_residual(&op, &state)?;
    let traj = pv_integrate(&op, &state, dt, t_end, stride)?;
    write_csv(&args.out.join("trajectory.csv"), &output::trajectory_csv(&traj))?;
    let w0 = traj.hamiltonian[0];
    let w_end = *traj.hamiltonian.last().expect("nonempty");
    write_json(
        &args.out.join("pv_sim.json"),
        &serde_json::json!({
            "config": cfg.echo_json(),
            "samples": traj.times.len(),
            "W_initial": w0,
            "W_final": w_end,
            "hamiltonian_drift": (w_end - w0).abs(),
            "equilibrium_residual_initial": initial_residual,
            "final_positions": traj.positions.last().expect("nonempty").iter().map(|p| point_json(*p)).collect::<Vec<_>>(),
        }),
    )
}
