//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 best-response
//! dynamics stopped at the iteration cap in `solve`.

pub mod sweep;
pub mod validate;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{verify_equilibrium, BrdConfig, PlayerOrder, DEFAULT_MAX_ITERATIONS};
use crate::io::{
    fit_price_curve, generate_synthetic_scenario, load_scenario, render_report, render_sweep_csv,
    write_scenario, AlphaResult, ScenarioFile, ScenarioReport, SyntheticParams, TariffPoints,
};
use crate::model::{LoadMatrix, Mechanism};
use crate::solver::minimize_social_cost;
use sweep::{alpha_result, linspace_grid, run_sweep, solve_cell, PreparedScenario, SweepConfig};
use validate::{run_validation, ValidationOptions};

pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "drgame", version, about = "Demand-response game equilibria and their efficiency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the quadratic provider cost to three (load, unit price) points.
    FitPrices(FitPricesArgs),
    /// Write a synthetic scenario (CSV plus JSON sidecar).
    Generate(GenerateArgs),
    /// Compute the equilibrium of one scenario at one alpha.
    Solve(SolveArgs),
    /// Sweep alpha over one or more scenarios.
    Sweep(SweepArgs),
    /// Run the built-in oracle checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct FitPricesArgs {
    /// Tariff point `LOAD:PRICE`; give exactly three. Defaults to the
    /// reference tariff.
    #[arg(long = "point", value_parser = parse_point, num_args = 1)]
    points: Vec<(f64, f64)>,
    /// Rescale the reference tariff loads from 30 homes to this many.
    #[arg(long, conflicts_with = "points")]
    homes: Option<usize>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    users: usize,
    #[arg(long, default_value_t = 24)]
    hours: usize,
    #[arg(long, default_value_t = 0)]
    day: u32,
    /// Tariff point `LOAD:PRICE` overriding the rescaled reference tariff.
    #[arg(long = "point", value_parser = parse_point, num_args = 1)]
    points: Vec<(f64, f64)>,
    /// Output CSV path; the sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Dp,
    Hp,
    Both,
}

impl MechanismArg {
    fn mechanisms(self) -> Vec<Mechanism> {
        match self {
            Self::Dp => vec![Mechanism::DailyProportional],
            Self::Hp => vec![Mechanism::HourlyProportional],
            Self::Both => Mechanism::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value_t = MechanismArg::Both)]
    mechanism: MechanismArg,
    /// Seed of the random player order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use a fixed cyclic player order instead of random permutations.
    #[arg(long)]
    cyclic: bool,
    #[arg(long = "max-iters", default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iters: usize,
    /// Improvement tolerance of the dynamics (¢).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl EngineArgs {
    fn brd(&self) -> BrdConfig {
        let mut cfg = if self.cyclic {
            BrdConfig::cyclic()
        } else {
            BrdConfig::with_seed(self.seed)
        };
        cfg.max_iterations = self.max_iters;
        if let Some(tol) = self.tol {
            cfg.improvement_tol = tol;
        }
        cfg
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Scenario CSV; repeat for several days.
    #[arg(long, required_unless_present = "synthetic_days")]
    scenario: Vec<PathBuf>,
    /// Generate this many synthetic days instead of reading files.
    #[arg(long, conflicts_with = "scenario")]
    synthetic_days: Option<u32>,
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
    #[arg(long, default_value_t = 30)]
    users: usize,
    #[arg(long, default_value_t = 24)]
    hours: usize,
    /// Explicit alpha value; repeat to build the grid.
    #[arg(long, conflicts_with = "alpha_grid")]
    alpha: Vec<f64>,
    /// Number of evenly spaced alpha values in [0, 1].
    #[arg(long, default_value_t = 50)]
    alpha_grid: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    corrupt_brd_tolerance: Option<f64>,
}

fn parse_point(s: &str) -> std::result::Result<(f64, f64), String> {
    let (l, p) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LOAD:PRICE, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((parse(l)?, parse(p)?))
}

fn tariff_from_points(points: &[(f64, f64)]) -> Result<Option<TariffPoints>> {
    match points {
        [] => Ok(None),
        [a, b, c] => Ok(Some(TariffPoints::new([*a, *b, *c])?)),
        other => Err(Error::InvalidInstance(format!(
            "expected three tariff points, got {}",
            other.len()
        ))),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fit_prices(args: &FitPricesArgs) -> Result<i32> {
    let tariff = match tariff_from_points(&args.points)? {
        Some(t) => t,
        None => args.homes.map_or_else(TariffPoints::reference, TariffPoints::reference_for),
    };
    let curve = fit_price_curve(&tariff)?;
    let value = serde_json::json!({
        "a0": curve.a0,
        "a1": curve.a1,
        "a2": curve.a2,
        "points": tariff.points().map(|(l, p)| [l, p]),
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(0)
}

fn generate(args: &GenerateArgs) -> Result<i32> {
    let mut params = SyntheticParams::new(args.users, args.hours, args.day);
    params.tariff = tariff_from_points(&args.points)?;
    let file = generate_synthetic_scenario(args.seed, &params)?;
    write_scenario(&file, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(0)
}

/// Per-mechanism outcome of `solve`, with the full equilibrium profile.
#[derive(Debug, Serialize)]
struct SolveResult {
    #[serde(flatten)]
    summary: AlphaResult,
    player_order: PlayerOrder,
    /// Whether no consumer can gain more than the tolerance by deviating.
    epsilon_equilibrium: bool,
    per_user_regret: Vec<f64>,
    loads: LoadMatrix,
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    scenario_id: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    alpha: f64,
    results: Vec<SolveResult>,
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let file = load_scenario(&args.scenario)?;
    let prepared = PreparedScenario::new(file, crate::solver::DEFAULT_DESCENT_TOL)?;
    let social_opt = minimize_social_cost(
        &prepared.instance(args.alpha, Mechanism::HourlyProportional)?,
        crate::solver::DEFAULT_DESCENT_TOL,
    )?
    .value;
    let brd = args.engine.brd();
    let mut results = Vec::new();
    let mut capped = false;
    for mechanism in args.engine.mechanism.mechanisms() {
        let (report, record) = solve_cell(&prepared, args.alpha, mechanism, &brd, social_opt)?;
        let instance = prepared.instance(args.alpha, mechanism)?;
        let eps = brd.improvement_tol.max(1e-9 * record.social_cost_eq.abs());
        let check = verify_equilibrium(&instance, &report.loads, eps)?;
        capped |= !report.converged;
        results.push(SolveResult {
            player_order: report.player_order,
            epsilon_equilibrium: check.is_equilibrium(),
            per_user_regret: report.per_user_regret.clone(),
            loads: report.loads.clone(),
            summary: alpha_result(args.alpha, mechanism, Ok((report, record))),
        });
    }
    let text = match args.engine.format {
        Format::Json => {
            let output = SolveOutput {
                scenario_id: prepared.file.meta.scenario_id.clone(),
                seed: args.engine.seed,
                omega: prepared.omega,
                alpha: args.alpha,
                results,
            };
            serde_json::to_string_pretty(&output)? + "\n"
        }
        Format::Csv => render_sweep_csv(&[ScenarioReport {
            scenario_id: prepared.file.meta.scenario_id.clone(),
            seed: args.engine.seed,
            omega: prepared.omega,
            alpha_grid: vec![args.alpha],
            per_alpha: results.into_iter().map(|r| r.summary).collect(),
        }]),
    };
    emit(&text, args.engine.out.as_deref())?;
    Ok(if capped { EXIT_NOT_CONVERGED } else { 0 })
}

fn sweep_scenarios(args: &SweepArgs) -> Result<Vec<ScenarioFile>> {
    match args.synthetic_days {
        Some(days) => (0..days)
            .map(|d| {
                generate_synthetic_scenario(args.synthetic_seed, &SyntheticParams::new(args.users, args.hours, d))
            })
            .collect(),
        None => args.scenario.iter().map(|p| load_scenario(p)).collect(),
    }
}

fn sweep(args: &SweepArgs) -> Result<i32> {
    let scenarios = sweep_scenarios(args)?;
    let grid = if args.alpha.is_empty() {
        linspace_grid(args.alpha_grid)
    } else {
        args.alpha.clone()
    };
    let mut cfg = SweepConfig::new(grid, args.engine.mechanism.mechanisms(), args.engine.seed)?;
    cfg.brd = args.engine.brd();
    cfg.threads = args.threads;
    let reports = run_sweep(&scenarios, &cfg)?;
    let text = match args.engine.format {
        Format::Json => render_report(&reports)? + "\n",
        Format::Csv => render_sweep_csv(&reports),
    };
    emit(&text, args.engine.out.as_deref())?;
    let failed = reports
        .iter()
        .flat_map(|r| &r.per_alpha)
        .filter(|c| c.error.is_some() || !c.converged)
        .count();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed or hit the iteration cap");
    }
    Ok(0)
}

fn validate(args: &ValidateArgs) -> Result<i32> {
    let checks = run_validation(&ValidationOptions {
        brd_tolerance_override: args.corrupt_brd_tolerance,
    });
    let failed = checks.iter().filter(|c| !c.passed).count();
    let mut text = String::new();
    if args.json {
        text = serde_json::to_string_pretty(&checks)? + "\n";
    } else {
        for c in &checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            text += &format!("{status} {} ({})\n", c.name, c.detail);
        }
        text += &format!("{} of {} checks passed\n", checks.len() - failed, checks.len());
    }
    emit(&text, None)?;
    Ok(if failed == 0 { 0 } else { EXIT_INVALID })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::FitPrices(a) => fit_prices(a),
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
