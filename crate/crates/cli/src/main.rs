//! `mfos` — mean-field optimal stopping: equilibrium solvers, population
//! simulation and transaction-fee design.
//!
//! Exit codes: 0 success, 2 configuration/validation, 3 solver
//! infeasibility, 4 simulation validation, 5 design infeasibility.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mfos_core::design::{DesignContext, InverseDesignResult, MixedObjectiveSpec, Utility};
use mfos_core::error::Error as CoreError;
use mfos_core::fpt::{Direction, HittingLaw, IgParams};
use mfos_core::market::MarketParams;
use mfos_core::nce1::{solve_theta_bar, stopping_rule1, NceSolution1};
use mfos_core::nce2::solve_system2;
use mfos_core::rng::{stream, StreamKind};
use mfos_core::sim::{
    default_deviation_grid, epsilon_nash_gap, simulate_population_i, simulate_population_ii,
    GapEstimate, Problem, PATH_T_MAX,
};

use config::RunConfig;
use output::{Emitter, Table};

#[derive(Parser)]
#[command(
    name = "mfos",
    version,
    about = "Mean-field optimal stopping games: solvers, Monte Carlo simulation, inverse fee design"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config key by dotted path, e.g. --set market.K=2.0
    /// (repeatable).
    #[arg(short, long, global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads for parallel simulation (output is identical for any
    /// count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Characteristic roots, boundary slope and design feasibility flags.
    Roots,
    /// Solve the best-time-to-sell consistency fixed point.
    SolveNce1,
    /// Solve the resource-extraction consistency fixed point.
    SolveNce2,
    /// Monte Carlo population run with payoff and distribution diagnostics.
    Simulate,
    /// Deviation-gap sweep over population sizes with a fitted rate.
    NashGap,
    /// First-passage law utilities for a threshold rule.
    Fpt {
        #[command(subcommand)]
        op: FptOp,
    },
    /// Fee design against statistical targets.
    Inverse {
        #[command(subcommand)]
        target: InverseTarget,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Up,
    Down,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Direction {
        match d {
            DirectionArg::Up => Direction::Up,
            DirectionArg::Down => Direction::Down,
        }
    }
}

#[derive(Subcommand)]
enum FptOp {
    /// Boundary parameters, hit probability and inverse Gaussian law.
    Law {
        #[arg(long)]
        x_star: f64,
        #[arg(long, value_enum, default_value = "up")]
        direction: DirectionArg,
    },
    /// Mean and variance of the stopping time.
    Moments {
        #[arg(long)]
        x_star: f64,
        #[arg(long, value_enum, default_value = "up")]
        direction: DirectionArg,
    },
    /// Density table on a time grid.
    Pdf {
        #[arg(long)]
        x_star: f64,
        #[arg(long, value_enum, default_value = "up")]
        direction: DirectionArg,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Exact stopping-time draws, one per line (`inf` marks a boundary
    /// never reached).
    Sample {
        #[arg(long)]
        x_star: f64,
        #[arg(long, value_enum, default_value = "up")]
        direction: DirectionArg,
        #[arg(short, long)]
        n: usize,
        /// Sampling seed; falls back to `sim.seed`, then 0.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum InverseTarget {
    /// Fee hitting a prescribed mean stopping time (`inverse.mu0`).
    Mean,
    /// Fee hitting a prescribed stopping-time variance (`inverse.kappa0`).
    Var,
    /// Fee minimizing E(tau - t0)^2 (`inverse.t0`).
    L2,
    /// Fee minimizing the deviation/revenue trade-off
    /// (`inverse.gamma1/gamma2/t0/utility/rho`).
    Mixed,
    /// Maximum-likelihood fee from a sample file (`inverse.samples`).
    KlFit,
}

/// Error with its process exit code.
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
    pub fn config(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }
    pub fn design(message: impl Into<String>) -> Self {
        Self::new(5, message)
    }
    pub fn from_config_err(e: CoreError) -> Self {
        Self::new(2, e.to_string())
    }
    fn from_solver_err(e: CoreError) -> Self {
        Self::new(3, e.to_string())
    }
    fn from_sim_err(e: CoreError) -> Self {
        match e {
            CoreError::Validation { .. } => Self::new(4, e.to_string()),
            other => Self::from_solver_err(other),
        }
    }
    fn from_design_err(e: CoreError) -> Self {
        Self::new(5, e.to_string())
    }
    fn from_fpt_err(e: CoreError) -> Self {
        Self::new(2, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_ref(), &cli.set)?;
    let dispatch = || dispatch(cli, &config);
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("cannot build thread pool: {e}")))?;
            pool.install(dispatch)
        }
        None => dispatch(),
    }
}

fn dispatch(cli: &Cli, config: &RunConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::Roots => cmd_roots(config),
        Command::SolveNce1 => cmd_solve_nce1(config),
        Command::SolveNce2 => cmd_solve_nce2(config),
        Command::Simulate => cmd_simulate(config),
        Command::NashGap => cmd_nash_gap(config),
        Command::Fpt { op } => cmd_fpt(config, op),
        Command::Inverse { target } => cmd_inverse(config, target),
    }
}

#[derive(Serialize)]
struct RootsReport {
    k1: f64,
    k2: f64,
    a_prime: f64,
    k_min: f64,
    beta_gt_alpha: bool,
    inverse_design_feasible: bool,
    warnings: Vec<String>,
}

fn cmd_roots(config: &RunConfig) -> Result<(), CliError> {
    let params = config.market_rates()?;
    let roots = params.characteristic_roots();
    let a_prime = params.a_prime();
    let mut warnings = Vec::new();
    if a_prime >= 0.0 {
        warnings.push("inverse-design infeasible (a' >= 0): requires sigma^2/2 < alpha".to_owned());
    }
    let report = RootsReport {
        k1: roots.k1,
        k2: roots.k2,
        a_prime,
        k_min: (roots.k2 - 1.0) / roots.k2,
        beta_gt_alpha: params.beta > params.alpha,
        inverse_design_feasible: a_prime < 0.0,
        warnings,
    };
    Emitter { command: "roots", config }.record(&report)
}

#[derive(Serialize)]
struct Nce1Report {
    #[serde(flatten)]
    solution: NceSolution1,
    threshold_b_prime: f64,
    hit_prob: f64,
}

fn cmd_solve_nce1(config: &RunConfig) -> Result<(), CliError> {
    let params = config.market_full()?;
    let solution = solve_theta_bar(&params).map_err(CliError::from_solver_err)?;
    let rule = stopping_rule1(&solution, &params).map_err(CliError::from_solver_err)?;
    let report = Nce1Report {
        solution,
        threshold_b_prime: rule.law.b_prime,
        hit_prob: rule.law.hit_prob(),
    };
    Emitter { command: "solve-nce1", config }.record(&report)
}

fn cmd_solve_nce2(config: &RunConfig) -> Result<(), CliError> {
    let params = config.market_full()?;
    let profit = config.profit()?;
    let solution = solve_system2(&profit, &params).map_err(CliError::from_solver_err)?;
    Emitter { command: "solve-nce2", config }.record(&solution)
}

fn deviation_grid_for(
    config: &RunConfig,
    params: &MarketParams,
    sol: Option<&NceSolution1>,
    default_points: Option<usize>,
) -> Result<Vec<f64>, CliError> {
    let s = config.sim_section()?;
    if let Some(grid) = &s.deviation_grid {
        return Ok(grid.clone());
    }
    let points = s.deviation_points.or(default_points);
    match (points, sol) {
        (Some(n), Some(sol)) => Ok(default_deviation_grid(params.x0, sol.x_star, n)),
        (Some(_), None) => Err(CliError::config(
            "deviation_points needs the sale game (problem I) to anchor the grid at x*",
        )),
        (None, _) => Ok(Vec::new()),
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<(), CliError> {
    let params = config.market_full()?;
    let report = match config.problem()? {
        Problem::I => {
            let sol = solve_theta_bar(&params).map_err(CliError::from_solver_err)?;
            let grid = deviation_grid_for(config, &params, Some(&sol), None)?;
            let cfg = config.sim_config(grid)?;
            simulate_population_i(&params, &sol, &cfg).map_err(CliError::from_sim_err)?
        }
        Problem::II => {
            let profit = config.profit()?;
            let grid = deviation_grid_for(config, &params, None, None)?;
            let cfg = config.sim_config(grid)?;
            let t_max = config.sim_section()?.t_max.unwrap_or(PATH_T_MAX);
            simulate_population_ii(&params, &profit, &cfg, t_max).map_err(CliError::from_sim_err)?
        }
    };
    Emitter { command: "simulate", config }.record(&report)
}

#[derive(Serialize)]
struct GapRecord {
    n_agents: usize,
    gap: f64,
    se: Option<f64>,
    slope: Option<f64>,
}

#[derive(Serialize)]
struct GapSweepReport {
    records: Vec<GapRecord>,
    slope: Option<f64>,
    se_reliable: bool,
}

fn cmd_nash_gap(config: &RunConfig) -> Result<(), CliError> {
    let params = config.market_full()?;
    if config.problem()? != Problem::I {
        return Err(CliError::config("nash-gap measures the sale game; set sim.problem = \"I\""));
    }
    let s = config.sim_section()?;
    let sweep = s
        .n_sweep
        .clone()
        .or_else(|| s.n_agents.map(|n| vec![n]))
        .ok_or_else(|| CliError::config("missing field `sim.n_sweep` (or `sim.n_agents`)"))?;
    let sol = solve_theta_bar(&params).map_err(CliError::from_solver_err)?;
    let grid = deviation_grid_for(config, &params, Some(&sol), Some(50))?;
    if grid.is_empty() {
        return Err(CliError::config("nash-gap needs `sim.deviation_grid` or `sim.deviation_points`"));
    }

    let mut estimates: Vec<(usize, GapEstimate)> = Vec::new();
    for &n_agents in &sweep {
        let cfg = mfos_core::sim::SimConfig {
            n_agents,
            n_reps: s.n_reps,
            seed: s.seed,
            deviation_grid: grid.clone(),
            problem: Problem::I,
        };
        let est = epsilon_nash_gap(&params, &sol, &cfg).map_err(CliError::from_sim_err)?;
        estimates.push((n_agents, est));
    }

    // log-log least squares over strictly positive gaps
    let slope = if estimates.len() >= 2 && estimates.iter().all(|(_, e)| e.gap > 0.0) {
        let xs: Vec<f64> = estimates.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let ys: Vec<f64> = estimates.iter().map(|(_, e)| e.gap.ln()).collect();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        Some(sxy / sxx)
    } else {
        None
    };

    let records: Vec<GapRecord> = estimates
        .iter()
        .map(|&(n_agents, e)| GapRecord { n_agents, gap: e.gap, se: e.se, slope })
        .collect();
    let report = GapSweepReport { records, slope, se_reliable: s.n_reps >= 2 };

    let mut table = Table::new(vec!["n_agents", "gap", "se", "slope"]);
    for r in &report.records {
        table.push(vec![
            r.n_agents.to_string(),
            Table::cell(r.gap),
            Table::cell_opt(r.se),
            Table::cell_opt(r.slope),
        ]);
    }
    Emitter { command: "nash-gap", config }.table(table, &report)
}

#[derive(Serialize)]
struct LawReport {
    a_prime: f64,
    b_prime: f64,
    hit_prob: f64,
    ig: Option<IgParams>,
}

fn law_for(config: &RunConfig, x_star: f64, direction: DirectionArg) -> Result<HittingLaw, CliError> {
    let params = config.market_full()?;
    HittingLaw::for_threshold(&params, x_star, direction.into()).map_err(CliError::from_fpt_err)
}

fn cmd_fpt(config: &RunConfig, op: &FptOp) -> Result<(), CliError> {
    match *op {
        FptOp::Law { x_star, direction } => {
            let law = law_for(config, x_star, direction)?;
            let report = LawReport {
                a_prime: law.a_prime,
                b_prime: law.b_prime,
                hit_prob: law.hit_prob(),
                ig: law.ig_params().ok(),
            };
            Emitter { command: "fpt law", config }.record(&report)
        }
        FptOp::Moments { x_star, direction } => {
            let law = law_for(config, x_star, direction)?;
            #[derive(Serialize)]
            struct Moments {
                mean: f64,
                var: f64,
            }
            let report = Moments {
                mean: law.mean().map_err(CliError::from_fpt_err)?,
                var: law.var().map_err(CliError::from_fpt_err)?,
            };
            Emitter { command: "fpt moments", config }.record(&report)
        }
        FptOp::Pdf { x_star, direction, t_max, points } => {
            if points == 0 || t_max <= 0.0 || t_max.is_nan() {
                return Err(CliError::config("fpt pdf needs points > 0 and t_max > 0"));
            }
            let law = law_for(config, x_star, direction)?;
            #[derive(Serialize)]
            struct PdfPoint {
                t: f64,
                density: f64,
            }
            let rows: Vec<PdfPoint> = (1..=points)
                .map(|i| {
                    let t = t_max * i as f64 / points as f64;
                    PdfPoint { t, density: law.density(t) }
                })
                .collect();
            let mut table = Table::new(vec!["t", "density"]);
            for p in &rows {
                table.push(vec![Table::cell(p.t), Table::cell(p.density)]);
            }
            Emitter { command: "fpt pdf", config }.table(table, &rows)
        }
        FptOp::Sample { x_star, direction, n, seed } => {
            let law = law_for(config, x_star, direction)?;
            let seed = seed.or_else(|| config.sim.as_ref().map(|s| s.seed)).unwrap_or(0);
            let mut rng = stream(seed, StreamKind::Sampling, 0, 0);
            let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            // sample-file format: one value per line, '#' comments
            let mut text = format!(
                "# mfos fpt sample: x_star = {x_star}, seed = {seed}, n = {n}\n"
            );
            for d in &draws {
                if d.is_finite() {
                    text.push_str(&format!("{d:.16e}\n"));
                } else {
                    text.push_str("inf\n");
                }
            }
            match output::resolve_path(config) {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display()))),
                None => {
                    use std::io::Write;
                    std::io::stdout()
                        .lock()
                        .write_all(text.as_bytes())
                        .map_err(|e| CliError::config(format!("cannot write stdout: {e}")))
                }
            }
        }
    }
}

fn design_context(config: &RunConfig) -> Result<DesignContext, CliError> {
    let params = config.market_full()?;
    let ctx = DesignContext::new(params).map_err(CliError::from_design_err)?;
    match config.inverse.as_ref().and_then(|i| i.k_max) {
        Some(k_max) => ctx.with_k_max(k_max).map_err(CliError::from_design_err),
        None => Ok(ctx),
    }
}

fn achieved_moments(ctx: &DesignContext, k: f64) -> (Option<f64>, Option<f64>) {
    match ctx.law_from_fee(k) {
        Ok(law) => (law.mean().ok(), law.var().ok()),
        Err(_) => (None, None),
    }
}

fn cmd_inverse(config: &RunConfig, target: &InverseTarget) -> Result<(), CliError> {
    let ctx = design_context(config)?;
    let inv = config.inverse_section()?;
    let require = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::config(format!("missing field `inverse.{name}`")))
    };

    let (command, result) = match target {
        InverseTarget::Mean => {
            let mu0 = require(inv.mu0, "mu0")?;
            let k = ctx.fee_for_target_mean(mu0).map_err(CliError::from_design_err)?;
            let (mean, var) = achieved_moments(&ctx, k);
            (
                "inverse mean",
                InverseDesignResult {
                    target: "mean".to_owned(),
                    k,
                    k_min: ctx.k_min,
                    boundary: false,
                    objective: None,
                    achieved_mean: mean,
                    achieved_variance: var,
                    diagnostics: None,
                    kl: None,
                    note: None,
                },
            )
        }
        InverseTarget::Var => {
            let kappa0 = require(inv.kappa0, "kappa0")?;
            let k = ctx.fee_for_target_variance(kappa0).map_err(CliError::from_design_err)?;
            let (mean, var) = achieved_moments(&ctx, k);
            (
                "inverse var",
                InverseDesignResult {
                    target: "variance".to_owned(),
                    k,
                    k_min: ctx.k_min,
                    boundary: false,
                    objective: None,
                    achieved_mean: mean,
                    achieved_variance: var,
                    diagnostics: None,
                    kl: None,
                    note: None,
                },
            )
        }
        InverseTarget::L2 => {
            let t0 = require(inv.t0, "t0")?;
            let fee = ctx.fee_for_l2(t0).map_err(CliError::from_design_err)?;
            let k_eval = if fee.boundary { ctx.k_min * (1.0 + 1e-12) } else { fee.k };
            let objective = ctx.l2_deviation(k_eval, t0).map_err(CliError::from_design_err)?;
            let (mean, var) = achieved_moments(&ctx, k_eval);
            let note = fee.boundary.then(|| {
                format!("trivial branch: t0 <= 1/(2 a'^2) = {}", 1.0 / (2.0 * ctx.a_prime * ctx.a_prime))
            });
            (
                "inverse l2",
                InverseDesignResult {
                    target: "l2".to_owned(),
                    k: fee.k,
                    k_min: ctx.k_min,
                    boundary: fee.boundary,
                    objective: Some(objective),
                    achieved_mean: mean,
                    achieved_variance: var,
                    diagnostics: None,
                    kl: None,
                    note,
                },
            )
        }
        InverseTarget::Mixed => {
            let spec = MixedObjectiveSpec {
                gamma1: require(inv.gamma1, "gamma1")?,
                gamma2: require(inv.gamma2, "gamma2")?,
                t0: require(inv.t0, "t0")?,
                utility: match inv.utility.as_deref().unwrap_or("linear") {
                    "linear" => Utility::Linear,
                    "power" => Utility::Power { rho: require(inv.rho, "rho")? },
                    other => {
                        return Err(CliError::config(format!(
                            "unknown utility `{other}` (expected linear|power)"
                        )))
                    }
                },
            };
            spec.validate().map_err(CliError::from_config_err)?;
            let sol = ctx.solve_mixed(&spec).map_err(CliError::from_design_err)?;
            let k_eval = if sol.boundary { ctx.k_min * (1.0 + 1e-12) } else { sol.k };
            let (mean, var) = achieved_moments(&ctx, k_eval);
            (
                "inverse mixed",
                InverseDesignResult {
                    target: "mixed".to_owned(),
                    k: sol.k,
                    k_min: ctx.k_min,
                    boundary: sol.boundary,
                    objective: Some(sol.objective),
                    achieved_mean: mean,
                    achieved_variance: var,
                    diagnostics: sol.diagnostics,
                    kl: None,
                    note: None,
                },
            )
        }
        InverseTarget::KlFit => {
            let path = inv
                .samples
                .as_ref()
                .ok_or_else(|| CliError::config("missing field `inverse.samples`"))?;
            let samples = config::read_samples(path)?;
            let fit = ctx.fit_fee_mle(&samples).map_err(CliError::from_design_err)?;
            let (mean, var) = achieved_moments(&ctx, fit.k_hat);
            (
                "inverse kl-fit",
                InverseDesignResult {
                    target: "kl-fit".to_owned(),
                    k: fit.k_hat,
                    k_min: ctx.k_min,
                    boundary: false,
                    objective: Some(fit.divergence),
                    achieved_mean: mean,
                    achieved_variance: var,
                    diagnostics: None,
                    kl: Some(fit),
                    note: None,
                },
            )
        }
    };
    Emitter { command, config }.record(&result)
}
