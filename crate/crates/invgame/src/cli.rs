//! Command-line front end. Each subcommand loads a scenario, calls one
//! library operation and writes a [`RunReport`] or a CSV table.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use invgame_core::market::ConditionReport;
use invgame_core::nash::{residuals, ManufacturerResponse, UniquenessDiagnostic};
use invgame_core::oracle::{exact_profit, grid_nash, grid_stackelberg, GridPoint, GridStackelberg};
use invgame_core::sim::{simulate, SimSummary};
use invgame_core::{
    best_response_manufacturer, best_response_retailer, compare_games, nash_solve, stackelberg_solve,
    uniqueness_diagnostic, EquilibriumReport, GameComparison, NashOptions, SampleSet, SolveError,
    StackelbergOptions, StackelbergReport, StockVector,
};
use serde::Serialize;

use crate::export;
use crate::report::RunReport;
use crate::scenario::{Scenario, ScenarioError, DEFAULT_GRID_POINTS};
use crate::verify::{self, CriterionReport, Settings};

#[derive(Debug, Parser)]
#[command(name = "invgame", version, about = "Base-stock competition between a manufacturer and its retailers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Monte Carlo draws per solve.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Solver tolerance; defaults to 1e-3 of the largest stock ceiling.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Grid points for the leader scan or the exhaustive oracle.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for row-parallel work. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a scenario and evaluate conditions C1, C2 and C3.
    Check { scenario: PathBuf },
    /// Best responses of every channel (or one) to the given stocks.
    BestResponse {
        scenario: PathBuf,
        /// Comma-separated stocks, manufacturer first.
        #[arg(long, value_delimiter = ',', required = true)]
        stocks: Vec<f64>,
        #[arg(long)]
        channel: Option<usize>,
    },
    /// Simultaneous-move equilibrium.
    Nash {
        scenario: PathBuf,
        /// Also estimate the symmetrised Jacobian's largest eigenvalue.
        #[arg(long)]
        diagnose: bool,
    },
    /// Manufacturer-led equilibrium.
    Stackelberg { scenario: PathBuf },
    /// Both equilibria side by side.
    Compare { scenario: PathBuf },
    /// Period-by-period simulation; defaults to the Nash stocks.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        stocks: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
    },
    /// Run the built-in property suite.
    Verify,
    /// Exhaustive grid search on a discrete scenario.
    Oracle { scenario: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Solve(#[from] SolveError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Process exit status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some verification property failed.
    Failed,
    NotConverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failed => 1,
            Status::NotConverged => 3,
        }
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Solve(SolveError::FollowerDiverged { .. }) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Serialize)]
struct CheckResult {
    valid: bool,
    conditions: ConditionReport,
    manufacturer_fractile: f64,
    retailer_fractiles: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct BestResponseResult {
    stocks: StockVector,
    manufacturer: Option<ManufacturerResponse>,
    /// `(channel, best response)` for each requested retailer.
    retailers: Vec<(usize, f64)>,
}

#[derive(Debug, Serialize)]
struct NashResult {
    equilibrium: EquilibriumReport,
    conditions: ConditionReport,
    diagnostic: Option<UniquenessDiagnostic>,
}

#[derive(Debug, Serialize)]
struct SimResult {
    stocks: StockVector,
    horizon: usize,
    summary: SimSummary,
    /// Per channel, mean and standard error over each half of the run.
    halves: Vec<[(f64, f64); 2]>,
}

#[derive(Debug, Serialize)]
struct OracleResult {
    grids: Vec<Vec<f64>>,
    nash: Vec<GridPoint>,
    stackelberg: Option<GridStackelberg>,
    stackelberg_profits: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct VerifyResult {
    passed: bool,
    criteria: Vec<CriterionReport>,
}

struct Run<'a> {
    cli: &'a Cli,
    command: &'static str,
    digest: Option<String>,
    started: Instant,
}

impl Run<'_> {
    fn sink(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.cli.out {
            Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn json<T: Serialize>(&self, results: T) -> Result<(), CliError> {
        let report = RunReport {
            command: self.command.to_string(),
            scenario_digest: self.digest.clone(),
            seed: self.cli.seed,
            samples: self.cli.samples,
            results,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let mut out = self.sink()?;
        out.write_all(report.to_json().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    fn emit<T: Serialize>(
        &self,
        results: T,
        csv: impl FnOnce(&mut dyn Write, &T) -> csv::Result<()>,
    ) -> Result<(), CliError> {
        match self.cli.format {
            Format::Json => self.json(results),
            Format::Csv => {
                let mut out = self.sink()?;
                csv(&mut out, &results)?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

fn samples(cli: &Cli, sc: &Scenario) -> Result<SampleSet, CliError> {
    Ok(sc.model.sample(cli.samples, cli.seed).map_err(ScenarioError::from)?)
}

fn stock_arg(sc: &Scenario, v: &[f64]) -> Result<StockVector, CliError> {
    if v.len() != sc.cfg.channels() {
        return Err(CliError::Usage(format!("--stocks has {} entries, expected {}", v.len(), sc.cfg.channels())));
    }
    StockVector::new(v.to_vec()).map_err(|_| CliError::Usage("--stocks must be finite and nonnegative".into()))
}

fn check_tol(cli: &Cli) -> Result<(), CliError> {
    match cli.tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(CliError::Usage("--tol must be positive".into())),
        _ if cli.samples == 0 => Err(CliError::Usage("--samples must be positive".into())),
        _ => Ok(()),
    }
}

fn stackelberg_opts(cli: &Cli) -> StackelbergOptions {
    let mut o = StackelbergOptions { tol: cli.tol, ..StackelbergOptions::default() };
    if let Some(g) = cli.grid {
        o.grid_points = g;
    }
    o
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Status, CliError> {
    configure_threads(cli.threads)?;
    check_tol(cli)?;
    let started = Instant::now();
    let load = |p: &PathBuf| Scenario::load(p);
    let mut status = Status::Success;
    match &cli.command {
        Command::Check { scenario } => {
            let sc = load(scenario)?;
            let run = Run { cli, command: "check", digest: Some(sc.digest.clone()), started };
            let result = CheckResult {
                valid: true,
                conditions: sc.cfg.conditions(),
                manufacturer_fractile: sc.cfg.manufacturer_fractile(),
                retailer_fractiles: (1..=sc.cfg.n).map(|i| sc.cfg.retailer_fractile(i)).collect(),
            };
            run.emit(result, |w, r| export::write_conditions(w, &r.conditions))?;
        }
        Command::BestResponse { scenario, stocks, channel } => {
            let sc = load(scenario)?;
            let s = stock_arg(&sc, stocks)?;
            if let Some(j) = channel {
                if *j > sc.cfg.n {
                    return Err(CliError::Usage(format!("--channel {j} out of range 0..={}", sc.cfg.n)));
                }
            }
            let data = samples(cli, &sc)?;
            let wanted = |j: usize| channel.is_none_or(|c| c == j);
            let manufacturer = if wanted(0) {
                Some(best_response_manufacturer(&sc.cfg, &sc.model, &data, &s)?)
            } else {
                None
            };
            let retailers = (1..=sc.cfg.n)
                .filter(|&i| wanted(i))
                .map(|i| Ok((i, best_response_retailer(&sc.cfg, &sc.model, &data, &s, i)?)))
                .collect::<Result<Vec<_>, SolveError>>()?;
            let run = Run { cli, command: "best-response", digest: Some(sc.digest.clone()), started };
            run.emit(BestResponseResult { stocks: s, manufacturer, retailers }, |w, r| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["channel", "best_response"])?;
                if let Some(m) = &r.manufacturer {
                    w.write_record(["0".to_string(), m.level.to_string()])?;
                }
                for (i, v) in &r.retailers {
                    w.write_record([i.to_string(), v.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
        Command::Nash { scenario, diagnose } => {
            let sc = load(scenario)?;
            let data = samples(cli, &sc)?;
            let opts = NashOptions { tol: cli.tol, ..NashOptions::default() };
            let equilibrium = nash_solve(&sc.cfg, &sc.model, &data, &opts)?;
            if !equilibrium.converged {
                status = Status::NotConverged;
            }
            let diagnostic = if *diagnose {
                Some(uniqueness_diagnostic(&sc.cfg, &sc.model, &data, &equilibrium.stocks)?)
            } else {
                None
            };
            debug_assert_eq!(residuals(&sc.cfg, &data, &equilibrium.stocks), equilibrium.residuals);
            let run = Run { cli, command: "nash", digest: Some(sc.digest.clone()), started };
            let result = NashResult { equilibrium, conditions: sc.cfg.conditions(), diagnostic };
            run.emit(result, |w, r| export::write_equilibrium(w, &r.equilibrium))?;
        }
        Command::Stackelberg { scenario } => {
            let sc = load(scenario)?;
            let data = samples(cli, &sc)?;
            let report: StackelbergReport = stackelberg_solve(&sc.cfg, &sc.model, &data, &stackelberg_opts(cli))?;
            let run = Run { cli, command: "stackelberg", digest: Some(sc.digest.clone()), started };
            run.emit(report, |w, r| export::write_curve(w, &r.leader_profit_curve))?;
        }
        Command::Compare { scenario } => {
            let sc = load(scenario)?;
            let data = samples(cli, &sc)?;
            let opts = NashOptions { tol: cli.tol, ..NashOptions::default() };
            let cmp: GameComparison = compare_games(&sc.cfg, &sc.model, &data, &opts, &stackelberg_opts(cli))?;
            if !cmp.nash.converged {
                status = Status::NotConverged;
            }
            let run = Run { cli, command: "compare", digest: Some(sc.digest.clone()), started };
            run.emit(cmp, |w, r| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["channel", "nash_stock", "stackelberg_stock", "nash_profit", "stackelberg_profit"])?;
                let st = r.stackelberg.stocks();
                let mut sp = vec![r.stackelberg.leader_profit];
                sp.extend(r.stackelberg.follower_profits.iter().copied());
                for j in 0..st.len() {
                    w.write_record([
                        j.to_string(),
                        r.nash.stocks[j].to_string(),
                        st[j].to_string(),
                        r.nash.profits[j].value.to_string(),
                        sp[j].value.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
        Command::Simulate { scenario, stocks, horizon } => {
            let sc = load(scenario)?;
            if *horizon == 0 {
                return Err(CliError::Usage("--horizon must be positive".into()));
            }
            let s = match stocks {
                Some(v) => stock_arg(&sc, v)?,
                None => {
                    let data = samples(cli, &sc)?;
                    let opts = NashOptions { tol: cli.tol, ..NashOptions::default() };
                    let eq = nash_solve(&sc.cfg, &sc.model, &data, &opts)?;
                    if !eq.converged {
                        status = Status::NotConverged;
                    }
                    eq.stocks
                }
            };
            let trace = simulate(&sc.cfg, &sc.model, &s, *horizon, cli.seed)?;
            let run = Run { cli, command: "simulate", digest: Some(sc.digest.clone()), started };
            match cli.format {
                Format::Csv => {
                    let mut out = run.sink()?;
                    export::write_trace(&mut out, &trace)?;
                    out.flush()?;
                }
                Format::Json => run.json(SimResult {
                    stocks: s,
                    horizon: *horizon,
                    halves: (0..trace.channels).map(|j| trace.halves(j)).collect(),
                    summary: trace.summary,
                })?,
            }
        }
        Command::Verify => {
            let settings = Settings { samples: cli.samples, seed: cli.seed };
            let criteria = verify::run_all(&settings);
            for c in &criteria {
                eprintln!("{c}");
            }
            let passed = criteria.iter().all(|c| c.passed);
            if !passed {
                status = Status::Failed;
            }
            let run = Run { cli, command: "verify", digest: None, started };
            run.emit(VerifyResult { passed, criteria }, |w, r| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["id", "name", "passed", "checks", "failures", "detail"])?;
                for c in &r.criteria {
                    w.write_record([
                        c.id.to_string(),
                        c.name.to_string(),
                        c.passed.to_string(),
                        c.checks.to_string(),
                        c.failures.to_string(),
                        c.detail.clone(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
        Command::Oracle { scenario } => {
            let sc = load(scenario)?;
            let ds = sc.discrete(cli.grid.unwrap_or(DEFAULT_GRID_POINTS))?;
            let nash = grid_nash(&ds);
            let stackelberg = grid_stackelberg(&ds).ok();
            let stackelberg_profits = stackelberg.as_ref().map(|g| {
                let mut s = vec![g.leader_stock];
                s.extend_from_slice(&g.follower_stocks);
                exact_profit(&ds, &s)
            });
            let run = Run { cli, command: "oracle", digest: Some(sc.digest.clone()), started };
            let result = OracleResult { grids: ds.grids.clone(), nash, stackelberg, stackelberg_profits };
            run.emit(result, |w, r| {
                let mut w = csv::Writer::from_writer(w);
                let m = r.grids.len();
                let mut header = vec!["kind".to_string()];
                header.extend((0..m).map(|j| format!("stock_{j}")));
                header.extend((0..m).map(|j| format!("profit_{j}")));
                w.write_record(&header)?;
                for g in &r.nash {
                    let mut row = vec!["nash".to_string()];
                    row.extend(g.stocks.iter().chain(&g.profits).map(f64::to_string));
                    w.write_record(&row)?;
                }
                if let (Some(g), Some(p)) = (&r.stackelberg, &r.stackelberg_profits) {
                    let mut row = vec!["stackelberg".to_string(), g.leader_stock.to_string()];
                    row.extend(g.follower_stocks.iter().chain(p).map(f64::to_string));
                    w.write_record(&row)?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    Ok(status)
}
