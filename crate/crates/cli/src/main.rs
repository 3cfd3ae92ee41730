mod csv;
mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmp_core::congestion::{classify_scaling, global_monotone, GlobalMonotone, ScalingGrid, ScalingTolerance, UsageGrid};
use pmp_core::monopoly::{local_improvement_probe, partition_comparison, ratio_sweep, Objective, COMPARISON_GRID};
use pmp_core::{DuopolyScenario, MarketScenario};
use scenario::Scenario;
use thiserror::Error;

/// Share of grid points allowed to fail before a run counts as failed.
const FAILURE_BUDGET: f64 = 0.1;
const DEFAULT_A_STEP: f64 = 0.05;
const DEFAULT_DUOPOLY_GRID: usize = 21;
/// Usage spacing of the monotone-preference samplers.
const USAGE_STEP: f64 = 0.05;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Compute(_) => 3,
        }
    }
}

impl From<pmp_core::PmpError> for CliError {
    fn from(e: pmp_core::PmpError) -> Self {
        match e {
            pmp_core::PmpError::InvalidInput(m) => Self::Input(m),
            other => Self::Compute(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "pmp", version, about = "Multi-class congestion pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scaling and monotone-preference verdicts for the scenario's model.
    Classify(Common),
    /// Best two-class value for each price ratio p2 = a p1.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "profit")]
        objective: ObjectiveArg,
    },
    /// One class against the same capacity split into identically priced classes.
    Partition(Common),
    /// Differentiated-pricing improvement from identical-price equilibria.
    Probe(Common),
    /// Provider profits along provider I's price when provider II best-responds.
    Duopoly(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size: ratios for sweep, prices for partition/probe/duopoly.
    #[arg(long)]
    grid: Option<usize>,
    /// Classification tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Welfare,
    Profit,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Welfare => Objective::Welfare,
            ObjectiveArg::Profit => Objective::Profit,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Classify(c) | Command::Partition(c) | Command::Probe(c) | Command::Duopoly(c) => c,
        Command::Sweep { common, .. } => common,
    };
    if common.grid.is_some_and(|n| n < 2) {
        return Err(CliError::Input("--grid must be at least 2".into()));
    }
    if common.tol.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
        return Err(CliError::Input("--tol must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| CliError::Compute(format!("thread pool: {e}")))?;
    let text = fs::read_to_string(&common.scenario)
        .map_err(|e| CliError::Input(format!("{}: {e}", common.scenario.display())))?;
    let sc = scenario::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", common.scenario.display())))?;

    let (name, body) = match &cli.command {
        Command::Classify(c) => ("classify", classify(&sc, c)?),
        Command::Sweep { common, objective } => {
            let objective = Objective::from(*objective);
            let name = match objective {
                Objective::Profit => "sweep_profit",
                Objective::Welfare => "sweep_welfare",
            };
            (name, sweep(&sc, common, objective)?)
        }
        Command::Partition(c) => ("partition", partition(&sc, c)?),
        Command::Probe(c) => ("probe", probe(&sc, c)?),
        Command::Duopoly(c) => ("duopoly", duopoly(&sc, c)?),
    };
    emit(common.out.as_deref(), name, &body)
}

fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<(), CliError> {
    match out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| CliError::Compute(format!("stdout: {e}")))
        }
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn market(sc: &Scenario, caps: Vec<f64>) -> Result<MarketScenario, CliError> {
    Ok(MarketScenario::new(sc.value, caps, sc.model, sc.dist.clone())?)
}

fn require<T: Clone>(v: &Option<T>, key: &str, cmd: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Input(format!("`{cmd}` needs `{key}` in the scenario")))
}

/// Explicit `prices` unless `--grid` is given; otherwise `n` evenly spaced
/// prices on `[0, V]`, or strictly inside it when `interior`.
fn price_grid(sc: &Scenario, common: &Common, default_n: usize, interior: bool) -> Vec<f64> {
    if let (Some(p), None) = (&sc.prices, common.grid) {
        return p.clone();
    }
    let n = common.grid.or(sc.p_grid).unwrap_or(default_n);
    if interior {
        (1..=n).map(|i| sc.value * i as f64 / (n + 1) as f64).collect()
    } else {
        (0..n).map(|i| sc.value * i as f64 / (n - 1) as f64).collect()
    }
}

fn check_budget(failed: usize, total: usize, what: &str) -> Result<(), CliError> {
    if failed as f64 > FAILURE_BUDGET * total as f64 {
        return Err(CliError::Compute(format!("{what}: {failed} of {total} grid points failed")));
    }
    Ok(())
}

fn monotone_summary(g: &GlobalMonotone) -> String {
    match &g.witnesses {
        Some((a, b)) => format!("{} (witnesses {a:?} and {b:?})", g.verdict),
        None => g.verdict.to_string(),
    }
}

fn classify(sc: &Scenario, common: &Common) -> Result<String, CliError> {
    let tol = match common.tol.or(sc.tol) {
        Some(t) => ScalingTolerance { indifferent: t, slack: t },
        None => ScalingTolerance::default(),
    };
    let scaling = classify_scaling(&sc.model, &ScalingGrid::standard(), tol)?;
    let caps = sc.capacities.clone().filter(|c| c.len() >= 2);
    let (grid, restricted) = match &caps {
        Some(c) => (
            Some(global_monotone(&sc.model, c, UsageGrid::default().profiles(&sc.model, c))?),
            Some(global_monotone(&sc.model, c, UsageGrid::level_ordered(USAGE_STEP).profiles(&sc.model, c))?),
        ),
        None => (None, None),
    };
    let mut text = format!("{}: {}", sc.model, scaling.verdict);
    match (&grid, &restricted) {
        (Some(g), Some(r)) => {
            text.push_str(&format!(
                "; monotone: {} (grid sampler); {} (level-ordered sampler)\n",
                monotone_summary(g),
                r.verdict
            ));
        }
        _ => text.push_str("; monotone: n/a (needs two or more capacities)\n"),
    }
    let verdict = |g: &Option<GlobalMonotone>| g.as_ref().map_or(String::new(), |g| g.verdict.to_string());
    let witness = |g: &Option<GlobalMonotone>, first: bool| {
        g.as_ref()
            .and_then(|g| g.witnesses.as_ref())
            .map(|(a, b)| {
                let w = if first { a } else { b };
                w.iter().map(|&q| csv::number(q)).collect::<Vec<_>>().join(";")
            })
            .unwrap_or_default()
    };
    let table = csv::table(
        &["model", "scaling", "max_abs_gap", "monotone_grid", "monotone_restricted", "witness_a", "witness_b"],
        &[vec![
            sc.model.to_string().replace(',', ";"),
            scaling.verdict.to_string(),
            csv::number(scaling.max_abs_gap),
            verdict(&grid),
            verdict(&restricted),
            witness(&grid, true),
            witness(&grid, false),
        ]],
    );
    if common.out.is_some() {
        print!("{text}");
        Ok(table)
    } else {
        Ok(format!("{text}\n{table}"))
    }
}

fn sweep(sc: &Scenario, common: &Common, objective: Objective) -> Result<String, CliError> {
    let caps = require(&sc.capacities, "capacities", "sweep")?;
    if caps.len() != 2 {
        return Err(CliError::Input("`sweep` needs exactly two capacities".into()));
    }
    let a_grid = match common.grid {
        Some(n) => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        None => sc
            .a_grid
            .clone()
            .unwrap_or_else(|| (0..=20).map(|i| i as f64 * DEFAULT_A_STEP).collect()),
    };
    if a_grid.is_empty() {
        return Err(CliError::Input("empty a_grid".into()));
    }
    let curve = ratio_sweep(&market(sc, caps)?, &a_grid, objective)?;
    check_budget(curve.failures.len(), a_grid.len(), "sweep")?;
    let mut points = curve.points.iter().peekable();
    let rows: Vec<Vec<String>> = a_grid
        .iter()
        .map(|&a| match points.next_if(|p| p.a == a) {
            Some(p) => vec![
                csv::number(a),
                csv::number(p.best_value),
                csv::number(p.argmax_p1),
                csv::number(curve.baseline_single),
            ],
            None => vec![csv::number(a), String::new(), String::new(), csv::number(curve.baseline_single)],
        })
        .collect();
    Ok(csv::table(&["a", "best_value", "argmax_p1", "baseline_single"], &rows))
}

fn partition(sc: &Scenario, common: &Common) -> Result<String, CliError> {
    let caps = require(&sc.capacities, "capacities", "partition")?;
    if caps.len() != 1 {
        return Err(CliError::Input("`partition` needs one base capacity".into()));
    }
    let split = require(&sc.split, "split", "partition")?;
    let base = market(sc, caps)?;
    let prices = price_grid(sc, common, COMPARISON_GRID, false);
    let mut failed = 0;
    let mut rows = Vec::with_capacity(prices.len());
    for &p in &prices {
        match partition_comparison(&base, p, &split) {
            Ok(c) => rows.push(vec![
                csv::number(p),
                csv::number(c.single.welfare),
                csv::number(c.single.profit),
                csv::number(c.partitioned.welfare),
                csv::number(c.partitioned.profit),
            ]),
            Err(pmp_core::PmpError::InvalidInput(m)) => return Err(CliError::Input(m)),
            Err(e) => {
                eprintln!("p = {p}: {e}");
                failed += 1;
                rows.push(vec![csv::number(p), String::new(), String::new(), String::new(), String::new()]);
            }
        }
    }
    check_budget(failed, prices.len(), "partition")?;
    Ok(csv::table(&["p", "S_single", "pi_single", "S_split", "pi_split"], &rows))
}

fn probe(sc: &Scenario, common: &Common) -> Result<String, CliError> {
    let caps = require(&sc.capacities, "capacities", "probe")?;
    if caps.len() != 2 {
        return Err(CliError::Input("`probe` needs exactly two capacities".into()));
    }
    let m = market(sc, caps)?;
    let delta = sc.delta.unwrap_or(1e-3);
    let prices = price_grid(sc, common, COMPARISON_GRID, true);
    let mut failed = 0;
    let mut rows = Vec::with_capacity(prices.len());
    for &p in &prices {
        match local_improvement_probe(&m, p, delta) {
            Ok(r) => rows.push(vec![
                csv::number(p),
                csv::number(r.direction * r.delta),
                csv::number(r.d_welfare),
                csv::number(r.d_profit),
                format!("{:?}", r.case),
            ]),
            Err(e) => {
                eprintln!("p = {p}: {e}");
                failed += 1;
                rows.push(vec![csv::number(p), String::new(), String::new(), String::new(), String::new()]);
            }
        }
    }
    check_budget(failed, prices.len(), "probe")?;
    Ok(csv::table(&["p", "delta", "dS", "dpi", "case"], &rows))
}

fn duopoly(sc: &Scenario, common: &Common) -> Result<String, CliError> {
    let c_i = require(&sc.capacity_i, "capacity_i", "duopoly")?;
    let c_ii = require(&sc.capacity_ii, "capacity_ii", "duopoly")?;
    let d = DuopolyScenario::new(sc.value, sc.model, sc.dist.clone(), c_i, c_ii)?;
    let grid = price_grid(sc, common, DEFAULT_DUOPOLY_GRID, false);
    let rows = d.duopoly_curve(&grid, &sc.modes);
    let failed = rows.iter().filter(|r| !r.errors.is_empty()).count();
    for r in &rows {
        for e in &r.errors {
            eprintln!("pI = {}: {e}", r.p_i);
        }
    }
    check_budget(failed, rows.len(), "duopoly")?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                csv::number(r.p_i),
                csv::optional(r.profit_i),
                csv::optional(r.profit_ii_one),
                csv::optional(r.profit_ii_two),
            ]
        })
        .collect();
    Ok(csv::table(&["pI", "piI", "piII_1class", "piII_2class"], &cells))
}
