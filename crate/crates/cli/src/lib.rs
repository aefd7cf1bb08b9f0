//! `robustmatch` command line: robust McNemar and z tests on a unit CSV, exact
//! null distributions of the extremal McNemar statistics, and the simulation
//! harness. Every command writes `report.json` plus CSV side tables into
//! `--out`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use robustmatch::ilp::SolveOptions;
use robustmatch::io::{format_f64, load_config, parse_unit_csv, write_csv, write_json, ConfigFile, Report, RunConfig};
use robustmatch::mcnemar::{robust_mcnemar_binned, robust_mcnemar_general, Convention, MSpec, McNemarResult};
use robustmatch::nulldist::{estimate_params, exact_range_pmf, ConvMethod, Regime, StratumParams};
use robustmatch::sim::{run_experiment, MethodSummary, SimConfig};
use robustmatch::ztest::{robust_z, ZOptions, ZResult, ZSide};
use robustmatch::{stratify, Dataset, MatchAssignment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Worker threads for parallel solves; unset means one per core.
pub const THREADS_ENV: &str = "ROBUSTMATCH_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] robustmatch::Error),
    #[error("{0}")]
    Usage(String),
    #[error("z bounds did not close to eps on the {side} side (gap {gap:e})")]
    NotConverged { side: &'static str, gap: f64 },
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(robustmatch::Error::Infeasible(_)) => EXIT_INFEASIBLE,
            CliError::Core(robustmatch::Error::BudgetExceeded { .. }) | CliError::NotConverged { .. } => EXIT_BUDGET,
            _ => EXIT_ERROR,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "robustmatch", version, about = "Robust matched-pairs hypothesis tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extremal test statistics over all admissible match assignments.
    Test {
        #[command(subcommand)]
        test: TestCommand,
    },
    /// Exact joint null distribution of the extremal McNemar statistics.
    Nulldist(NulldistArgs),
    /// Stratified simulation comparing the robust test with selection baselines.
    Simulate(SimulateArgs),
}

#[derive(Subcommand, Debug)]
enum TestCommand {
    Mcnemar(McnemarArgs),
    Z(ZArgs),
}

#[derive(Args, Debug)]
struct Input {
    /// Unit CSV: id,treatment,outcome,<covariates...>
    #[arg(long)]
    data: PathBuf,
    /// Constraint configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "robustmatch-out")]
    out: PathBuf,
    /// Branch-and-bound node cap per integer program.
    #[arg(long, default_value_t = 1_000_000)]
    node_limit: usize,
    /// Wall-clock cap per integer program, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    /// (B - C - 1) / sqrt(B + C)
    M,
    /// (B - C - 1) / sqrt(B + C + 1)
    M1,
}

#[derive(Args, Debug)]
struct McnemarArgs {
    #[command(flatten)]
    input: Input,
    /// Discordant count B + C, or `sweep` for the largest feasible one.
    #[arg(long, default_value = "sweep")]
    m: String,
    #[arg(long, value_enum, default_value = "m")]
    convention: ConventionArg,
    /// Use the closed-form path for "every stratum fully matched" (needs
    /// `binning` in the config; ignores --m and --convention).
    #[arg(long)]
    binned: bool,
}

#[derive(Args, Debug)]
struct ZArgs {
    #[command(flatten)]
    input: Input,
    /// Number of pairs.
    #[arg(long = "M")]
    pairs: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Initial grid size.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 4)]
    refine: usize,
    #[arg(long, default_value_t = 60)]
    max_iter: usize,
    /// Pin the squared-difference sum to this value.
    #[arg(long)]
    pin: Option<f64>,
    /// Leave the per-iteration grid trace out of the report.
    #[arg(long)]
    no_trace: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegimeArg {
    Sharp,
    Conditional,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Direct,
    Fft,
}

#[derive(Args, Debug)]
struct NulldistArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// Conditional regime: one outcome probability shared by both groups.
    #[arg(long)]
    pooled: bool,
    #[arg(long, value_enum, default_value = "fft")]
    method: MethodArg,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    scenario: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Make treated and control outcome probabilities differ.
    #[arg(long)]
    satt: bool,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 9)]
    stratum_size: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "robustmatch-out")]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("robustmatch: {e}");
            e.exit_code()
        }
    }
}

fn threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = threads()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    pool.install(|| match cli.command {
        Command::Test { test: TestCommand::Mcnemar(a) } => cmd_mcnemar(a, threads),
        Command::Test { test: TestCommand::Z(a) } => cmd_z(a, threads),
        Command::Nulldist(a) => cmd_nulldist(a, threads),
        Command::Simulate(a) => cmd_simulate(a, threads),
    })
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn load_input(input: &Input) -> Result<(Dataset, ConfigFile)> {
    let cfg = match &input.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let ds = parse_unit_csv(&input.data, &cfg.data)?;
    cfg.constraints.validate(&ds)?;
    Ok((ds, cfg))
}

fn solve_options(input: &Input) -> Result<SolveOptions> {
    let time_limit = match input.time_limit {
        None => None,
        Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Usage(format!("--time-limit must be positive, got {s}"))),
    };
    Ok(SolveOptions { node_limit: input.node_limit, time_limit, ..SolveOptions::default() })
}

fn run_config(command: &str, input: &Input, cfg: &ConfigFile, params: BTreeMap<String, Value>, threads: Option<usize>) -> RunConfig {
    RunConfig {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        data: Some(path_str(&input.data)),
        config: input.config.as_deref().map(path_str),
        config_contents: Some(cfg.clone()),
        params,
        out: Some(path_str(&input.out)),
        seed: None,
        node_limit: input.node_limit,
        time_limit_secs: input.time_limit,
        threads,
    }
}

#[derive(Serialize)]
struct Failure {
    error: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    incumbent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
}

/// Infeasibility and exhausted budgets are results in their own right: they
/// are written to `error.json` with whatever partial information exists.
fn record_failure<T>(out: &Path, run: &RunConfig, r: Result<T>) -> Result<T> {
    let Err(e) = r else { return r };
    let failure = match &e {
        CliError::Core(robustmatch::Error::Infeasible(_)) => {
            Some(Failure { error: e.to_string(), kind: "infeasible", nodes: None, incumbent: None, bound: None })
        }
        CliError::Core(robustmatch::Error::BudgetExceeded { nodes, incumbent, bound }) => Some(Failure {
            error: e.to_string(),
            kind: "budget_exceeded",
            nodes: Some(*nodes),
            incumbent: *incumbent,
            bound: Some(*bound),
        }),
        _ => None,
    };
    if let Some(f) = failure {
        write_json(&out.join("error.json"), &Report { run: run.clone(), result: f })?;
    }
    Err(e)
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

fn opt_i64(x: Option<i64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn witness_rows(ds: &Dataset, side: &str, a: &MatchAssignment) -> Vec<Vec<String>> {
    a.pairs()
        .iter()
        .map(|&(i, j)| {
            let (t, c) = (ds.treated_unit(i), ds.control_unit(j));
            vec![side.into(), t.id.clone(), c.id.clone(), format_f64(t.outcome), format_f64(c.outcome)]
        })
        .collect()
}

const WITNESS_HEADER: [&str; 5] = ["side", "treated_id", "control_id", "treated_outcome", "control_outcome"];

fn cmd_mcnemar(a: McnemarArgs, threads: Option<usize>) -> Result<()> {
    let (ds, cfg) = load_input(&a.input)?;
    let conv = match a.convention {
        ConventionArg::M => Convention::SqrtM,
        ConventionArg::M1 => Convention::SqrtMPlus1,
    };
    let mut params = BTreeMap::new();
    params.insert("m".into(), json!(a.m));
    params.insert("convention".into(), json!(conv));
    params.insert("binned".into(), json!(a.binned));
    let run = run_config("test mcnemar", &a.input, &cfg, params, threads);
    let opts = solve_options(&a.input)?;
    let result: Result<McNemarResult> = if a.binned {
        let Some(spec) = &cfg.constraints.binning else {
            return Err(CliError::Usage("--binned needs a binning rule in the config".into()));
        };
        stratify(&ds, spec).and_then(|st| robust_mcnemar_binned(&st)).map_err(Into::into)
    } else {
        let m: MSpec = a.m.parse()?;
        robust_mcnemar_general(&ds, &cfg.constraints, m, conv, &opts).map_err(Into::into)
    };
    let res = record_failure(&a.input.out, &run, result)?;
    let out = &a.input.out;
    let rows: Vec<Vec<String>> = res
        .trace
        .iter()
        .map(|t| {
            vec![
                t.m.to_string(),
                t.feasible.to_string(),
                opt_i64(t.te_plus),
                opt_i64(t.te_minus),
                opt_f64(t.chi_plus),
                opt_f64(t.chi_minus),
                opt_f64(t.p_value),
            ]
        })
        .collect();
    write_csv(&out.join("trace.csv"), &["m", "feasible", "te_plus", "te_minus", "chi_plus", "chi_minus", "p_value"], &rows)?;
    let mut w = witness_rows(&ds, "plus", &res.witness_plus);
    w.extend(witness_rows(&ds, "minus", &res.witness_minus));
    write_csv(&out.join("witnesses.csv"), &WITNESS_HEADER, &w)?;
    write_json(&out.join("report.json"), &Report { run, result: &res })?;
    println!("chi+ = {}  chi- = {}  p = {}", res.chi_plus, res.chi_minus, res.p_value);
    Ok(())
}

fn cmd_z(a: ZArgs, threads: Option<usize>) -> Result<()> {
    let (ds, cfg) = load_input(&a.input)?;
    let solve = SolveOptions { gap: Some(0.0), ..solve_options(&a.input)? };
    let opts = ZOptions {
        eps: a.eps,
        grid: a.grid,
        refine: a.refine,
        max_iter: a.max_iter,
        pin: a.pin,
        keep_trace: !a.no_trace,
        solve,
        ..ZOptions::default()
    };
    let mut params = BTreeMap::new();
    params.insert("M".into(), json!(a.pairs));
    params.insert("z_options".into(), serde_json::to_value(&opts).expect("options serialize"));
    let run = run_config("test z", &a.input, &cfg, params, threads);
    let res: ZResult = record_failure(&a.input.out, &run, robust_z(&ds, &cfg.constraints, a.pairs, &opts).map_err(Into::into))?;
    let out = &a.input.out;
    let mut bounds = Vec::new();
    let mut points = Vec::new();
    for (name, side) in [("plus", &res.plus), ("minus", &res.minus)] {
        for t in &side.trace {
            bounds.push(vec![name.into(), t.iteration.to_string(), format_f64(t.lb), format_f64(t.ub)]);
            for p in &t.points {
                points.push(vec![name.into(), t.iteration.to_string(), format_f64(p.b), opt_f64(p.f1), opt_f64(p.f2), opt_f64(p.z)]);
            }
        }
    }
    write_csv(&out.join("bounds.csv"), &["side", "iteration", "lb", "ub"], &bounds)?;
    write_csv(&out.join("grid.csv"), &["side", "iteration", "b", "f1", "f2", "z"], &points)?;
    let mut w = witness_rows(&ds, "plus", &res.plus.witness);
    w.extend(witness_rows(&ds, "minus", &res.minus.witness));
    write_csv(&out.join("witnesses.csv"), &WITNESS_HEADER, &w)?;
    write_json(&out.join("report.json"), &Report { run, result: &res })?;
    println!(
        "z+ in [{}, {}]  z- in [{}, {}]  p = {}",
        res.plus.lb, res.plus.ub, res.minus.lb, res.minus.ub, res.p_value
    );
    let open = |name: &'static str, s: &ZSide| (!s.converged).then_some(CliError::NotConverged { side: name, gap: s.ub - s.lb });
    match open("plus", &res.plus).or_else(|| open("minus", &res.minus)) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct NulldistResult {
    regime: Regime,
    pooled: bool,
    method: ConvMethod,
    params: Vec<StratumParams>,
    total_mass: f64,
    atoms: usize,
    mass_above_diagonal: f64,
}

fn cmd_nulldist(a: NulldistArgs, threads: Option<usize>) -> Result<()> {
    let (ds, cfg) = load_input(&a.input)?;
    let regime = match a.regime {
        RegimeArg::Sharp => Regime::Sharp,
        RegimeArg::Conditional => Regime::Conditional,
    };
    let method = match a.method {
        MethodArg::Direct => ConvMethod::Direct,
        MethodArg::Fft => ConvMethod::Fft,
    };
    if a.pooled && regime == Regime::Sharp {
        return Err(CliError::Usage("--pooled applies to the conditional regime only".into()));
    }
    let Some(spec) = &cfg.constraints.binning else {
        return Err(CliError::Usage("nulldist needs a binning rule in the config".into()));
    };
    let mut params = BTreeMap::new();
    params.insert("regime".into(), json!(regime));
    params.insert("pooled".into(), json!(a.pooled));
    params.insert("method".into(), json!(method));
    let run = run_config("nulldist", &a.input, &cfg, params, threads);
    let strat = stratify(&ds, spec)?;
    let sp = estimate_params(&strat, regime, a.pooled)?;
    let pmf = exact_range_pmf(&sp, method)?;
    let out = &a.input.out;
    let rows: Vec<Vec<String>> = pmf.atoms.iter().map(|t| vec![format_f64(t.s), format_f64(t.r), format_f64(t.mass)]).collect();
    write_csv(&out.join("pmf.csv"), &["s", "r", "mass"], &rows)?;
    for (name, marg) in [("marginal_minus.csv", pmf.marginal_minus()), ("marginal_plus.csv", pmf.marginal_plus())] {
        let rows: Vec<Vec<String>> = marg.iter().map(|&(v, m)| vec![format_f64(v), format_f64(m)]).collect();
        write_csv(&out.join(name), &["value", "mass"], &rows)?;
    }
    let result = NulldistResult {
        regime,
        pooled: a.pooled,
        method,
        params: sp,
        total_mass: pmf.total(),
        atoms: pmf.atoms.len(),
        mass_above_diagonal: pmf.mass_above_diagonal(),
    };
    write_json(&out.join("report.json"), &Report { run, result: &result })?;
    println!("{} atoms, total mass {}", result.atoms, result.total_mass);
    Ok(())
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    summary: &'a [MethodSummary],
    skipped: &'a [usize],
}

fn cmd_simulate(a: SimulateArgs, threads: Option<usize>) -> Result<()> {
    let cfg = SimConfig {
        scenario: a.scenario,
        n: a.n,
        satt_present: a.satt,
        delta: a.delta,
        n_replications: a.reps,
        seed: a.seed,
        stratum_size: a.stratum_size,
        alpha: a.alpha,
    };
    cfg.validate()?;
    let mut params = BTreeMap::new();
    params.insert("sim".into(), serde_json::to_value(&cfg).expect("config serializes"));
    let run = RunConfig {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        params,
        out: Some(path_str(&a.out)),
        seed: Some(a.seed),
        threads,
        ..RunConfig::default()
    };
    let rep = run_experiment(&cfg)?;
    let rows: Vec<Vec<String>> =
        rep.rows.iter().map(|r| vec![r.replication.to_string(), r.method.name().into(), format_f64(r.p_value)]).collect();
    write_csv(&a.out.join("pvalues.csv"), &["replication", "method", "p_value"], &rows)?;
    write_json(&a.out.join("report.json"), &Report { run, result: SimulateResult { summary: &rep.summary, skipped: &rep.skipped } })?;
    for s in &rep.summary {
        println!(
            "{:<15} n={:<4} rejection={}  median p={}",
            s.method.name(),
            s.n,
            s.rejection_rate.map_or("-".into(), |x| format!("{x:.3}")),
            s.median_p.map_or("-".into(), |x| format!("{x:.3}"))
        );
    }
    Ok(())
}
