//! `cchn`: command-line front end for scenario generation, conflict-graph
//! inspection, session-cooperation planning, the link-level baseline, the
//! scaling analysis and experiment sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cchn_core::conflict::build_conflict_graph;
use cchn_core::harness::experiment::PRESETS;
use cchn_core::harness::{
    emit_plotdata, generate_grid_scenario, load_scenario, preset, run_experiment, scenario_to_json,
    ExperimentSpec, GridConfig, SessionLayout,
};
use cchn_core::llc::{
    llc_completion_time, llc_expected, llc_throughput, LlcConfig, SecondarySources,
};
use cchn_core::mis::{search, DEFAULT_BUDGET};
use cchn_core::nlc::{
    blend_throughput, idle_optimum, protection_holds, NlcReport, SelectionStrategy,
};
use cchn_core::scaling::{scaling_row, write_scaling_csv, ScalingParams};
use cchn_core::{derive_links, ConflictGraph, Error, MisCollection, MisMode, NlcSolver, Scenario};

#[derive(Parser, Debug)]
#[command(
    name = "cchn",
    version,
    about = "Session-level cooperation planner for cognitive capacity harvesting networks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Global flags. Unset values fall back to the library defaults, or to the
/// experiment spec for `experiment`.
#[derive(Args, Debug)]
struct Global {
    /// Seed for every randomised step [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Feasibility tolerance of the LP solver [default: 1e-9].
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// MIS generator: exact, sio or augmented [default: augmented].
    #[arg(long, global = true)]
    mis_mode: Option<MisMode>,
    /// Scheduling-index runs per source/destination pair [default: 30].
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the 5 x 5 grid scenario as JSON.
    GenGrid(GridArgs),
    /// List the links of a scenario.
    Links(ScenarioArg),
    /// Dump the PU-related conflict graph as an edge list.
    Graph(ScenarioArg),
    /// Dump the maximal independent sets of the conflict graph.
    Mis(ScenarioArg),
    /// Solve the session-cooperation problem and print a JSON report.
    Solve(SolveArgs),
    /// Evaluate the frame-based link-level baseline.
    Llc(LlcArgs),
    /// Compare both schemes on one scenario.
    Compare(LlcArgs),
    /// Evaluate the throughput scaling bounds and write CSV rows.
    Scaling(ScalingArgs),
    /// Run a sweep and write CSV plus a JSON sidecar.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario JSON file.
    scenario: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    Standard,
    MultiHop,
    None,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, value_enum, default_value = "standard")]
    layout: Layout,
    /// Volume of every session, bits.
    #[arg(long)]
    volume: Option<f64>,
    /// Length of every session, seconds.
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// CR link rate, bits/s.
    #[arg(long)]
    rate_cr: Option<f64>,
    /// PU-related link rate, bits/s.
    #[arg(long)]
    rate_pcr: Option<f64>,
    /// Grid spacing, metres.
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Exhaustive,
    Bnb,
}

#[derive(Args, Debug)]
struct SolveArgs {
    scenario: PathBuf,
    /// Use a previously dumped MIS collection instead of searching.
    #[arg(long)]
    mis_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exhaustive")]
    strategy: Strategy,
    /// Also write the LP of the selected sessions in text form.
    #[arg(long)]
    lp_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LlcArgs {
    scenario: PathBuf,
    /// Frame length, seconds; defaults to the scenario's.
    #[arg(long)]
    frame: Option<f64>,
    /// Let every CR router, not only edge routers, use granted time.
    #[arg(long)]
    all_routers: bool,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    /// Number of SUs; repeat or comma-separate for several points.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<f64>,
    /// Facility exponent.
    #[arg(long, value_delimiter = ',', required = true)]
    b: Vec<f64>,
    /// BS exponent.
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<f64>,
    /// Bandwidth available to the facilities.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    /// Destination-load simulation trials per point; 0 disables it.
    #[arg(long, default_value_t = 0)]
    trials: usize,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Named sweep.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Experiment spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(cchn_core::lp::DEFAULT_TOLERANCE)
    }

    fn mis_mode(&self) -> MisMode {
        self.mis_mode.unwrap_or(MisMode::Augmented)
    }

    fn budget(&self) -> usize {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.chain().find_map(|e| e.downcast_ref::<Error>()) {
            Some(e) if e.is_input_error() => 2,
            Some(Error::Io(_)) => 2,
            Some(_) => 3,
            None => 2,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if !(g.tolerance() > 0.0 && g.tolerance().is_finite()) {
        return bail_input("--tolerance must be positive".into());
    }
    match &cli.command {
        Command::GenGrid(a) => gen_grid(g, a),
        Command::Links(a) => links(g, &a.scenario),
        Command::Graph(a) => graph(g, &a.scenario),
        Command::Mis(a) => mis(g, &a.scenario),
        Command::Solve(a) => solve(g, a),
        Command::Llc(a) => llc(g, a),
        Command::Compare(a) => compare(g, a),
        Command::Scaling(a) => scaling(g, a),
        Command::Experiment(a) => experiment(g, a),
    }
}

fn emit(g: &Global, text: &str) -> CliResult<()> {
    match &g.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(g: &Global, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).context("serialising output")?;
    text.push('\n');
    emit(g, &text)
}

fn load(path: &Path) -> CliResult<Scenario> {
    Ok(load_scenario(path).with_context(|| format!("loading {}", path.display()))?)
}

fn pipeline(g: &Global, scenario: &Scenario) -> CliResult<(ConflictGraph, MisCollection)> {
    let links = derive_links(scenario);
    let graph = build_conflict_graph(scenario, &links);
    let mis = search(scenario, &graph, g.mis_mode(), g.budget(), g.seed())?;
    Ok((graph, mis))
}

fn solver(g: &Global, strategy: SelectionStrategy) -> NlcSolver {
    NlcSolver {
        tolerance: g.tolerance(),
        strategy,
        ..Default::default()
    }
}

fn gen_grid(g: &Global, a: &GridArgs) -> CliResult<()> {
    let mut cfg = GridConfig {
        layout: match a.layout {
            Layout::Standard => SessionLayout::Standard,
            Layout::MultiHop => SessionLayout::MultiHop,
            Layout::None => SessionLayout::None,
        },
        ..Default::default()
    };
    if let Some(v) = a.volume {
        cfg.volumes_bits = vec![v; 5];
    }
    if let Some(v) = a.length {
        cfg.lengths_s = vec![v; 5];
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.rate_cr {
        cfg.rate_cr_bps = v;
    }
    if let Some(v) = a.rate_pcr {
        cfg.rate_pcr_bps = v;
    }
    if let Some(v) = a.spacing {
        cfg.spacing_m = v;
    }
    let scenario = generate_grid_scenario(&cfg)?;
    scenario.validate()?;
    let mut text = scenario_to_json(&scenario)?;
    text.push('\n');
    emit(g, &text)
}

fn links(g: &Global, path: &Path) -> CliResult<()> {
    let scenario = load(path)?;
    let mut text = String::new();
    for l in derive_links(&scenario) {
        text.push_str(&format!("{} {}\n", l.label(&scenario), l.capacity));
    }
    emit(g, &text)
}

fn graph(g: &Global, path: &Path) -> CliResult<()> {
    let scenario = load(path)?;
    let links = derive_links(&scenario);
    let graph = build_conflict_graph(&scenario, &links);
    emit(g, &graph.to_edge_list(&scenario))
}

fn mis(g: &Global, path: &Path) -> CliResult<()> {
    let scenario = load(path)?;
    let (graph, mis) = pipeline(g, &scenario)?;
    eprintln!(
        "{} maximal independent sets over {} vertices",
        mis.len(),
        graph.len()
    );
    emit(g, &mis.to_text(&graph, &scenario))
}

fn solve(g: &Global, a: &SolveArgs) -> CliResult<()> {
    let scenario = load(&a.scenario)?;
    let links = derive_links(&scenario);
    let graph = build_conflict_graph(&scenario, &links);
    let mis = match &a.mis_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            MisCollection::from_text(&text, &graph, &scenario)?
        }
        None => search(&scenario, &graph, g.mis_mode(), g.budget(), g.seed())?,
    };
    let strategy = match a.strategy {
        Strategy::Exhaustive => SelectionStrategy::Exhaustive,
        Strategy::Bnb => SelectionStrategy::BranchAndBound,
    };
    let sol = solver(g, strategy).solve(&scenario, &graph, &mis)?;
    if !protection_holds(&sol, &graph, &mis) {
        return Err(anyhow::Error::from(Error::Solver("protection check failed".into())).into());
    }
    if let Some(p) = &a.lp_out {
        let program = cchn_core::nlc::build_lp(&scenario, &graph, &mis, &sol.interval, &sol.theta)?;
        fs::write(p, program.lp.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    emit_json(g, &NlcReport::new(&sol, &scenario, &graph, &mis))
}

fn llc_config(scenario: &Scenario, a: &LlcArgs) -> LlcConfig {
    let mut cfg = LlcConfig::from_scenario(scenario);
    if let Some(f) = a.frame {
        cfg.frame_len = f;
    }
    if a.all_routers {
        cfg.sources = SecondarySources::AllRouters;
    }
    cfg
}

fn llc(g: &Global, a: &LlcArgs) -> CliResult<()> {
    let scenario = load(&a.scenario)?;
    let cfg = llc_config(&scenario, a);
    let links = derive_links(&scenario);
    let graph = build_conflict_graph(&scenario, &links);
    let horizon = cchn_core::nlc::select_control_interval(&scenario, &graph)?.length;
    emit_json(g, &llc_throughput(&scenario, &cfg, horizon)?)
}

#[derive(Serialize)]
struct Comparison {
    control_interval_s: f64,
    rho: f64,
    idle_bps: f64,
    nlc_active_bps: f64,
    nlc_expected_bps: f64,
    llc_active_bps: f64,
    llc_expected_bps: f64,
    theta: Vec<bool>,
    nlc_completion_s: Vec<Option<f64>>,
    llc_completion_s: Vec<f64>,
}

fn compare(g: &Global, a: &LlcArgs) -> CliResult<()> {
    let scenario = load(&a.scenario)?;
    let (graph, mis) = pipeline(g, &scenario)?;
    let solver = solver(g, SelectionStrategy::Exhaustive);
    let sol = solver.solve(&scenario, &graph, &mis)?;
    let idle_scenario = scenario.without_sessions();
    let (idle_graph, idle_mis) = pipeline(g, &idle_scenario)?;
    let idle = idle_optimum(&solver, &scenario, &idle_graph, &idle_mis)?;
    let cfg = llc_config(&scenario, a);
    let horizon = sol.interval.length;
    let base = llc_throughput(&scenario, &cfg, horizon)?;
    let llc_completion = scenario
        .session_ids()
        .map(|s| llc_completion_time(&scenario, s, &cfg))
        .collect::<cchn_core::Result<Vec<_>>>()?;
    let out = Comparison {
        control_interval_s: horizon,
        rho: scenario.rho,
        idle_bps: idle,
        nlc_active_bps: sol.objective,
        nlc_expected_bps: blend_throughput(scenario.rho, sol.objective, idle)?,
        llc_active_bps: base.active,
        llc_expected_bps: llc_expected(&base, idle, scenario.rho)?,
        theta: sol.theta.clone(),
        nlc_completion_s: sol.completion.clone(),
        llc_completion_s: llc_completion,
    };
    emit_json(g, &out)
}

fn scaling(g: &Global, a: &ScalingArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for &n in &a.n {
        for &b in &a.b {
            for &d in &a.d {
                let p = ScalingParams::new(n, b, d, a.w)?;
                let sim = (a.trials > 0).then_some((a.trials, g.seed()));
                rows.push(scaling_row(&p, sim)?);
            }
        }
    }
    let mut buf = Vec::new();
    write_scaling_csv(&rows, &mut buf)?;
    emit(
        g,
        &String::from_utf8(buf).context("CSV output is not UTF-8")?,
    )
}

fn experiment(g: &Global, a: &ExperimentArgs) -> CliResult<()> {
    let mut spec: ExperimentSpec = match (&a.preset, &a.spec) {
        (Some(name), _) => match preset(name) {
            Some(s) => s,
            None => bail_input(format!(
                "unknown preset {name:?}; known presets: {}",
                PRESETS.join(", ")
            ))?,
        },
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(Error::from)?
        }
        (None, None) => bail_input("either --preset or --spec is required".into())?,
    };
    if let Some(v) = g.seed {
        spec.seed = v;
    }
    if let Some(v) = g.budget {
        spec.budget = v;
    }
    if let Some(v) = g.mis_mode {
        spec.mis_modes = vec![v];
    }
    if let Some(v) = g.tolerance {
        spec.tolerance = v;
    }
    let jobs = g
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = run_experiment(&spec, jobs)?;
    let failed = rows.iter().filter(|r| r.status == "error").count();
    match &g.out {
        Some(path) => emit_plotdata(&rows, Some(&spec), path)?,
        None => emit(g, &cchn_core::harness::experiment::rows_to_csv(&rows)?)?,
    }
    if failed > 0 {
        eprintln!("{failed} of {} points failed", rows.len());
    }
    Ok(())
}

fn bail_input<T>(msg: String) -> CliResult<T> {
    Err(Failure {
        code: 2,
        error: anyhow::anyhow!(msg),
    })
}
