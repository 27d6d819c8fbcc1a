//! Parameter sweeps over the full pipeline and their CSV emission.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::build_conflict_graph;
use crate::error::{Error, Result};
use crate::harness::grid::{generate_grid_scenario, GridConfig, SessionLayout};
use crate::harness::io::ScenarioDoc;
use crate::llc::{llc_completion_time, llc_expected, llc_throughput, LlcConfig};
use crate::lp::DEFAULT_TOLERANCE;
use crate::mis::{search, MisMode, DEFAULT_BUDGET};
use crate::model::{derive_links, Scenario};
use crate::nlc::{blend_throughput, idle_optimum, protection_holds, NlcSolver, SelectionStrategy};

const MBIT: f64 = 1e6;

/// Parameter varied along a sweep or a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Volume of every session, bits.
    Volume,
    /// PU-related link rate, bits/s.
    RatePcr,
    /// CR link rate, bits/s.
    RateCr,
    /// Length of every session, seconds.
    CommonLength,
    Alpha,
    Rho,
    /// MIS generator budget.
    Budget,
}

impl SweepVar {
    pub const ALL: [SweepVar; 7] = [
        SweepVar::Volume,
        SweepVar::RatePcr,
        SweepVar::RateCr,
        SweepVar::CommonLength,
        SweepVar::Alpha,
        SweepVar::Rho,
        SweepVar::Budget,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Volume => "volume",
            SweepVar::RatePcr => "rate_pcr",
            SweepVar::RateCr => "rate_cr",
            SweepVar::CommonLength => "common_length",
            SweepVar::Alpha => "alpha",
            SweepVar::Rho => "rho",
            SweepVar::Budget => "budget",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVar::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown sweep variable {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    Nlc,
    Llc,
    Both,
}

impl CompareMode {
    fn nlc(&self) -> bool {
        *self != CompareMode::Llc
    }

    fn llc(&self) -> bool {
        *self != CompareMode::Nlc
    }
}

impl FromStr for CompareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nlc" => Ok(CompareMode::Nlc),
            "llc" => Ok(CompareMode::Llc),
            "both" => Ok(CompareMode::Both),
            _ => Err(Error::Parse(format!("unknown comparison mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(var: SweepVar, values: Vec<f64>) -> Self {
        Sweep { var, values }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain(format!(
                "sweep over {} has no values",
                self.var
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "sweep over {} has non-finite value {v}",
                self.var
            )));
        }
        Ok(())
    }
}

/// Base scenario of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    Grid(GridConfig),
    Inline(ScenarioDoc),
    File(PathBuf),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Grid(cfg) => generate_grid_scenario(cfg),
            ScenarioSource::Inline(doc) => doc.resolve(),
            ScenarioSource::File(path) => crate::harness::io::load_scenario(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: ScenarioSource,
    pub sweep: Sweep,
    /// Optional second parameter; one curve per value.
    #[serde(default)]
    pub series: Option<Sweep>,
    pub compare: CompareMode,
    /// One curve per generator.
    pub mis_modes: Vec<MisMode>,
    pub budget: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub strategy: SelectionStrategy,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, scenario: ScenarioSource, sweep: Sweep) -> Self {
        ExperimentSpec {
            name: name.into(),
            scenario,
            sweep,
            series: None,
            compare: CompareMode::Nlc,
            mis_modes: vec![MisMode::Augmented],
            budget: DEFAULT_BUDGET,
            seed: 1,
            tolerance: DEFAULT_TOLERANCE,
            strategy: SelectionStrategy::Exhaustive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        if let Some(s) = &self.series {
            s.validate()?;
            if s.var == self.sweep.var {
                return Err(Error::domain("series and sweep vary the same parameter"));
            }
        }
        if self.mis_modes.is_empty() {
            return Err(Error::domain("no MIS mode selected"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::domain("tolerance must be positive"));
        }
        Ok(())
    }

    /// Sweep points in emission order: mode, then series value, then sweep
    /// value.
    pub fn points(&self) -> Vec<Point> {
        let series: Vec<Option<f64>> = match &self.series {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &mode in &self.mis_modes {
            for &sv in &series {
                for &x in &self.sweep.values {
                    out.push(Point {
                        index: out.len(),
                        mode,
                        series_value: sv,
                        sweep_value: x,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub index: usize,
    pub mode: MisMode,
    pub series_value: Option<f64>,
    pub sweep_value: f64,
}

/// Sets one parameter on a scenario; `budget` receives budget sweeps.
pub fn apply_param(
    scenario: &mut Scenario,
    budget: &mut usize,
    var: SweepVar,
    value: f64,
) -> Result<()> {
    match var {
        SweepVar::Volume => scenario.sessions.iter_mut().for_each(|s| s.volume = value),
        SweepVar::CommonLength => scenario.sessions.iter_mut().for_each(|s| s.length = value),
        SweepVar::RatePcr => scenario.rate_pcr = value,
        SweepVar::RateCr => scenario.rate_cr = value,
        SweepVar::Alpha => scenario.alpha = value,
        SweepVar::Rho => scenario.rho = value,
        SweepVar::Budget => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::domain(format!(
                    "budget {value} must be a positive integer"
                )));
            }
            *budget = value as usize;
        }
    }
    Ok(())
}

/// One sweep point. Per-session vectors are `;`-joined in session order,
/// with `-` for sessions not cooperated with.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub mis_mode: String,
    pub series_var: String,
    pub series_value: Option<f64>,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub budget: usize,
    pub alpha: f64,
    pub rho: f64,
    pub rate_cr_bps: f64,
    pub rate_pcr_bps: f64,
    pub volumes_bits: String,
    pub lengths_s: String,
    pub control_interval_s: Option<f64>,
    pub mis_count: Option<usize>,
    pub nlc_active_bps: Option<f64>,
    pub idle_bps: Option<f64>,
    pub nlc_expected_bps: Option<f64>,
    pub llc_active_bps: Option<f64>,
    pub llc_expected_bps: Option<f64>,
    pub theta: String,
    pub nlc_completion_s: String,
    pub nlc_airtime_s: String,
    pub llc_completion_s: String,
    pub programs_solved: Option<usize>,
    pub protection_ok: Option<bool>,
    pub status: String,
    pub error: String,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Throughput of the optimiser blended over PU activity.
    pub fn nlc(&self) -> Option<f64> {
        self.nlc_expected_bps
    }

    pub fn llc(&self) -> Option<f64> {
        self.llc_expected_bps
    }

    pub fn nlc_completion(&self, session: usize) -> Option<f64> {
        field(&self.nlc_completion_s, session)
    }

    pub fn nlc_airtime(&self, session: usize) -> Option<f64> {
        field(&self.nlc_airtime_s, session)
    }

    pub fn llc_completion(&self, session: usize) -> Option<f64> {
        field(&self.llc_completion_s, session)
    }
}

fn field(joined: &str, i: usize) -> Option<f64> {
    joined.split(';').nth(i).and_then(|s| s.parse().ok())
}

fn join<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> String) -> String {
    items.into_iter().map(f).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// Runs every point of `spec` on up to `jobs` threads. Failures are recorded
/// in their row and do not stop the run.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let base = spec.scenario.load()?;
    let points = spec.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    let mut rows: Vec<(usize, ResultRow)> = pool.install(|| {
        points
            .par_iter()
            .map(|p| (p.index, run_point(spec, &base, p)))
            .collect()
    });
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn run_point(spec: &ExperimentSpec, base: &Scenario, p: &Point) -> ResultRow {
    let start = Instant::now();
    let mut scenario = base.clone();
    let mut budget = spec.budget;
    let mut row = ResultRow {
        experiment: spec.name.clone(),
        mis_mode: p.mode.to_string(),
        series_var: spec
            .series
            .as_ref()
            .map_or_else(String::new, |s| s.var.to_string()),
        series_value: p.series_value,
        sweep_var: spec.sweep.var.to_string(),
        sweep_value: p.sweep_value,
        seed: spec.seed,
        budget,
        alpha: scenario.alpha,
        rho: scenario.rho,
        rate_cr_bps: scenario.rate_cr,
        rate_pcr_bps: scenario.rate_pcr,
        volumes_bits: String::new(),
        lengths_s: String::new(),
        control_interval_s: None,
        mis_count: None,
        nlc_active_bps: None,
        idle_bps: None,
        nlc_expected_bps: None,
        llc_active_bps: None,
        llc_expected_bps: None,
        theta: String::new(),
        nlc_completion_s: String::new(),
        nlc_airtime_s: String::new(),
        llc_completion_s: String::new(),
        programs_solved: None,
        protection_ok: None,
        status: "ok".into(),
        error: String::new(),
        wall_ms: 0.0,
    };
    let res = (|| -> Result<()> {
        if let (Some(s), Some(v)) = (&spec.series, p.series_value) {
            apply_param(&mut scenario, &mut budget, s.var, v)?;
        }
        apply_param(&mut scenario, &mut budget, spec.sweep.var, p.sweep_value)?;
        scenario.validate()?;
        row.budget = budget;
        row.alpha = scenario.alpha;
        row.rho = scenario.rho;
        row.rate_cr_bps = scenario.rate_cr;
        row.rate_pcr_bps = scenario.rate_pcr;
        row.volumes_bits = join(&scenario.sessions, |s| s.volume.to_string());
        row.lengths_s = join(&scenario.sessions, |s| s.length.to_string());
        evaluate(spec, &scenario, p.mode, budget, &mut row)
    })();
    if let Err(e) = res {
        row.status = if e.is_input_error() {
            "invalid"
        } else {
            "error"
        }
        .into();
        row.error = e.to_string();
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

fn evaluate(
    spec: &ExperimentSpec,
    scenario: &Scenario,
    mode: MisMode,
    budget: usize,
    row: &mut ResultRow,
) -> Result<()> {
    let solver = NlcSolver {
        tolerance: spec.tolerance,
        strategy: spec.strategy,
        ..Default::default()
    };
    let links = derive_links(scenario);
    let graph = build_conflict_graph(scenario, &links);
    let idle = if scenario.rho < 1.0 {
        let idle_scenario = scenario.without_sessions();
        let idle_links = derive_links(&idle_scenario);
        let idle_graph = build_conflict_graph(&idle_scenario, &idle_links);
        let idle_mis = search(&idle_scenario, &idle_graph, mode, budget, spec.seed)?;
        Some(idle_optimum(&solver, scenario, &idle_graph, &idle_mis)?)
    } else {
        None
    };
    row.idle_bps = idle;
    let idle_value = idle.unwrap_or(0.0);
    let mut horizon = None;
    if spec.compare.nlc() {
        let mis = search(scenario, &graph, mode, budget, spec.seed)?;
        let sol = solver.solve(scenario, &graph, &mis)?;
        row.mis_count = Some(mis.len());
        row.control_interval_s = Some(sol.interval.length);
        row.nlc_active_bps = Some(sol.objective);
        row.nlc_expected_bps = Some(blend_throughput(scenario.rho, sol.objective, idle_value)?);
        row.theta = join(&sol.theta, |&t| if t { "1" } else { "0" }.to_string());
        row.nlc_completion_s = join(&sol.completion, |&c| opt(c));
        row.nlc_airtime_s = join(&sol.primary_airtime, |&c| opt(c));
        row.programs_solved = Some(sol.programs_solved);
        row.protection_ok = Some(protection_holds(&sol, &graph, &mis));
        horizon = Some(sol.interval.length);
    }
    if spec.compare.llc() {
        let horizon = match horizon {
            Some(h) => h,
            None => crate::nlc::select_control_interval(scenario, &graph)?.length,
        };
        row.control_interval_s = Some(horizon);
        let cfg = LlcConfig::from_scenario(scenario);
        let res = llc_throughput(scenario, &cfg, horizon)?;
        row.llc_active_bps = Some(res.active);
        row.llc_expected_bps = Some(llc_expected(&res, idle_value, scenario.rho)?);
        row.llc_completion_s = join(scenario.session_ids(), |s| {
            llc_completion_time(scenario, s, &cfg)
                .map_or_else(|_| "-".to_string(), |t| t.to_string())
        });
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct RowTiming {
    index: usize,
    wall_ms: f64,
    status: String,
}

#[derive(Clone, Debug, Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    spec: Option<&'a ExperimentSpec>,
    rows: usize,
    timings: Vec<RowTiming>,
}

/// Sidecar path next to a CSV file.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `rows` as CSV. Wall-clock times go to the JSON sidecar only, so
/// the CSV is byte-identical across runs with the same spec.
pub fn emit_plotdata(rows: &[ResultRow], spec: Option<&ExperimentSpec>, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::domain("no rows to emit"));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let meta = RunMetadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec,
        rows: rows.len(),
        timings: rows
            .iter()
            .enumerate()
            .map(|(index, r)| RowTiming {
                index,
                wall_ms: r.wall_ms,
                status: r.status.clone(),
            })
            .collect(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// CSV text of `rows`, as written by [`emit_plotdata`].
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Named canonical sweeps accepted by [`preset`]:
///
/// - `volume-alpha`: volume sweep, one curve per incentive factor.
/// - `relay-rate`: PU-to-CR rate sweep, one curve per CR rate.
/// - `session-length`: common session length sweep.
/// - `mis-modes`: volume sweep under both scheduling-index generators.
/// - `baseline-rate`: CR rate sweep against the link-level baseline, one
///   curve per PU activity ratio.
/// - `baseline-volume`: volume sweep against the link-level baseline.
/// - `multihop-rate`, `multihop-volume`: the baseline sweeps with the
///   two-hop session variant.
pub const PRESETS: [&str; 8] = [
    "volume-alpha",
    "relay-rate",
    "session-length",
    "mis-modes",
    "baseline-rate",
    "baseline-volume",
    "multihop-rate",
    "multihop-volume",
];

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Canonical sweeps on the grid. Rates and volumes are in SI units.
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let grid = |layout: SessionLayout, volume: f64| {
        ScenarioSource::Grid(GridConfig {
            layout,
            volumes_bits: vec![volume; 5],
            ..Default::default()
        })
    };
    let volumes = range(0.0, 40.0 * MBIT, 5.0 * MBIT);
    let spec = match name {
        "volume-alpha" => ExperimentSpec {
            series: Some(Sweep::new(SweepVar::Alpha, vec![1.0, 2.0])),
            ..ExperimentSpec::new(
                name,
                grid(SessionLayout::Standard, 20.0 * MBIT),
                Sweep::new(SweepVar::Volume, volumes),
            )
        },
        "relay-rate" => ExperimentSpec {
            series: Some(Sweep::new(SweepVar::RateCr, vec![2.0 * MBIT, 3.0 * MBIT])),
            ..ExperimentSpec::new(
                name,
                grid(SessionLayout::Standard, 30.0 * MBIT),
                Sweep::new(SweepVar::RatePcr, range(2.0 * MBIT, 6.0 * MBIT, 1.0 * MBIT)),
            )
        },
        "session-length" => ExperimentSpec::new(
            name,
            grid(SessionLayout::Standard, 20.0 * MBIT),
            Sweep::new(SweepVar::CommonLength, range(20.0, 60.0, 10.0)),
        ),
        "mis-modes" => ExperimentSpec {
            mis_modes: vec![MisMode::Sio, MisMode::Augmented],
            ..ExperimentSpec::new(
                name,
                grid(SessionLayout::Standard, 20.0 * MBIT),
                Sweep::new(SweepVar::Volume, volumes),
            )
        },
        "baseline-rate" | "multihop-rate" => {
            let layout = if name == "multihop-rate" {
                SessionLayout::MultiHop
            } else {
                SessionLayout::Standard
            };
            ExperimentSpec {
                series: Some(Sweep::new(SweepVar::Rho, vec![0.3, 0.5])),
                compare: CompareMode::Both,
                ..ExperimentSpec::new(
                    name,
                    grid(layout, 20.0 * MBIT),
                    Sweep::new(SweepVar::RateCr, range(1.0 * MBIT, 5.0 * MBIT, 1.0 * MBIT)),
                )
            }
        }
        "baseline-volume" | "multihop-volume" => {
            let layout = if name == "multihop-volume" {
                SessionLayout::MultiHop
            } else {
                SessionLayout::Standard
            };
            ExperimentSpec {
                compare: CompareMode::Both,
                ..ExperimentSpec::new(
                    name,
                    grid(layout, 20.0 * MBIT),
                    Sweep::new(SweepVar::Volume, range(5.0 * MBIT, 40.0 * MBIT, 5.0 * MBIT)),
                )
            }
        }
        _ => return None,
    };
    Some(spec)
}
