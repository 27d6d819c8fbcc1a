//! Network-level cooperation optimiser: session selection, flow routing and
//! MIS time-share scheduling.
//!
//! For a fixed selection vector `theta` the problem is a linear program; the
//! solver enumerates every selection (or runs a best-first branch and bound
//! when asked to) and keeps the best one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictGraph, VertexId};
use crate::error::{Error, Result};
use crate::lp::{self, verify_solution, LinearProgram, LpStatus, Relation, OBJECTIVE_RTOL};
use crate::mis::MisCollection;
use crate::model::{Link, LinkKind, NodeId, Scenario, SessionId};

/// Rates inside the LP are expressed in Mbit/s to keep coefficients near one.
pub const RATE_UNIT: f64 = 1e6;
/// Largest session count the exhaustive strategy accepts by default.
pub const DEFAULT_SESSION_LIMIT: usize = 12;

/// Control interval and the promised finishing times of the sessions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlInterval {
    /// Length `T` in seconds.
    pub length: f64,
    /// Sessions sorted by length, ties by id.
    pub order: Vec<SessionId>,
    /// `t_0 = 0`, `t_m = min(T_m / alpha, T)`, `t_{L+1} = T`.
    pub breakpoints: Vec<f64>,
    /// Set when no session conflicts with BS activity and `T` fell back
    /// to the shortest session overall (or to one second without sessions).
    pub fallback: bool,
}

impl ControlInterval {
    /// Builds the breakpoints for a given interval length.
    pub fn with_length(scenario: &Scenario, length: f64, fallback: bool) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain("control interval must be positive"));
        }
        let mut order: Vec<SessionId> = scenario.session_ids().collect();
        order.sort_by(|a, b| {
            scenario
                .session(*a)
                .length
                .total_cmp(&scenario.session(*b).length)
                .then(a.cmp(b))
        });
        let mut breakpoints = vec![0.0];
        for s in &order {
            breakpoints.push((scenario.session(*s).length / scenario.alpha).min(length));
        }
        breakpoints.push(length);
        Ok(ControlInterval {
            length,
            order,
            breakpoints,
            fallback,
        })
    }

    /// Number of scheduling intervals, `L + 1`.
    pub fn num_intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// 1-based position of `s` in the length order.
    pub fn rank(&self, s: SessionId) -> usize {
        self.order
            .iter()
            .position(|&o| o == s)
            .expect("session in order")
            + 1
    }

    /// Length of interval `m` (1-based) as a fraction of `T`.
    pub fn share(&self, m: usize) -> f64 {
        (self.breakpoints[m] - self.breakpoints[m - 1]) / self.length
    }
}

/// `T` = shortest session whose vertex conflicts with a link touching the BS.
pub fn select_control_interval(
    scenario: &Scenario,
    graph: &ConflictGraph,
) -> Result<ControlInterval> {
    let bs = scenario.base_station();
    let bs_links: Vec<VertexId> = graph
        .link_vertices()
        .filter(|(_, l)| l.tx == bs || l.rx == bs)
        .map(|(v, _)| v)
        .collect();
    let conflicting = graph
        .session_vertices()
        .filter(|(_, sv)| bs_links.iter().any(|&lv| graph.is_adjacent(*sv, lv)))
        .map(|(s, _)| scenario.session(s).length)
        .min_by(f64::total_cmp);
    match conflicting {
        Some(t) => ControlInterval::with_length(scenario, t, false),
        None => {
            let t = scenario
                .sessions
                .iter()
                .map(|s| s.length)
                .min_by(f64::total_cmp)
                .unwrap_or(1.0);
            ControlInterval::with_length(scenario, t, true)
        }
    }
}

/// Value of one selection variable while building a program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaValue {
    Fixed(bool),
    /// Relaxed to a continuous variable in `[0, 1]`.
    Relaxed,
}

/// Index maps from model quantities to LP variables.
#[derive(Clone, Debug)]
pub struct NlcLayout {
    /// Secondary flow sources (edge routers) with their rate variable.
    pub upsilon: Vec<(NodeId, usize)>,
    /// CR links in graph vertex order.
    pub cr_links: Vec<(VertexId, Link)>,
    /// `secondary[l][e]`: flow `l` on CR link `e`.
    pub secondary: Vec<Vec<usize>>,
    /// `primary[k][e]`: session at rank `k + 1` on CR link `e`.
    pub primary: Vec<Vec<usize>>,
    /// Own PU-related links of the session at rank `k + 1`.
    pub primary_pu: Vec<Vec<(VertexId, Link, usize)>>,
    /// `lambda[m - 1][q]`.
    pub lambda: Vec<Vec<usize>>,
    /// Relaxed selection variables, by rank.
    pub theta: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct NlcProgram {
    pub lp: LinearProgram,
    pub layout: NlcLayout,
}

/// Builds the LP for a fixed selection vector, indexed by session id.
pub fn build_lp(
    scenario: &Scenario,
    graph: &ConflictGraph,
    mis: &MisCollection,
    interval: &ControlInterval,
    theta: &[bool],
) -> Result<NlcProgram> {
    let values: Vec<ThetaValue> = theta.iter().map(|&b| ThetaValue::Fixed(b)).collect();
    build_program(scenario, graph, mis, interval, &values)
}

/// As [`build_lp`], allowing relaxed selection variables.
pub fn build_program(
    scenario: &Scenario,
    graph: &ConflictGraph,
    mis: &MisCollection,
    interval: &ControlInterval,
    theta: &[ThetaValue],
) -> Result<NlcProgram> {
    let sessions = interval.order.len();
    if theta.len() != scenario.sessions.len() || sessions != scenario.sessions.len() {
        return Err(Error::domain(format!(
            "selection vector has {} entries for {} sessions",
            theta.len(),
            scenario.sessions.len()
        )));
    }
    if mis.universe() != graph.len() {
        return Err(Error::domain(
            "MIS collection does not match the conflict graph",
        ));
    }
    let t_len = interval.length;
    let bs = scenario.base_station();
    let facilities: Vec<NodeId> = scenario.facilities().collect();
    let intervals = interval.num_intervals();
    let q_count = mis.len();
    let inf = f64::INFINITY;

    let mut lp = LinearProgram::new();
    let cr_links: Vec<(VertexId, Link)> = graph
        .link_vertices()
        .filter(|(_, l)| l.kind == LinkKind::Cr)
        .map(|(v, l)| (v, *l))
        .collect();

    let sources = scenario.edge_routers();
    let mut upsilon = Vec::new();
    let mut secondary = Vec::new();
    for &s in &sources {
        let label = &scenario.node(s).label;
        upsilon.push((s, lp.add_variable(format!("ups[{label}]"), 0.0, inf, 1.0)));
        secondary.push(
            cr_links
                .iter()
                .map(|(_, l)| {
                    lp.add_variable(format!("f[{label}]{}", l.label(scenario)), 0.0, inf, 0.0)
                })
                .collect::<Vec<_>>(),
        );
    }
    let mut primary = Vec::new();
    let mut primary_pu = Vec::new();
    for &s in &interval.order {
        let label = &scenario.session(s).label;
        primary.push(
            cr_links
                .iter()
                .map(|(_, l)| {
                    lp.add_variable(format!("fp[{label}]{}", l.label(scenario)), 0.0, inf, 0.0)
                })
                .collect::<Vec<_>>(),
        );
        let own: Vec<(VertexId, Link, usize)> = graph
            .link_vertices()
            .filter(|(_, l)| matches!(l.kind, LinkKind::PuIn(o) | LinkKind::PuOut(o) if o == s))
            .map(|(v, l)| {
                let var =
                    lp.add_variable(format!("fp[{label}]{}", l.label(scenario)), 0.0, inf, 0.0);
                (v, *l, var)
            })
            .collect();
        primary_pu.push(own);
    }
    let lambda: Vec<Vec<usize>> = (1..=intervals)
        .map(|m| {
            (0..q_count)
                .map(|q| lp.add_variable(format!("lam[{m}][{q}]"), 0.0, 1.0, 0.0))
                .collect()
        })
        .collect();
    let theta_vars: Vec<Option<usize>> = interval
        .order
        .iter()
        .map(|s| match theta[s.0] {
            ThetaValue::Relaxed => Some(lp.add_variable(
                format!("theta[{}]", scenario.session(*s).label),
                0.0,
                1.0,
                0.0,
            )),
            ThetaValue::Fixed(_) => None,
        })
        .collect();

    let zero_rhs_fix = |lp: &mut LinearProgram, vars: &[usize]| {
        for &v in vars {
            let lo = lp.variables()[v].lower;
            lp.set_bounds(v, lo, 0.0);
        }
    };

    // secondary flow routing
    for (l, &src) in sources.iter().enumerate() {
        let f = &secondary[l];
        let out_of = |i: NodeId| -> Vec<usize> {
            cr_links
                .iter()
                .enumerate()
                .filter(|(_, (_, k))| k.tx == i)
                .map(|(e, _)| f[e])
                .collect()
        };
        let into = |i: NodeId| -> Vec<usize> {
            cr_links
                .iter()
                .enumerate()
                .filter(|(_, (_, k))| k.rx == i)
                .map(|(e, _)| f[e])
                .collect()
        };
        let tag = &scenario.node(src).label;
        let mut row: Vec<(usize, f64)> = out_of(src).into_iter().map(|v| (v, 1.0)).collect();
        row.push((upsilon[l].1, -1.0));
        lp.add_constraint(format!("src_out[{tag}]"), row, Relation::Eq, 0.0);
        let back = into(src);
        lp.add_constraint(
            format!("src_in[{tag}]"),
            back.iter().map(|&v| (v, 1.0)).collect(),
            Relation::Eq,
            0.0,
        );
        zero_rhs_fix(&mut lp, &back);
        for &i in &facilities {
            if i == src || i == bs {
                continue;
            }
            let mut row: Vec<(usize, f64)> = out_of(i).into_iter().map(|v| (v, 1.0)).collect();
            row.extend(into(i).into_iter().map(|v| (v, -1.0)));
            lp.add_constraint(
                format!("relay[{tag}][{}]", scenario.node(i).label),
                row,
                Relation::Eq,
                0.0,
            );
        }
        let from_bs = out_of(bs);
        lp.add_constraint(
            format!("bs_out[{tag}]"),
            from_bs.iter().map(|&v| (v, 1.0)).collect(),
            Relation::Eq,
            0.0,
        );
        zero_rhs_fix(&mut lp, &from_bs);
    }

    // primary flow routing
    for (k, &s) in interval.order.iter().enumerate() {
        let sess = scenario.session(s);
        let tag = &sess.label;
        let pu_in: Vec<(NodeId, usize)> = primary_pu[k]
            .iter()
            .filter(|(_, l, _)| matches!(l.kind, LinkKind::PuIn(_)))
            .map(|(_, l, v)| (l.rx, *v))
            .collect();
        let pu_out: Vec<(NodeId, usize)> = primary_pu[k]
            .iter()
            .filter(|(_, l, _)| matches!(l.kind, LinkKind::PuOut(_)))
            .map(|(_, l, v)| (l.tx, *v))
            .collect();
        let demand = sess.volume / t_len / RATE_UNIT;
        let mut row: Vec<(usize, f64)> = pu_in.iter().map(|&(_, v)| (v, 1.0)).collect();
        let rhs = match (theta[s.0], theta_vars[k]) {
            (ThetaValue::Fixed(on), _) => {
                if on {
                    demand
                } else {
                    0.0
                }
            }
            (ThetaValue::Relaxed, Some(tv)) => {
                row.push((tv, -demand));
                0.0
            }
            (ThetaValue::Relaxed, None) => unreachable!(),
        };
        lp.add_constraint(format!("pu_src[{tag}]"), row, Relation::Ge, rhs);
        for &i in &facilities {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (e, (_, l)) in cr_links.iter().enumerate() {
                if l.tx == i {
                    row.push((primary[k][e], 1.0));
                }
                if l.rx == i {
                    row.push((primary[k][e], -1.0));
                }
            }
            row.extend(
                pu_out
                    .iter()
                    .filter(|(n, _)| *n == i)
                    .map(|&(_, v)| (v, 1.0)),
            );
            row.extend(
                pu_in
                    .iter()
                    .filter(|(n, _)| *n == i)
                    .map(|&(_, v)| (v, -1.0)),
            );
            lp.add_constraint(
                format!("pu_relay[{tag}][{}]", scenario.node(i).label),
                row,
                Relation::Eq,
                0.0,
            );
        }
    }

    // per-interval time budget
    for m in 1..=intervals {
        let share = interval.share(m);
        let vars = &lambda[m - 1];
        lp.add_constraint(
            format!("budget[{m}]"),
            vars.iter().map(|&v| (v, 1.0)).collect(),
            Relation::Le,
            share,
        );
        if share == 0.0 {
            zero_rhs_fix(&mut lp, vars);
        }
    }

    // protection of sessions not cooperated with
    for (k, &s) in interval.order.iter().enumerate() {
        let (_, cooperating) = mis.session_partition(graph, s);
        let t_s = scenario.session(s).length;
        for m in 1..=intervals {
            let t_prev = interval.breakpoints[m - 1];
            let window = if t_s >= t_prev {
                (t_s - t_prev).min(interval.breakpoints[m] - t_prev) / t_len
            } else {
                0.0
            };
            let vars: Vec<usize> = cooperating.iter().map(|&q| lambda[m - 1][q]).collect();
            let mut row: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
            let rhs = match (theta[s.0], theta_vars[k]) {
                (ThetaValue::Fixed(on), _) => {
                    if on {
                        window
                    } else {
                        0.0
                    }
                }
                (ThetaValue::Relaxed, Some(tv)) => {
                    row.push((tv, -window));
                    0.0
                }
                (ThetaValue::Relaxed, None) => unreachable!(),
            };
            let fixes = rhs == 0.0 && theta_vars[k].is_none();
            lp.add_constraint(
                format!("protect[{}][{m}]", scenario.session(s).label),
                row,
                Relation::Le,
                rhs,
            );
            if fixes {
                zero_rhs_fix(&mut lp, &vars);
            }
        }
    }

    // link supply from the schedule
    let supply = |v: VertexId, cap: f64, upto: usize| -> Vec<(usize, f64)> {
        let c = cap / RATE_UNIT;
        (0..q_count)
            .filter(|&q| mis.contains(q, v))
            .flat_map(|q| (0..upto).map(move |m| (m, q)))
            .map(|(m, q)| (lambda[m][q], -c))
            .collect()
    };
    for (e, (v, l)) in cr_links.iter().enumerate() {
        let tag = l.label(scenario);
        for k in 0..sessions {
            let mut row: Vec<(usize, f64)> = (0..=k).map(|kk| (primary[kk][e], 1.0)).collect();
            row.extend(supply(*v, l.capacity, k + 1));
            lp.add_constraint(format!("deliver[{tag}][{}]", k + 1), row, Relation::Le, 0.0);
        }
        let mut row: Vec<(usize, f64)> = (0..sessions).map(|k| (primary[k][e], 1.0)).collect();
        row.extend(secondary.iter().map(|f| (f[e], 1.0)));
        row.extend(supply(*v, l.capacity, intervals));
        lp.add_constraint(format!("capacity[{tag}]"), row, Relation::Le, 0.0);
    }
    for (k, own) in primary_pu.iter().enumerate() {
        for &(v, l, var) in own {
            let mut row = vec![(var, 1.0)];
            row.extend(supply(v, l.capacity, k + 1));
            lp.add_constraint(
                format!("pu_cap[{}]", l.label(scenario)),
                row,
                Relation::Le,
                0.0,
            );
        }
    }

    Ok(NlcProgram {
        lp,
        layout: NlcLayout {
            upsilon,
            cr_links,
            secondary,
            primary,
            primary_pu,
            lambda,
            theta: theta_vars,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Solve all `2^L` selection vectors.
    Exhaustive,
    /// Best-first search over selections bounded by the LP relaxation.
    BranchAndBound,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowRate {
    pub tx: NodeId,
    pub rx: NodeId,
    /// bits/s
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct NlcSolution {
    /// Indexed by session id.
    pub theta: Vec<bool>,
    /// `lambda[m - 1][q]`, fractions of `T`.
    pub lambda: Vec<Vec<f64>>,
    /// Per edge router: the router and its secondary flow over CR links.
    pub secondary: Vec<(NodeId, Vec<FlowRate>)>,
    /// Per session id: primary flow over CR and own PU-related links.
    pub primary: Vec<Vec<FlowRate>>,
    /// Per edge router, bits/s.
    pub upsilon: Vec<(NodeId, f64)>,
    /// Total secondary throughput, bits/s.
    pub objective: f64,
    /// Per session id: completion time in seconds, `None` without
    /// cooperation.
    pub completion: Vec<Option<f64>>,
    /// Per session id: link airtime spent carrying its data over the
    /// PU-related links, in seconds; `None` without cooperation.
    pub primary_airtime: Vec<Option<f64>>,
    pub interval: ControlInterval,
    /// Number of MISs available to the scheduler.
    pub mis_count: usize,
    pub lp_iterations: usize,
    /// Selection vectors solved (exhaustive) or nodes expanded (branch and
    /// bound).
    pub programs_solved: usize,
}

impl NlcSolution {
    /// Session completion time, `None` when the session is not cooperated
    /// with.
    pub fn completion_time(&self, s: SessionId) -> Option<f64> {
        self.completion.get(s.0).copied().flatten()
    }
}

#[derive(Clone, Debug)]
pub struct NlcSolver {
    pub tolerance: f64,
    pub session_limit: usize,
    pub strategy: SelectionStrategy,
}

impl Default for NlcSolver {
    fn default() -> Self {
        NlcSolver {
            tolerance: lp::DEFAULT_TOLERANCE,
            session_limit: DEFAULT_SESSION_LIMIT,
            strategy: SelectionStrategy::Exhaustive,
        }
    }
}

struct Candidate {
    theta: Vec<bool>,
    program: NlcProgram,
    values: Vec<f64>,
    objective: f64,
    iterations: usize,
}

impl NlcSolver {
    pub fn solve(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
    ) -> Result<NlcSolution> {
        let interval = select_control_interval(scenario, graph)?;
        self.solve_with_interval(scenario, graph, mis, interval)
    }

    pub fn solve_with_interval(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
        interval: ControlInterval,
    ) -> Result<NlcSolution> {
        let l = scenario.sessions.len();
        let (best, solved) = match self.strategy {
            SelectionStrategy::Exhaustive => {
                if l > self.session_limit {
                    return Err(Error::GuardExceeded {
                        what: "session count for exhaustive selection",
                        size: l,
                        limit: self.session_limit,
                    });
                }
                self.exhaustive(scenario, graph, mis, &interval)?
            }
            SelectionStrategy::BranchAndBound => {
                self.branch_and_bound(scenario, graph, mis, &interval)?
            }
        };
        let best = best.ok_or_else(|| {
            Error::Solver("no selection vector admits a feasible schedule".into())
        })?;
        Ok(self.extract(scenario, mis, interval, best, solved))
    }

    fn solve_fixed(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
        interval: &ControlInterval,
        theta: Vec<bool>,
    ) -> Result<Option<Candidate>> {
        let program = build_lp(scenario, graph, mis, interval, &theta)?;
        let sol = program.lp.solve(self.tolerance)?;
        if sol.status != LpStatus::Optimal {
            if sol.status == LpStatus::Unbounded {
                return Err(Error::Solver(
                    "scheduling program reported unbounded".into(),
                ));
            }
            return Ok(None);
        }
        if !verify_solution(&program.lp, &sol.values, self.tolerance.max(1e-9) * 10.0) {
            return Err(Error::Solver("solution failed constraint replay".into()));
        }
        Ok(Some(Candidate {
            theta,
            program,
            objective: sol.objective,
            values: sol.values,
            iterations: sol.iterations,
        }))
    }

    fn exhaustive(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
        interval: &ControlInterval,
    ) -> Result<(Option<Candidate>, usize)> {
        let l = scenario.sessions.len();
        let count = 1usize << l;
        // mask bit (l - 1 - i) holds theta[i], so ascending masks are
        // lexicographically ascending selection vectors
        let results: Vec<Result<Option<Candidate>>> = (0..count)
            .into_par_iter()
            .map(|mask| {
                let theta: Vec<bool> = (0..l).map(|i| mask >> (l - 1 - i) & 1 == 1).collect();
                self.solve_fixed(scenario, graph, mis, interval, theta)
            })
            .collect();
        let mut best: Option<Candidate> = None;
        for r in results {
            if let Some(c) = r? {
                if best
                    .as_ref()
                    .map_or(true, |b| improves(c.objective, b.objective))
                {
                    best = Some(c);
                }
            }
        }
        Ok((best, count))
    }

    fn branch_and_bound(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
        interval: &ControlInterval,
    ) -> Result<(Option<Candidate>, usize)> {
        let l = scenario.sessions.len();
        let mut best: Option<Candidate> = None;
        // open nodes: (relaxation bound, partial assignment)
        let mut open: Vec<(f64, Vec<ThetaValue>)> = Vec::new();
        let mut expanded = 0usize;
        let root = vec![ThetaValue::Relaxed; l];
        if let Some(bound) = self.relaxation(scenario, graph, mis, interval, &root)? {
            open.push((bound, root));
        }
        while let Some(idx) = best_open(&open) {
            let (bound, node) = open.swap_remove(idx);
            expanded += 1;
            if let Some(b) = &best {
                if !improves(bound, b.objective) {
                    continue;
                }
            }
            match node.iter().position(|t| *t == ThetaValue::Relaxed) {
                None => {
                    let theta = node
                        .iter()
                        .map(|t| matches!(t, ThetaValue::Fixed(true)))
                        .collect();
                    if let Some(c) = self.solve_fixed(scenario, graph, mis, interval, theta)? {
                        if best
                            .as_ref()
                            .map_or(true, |b| improves(c.objective, b.objective))
                        {
                            best = Some(c);
                        }
                    }
                }
                Some(i) => {
                    for v in [false, true] {
                        let mut child = node.clone();
                        child[i] = ThetaValue::Fixed(v);
                        if let Some(b) = self.relaxation(scenario, graph, mis, interval, &child)? {
                            open.push((b, child));
                        }
                    }
                }
            }
        }
        Ok((best, expanded))
    }

    fn relaxation(
        &self,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
        interval: &ControlInterval,
        theta: &[ThetaValue],
    ) -> Result<Option<f64>> {
        let program = build_program(scenario, graph, mis, interval, theta)?;
        let sol = program.lp.solve(self.tolerance)?;
        Ok((sol.status == LpStatus::Optimal).then_some(sol.objective))
    }

    fn extract(
        &self,
        scenario: &Scenario,
        mis: &MisCollection,
        interval: ControlInterval,
        best: Candidate,
        programs_solved: usize,
    ) -> NlcSolution {
        let x = &best.values;
        let layout = &best.program.layout;
        let rate = |v: usize| x[v] * RATE_UNIT;
        let secondary = layout
            .upsilon
            .iter()
            .zip(&layout.secondary)
            .map(|(&(src, _), vars)| {
                let flows = layout
                    .cr_links
                    .iter()
                    .zip(vars)
                    .filter(|(_, &v)| x[v] > 0.0)
                    .map(|((_, l), &v)| FlowRate {
                        tx: l.tx,
                        rx: l.rx,
                        rate: rate(v),
                    })
                    .collect();
                (src, flows)
            })
            .collect();
        let mut primary = vec![Vec::new(); scenario.sessions.len()];
        let mut completion = vec![None; scenario.sessions.len()];
        let mut airtime = vec![None; scenario.sessions.len()];
        for (k, &s) in interval.order.iter().enumerate() {
            let mut flows: Vec<FlowRate> = layout
                .cr_links
                .iter()
                .zip(&layout.primary[k])
                .filter(|(_, &v)| x[v] > 0.0)
                .map(|((_, l), &v)| FlowRate {
                    tx: l.tx,
                    rx: l.rx,
                    rate: rate(v),
                })
                .collect();
            flows.extend(
                layout.primary_pu[k]
                    .iter()
                    .filter(|(_, _, v)| x[*v] > 0.0)
                    .map(|(_, l, v)| FlowRate {
                        tx: l.tx,
                        rx: l.rx,
                        rate: rate(*v),
                    }),
            );
            primary[s.0] = flows;
            if best.theta[s.0] {
                completion[s.0] = Some(completion_from_schedule(
                    scenario, mis, &interval, layout, x, k,
                ));
                airtime[s.0] = Some(pu_airtime(scenario, &interval, layout, x, k));
            }
        }
        NlcSolution {
            theta: best.theta,
            lambda: layout
                .lambda
                .iter()
                .map(|row| row.iter().map(|&v| x[v]).collect())
                .collect(),
            secondary,
            primary,
            upsilon: layout.upsilon.iter().map(|&(n, v)| (n, rate(v))).collect(),
            objective: best.objective * RATE_UNIT,
            completion,
            primary_airtime: airtime,
            mis_count: mis.len(),
            lp_iterations: best.iterations,
            programs_solved,
            interval,
        }
    }
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + OBJECTIVE_RTOL * incumbent.abs().max(1.0)
}

fn best_open(open: &[(f64, Vec<ThetaValue>)]) -> Option<usize> {
    // highest bound first; earlier insertion wins ties
    let mut best: Option<usize> = None;
    for (i, (b, _)) in open.iter().enumerate() {
        if best.map_or(true, |j| *b > open[j].0) {
            best = Some(i);
        }
    }
    best
}

/// Smallest breakpoint by which the schedule has supplied enough airtime on
/// the session's PU-related links to move its whole volume in and out.
fn completion_from_schedule(
    scenario: &Scenario,
    mis: &MisCollection,
    interval: &ControlInterval,
    layout: &NlcLayout,
    x: &[f64],
    k: usize,
) -> f64 {
    let s = interval.order[k];
    let volume = scenario.session(s).volume;
    let t_len = interval.length;
    for m in 1..=interval.num_intervals() {
        let mut inbound = 0.0;
        let mut outbound = 0.0;
        for &(v, l, var) in &layout.primary_pu[k] {
            let supplied: f64 = (0..mis.len())
                .filter(|&q| mis.contains(q, v))
                .map(|q| (0..m).map(|mm| x[layout.lambda[mm][q]]).sum::<f64>())
                .sum::<f64>()
                * l.capacity;
            let delivered = (x[var] * RATE_UNIT).min(supplied) * t_len;
            match l.kind {
                LinkKind::PuIn(_) => inbound += delivered,
                _ => outbound += delivered,
            }
        }
        if inbound.min(outbound) >= volume * (1.0 - 1e-7) {
            return interval.breakpoints[m];
        }
    }
    interval.breakpoints[k + 1]
}

/// Seconds of PU-related link activity needed to carry the session volume,
/// split over links in proportion to the scheduled flow.
fn pu_airtime(
    scenario: &Scenario,
    interval: &ControlInterval,
    layout: &NlcLayout,
    x: &[f64],
    k: usize,
) -> f64 {
    let s = interval.order[k];
    let volume = scenario.session(s).volume;
    let mut total = 0.0;
    for dir_in in [true, false] {
        let links: Vec<&(VertexId, Link, usize)> = layout.primary_pu[k]
            .iter()
            .filter(|(_, l, _)| matches!(l.kind, LinkKind::PuIn(_)) == dir_in)
            .collect();
        let flow: f64 = links.iter().map(|(_, _, v)| x[*v]).sum();
        if flow <= 0.0 {
            continue;
        }
        for (_, l, v) in links {
            total += volume * (x[*v] / flow) / l.capacity;
        }
    }
    total
}

/// Runs the full optimiser on a scenario with a given MIS generator.
pub fn solve_nlc(
    scenario: &Scenario,
    graph: &ConflictGraph,
    mis: &MisCollection,
) -> Result<NlcSolution> {
    NlcSolver::default().solve(scenario, graph, mis)
}

/// `rho * active + (1 - rho) * idle`.
pub fn blend_throughput(rho: f64, active: f64, idle: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "activity probability {rho} outside [0, 1]"
        )));
    }
    Ok(rho * active + (1.0 - rho) * idle)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectedThroughput {
    /// With sessions active, bits/s.
    pub active: f64,
    /// On idle spectrum (no sessions), bits/s.
    pub idle: f64,
    pub rho: f64,
    pub expected: f64,
}

/// Expected throughput over PU activity: the cooperative optimum with
/// probability `rho`, the idle-spectrum optimum otherwise. `idle_mis`
/// must be a collection over the idle scenario's conflict graph.
pub fn expected_throughput(
    solver: &NlcSolver,
    scenario: &Scenario,
    graph: &ConflictGraph,
    mis: &MisCollection,
    idle_graph: &ConflictGraph,
    idle_mis: &MisCollection,
    rho: f64,
) -> Result<ExpectedThroughput> {
    let active = solver.solve(scenario, graph, mis)?.objective;
    let idle = idle_optimum(solver, scenario, idle_graph, idle_mis)?;
    Ok(ExpectedThroughput {
        active,
        idle,
        rho,
        expected: blend_throughput(rho, active, idle)?,
    })
}

/// Secondary optimum on the scenario with every session removed, scheduled
/// over one second.
pub fn idle_optimum(
    solver: &NlcSolver,
    scenario: &Scenario,
    idle_graph: &ConflictGraph,
    idle_mis: &MisCollection,
) -> Result<f64> {
    let idle = scenario.without_sessions();
    let interval = ControlInterval::with_length(&idle, 1.0, true)?;
    Ok(solver
        .solve_with_interval(&idle, idle_graph, idle_mis, interval)?
        .objective)
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaEntry {
    pub interval: usize,
    pub mis: Vec<String>,
    pub share: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabeledFlow {
    pub flow: String,
    pub tx: String,
    pub rx: String,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionReport {
    pub session: String,
    pub length_s: f64,
    pub volume_bits: f64,
    pub cooperate: bool,
    pub promised_finish_s: f64,
    pub completion_s: Option<f64>,
    pub primary_airtime_s: Option<f64>,
}

/// Human-facing JSON view of a solution with node and MIS labels.
#[derive(Clone, Debug, Serialize)]
pub struct NlcReport {
    pub objective_bps: f64,
    pub control_interval_s: f64,
    pub control_interval_fallback: bool,
    pub breakpoints_s: Vec<f64>,
    pub mis_count: usize,
    pub sessions: Vec<SessionReport>,
    pub upsilon_bps: Vec<(String, f64)>,
    pub lambda: Vec<LambdaEntry>,
    pub secondary_flows: Vec<LabeledFlow>,
    pub primary_flows: Vec<LabeledFlow>,
}

impl NlcReport {
    pub fn new(
        solution: &NlcSolution,
        scenario: &Scenario,
        graph: &ConflictGraph,
        mis: &MisCollection,
    ) -> Self {
        let name = |n: NodeId| scenario.node(n).label.clone();
        let iv = &solution.interval;
        let sessions = scenario
            .session_ids()
            .map(|s| {
                let sess = scenario.session(s);
                SessionReport {
                    session: sess.label.clone(),
                    length_s: sess.length,
                    volume_bits: sess.volume,
                    cooperate: solution.theta[s.0],
                    promised_finish_s: iv.breakpoints[iv.rank(s)],
                    completion_s: solution.completion[s.0],
                    primary_airtime_s: solution.primary_airtime[s.0],
                }
            })
            .collect();
        let mut lambda = Vec::new();
        for (m, row) in solution.lambda.iter().enumerate() {
            for (q, &share) in row.iter().enumerate() {
                if share > 0.0 {
                    lambda.push(LambdaEntry {
                        interval: m + 1,
                        mis: mis
                            .set(q)
                            .iter()
                            .map(|v| graph.vertex_label(*v, scenario))
                            .collect(),
                        share,
                    });
                }
            }
        }
        let mut secondary_flows = Vec::new();
        for (src, flows) in &solution.secondary {
            for f in flows {
                secondary_flows.push(LabeledFlow {
                    flow: name(*src),
                    tx: name(f.tx),
                    rx: name(f.rx),
                    rate_bps: f.rate,
                });
            }
        }
        let mut primary_flows = Vec::new();
        for s in scenario.session_ids() {
            for f in &solution.primary[s.0] {
                primary_flows.push(LabeledFlow {
                    flow: scenario.session(s).label.clone(),
                    tx: name(f.tx),
                    rx: name(f.rx),
                    rate_bps: f.rate,
                });
            }
        }
        NlcReport {
            objective_bps: solution.objective,
            control_interval_s: iv.length,
            control_interval_fallback: iv.fallback,
            breakpoints_s: iv.breakpoints.clone(),
            mis_count: solution.mis_count,
            sessions,
            upsilon_bps: solution
                .upsilon
                .iter()
                .map(|&(n, r)| (name(n), r))
                .collect(),
            lambda,
            secondary_flows,
            primary_flows,
        }
    }
}

/// Per-session protection check: with `theta = 0`, every MIS that omits the
/// session vertex has exactly zero share in every interval.
pub fn protection_holds(
    solution: &NlcSolution,
    graph: &ConflictGraph,
    mis: &MisCollection,
) -> bool {
    solution.theta.iter().enumerate().all(|(s, &on)| {
        on || {
            let (_, cooperating) = mis.session_partition(graph, SessionId(s));
            solution
                .lambda
                .iter()
                .all(|row| cooperating.iter().all(|&q| row[q] == 0.0))
        }
    })
}
