//! Linear programs in maximisation form and a bounded-variable revised
//! simplex solver.
//!
//! The solver keeps the basis inverse in product form, appending one eta per
//! pivot and refactoring from scratch every [`REINVERT_EVERY`] pivots. Phase I minimises the sum of artificial
//! variables; Phase II optimises the user objective. Pricing uses Devex
//! reference weights with a Harris ratio test. A run of degenerate pivots
//! first triggers a small random widening of the basic bounds, which is
//! removed at the end by a dual simplex cleanup; if degeneracy persists the
//! solver falls back to Bland's smallest-index rule so that cycling cannot
//! occur.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod eta;

use eta::EtaFile;

/// Absolute residual tolerance used when the caller has no preference.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Relative tolerance for comparing objective values.
pub const OBJECTIVE_RTOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const REINVERT_EVERY: usize = 100;
const DEGENERATE_SWITCH: usize = 1000;
/// Degenerate pivots tolerated before the basic bounds are perturbed.
const PERTURB_AFTER: usize = 50;
/// Relative size of a bound perturbation.
const PERTURB_SCALE: f64 = 1e-7;
const MAX_PERTURBATIONS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize c·x` subject to row constraints and per-variable bounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at `values`; zero unless optimal.
    pub objective: f64,
    /// One entry per variable; empty unless optimal.
    pub values: Vec<f64>,
    /// Row multipliers at the optimum: non-negative on `<=` rows,
    /// non-positive on `>=` rows.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        objective: f64,
    ) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            objective,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.variables[var].lower = lower;
        self.variables[var].upper = upper;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, xi)| v.objective * xi)
            .sum()
    }

    pub fn activity(&self, row: usize, x: &[f64]) -> f64 {
        self.constraints[row]
            .coeffs
            .iter()
            .map(|&(j, a)| a * x[j])
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.variables {
            if v.lower.is_nan()
                || v.upper.is_nan()
                || v.lower > v.upper
                || v.lower == f64::INFINITY
                || v.upper == f64::NEG_INFINITY
            {
                return Err(Error::domain(format!(
                    "variable {} has invalid bounds",
                    v.name
                )));
            }
            if !v.objective.is_finite() {
                return Err(Error::domain(format!(
                    "variable {} has a non-finite cost",
                    v.name
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::domain(format!(
                    "row {} has a non-finite rhs",
                    c.name
                )));
            }
            for &(j, a) in &c.coeffs {
                if j >= self.variables.len() {
                    return Err(Error::domain(format!(
                        "row {} references unknown variable {j}",
                        c.name
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::domain(format!(
                        "row {} has a non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, tolerance: f64) -> Result<LpSolution> {
        solve_lp(self, tolerance)
    }

    /// Plain-text dump. Format, one item per line:
    ///
    /// ```text
    /// maximize
    /// vars <n>
    /// var <name> <lower> <upper> <cost>
    /// rows <m>
    /// row <name> <<=|=|>=> <rhs> <k> <var>:<coef> ...
    /// ```
    ///
    /// Bounds may be `inf` / `-inf`. Numbers use shortest round-trip
    /// formatting, so parsing a dump reproduces the program exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from("maximize\n");
        let _ = writeln!(out, "vars {}", self.variables.len());
        for v in &self.variables {
            let _ = writeln!(
                out,
                "var {} {} {} {}",
                v.name, v.lower, v.upper, v.objective
            );
        }
        let _ = writeln!(out, "rows {}", self.constraints.len());
        for c in &self.constraints {
            let _ = write!(
                out,
                "row {} {} {} {}",
                c.name,
                c.relation.symbol(),
                c.rhs,
                c.coeffs.len()
            );
            for &(j, a) in &c.coeffs {
                let _ = write!(out, " {j}:{a}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Parse(format!("malformed LP line {line:?}"));
        let num = |s: &str, line: &str| s.parse::<f64>().map_err(|_| bad(line));
        let mut lp = LinearProgram::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "maximize" | "vars" | "rows" => {}
                "var" if tok.len() == 5 => {
                    lp.add_variable(
                        tok[1],
                        num(tok[2], line)?,
                        num(tok[3], line)?,
                        num(tok[4], line)?,
                    );
                }
                "row" if tok.len() >= 5 => {
                    let relation = match tok[2] {
                        "<=" => Relation::Le,
                        "=" => Relation::Eq,
                        ">=" => Relation::Ge,
                        _ => return Err(bad(line)),
                    };
                    let k: usize = tok[4].parse().map_err(|_| bad(line))?;
                    if tok.len() != 5 + k {
                        return Err(bad(line));
                    }
                    let coeffs = tok[5..]
                        .iter()
                        .map(|t| {
                            let (j, a) = t.split_once(':').ok_or_else(|| bad(line))?;
                            Ok((j.parse::<usize>().map_err(|_| bad(line))?, num(a, line)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    lp.add_constraint(tok[1], coeffs, relation, num(tok[3], line)?);
                }
                _ => return Err(bad(line)),
            }
        }
        lp.validate()?;
        Ok(lp)
    }
}

fn nearest_bound(v: f64, lb: f64, ub: f64) -> f64 {
    match (lb.is_finite(), ub.is_finite()) {
        (true, true) => {
            if (v - lb).abs() <= (ub - v).abs() {
                lb
            } else {
                ub
            }
        }
        (true, false) => lb,
        (false, true) => ub,
        (false, false) => 0.0,
    }
}

/// True iff `x` respects every bound and row within `tolerance`, scaled by
/// the magnitude of the bound or right-hand side when that exceeds one.
pub fn verify_solution(lp: &LinearProgram, x: &[f64], tolerance: f64) -> bool {
    if x.len() != lp.num_variables() || x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let slack = |bound: f64| tolerance * bound.abs().max(1.0);
    for (v, &xi) in lp.variables.iter().zip(x) {
        if xi < v.lower - slack(v.lower) || xi > v.upper + slack(v.upper) {
            return false;
        }
    }
    for (r, c) in lp.constraints.iter().enumerate() {
        let act = lp.activity(r, x);
        let ok = match c.relation {
            Relation::Le => act <= c.rhs + slack(c.rhs),
            Relation::Ge => act >= c.rhs - slack(c.rhs),
            Relation::Eq => (act - c.rhs).abs() <= slack(c.rhs),
        };
        if !ok {
            return false;
        }
    }
    true
}

pub fn solve_lp(lp: &LinearProgram, tolerance: f64) -> Result<LpSolution> {
    lp.validate()?;
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::domain("LP tolerance must be positive"));
    }
    let mut s = Simplex::new(lp);
    // phase I
    if s.num_artificial > 0 {
        s.set_phase_one_costs();
        s.run()?;
        let infeasibility: f64 = s.artificial_range().map(|j| s.x[j]).sum();
        let scale = s.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > 1e-7 * scale {
            return Ok(s.unsolved(LpStatus::Infeasible));
        }
        s.retire_artificials()?;
    }
    s.set_phase_two_costs(lp);
    finish(lp, s, tolerance)
}

/// Phase II from a primal or dual feasible basis, then the final replay.
fn finish(lp: &LinearProgram, mut s: Simplex, tolerance: f64) -> Result<LpSolution> {
    if !s.run()? {
        return Ok(s.unsolved(LpStatus::Unbounded));
    }
    s.reinvert()?;
    let duals = s.duals();
    let values: Vec<f64> = s.x[..s.n].to_vec();
    if !verify_solution(lp, &values, tolerance.max(1e-12) * 1e3) {
        return Err(Error::Solver(
            "basic solution drifted outside the feasible region".into(),
        ));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
        duals,
        iterations: s.iterations,
    })
}

/// Working state. Columns are the structural variables, then one slack per
/// row (`A x + s = b`), then artificials.
struct Simplex {
    m: usize,
    n: usize,
    num_artificial: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Product-form `B^-1`; row `r` of the inverse belongs to basis
    /// position `r`.
    inv: EtaFile,
    iterations: usize,
    max_iterations: usize,
    since_reinvert: usize,
}

impl Simplex {
    fn new(lp: &LinearProgram) -> Self {
        let m = lp.num_constraints();
        let n = lp.num_variables();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                match cols[j].last_mut() {
                    Some((row, v)) if *row == i => *v += a,
                    _ => cols[j].push((i, a)),
                }
            }
        }
        for col in &mut cols {
            col.retain(|&(_, a)| a != 0.0);
        }
        let mut lb: Vec<f64> = lp.variables.iter().map(|v| v.lower).collect();
        let mut ub: Vec<f64> = lp.variables.iter().map(|v| v.upper).collect();
        let mut x: Vec<f64> = lp
            .variables
            .iter()
            .map(|v| {
                if v.lower.is_finite() {
                    v.lower
                } else if v.upper.is_finite() {
                    v.upper
                } else {
                    0.0
                }
            })
            .collect();
        let b: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
        let mut residual = b.clone();
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                residual[i] -= a * x[j];
            }
        }

        let mut basis = Vec::with_capacity(m);
        let mut artificials = Vec::new();
        for (i, c) in lp.constraints.iter().enumerate() {
            let (slo, shi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            let slack = cols.len();
            cols.push(vec![(i, 1.0)]);
            lb.push(slo);
            ub.push(shi);
            let r = residual[i];
            if r >= slo && r <= shi {
                x.push(r);
                basis.push(slack);
            } else {
                x.push(0.0);
                artificials.push((i, r));
                basis.push(usize::MAX);
            }
        }
        let num_artificial = artificials.len();
        let mut inv = EtaFile::new();
        for (i, r) in artificials {
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            let art = cols.len();
            cols.push(vec![(i, sign)]);
            lb.push(0.0);
            ub.push(f64::INFINITY);
            x.push(r.abs());
            basis[i] = art;
            let mut unit = vec![0.0; m];
            unit[i] = sign;
            inv.push(i, &unit);
        }
        let total = cols.len();
        let mut in_basis = vec![false; total];
        for &k in &basis {
            in_basis[k] = true;
        }
        Simplex {
            m,
            n,
            num_artificial,
            cols,
            lb,
            ub,
            cost: vec![0.0; total],
            x,
            b,
            basis,
            in_basis,
            inv,
            iterations: 0,
            max_iterations: 50 * (total + m) + 10_000,
            since_reinvert: 0,
        }
    }

    fn unsolved(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            objective: 0.0,
            values: Vec::new(),
            duals: Vec::new(),
            iterations: self.iterations,
        }
    }

    fn artificial_range(&self) -> std::ops::Range<usize> {
        self.n + self.m..self.cols.len()
    }

    fn set_phase_one_costs(&mut self) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for j in self.artificial_range() {
            self.cost[j] = -1.0;
        }
    }

    fn set_phase_two_costs(&mut self, lp: &LinearProgram) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for (j, v) in lp.variables.iter().enumerate() {
            self.cost[j] = v.objective;
        }
    }

    /// Pivots zero-valued basic artificials out where possible and fixes
    /// every artificial at zero.
    fn retire_artificials(&mut self) -> Result<()> {
        let arts = self.artificial_range();
        for r in 0..self.m {
            if !arts.contains(&self.basis[r]) {
                continue;
            }
            let rho = self.inverse_row(r);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..arts.start {
                if self.in_basis[j] || self.lb[j] == self.ub[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                if a.abs() > 1e-7 && best.map_or(true, |(_, b)| a.abs() > b.abs()) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                let leaving = self.basis[r];
                self.pivot(r, j, &alpha);
                self.x[leaving] = 0.0;
            }
        }
        for j in arts {
            self.ub[j] = 0.0;
            if !self.in_basis[j] {
                self.x[j] = 0.0;
            }
        }
        self.reinvert()
    }

    fn duals(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&k| self.cost[k]).collect();
        self.inv.btran(&mut y);
        y
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; self.m];
        for &(i, a) in &self.cols[j] {
            alpha[i] = a;
        }
        self.inv.ftran(&mut alpha);
        alpha
    }

    /// Row `r` of `B^-1`.
    fn inverse_row(&self, r: usize) -> Vec<f64> {
        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.inv.btran(&mut rho);
        rho
    }

    fn price(&self, y: &[f64], weights: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols.len() {
            if self.in_basis[j] || self.lb[j] == self.ub[j] {
                continue;
            }
            let d = self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>();
            let dir = if d > DUAL_TOL && self.x[j] < self.ub[j] {
                1.0
            } else if d < -DUAL_TOL && self.x[j] > self.lb[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = d * d / weights[j];
            if best.map_or(true, |(_, _, bs)| score > bs) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Devex reference weights, updated from the pivot row before the basis
    /// changes.
    fn update_devex(&self, weights: &mut [f64], row: &[f64], r: usize, q: usize, alpha_rq: f64) {
        let wq = weights[q];
        for j in 0..self.cols.len() {
            if j == q || self.in_basis[j] || self.lb[j] == self.ub[j] {
                continue;
            }
            let a: f64 = self.cols[j].iter().map(|&(i, v)| row[i] * v).sum();
            if a != 0.0 {
                let ratio = a / alpha_rq;
                weights[j] = weights[j].max(ratio * ratio * wq);
            }
        }
        weights[self.basis[r]] = (wq / (alpha_rq * alpha_rq)).max(1.0);
    }

    /// Limit on the entering step imposed by basic row `r`, with the
    /// bound the leaving variable would hit, or `None` if unlimited.
    fn row_limit(&self, r: usize, dir: f64, a: f64, slack_tol: f64) -> Option<(f64, bool)> {
        let k = self.basis[r];
        let rate = -dir * a;
        if rate < 0.0 {
            if self.lb[k] == f64::NEG_INFINITY {
                return None;
            }
            Some((
                ((self.x[k] - self.lb[k]).max(0.0) + slack_tol) / -rate,
                false,
            ))
        } else {
            if self.ub[k] == f64::INFINITY {
                return None;
            }
            Some((((self.ub[k] - self.x[k]).max(0.0) + slack_tol) / rate, true))
        }
    }

    /// Textbook ratio test; ties go to the smallest basic variable index.
    fn ratio_test_bland(&self, j: usize, dir: f64, alpha: &[f64]) -> (f64, Option<(usize, bool)>) {
        let mut step = self.ub[j] - self.lb[j];
        let mut leave: Option<(usize, bool)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let Some((limit, to_upper)) = self.row_limit(r, dir, a, 0.0) else {
                continue;
            };
            let better = if limit < step - TIE_TOL {
                true
            } else if limit <= step + TIE_TOL {
                matches!(leave, Some((lr, _)) if self.basis[r] < self.basis[lr])
            } else {
                false
            };
            if better {
                step = limit;
                leave = Some((r, to_upper));
            }
        }
        (step, leave)
    }

    /// Two-pass ratio test: bounds relaxed by `FEAS_TOL` fix the longest
    /// admissible step, then the largest pivot within it leaves.
    fn ratio_test_harris(&self, j: usize, dir: f64, alpha: &[f64]) -> (f64, Option<(usize, bool)>) {
        let flip = self.ub[j] - self.lb[j];
        let mut relaxed = flip;
        for (r, &a) in alpha.iter().enumerate() {
            if a.abs() > PIVOT_TOL {
                if let Some((limit, _)) = self.row_limit(r, dir, a, FEAS_TOL) {
                    relaxed = relaxed.min(limit);
                }
            }
        }
        if relaxed == f64::INFINITY {
            return (f64::INFINITY, None);
        }
        let mut leave: Option<(usize, bool)> = None;
        let mut step = f64::INFINITY;
        let mut piv = 0.0f64;
        for (r, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL || a.abs() <= piv {
                continue;
            }
            if let Some((limit, to_upper)) = self.row_limit(r, dir, a, 0.0) {
                if limit <= relaxed {
                    leave = Some((r, to_upper));
                    step = limit;
                    piv = a.abs();
                }
            }
        }
        if leave.is_none() || flip <= step {
            return (flip, None);
        }
        (step, leave)
    }

    fn pivot(&mut self, r: usize, j: usize, alpha: &[f64]) {
        self.inv.push(r, alpha);
        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[j] = true;
        self.basis[r] = j;
        self.since_reinvert += 1;
    }

    /// Refactors the basis from scratch and recomputes the basic values from
    /// the nonbasic ones. Columns are taken sparsest first so slacks and
    /// other singletons cost nothing; each pivots on its largest entry among
    /// the rows still free. A column that proves dependent is parked at its
    /// nearest bound and the slack of a free row takes its place.
    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        self.inv.clear();
        let mut order = self.basis.clone();
        order.sort_by_key(|&j| (self.cols[j].len(), j));
        let mut placed = vec![usize::MAX; m];
        let mut work = vec![0.0; m];
        for j in order {
            for &(i, a) in &self.cols[j] {
                work[i] = a;
            }
            self.inv.ftran(&mut work);
            let mut p = usize::MAX;
            let mut pv = 0.0f64;
            for (i, &v) in work.iter().enumerate() {
                if placed[i] == usize::MAX && v.abs() > pv {
                    p = i;
                    pv = v.abs();
                }
            }
            if pv < SINGULAR_TOL {
                self.in_basis[j] = false;
                self.x[j] = nearest_bound(self.x[j], self.lb[j], self.ub[j]);
            } else {
                self.inv.push(p, &work);
                placed[p] = j;
            }
            work.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, slot) in placed.iter_mut().enumerate() {
            if *slot == usize::MAX {
                let slack = self.n + i;
                if self.in_basis[slack] {
                    return Err(Error::Solver("basis matrix became singular".into()));
                }
                self.in_basis[slack] = true;
                *slot = slack;
            }
        }
        self.basis = placed;
        let mut rhs = self.b.clone();
        for j in 0..self.cols.len() {
            if !self.in_basis[j] && self.x[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    rhs[i] -= v * self.x[j];
                }
            }
        }
        self.inv.ftran(&mut rhs);
        for (k, v) in rhs.into_iter().enumerate() {
            self.x[self.basis[k]] = v;
        }
        self.since_reinvert = 0;
        Ok(())
    }

    /// Widens the finite bounds of every basic, non-fixed, non-artificial
    /// variable by a small random amount. Returns the original bounds.
    fn perturb_bounds(&mut self, round: u64) -> Vec<(usize, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + round);
        let arts = self.artificial_range();
        let mut orig = Vec::new();
        for &k in &self.basis {
            if arts.contains(&k) || self.lb[k] == self.ub[k] {
                continue;
            }
            orig.push((k, self.lb[k], self.ub[k]));
            if self.lb[k].is_finite() {
                self.lb[k] -= (1.0 + self.lb[k].abs()) * PERTURB_SCALE * (1.0 + rng.gen::<f64>());
            }
            if self.ub[k].is_finite() {
                self.ub[k] += (1.0 + self.ub[k].abs()) * PERTURB_SCALE * (1.0 + rng.gen::<f64>());
            }
        }
        orig
    }

    /// Puts the original bounds back, moves nonbasic variables from a
    /// perturbed bound to the true one and recomputes the basic values.
    fn restore_bounds(&mut self, orig: &[(usize, f64, f64)]) -> Result<()> {
        for &(k, lo, hi) in orig {
            if !self.in_basis[k] {
                if self.x[k] == self.lb[k] {
                    self.x[k] = lo;
                } else if self.x[k] == self.ub[k] {
                    self.x[k] = hi;
                } else {
                    self.x[k] = self.x[k].clamp(lo, hi);
                }
            }
            self.lb[k] = lo;
            self.ub[k] = hi;
        }
        self.reinvert()
    }

    /// Bounded dual simplex from a dual feasible basis until every basic
    /// variable is back within its bounds. Returns `false` if a violated
    /// row admits no entering column, which proves primal infeasibility.
    fn dual_cleanup(&mut self) -> Result<bool> {
        let mut y = self.duals();
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Solver(format!(
                    "iteration limit of {} reached",
                    self.max_iterations
                )));
            }
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
                y = self.duals();
            }
            let mut leave: Option<(usize, f64, f64)> = None;
            for (r, &k) in self.basis.iter().enumerate() {
                let (lo, hi, v) = (self.lb[k], self.ub[k], self.x[k]);
                let (viol, target) = if v < lo - FEAS_TOL * (1.0 + lo.abs()) {
                    (lo - v, lo)
                } else if v > hi + FEAS_TOL * (1.0 + hi.abs()) {
                    (v - hi, hi)
                } else {
                    continue;
                };
                if leave.map_or(true, |(_, bv, _)| viol > bv) {
                    leave = Some((r, viol, target));
                }
            }
            let Some((r, _, target)) = leave else {
                return Ok(true);
            };
            let k = self.basis[r];
            let delta = self.x[k] - target;
            let rho = self.inverse_row(r);
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for j in 0..self.cols.len() {
                if self.in_basis[j] || self.lb[j] == self.ub[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                // the entering step is delta / a and must be admissible
                let t_sign = delta / a;
                let can_rise = self.x[j] < self.ub[j];
                let can_fall = self.x[j] > self.lb[j];
                if !((t_sign > 0.0 && can_rise) || (t_sign < 0.0 && can_fall)) {
                    continue;
                }
                let d = self.cost[j] - self.cols[j].iter().map(|&(i, v)| y[i] * v).sum::<f64>();
                let ratio = d.abs() / a.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba, _)) => {
                        ratio < br - TIE_TOL || (ratio <= br + TIE_TOL && a.abs() > ba.abs())
                    }
                };
                if better {
                    best = Some((j, ratio, a, d));
                }
            }
            let Some((q, _, a, d)) = best else {
                return Ok(false);
            };
            let t = delta / a;
            let alpha = self.ftran(q);
            self.x[q] += t;
            for (i, &ai) in alpha.iter().enumerate() {
                if ai != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= t * ai;
                }
            }
            self.pivot(r, q, &alpha);
            self.x[k] = target;
            // row r of the new inverse is rho / a
            for (yi, &ri) in y.iter_mut().zip(&rho) {
                *yi += d / a * ri;
            }
            self.iterations += 1;
        }
    }

    /// Primal simplex from the current basic feasible solution. Returns
    /// `false` if the objective is unbounded.
    fn run(&mut self) -> Result<bool> {
        let mut degenerate_run = 0usize;
        let mut y = self.duals();
        let mut weights = vec![1.0; self.cols.len()];
        let mut saved: Option<Vec<(usize, f64, f64)>> = None;
        let mut perturbations = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Solver(format!(
                    "iteration limit of {} reached",
                    self.max_iterations
                )));
            }
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
                y = self.duals();
            }
            if saved.is_none()
                && perturbations < MAX_PERTURBATIONS
                && degenerate_run >= PERTURB_AFTER
            {
                saved = Some(self.perturb_bounds(perturbations as u64));
                perturbations += 1;
                degenerate_run = 0;
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let Some((j, dir)) = self.price(&y, &weights, bland) else {
                let Some(orig) = saved.take() else {
                    return Ok(true);
                };
                self.restore_bounds(&orig)?;
                if !self.dual_cleanup()? {
                    return Err(Error::Solver(
                        "bound perturbation lost primal feasibility".into(),
                    ));
                }
                y = self.duals();
                weights.iter_mut().for_each(|w| *w = 1.0);
                degenerate_run = 0;
                continue;
            };
            let alpha = self.ftran(j);
            let (step, leave) = if bland {
                self.ratio_test_bland(j, dir, &alpha)
            } else {
                self.ratio_test_harris(j, dir, &alpha)
            };
            if step == f64::INFINITY {
                return Ok(false);
            }

            self.x[j] += dir * step;
            for (r, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let k = self.basis[r];
                    self.x[k] -= dir * step * a;
                }
            }
            match leave {
                None => self.x[j] = if dir > 0.0 { self.ub[j] } else { self.lb[j] },
                Some((r, to_upper)) => {
                    let k = self.basis[r];
                    let d = self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>();
                    let rho = self.inverse_row(r);
                    self.update_devex(&mut weights, &rho, r, j, alpha[r]);
                    self.pivot(r, j, &alpha);
                    self.x[k] = if to_upper { self.ub[k] } else { self.lb[k] };
                    // y' = y + d_j * (row r of the new inverse)
                    let scale = d / alpha[r];
                    for (yi, &ri) in y.iter_mut().zip(&rho) {
                        *yi += scale * ri;
                    }
                }
            }
            if step <= TIE_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.iterations += 1;
        }
    }
}
