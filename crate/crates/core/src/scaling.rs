//! Per-SU throughput scaling of a CCHN with `n` SUs, `n^b` facilities of
//! which `n^d` are BSs: tail bounds, load bounds, flow-count bounds and the
//! resulting throughput classes, with Monte Carlo checks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Trials per independent RNG stream in the Monte Carlo routines.
const CHUNK: usize = 10_000;

/// Minimum trial count accepted by [`monte_carlo_tail`].
pub const MIN_TAIL_TRIALS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingParams {
    /// Number of SUs.
    pub n: f64,
    /// Facility exponent.
    pub b: f64,
    /// BS exponent.
    pub d: f64,
    /// Bandwidth available to the facilities.
    pub w: f64,
    /// Bound on BSs per row when BSs are sparse.
    pub c1: f64,
    /// Bound on BSs per column when BSs are sparse.
    pub c2: f64,
    /// Per-subsquare rate factor.
    pub c3: f64,
}

impl ScalingParams {
    pub fn new(n: f64, b: f64, d: f64, w: f64) -> Result<Self> {
        let p = ScalingParams {
            n,
            b,
            d,
            w,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n >= 2.0) {
            return Err(Error::domain(format!("n = {} must be at least 2", self.n)));
        }
        if !(0.0 < self.d && self.d <= self.b && self.b < 1.0) {
            return Err(Error::domain(format!(
                "exponents must satisfy 0 < d <= b < 1, got b = {}, d = {}",
                self.b, self.d
            )));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::domain(format!(
                "bandwidth {} must be positive",
                self.w
            )));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::domain(format!("{name} = {c} must be positive")));
            }
        }
        Ok(())
    }

    fn pow(&self, e: f64) -> f64 {
        self.n.powf(e)
    }

    pub fn regime(&self) -> Regime {
        if self.d == self.b {
            Regime::AllBs
        } else if self.d > self.b / 2.0 {
            Regime::DenseBs
        } else {
            Regime::SparseBs
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `d = b`: every facility is a BS.
    AllBs,
    /// `b/2 < d < b`.
    DenseBs,
    /// `d <= b/2`.
    SparseBs,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::AllBs => "all_bs",
            Regime::DenseBs => "dense_bs",
            Regime::SparseBs => "sparse_bs",
        }
    }
}

/// `(1 + delta) ln(1 + delta) - delta`.
pub fn deviation_rate(delta: f64) -> f64 {
    (1.0 + delta) * delta.ln_1p() - delta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub mu: f64,
    pub delta: f64,
    pub bound: f64,
}

/// Upper bound on `P(X >= (1 + delta) mu)` for a sum of independent
/// Bernoulli variables with mean `mu`.
pub fn chernoff_bound(mu: f64, delta: f64) -> Result<f64> {
    Ok(tail_bound(mu, delta)?.bound)
}

pub fn tail_bound(mu: f64, delta: f64) -> Result<TailBound> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::domain(format!("mean {mu} must be positive")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(format!("deviation {delta} must be positive")));
    }
    Ok(TailBound {
        mu,
        delta,
        bound: (-mu * deviation_rate(delta)).exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub eta: u64,
    pub p: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub hits: usize,
    pub empirical: f64,
    /// Standard error of `empirical`.
    pub std_err: f64,
    pub bound: f64,
}

impl TailEstimate {
    /// True iff the empirical frequency is within `sigmas` standard errors of
    /// the analytic bound. The error uses the bound itself as the reference
    /// probability so that a zero empirical count is never penalised.
    pub fn within(&self, sigmas: f64) -> bool {
        let q = self.bound.clamp(0.0, 1.0);
        let sigma = (q * (1.0 - q) / self.trials as f64).sqrt();
        self.empirical <= self.bound + sigmas * sigma
    }
}

/// Empirical frequency of `X >= (1 + delta) eta p` for `X ~ Bin(eta, p)`.
pub fn monte_carlo_tail(
    eta: u64,
    p: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TailEstimate> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::domain(format!("probability {p} outside (0, 1)")));
    }
    if eta == 0 {
        return Err(Error::domain("need at least one Bernoulli term"));
    }
    if trials < MIN_TAIL_TRIALS {
        return Err(Error::domain(format!(
            "need at least {MIN_TAIL_TRIALS} trials, got {trials}"
        )));
    }
    let mu = eta as f64 * p;
    let bound = chernoff_bound(mu, delta)?;
    let threshold = (1.0 + delta) * mu;
    let dist = Binomial::new(eta, p).map_err(|e| Error::domain(e.to_string()))?;
    let chunks = trials.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            (0..count)
                .filter(|_| dist.sample(&mut rng) as f64 >= threshold - 1e-9)
                .count()
        })
        .sum();
    let empirical = hits as f64 / trials as f64;
    Ok(TailEstimate {
        eta,
        p,
        delta,
        trials,
        seed,
        hits,
        empirical,
        std_err: (empirical * (1.0 - empirical) / trials as f64).sqrt(),
        bound,
    })
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Upper bound on the number of flows whose destination BS lies in another
/// subsquare: `min(n, 2n(1 - n^(d-b)))`.
pub fn remote_flow_count(p: &ScalingParams) -> f64 {
    p.n.min(2.0 * p.n * (1.0 - p.pow(p.d - p.b)))
}

/// High-probability bound on the flows terminating at any single BS.
pub fn dest_load_bound(p: &ScalingParams) -> Result<f64> {
    p.validate()?;
    Ok(2.0 * remote_flow_count(p) / p.pow(p.d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DestLoadSim {
    pub flows: usize,
    pub bs_count: usize,
    pub trials: usize,
    pub seed: u64,
    pub bound: f64,
    /// Largest per-BS load in each trial.
    pub max_loads: Vec<usize>,
    /// Fraction of trials whose largest load is within the bound.
    pub within: f64,
}

/// Assigns `floor(remote_flow_count)` flows uniformly at random to
/// `floor(n^d)` BSs and records the heaviest BS per trial.
pub fn simulate_dest_load(p: &ScalingParams, trials: usize, seed: u64) -> Result<DestLoadSim> {
    let bound = dest_load_bound(p)?;
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let flows = remote_flow_count(p).floor() as usize;
    let bs_count = (p.pow(p.d).floor() as usize).max(1);
    let max_loads: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let mut load = vec![0usize; bs_count];
            for _ in 0..flows {
                load[rng.gen_range(0..bs_count)] += 1;
            }
            load.into_iter().max().unwrap_or(0)
        })
        .collect();
    let ok = max_loads.iter().filter(|&&l| l as f64 <= bound).count();
    Ok(DestLoadSim {
        flows,
        bs_count,
        trials,
        seed,
        bound,
        within: ok as f64 / trials as f64,
        max_loads,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubsquareBound {
    pub regime: Regime,
    /// Sources sharing the subsquare's column.
    pub column_sources: f64,
    /// BSs sharing the subsquare's row.
    pub row_bs: f64,
    /// Flows terminating at one BS.
    pub dest_load: f64,
    /// Bound on the flows handled by one subsquare.
    pub flows: f64,
}

/// Bound on the flows relayed by any one subsquare under column-then-row
/// routing. With every facility a BS no flow leaves its subsquare and only
/// the column term remains.
pub fn subsquare_flow_bound(p: &ScalingParams) -> Result<SubsquareBound> {
    p.validate()?;
    let regime = p.regime();
    let cap = 2.0 * p.pow(1.0 - p.b / 2.0);
    let (column_sources, row_bs) = match regime {
        Regime::AllBs | Regime::DenseBs => (
            (2.0 * p.pow(1.5 - p.b) - 2.0 * p.pow(1.0 + p.d - 1.5 * p.b)).min(cap),
            p.pow(p.d - p.b / 2.0),
        ),
        Regime::SparseBs => (
            (2.0 * p.pow(1.5 - p.b) - 2.0 * p.c2 * p.pow(1.0 - p.b)).min(cap),
            p.c1,
        ),
    };
    let dest_load = if regime == Regime::AllBs {
        0.0
    } else {
        dest_load_bound(p)?
    };
    Ok(SubsquareBound {
        regime,
        column_sources,
        row_bs,
        dest_load,
        flows: column_sources + dest_load * row_bs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    /// SU to neighbouring facility.
    Access,
    /// Facility to BS.
    Backhaul,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThroughputClass {
    pub regime: Regime,
    /// Exponent of `n` in the access term `n^(b-1)`.
    pub access_exponent: f64,
    /// Exponent of `n` in the backhaul term `W n^e`, if any.
    pub backhaul_exponent: Option<f64>,
    pub access_rate: f64,
    pub backhaul_rate: Option<f64>,
    pub binding: Bottleneck,
    /// Exponent of `n` in the binding term.
    pub exponent: f64,
    /// True iff the binding term scales with `W`.
    pub w_dependent: bool,
    /// Order-level per-SU throughput, the smaller term.
    pub rate: f64,
}

/// Order-level per-SU throughput and the term of the minimum that binds.
pub fn throughput_class(p: &ScalingParams) -> Result<ThroughputClass> {
    p.validate()?;
    let regime = p.regime();
    let access_exponent = p.b - 1.0;
    let access_rate = p.pow(access_exponent);
    let backhaul_exponent = match regime {
        Regime::AllBs => None,
        Regime::DenseBs => Some(p.b / 2.0 - 1.0),
        Regime::SparseBs => Some(p.d - 1.0),
    };
    let backhaul_rate = backhaul_exponent.map(|e| p.w * p.pow(e));
    let (binding, exponent, rate) = match (backhaul_exponent, backhaul_rate) {
        (Some(e), Some(r)) if r < access_rate => (Bottleneck::Backhaul, e, r),
        _ => (Bottleneck::Access, access_exponent, access_rate),
    };
    Ok(ThroughputClass {
        regime,
        access_exponent,
        backhaul_exponent,
        access_rate,
        backhaul_rate,
        binding,
        exponent,
        w_dependent: binding == Bottleneck::Backhaul,
        rate,
    })
}

/// Per-flow backhaul rate `c3 W / phi` from the subsquare flow bound.
pub fn backhaul_rate(p: &ScalingParams) -> Result<f64> {
    let phi = subsquare_flow_bound(p)?.flows;
    Ok(if phi > 0.0 {
        p.c3 * p.w / phi
    } else {
        f64::INFINITY
    })
}

/// Subsquare cell as `(column, row)`.
pub type Cell = (usize, usize);

/// Column-then-row route from `src` to `dst`, both ends included.
pub fn grid_route(src: Cell, dst: Cell, dims: (usize, usize)) -> Result<Vec<Cell>> {
    for c in [src, dst] {
        if c.0 >= dims.0 || c.1 >= dims.1 {
            return Err(Error::domain(format!(
                "cell {c:?} outside a {}x{} grid",
                dims.0, dims.1
            )));
        }
    }
    let mut path = vec![src];
    let (x, mut y) = src;
    while y != dst.1 {
        y = if dst.1 > y { y + 1 } else { y - 1 };
        path.push((x, y));
    }
    let mut x = x;
    while x != dst.0 {
        x = if dst.0 > x { x + 1 } else { x - 1 };
        path.push((x, y));
    }
    Ok(path)
}

/// BS cells on a `side x side` grid with `per_line` BSs in every row and
/// column, or `total` BSs on the diagonal when fewer than one per line.
pub fn bs_layout(side: usize, total: usize) -> Vec<bool> {
    let mut is_bs = vec![false; side * side];
    if side == 0 || total == 0 {
        return is_bs;
    }
    if total >= side {
        let per_line = (total / side).clamp(1, side);
        let step = side / per_line;
        for y in 0..side {
            for x in 0..side {
                if (x + y) % step == 0 {
                    is_bs[y * side + x] = true;
                }
            }
        }
    } else {
        let step = side / total;
        for i in 0..total {
            let c = i * step;
            is_bs[c * side + c] = true;
        }
    }
    is_bs
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsquareLoadSim {
    pub side: usize,
    pub bs_count: usize,
    pub users: usize,
    pub trials: usize,
    pub seed: u64,
    pub bound: f64,
    /// Heaviest subsquare load per trial.
    pub max_loads: Vec<usize>,
    pub within: f64,
}

/// Drops `floor(n)` SUs uniformly on a `round(n^(b/2))`-sided grid of
/// subsquares, sends each flow from a CR subsquare to a uniformly chosen BS
/// along [`grid_route`], and counts the flows each subsquare handles.
pub fn simulate_subsquare_load(
    p: &ScalingParams,
    trials: usize,
    seed: u64,
) -> Result<SubsquareLoadSim> {
    let bound = subsquare_flow_bound(p)?.flows;
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let side = (p.pow(p.b / 2.0).round() as usize).max(1);
    let users = p.n.floor() as usize;
    let is_bs = bs_layout(side, p.pow(p.d).round() as usize);
    let bs_cells: Vec<Cell> = (0..side * side)
        .filter(|&i| is_bs[i])
        .map(|i| (i % side, i / side))
        .collect();
    if bs_cells.is_empty() {
        return Err(Error::domain("layout has no BS"));
    }
    let max_loads: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let mut load = vec![0usize; side * side];
            for _ in 0..users {
                let src = (rng.gen_range(0..side), rng.gen_range(0..side));
                if is_bs[src.1 * side + src.0] {
                    load[src.1 * side + src.0] += 1;
                    continue;
                }
                let dst = bs_cells[rng.gen_range(0..bs_cells.len())];
                for (x, y) in grid_route(src, dst, (side, side)).expect("cells inside the grid") {
                    load[y * side + x] += 1;
                }
            }
            load.into_iter().max().unwrap_or(0)
        })
        .collect();
    let ok = max_loads.iter().filter(|&&l| l as f64 <= bound).count();
    Ok(SubsquareLoadSim {
        side,
        bs_count: bs_cells.len(),
        users,
        trials,
        seed,
        bound,
        within: ok as f64 / trials as f64,
        max_loads,
    })
}

/// One CSV row of a scaling sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: f64,
    pub b: f64,
    pub d: f64,
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub regime: &'static str,
    pub remote_flows: f64,
    pub dest_load_bound: f64,
    pub column_sources: f64,
    pub row_bs: f64,
    pub subsquare_bound: f64,
    pub access_rate: f64,
    pub backhaul_class_rate: Option<f64>,
    pub backhaul_rate: f64,
    pub binding: &'static str,
    pub exponent: f64,
    pub sim_trials: Option<usize>,
    pub sim_seed: Option<u64>,
    pub sim_dest_load_max: Option<usize>,
    pub sim_dest_load_within: Option<f64>,
}

/// Evaluates every bound at one parameter point, optionally running the
/// destination-load simulation with `(trials, seed)`.
pub fn scaling_row(p: &ScalingParams, sim: Option<(usize, u64)>) -> Result<ScalingRow> {
    let sub = subsquare_flow_bound(p)?;
    let class = throughput_class(p)?;
    let dl = match sim {
        Some((trials, seed)) => Some(simulate_dest_load(p, trials, seed)?),
        None => None,
    };
    Ok(ScalingRow {
        n: p.n,
        b: p.b,
        d: p.d,
        w: p.w,
        c1: p.c1,
        c2: p.c2,
        c3: p.c3,
        regime: sub.regime.label(),
        remote_flows: remote_flow_count(p),
        dest_load_bound: dest_load_bound(p)?,
        column_sources: sub.column_sources,
        row_bs: sub.row_bs,
        subsquare_bound: sub.flows,
        access_rate: class.access_rate,
        backhaul_class_rate: class.backhaul_rate,
        backhaul_rate: backhaul_rate(p)?,
        binding: match class.binding {
            Bottleneck::Access => "access",
            Bottleneck::Backhaul => "backhaul",
        },
        exponent: class.exponent,
        sim_trials: dl.as_ref().map(|s| s.trials),
        sim_seed: dl.as_ref().map(|s| s.seed),
        sim_dest_load_max: dl.as_ref().and_then(|s| s.max_loads.iter().copied().max()),
        sim_dest_load_within: dl.as_ref().map(|s| s.within),
    })
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_rate_values() {
        assert!((deviation_rate(1.0) - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert_eq!(deviation_rate(0.0), 0.0);
        assert!(deviation_rate(1e-6) > 0.0);
    }

    #[test]
    fn chernoff_rejects_bad_inputs() {
        assert!(chernoff_bound(10.0, 0.0).is_err());
        assert!(chernoff_bound(10.0, -1.0).is_err());
        assert!(chernoff_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn chernoff_near_zero_delta_is_near_one() {
        assert!(chernoff_bound(10.0, 1e-9).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn params_validate_exponents() {
        assert!(ScalingParams::new(100.0, 0.5, 0.6, 1.0).is_err());
        assert!(ScalingParams::new(100.0, 1.0, 0.5, 1.0).is_err());
        assert!(ScalingParams::new(1.0, 0.5, 0.2, 1.0).is_err());
        assert!(ScalingParams::new(100.0, 0.5, 0.2, 0.0).is_err());
        assert!(ScalingParams::new(100.0, 0.5, 0.5, 1.0).is_ok());
    }

    #[test]
    fn all_bs_has_no_remote_flows() {
        let p = ScalingParams::new(1e4, 0.6, 0.6, 1.0).unwrap();
        assert_eq!(remote_flow_count(&p), 0.0);
        assert_eq!(dest_load_bound(&p).unwrap(), 0.0);
        let s = subsquare_flow_bound(&p).unwrap();
        assert_eq!(s.regime, Regime::AllBs);
        assert_eq!(s.flows, s.column_sources);
    }

    #[test]
    fn route_shapes() {
        assert_eq!(grid_route((2, 2), (2, 2), (4, 4)).unwrap(), vec![(2, 2)]);
        assert_eq!(
            grid_route((0, 0), (3, 2), (4, 4)).unwrap(),
            vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (3, 2)]
        );
        assert_eq!(
            grid_route((3, 3), (0, 1), (4, 4)).unwrap(),
            vec![(3, 3), (3, 2), (3, 1), (2, 1), (1, 1), (0, 1)]
        );
        assert!(grid_route((4, 0), (0, 0), (4, 4)).is_err());
    }

    #[test]
    fn bs_layout_counts() {
        let l = bs_layout(16, 64);
        assert_eq!(l.iter().filter(|&&b| b).count(), 64);
        for y in 0..16 {
            assert_eq!((0..16).filter(|&x| l[y * 16 + x]).count(), 4);
            assert_eq!((0..16).filter(|&x| l[x * 16 + y]).count(), 4);
        }
        let l = bs_layout(16, 4);
        assert_eq!(l.iter().filter(|&&b| b).count(), 4);
        for y in 0..16 {
            assert!((0..16).filter(|&x| l[y * 16 + x]).count() <= 1);
        }
    }

    #[test]
    fn tail_requires_enough_trials() {
        assert!(monte_carlo_tail(100, 0.1, 1.0, 100, 1).is_err());
        assert!(monte_carlo_tail(100, 1.0, 1.0, MIN_TAIL_TRIALS, 1).is_err());
    }

    #[test]
    fn tail_is_seed_deterministic() {
        let a = monte_carlo_tail(50, 0.2, 0.5, MIN_TAIL_TRIALS, 9).unwrap();
        let b = monte_carlo_tail(50, 0.2, 0.5, MIN_TAIL_TRIALS, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_has_header_and_row() {
        let p = ScalingParams::new(1e4, 0.8, 0.4, 1.0).unwrap();
        let mut buf = Vec::new();
        write_scaling_csv(&[scaling_row(&p, None).unwrap()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("n,b,d,w,"));
    }
}
