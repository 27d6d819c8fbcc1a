//! Independent oracles shared by the integration tests. Nothing here calls
//! into the algorithms under test; scenarios are read only for their raw
//! geometry and parameters.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cchn_core::conflict::{ConflictGraph, VertexKind};
use cchn_core::model::{
    Link, LinkKind, Node, NodeId, NodeKind, PrimarySession, RadioParams, Scenario, SessionId,
};
use cchn_core::{LinearProgram, Relation};
use rand::Rng;

pub const EPS: f64 = 1e-9;

// ---------------------------------------------------------------- graphs

/// Adjacency bitmasks of an undirected graph on at most 32 vertices.
pub fn masks(n: usize, edges: &[(usize, usize)]) -> Vec<u32> {
    let mut adj = vec![0u32; n];
    for &(u, v) in edges {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    adj
}

pub fn independent(adj: &[u32], set: u32) -> bool {
    (0..adj.len()).all(|v| set & (1 << v) == 0 || adj[v] & set == 0)
}

/// Every independent set, the empty set included, by subset filtering.
pub fn all_independent_sets(adj: &[u32]) -> Vec<u32> {
    (0..1u32 << adj.len())
        .filter(|&s| independent(adj, s))
        .collect()
}

/// Maximal independent sets by subset filtering.
pub fn all_mis(adj: &[u32]) -> Vec<u32> {
    let n = adj.len();
    all_independent_sets(adj)
        .into_iter()
        .filter(|&s| (0..n).all(|v| s & (1 << v) != 0 || !independent(adj, s | 1 << v)))
        .collect()
}

pub fn to_mask(set: &[cchn_core::VertexId]) -> u32 {
    set.iter().fold(0, |m, v| m | 1 << v.0)
}

/// Erdos-Renyi graph with `p` edge probability; the first `sessions`
/// vertices are pairwise non-adjacent.
pub fn random_edges(rng: &mut impl Rng, n: usize, sessions: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if v >= sessions && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Vertex kinds for a synthetic graph: `sessions` session vertices first,
/// then CR links on distinct node pairs.
pub fn synthetic_kinds(n: usize, sessions: usize) -> Vec<VertexKind> {
    (0..n)
        .map(|i| {
            if i < sessions {
                VertexKind::Session(SessionId(i))
            } else {
                VertexKind::CrLink(Link {
                    tx: NodeId(2 * i),
                    rx: NodeId(2 * i + 1),
                    kind: LinkKind::Cr,
                    capacity: 1.0,
                })
            }
        })
        .collect()
}

pub fn synthetic_graph(n: usize, sessions: usize, edges: &[(usize, usize)]) -> ConflictGraph {
    ConflictGraph::from_parts(synthetic_kinds(n, sessions), edges).unwrap()
}

// -------------------------------------------------------- rule replay

/// Link identity used to compare graphs: kind tag, tx, rx. Sessions use
/// tag `'S'` with the session index in both slots.
pub type Key = (char, usize, usize);

#[derive(Clone, Debug)]
pub struct ReplayGraph {
    pub vertices: Vec<Key>,
    pub edges: BTreeSet<(Key, Key)>,
}

impl ReplayGraph {
    pub fn count(&self, tag: char) -> usize {
        self.vertices.iter().filter(|k| k.0 == tag).count()
    }

    pub fn adjacency(&self) -> Vec<u32> {
        let idx = |k: &Key| self.vertices.iter().position(|v| v == k).unwrap();
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|(a, b)| (idx(a), idx(b))).collect();
        masks(self.vertices.len(), &pairs)
    }
}

fn facility(n: &Node) -> bool {
    matches!(n.kind, NodeKind::BaseStation | NodeKind::CrRouter { .. })
}

fn dist(a: &Node, b: &Node) -> f64 {
    ((a.pos.x - b.pos.x).powi(2) + (a.pos.y - b.pos.y).powi(2)).sqrt()
}

/// Replays the protocol-model rules from coordinates with uniform ranges:
/// facility pairs within `r_t` form CR links; a session source reaching a
/// facility forms an inbound PU link, a facility reaching the destination
/// an outbound one. Two links conflict when they share a node or either
/// transmitter is within `r_i` of the other's receiver. A session
/// conflicts with every link that conflicts with one of its hops, except
/// its own PU links.
pub fn replay(scenario: &Scenario, r_t: f64, r_i: f64) -> ReplayGraph {
    let nodes = &scenario.nodes;
    let near = |a: usize, b: usize, r: f64| dist(&nodes[a], &nodes[b]) <= r + 1e-9;
    let mut vertices = Vec::new();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i != j && facility(&nodes[i]) && facility(&nodes[j]) && near(i, j, r_t) {
                vertices.push(('C', i, j));
            }
        }
    }
    for s in &scenario.sessions {
        let (src, dst) = (s.path[0].0, s.path[s.path.len() - 1].0);
        for j in 0..nodes.len() {
            if facility(&nodes[j]) && near(src, j, r_t) {
                vertices.push(('I', src, j));
            }
        }
        for i in 0..nodes.len() {
            if facility(&nodes[i]) && near(i, dst, r_t) {
                vertices.push(('O', i, dst));
            }
        }
    }
    let links: Vec<Key> = vertices.clone();
    vertices.extend((0..scenario.sessions.len()).map(|s| ('S', s, s)));

    let clash = |a: (usize, usize), b: (usize, usize)| {
        a.0 == b.0
            || a.0 == b.1
            || a.1 == b.0
            || a.1 == b.1
            || near(a.0, b.1, r_i)
            || near(b.0, a.1, r_i)
    };
    let mut edges = BTreeSet::new();
    for (x, &a) in links.iter().enumerate() {
        for &b in &links[x + 1..] {
            if clash((a.1, a.2), (b.1, b.2)) {
                edges.insert(ordered(a, b));
            }
        }
    }
    for (s, sess) in scenario.sessions.iter().enumerate() {
        let (src, dst) = (sess.path[0].0, sess.path[sess.path.len() - 1].0);
        for &l in &links {
            let own = (l.0 == 'I' && l.1 == src) || (l.0 == 'O' && l.2 == dst);
            let hit = sess
                .path
                .windows(2)
                .any(|w| clash((l.1, l.2), (w[0].0, w[1].0)));
            if !own && hit {
                edges.insert(ordered(l, ('S', s, s)));
            }
        }
    }
    ReplayGraph { vertices, edges }
}

fn ordered(a: Key, b: Key) -> (Key, Key) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// The implementation's graph in the replay vocabulary.
pub fn keyed(graph: &ConflictGraph) -> ReplayGraph {
    let key = |k: &VertexKind| match k {
        VertexKind::Session(s) => ('S', s.0, s.0),
        VertexKind::CrLink(l) | VertexKind::PuRelated(l) => {
            let tag = match l.kind {
                LinkKind::Cr => 'C',
                LinkKind::PuIn(_) => 'I',
                LinkKind::PuOut(_) => 'O',
                LinkKind::Primary(_) => 'P',
            };
            (tag, l.tx.0, l.rx.0)
        }
    };
    let vertices: Vec<Key> = graph.vertices().iter().map(|v| key(&v.kind)).collect();
    let edges = graph
        .edges()
        .map(|(u, v)| ordered(vertices[u.0], vertices[v.0]))
        .collect();
    ReplayGraph { vertices, edges }
}

// ------------------------------------------------------------ LP oracles

/// Optimum of a small LP by enumerating every vertex of its feasible
/// region: each choice of `n` tight constraints among rows and finite
/// bounds is solved, and the best feasible point kept. `None` if no vertex
/// is feasible. Requires all variables bounded.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_variables();
    // each hyperplane: coefficients and right-hand side
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in lp.constraints() {
        let mut a = vec![0.0; n];
        for &(j, v) in &c.coeffs {
            a[j] += v;
        }
        planes.push((a, c.rhs));
    }
    for (j, v) in lp.variables().iter().enumerate() {
        for b in [v.lower, v.upper] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, b));
        }
    }
    let mut best: Option<f64> = None;
    let mut choice = Vec::new();
    choose(planes.len(), n, 0, &mut choice, &mut |pick| {
        let a: Vec<Vec<f64>> = pick.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = gauss(a, b) {
            if feasible(lp, &x, 1e-7) {
                let obj = lp.objective_value(&x);
                if best.map_or(true, |v| obj > v) {
                    best = Some(obj);
                }
            }
        }
    });
    best
}

fn choose(
    total: usize,
    k: usize,
    start: usize,
    cur: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..total {
        cur.push(i);
        choose(total, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Solves a square system with partial pivoting; `None` when singular.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

pub fn feasible(lp: &LinearProgram, x: &[f64], tol: f64) -> bool {
    let bounds = lp
        .variables()
        .iter()
        .zip(x)
        .all(|(v, &xi)| xi >= v.lower - tol && xi <= v.upper + tol);
    bounds
        && lp.constraints().iter().enumerate().all(|(i, c)| {
            let act = lp.activity(i, x);
            match c.relation {
                Relation::Le => act <= c.rhs + tol,
                Relation::Ge => act >= c.rhs - tol,
                Relation::Eq => (act - c.rhs).abs() <= tol,
            }
        })
}

/// Upper bound on a maximisation LP from row multipliers `y`: `b.y` plus,
/// per variable, the best value of its reduced cost over its box. Returns
/// `None` when `y` has the wrong sign on some row.
pub fn dual_bound(lp: &LinearProgram, y: &[f64]) -> Option<f64> {
    let mut reduced: Vec<f64> = lp.variables().iter().map(|v| v.objective).collect();
    let mut bound = 0.0;
    for (c, &yi) in lp.constraints().iter().zip(y) {
        let ok = match c.relation {
            Relation::Le => yi >= -1e-9,
            Relation::Ge => yi <= 1e-9,
            Relation::Eq => true,
        };
        if !ok {
            return None;
        }
        bound += yi * c.rhs;
        for &(j, a) in &c.coeffs {
            reduced[j] -= yi * a;
        }
    }
    for (v, d) in lp.variables().iter().zip(reduced) {
        bound += if d > 0.0 { d * v.upper } else { d * v.lower };
    }
    Some(bound)
}

/// Random bounded LP with `n` variables and `m` rows, small integer data.
pub fn random_lp(rng: &mut impl Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::new();
    for j in 0..n {
        let lo = rng.gen_range(-3..=1) as f64;
        let hi = lo + rng.gen_range(1..=6) as f64;
        lp.add_variable(format!("x{j}"), lo, hi, rng.gen_range(-5..=5) as f64);
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.8) {
                coeffs.push((j, rng.gen_range(-4..=4) as f64));
            }
        }
        let rel = match rng.gen_range(0..6) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        lp.add_constraint(format!("r{i}"), coeffs, rel, rng.gen_range(-6..=10) as f64);
    }
    lp
}

// ------------------------------------------------------ schedule oracle

/// Edmonds-Karp maximum flow on a dense capacity matrix.
pub fn max_flow(cap: &[Vec<f64>], s: usize, t: usize) -> f64 {
    let n = cap.len();
    let mut res = cap.to_vec();
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && res[u][v] > 1e-12 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(res[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            res[prev[v]][v] -= push;
            res[v][prev[v]] += push;
            v = prev[v];
        }
        total += push;
    }
}

/// Best secondary throughput of a one-session scenario with `alpha = 1`,
/// found by trying every schedule whose MIS time shares are multiples of
/// `1/steps` (summing to at most one), for both cooperation decisions.
///
/// With cooperation the primary data rate `D/T` must fit on the session's
/// inbound PU link, outbound PU link and the CR hops between them, which
/// the instance must make unique. Without cooperation only MISs holding
/// the session vertex may be scheduled. The remaining capacity carries
/// secondary traffic from the edge routers to the BS.
pub fn schedule_oracle(scenario: &Scenario, r_t: f64, r_i: f64, steps: u32) -> f64 {
    assert_eq!(scenario.sessions.len(), 1);
    let g = replay(scenario, r_t, r_i);
    let mis = all_mis(&g.adjacency());
    let sess: &PrimarySession = &scenario.sessions[0];
    let demand = sess.volume / sess.length;
    let links: Vec<Key> = g.vertices.iter().copied().filter(|k| k.0 != 'S').collect();
    let s_bit = 1u32 << g.vertices.iter().position(|k| k.0 == 'S').unwrap();
    let rate = |k: &Key| {
        if k.0 == 'C' {
            scenario.rate_cr
        } else {
            scenario.rate_pcr
        }
    };

    let pin: Vec<&Key> = links.iter().filter(|k| k.0 == 'I').collect();
    let pout: Vec<&Key> = links.iter().filter(|k| k.0 == 'O').collect();
    assert!(
        pin.len() == 1 && pout.len() == 1,
        "primary route must be unique"
    );
    let route = cr_route(&links, pin[0].2, pout[0].1);
    let mut primary: Vec<Key> = vec![*pin[0], *pout[0]];
    primary.extend(route.windows(2).map(|w| ('C', w[0], w[1])));

    let n = scenario.nodes.len();
    let bs = scenario
        .nodes
        .iter()
        .position(|x| x.kind == NodeKind::BaseStation)
        .unwrap();
    let edge: Vec<usize> = (0..n)
        .filter(|&i| scenario.nodes[i].kind == NodeKind::CrRouter { edge: true })
        .collect();

    let bit = |k: &Key| 1u32 << g.vertices.iter().position(|v| v == k).unwrap();
    let cr: Vec<(usize, usize, u32, f64)> = links
        .iter()
        .filter(|k| k.0 == 'C')
        .map(|k| (k.1, k.2, bit(k), rate(k)))
        .collect();
    let primary: Vec<(Key, u32, f64)> = primary.iter().map(|k| (*k, bit(k), rate(k))).collect();
    let mut cap = vec![vec![0.0; n + 1]; n + 1];
    // super source at index n
    for &e in &edge {
        cap[n][e] = f64::INFINITY;
    }

    let mut best = 0.0f64;
    for cooperate in [false, true] {
        let usable: Vec<u32> = mis
            .iter()
            .copied()
            .filter(|&m| cooperate || m & s_bit != 0)
            .collect();
        let mut shares = vec![0u32; usable.len()];
        compositions(&mut shares, 0, steps, &mut |shares| {
            let time = |b: u32| -> f64 {
                let t: u32 = usable
                    .iter()
                    .zip(shares)
                    .filter(|(m, _)| *m & b != 0)
                    .map(|(_, &s)| s)
                    .sum();
                t as f64 / steps as f64
            };
            if cooperate && primary.iter().any(|&(_, b, r)| time(b) * r < demand - 1e-9) {
                return;
            }
            for &(i, j, b, r) in &cr {
                cap[i][j] = time(b) * r;
            }
            if cooperate {
                for &(k, _, _) in primary.iter().filter(|p| p.0 .0 == 'C') {
                    cap[k.1][k.2] -= demand;
                }
            }
            best = best.max(max_flow(&cap, n, bs));
        });
    }
    best
}

fn cr_route(links: &[Key], from: usize, to: usize) -> Vec<usize> {
    let mut paths = vec![vec![from]];
    let mut found = Vec::new();
    while let Some(p) = paths.pop() {
        let last = *p.last().unwrap();
        if last == to {
            found.push(p);
            continue;
        }
        for k in links
            .iter()
            .filter(|k| k.0 == 'C' && k.1 == last && !p.contains(&k.2))
        {
            let mut q = p.clone();
            q.push(k.2);
            paths.push(q);
        }
    }
    assert_eq!(found.len(), 1, "primary route must be unique");
    found.pop().unwrap()
}

/// Calls `f` with every vector of non-negative parts summing to at most
/// `left` plus what is already placed.
fn compositions(parts: &mut Vec<u32>, i: usize, left: u32, f: &mut impl FnMut(&[u32])) {
    if i == parts.len() {
        f(parts);
        return;
    }
    for v in 0..=left {
        parts[i] = v;
        compositions(parts, i + 1, left - v, f);
    }
    parts[i] = 0;
}

/// Two facilities and one session. The BS sits at the origin with an edge
/// router `r_t` to its right; the session runs from above the router to
/// the left of the BS. With `far` the source moves further right so that
/// the router-to-BS link no longer conflicts with the session.
pub fn micro_scenario(r_t: f64, r_i: f64, far: bool, length: f64, volume: f64) -> Scenario {
    let src = if far { (2.0 * r_t, 0.0) } else { (r_t, r_t) };
    let nodes = vec![
        Node::new("B", NodeKind::BaseStation, 0.0, 0.0),
        Node::new("A", NodeKind::CrRouter { edge: true }, r_t, 0.0),
        Node::new("Ps", NodeKind::PuSource, src.0, src.1),
        Node::new("Pd", NodeKind::PuDest, -r_t, 0.0),
    ];
    Scenario {
        nodes,
        sessions: vec![PrimarySession {
            label: "P".into(),
            path: vec![NodeId(2), NodeId(3)],
            length,
            volume,
        }],
        radio: RadioParams::with_ranges(r_t, r_i),
        rate_cr: 3e6,
        rate_pcr: 3e6,
        rate_primary: 1e6,
        alpha: 1.0,
        rho: 1.0,
        llc_frame: 0.01,
        capacity_overrides: Vec::new(),
    }
}

/// Relative closeness with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
