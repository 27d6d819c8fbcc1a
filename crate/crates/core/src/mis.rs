//! Maximal independent set search over the conflict graph.
//!
//! Three generators are provided: exact enumeration (Bron-Kerbosch with
//! pivoting on the complement graph), a scheduling-index-ordered greedy
//! generator guided by traffic sources and destinations, and the augmented
//! variant that reruns the greedy generator once per proper subset of
//! cooperated sessions.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::{link_endpoints, ConflictGraph, VertexId};
use crate::error::{Error, Result};
use crate::model::{NodeId, Scenario, SessionId};

/// Largest graph [`enumerate_all_mis`] accepts by default.
pub const DEFAULT_EXACT_LIMIT: usize = 40;
/// Largest session count [`augmented_sio`] accepts by default.
pub const DEFAULT_SESSION_LIMIT: usize = 12;
/// MISs requested from each greedy generator call by default.
pub const DEFAULT_BUDGET: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisMode {
    Exact,
    Sio,
    Augmented,
}

impl std::str::FromStr for MisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MisMode::Exact),
            "sio" => Ok(MisMode::Sio),
            "augmented" => Ok(MisMode::Augmented),
            _ => Err(Error::Parse(format!("unknown MIS mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for MisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MisMode::Exact => "exact",
            MisMode::Sio => "sio",
            MisMode::Augmented => "augmented",
        })
    }
}

/// A duplicate-free list of vertex sets over a fixed vertex universe.
#[derive(Clone, Debug, Default)]
pub struct MisCollection {
    universe: usize,
    sets: Vec<Vec<VertexId>>,
    bits: Vec<FixedBitSet>,
    seen: HashSet<Vec<VertexId>>,
}

impl MisCollection {
    pub fn new(universe: usize) -> Self {
        MisCollection {
            universe,
            ..Default::default()
        }
    }

    /// Adds a set unless an equal one is already present. Returns whether
    /// it was added.
    pub fn push(&mut self, mut set: Vec<VertexId>) -> bool {
        set.sort_unstable();
        set.dedup();
        if self.seen.contains(&set) {
            return false;
        }
        let mut b = FixedBitSet::with_capacity(self.universe);
        for v in &set {
            b.insert(v.0);
        }
        self.seen.insert(set.clone());
        self.sets.push(set);
        self.bits.push(b);
        true
    }

    pub fn extend_from(&mut self, other: &MisCollection) {
        for s in &other.sets {
            self.push(s.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn sets(&self) -> &[Vec<VertexId>] {
        &self.sets
    }

    pub fn set(&self, q: usize) -> &[VertexId] {
        &self.sets[q]
    }

    pub fn contains(&self, q: usize, v: VertexId) -> bool {
        self.bits[q].contains(v.0)
    }

    pub fn contains_set(&self, set: &[VertexId]) -> bool {
        let mut s = set.to_vec();
        s.sort_unstable();
        self.seen.contains(&s)
    }

    /// Splits the collection by session `s`: sets containing its vertex
    /// and sets that do not. A session absent from the graph puts every
    /// set in the second group.
    pub fn session_partition(
        &self,
        graph: &ConflictGraph,
        s: SessionId,
    ) -> (Vec<usize>, Vec<usize>) {
        let v = graph.session_vertex(s);
        (0..self.len()).partition(|&q| v.is_some_and(|v| self.contains(q, v)))
    }

    /// Sorted copy, canonical across generators.
    pub fn canonical(&self) -> MisCollection {
        let mut sets = self.sets.clone();
        sets.sort();
        let mut out = MisCollection::new(self.universe);
        for s in sets {
            out.push(s);
        }
        out
    }

    /// One line per set: vertex labels in ascending vertex order.
    pub fn to_text(&self, graph: &ConflictGraph, scenario: &Scenario) -> String {
        let mut out = String::new();
        for s in &self.sets {
            let labels: Vec<String> = s.iter().map(|v| graph.vertex_label(*v, scenario)).collect();
            let _ = writeln!(out, "{}", labels.join(" "));
        }
        out
    }

    /// Inverse of [`MisCollection::to_text`].
    pub fn from_text(text: &str, graph: &ConflictGraph, scenario: &Scenario) -> Result<Self> {
        let by_label: HashMap<String, VertexId> = graph
            .vertices()
            .iter()
            .map(|v| (graph.vertex_label(v.id, scenario), v.id))
            .collect();
        let mut out = MisCollection::new(graph.len());
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let set = line
                .split_whitespace()
                .map(|t| {
                    by_label
                        .get(t)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("unknown vertex label {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(set);
        }
        Ok(out)
    }
}

pub fn is_independent(graph: &ConflictGraph, set: &[VertexId]) -> bool {
    set.iter().enumerate().all(|(i, &u)| {
        set[i + 1..]
            .iter()
            .all(|&v| u != v && !graph.is_adjacent(u, v))
    })
}

/// Independent and no outside vertex can be added.
pub fn is_maximal_independent(graph: &ConflictGraph, set: &[VertexId]) -> bool {
    if !is_independent(graph, set) {
        return false;
    }
    let mut covered = FixedBitSet::with_capacity(graph.len());
    for &v in set {
        covered.insert(v.0);
        covered.union_with(graph.neighbors(v));
    }
    covered.count_ones(..) == graph.len()
}

/// Every maximal independent set of `graph`, in canonical order.
pub fn enumerate_all_mis(graph: &ConflictGraph, limit: usize) -> Result<MisCollection> {
    let n = graph.len();
    if n > limit {
        return Err(Error::GuardExceeded {
            what: "conflict graph for exact MIS enumeration",
            size: n,
            limit,
        });
    }
    // complement-graph neighbourhoods
    let mut non_adj = Vec::with_capacity(n);
    for v in 0..n {
        let mut row = graph.neighbors(VertexId(v)).clone();
        row.toggle_range(..);
        row.set(v, false);
        non_adj.push(row);
    }
    let mut found = Vec::new();
    let mut r = Vec::new();
    let mut p = FixedBitSet::with_capacity(n);
    p.insert_range(..);
    bron_kerbosch(
        &non_adj,
        &mut r,
        p,
        FixedBitSet::with_capacity(n),
        &mut found,
    );
    found.sort();
    let mut out = MisCollection::new(n);
    for s in found {
        out.push(s);
    }
    Ok(out)
}

fn bron_kerbosch(
    nbr: &[FixedBitSet],
    r: &mut Vec<VertexId>,
    mut p: FixedBitSet,
    mut x: FixedBitSet,
    out: &mut Vec<Vec<VertexId>>,
) {
    if p.is_clear() {
        if x.is_clear() {
            let mut s = r.clone();
            s.sort_unstable();
            out.push(s);
        }
        return;
    }
    let pivot = p
        .ones()
        .chain(x.ones())
        .max_by_key(|&u| p.intersection(&nbr[u]).count())
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.difference(&nbr[pivot]).collect();
    for v in candidates {
        let mut np = p.clone();
        np.intersect_with(&nbr[v]);
        let mut nx = x.clone();
        nx.intersect_with(&nbr[v]);
        r.push(VertexId(v));
        bron_kerbosch(nbr, r, np, nx, out);
        r.pop();
        p.set(v, false);
        x.insert(v);
    }
}

/// Scheduling index of every vertex: hop distance, in the link adjacency
/// graph, to the nearest link on a shortest source-to-destination route.
/// Session vertices get `usize::MAX` so they are considered last.
pub fn scheduling_index(
    graph: &ConflictGraph,
    sources: &[NodeId],
    destinations: &[NodeId],
) -> Vec<usize> {
    let n = graph.len();
    let unreachable = usize::MAX - 1;
    let links: Vec<(usize, NodeId, NodeId)> = graph
        .link_vertices()
        .map(|(v, l)| (v.0, l.tx, l.rx))
        .collect();
    let node_count = links
        .iter()
        .flat_map(|&(_, a, b)| [a.0, b.0])
        .chain(sources.iter().chain(destinations).map(|n| n.0))
        .max()
        .map_or(0, |m| m + 1);

    let mut out_edges = vec![Vec::new(); node_count];
    let mut in_edges = vec![Vec::new(); node_count];
    let mut incident = vec![Vec::new(); node_count];
    for &(v, tx, rx) in &links {
        out_edges[tx.0].push(rx.0);
        in_edges[rx.0].push(tx.0);
        incident[tx.0].push(v);
        incident[rx.0].push(v);
    }
    let bfs = |start: usize, adj: &[Vec<usize>]| -> Vec<usize> {
        let mut dist = vec![usize::MAX; node_count];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    };
    let from_src: Vec<Vec<usize>> = sources.iter().map(|s| bfs(s.0, &out_edges)).collect();
    let to_dst: Vec<(usize, Vec<usize>)> = destinations
        .iter()
        .map(|d| (d.0, bfs(d.0, &in_edges)))
        .collect();

    let mut index = vec![unreachable; n];
    let mut queue = VecDeque::new();
    for &(v, tx, rx) in &links {
        let on_path = from_src.iter().any(|ds| {
            to_dst.iter().any(|(d, dt)| {
                let total = ds[*d];
                total != usize::MAX
                    && ds[tx.0] != usize::MAX
                    && dt[rx.0] != usize::MAX
                    && ds[tx.0] + 1 + dt[rx.0] == total
            })
        });
        if on_path {
            index[v] = 0;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        let Some((tx, rx)) = link_endpoints(&graph.vertex(VertexId(v)).kind) else {
            continue;
        };
        for node in [tx, rx] {
            for &w in &incident[node.0] {
                if index[w] == unreachable {
                    index[w] = index[v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    for v in graph.vertices() {
        if v.kind.session().is_some() {
            index[v.id.0] = usize::MAX;
        }
    }
    index
}

/// Up to `budget` distinct MISs grown greedily in ascending scheduling
/// index order. Restart `k` shuffles ties with a generator seeded from
/// `(seed, k)` and starts from the `k`-th vertex of that order.
pub fn sio_mis(
    graph: &ConflictGraph,
    sources: &[NodeId],
    destinations: &[NodeId],
    budget: usize,
    seed: u64,
) -> MisCollection {
    let n = graph.len();
    let mut out = MisCollection::new(n);
    if n == 0 || budget == 0 {
        if budget > 0 {
            // the empty set is the unique MIS of the empty graph
            out.push(Vec::new());
        }
        return out;
    }
    let index = scheduling_index(graph, sources, destinations);
    let attempts = (4 * budget).max(n);
    for k in 0..attempts {
        if out.len() >= budget {
            break;
        }
        let mut order: Vec<(usize, u64, usize)> = if k == 0 {
            (0..n).map(|v| (index[v], v as u64, v)).collect()
        } else {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (0..n).map(|v| (index[v], rng.gen::<u64>(), v)).collect()
        };
        order.sort_unstable();
        let start = order[k % n].2;
        out.push(greedy_from(graph, start, order.iter().map(|o| o.2)));
    }
    out
}

fn greedy_from(
    graph: &ConflictGraph,
    start: usize,
    order: impl Iterator<Item = usize>,
) -> Vec<VertexId> {
    let mut blocked = graph.neighbors(VertexId(start)).clone();
    blocked.insert(start);
    let mut set = vec![VertexId(start)];
    for v in order {
        if !blocked.contains(v) {
            set.push(VertexId(v));
            blocked.insert(v);
            blocked.union_with(graph.neighbors(VertexId(v)));
        }
    }
    set
}

/// Source and destination of a session, as seen by the MIS generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionEndpoints {
    pub session: SessionId,
    pub source: NodeId,
    pub dest: NodeId,
}

#[derive(Clone, Debug)]
pub struct AugmentedSio {
    pub mis: MisCollection,
    /// Number of session subsets processed after the initial pass.
    pub inner_iterations: usize,
}

/// Augmented generator: the greedy pass on the full graph, plus one pass
/// per proper subset `p` of sessions on the graph with the other sessions
/// and their conflicting vertices removed, sessions outside `p` being
/// added back to every returned set.
pub fn augmented_sio(
    graph: &ConflictGraph,
    sessions: &[SessionEndpoints],
    sources: &[NodeId],
    destinations: &[NodeId],
    budget: usize,
    seed: u64,
    session_limit: usize,
) -> Result<AugmentedSio> {
    let lp = sessions.len();
    if lp > session_limit {
        return Err(Error::GuardExceeded {
            what: "session count for augmented MIS search",
            size: lp,
            limit: session_limit,
        });
    }
    let mut mis = sio_mis(graph, sources, destinations, budget, seed);

    // proper subsets ordered by cardinality, then lexicographically
    let mut subsets: Vec<Vec<usize>> = Vec::with_capacity((1usize << lp).saturating_sub(1));
    for size in 0..lp {
        combinations(lp, size, &mut subsets);
    }
    let parts: Vec<Vec<Vec<VertexId>>> = subsets
        .par_iter()
        .map(|chosen| {
            let removed: Vec<SessionId> = (0..lp)
                .filter(|i| !chosen.contains(i))
                .map(|i| sessions[i].session)
                .collect();
            let (sub, map) = graph.without_sessions(&removed);
            let mut src = sources.to_vec();
            let mut dst = destinations.to_vec();
            for &i in chosen {
                src.push(sessions[i].source);
                dst.push(sessions[i].dest);
            }
            let mask: u64 = chosen.iter().map(|&i| 1u64 << i).sum();
            let sub_seed = seed ^ (mask + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
            let found = sio_mis(&sub, &src, &dst, budget, sub_seed);
            let add_back: Vec<VertexId> = removed
                .iter()
                .filter_map(|s| graph.session_vertex(*s))
                .collect();
            found
                .sets()
                .iter()
                .map(|set| {
                    let mut full: Vec<VertexId> = set.iter().map(|v| map[v.0]).collect();
                    full.extend_from_slice(&add_back);
                    debug_assert!(is_maximal_independent(graph, &full));
                    full
                })
                .collect()
        })
        .collect();
    for part in parts {
        for set in part {
            mis.push(set);
        }
    }
    Ok(AugmentedSio {
        mis,
        inner_iterations: subsets.len(),
    })
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), out);
}

/// Session endpoints of every session present in `graph`.
pub fn session_endpoints(scenario: &Scenario, graph: &ConflictGraph) -> Vec<SessionEndpoints> {
    graph
        .session_vertices()
        .map(|(s, _)| SessionEndpoints {
            session: s,
            source: scenario.session(s).source(),
            dest: scenario.session(s).dest(),
        })
        .collect()
}

/// Runs the requested generator with edge routers as sources and the BS
/// as destination.
pub fn search(
    scenario: &Scenario,
    graph: &ConflictGraph,
    mode: MisMode,
    budget: usize,
    seed: u64,
) -> Result<MisCollection> {
    let sources = scenario.edge_routers();
    let dests = [scenario.base_station()];
    match mode {
        MisMode::Exact => enumerate_all_mis(graph, DEFAULT_EXACT_LIMIT),
        MisMode::Sio => {
            if budget == 0 {
                return Err(Error::domain("MIS budget must be at least 1"));
            }
            Ok(sio_mis(graph, &sources, &dests, budget, seed))
        }
        MisMode::Augmented => {
            if budget == 0 {
                return Err(Error::domain("MIS budget must be at least 1"));
            }
            let eps = session_endpoints(scenario, graph);
            augmented_sio(
                graph,
                &eps,
                &sources,
                &dests,
                budget,
                seed,
                DEFAULT_SESSION_LIMIT,
            )
            .map(|a| a.mis)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict::VertexKind;
    use crate::model::{Link, LinkKind};

    fn cr(tx: usize, rx: usize) -> VertexKind {
        VertexKind::CrLink(Link {
            tx: NodeId(tx),
            rx: NodeId(rx),
            kind: LinkKind::Cr,
            capacity: 1.0,
        })
    }

    fn ids(v: &[usize]) -> Vec<VertexId> {
        v.iter().map(|&i| VertexId(i)).collect()
    }

    #[test]
    fn path_graph_mis() {
        let g = ConflictGraph::from_parts(vec![cr(0, 1), cr(1, 2), cr(2, 3)], &[(0, 1), (1, 2)])
            .unwrap();
        let all = enumerate_all_mis(&g, 40).unwrap();
        assert_eq!(all.sets(), &[ids(&[0, 2]), ids(&[1])]);
    }

    #[test]
    fn triangle_mis() {
        let g = ConflictGraph::from_parts(
            vec![cr(0, 1), cr(1, 2), cr(2, 0)],
            &[(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        let all = enumerate_all_mis(&g, 40).unwrap();
        assert_eq!(all.sets(), &[ids(&[0]), ids(&[1]), ids(&[2])]);
    }

    #[test]
    fn exact_enumeration_refuses_large_graphs() {
        let g = ConflictGraph::from_parts((0..5).map(|i| cr(i, i + 1)).collect(), &[]).unwrap();
        assert!(matches!(
            enumerate_all_mis(&g, 4),
            Err(Error::GuardExceeded {
                size: 5,
                limit: 4,
                ..
            })
        ));
    }

    #[test]
    fn independence_checks() {
        let g = ConflictGraph::from_parts(vec![cr(0, 1), cr(1, 2), cr(2, 3)], &[(0, 1), (1, 2)])
            .unwrap();
        assert!(is_independent(&g, &[]));
        assert!(is_independent(&g, &ids(&[1])));
        assert!(!is_independent(&g, &ids(&[0, 1])));
        assert!(!is_maximal_independent(&g, &ids(&[0])));
        assert!(is_maximal_independent(&g, &ids(&[0, 2])));
    }

    #[test]
    fn budget_one_gives_one_maximal_set() {
        let g = ConflictGraph::from_parts(
            vec![cr(0, 1), cr(1, 2), cr(2, 3), cr(3, 4)],
            &[(0, 1), (1, 2), (2, 3)],
        )
        .unwrap();
        let m = sio_mis(&g, &[NodeId(0)], &[NodeId(4)], 1, 7);
        assert_eq!(m.len(), 1);
        assert!(is_maximal_independent(&g, m.set(0)));
    }

    #[test]
    fn scheduling_index_marks_route() {
        // chain 0 -> 1 -> 2 plus a spur 1 -> 5 -> 6
        let g =
            ConflictGraph::from_parts(vec![cr(0, 1), cr(1, 2), cr(1, 5), cr(5, 6)], &[]).unwrap();
        let idx = scheduling_index(&g, &[NodeId(0)], &[NodeId(2)]);
        assert_eq!(idx, vec![0, 0, 1, 2]);
    }

    #[test]
    fn no_sessions_augmented_equals_plain() {
        let g = ConflictGraph::from_parts(vec![cr(0, 1), cr(1, 2), cr(2, 3)], &[(0, 1), (1, 2)])
            .unwrap();
        let plain = sio_mis(&g, &[NodeId(0)], &[NodeId(3)], 5, 3);
        let aug = augmented_sio(&g, &[], &[NodeId(0)], &[NodeId(3)], 5, 3, 12).unwrap();
        assert_eq!(aug.inner_iterations, 0);
        assert_eq!(aug.mis.sets(), plain.sets());
    }

    #[test]
    fn session_guard() {
        let g = ConflictGraph::from_parts(vec![cr(0, 1)], &[]).unwrap();
        let eps: Vec<SessionEndpoints> = (0..3)
            .map(|i| SessionEndpoints {
                session: SessionId(i),
                source: NodeId(10 + i),
                dest: NodeId(20 + i),
            })
            .collect();
        assert!(augmented_sio(&g, &eps, &[], &[], 5, 0, 2).is_err());
    }

    #[test]
    fn text_dump_is_ordered_and_deduplicated() {
        let mut c = MisCollection::new(4);
        assert!(c.push(ids(&[2, 0])));
        assert!(!c.push(ids(&[0, 2])));
        assert_eq!(c.set(0), ids(&[0, 2]).as_slice());
        assert!(c.contains_set(&ids(&[2, 0])));
    }
}
