//! PU-related conflict graph over CR links, PU-related links and primary
//! sessions.

use std::fmt::Write as _;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::model::{Link, LinkKind, NodeId, Scenario, SessionId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VertexKind {
    CrLink(Link),
    PuRelated(Link),
    Session(SessionId),
}

impl VertexKind {
    pub fn link(&self) -> Option<&Link> {
        match self {
            VertexKind::CrLink(l) | VertexKind::PuRelated(l) => Some(l),
            VertexKind::Session(_) => None,
        }
    }

    pub fn session(&self) -> Option<SessionId> {
        match self {
            VertexKind::Session(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
}

/// Rules 1-3 of the conflict relation between two communication links.
pub fn link_conflicts(a: &Link, b: &Link, scenario: &Scenario) -> bool {
    // shared radio, or one link's receiver is the other's transmitter
    if a.tx == b.tx || a.rx == b.rx || a.rx == b.tx || b.rx == a.tx {
        return true;
    }
    scenario.interferes(b.tx, a.rx) || scenario.interferes(a.tx, b.rx)
}

/// A link conflicts with a session iff it conflicts with any of its hops.
pub fn session_conflicts(link: &Link, session: SessionId, scenario: &Scenario) -> bool {
    let sess = scenario.session(session);
    sess.hops().any(|(tx, rx)| {
        let hop = Link {
            tx,
            rx,
            kind: LinkKind::Primary(session),
            capacity: scenario.rate_primary,
        };
        link_conflicts(link, &hop, scenario)
    })
}

/// PU-related links never conflict with their own session vertex: they are
/// only ever scheduled while cooperating with that session.
fn own_session_exempt(link: &Link, session: SessionId) -> bool {
    matches!(link.kind, LinkKind::PuIn(s) | LinkKind::PuOut(s) if s == session)
}

/// Undirected conflict graph with dense bitset adjacency rows.
#[derive(Clone, Debug)]
pub struct ConflictGraph {
    vertices: Vec<Vertex>,
    adj: Vec<FixedBitSet>,
    session_vertex: Vec<Option<VertexId>>,
}

impl ConflictGraph {
    /// Builds the graph from abstract parts. Edges are symmetrised;
    /// self-loops and edges between two session vertices are rejected.
    pub fn from_parts(kinds: Vec<VertexKind>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = kinds.len();
        let mut g = ConflictGraph::empty(kinds);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Parse(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::Parse(format!("self-loop at {u}")));
            }
            if g.vertices[u].kind.session().is_some() && g.vertices[v].kind.session().is_some() {
                return Err(Error::Parse(
                    "session vertices must be mutually non-adjacent".into(),
                ));
            }
            g.add_edge(u, v);
        }
        Ok(g)
    }

    fn empty(kinds: Vec<VertexKind>) -> Self {
        let n = kinds.len();
        let vertices: Vec<Vertex> = kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| Vertex {
                id: VertexId(i),
                kind,
            })
            .collect();
        let sessions = vertices
            .iter()
            .filter_map(|v| v.kind.session())
            .map(|s| s.0 + 1)
            .max()
            .unwrap_or(0);
        let mut session_vertex = vec![None; sessions];
        for v in &vertices {
            if let Some(s) = v.kind.session() {
                session_vertex[s.0] = Some(v.id);
            }
        }
        ConflictGraph {
            vertices,
            adj: vec![FixedBitSet::with_capacity(n); n],
            session_vertex,
        }
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.adj[u].insert(v);
        self.adj[v].insert(u);
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn is_adjacent(&self, u: VertexId, v: VertexId) -> bool {
        self.adj[u.0].contains(v.0)
    }

    pub fn neighbors(&self, v: VertexId) -> &FixedBitSet {
        &self.adj[v.0]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adj[v.0].count_ones(..)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|r| r.count_ones(..)).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, row)| {
            row.ones()
                .filter(move |&v| v > u)
                .map(move |v| (VertexId(u), VertexId(v)))
        })
    }

    /// Vertex of session `s`, if present in this graph.
    pub fn session_vertex(&self, s: SessionId) -> Option<VertexId> {
        self.session_vertex.get(s.0).copied().flatten()
    }

    pub fn session_vertices(&self) -> impl Iterator<Item = (SessionId, VertexId)> + '_ {
        self.session_vertex
            .iter()
            .enumerate()
            .filter_map(|(s, v)| v.map(|v| (SessionId(s), v)))
    }

    pub fn link_vertices(&self) -> impl Iterator<Item = (VertexId, &Link)> + '_ {
        self.vertices
            .iter()
            .filter_map(|v| v.kind.link().map(|l| (v.id, l)))
    }

    /// Subgraph induced by `keep` (must be sorted, distinct). Returns the
    /// subgraph and, for every new vertex, its id in `self`.
    pub fn induced(&self, keep: &[VertexId]) -> (ConflictGraph, Vec<VertexId>) {
        let mut new_of = vec![usize::MAX; self.len()];
        for (k, v) in keep.iter().enumerate() {
            new_of[v.0] = k;
        }
        let mut g = ConflictGraph::empty(keep.iter().map(|v| self.vertex(*v).kind).collect());
        for (k, v) in keep.iter().enumerate() {
            for w in self.adj[v.0].ones() {
                let nw = new_of[w];
                if nw != usize::MAX {
                    g.adj[k].insert(nw);
                }
            }
        }
        (g, keep.to_vec())
    }

    /// Removes the given sessions together with every vertex adjacent to
    /// them. Returns the remaining subgraph and its vertex map.
    pub fn without_sessions(&self, removed: &[SessionId]) -> (ConflictGraph, Vec<VertexId>) {
        let mut drop = FixedBitSet::with_capacity(self.len());
        for &s in removed {
            if let Some(v) = self.session_vertex(s) {
                drop.insert(v.0);
                drop.union_with(&self.adj[v.0]);
            }
        }
        let keep: Vec<VertexId> = (0..self.len())
            .filter(|&i| !drop.contains(i))
            .map(VertexId)
            .collect();
        self.induced(&keep)
    }

    pub fn vertex_label(&self, v: VertexId, scenario: &Scenario) -> String {
        match &self.vertex(v).kind {
            VertexKind::CrLink(l) | VertexKind::PuRelated(l) => l.label(scenario),
            VertexKind::Session(s) => format!("S:{}", scenario.session(*s).label),
        }
    }

    /// Plain-text edge list: a `#` header block naming each vertex, then
    /// one `u v` pair per line with `u < v`.
    pub fn to_edge_list(&self, scenario: &Scenario) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vertices {}", self.len());
        for v in &self.vertices {
            let _ = writeln!(out, "# {} {}", v.id.0, self.vertex_label(v.id, scenario));
        }
        let _ = writeln!(out, "# edges {}", self.edge_count());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{} {}", u.0, v.0);
        }
        out
    }
}

/// Parsed form of [`ConflictGraph::to_edge_list`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeListDump {
    pub labels: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeListDump {
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if rest.starts_with("vertices") || rest.starts_with("edges") {
                    continue;
                }
                let (idx, label) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Parse(format!("bad vertex line {line:?}")))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad vertex index in {line:?}")))?;
                if idx != labels.len() {
                    return Err(Error::Parse(format!("vertex {idx} out of order")));
                }
                labels.push(label.to_string());
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))
            };
            let (u, v) = (next()?, next()?);
            edges.push((u, v));
        }
        Ok(EdgeListDump { labels, edges })
    }
}

/// Builds the PU-related conflict graph.
///
/// Vertex order: CR links, PU-related links (both in `links` order), then
/// one vertex per session. Primary links in `links` are used only through
/// their sessions.
pub fn build_conflict_graph(scenario: &Scenario, links: &[Link]) -> ConflictGraph {
    let mut kinds = Vec::new();
    kinds.extend(
        links
            .iter()
            .filter(|l| l.kind == LinkKind::Cr)
            .map(|l| VertexKind::CrLink(*l)),
    );
    kinds.extend(
        links
            .iter()
            .filter(|l| l.is_pu_related())
            .map(|l| VertexKind::PuRelated(*l)),
    );
    kinds.extend(scenario.session_ids().map(VertexKind::Session));

    let mut g = ConflictGraph::empty(kinds);
    let n = g.len();
    for u in 0..n {
        for v in (u + 1)..n {
            let hit = match (&g.vertices[u].kind, &g.vertices[v].kind) {
                (VertexKind::Session(_), VertexKind::Session(_)) => false,
                (VertexKind::Session(s), k) | (k, VertexKind::Session(s)) => {
                    let link = k.link().expect("non-session vertex carries a link");
                    !own_session_exempt(link, *s) && session_conflicts(link, *s, scenario)
                }
                (a, b) => link_conflicts(a.link().unwrap(), b.link().unwrap(), scenario),
            };
            if hit {
                g.add_edge(u, v);
            }
        }
    }
    g
}

/// Endpoints of the nodes a vertex's link touches; sessions touch none.
pub(crate) fn link_endpoints(kind: &VertexKind) -> Option<(NodeId, NodeId)> {
    kind.link().map(|l| (l.tx, l.rx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_links, Node, NodeKind, PrimarySession, RadioParams};

    fn line_scenario() -> Scenario {
        // a - b - c at 100 m with R_T = 100, R_I = 150
        let nodes = vec![
            Node::new("bs", NodeKind::BaseStation, 0.0, 0.0),
            Node::new("b", NodeKind::CrRouter { edge: false }, 100.0, 0.0),
            Node::new("c", NodeKind::CrRouter { edge: true }, 200.0, 0.0),
            Node::new("far", NodeKind::CrRouter { edge: false }, 1000.0, 0.0),
            Node::new("far2", NodeKind::CrRouter { edge: false }, 1100.0, 0.0),
        ];
        Scenario {
            nodes,
            sessions: vec![],
            radio: RadioParams::with_ranges(100.0, 150.0),
            rate_cr: 1.0,
            rate_pcr: 1.0,
            rate_primary: 1.0,
            alpha: 1.0,
            rho: 1.0,
            llc_frame: 0.01,
            capacity_overrides: vec![],
        }
    }

    #[test]
    fn distant_links_do_not_conflict() {
        let s = line_scenario();
        let links = derive_links(&s);
        let near = links.iter().find(|l| l.tx == NodeId(0)).unwrap();
        let far = links.iter().find(|l| l.tx == NodeId(3)).unwrap();
        assert!(!link_conflicts(near, far, &s));
    }

    #[test]
    fn no_sessions_gives_cr_only_graph() {
        let s = line_scenario();
        let links = derive_links(&s);
        let g = build_conflict_graph(&s, &links);
        assert_eq!(g.len(), 6);
        assert!(g
            .vertices()
            .iter()
            .all(|v| matches!(v.kind, VertexKind::CrLink(_))));
        assert_eq!(g.session_vertices().count(), 0);
    }

    #[test]
    fn multi_hop_session_conflicts_through_second_hop() {
        // Session ps -> pr -> pd; a CR link near pd only.
        let mut s = line_scenario();
        s.nodes
            .push(Node::new("ps", NodeKind::PuSource, 0.0, 2000.0));
        s.nodes
            .push(Node::new("pr", NodeKind::PuRelay, 0.0, 2100.0));
        s.nodes.push(Node::new("pd", NodeKind::PuDest, 0.0, 2200.0));
        s.nodes.push(Node::new(
            "x",
            NodeKind::CrRouter { edge: false },
            100.0,
            2300.0,
        ));
        s.nodes.push(Node::new(
            "y",
            NodeKind::CrRouter { edge: false },
            200.0,
            2300.0,
        ));
        s.sessions.push(PrimarySession {
            label: "s4".into(),
            path: vec![NodeId(5), NodeId(6), NodeId(7)],
            length: 30.0,
            volume: 1.0,
        });
        s.validate().unwrap();
        let link = Link {
            tx: NodeId(8),
            rx: NodeId(9),
            kind: LinkKind::Cr,
            capacity: 1.0,
        };
        let first_hop = Link {
            tx: NodeId(5),
            rx: NodeId(6),
            kind: LinkKind::Primary(SessionId(0)),
            capacity: 1.0,
        };
        assert!(!link_conflicts(&link, &first_hop, &s));
        assert!(session_conflicts(&link, SessionId(0), &s));
    }

    #[test]
    fn without_sessions_drops_neighbourhood() {
        let kinds = vec![
            VertexKind::Session(SessionId(0)),
            VertexKind::CrLink(Link {
                tx: NodeId(0),
                rx: NodeId(1),
                kind: LinkKind::Cr,
                capacity: 1.0,
            }),
            VertexKind::CrLink(Link {
                tx: NodeId(2),
                rx: NodeId(3),
                kind: LinkKind::Cr,
                capacity: 1.0,
            }),
        ];
        let g = ConflictGraph::from_parts(kinds, &[(0, 1)]).unwrap();
        let (sub, map) = g.without_sessions(&[SessionId(0)]);
        assert_eq!(sub.len(), 1);
        assert_eq!(map, vec![VertexId(2)]);
        assert_eq!(sub.session_vertex(SessionId(0)), None);
    }

    #[test]
    fn from_parts_rejects_session_edges() {
        let kinds = vec![
            VertexKind::Session(SessionId(0)),
            VertexKind::Session(SessionId(1)),
        ];
        assert!(ConflictGraph::from_parts(kinds, &[(0, 1)]).is_err());
    }
}
