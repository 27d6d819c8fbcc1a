//! Geometric network model: entities, the protocol interference model and
//! link derivation.
//!
//! Range boundaries are inclusive: a receiver exactly at `R_T` is reachable
//! and a node exactly at `R_I` is interfered with. Distances are compared
//! with a relative slack of [`RANGE_EPS`] so that layouts built on exact
//! range multiples are not split by rounding.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to range comparisons.
pub const RANGE_EPS: f64 = 1e-9;

/// Transmitter/receiver class used to select powers and thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    /// CR router.
    Cr,
    /// Base station.
    Bs,
    /// Primary user (source, destination or relay).
    Pu,
}

/// A value given separately for each entity type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerEntity {
    pub cr: f64,
    pub bs: f64,
    pub pu: f64,
}

impl PerEntity {
    pub fn uniform(v: f64) -> Self {
        PerEntity {
            cr: v,
            bs: v,
            pu: v,
        }
    }

    pub fn get(&self, ty: EntityType) -> f64 {
        match ty {
            EntityType::Cr => self.cr,
            EntityType::Bs => self.bs,
            EntityType::Pu => self.pu,
        }
    }

    fn all_positive(&self) -> bool {
        [self.cr, self.bs, self.pu]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Radio parameters of the protocol model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Antenna related constant.
    pub gamma: f64,
    pub pathloss_exponent: f64,
    /// Transmit power per transmitter type.
    pub tx_power_w: PerEntity,
    /// Reception threshold per receiver type.
    pub rx_threshold_w: PerEntity,
    /// Interference threshold per receiver type.
    pub interference_threshold_w: PerEntity,
}

impl RadioParams {
    /// 2 W everywhere, `P_R = 1e-6 W`, `P_I = 1.34e-7 W`, `gamma = 4.63`,
    /// `n = 3`. Gives `R_T ~ 210 m` and `R_I ~ 410 m`.
    pub fn grid_default() -> Self {
        RadioParams {
            gamma: 4.63,
            pathloss_exponent: 3.0,
            tx_power_w: PerEntity::uniform(2.0),
            rx_threshold_w: PerEntity::uniform(1e-6),
            interference_threshold_w: PerEntity::uniform(1.34e-7),
        }
    }

    /// Parameters with exactly the requested uniform ranges (`n = 2`,
    /// `gamma = 1`, unit power).
    pub fn with_ranges(r_t: f64, r_i: f64) -> Self {
        RadioParams {
            gamma: 1.0,
            pathloss_exponent: 2.0,
            tx_power_w: PerEntity::uniform(1.0),
            rx_threshold_w: PerEntity::uniform(1.0 / (r_t * r_t)),
            interference_threshold_w: PerEntity::uniform(1.0 / (r_i * r_i)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::scenario("gamma must be positive"));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 2.0) {
            return Err(Error::scenario("path-loss exponent must be at least 2"));
        }
        if !(self.tx_power_w.all_positive()
            && self.rx_threshold_w.all_positive()
            && self.interference_threshold_w.all_positive())
        {
            return Err(Error::scenario("powers and thresholds must be positive"));
        }
        Ok(())
    }

    /// `R_T` from a transmitter of type `tx` to a receiver of type `rx`.
    pub fn transmission_range(&self, tx: EntityType, rx: EntityType) -> f64 {
        range_formula(
            self.tx_power_w.get(tx),
            self.rx_threshold_w.get(rx),
            self.gamma,
            self.pathloss_exponent,
        )
    }

    /// `R_I` from a transmitter of type `tx` to a receiver of type `rx`.
    pub fn interference_range(&self, tx: EntityType, rx: EntityType) -> f64 {
        range_formula(
            self.tx_power_w.get(tx),
            self.interference_threshold_w.get(rx),
            self.gamma,
            self.pathloss_exponent,
        )
    }
}

fn range_formula(p_t: f64, p_thresh: f64, gamma: f64, n: f64) -> f64 {
    (gamma * p_t / p_thresh).powf(1.0 / n)
}

/// Received power `p_t * gamma * d^-n`.
pub fn received_power(p_t: f64, gamma: f64, d: f64, n: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {d}")));
    }
    Ok(p_t * gamma * d.powf(-n))
}

/// Distance at which the received power falls to `p_thresh`.
pub fn transmission_range(p_t: f64, p_thresh: f64, gamma: f64, n: f64) -> Result<f64> {
    for (name, v) in [
        ("p_t", p_t),
        ("p_thresh", p_thresh),
        ("gamma", gamma),
        ("n", n),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(range_formula(p_t, p_thresh, gamma, n))
}

#[inline]
pub(crate) fn within(d: f64, range: f64) -> bool {
    d <= range * (1.0 + RANGE_EPS)
}

/// Dense node index into [`Scenario::nodes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

/// Dense session index into [`Scenario::sessions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    BaseStation,
    CrRouter { edge: bool },
    PuSource,
    PuDest,
    PuRelay,
}

impl NodeKind {
    pub fn entity_type(&self) -> EntityType {
        match self {
            NodeKind::BaseStation => EntityType::Bs,
            NodeKind::CrRouter { .. } => EntityType::Cr,
            NodeKind::PuSource | NodeKind::PuDest | NodeKind::PuRelay => EntityType::Pu,
        }
    }

    /// BSs and CR routers.
    pub fn is_facility(&self) -> bool {
        matches!(self, NodeKind::BaseStation | NodeKind::CrRouter { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub label: String,
    pub kind: NodeKind,
    pub pos: Point,
}

impl Node {
    pub fn new(label: impl Into<String>, kind: NodeKind, x: f64, y: f64) -> Self {
        Node {
            label: label.into(),
            kind,
            pos: Point::new(x, y),
        }
    }
}

/// A primary session: an end-to-end PU transmission along a fixed path.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimarySession {
    pub label: String,
    /// Source, optional PU relays, destination.
    pub path: Vec<NodeId>,
    /// Session length in seconds.
    pub length: f64,
    /// Data volume in bits.
    pub volume: f64,
}

impl PrimarySession {
    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn dest(&self) -> NodeId {
        *self.path.last().expect("validated path")
    }

    /// Consecutive `(tx, rx)` hops along the path.
    pub fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.path.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapacityOverride {
    pub tx: NodeId,
    pub rx: NodeId,
    /// bits/s
    pub capacity: f64,
}

/// A complete planning scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub sessions: Vec<PrimarySession>,
    pub radio: RadioParams,
    /// Default CR-link rate, bits/s.
    pub rate_cr: f64,
    /// Default PU-related-link rate, bits/s.
    pub rate_pcr: f64,
    /// Primary-link rate, bits/s.
    pub rate_primary: f64,
    /// Incentive parameter, at least 1.
    pub alpha: f64,
    /// Probability that the PUs are active.
    pub rho: f64,
    /// Frame length of the link-level baseline, seconds.
    pub llc_frame: f64,
    pub capacity_overrides: Vec<CapacityOverride>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        let mut seen = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if seen.insert(n.label.as_str(), i).is_some() {
                return Err(Error::scenario(format!("duplicate node id {:?}", n.label)));
            }
            if !(n.pos.x.is_finite() && n.pos.y.is_finite()) {
                return Err(Error::scenario(format!(
                    "node {:?} has non-finite position",
                    n.label
                )));
            }
        }
        let bs_count = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::BaseStation)
            .count();
        if bs_count != 1 {
            return Err(Error::scenario(format!(
                "expected exactly one base station, found {bs_count}"
            )));
        }
        let mut pu_owner: HashMap<NodeId, usize> = HashMap::new();
        for (s, sess) in self.sessions.iter().enumerate() {
            if sess.path.len() < 2 {
                return Err(Error::scenario(format!(
                    "session {:?} path shorter than 2",
                    sess.label
                )));
            }
            if sess.path.iter().any(|id| id.0 >= self.nodes.len()) {
                return Err(Error::scenario(format!(
                    "session {:?} references unknown node",
                    sess.label
                )));
            }
            if !(sess.length.is_finite() && sess.length > 0.0) {
                return Err(Error::scenario(format!(
                    "session {:?} length must be positive",
                    sess.label
                )));
            }
            if !(sess.volume.is_finite() && sess.volume >= 0.0) {
                return Err(Error::scenario(format!(
                    "session {:?} volume must be non-negative",
                    sess.label
                )));
            }
            let last = sess.path.len() - 1;
            for (k, id) in sess.path.iter().enumerate() {
                let expected = match k {
                    0 => NodeKind::PuSource,
                    k if k == last => NodeKind::PuDest,
                    _ => NodeKind::PuRelay,
                };
                if self.nodes[id.0].kind != expected {
                    return Err(Error::scenario(format!(
                        "session {:?}: node {:?} should be {:?}",
                        sess.label, self.nodes[id.0].label, expected
                    )));
                }
                if let Some(owner) = pu_owner.insert(*id, s) {
                    if owner != s || k > 0 && sess.path[..k].contains(id) {
                        return Err(Error::scenario(format!(
                            "PU node {:?} used more than once",
                            self.nodes[id.0].label
                        )));
                    }
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.kind.is_facility() && !pu_owner.contains_key(&NodeId(i)) {
                return Err(Error::scenario(format!(
                    "PU node {:?} belongs to no session",
                    n.label
                )));
            }
        }
        for (name, v) in [
            ("rate_cr", self.rate_cr),
            ("rate_pcr", self.rate_pcr),
            ("rate_primary", self.rate_primary),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::scenario(format!("{name} must be positive")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::scenario("alpha must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::scenario("rho must lie in [0, 1]"));
        }
        if !(self.llc_frame.is_finite() && self.llc_frame > 0.0) {
            return Err(Error::scenario("llc frame length must be positive"));
        }
        for o in &self.capacity_overrides {
            if o.tx.0 >= self.nodes.len() || o.rx.0 >= self.nodes.len() {
                return Err(Error::scenario("capacity override references unknown node"));
            }
            if !(o.capacity.is_finite() && o.capacity > 0.0) {
                return Err(Error::scenario("capacity override must be positive"));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label).map(NodeId)
    }

    pub fn session(&self, id: SessionId) -> &PrimarySession {
        &self.sessions[id.0]
    }

    pub fn session_ids(&self) -> impl Iterator<Item = SessionId> {
        (0..self.sessions.len()).map(SessionId)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn base_station(&self) -> NodeId {
        self.node_ids()
            .find(|&i| self.node(i).kind == NodeKind::BaseStation)
            .expect("validated scenario has a base station")
    }

    /// BS and CR routers, in node order.
    pub fn facilities(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&i| self.node(i).kind.is_facility())
    }

    /// Edge CR routers, in node order.
    pub fn edge_routers(&self) -> Vec<NodeId> {
        self.node_ids()
            .filter(|&i| self.node(i).kind == NodeKind::CrRouter { edge: true })
            .collect()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.node(a).pos.distance(&self.node(b).pos)
    }

    pub fn entity_type(&self, id: NodeId) -> EntityType {
        self.node(id).kind.entity_type()
    }

    /// True iff `rx` lies within the transmission range of `tx`.
    pub fn reaches(&self, tx: NodeId, rx: NodeId) -> bool {
        let r = self
            .radio
            .transmission_range(self.entity_type(tx), self.entity_type(rx));
        within(self.distance(tx, rx), r)
    }

    /// True iff `rx` lies within the interference range of `tx`.
    pub fn interferes(&self, tx: NodeId, rx: NodeId) -> bool {
        interferes(self.node(tx), self.node(rx), &self.radio)
    }

    pub(crate) fn capacity_for(&self, tx: NodeId, rx: NodeId, default: f64) -> f64 {
        self.capacity_overrides
            .iter()
            .find(|o| o.tx == tx && o.rx == rx)
            .map_or(default, |o| o.capacity)
    }

    /// Same scenario with every primary session and PU node removed.
    pub fn without_sessions(&self) -> Scenario {
        let mut remap = vec![None; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind.is_facility() {
                remap[i] = Some(NodeId(nodes.len()));
                nodes.push(n.clone());
            }
        }
        let capacity_overrides = self
            .capacity_overrides
            .iter()
            .filter_map(|o| {
                Some(CapacityOverride {
                    tx: remap[o.tx.0]?,
                    rx: remap[o.rx.0]?,
                    capacity: o.capacity,
                })
            })
            .collect();
        Scenario {
            nodes,
            sessions: Vec::new(),
            capacity_overrides,
            ..self.clone()
        }
    }
}

/// Protocol-model interference test between two nodes.
pub fn interferes(tx: &Node, rx: &Node, radio: &RadioParams) -> bool {
    let r = radio.interference_range(tx.kind.entity_type(), rx.kind.entity_type());
    within(tx.pos.distance(&rx.pos), r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkKind {
    /// Between two secondary facilities.
    Cr,
    /// From a session source into a facility.
    PuIn(SessionId),
    /// From a facility to a session destination.
    PuOut(SessionId),
    /// A hop of the session's own path.
    Primary(SessionId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub tx: NodeId,
    pub rx: NodeId,
    pub kind: LinkKind,
    /// bits/s
    pub capacity: f64,
}

impl Link {
    pub fn is_pu_related(&self) -> bool {
        matches!(self.kind, LinkKind::PuIn(_) | LinkKind::PuOut(_))
    }

    pub fn label(&self, scenario: &Scenario) -> String {
        let prefix = match self.kind {
            LinkKind::Cr => "CR",
            LinkKind::PuIn(_) => "PIN",
            LinkKind::PuOut(_) => "POUT",
            LinkKind::Primary(_) => "PRI",
        };
        format!(
            "{prefix}:{}->{}",
            scenario.node(self.tx).label,
            scenario.node(self.rx).label
        )
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Derives CR links, PU-related links and primary links.
///
/// Order: CR links by `(tx, rx)`, then per session its inbound PU-related
/// links, outbound PU-related links and primary hops. No link ever points
/// from a facility to a PU source or from a PU destination to a facility.
pub fn derive_links(scenario: &Scenario) -> Vec<Link> {
    let facilities: Vec<NodeId> = scenario.facilities().collect();
    let mut links = Vec::new();
    for &i in &facilities {
        for &j in &facilities {
            if i != j && scenario.reaches(i, j) {
                links.push(Link {
                    tx: i,
                    rx: j,
                    kind: LinkKind::Cr,
                    capacity: scenario.capacity_for(i, j, scenario.rate_cr),
                });
            }
        }
    }
    for s in scenario.session_ids() {
        let sess = scenario.session(s);
        let (src, dst) = (sess.source(), sess.dest());
        for &j in &facilities {
            if scenario.reaches(src, j) {
                links.push(Link {
                    tx: src,
                    rx: j,
                    kind: LinkKind::PuIn(s),
                    capacity: scenario.capacity_for(src, j, scenario.rate_pcr),
                });
            }
        }
        for &i in &facilities {
            if scenario.reaches(i, dst) {
                links.push(Link {
                    tx: i,
                    rx: dst,
                    kind: LinkKind::PuOut(s),
                    capacity: scenario.capacity_for(i, dst, scenario.rate_pcr),
                });
            }
        }
        for (a, b) in sess.hops() {
            links.push(Link {
                tx: a,
                rx: b,
                kind: LinkKind::Primary(s),
                capacity: scenario.capacity_for(a, b, scenario.rate_primary),
            });
        }
    }
    links
}
