//! Frame-based link-level cooperation baseline.
//!
//! Each active session splits its volume evenly over frames. In every frame
//! (or per-hop subframe for multi-hop sessions) the best decode-and-forward
//! relay carries the payload, and the time it saves is granted exclusively to
//! that relay.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NodeId, NodeKind, Scenario, SessionId};
use crate::nlc::blend_throughput;

/// Which facilities own secondary traffic that can use a granted leftover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum SecondarySources {
    /// Only edge routers carry secondary traffic.
    #[default]
    EdgeRouters,
    /// Every CR router carries secondary traffic.
    AllRouters,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LlcConfig {
    /// Seconds.
    pub frame_len: f64,
    pub sources: SecondarySources,
}

impl Default for LlcConfig {
    fn default() -> Self {
        LlcConfig {
            frame_len: 0.01,
            sources: SecondarySources::EdgeRouters,
        }
    }
}

impl LlcConfig {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        LlcConfig {
            frame_len: scenario.llc_frame,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_len.is_finite() && self.frame_len > 0.0) {
            return Err(Error::domain(format!(
                "frame length {} must be positive",
                self.frame_len
            )));
        }
        Ok(())
    }
}

/// Per-(sub)frame decision for one hop of a session.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopPlan {
    pub tx: NodeId,
    pub rx: NodeId,
    /// Fastest relay, if any facility reaches both ends.
    pub relay: Option<NodeId>,
    /// Relayed delivery time of one payload, seconds.
    pub relay_time: f64,
    /// Direct delivery time of one payload, seconds.
    pub direct_time: f64,
    pub cooperates: bool,
    /// Time granted to the relay per frame, seconds.
    pub leftover: f64,
    /// Bits/s the relay can push to a BS during its leftover.
    pub reward_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FramePlan {
    pub session: SessionId,
    pub frames: usize,
    /// Primary bits per frame.
    pub payload: f64,
    /// Length of each per-hop subframe, seconds.
    pub subframe: f64,
    pub hops: Vec<HopPlan>,
}

impl FramePlan {
    /// Secondary bits delivered per frame.
    pub fn secondary_bits(&self) -> f64 {
        self.hops.iter().map(|h| h.leftover * h.reward_rate).sum()
    }

    pub fn completion_time(&self, config: &LlcConfig) -> f64 {
        self.frames as f64 * config.frame_len
    }
}

/// Number of frames covering `length` seconds.
pub fn frame_count(length: f64, frame_len: f64) -> usize {
    ((length / frame_len - 1e-9).ceil() as usize).max(1)
}

/// Builds the frame plan of one session.
pub fn llc_frame_plan(
    scenario: &Scenario,
    session: SessionId,
    config: &LlcConfig,
) -> Result<FramePlan> {
    config.validate()?;
    let sess = scenario.session(session);
    let frames = frame_count(sess.length, config.frame_len);
    let payload = sess.volume / frames as f64;
    let hop_count = sess.path.len() - 1;
    let subframe = config.frame_len / hop_count as f64;
    let bs_rates = reward_rates(scenario, config);
    let hops = sess
        .hops()
        .map(|(tx, rx)| hop_plan(scenario, tx, rx, payload, subframe, &bs_rates))
        .collect();
    Ok(FramePlan {
        session,
        frames,
        payload,
        subframe,
        hops,
    })
}

fn hop_plan(
    scenario: &Scenario,
    tx: NodeId,
    rx: NodeId,
    payload: f64,
    subframe: f64,
    bs_rates: &[f64],
) -> HopPlan {
    let direct_time = payload / scenario.capacity_for(tx, rx, scenario.rate_primary);
    let mut best: Option<(NodeId, f64)> = None;
    for f in scenario.facilities() {
        if !(scenario.reaches(tx, f) && scenario.reaches(f, rx)) {
            continue;
        }
        let t = payload / scenario.capacity_for(tx, f, scenario.rate_pcr)
            + payload / scenario.capacity_for(f, rx, scenario.rate_pcr);
        if best.map_or(true, |(_, bt)| t < bt) {
            best = Some((f, t));
        }
    }
    let (relay, relay_time) = match best {
        Some((f, t)) => (Some(f), t),
        None => (None, f64::INFINITY),
    };
    let cooperates = relay_time < subframe && relay_time < direct_time;
    let (leftover, reward_rate) = match relay {
        Some(f) if cooperates => (subframe - relay_time, bs_rates[f.0]),
        _ => (0.0, 0.0),
    };
    HopPlan {
        tx,
        rx,
        relay,
        relay_time,
        direct_time,
        cooperates,
        leftover,
        reward_rate,
    }
}

/// Best one-hop CR rate to a BS for each node that owns secondary traffic,
/// zero otherwise.
fn reward_rates(scenario: &Scenario, config: &LlcConfig) -> Vec<f64> {
    let bs = scenario.base_station();
    scenario
        .node_ids()
        .map(|i| {
            let owns = match scenario.node(i).kind {
                NodeKind::CrRouter { edge } => {
                    edge || config.sources == SecondarySources::AllRouters
                }
                _ => false,
            };
            if owns && scenario.reaches(i, bs) {
                scenario.capacity_for(i, bs, scenario.rate_cr)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LlcResult {
    pub plans: Vec<FramePlan>,
    /// Averaging horizon, seconds.
    pub horizon: f64,
    /// Secondary throughput while the PUs are active, bits/s.
    pub active: f64,
}

impl LlcResult {
    pub fn plan(&self, s: SessionId) -> Option<&FramePlan> {
        self.plans.iter().find(|p| p.session == s)
    }
}

/// Secondary throughput of the baseline over `horizon` seconds. In each frame
/// only one relay may transmit, so the frame yields the largest reward among
/// the sessions still running.
pub fn llc_throughput(scenario: &Scenario, config: &LlcConfig, horizon: f64) -> Result<LlcResult> {
    config.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("horizon {horizon} must be positive")));
    }
    let plans = scenario
        .session_ids()
        .map(|s| llc_frame_plan(scenario, s, config))
        .collect::<Result<Vec<_>>>()?;
    let total_frames = frame_count(horizon, config.frame_len);
    let mut bits = 0.0;
    for f in 0..total_frames {
        let best = plans
            .iter()
            .filter(|p| f < p.frames)
            .map(FramePlan::secondary_bits)
            .fold(0.0, f64::max);
        bits += best;
    }
    Ok(LlcResult {
        plans,
        horizon,
        active: bits / horizon,
    })
}

/// Blends the active baseline throughput with the idle-spectrum optimum.
pub fn llc_expected(result: &LlcResult, idle: f64, rho: f64) -> Result<f64> {
    blend_throughput(rho, result.active, idle)
}

pub fn llc_completion_time(
    scenario: &Scenario,
    session: SessionId,
    config: &LlcConfig,
) -> Result<f64> {
    config.validate()?;
    Ok(frame_count(scenario.session(session).length, config.frame_len) as f64 * config.frame_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Node, PrimarySession, RadioParams};

    /// Source and destination 200 m apart, one relay midway that is also an
    /// edge router next to the BS.
    fn line(volume: f64, length: f64, edge: bool) -> Scenario {
        let nodes = vec![
            Node::new("BS", NodeKind::BaseStation, 100.0, 100.0),
            Node::new("R", NodeKind::CrRouter { edge }, 100.0, 0.0),
            Node::new("Ps", NodeKind::PuSource, 0.0, 0.0),
            Node::new("Pd", NodeKind::PuDest, 200.0, 0.0),
        ];
        Scenario {
            nodes,
            sessions: vec![PrimarySession {
                label: "1".into(),
                path: vec![NodeId(2), NodeId(3)],
                length,
                volume,
            }],
            radio: RadioParams::with_ranges(120.0, 300.0),
            rate_cr: 2e6,
            rate_pcr: 3e6,
            rate_primary: 1e6,
            alpha: 1.0,
            rho: 1.0,
            llc_frame: 0.01,
            capacity_overrides: Vec::new(),
        }
    }

    #[test]
    fn frame_count_rounds_up() {
        assert_eq!(frame_count(30.0, 0.01), 3000);
        assert_eq!(frame_count(0.015, 0.01), 2);
        assert_eq!(frame_count(0.001, 0.01), 1);
    }

    #[test]
    fn two_thirds_delivery_leaves_a_third() {
        // payload 10 kbit per frame, 2 * 10e3 / 3e6 = 6.67 ms of a 10 ms frame
        let sc = line(10e3 * 100.0, 1.0, true);
        let cfg = LlcConfig::default();
        let plan = llc_frame_plan(&sc, SessionId(0), &cfg).unwrap();
        assert_eq!(plan.frames, 100);
        let hop = &plan.hops[0];
        assert_eq!(hop.relay, Some(NodeId(1)));
        assert!(hop.cooperates);
        assert!((hop.leftover - 0.01 / 3.0).abs() < 1e-12);
        assert_eq!(hop.reward_rate, 2e6);
        let res = llc_throughput(&sc, &cfg, 1.0).unwrap();
        assert!((res.active - 2e6 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn slow_relay_gives_nothing() {
        let sc = line(20e3 * 100.0, 1.0, true);
        let cfg = LlcConfig::default();
        let plan = llc_frame_plan(&sc, SessionId(0), &cfg).unwrap();
        assert!(!plan.hops[0].cooperates);
        assert_eq!(plan.secondary_bits(), 0.0);
    }

    #[test]
    fn relay_without_traffic_earns_nothing() {
        let sc = line(10e3 * 100.0, 1.0, false);
        let plan = llc_frame_plan(&sc, SessionId(0), &LlcConfig::default()).unwrap();
        assert!(plan.hops[0].cooperates);
        assert_eq!(plan.secondary_bits(), 0.0);
        let all = LlcConfig {
            sources: SecondarySources::AllRouters,
            ..Default::default()
        };
        let plan = llc_frame_plan(&sc, SessionId(0), &all).unwrap();
        assert!(plan.secondary_bits() > 0.0);
    }

    #[test]
    fn completion_ignores_volume() {
        let cfg = LlcConfig::default();
        let a = llc_completion_time(&line(1e3, 30.0, true), SessionId(0), &cfg).unwrap();
        let b = llc_completion_time(&line(1e9, 30.0, true), SessionId(0), &cfg).unwrap();
        assert!((a - 30.0).abs() < 1e-9);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_frame() {
        let cfg = LlcConfig {
            frame_len: 0.0,
            ..Default::default()
        };
        assert!(llc_frame_plan(&line(1e3, 1.0, true), SessionId(0), &cfg).is_err());
    }
}
