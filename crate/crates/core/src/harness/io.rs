//! JSON scenario documents.
//!
//! The on-disk form names nodes by label and carries units in field names.
//! [`ScenarioDoc::resolve`] turns it into a validated [`Scenario`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CapacityOverride, Node, NodeId, NodeKind, PrimarySession, RadioParams, Scenario,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindDoc {
    BaseStation,
    CrRouter,
    PuSource,
    PuDest,
    PuRelay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub kind: NodeKindDoc,
    /// Only meaningful for CR routers.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub edge: bool,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDoc {
    pub id: String,
    /// Node ids from source to destination.
    pub path: Vec<String>,
    pub length_s: f64,
    pub volume_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityOverrideDoc {
    pub tx: String,
    pub rx: String,
    pub capacity_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema_version: u32,
    pub radio: RadioParams,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub sessions: Vec<SessionDoc>,
    pub rate_cr_bps: f64,
    pub rate_pcr_bps: f64,
    pub rate_primary_bps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub llc_frame_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_capacity_overrides: Vec<CapacityOverrideDoc>,
}

impl ScenarioDoc {
    pub fn from_scenario(s: &Scenario) -> Self {
        let label = |id: NodeId| s.node(id).label.clone();
        ScenarioDoc {
            schema_version: SCHEMA_VERSION,
            radio: s.radio.clone(),
            nodes: s
                .nodes
                .iter()
                .map(|n| {
                    let (kind, edge) = match n.kind {
                        NodeKind::BaseStation => (NodeKindDoc::BaseStation, false),
                        NodeKind::CrRouter { edge } => (NodeKindDoc::CrRouter, edge),
                        NodeKind::PuSource => (NodeKindDoc::PuSource, false),
                        NodeKind::PuDest => (NodeKindDoc::PuDest, false),
                        NodeKind::PuRelay => (NodeKindDoc::PuRelay, false),
                    };
                    NodeDoc {
                        id: n.label.clone(),
                        kind,
                        edge,
                        x_m: n.pos.x,
                        y_m: n.pos.y,
                    }
                })
                .collect(),
            sessions: s
                .sessions
                .iter()
                .map(|p| SessionDoc {
                    id: p.label.clone(),
                    path: p.path.iter().map(|&n| label(n)).collect(),
                    length_s: p.length,
                    volume_bits: p.volume,
                })
                .collect(),
            rate_cr_bps: s.rate_cr,
            rate_pcr_bps: s.rate_pcr,
            rate_primary_bps: s.rate_primary,
            alpha: s.alpha,
            rho: s.rho,
            llc_frame_s: s.llc_frame,
            link_capacity_overrides: s
                .capacity_overrides
                .iter()
                .map(|o| CapacityOverrideDoc {
                    tx: label(o.tx),
                    rx: label(o.rx),
                    capacity_bps: o.capacity,
                })
                .collect(),
        }
    }

    pub fn resolve(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| {
                let kind = match n.kind {
                    NodeKindDoc::BaseStation => NodeKind::BaseStation,
                    NodeKindDoc::CrRouter => NodeKind::CrRouter { edge: n.edge },
                    NodeKindDoc::PuSource => NodeKind::PuSource,
                    NodeKindDoc::PuDest => NodeKind::PuDest,
                    NodeKindDoc::PuRelay => NodeKind::PuRelay,
                };
                Node::new(n.id.clone(), kind, n.x_m, n.y_m)
            })
            .collect();
        let lookup = |id: &str| -> Result<NodeId> {
            nodes
                .iter()
                .position(|n| n.label == id)
                .map(NodeId)
                .ok_or_else(|| Error::scenario(format!("unknown node id {id:?}")))
        };
        let sessions = self
            .sessions
            .iter()
            .map(|p| {
                Ok(PrimarySession {
                    label: p.id.clone(),
                    path: p.path.iter().map(|n| lookup(n)).collect::<Result<_>>()?,
                    length: p.length_s,
                    volume: p.volume_bits,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let capacity_overrides = self
            .link_capacity_overrides
            .iter()
            .map(|o| {
                Ok(CapacityOverride {
                    tx: lookup(&o.tx)?,
                    rx: lookup(&o.rx)?,
                    capacity: o.capacity_bps,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario {
            nodes,
            sessions,
            radio: self.radio.clone(),
            rate_cr: self.rate_cr_bps,
            rate_pcr: self.rate_pcr_bps,
            rate_primary: self.rate_primary_bps,
            alpha: self.alpha,
            rho: self.rho,
            llc_frame: self.llc_frame_s,
            capacity_overrides,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text)?;
    doc.resolve()
}

pub fn scenario_to_json(scenario: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioDoc::from_scenario(
        scenario,
    ))?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario_to_json(scenario)? + "\n")?;
    Ok(())
}
