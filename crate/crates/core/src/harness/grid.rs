//! Canonical scenario generators: the small four-facility toy and the
//! 5 x 5 grid with a central BS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Node, NodeId, NodeKind, PrimarySession, RadioParams, Scenario};

/// Which set of primary sessions to place on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionLayout {
    /// Five one-hop sessions.
    Standard,
    /// As `Standard`, with session 4 relayed over one PU relay.
    MultiHop,
    /// No sessions.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub spacing_m: f64,
    pub radio: RadioParams,
    pub rate_cr_bps: f64,
    pub rate_pcr_bps: f64,
    pub rate_primary_bps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub llc_frame_s: f64,
    pub layout: SessionLayout,
    /// Per-session lengths, five entries.
    pub lengths_s: Vec<f64>,
    /// Per-session volumes, five entries.
    pub volumes_bits: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            spacing_m: 200.0,
            radio: RadioParams::grid_default(),
            rate_cr_bps: 3e6,
            rate_pcr_bps: 3e6,
            rate_primary_bps: 1e6,
            alpha: 1.0,
            rho: 1.0,
            llc_frame_s: 0.01,
            layout: SessionLayout::Standard,
            lengths_s: vec![30.0, 30.0, 30.0, 60.0, 60.0],
            volumes_bits: vec![20e6; 5],
        }
    }
}

/// Session endpoints in units of half the grid spacing, facilities sitting
/// at even coordinates 0..=8 and the BS at (4, 4). Every endpoint is a cell
/// centre, so its nearest facilities are half a diagonal away, and source
/// and destination are one spacing apart. Session 3 sits next to the BS;
/// sessions 1 and 2 flank the edge routers; 4 and 5 lie on the rim.
const SESSION_ENDPOINTS: [[(i32, i32); 2]; 5] = [
    [(-1, 1), (-1, -1)],
    [(9, 7), (9, 9)],
    [(3, 5), (5, 5)],
    [(-1, 7), (-1, 9)],
    [(7, -1), (9, -1)],
];
/// Path of session 4 in the multi-hop layout.
const MULTI_HOP_SESSION_4: [(i32, i32); 3] = [(-1, 7), (-1, 9), (1, 9)];

pub fn generate_grid_scenario(config: &GridConfig) -> Result<Scenario> {
    if !(config.spacing_m > 0.0 && config.spacing_m.is_finite()) {
        return Err(Error::domain("grid spacing must be positive"));
    }
    let sessions_wanted = if config.layout == SessionLayout::None {
        0
    } else {
        5
    };
    if sessions_wanted > 0 && (config.lengths_s.len() != 5 || config.volumes_bits.len() != 5) {
        return Err(Error::domain(
            "grid sessions need five lengths and five volumes",
        ));
    }
    let s = config.spacing_m;
    let h = s / 2.0;
    let mut nodes = Vec::new();
    let mut cr = 0;
    for row in 0..5 {
        for col in 0..5 {
            let (x, y) = (col as f64 * s, row as f64 * s);
            if row == 2 && col == 2 {
                nodes.push(Node::new("BS", NodeKind::BaseStation, x, y));
            } else {
                cr += 1;
                let edge = cr == 1 || cr == 24;
                nodes.push(Node::new(
                    format!("CR{cr}"),
                    NodeKind::CrRouter { edge },
                    x,
                    y,
                ));
            }
        }
    }
    let mut sessions = Vec::new();
    for k in 0..sessions_wanted {
        let pts: Vec<(i32, i32)> = if k == 3 && config.layout == SessionLayout::MultiHop {
            MULTI_HOP_SESSION_4.to_vec()
        } else {
            SESSION_ENDPOINTS[k].to_vec()
        };
        let last = pts.len() - 1;
        let mut path = Vec::new();
        for (i, &(px, py)) in pts.iter().enumerate() {
            let (label, kind) = match i {
                0 => (format!("Ps{}", k + 1), NodeKind::PuSource),
                i if i == last => (format!("Pd{}", k + 1), NodeKind::PuDest),
                _ => (format!("Pr{}", k + 1), NodeKind::PuRelay),
            };
            path.push(NodeId(nodes.len()));
            nodes.push(Node::new(label, kind, px as f64 * h, py as f64 * h));
        }
        sessions.push(PrimarySession {
            label: format!("{}", k + 1),
            path,
            length: config.lengths_s[k],
            volume: config.volumes_bits[k],
        });
    }
    let scenario = Scenario {
        nodes,
        sessions,
        radio: config.radio.clone(),
        rate_cr: config.rate_cr_bps,
        rate_pcr: config.rate_pcr_bps,
        rate_primary: config.rate_primary_bps,
        alpha: config.alpha,
        rho: config.rho,
        llc_frame: config.llc_frame_s,
        capacity_overrides: Vec::new(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Four facilities and one session with `R_T = 100 m`, `R_I = 200 m`:
/// B (the BS) at the origin, C and D to its right, A above it, the session
/// running from above-left of B to its left.
pub fn toy_scenario(length_s: f64, volume_bits: f64) -> Scenario {
    let nodes = vec![
        Node::new("A", NodeKind::CrRouter { edge: true }, 0.0, 100.0),
        Node::new("B", NodeKind::BaseStation, 0.0, 0.0),
        Node::new("C", NodeKind::CrRouter { edge: false }, 100.0, 0.0),
        Node::new("D", NodeKind::CrRouter { edge: true }, 200.0, 0.0),
        Node::new("Ps", NodeKind::PuSource, -100.0, 100.0),
        Node::new("Pd", NodeKind::PuDest, -100.0, 0.0),
    ];
    Scenario {
        nodes,
        sessions: vec![PrimarySession {
            label: "P".into(),
            path: vec![NodeId(4), NodeId(5)],
            length: length_s,
            volume: volume_bits,
        }],
        radio: RadioParams::with_ranges(100.0, 200.0),
        rate_cr: 3e6,
        rate_pcr: 3e6,
        rate_primary: 1e6,
        alpha: 1.0,
        rho: 1.0,
        llc_frame: 0.01,
        capacity_overrides: Vec::new(),
    }
}
