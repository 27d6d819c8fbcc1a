//! Planning and analysis toolkit for network-level session-based
//! cooperation in cognitive capacity harvesting networks.
//!
//! The pipeline runs scenario -> links -> PU-related conflict graph ->
//! maximal independent sets -> joint session selection / routing /
//! scheduling LP. A frame-based link-level baseline and the throughput
//! scaling-law analysis sit beside it.

pub mod conflict;
pub mod error;
pub mod harness;
pub mod llc;
pub mod lp;
pub mod mis;
pub mod model;
pub mod nlc;
pub mod scaling;

pub use conflict::{ConflictGraph, Vertex, VertexId, VertexKind};
pub use error::{Error, Result};
pub use lp::{LinearProgram, LpSolution, LpStatus, Relation};
pub use mis::{MisCollection, MisMode};
pub use model::{
    derive_links, EntityType, Link, LinkKind, Node, NodeId, NodeKind, PrimarySession, RadioParams,
    Scenario, SessionId,
};
pub use nlc::{NlcSolution, NlcSolver};
