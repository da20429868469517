//! Static road network, its time expansion, and evacuation plans.

mod graph;
mod plan;
mod routes;
mod teg;

pub use graph::{ArcId, ContraflowPair, Node, NodeId, NodeKind, StaticArc, StaticGraph};
pub use plan::{
    induced_flows, is_convergent, Convergence, EvacPath, EvacuationPlan, InducedFlows, ResponseCurve, Schedule,
    TimeResponsePlan, ZoneFlow, ZoneResponse,
};
pub use teg::{build_time_expanded, ArcCopy, Capacity, CopyKind, TimeExpandedGraph};
pub use routes::{complete_forest, fastest_path, time_to_safety};
