use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::network::{ArcId, ContraflowPair, Node, NodeId, NodeKind, StaticArc, StaticGraph};

pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub step_minutes: u32,
    pub horizon_steps: u32,
    /// Factor the demands were scaled by.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindTag {
    Evacuation,
    Transit,
    Safe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    #[serde(default)]
    pub name: String,
    pub kind: NodeKindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<u64>,
    /// Departures must start before this many minutes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_minutes: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
    pub travel_minutes: u32,
    pub capacity_per_step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_minutes: Option<u32>,
}

/// On-disk instance: minutes for times, vehicles per step for capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: u32,
    pub meta: Meta,
    pub nodes: Vec<NodeRecord>,
    pub arcs: Vec<ArcRecord>,
    #[serde(default)]
    pub contraflow_pairs: Vec<[usize; 2]>,
}

/// Minutes to steps, rounding up; travel is at least one step.
fn steps(minutes: u32, step: u32) -> u32 {
    minutes.div_ceil(step)
}

impl InstanceFile {
    pub fn to_graph(&self) -> Result<StaticGraph, IoError> {
        if self.version != INSTANCE_VERSION {
            return Err(IoError::Version { found: self.version, expected: INSTANCE_VERSION });
        }
        let step = self.meta.step_minutes;
        if step == 0 {
            return Err(IoError::Invalid("step_minutes must be positive".into()));
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let kind = match n.kind {
                    NodeKindTag::Evacuation => NodeKind::Evacuation {
                        demand: n.demand.ok_or_else(|| IoError::Invalid(format!("node {} has no demand", n.id)))?,
                        deadline: n.deadline_minutes.map(|m| steps(m, step)),
                    },
                    NodeKindTag::Transit => NodeKind::Transit,
                    NodeKindTag::Safe => NodeKind::Safe,
                };
                Ok(Node { id: NodeId(n.id), name: n.name.clone(), kind })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let arcs = self
            .arcs
            .iter()
            .map(|a| StaticArc {
                id: ArcId(a.id),
                tail: NodeId(a.tail),
                head: NodeId(a.head),
                travel: steps(a.travel_minutes, step).max(1),
                capacity: a.capacity_per_step,
                block: a.block_minutes.map(|m| steps(m, step)),
            })
            .collect();
        let pairs = self
            .contraflow_pairs
            .iter()
            .map(|&[f, b]| ContraflowPair { forward: ArcId(f), backward: ArcId(b) })
            .collect();
        Ok(StaticGraph::new(nodes, arcs, pairs)?)
    }

    pub fn from_graph(g: &StaticGraph, meta: Meta) -> Self {
        let step = meta.step_minutes;
        let nodes = g
            .nodes()
            .iter()
            .map(|n| {
                let (kind, demand, deadline) = match n.kind {
                    NodeKind::Evacuation { demand, deadline } => (NodeKindTag::Evacuation, Some(demand), deadline),
                    NodeKind::Transit => (NodeKindTag::Transit, None, None),
                    NodeKind::Safe => (NodeKindTag::Safe, None, None),
                };
                NodeRecord { id: n.id.0, name: n.name.clone(), kind, demand, deadline_minutes: deadline.map(|d| d * step) }
            })
            .collect();
        let arcs = g
            .arcs()
            .iter()
            .map(|a| ArcRecord {
                id: a.id.0,
                tail: a.tail.0,
                head: a.head.0,
                travel_minutes: a.travel * step,
                capacity_per_step: a.capacity,
                block_minutes: a.block.map(|b| b * step),
            })
            .collect();
        let contraflow_pairs = g.pairs().iter().map(|p| [p.forward.0, p.backward.0]).collect();
        InstanceFile { version: INSTANCE_VERSION, meta, nodes, arcs, contraflow_pairs }
    }

    /// Multiplies every demand by `x`, rounding to the nearest vehicle.
    pub fn scaled(&self, x: f64) -> Self {
        assert!(x > 0.0, "scale must be positive");
        let mut out = self.clone();
        for n in &mut out.nodes {
            if let Some(d) = &mut n.demand {
                *d = (*d as f64 * x).round() as u64;
            }
        }
        out.meta.scale *= x;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> InstanceFile {
        InstanceFile::from_json(
            r#"{
              "version": 1,
              "meta": {"name": "t1", "step_minutes": 5, "horizon_steps": 4},
              "nodes": [
                {"id": 0, "name": "E", "kind": "evacuation", "demand": 10},
                {"id": 1, "name": "S", "kind": "safe"}
              ],
              "arcs": [{"id": 0, "tail": 0, "head": 1, "travel_minutes": 3, "capacity_per_step": 5}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minutes_round_up_to_steps() {
        let g = t1().to_graph().unwrap();
        assert_eq!(g.arc(ArcId(0)).travel, 1);
        assert_eq!(g.total_demand(), 10);
    }

    #[test]
    fn graph_round_trip() {
        let f = t1();
        let g = f.to_graph().unwrap();
        let back = InstanceFile::from_graph(&g, f.meta.clone());
        let text = back.to_json();
        assert_eq!(InstanceFile::from_json(&text).unwrap().to_graph().unwrap(), g);
    }

    #[test]
    fn rejects_other_versions() {
        let mut f = t1();
        f.version = 7;
        assert!(matches!(f.to_graph(), Err(IoError::Version { found: 7, .. })));
    }

    #[test]
    fn scaling_rounds_demands() {
        let f = t1().scaled(1.25);
        assert_eq!(f.nodes[0].demand, Some(13));
        assert_eq!(f.meta.scale, 1.25);
    }
}
