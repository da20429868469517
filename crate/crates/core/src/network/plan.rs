use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::network::{ArcId, NodeId, StaticGraph, TimeExpandedGraph};

/// Departure profile of a zone once its evacuation starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseCurve {
    /// Constant rate of vehicles per step until demand is exhausted.
    Step { rate: u64 },
}

impl ResponseCurve {
    pub fn step(rate: u64) -> Result<Self, ModelError> {
        if rate == 0 {
            return Err(ModelError::ZeroRate);
        }
        Ok(ResponseCurve::Step { rate })
    }

    pub fn rate(&self) -> u64 {
        match *self {
            ResponseCurve::Step { rate } => rate,
        }
    }

    /// Vehicles leaving `tau` steps after the start.
    pub fn departures(&self, demand: u64, tau: u32) -> u64 {
        let r = self.rate();
        demand.saturating_sub(r * tau as u64).min(r)
    }

    /// Vehicles that left during the first `steps` steps.
    pub fn cumulative(&self, demand: u64, steps: i64) -> u64 {
        if steps <= 0 {
            return 0;
        }
        demand.min(self.rate().saturating_mul(steps as u64))
    }

    /// Number of steps with departures.
    pub fn duration(&self, demand: u64) -> u32 {
        demand.div_ceil(self.rate()) as u32
    }
}

/// A path from a zone to a safe node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvacPath {
    pub zone: NodeId,
    pub arcs: Vec<ArcId>,
}

impl EvacPath {
    pub fn new(graph: &StaticGraph, zone: NodeId, arcs: Vec<ArcId>) -> Result<Self, ModelError> {
        let p = EvacPath { zone, arcs };
        p.check(graph)?;
        Ok(p)
    }

    pub fn check(&self, graph: &StaticGraph) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidPath { zone: self.zone, reason: reason.to_string() };
        if !graph.is_zone(self.zone) {
            return Err(bad("origin is not an evacuation node"));
        }
        let mut at = self.zone;
        for &e in &self.arcs {
            if e.0 >= graph.num_arcs() {
                return Err(bad("unknown arc"));
            }
            let a = graph.arc(e);
            if a.tail != at {
                return Err(bad("arcs are not contiguous"));
            }
            at = a.head;
        }
        if !graph.is_safe(at) {
            return Err(bad("does not end at a safe node"));
        }
        Ok(())
    }

    /// Steps from departure until each arc is entered.
    pub fn offsets(&self, graph: &StaticGraph) -> Vec<u32> {
        let mut t = 0;
        self.arcs
            .iter()
            .map(|&e| {
                let o = t;
                t += graph.arc(e).travel;
                o
            })
            .collect()
    }

    pub fn travel(&self, graph: &StaticGraph) -> u32 {
        self.arcs.iter().map(|&e| graph.arc(e).travel).sum()
    }

    /// Bottleneck capacity.
    pub fn capacity(&self, graph: &StaticGraph) -> u64 {
        self.arcs.iter().map(|&e| graph.arc(e).capacity).min().unwrap_or(0)
    }

    pub fn nodes(&self, graph: &StaticGraph) -> Vec<NodeId> {
        let mut v = vec![self.zone];
        v.extend(self.arcs.iter().map(|&e| graph.arc(e).head));
        v
    }

    pub fn is_elementary(&self, graph: &StaticGraph) -> bool {
        let mut nodes = self.nodes(graph);
        let n = nodes.len();
        nodes.sort();
        nodes.dedup();
        nodes.len() == n
    }

    pub fn safe_node(&self, graph: &StaticGraph) -> NodeId {
        *self.nodes(graph).last().unwrap()
    }

    /// Departure steps for which the whole path fits inside the horizon.
    pub fn usable_departures(&self, teg: &TimeExpandedGraph) -> Vec<u32> {
        let g = teg.graph();
        let off = self.offsets(g);
        (0..teg.horizon())
            .filter(|&t| self.arcs.iter().zip(&off).all(|(&e, &o)| teg.in_horizon(e, t + o)))
            .collect()
    }
}

/// A zone evacuating along one path with a response curve from a start step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeResponsePlan {
    pub zone: NodeId,
    pub path: EvacPath,
    pub curve: ResponseCurve,
    pub start: u32,
}

/// Arc-copy flows produced by replaying a time-response plan.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InducedFlows {
    pub flows: BTreeMap<(ArcId, u32), u64>,
    pub arrived: u64,
    pub shortfall: u64,
    pub last_arrival: Option<u32>,
}

/// Replays a plan cohort by cohort. Cohorts that cannot finish inside the
/// horizon still occupy the arc copies they reach in time.
pub fn induced_flows(plan: &TimeResponsePlan, teg: &TimeExpandedGraph) -> Result<InducedFlows, ModelError> {
    let g = teg.graph();
    plan.path.check(g)?;
    let usable = plan.path.usable_departures(teg);
    if !usable.contains(&plan.start) {
        return Err(ModelError::UnusableStart {
            start: plan.start,
            usable: usable.first().map(|&a| (a, *usable.last().unwrap())),
        });
    }
    let h = teg.horizon();
    let d = g.demand(plan.zone);
    let off = plan.path.offsets(g);
    let mut out = InducedFlows::default();
    for tau in 0..plan.curve.duration(d) {
        let q = plan.curve.departures(d, tau);
        let dep = plan.start + tau;
        let mut finished = true;
        for (&e, &o) in plan.path.arcs.iter().zip(&off) {
            let t = dep + o;
            if t + g.arc(e).travel >= h {
                finished = false;
                break;
            }
            if !g.can_enter(e, t) {
                return Err(ModelError::BlockedCohort { arc: e, time: t });
            }
            *out.flows.entry((e, t)).or_default() += q;
        }
        if finished {
            out.arrived += q;
            let arr = dep + plan.path.travel(g);
            out.last_arrival = Some(out.last_arrival.map_or(arr, |a| a.max(arr)));
        }
    }
    out.shortfall = d - out.arrived;
    Ok(out)
}

/// Flow of one zone on one arc copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneFlow {
    pub zone: NodeId,
    pub arc: ArcId,
    pub time: u32,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneResponse {
    pub zone: NodeId,
    pub curve: ResponseCurve,
    pub start: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    Preemptive { flows: Vec<ZoneFlow> },
    NonPreemptive { responses: Vec<ZoneResponse> },
}

/// Paths, lane orientation and schedule for every zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacuationPlan {
    pub horizon: u32,
    pub paths: Vec<EvacPath>,
    /// Arcs whose lanes are handed to the opposite direction.
    #[serde(default)]
    pub reversed: Vec<ArcId>,
    pub schedule: Schedule,
}

impl EvacuationPlan {
    pub fn path_of(&self, zone: NodeId) -> Option<&EvacPath> {
        self.paths.iter().find(|p| p.zone == zone)
    }

    pub fn is_reversed(&self, e: ArcId) -> bool {
        self.reversed.contains(&e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Convergence {
    pub convergent: bool,
    /// A node left by two different arcs.
    pub witness: Option<NodeId>,
}

/// Checks that each node is left by at most one arc over all paths.
pub fn is_convergent(graph: &StaticGraph, paths: &[EvacPath]) -> Convergence {
    let mut next: HashMap<NodeId, ArcId> = HashMap::new();
    let mut witness = None;
    for p in paths {
        for &e in &p.arcs {
            let tail = graph.arc(e).tail;
            match next.get(&tail) {
                Some(&f) if f != e => {
                    witness = Some(witness.map_or(tail, |w: NodeId| w.min(tail)));
                }
                _ => {
                    next.insert(tail, e);
                }
            }
        }
    }
    Convergence { convergent: witness.is_none(), witness }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_time_expanded, Node, StaticArc};

    fn t1() -> StaticGraph {
        StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, None), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn curve_profile() {
        let c = ResponseCurve::step(4).unwrap();
        let d = 10;
        assert_eq!((0..4).map(|t| c.departures(d, t)).collect::<Vec<_>>(), vec![4, 4, 2, 0]);
        assert_eq!(c.cumulative(d, 2), 8);
        assert_eq!(c.cumulative(d, 9), 10);
        assert_eq!(c.cumulative(d, -1), 0);
        assert_eq!(c.duration(d), 3);
        assert!(ResponseCurve::step(0).is_err());
    }

    #[test]
    fn late_start_strands_second_cohort() {
        let g = t1();
        let teg = build_time_expanded(&g, 4).unwrap();
        let path = EvacPath::new(&g, NodeId(0), vec![ArcId(0)]).unwrap();
        assert_eq!(path.usable_departures(&teg), vec![0, 1, 2]);
        let plan = TimeResponsePlan { zone: NodeId(0), path, curve: ResponseCurve::step(5).unwrap(), start: 2 };
        let f = induced_flows(&plan, &teg).unwrap();
        assert_eq!(f.arrived, 5);
        assert_eq!(f.shortfall, 5);
        assert_eq!(f.flows.get(&(ArcId(0), 2)), Some(&5));
        assert_eq!(f.last_arrival, Some(3));
    }

    #[test]
    fn unusable_start_is_rejected() {
        let g = t1();
        let teg = build_time_expanded(&g, 4).unwrap();
        let path = EvacPath::new(&g, NodeId(0), vec![ArcId(0)]).unwrap();
        let plan = TimeResponsePlan { zone: NodeId(0), path, curve: ResponseCurve::step(5).unwrap(), start: 3 };
        assert!(matches!(induced_flows(&plan, &teg), Err(ModelError::UnusableStart { .. })));
    }

    #[test]
    fn blocked_cohort_is_rejected() {
        let g = StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, None), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5).blocked_at(1)],
            vec![],
        )
        .unwrap();
        let teg = build_time_expanded(&g, 4).unwrap();
        let path = EvacPath::new(&g, NodeId(0), vec![ArcId(0)]).unwrap();
        let plan = TimeResponsePlan { zone: NodeId(0), path, curve: ResponseCurve::step(5).unwrap(), start: 0 };
        assert_eq!(induced_flows(&plan, &teg), Err(ModelError::BlockedCohort { arc: ArcId(0), time: 1 }));
    }

    #[test]
    fn convergence_witness() {
        let g = StaticGraph::new(
            vec![
                Node::evacuation(0, "A", 1, None),
                Node::evacuation(1, "B", 1, None),
                Node::transit(2, "T"),
                Node::safe(3, "S1"),
                Node::safe(4, "S2"),
            ],
            vec![
                StaticArc::new(0, 0, 2, 1, 1),
                StaticArc::new(1, 1, 2, 1, 1),
                StaticArc::new(2, 2, 3, 1, 1),
                StaticArc::new(3, 2, 4, 1, 1),
            ],
            vec![],
        )
        .unwrap();
        let p = EvacPath::new(&g, NodeId(0), vec![ArcId(0), ArcId(2)]).unwrap();
        let q = EvacPath::new(&g, NodeId(1), vec![ArcId(1), ArcId(3)]).unwrap();
        let c = is_convergent(&g, &[p.clone(), q]);
        assert_eq!(c, Convergence { convergent: false, witness: Some(NodeId(2)) });
        let r = EvacPath::new(&g, NodeId(1), vec![ArcId(1), ArcId(2)]).unwrap();
        assert!(is_convergent(&g, &[p, r]).convergent);
    }
}
