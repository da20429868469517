use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Evacuation {
        demand: u64,
        /// First step at which departures are no longer allowed.
        deadline: Option<u32>,
    },
    Transit,
    Safe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn evacuation(id: usize, name: &str, demand: u64, deadline: Option<u32>) -> Self {
        Node { id: NodeId(id), name: name.to_string(), kind: NodeKind::Evacuation { demand, deadline } }
    }

    pub fn transit(id: usize, name: &str) -> Self {
        Node { id: NodeId(id), name: name.to_string(), kind: NodeKind::Transit }
    }

    pub fn safe(id: usize, name: &str) -> Self {
        Node { id: NodeId(id), name: name.to_string(), kind: NodeKind::Safe }
    }
}

/// A road segment. Travel time and block time are in steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticArc {
    pub id: ArcId,
    pub tail: NodeId,
    pub head: NodeId,
    pub travel: u32,
    /// Vehicles per step.
    pub capacity: u64,
    /// First step at which the arc can no longer be entered.
    pub block: Option<u32>,
}

impl StaticArc {
    pub fn new(id: usize, tail: usize, head: usize, travel: u32, capacity: u64) -> Self {
        StaticArc { id: ArcId(id), tail: NodeId(tail), head: NodeId(head), travel, capacity, block: None }
    }

    pub fn blocked_at(mut self, step: u32) -> Self {
        self.block = Some(step);
        self
    }

    /// Whether the arc may be entered at step `t`.
    pub fn open_at(&self, t: u32) -> bool {
        self.block.is_none_or(|f| t < f)
    }
}

/// Two opposite arcs whose lanes may be reversed into each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContraflowPair {
    pub forward: ArcId,
    pub backward: ArcId,
}

/// The static road network.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGraph {
    nodes: Vec<Node>,
    arcs: Vec<StaticArc>,
    pairs: Vec<ContraflowPair>,
    out_arcs: Vec<Vec<ArcId>>,
    in_arcs: Vec<Vec<ArcId>>,
    reverse: Vec<Option<ArcId>>,
    zones: Vec<NodeId>,
    zone_pos: Vec<Option<usize>>,
    safe: Vec<NodeId>,
}

impl StaticGraph {
    pub fn new(nodes: Vec<Node>, arcs: Vec<StaticArc>, pairs: Vec<ContraflowPair>) -> Result<Self, ModelError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(ModelError::NonDenseNode { expected: i, found: n.id.0 });
            }
        }
        let mut out_arcs = vec![Vec::new(); nodes.len()];
        let mut in_arcs = vec![Vec::new(); nodes.len()];
        for (i, a) in arcs.iter().enumerate() {
            if a.id.0 != i {
                return Err(ModelError::NonDenseArc { expected: i, found: a.id.0 });
            }
            for end in [a.tail, a.head] {
                if end.0 >= nodes.len() {
                    return Err(ModelError::UnknownNode { arc: a.id, node: end });
                }
            }
            if a.tail == a.head {
                return Err(ModelError::SelfLoop(a.id));
            }
            if a.travel == 0 {
                return Err(ModelError::ZeroTravel(a.id));
            }
            if matches!(nodes[a.head.0].kind, NodeKind::Evacuation { .. }) {
                return Err(ModelError::EvacuationInflow { node: a.head, arc: a.id });
            }
            if matches!(nodes[a.tail.0].kind, NodeKind::Safe) {
                return Err(ModelError::SafeOutflow { node: a.tail, arc: a.id });
            }
            out_arcs[a.tail.0].push(a.id);
            in_arcs[a.head.0].push(a.id);
        }
        let mut reverse = vec![None; arcs.len()];
        for p in &pairs {
            let (f, b) = (p.forward, p.backward);
            if f.0 >= arcs.len() || b.0 >= arcs.len() || f == b {
                return Err(ModelError::NotReversePair(f, b));
            }
            let (af, ab) = (&arcs[f.0], &arcs[b.0]);
            if af.tail != ab.head || af.head != ab.tail {
                return Err(ModelError::NotReversePair(f, b));
            }
            for a in [f, b] {
                if reverse[a.0].is_some() {
                    return Err(ModelError::DuplicatePairArc(a));
                }
            }
            reverse[f.0] = Some(b);
            reverse[b.0] = Some(f);
        }
        let zones: Vec<NodeId> = nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Evacuation { .. }))
            .map(|n| n.id)
            .collect();
        let safe: Vec<NodeId> = nodes.iter().filter(|n| n.kind == NodeKind::Safe).map(|n| n.id).collect();
        if zones.is_empty() {
            return Err(ModelError::NoZones);
        }
        if safe.is_empty() {
            return Err(ModelError::NoSafeNodes);
        }
        let mut zone_pos = vec![None; nodes.len()];
        for (p, z) in zones.iter().enumerate() {
            zone_pos[z.0] = Some(p);
        }
        let g = StaticGraph { nodes, arcs, pairs, out_arcs, in_arcs, reverse, zones, zone_pos, safe };
        let reach = g.reaches_safety();
        let cut: Vec<NodeId> = g.zones.iter().copied().filter(|z| !reach[z.0]).collect();
        if !cut.is_empty() {
            return Err(ModelError::Disconnected(cut));
        }
        Ok(g)
    }

    /// Nodes with a directed path to some safe node.
    fn reaches_safety(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<NodeId> = self.safe.iter().copied().collect();
        for s in &self.safe {
            seen[s.0] = true;
        }
        while let Some(v) = queue.pop_front() {
            for a in &self.in_arcs[v.0] {
                let u = self.arcs[a.0].tail;
                if !seen[u.0] {
                    seen[u.0] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[StaticArc] {
        &self.arcs
    }

    pub fn pairs(&self) -> &[ContraflowPair] {
        &self.pairs
    }

    pub fn node(&self, i: NodeId) -> &Node {
        &self.nodes[i.0]
    }

    pub fn arc(&self, e: ArcId) -> &StaticArc {
        &self.arcs[e.0]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn out_arcs(&self, i: NodeId) -> &[ArcId] {
        &self.out_arcs[i.0]
    }

    pub fn in_arcs(&self, i: NodeId) -> &[ArcId] {
        &self.in_arcs[i.0]
    }

    /// Evacuation nodes in id order.
    pub fn zones(&self) -> &[NodeId] {
        &self.zones
    }

    /// Position of `i` within [`Self::zones`].
    pub fn zone_index(&self, i: NodeId) -> Option<usize> {
        self.zone_pos[i.0]
    }

    pub fn safe_nodes(&self) -> &[NodeId] {
        &self.safe
    }

    pub fn is_safe(&self, i: NodeId) -> bool {
        self.nodes[i.0].kind == NodeKind::Safe
    }

    pub fn is_transit(&self, i: NodeId) -> bool {
        self.nodes[i.0].kind == NodeKind::Transit
    }

    pub fn is_zone(&self, i: NodeId) -> bool {
        self.zone_pos[i.0].is_some()
    }

    pub fn demand(&self, i: NodeId) -> u64 {
        match self.nodes[i.0].kind {
            NodeKind::Evacuation { demand, .. } => demand,
            _ => 0,
        }
    }

    pub fn deadline(&self, i: NodeId) -> Option<u32> {
        match self.nodes[i.0].kind {
            NodeKind::Evacuation { deadline, .. } => deadline,
            _ => None,
        }
    }

    pub fn total_demand(&self) -> u64 {
        self.zones.iter().map(|&z| self.demand(z)).sum()
    }

    /// The opposite arc when `e` belongs to a contraflow pair.
    pub fn reverse(&self, e: ArcId) -> Option<ArcId> {
        self.reverse[e.0]
    }

    pub fn is_contraflow(&self, e: ArcId) -> bool {
        self.reverse[e.0].is_some()
    }

    /// Whether a vehicle may enter arc `e` at step `t`, counting zone deadlines.
    pub fn can_enter(&self, e: ArcId, t: u32) -> bool {
        let a = &self.arcs[e.0];
        a.open_at(t) && self.deadline(a.tail).is_none_or(|f| t < f)
    }

    /// Copy of the graph with the contraflow pairs removed.
    pub fn without_pairs(&self) -> StaticGraph {
        let mut g = self.clone();
        g.pairs.clear();
        g.reverse = vec![None; g.arcs.len()];
        g
    }

    /// Copy of the graph with new arc capacities.
    pub fn with_capacities(&self, caps: &[u64]) -> StaticGraph {
        let mut g = self.clone();
        for (a, &c) in g.arcs.iter_mut().zip(caps) {
            a.capacity = c;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn chain() -> StaticGraph {
        StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, None), Node::transit(1, "T"), Node::safe(2, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5), StaticArc::new(1, 1, 2, 2, 4)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn adjacency_and_queries() {
        let g = chain();
        assert_eq!(g.zones(), &[NodeId(0)]);
        assert_eq!(g.safe_nodes(), &[NodeId(2)]);
        assert_eq!(g.out_arcs(NodeId(1)), &[ArcId(1)]);
        assert_eq!(g.in_arcs(NodeId(1)), &[ArcId(0)]);
        assert_eq!(g.total_demand(), 10);
        assert_eq!(g.zone_index(NodeId(0)), Some(0));
        assert!(g.is_transit(NodeId(1)));
    }

    #[test]
    fn rejects_flow_into_zone_and_out_of_safety() {
        let nodes = vec![Node::evacuation(0, "E", 1, None), Node::safe(1, "S")];
        let e = StaticGraph::new(nodes.clone(), vec![StaticArc::new(0, 1, 0, 1, 1)], vec![]).unwrap_err();
        assert!(matches!(e, ModelError::EvacuationInflow { .. }));
    }

    #[test]
    fn rejects_disconnected_zone() {
        let nodes = vec![Node::evacuation(0, "E", 1, None), Node::evacuation(1, "F", 1, None), Node::safe(2, "S")];
        let e = StaticGraph::new(nodes, vec![StaticArc::new(0, 0, 2, 1, 1)], vec![]).unwrap_err();
        assert_eq!(e, ModelError::Disconnected(vec![NodeId(1)]));
    }

    #[test]
    fn pairs_must_be_opposite() {
        let nodes = vec![Node::evacuation(0, "E", 1, None), Node::transit(1, "A"), Node::transit(2, "B"), Node::safe(3, "S")];
        let arcs = vec![
            StaticArc::new(0, 0, 1, 1, 1),
            StaticArc::new(1, 1, 2, 1, 1),
            StaticArc::new(2, 2, 1, 1, 1),
            StaticArc::new(3, 2, 3, 1, 1),
            StaticArc::new(4, 1, 3, 1, 1),
        ];
        let ok = StaticGraph::new(nodes.clone(), arcs.clone(), vec![ContraflowPair { forward: ArcId(1), backward: ArcId(2) }]).unwrap();
        assert_eq!(ok.reverse(ArcId(2)), Some(ArcId(1)));
        let bad = StaticGraph::new(nodes, arcs, vec![ContraflowPair { forward: ArcId(1), backward: ArcId(3) }]);
        assert!(matches!(bad, Err(ModelError::NotReversePair(..))));
    }

    #[test]
    fn deadlines_close_zone_exits() {
        let g = StaticGraph::new(
            vec![Node::evacuation(0, "E", 4, Some(2)), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5).blocked_at(3)],
            vec![],
        )
        .unwrap();
        assert!(g.can_enter(ArcId(0), 1));
        assert!(!g.can_enter(ArcId(0), 2));
        assert!(!g.arc(ArcId(0)).open_at(3));
    }
}
