use std::collections::VecDeque;

use crate::error::ModelError;
use crate::network::{ArcId, NodeId, StaticGraph};

/// Capacity of an arc copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capacity {
    Finite(u64),
    Unbounded,
}

impl Capacity {
    pub fn as_f64(self) -> f64 {
        match self {
            Capacity::Finite(u) => u as f64,
            Capacity::Unbounded => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyKind {
    Movement(ArcId),
    Waiting(NodeId),
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCopy {
    pub kind: CopyKind,
    pub tail: usize,
    pub head: usize,
    /// Step at which the copy is entered.
    pub time: u32,
    pub capacity: Capacity,
}

/// Time-expanded copy of a static graph over steps `0..horizon`.
///
/// Node copy `(i, t)` has index `i * horizon + t`; the super sink, when
/// present, comes after all node copies.
#[derive(Debug, Clone)]
pub struct TimeExpandedGraph {
    graph: StaticGraph,
    horizon: u32,
    alive: Vec<bool>,
    copies: Vec<ArcCopy>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    copy_of: Vec<Vec<Option<usize>>>,
    super_sink: Option<usize>,
    pruned: usize,
}

/// Builds the pruned time-expanded graph, failing when some zone has no usable exit.
pub fn build_time_expanded(graph: &StaticGraph, horizon: u32) -> Result<TimeExpandedGraph, ModelError> {
    let teg = TimeExpandedGraph::new(graph, horizon)?;
    let bad = teg.infeasible_zones();
    if !bad.is_empty() {
        return Err(ModelError::InfeasibleZones(bad));
    }
    Ok(teg)
}

impl TimeExpandedGraph {
    /// Pruned expansion. Zones without usable exits are kept silently.
    pub fn new(graph: &StaticGraph, horizon: u32) -> Result<Self, ModelError> {
        Self::build(graph, horizon, true)
    }

    pub fn build(graph: &StaticGraph, horizon: u32, prune: bool) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        let h = horizon as usize;
        let n = graph.num_nodes() * h;
        let mut cand: Vec<ArcCopy> = Vec::new();
        for a in graph.arcs() {
            for t in 0..horizon {
                if in_horizon(graph, horizon, a.id, t) {
                    cand.push(ArcCopy {
                        kind: CopyKind::Movement(a.id),
                        tail: a.tail.0 * h + t as usize,
                        head: a.head.0 * h + (t + a.travel) as usize,
                        time: t,
                        capacity: Capacity::Finite(a.capacity),
                    });
                }
            }
        }
        for node in graph.nodes() {
            if graph.is_transit(node.id) {
                continue;
            }
            for t in 0..horizon - 1 {
                let v = node.id.0 * h + t as usize;
                cand.push(ArcCopy {
                    kind: CopyKind::Waiting(node.id),
                    tail: v,
                    head: v + 1,
                    time: t,
                    capacity: Capacity::Unbounded,
                });
            }
        }

        let mut alive = vec![true; n];
        if prune {
            let mut out = vec![Vec::new(); n];
            let mut inc = vec![Vec::new(); n];
            for (c, a) in cand.iter().enumerate() {
                out[a.tail].push(c);
                inc[a.head].push(c);
            }
            let fwd = sweep(&cand, &out, graph.zones().iter().map(|z| z.0 * h), |a| a.head);
            let bwd = sweep(
                &cand,
                &inc,
                graph.safe_nodes().iter().flat_map(|s| (0..h).map(move |t| s.0 * h + t)),
                |a| a.tail,
            );
            for v in 0..n {
                let safe = graph.is_safe(NodeId(v / h));
                alive[v] = safe || (fwd[v] && bwd[v]);
            }
        }
        let pruned = alive.iter().filter(|&&b| !b).count();

        let mut teg = TimeExpandedGraph {
            graph: graph.clone(),
            horizon,
            alive,
            copies: Vec::new(),
            out: vec![Vec::new(); n],
            inc: vec![Vec::new(); n],
            copy_of: vec![vec![None; h]; graph.num_arcs()],
            super_sink: None,
            pruned,
        };
        for a in cand {
            if teg.alive[a.tail] && teg.alive[a.head] {
                teg.push(a);
            }
        }
        Ok(teg)
    }

    fn push(&mut self, a: ArcCopy) -> usize {
        let c = self.copies.len();
        if let CopyKind::Movement(e) = a.kind {
            self.copy_of[e.0][a.time as usize] = Some(c);
        }
        self.out[a.tail].push(c);
        self.inc[a.head].push(c);
        self.copies.push(a);
        c
    }

    /// Adds a super sink with one arc from every safe node copy.
    pub fn add_super_sink(&mut self) -> Result<usize, ModelError> {
        if self.super_sink.is_some() {
            return Err(ModelError::SuperSinkExists);
        }
        let v = self.alive.len();
        self.alive.push(true);
        self.out.push(Vec::new());
        self.inc.push(Vec::new());
        self.super_sink = Some(v);
        let h = self.horizon as usize;
        let safe: Vec<NodeId> = self.graph.safe_nodes().to_vec();
        for s in safe {
            for t in 0..h {
                self.push(ArcCopy {
                    kind: CopyKind::Sink,
                    tail: s.0 * h + t,
                    head: v,
                    time: t as u32,
                    capacity: Capacity::Unbounded,
                });
            }
        }
        Ok(v)
    }

    pub fn graph(&self) -> &StaticGraph {
        &self.graph
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn super_sink(&self) -> Option<usize> {
        self.super_sink
    }

    pub fn num_node_copies(&self) -> usize {
        self.alive.len()
    }

    /// Number of node copies removed by pruning.
    pub fn pruned_nodes(&self) -> usize {
        self.pruned
    }

    pub fn node_index(&self, i: NodeId, t: u32) -> usize {
        i.0 * self.horizon as usize + t as usize
    }

    /// Static node and step of a node copy, or `None` for the super sink.
    pub fn node_at(&self, v: usize) -> Option<(NodeId, u32)> {
        if Some(v) == self.super_sink {
            return None;
        }
        let h = self.horizon as usize;
        Some((NodeId(v / h), (v % h) as u32))
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive[v]
    }

    pub fn copies(&self) -> &[ArcCopy] {
        &self.copies
    }

    pub fn copy(&self, c: usize) -> &ArcCopy {
        &self.copies[c]
    }

    pub fn out(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn inc(&self, v: usize) -> &[usize] {
        &self.inc[v]
    }

    /// Retained movement copy of arc `e` entered at step `t`.
    pub fn copy_at(&self, e: ArcId, t: u32) -> Option<usize> {
        self.copy_of[e.0].get(t as usize).copied().flatten()
    }

    /// Retained movement copies of `e` as `(step, copy)`.
    pub fn movement_copies(&self, e: ArcId) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.copy_of[e.0].iter().enumerate().filter_map(|(t, c)| c.map(|c| (t as u32, c)))
    }

    pub fn movement_count(&self) -> usize {
        self.copies.iter().filter(|a| matches!(a.kind, CopyKind::Movement(_))).count()
    }

    pub fn waiting_count(&self) -> usize {
        self.copies.iter().filter(|a| matches!(a.kind, CopyKind::Waiting(_))).count()
    }

    pub fn sink_count(&self) -> usize {
        self.copies.iter().filter(|a| a.kind == CopyKind::Sink).count()
    }

    /// Whether a movement copy of `e` at step `t` lies inside the horizon and is enterable.
    pub fn in_horizon(&self, e: ArcId, t: u32) -> bool {
        in_horizon(&self.graph, self.horizon, e, t)
    }

    /// Capacity the opposite lane can lend to `e` at step `t`.
    pub fn reverse_capacity(&self, e: ArcId, t: u32) -> u64 {
        match self.graph.reverse(e) {
            Some(r) if self.graph.arc(r).open_at(t) => self.graph.arc(r).capacity,
            _ => 0,
        }
    }

    /// Zones whose step-0 copy has no retained outgoing movement path.
    pub fn infeasible_zones(&self) -> Vec<NodeId> {
        self.graph
            .zones()
            .iter()
            .copied()
            .filter(|&z| {
                let v = self.node_index(z, 0);
                !self.alive[v] || self.graph.out_arcs(z).iter().all(|&e| self.movement_copies(e).next().is_none())
            })
            .collect()
    }

    /// Whether a movement copy enters a safe node.
    pub fn enters_safety(&self, c: usize) -> bool {
        match self.copies[c].kind {
            CopyKind::Movement(e) => self.graph.is_safe(self.graph.arc(e).head),
            _ => false,
        }
    }
}

pub(crate) fn in_horizon(graph: &StaticGraph, horizon: u32, e: ArcId, t: u32) -> bool {
    let a = graph.arc(e);
    t + a.travel < horizon && graph.can_enter(e, t)
}

fn sweep(
    copies: &[ArcCopy],
    adj: &[Vec<usize>],
    roots: impl Iterator<Item = usize>,
    next: impl Fn(&ArcCopy) -> usize,
) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    for r in roots {
        if !seen[r] {
            seen[r] = true;
            queue.push_back(r);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &c in &adj[v] {
            let w = next(&copies[c]);
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ContraflowPair, Node, StaticArc};

    fn t1() -> StaticGraph {
        StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, None), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn single_arc_copies_and_super_sink() {
        let mut teg = build_time_expanded(&t1(), 4).unwrap();
        assert_eq!(teg.movement_count(), 3);
        let v = teg.add_super_sink().unwrap();
        assert_eq!(teg.sink_count(), 4);
        assert_eq!(teg.inc(v).len(), 4);
        assert_eq!(teg.add_super_sink(), Err(ModelError::SuperSinkExists));
    }

    #[test]
    fn copy_endpoints_follow_travel_time() {
        let teg = build_time_expanded(&t1(), 4).unwrap();
        for (t, c) in teg.movement_copies(ArcId(0)) {
            let a = teg.copy(c);
            assert_eq!(teg.node_at(a.tail), Some((NodeId(0), t)));
            assert_eq!(teg.node_at(a.head), Some((NodeId(1), t + 1)));
        }
    }

    #[test]
    fn deadline_and_block_limit_copies() {
        let g = StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, Some(2)), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5)],
            vec![],
        )
        .unwrap();
        let teg = build_time_expanded(&g, 6).unwrap();
        assert_eq!(teg.movement_copies(ArcId(0)).map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
        let g = StaticGraph::new(
            vec![Node::evacuation(0, "E", 10, None), Node::safe(1, "S")],
            vec![StaticArc::new(0, 0, 1, 1, 5).blocked_at(0)],
            vec![],
        )
        .unwrap();
        assert_eq!(build_time_expanded(&g, 6).unwrap_err(), ModelError::InfeasibleZones(vec![NodeId(0)]));
    }

    #[test]
    fn empty_horizon_is_rejected() {
        assert_eq!(TimeExpandedGraph::new(&t1(), 0).unwrap_err(), ModelError::EmptyHorizon);
        let teg = TimeExpandedGraph::new(&t1(), 1).unwrap();
        assert_eq!(teg.infeasible_zones(), vec![NodeId(0)]);
    }

    #[test]
    fn reverse_capacity_respects_block() {
        let g = StaticGraph::new(
            vec![Node::evacuation(0, "E", 1, None), Node::transit(1, "A"), Node::transit(2, "B"), Node::safe(3, "S")],
            vec![
                StaticArc::new(0, 0, 1, 1, 3),
                StaticArc::new(1, 1, 2, 1, 3),
                StaticArc::new(2, 2, 1, 1, 7).blocked_at(2),
                StaticArc::new(3, 2, 3, 1, 3),
            ],
            vec![ContraflowPair { forward: ArcId(1), backward: ArcId(2) }],
        )
        .unwrap();
        let teg = TimeExpandedGraph::new(&g, 6).unwrap();
        assert_eq!(teg.reverse_capacity(ArcId(1), 1), 7);
        assert_eq!(teg.reverse_capacity(ArcId(1), 2), 0);
        assert_eq!(teg.reverse_capacity(ArcId(0), 1), 0);
    }
}
