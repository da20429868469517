//! Least-cost time-response plans on the time-expanded graph.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use crate::error::SolveError;
use crate::mp::{solve_mip, Cmp, Model, Sense, SolveOptions, SolveStatus};
use crate::network::{
    ArcId, CopyKind, EvacPath, NodeId, ResponseCurve, TimeExpandedGraph, TimeResponsePlan,
};

use super::{CgCosts, Duals};

/// Which search produced an elementary plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The plain least-cost search (may revisit nodes).
    Shortest,
    /// k-shortest enumeration.
    Enumeration { k: usize },
    /// The resource-constrained MIP.
    Mip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Priced {
    pub plan: TimeResponsePlan,
    /// Path cost in the pricing graph.
    pub cost: f64,
    pub reduced: f64,
    pub branch: Branch,
}

#[derive(Clone, Copy)]
enum Edge {
    Move(ArcId, u32),
    Wait,
    Sink,
}

/// Acyclic pricing graph for one zone and curve. Node 0 is the zone at step
/// 0; the last node is the sink.
pub(crate) struct PricingGraph {
    /// Static node of each pricing node (`None` for the sink).
    nodes: Vec<Option<NodeId>>,
    edges: Vec<(usize, usize, f64, Edge)>,
    inc: Vec<Vec<usize>>,
}

/// Aggregated cost of sending the whole curve through `e`, first cohort entering at `t`.
fn movement_cost(teg: &TimeExpandedGraph, costs: &CgCosts, duals: &Duals, zone: NodeId, curve: ResponseCurve, e: ArcId, t: u32) -> Option<f64> {
    let g = teg.graph();
    let h = teg.horizon();
    let d = g.demand(zone);
    let s = g.arc(e).travel;
    let mut sum = 0.0;
    for tau in 0..curve.duration(d) {
        let tt = t + tau;
        if tt + s >= h {
            break;
        }
        if !g.can_enter(e, tt) {
            return None;
        }
        sum += curve.departures(d, tau) as f64 * (costs.arc(g, e, tt) - duals.cap(e, tt));
    }
    Some(sum)
}

impl PricingGraph {
    pub(crate) fn build(teg: &TimeExpandedGraph, costs: &CgCosts, duals: &Duals, zone: NodeId, curve: ResponseCurve) -> Self {
        let g = teg.graph();
        let h = teg.horizon();
        let d = g.demand(zone);
        let src = teg.node_index(zone, 0);
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut copies: Vec<usize> = Vec::new();
        let mut seen = vec![false; teg.num_node_copies()];
        let mut stack = vec![src];
        seen[src] = teg.is_alive(src);
        if !seen[src] {
            stack.clear();
        }
        let mut raw: Vec<(usize, usize, f64, Edge)> = Vec::new();
        while let Some(v) = stack.pop() {
            copies.push(v);
            let (node, _) = teg.node_at(v).unwrap();
            if g.is_safe(node) {
                continue;
            }
            for &c in teg.out(v) {
                let a = teg.copy(c);
                let (cost, edge) = match a.kind {
                    CopyKind::Movement(e) => match movement_cost(teg, costs, duals, zone, curve, e, a.time) {
                        Some(x) => (x, Edge::Move(e, a.time)),
                        None => continue,
                    },
                    CopyKind::Waiting(n) if n == zone => (0.0, Edge::Wait),
                    _ => continue,
                };
                raw.push((v, a.head, cost, edge));
                if !seen[a.head] {
                    seen[a.head] = true;
                    stack.push(a.head);
                }
            }
        }
        // steps strictly increase along every edge
        copies.sort_by_key(|&v| (v % h as usize, v));
        let mut nodes = Vec::with_capacity(copies.len() + 1);
        for &v in &copies {
            local.insert(v, nodes.len());
            nodes.push(Some(teg.node_at(v).unwrap().0));
        }
        let sink = nodes.len();
        nodes.push(None);
        let mut edges: Vec<(usize, usize, f64, Edge)> =
            raw.into_iter().map(|(a, b, c, e)| (local[&a], local[&b], c, e)).collect();
        for &v in &copies {
            let (node, t) = teg.node_at(v).unwrap();
            if g.is_safe(node) {
                let short = d - curve.cumulative(d, h as i64 - t as i64);
                edges.push((local[&v], sink, costs.cbar * short as f64, Edge::Sink));
            }
        }
        let mut inc = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            inc[e.1].push(i);
        }
        PricingGraph { nodes, edges, inc }
    }

    fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Least cost to every node with the edge that achieves it.
    fn shortest(&self) -> Vec<Option<(f64, usize)>> {
        let mut best: Vec<Option<(f64, usize)>> = vec![None; self.nodes.len()];
        for v in 1..self.nodes.len() {
            for &i in &self.inc[v] {
                let (a, _, c, _) = self.edges[i];
                let base = if a == 0 { Some(0.0) } else { best[a].map(|b| b.0) };
                if let Some(b) = base {
                    let cand = b + c;
                    if best[v].is_none_or(|(old, _)| cand < old) {
                        best[v] = Some((cand, i));
                    }
                }
            }
        }
        best
    }

    /// Decodes an edge sequence from source to sink into a plan.
    fn decode(&self, zone: NodeId, curve: ResponseCurve, edges: &[usize]) -> TimeResponsePlan {
        let mut arcs = Vec::new();
        let mut start = None;
        for &i in edges {
            if let Edge::Move(e, t) = self.edges[i].3 {
                start.get_or_insert(t);
                arcs.push(e);
            }
        }
        TimeResponsePlan { zone, path: EvacPath { zone, arcs }, curve, start: start.expect("path leaves the zone") }
    }

    /// Whether the static projection visits each node once.
    fn elementary(&self, edges: &[usize]) -> bool {
        let mut seen = Vec::new();
        for &i in edges {
            if let Edge::Move(..) = self.edges[i].3 {
                let n = self.nodes[self.edges[i].1].unwrap();
                if seen.contains(&n) {
                    return false;
                }
                seen.push(n);
            }
        }
        true
    }

    fn cost(&self, edges: &[usize]) -> f64 {
        edges.iter().map(|&i| self.edges[i].2).sum()
    }
}

#[derive(PartialEq)]
struct Cand(f64, usize, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1)).then(self.2.cmp(&o.2))
    }
}

/// Recursive enumeration of source-sink paths in nondecreasing cost.
struct Rea<'a> {
    g: &'a PricingGraph,
    /// k-th best path to each node as (cost, last edge, rank of its prefix).
    paths: Vec<Vec<(f64, usize, usize)>>,
    cand: Vec<BinaryHeap<Reverse<Cand>>>,
    started: Vec<bool>,
}

impl<'a> Rea<'a> {
    fn new(g: &'a PricingGraph) -> Self {
        let best = g.shortest();
        let paths = best.iter().map(|b| b.map(|(c, e)| vec![(c, e, 0)]).unwrap_or_default()).collect();
        let n = g.nodes.len();
        Rea { g, paths, cand: (0..n).map(|_| BinaryHeap::new()).collect(), started: vec![false; n] }
    }

    fn prefix_cost(&self, u: usize, r: usize) -> f64 {
        if u == 0 {
            0.0
        } else {
            self.paths[u][r].0
        }
    }

    /// Makes sure the `k`-th (0-based) path to `v` is known.
    fn ensure(&mut self, v: usize, k: usize) -> bool {
        if v == 0 {
            return k == 0;
        }
        while self.paths[v].len() <= k {
            if self.paths[v].is_empty() {
                return false;
            }
            if !self.started[v] {
                self.started[v] = true;
                let first = self.paths[v][0].1;
                for &i in &self.g.inc[v] {
                    let u = self.g.edges[i].0;
                    if i != first && (u == 0 || !self.paths[u].is_empty()) {
                        let c = self.prefix_cost(u, 0) + self.g.edges[i].2;
                        self.cand[v].push(Reverse(Cand(c, i, 0)));
                    }
                }
            }
            let (_, e, r) = *self.paths[v].last().unwrap();
            let u = self.g.edges[e].0;
            if self.ensure(u, r + 1) {
                let c = self.prefix_cost(u, r + 1) + self.g.edges[e].2;
                self.cand[v].push(Reverse(Cand(c, e, r + 1)));
            }
            match self.cand[v].pop() {
                Some(Reverse(Cand(c, e, r))) => self.paths[v].push((c, e, r)),
                None => return false,
            }
        }
        true
    }

    fn edges_of(&self, v: usize, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let (mut v, mut k) = (v, k);
        while v != 0 {
            let (_, e, r) = self.paths[v][k];
            out.push(e);
            v = self.g.edges[e].0;
            k = r;
        }
        out.reverse();
        out
    }
}

/// Least reduced-cost plan for `zone` under `curve`, possibly revisiting nodes.
pub fn cg_price(teg: &TimeExpandedGraph, costs: &CgCosts, duals: &Duals, zone: NodeId, curve: ResponseCurve) -> Option<Priced> {
    let pg = PricingGraph::build(teg, costs, duals, zone, curve);
    let best = pg.shortest();
    let sink = pg.sink();
    let (cost, _) = best[sink]?;
    let mut edges = Vec::new();
    let mut v = sink;
    while v != 0 {
        let (_, e) = best[v].unwrap();
        edges.push(e);
        v = pg.edges[e].0;
    }
    edges.reverse();
    let plan = pg.decode(zone, curve, &edges);
    Some(Priced { plan, cost, reduced: cost - duals.zone(teg.graph(), zone), branch: Branch::Shortest })
}

/// k-shortest enumeration up to `k_threshold` paths; `None` in the inner
/// option when the threshold was hit without an elementary path.
pub(crate) fn price_by_enumeration(pg: &PricingGraph, k_threshold: usize) -> Option<Option<(Vec<usize>, usize)>> {
    let mut rea = Rea::new(pg);
    let sink = pg.sink();
    for k in 0..k_threshold {
        if !rea.ensure(sink, k) {
            return None;
        }
        let edges = rea.edges_of(sink, k);
        if pg.elementary(&edges) {
            return Some(Some((edges, k + 1)));
        }
    }
    Some(None)
}

/// Resource-constrained path model: each static node is entered at most once.
pub(crate) fn price_by_mip(pg: &PricingGraph, opts: &SolveOptions) -> Result<Option<Vec<usize>>, SolveError> {
    if pg.inc[pg.sink()].is_empty() {
        return Ok(None);
    }
    let mut m = Model::new(Sense::Minimize);
    let z: Vec<_> = pg.edges.iter().enumerate().map(|(i, e)| m.binary(format!("z_{i}"), e.2)).collect();
    let n = pg.nodes.len();
    let mut balance: Vec<Vec<_>> = vec![Vec::new(); n];
    let mut visits: HashMap<NodeId, Vec<_>> = HashMap::new();
    for (i, &(a, b, _, kind)) in pg.edges.iter().enumerate() {
        balance[a].push((z[i], 1.0));
        balance[b].push((z[i], -1.0));
        if let Edge::Move(..) = kind {
            visits.entry(pg.nodes[b].unwrap()).or_default().push((z[i], 1.0));
        }
    }
    for (v, terms) in balance.into_iter().enumerate() {
        let rhs = if v == 0 {
            1.0
        } else if v == n - 1 {
            -1.0
        } else {
            0.0
        };
        m.add_con(format!("flow_{v}"), terms, Cmp::Eq, rhs);
    }
    let mut visits: Vec<_> = visits.into_iter().collect();
    visits.sort_by_key(|(k, _)| *k);
    for (node, terms) in visits {
        m.add_con(format!("visit_{}", node.0), terms, Cmp::Le, 1.0);
    }
    let sol = solve_mip(&m, opts)?;
    match sol.status {
        SolveStatus::Infeasible => return Ok(None),
        SolveStatus::Optimal => {}
        s => return Err(SolveError::Status { what: "elementary pricing".into(), status: format!("{s:?}") }),
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for (i, &(a, ..)) in pg.edges.iter().enumerate() {
        if sol.value(z[i]) > 0.5 {
            next.insert(a, i);
        }
    }
    let mut edges = Vec::new();
    let mut v = 0;
    while v != n - 1 {
        let Some(&i) = next.get(&v) else {
            return Err(SolveError::Invalid("elementary pricing returned a broken path".into()));
        };
        edges.push(i);
        v = pg.edges[i].1;
    }
    Ok(Some(edges))
}

/// Least reduced-cost plan whose path visits each node at most once.
///
/// Enumerates paths in cost order and switches to the MIP after
/// `k_threshold` non-elementary ones. `force_mip` skips enumeration.
pub fn cg_price_elementary(
    teg: &TimeExpandedGraph,
    costs: &CgCosts,
    duals: &Duals,
    zone: NodeId,
    curve: ResponseCurve,
    k_threshold: usize,
    force_mip: bool,
    opts: &SolveOptions,
) -> Result<Option<Priced>, SolveError> {
    let pg = PricingGraph::build(teg, costs, duals, zone, curve);
    let found = if force_mip {
        price_by_mip(&pg, opts)?.map(|e| (e, Branch::Mip))
    } else {
        match price_by_enumeration(&pg, k_threshold) {
            None => None,
            Some(Some((e, k))) => Some((e, Branch::Enumeration { k })),
            Some(None) => price_by_mip(&pg, opts)?.map(|e| (e, Branch::Mip)),
        }
    };
    Ok(found.map(|(edges, branch)| {
        let cost = pg.cost(&edges);
        Priced {
            plan: pg.decode(zone, curve, &edges),
            cost,
            reduced: cost - duals.zone(teg.graph(), zone),
            branch,
        }
    }))
}
