#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evac_core::io::{generate_instance, GenSpec};
use evac_core::network::{ArcId, ContraflowPair, Node, NodeId, StaticArc, StaticGraph, TimeExpandedGraph};

pub fn t1() -> StaticGraph {
    StaticGraph::new(vec![Node::evacuation(0, "E", 10, None), Node::safe(1, "S")], vec![StaticArc::new(0, 0, 1, 1, 5)], vec![])
        .unwrap()
}

/// Two zones of 5 behind one bottleneck of 5 per step.
pub fn t2() -> StaticGraph {
    StaticGraph::new(
        vec![Node::evacuation(0, "A", 5, None), Node::evacuation(1, "B", 5, None), Node::transit(2, "X"), Node::safe(3, "S")],
        vec![StaticArc::new(0, 0, 2, 1, 5), StaticArc::new(1, 1, 2, 1, 5), StaticArc::new(2, 2, 3, 1, 5)],
        vec![],
    )
    .unwrap()
}

/// One reversible road of 5 per direction between two wide links.
pub fn t3() -> StaticGraph {
    StaticGraph::new(
        vec![Node::evacuation(0, "E", 20, None), Node::transit(1, "A"), Node::transit(2, "B"), Node::safe(3, "S")],
        vec![
            StaticArc::new(0, 0, 1, 1, 10),
            StaticArc::new(1, 1, 2, 1, 5),
            StaticArc::new(2, 2, 1, 1, 5),
            StaticArc::new(3, 2, 3, 1, 10),
        ],
        vec![ContraflowPair { forward: ArcId(1), backward: ArcId(2) }],
    )
    .unwrap()
}

/// Two zones meeting at X, which has two exits of 5 each.
pub fn fork() -> StaticGraph {
    StaticGraph::new(
        vec![
            Node::evacuation(0, "A", 10, None),
            Node::evacuation(1, "B", 10, None),
            Node::transit(2, "X"),
            Node::safe(3, "S1"),
            Node::safe(4, "S2"),
        ],
        vec![
            StaticArc::new(0, 0, 2, 1, 10),
            StaticArc::new(1, 1, 2, 1, 10),
            StaticArc::new(2, 2, 3, 1, 5),
            StaticArc::new(3, 2, 4, 1, 5),
        ],
        vec![],
    )
    .unwrap()
}

/// Zone with an early deadline next to a transit cycle, so delaying means circling.
pub fn cycle_teaser() -> StaticGraph {
    StaticGraph::new(
        vec![
            Node::evacuation(0, "E", 4, Some(1)),
            Node::transit(1, "A"),
            Node::transit(2, "B"),
            Node::transit(3, "C"),
            Node::safe(4, "S"),
        ],
        vec![
            StaticArc::new(0, 0, 1, 1, 4),
            StaticArc::new(1, 1, 2, 1, 4),
            StaticArc::new(2, 2, 3, 1, 4),
            StaticArc::new(3, 3, 1, 1, 4),
            StaticArc::new(4, 1, 4, 1, 4),
        ],
        vec![],
    )
    .unwrap()
}

/// Smallest horizon at which every zone has some usable path.
pub fn min_feasible_horizon(g: &StaticGraph) -> u32 {
    (1..200).find(|&h| TimeExpandedGraph::build(g, h, true).is_ok_and(|t| t.infeasible_zones().is_empty())).unwrap()
}

/// A seeded instance with at most 8 zones and 25 nodes, and a horizon at
/// most 30 at which every zone can leave.
pub fn suite_instance(seed: u64) -> (StaticGraph, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919) + 1);
    let spec = GenSpec {
        name: format!("suite-{seed}"),
        zones: rng.gen_range(1..=5),
        transit: rng.gen_range(2..=9),
        safe: rng.gen_range(1..=2),
        seed,
        scale: 1.0,
        step_minutes: 5,
        horizon_steps: 10,
        span_minutes: 12,
        capacity: (2, 6),
        // even, so that half-steps of scaling stay integral
        demand: (2, 8),
        extra_degree: 1,
        pair_probability: 0.5,
    };
    let f = generate_instance(&spec).scaled(2.0);
    let g = f.to_graph().unwrap();
    let h = (min_feasible_horizon(&g) + rng.gen_range(0..=4)).min(30);
    (g, h)
}

/// Seeds of the randomized suite, skipping none.
pub fn suite(n: usize) -> Vec<(u64, StaticGraph, u32)> {
    (0..n as u64).map(|s| {
        let (g, h) = suite_instance(s);
        (s, g, h)
    }).collect()
}

/// Dinic maximum flow on integer capacities.
pub struct MaxFlow {
    head: Vec<usize>,
    cap: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl MaxFlow {
    pub fn new(n: usize) -> Self {
        MaxFlow { head: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn edge(&mut self, a: usize, b: usize, c: i64) {
        self.adj[a].push(self.head.len());
        self.head.push(b);
        self.cap.push(c);
        self.adj[b].push(self.head.len());
        self.head.push(a);
        self.cap.push(0);
    }

    pub fn run(&mut self, s: usize, t: usize) -> i64 {
        let n = self.adj.len();
        let mut total = 0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &e in &self.adj[v] {
                    let w = self.head[e];
                    if self.cap[e] > 0 && level[w] == usize::MAX {
                        level[w] = level[v] + 1;
                        q.push_back(w);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut it = vec![0; n];
            loop {
                let f = self.push(s, t, i64::MAX, &level, &mut it);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
    }

    fn push(&mut self, v: usize, t: usize, f: i64, level: &[usize], it: &mut [usize]) -> i64 {
        if v == t {
            return f;
        }
        while it[v] < self.adj[v].len() {
            let e = self.adj[v][it[v]];
            let w = self.head[e];
            if self.cap[e] > 0 && level[w] == level[v] + 1 {
                let d = self.push(w, t, f.min(self.cap[e]), level, it);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[v] += 1;
        }
        0
    }
}

const BIG: i64 = i64::MAX / 4;

/// Vehicles that can reach safety within `h` steps using only `arcs`,
/// with `caps[e]` per step. Built directly from the definitions: waiting
/// only at zones and safe nodes, arrivals no later than step `h - 1`.
pub fn flow_over_time(g: &StaticGraph, h: u32, arcs: &[ArcId], caps: &dyn Fn(ArcId, u32) -> i64) -> i64 {
    let n = g.num_nodes();
    let hh = h as usize;
    let id = |i: usize, t: usize| i * hh + t;
    let src = n * hh;
    let sink = src + 1;
    let mut mf = MaxFlow::new(n * hh + 2);
    for &k in g.zones() {
        mf.edge(src, id(k.0, 0), g.demand(k) as i64);
        for t in 0..hh - 1 {
            mf.edge(id(k.0, t), id(k.0, t + 1), BIG);
        }
    }
    for &s in g.safe_nodes() {
        for t in 0..hh {
            mf.edge(id(s.0, t), sink, BIG);
        }
    }
    for &e in arcs {
        let a = g.arc(e);
        for t in 0..h {
            let arrive = t + a.travel;
            if arrive >= h || a.block.is_some_and(|b| t >= b) {
                continue;
            }
            if g.deadline(a.tail).is_some_and(|d| t >= d) {
                continue;
            }
            mf.edge(id(a.tail.0, t as usize), id(a.head.0, arrive as usize), caps(e, t));
        }
    }
    mf.run(src, sink)
}

/// Capacity of a copy with the opposite lane lent to it when `contraflow`.
pub fn lane_capacity(g: &StaticGraph, contraflow: bool, e: ArcId, t: u32) -> i64 {
    let own = g.arc(e).capacity as i64;
    match g.reverse(e) {
        Some(r) if contraflow && g.arc(r).block.is_none_or(|b| t < b) => own + g.arc(r).capacity as i64,
        _ => own,
    }
}

/// Best convergent plan by enumerating one exit per node reachable from a
/// zone. `None` when there are more than `limit` choices. In a forest two
/// opposite arcs are never both used, so lending lanes per copy is exact.
pub fn forest_oracle(g: &StaticGraph, h: u32, contraflow: bool, limit: usize) -> Option<i64> {
    let mut reach = vec![false; g.num_nodes()];
    let mut stack: Vec<NodeId> = g.zones().to_vec();
    for &k in g.zones() {
        reach[k.0] = true;
    }
    while let Some(v) = stack.pop() {
        for &e in g.out_arcs(v) {
            let w = g.arc(e).head;
            if !reach[w.0] {
                reach[w.0] = true;
                stack.push(w);
            }
        }
    }
    let choosers: Vec<NodeId> = (0..g.num_nodes()).map(NodeId).filter(|&i| reach[i.0] && !g.is_safe(i) && !g.out_arcs(i).is_empty()).collect();
    let count = choosers.iter().try_fold(1usize, |acc, &i| acc.checked_mul(g.out_arcs(i).len()))?;
    if count > limit {
        return None;
    }
    let mut best = 0;
    let mut pick = vec![0usize; choosers.len()];
    loop {
        let arcs: Vec<ArcId> = choosers.iter().zip(&pick).map(|(&i, &p)| g.out_arcs(i)[p]).collect();
        let v = flow_over_time(g, h, &arcs, &|e, t| lane_capacity(g, contraflow, e, t));
        best = best.max(v);
        let mut i = 0;
        loop {
            if i == pick.len() {
                return Some(best);
            }
            pick[i] += 1;
            if pick[i] < g.out_arcs(choosers[i]).len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Every simple path from `zone` to a safe node.
pub fn simple_paths(g: &StaticGraph, zone: NodeId) -> Vec<Vec<ArcId>> {
    fn go(g: &StaticGraph, at: NodeId, seen: &mut Vec<NodeId>, path: &mut Vec<ArcId>, out: &mut Vec<Vec<ArcId>>) {
        if g.is_safe(at) {
            out.push(path.clone());
            return;
        }
        for &e in g.out_arcs(at) {
            let w = g.arc(e).head;
            if !seen.contains(&w) {
                seen.push(w);
                path.push(e);
                go(g, w, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, zone, &mut vec![zone], &mut Vec::new(), &mut out);
    out
}

/// Every walk from `zone` to a safe node with total travel below `h`.
pub fn walks(g: &StaticGraph, zone: NodeId, h: u32) -> Vec<Vec<ArcId>> {
    fn go(g: &StaticGraph, at: NodeId, left: u32, path: &mut Vec<ArcId>, out: &mut Vec<Vec<ArcId>>) {
        if g.is_safe(at) {
            out.push(path.clone());
            return;
        }
        for &e in g.out_arcs(at) {
            let s = g.arc(e).travel;
            if s < left {
                path.push(e);
                go(g, g.arc(e).head, left - s, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, zone, h, &mut Vec::new(), &mut out);
    out
}

/// Cohort replay of a constant-rate departure window: per arc-copy loads,
/// arrivals, or `None` when a cohort inside the horizon meets a closed arc
/// or the first cohort cannot finish.
pub struct Replay {
    pub loads: Vec<((ArcId, u32), u64)>,
    pub arrived: u64,
}

pub fn replay(g: &StaticGraph, h: u32, zone: NodeId, arcs: &[ArcId], rate: u64, start: u32) -> Option<Replay> {
    let d = g.demand(zone);
    let mut loads = Vec::new();
    let mut arrived = 0;
    let mut left = d;
    let mut tau = 0;
    while left > 0 {
        let q = left.min(rate);
        left -= q;
        let mut t = start + tau;
        let mut done = true;
        for &e in arcs {
            let a = g.arc(e);
            if t + a.travel >= h {
                done = false;
                break;
            }
            let open = a.block.is_none_or(|b| t < b) && g.deadline(a.tail).is_none_or(|dl| t < dl);
            if !open {
                return None;
            }
            loads.push(((e, t), q));
            t += a.travel;
        }
        if tau == 0 && !done {
            return None;
        }
        if done {
            arrived += q;
        }
        tau += 1;
    }
    Some(Replay { loads, arrived })
}

/// Suite instance whose zones must start leaving before a random step.
pub fn deadline_instance(seed: u64) -> (StaticGraph, u32) {
    use evac_core::io::{InstanceFile, Meta};
    let (g, h) = suite_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
    let meta = Meta { name: format!("deadline-{seed}"), step_minutes: 1, horizon_steps: h, scale: 1.0 };
    let mut f = InstanceFile::from_graph(&g, meta);
    for n in f.nodes.iter_mut().filter(|n| n.demand.is_some()) {
        n.deadline_minutes = Some(rng.gen_range(1..=h.max(2) / 2 + 1));
    }
    (f.to_graph().unwrap(), h)
}

/// Random sparse capacity duals, nonpositive unless `signed`, with zone duals
/// of any sign. Positive capacity duals reward arcs and make cycles pay.
pub fn random_duals(g: &StaticGraph, h: u32, scale: f64, signed: bool, rng: &mut ChaCha8Rng) -> evac_core::colgen::Duals {
    let mut d = evac_core::colgen::Duals::zero(g, h);
    for a in g.arcs() {
        for t in 0..h {
            if rng.gen_bool(0.4) {
                let v = if signed { rng.gen_range(-scale..scale) } else { -rng.gen_range(0.0..scale) };
                d.set_cap(a.id, t, v);
            }
        }
    }
    for z in d.zone.iter_mut() {
        *z = rng.gen_range(-scale..scale);
    }
    d
}
