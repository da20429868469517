//! Conflict-based path generation: a path-pool scheduling master fed by
//! shortest paths under congestion-aware arc costs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::budget::Budget;
use crate::error::SolveError;
use crate::mp::{solve_mip, Cmp, Model, Sense, SolveOptions, SolveStatus, VarId, VarKind};
use crate::network::{
    ArcId, EvacPath, EvacuationPlan, NodeId, Schedule, StaticGraph, TimeExpandedGraph, ZoneFlow,
};
use crate::report::{CpgIter, Method, Outcome, RunConfig, SolveReport, Solved, Trace};
use crate::zepp_mip::gated_capacity;

#[derive(Debug, Clone, PartialEq)]
pub struct CpgParams {
    /// Weights of travel time, pool usage and scheduled utilization.
    pub alpha: [f64; 3],
    /// Half-width of the cost noise.
    pub epsilon: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for CpgParams {
    fn default() -> Self {
        CpgParams { alpha: [1.0 / 3.0; 3], epsilon: 0.5, seed: 0, max_iterations: 10 }
    }
}

/// Generated paths with per-zone and per-arc indexes.
#[derive(Debug, Clone, Default)]
pub struct PathPool {
    paths: Vec<EvacPath>,
    seen: HashSet<EvacPath>,
}

impl PathPool {
    /// Adds a path unless it is already pooled.
    pub fn insert(&mut self, p: EvacPath) -> bool {
        if self.seen.contains(&p) {
            return false;
        }
        self.seen.insert(p.clone());
        self.paths.push(p);
        true
    }

    pub fn paths(&self) -> &[EvacPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn of_zone(&self, k: NodeId) -> impl Iterator<Item = (usize, &EvacPath)> {
        self.paths.iter().enumerate().filter(move |(_, p)| p.zone == k)
    }

    /// Number of pooled paths through `e`.
    pub fn uses(&self, e: ArcId) -> usize {
        self.paths.iter().filter(|p| p.arcs.contains(&e)).count()
    }
}

/// Cost of arc `e` given the pool, the vehicles scheduled through it and noise `r`.
pub fn cpg_edge_cost(teg: &TimeExpandedGraph, e: ArcId, pool: &PathPool, scheduled: f64, r: f64, params: &CpgParams) -> f64 {
    let g = teg.graph();
    let max_s = g.arcs().iter().map(|a| a.travel).max().unwrap_or(1) as f64;
    let [at, ac, au] = params.alpha;
    let travel = at * g.arc(e).travel as f64 * r / max_s;
    let usage = if pool.is_empty() { 0.0 } else { ac * pool.uses(e) as f64 / pool.len() as f64 };
    let total: f64 = (0..teg.horizon()).filter(|&t| teg.in_horizon(e, t)).map(|_| g.arc(e).capacity as f64).sum();
    let util = if scheduled <= 0.0 {
        0.0
    } else {
        assert!(total > 0.0, "flow scheduled on arc {e:?} without capacity");
        au * scheduled / total
    };
    travel + usage + util
}

/// Cheapest path from `k` to any safe node under `cost`, ties broken by arc id.
pub(crate) fn cheapest_path(g: &StaticGraph, k: NodeId, cost: &[f64]) -> Option<EvacPath> {
    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }
    let n = g.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<ArcId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[k.0] = 0.0;
    heap.push(Reverse((Key(0.0), k.0)));
    while let Some(Reverse((Key(d), v))) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        if g.is_safe(NodeId(v)) {
            let mut arcs = Vec::new();
            let mut at = v;
            while at != k.0 {
                let e = pred[at].unwrap();
                arcs.push(e);
                at = g.arc(e).tail.0;
            }
            arcs.reverse();
            return Some(EvacPath { zone: k, arcs });
        }
        for &e in g.out_arcs(NodeId(v)) {
            assert!(cost[e.0] >= 0.0);
            let w = g.arc(e).head.0;
            let nd = d + cost[e.0];
            if nd < dist[w] || (nd == dist[w] && pred[w].is_some_and(|p| e < p)) {
                dist[w] = nd;
                pred[w] = Some(e);
                heap.push(Reverse((Key(nd), w)));
            }
        }
    }
    None
}

/// One cheapest path per critical zone; paths already pooled are dropped.
pub fn cpg_generate_paths(
    teg: &TimeExpandedGraph,
    critical: &[NodeId],
    pool: &PathPool,
    scheduled: &[f64],
    noise: &[f64],
    params: &CpgParams,
) -> Result<Vec<EvacPath>, SolveError> {
    let g = teg.graph();
    let cost: Vec<f64> =
        g.arcs().iter().map(|a| cpg_edge_cost(teg, a.id, pool, scheduled[a.id.0], noise[a.id.0], params)).collect();
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for &k in critical {
        match cheapest_path(g, k, &cost) {
            Some(p) if !pool.seen.contains(&p) && !out.contains(&p) => out.push(p),
            Some(_) => {}
            None => bad.push(k),
        }
    }
    if !bad.is_empty() {
        return Err(SolveError::InfeasibleZones(bad));
    }
    Ok(out)
}

struct Master {
    model: Model,
    x: Vec<VarId>,
    phi: Vec<Vec<(u32, VarId)>>,
    short: Vec<VarId>,
    y: Vec<Option<VarId>>,
}

fn build_master(teg: &TimeExpandedGraph, pool: &PathPool, contraflow: bool, integer: bool) -> Master {
    let g = teg.graph();
    let cf = contraflow && !g.pairs().is_empty();
    let h = teg.horizon();
    let kind = if integer { VarKind::Integer } else { VarKind::Continuous };
    let mut m = Model::new(Sense::Maximize);
    let mut load: Vec<Vec<Vec<(VarId, f64)>>> = vec![vec![Vec::new(); h as usize]; g.num_arcs()];
    let mut x = Vec::new();
    let mut phi = Vec::new();
    for (pi, p) in pool.paths().iter().enumerate() {
        let xp = m.binary(format!("x_{pi}"), 0.0);
        x.push(xp);
        let usable = p.usable_departures(teg);
        let off = p.offsets(g);
        let mut vars = Vec::new();
        for &t in &usable {
            let v = m.add_var(format!("phi_{pi}_{t}"), kind, 0.0, f64::INFINITY, 1.0);
            vars.push((t, v));
            for (&e, &o) in p.arcs.iter().zip(&off) {
                load[e.0][(t + o) as usize].push((v, 1.0));
            }
        }
        let up = p
            .arcs
            .iter()
            .zip(&off)
            .map(|(&e, _)| (0..h).map(|t| gated_capacity(teg, e, t, cf)).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        let mut terms: Vec<(VarId, f64)> = vars.iter().map(|&(_, v)| (v, 1.0)).collect();
        terms.push((xp, -(usable.len() as f64) * up));
        m.add_con(format!("pathcap_{pi}"), terms, Cmp::Le, 0.0);
        phi.push(vars);
    }
    let mut short = Vec::new();
    for &k in g.zones() {
        let s = m.continuous(format!("short_{}", k.0), 0.0, f64::INFINITY, 0.0);
        short.push(s);
        let mut terms: Vec<(VarId, f64)> = pool.of_zone(k).flat_map(|(pi, _)| phi[pi].iter().map(|&(_, v)| (v, 1.0))).collect();
        terms.push((s, 1.0));
        m.add_con(format!("demand_{}", k.0), terms, Cmp::Eq, g.demand(k) as f64);
        let xs = pool.of_zone(k).map(|(pi, _)| (x[pi], 1.0)).collect();
        m.add_con(format!("one_path_{}", k.0), xs, Cmp::Eq, 1.0);
    }
    let y: Vec<Option<VarId>> = g
        .arcs()
        .iter()
        .map(|a| (cf && g.is_contraflow(a.id)).then(|| m.binary(format!("y_{}", a.id.0), 0.0)))
        .collect();
    for p in g.pairs().iter().filter(|_| cf) {
        let terms = vec![(y[p.forward.0].unwrap(), 1.0), (y[p.backward.0].unwrap(), 1.0)];
        m.add_con(format!("pair_{}", p.forward.0), terms, Cmp::Ge, 1.0);
    }
    for a in g.arcs() {
        for t in 0..h {
            let terms = std::mem::take(&mut load[a.id.0][t as usize]);
            if terms.is_empty() {
                continue;
            }
            let u = a.capacity as f64;
            match (y[a.id.0], g.reverse(a.id)) {
                (Some(ye), Some(r)) => {
                    let ur = teg.reverse_capacity(a.id, t) as f64;
                    let mut terms = terms;
                    terms.push((ye, -u));
                    terms.push((y[r.0].unwrap(), ur));
                    m.add_con(format!("cap_{}_{t}", a.id.0), terms, Cmp::Le, ur);
                }
                _ => {
                    m.add_con(format!("cap_{}_{t}", a.id.0), terms, Cmp::Le, u);
                }
            }
        }
    }
    Master { model: m, x, phi, short, y }
}

struct Scheduled {
    value: f64,
    chosen: Vec<usize>,
    departures: Vec<Vec<(u32, f64)>>,
    shortfall: Vec<f64>,
    reversed: Vec<ArcId>,
    optimal: bool,
}

fn schedule(teg: &TimeExpandedGraph, pool: &PathPool, contraflow: bool, integer: bool, opts: &SolveOptions) -> Result<Scheduled, SolveError> {
    let g = teg.graph();
    let mm = build_master(teg, pool, contraflow, integer);
    let sol = solve_mip(&mm.model, opts)?;
    if !sol.status.has_solution() {
        return Err(SolveError::Status { what: "path master".into(), status: format!("{:?}", sol.status) });
    }
    let mut chosen = Vec::new();
    for &k in g.zones() {
        let pick = pool.of_zone(k).map(|(pi, _)| pi).find(|&pi| sol.value(mm.x[pi]) > 0.5).expect("one path per zone");
        chosen.push(pick);
    }
    let departures = mm
        .phi
        .iter()
        .map(|vars| vars.iter().map(|&(t, v)| (t, sol.value(v))).filter(|&(_, q)| q > 1e-7).collect())
        .collect();
    let shortfall = mm.short.iter().map(|&s| sol.value(s)).collect();
    let reversed = mm
        .y
        .iter()
        .enumerate()
        .filter_map(|(e, y)| y.filter(|y| sol.value(*y) < 0.5).map(|_| ArcId(e)))
        .collect();
    Ok(Scheduled { value: sol.objective, chosen, departures, shortfall, reversed, optimal: sol.status == SolveStatus::Optimal })
}

/// Runs the generate/schedule loop and the final integer schedule.
pub fn cpg_solve(teg: &TimeExpandedGraph, contraflow: bool, params: &CpgParams, run: &RunConfig) -> Result<Solved, SolveError> {
    let budget = Budget::new(run.time_limit);
    let g = teg.graph();
    let bad = teg.infeasible_zones();
    if !bad.is_empty() {
        return Err(SolveError::InfeasibleZones(bad));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool = PathPool::default();
    let ones = vec![1.0; g.num_arcs()];
    let zero = vec![0.0; g.num_arcs()];
    for p in cpg_generate_paths(teg, g.zones(), &pool, &zero, &ones, params)? {
        pool.insert(p);
    }
    let mut trace = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut stalled = 0usize;
    let mut iter = 1;
    let outcome = loop {
        let s = schedule(teg, &pool, contraflow, false, &run.backend.with_time_limit(budget.remaining()))?;
        let critical: Vec<NodeId> =
            g.zones().iter().zip(&s.shortfall).filter(|(_, &sf)| sf > 1e-6).map(|(&k, _)| k).collect();
        trace.push(CpgIter { iter, pool: pool.len(), critical: critical.len(), objective: s.value });
        info!("cpg iter {iter}: pool {} critical {} objective {:.3}", pool.len(), critical.len(), s.value);
        if s.value > best + 1e-9 {
            best = s.value;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if critical.is_empty() {
            break Outcome::Converged;
        }
        if iter >= params.max_iterations {
            break Outcome::IterationCap;
        }
        if budget.expired() || !s.optimal {
            break Outcome::TimeLimit;
        }
        let mut scheduled = vec![0.0; g.num_arcs()];
        for (pi, deps) in s.departures.iter().enumerate() {
            let q: f64 = deps.iter().map(|d| d.1).sum();
            for &e in &pool.paths()[pi].arcs {
                scheduled[e.0] += q;
            }
        }
        let noise: Vec<f64> = if stalled >= 1 {
            (0..g.num_arcs()).map(|_| rng.gen_range(1.0 - params.epsilon..=1.0 + params.epsilon)).collect()
        } else {
            ones.clone()
        };
        for p in cpg_generate_paths(teg, &critical, &pool, &scheduled, &noise, params)? {
            pool.insert(p);
        }
        iter += 1;
    };

    let fin = schedule(teg, &pool, contraflow, true, &run.backend.with_time_limit(budget.remaining()))?;
    let mut paths = Vec::new();
    let mut flows = Vec::new();
    for (zi, &k) in g.zones().iter().enumerate() {
        let pi = fin.chosen[zi];
        let p = &pool.paths()[pi];
        let off = p.offsets(g);
        for &(t, q) in &fin.departures[pi] {
            for (&e, &o) in p.arcs.iter().zip(&off) {
                flows.push(ZoneFlow { zone: k, arc: e, time: t + o, amount: q.round() });
            }
        }
        paths.push(p.clone());
    }
    let plan = EvacuationPlan {
        horizon: teg.horizon(),
        paths,
        reversed: fin.reversed,
        schedule: Schedule::Preemptive { flows },
    };
    let mut report = SolveReport::new(Method::Cpg, teg.horizon(), contraflow, g.total_demand());
    report.outcome = if fin.optimal { outcome } else { Outcome::TimeLimit };
    report.set_evacuated(fin.value.round());
    report.iterations = trace.len();
    report.trace = Trace::Cpg(trace);
    report.wall_seconds = budget.elapsed().as_secs_f64();
    Ok(Solved { plan, report })
}

/// Hex digest of a run's trace and plan, for reproducibility checks.
pub fn trace_hash(s: &Solved) -> String {
    #[derive(Serialize)]
    struct Fingerprint<'a> {
        trace: &'a Trace,
        plan: &'a EvacuationPlan,
        evacuated: f64,
    }
    let fp = Fingerprint { trace: &s.report.trace, plan: &s.plan, evacuated: s.report.evacuated };
    let bytes = serde_json::to_vec(&fp).expect("plan serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
