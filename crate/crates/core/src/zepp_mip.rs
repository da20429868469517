//! Exact mixed-integer model for zone-based evacuation with optional contraflow.

use log::info;

use crate::budget::Budget;
use crate::error::SolveError;
use crate::mp::{solve_lp, solve_mip, Cmp, Model, Sense, SolveStatus, VarId, VarKind};
use crate::network::{
    ArcId, CopyKind, EvacPath, EvacuationPlan, NodeId, Schedule, StaticGraph, TimeExpandedGraph, ZoneFlow,
};
use crate::report::{Method, Outcome, RunConfig, SolveReport, Solved};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZeppOptions {
    pub contraflow: bool,
    /// Forbid two different exits from any node over all zones.
    pub convergent: bool,
    /// Restrict flows to integers.
    pub integer_flows: bool,
}

/// The built model with handles to its variables.
#[derive(Debug, Clone)]
pub struct ZeppModel {
    pub model: Model,
    /// `x[zone][arc]`
    pub x: Vec<Vec<VarId>>,
    /// `phi[zone][copy]`, absent on copies the zone can never use.
    pub phi: Vec<Vec<Option<VarId>>>,
    /// Lane orientation per arc of a contraflow pair.
    pub y: Vec<Option<VarId>>,
}

/// Capacity usable by a copy of `e` at step `t` when its lanes are all taken.
pub(crate) fn gated_capacity(teg: &TimeExpandedGraph, e: ArcId, t: u32, contraflow: bool) -> f64 {
    let u = teg.graph().arc(e).capacity;
    let extra = if contraflow { teg.reverse_capacity(e, t) } else { 0 };
    (u + extra) as f64
}

pub fn build_zepp_model(teg: &TimeExpandedGraph, opts: &ZeppOptions) -> ZeppModel {
    let g = teg.graph();
    let mut m = Model::new(Sense::Maximize);
    let nc = teg.copies().len();
    let flow_kind = if opts.integer_flows { VarKind::Integer } else { VarKind::Continuous };
    let contraflow = opts.contraflow && !g.pairs().is_empty();

    let y: Vec<Option<VarId>> = g
        .arcs()
        .iter()
        .map(|a| (contraflow && g.is_contraflow(a.id)).then(|| m.binary(format!("y_{}", a.id.0), 0.0)))
        .collect();
    for p in g.pairs().iter().filter(|_| contraflow) {
        let (f, b) = (y[p.forward.0].unwrap(), y[p.backward.0].unwrap());
        m.add_con(format!("pair_{}", p.forward.0), vec![(f, 1.0), (b, 1.0)], Cmp::Ge, 1.0);
    }

    let mut xs = Vec::new();
    let mut phis = Vec::new();
    let mut cap_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); nc];
    for &k in g.zones() {
        let x: Vec<VarId> = g
            .arcs()
            .iter()
            .map(|a| {
                let foreign = g.is_zone(a.tail) && a.tail != k;
                m.add_var(format!("x_{}_{}", a.id.0, k.0), VarKind::Binary, 0.0, if foreign { 0.0 } else { 1.0 }, 0.0)
            })
            .collect();
        m.add_con(format!("one_path_{}", k.0), g.out_arcs(k).iter().map(|e| (x[e.0], 1.0)).collect(), Cmp::Eq, 1.0);
        for node in g.nodes().iter().filter(|n| g.is_transit(n.id)) {
            let i = node.id;
            let mut terms: Vec<(VarId, f64)> = g.in_arcs(i).iter().map(|e| (x[e.0], 1.0)).collect();
            terms.extend(g.out_arcs(i).iter().map(|e| (x[e.0], -1.0)));
            m.add_con(format!("cont_{}_{}", i.0, k.0), terms, Cmp::Eq, 0.0);
            m.add_con(format!("outdeg_{}_{}", i.0, k.0), g.out_arcs(i).iter().map(|e| (x[e.0], 1.0)).collect(), Cmp::Le, 1.0);
        }

        let mut phi = vec![None; nc];
        for (c, a) in teg.copies().iter().enumerate() {
            let CopyKind::Movement(e) = a.kind else { continue };
            let tail = g.arc(e).tail;
            if g.is_zone(tail) && tail != k {
                continue;
            }
            let obj = if g.is_safe(g.arc(e).head) { 1.0 } else { 0.0 };
            let v = m.add_var(format!("phi_{}_{}_{}", e.0, a.time, k.0), flow_kind, 0.0, f64::INFINITY, obj);
            phi[c] = Some(v);
            cap_terms[c].push((v, 1.0));
            let u = gated_capacity(teg, e, a.time, contraflow);
            m.add_con(format!("gate_{}_{}_{}", e.0, a.time, k.0), vec![(v, 1.0), (x[e.0], -u)], Cmp::Le, 0.0);
        }
        let supply: Vec<(VarId, f64)> = g
            .out_arcs(k)
            .iter()
            .flat_map(|&e| teg.movement_copies(e).filter_map(|(_, c)| phi[c]).map(|v| (v, 1.0)))
            .collect();
        m.add_con(format!("demand_{}", k.0), supply, Cmp::Le, g.demand(k) as f64);
        for v in 0..teg.num_node_copies() {
            let Some((i, t)) = teg.node_at(v) else { continue };
            if !g.is_transit(i) || !teg.is_alive(v) {
                continue;
            }
            let mut terms: Vec<(VarId, f64)> = teg.inc(v).iter().filter_map(|&c| phi[c]).map(|p| (p, 1.0)).collect();
            terms.extend(teg.out(v).iter().filter_map(|&c| phi[c]).map(|p| (p, -1.0)));
            if !terms.is_empty() {
                m.add_con(format!("flow_{}_{}_{}", i.0, t, k.0), terms, Cmp::Eq, 0.0);
            }
        }
        xs.push(x);
        phis.push(phi);
    }

    for (c, a) in teg.copies().iter().enumerate() {
        let CopyKind::Movement(e) = a.kind else { continue };
        let u = g.arc(e).capacity as f64;
        let mut terms = std::mem::take(&mut cap_terms[c]);
        match (y[e.0], g.reverse(e)) {
            (Some(ye), Some(r)) => {
                let ur = teg.reverse_capacity(e, a.time) as f64;
                terms.push((ye, -u));
                terms.push((y[r.0].unwrap(), ur));
                m.add_con(format!("cap_{}_{}", e.0, a.time), terms, Cmp::Le, ur);
            }
            _ => {
                m.add_con(format!("cap_{}_{}", e.0, a.time), terms, Cmp::Le, u);
            }
        }
    }

    if opts.convergent {
        let z: Vec<VarId> = g.arcs().iter().map(|a| m.binary(format!("z_{}", a.id.0), 0.0)).collect();
        for (zi, x) in xs.iter().enumerate() {
            for a in g.arcs() {
                m.add_con(format!("conv_{}_{}", a.id.0, zi), vec![(x[a.id.0], 1.0), (z[a.id.0], -1.0)], Cmp::Le, 0.0);
            }
        }
        for node in g.nodes().iter().filter(|n| !g.is_safe(n.id)) {
            let terms = g.out_arcs(node.id).iter().map(|e| (z[e.0], 1.0)).collect();
            m.add_con(format!("single_exit_{}", node.id.0), terms, Cmp::Le, 1.0);
        }
    }

    ZeppModel { model: m, x: xs, phi: phis, y }
}

/// Follows the unique chosen exit from each node until a safe node is reached.
pub(crate) fn walk_choice(graph: &StaticGraph, zone: NodeId, choose: impl Fn(NodeId) -> Option<ArcId>) -> Option<EvacPath> {
    let mut at = zone;
    let mut arcs = Vec::new();
    let mut seen = vec![false; graph.num_nodes()];
    while !graph.is_safe(at) {
        if seen[at.0] {
            return None;
        }
        seen[at.0] = true;
        let e = choose(at)?;
        arcs.push(e);
        at = graph.arc(e).head;
    }
    Some(EvacPath { zone, arcs })
}

impl ZeppModel {
    pub(crate) fn decode(&self, teg: &TimeExpandedGraph, values: &[f64]) -> Result<EvacuationPlan, SolveError> {
        let g = teg.graph();
        let mut paths = Vec::new();
        let mut flows = Vec::new();
        for (zi, &k) in g.zones().iter().enumerate() {
            let x = &self.x[zi];
            let path = walk_choice(g, k, |i| g.out_arcs(i).iter().copied().find(|e| values[x[e.0].0] > 0.5))
                .ok_or_else(|| SolveError::Invalid(format!("chosen arcs of zone {} do not form a path", k.0)))?;
            paths.push(path);
            for (c, v) in self.phi[zi].iter().enumerate() {
                let Some(v) = v else { continue };
                let amount = values[v.0];
                if amount > 1e-7 {
                    let a = teg.copy(c);
                    let CopyKind::Movement(e) = a.kind else { continue };
                    flows.push(ZoneFlow { zone: k, arc: e, time: a.time, amount });
                }
            }
        }
        let reversed = self
            .y
            .iter()
            .enumerate()
            .filter_map(|(e, y)| y.filter(|y| values[y.0] < 0.5).map(|_| ArcId(e)))
            .collect();
        Ok(EvacuationPlan { horizon: teg.horizon(), paths, reversed, schedule: Schedule::Preemptive { flows } })
    }
}

/// Optimal value of the linear relaxation.
pub fn zepp_lp_bound(teg: &TimeExpandedGraph, opts: &ZeppOptions, run: &RunConfig) -> Result<f64, SolveError> {
    let zm = build_zepp_model(teg, opts);
    let sol = solve_lp(&zm.model.relaxed(), &run.backend.with_time_limit(run.time_limit))?;
    if sol.status != SolveStatus::Optimal {
        return Err(SolveError::Status { what: "relaxation".into(), status: format!("{:?}", sol.status) });
    }
    Ok(sol.objective)
}

/// Solves the full model by branch and bound.
pub fn solve_zepp_mip(teg: &TimeExpandedGraph, opts: &ZeppOptions, run: &RunConfig) -> Result<Solved, SolveError> {
    let budget = Budget::new(run.time_limit);
    let g = teg.graph();
    let bad = teg.infeasible_zones();
    if !bad.is_empty() {
        return Err(SolveError::InfeasibleZones(bad));
    }
    let zm = build_zepp_model(teg, opts);
    info!("mip: {} variables, {} rows", zm.model.num_vars(), zm.model.num_cons());
    let sol = solve_mip(&zm.model, &run.backend.with_time_limit(budget.remaining()))?;
    if !sol.status.has_solution() {
        return Err(SolveError::Status { what: "mip".into(), status: format!("{:?}", sol.status) });
    }
    let plan = zm.decode(teg, &sol.primal)?;
    let mut report = SolveReport::new(Method::Mip, teg.horizon(), opts.contraflow, g.total_demand());
    report.outcome = if sol.status == SolveStatus::Optimal { Outcome::Optimal } else { Outcome::TimeLimit };
    report.set_evacuated(sol.objective);
    report.upper_bound = sol.bound;
    report.gap = sol.gap;
    report.iterations = 1;
    report.wall_seconds = budget.elapsed().as_secs_f64();
    Ok(Solved { plan, report })
}
