//! Benders decomposition for convergent plans: a single-commodity
//! subproblem, Pareto-optimal cuts and contraflow by capacity merging.

use std::collections::{BTreeMap, HashMap};

use log::{info, warn};

use crate::benders::{benders_loop, find_tstar, Cut, Decomposition};
use crate::benders_nc::BendersRun;
use crate::budget::Budget;
use crate::error::SolveError;
use crate::mp::{solve_lp, solve_mip, Cmp, ConId, Model, Sense, SolveOptions, SolveStatus, VarId, VarKind};
use crate::network::{
    complete_forest, ArcId, CopyKind, EvacuationPlan, NodeId, Schedule, StaticGraph, TimeExpandedGraph, ZoneFlow,
};
use crate::report::{Method, Outcome, RunConfig, SolveReport, Solved, Trace};
use crate::zepp_mip::gated_capacity;

/// Interior point of the convergent-path polytope: each arc leaving a node
/// of out-degree `n` gets `1 / (n + 1)`.
pub fn bc_core_point(g: &StaticGraph) -> Vec<f64> {
    g.arcs().iter().map(|a| 1.0 / (g.out_arcs(a.tail).len() as f64 + 1.0)).collect()
}

/// Graph whose paired arcs carry the capacity of both directions.
pub fn bc_contraflow_preprocess(g: &StaticGraph) -> StaticGraph {
    let caps: Vec<u64> = g
        .arcs()
        .iter()
        .map(|a| a.capacity + g.reverse(a.id).map_or(0, |r| g.arc(r).capacity))
        .collect();
    g.with_capacities(&caps)
}

fn merged(g: &StaticGraph, contraflow: bool) -> bool {
    contraflow && !g.pairs().is_empty()
}

/// Convergent path-design master; point index is the arc id.
pub struct BcMaster {
    pub model: Model,
    x: Vec<VarId>,
    z: VarId,
    cuts: usize,
}

impl BcMaster {
    pub fn new(teg: &TimeExpandedGraph, contraflow: bool) -> Self {
        let g = teg.graph();
        let cf = merged(g, contraflow);
        let mut m = Model::new(Sense::Maximize);
        let z = m.continuous("z_rmp", 0.0, f64::INFINITY, 1.0);
        let x: Vec<VarId> = g.arcs().iter().map(|a| m.binary(format!("x_{}", a.id.0), 0.0)).collect();
        let psi: Vec<VarId> =
            g.arcs().iter().map(|a| m.continuous(format!("psi_{}", a.id.0), 0.0, f64::INFINITY, 0.0)).collect();
        for a in g.arcs() {
            let agg: f64 = teg.movement_copies(a.id).map(|(t, _)| gated_capacity(teg, a.id, t, cf)).sum();
            m.add_con(format!("cap_{}", a.id.0), vec![(psi[a.id.0], 1.0), (x[a.id.0], -agg)], Cmp::Le, 0.0);
        }
        let mut exits = vec![(z, 1.0)];
        for node in g.nodes() {
            let i = node.id;
            if g.is_safe(i) {
                continue;
            }
            let out: Vec<(VarId, f64)> = g.out_arcs(i).iter().map(|e| (x[e.0], 1.0)).collect();
            if g.is_zone(i) {
                m.add_con(format!("one_exit_{}", i.0), out, Cmp::Eq, 1.0);
                let flow: Vec<(VarId, f64)> = g.out_arcs(i).iter().map(|e| (psi[e.0], 1.0)).collect();
                exits.extend(flow.iter().map(|&(p, _)| (p, -1.0)));
                m.add_con(format!("demand_{}", i.0), flow, Cmp::Le, g.demand(i) as f64);
            } else {
                m.add_con(format!("converge_{}", i.0), out, Cmp::Le, 1.0);
                let mut terms: Vec<(VarId, f64)> = g.in_arcs(i).iter().map(|e| (psi[e.0], 1.0)).collect();
                terms.extend(g.out_arcs(i).iter().map(|e| (psi[e.0], -1.0)));
                m.add_con(format!("cons_{}", i.0), terms, Cmp::Eq, 0.0);
            }
        }
        m.add_con("objective", exits, Cmp::Le, 0.0);
        BcMaster { model: m, x, z, cuts: 0 }
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
        let sol = solve_mip(&self.model, opts)?;
        match sol.status {
            SolveStatus::Optimal | SolveStatus::TimeLimitFeasible => {}
            SolveStatus::TimeLimitNoSolution => return Ok(None),
            s => return Err(SolveError::Status { what: "master".into(), status: format!("{s:?}") }),
        }
        let point = self.x.iter().map(|&v| sol.value(v).round()).collect();
        let z = if sol.status == SolveStatus::Optimal { sol.objective } else { sol.bound.unwrap_or(sol.objective) };
        Ok(Some((z, point)))
    }

    pub fn add_cut(&mut self, cut: &Cut) {
        self.cuts += 1;
        cut.install(&mut self.model, format!("cut_{}", self.cuts), self.z, &self.x);
    }
}

/// Single-commodity scheduling problem at a fixed arc choice.
#[derive(Debug, Clone)]
pub struct BcSubproblem {
    pub value: f64,
    pub cut: Option<Cut>,
    /// Flow per arc copy.
    pub flows: BTreeMap<(ArcId, u32), f64>,
    pub integral: bool,
}

struct SpRows {
    model: Model,
    phi: Vec<Option<VarId>>,
    caps: Vec<(ConId, ArcId, f64)>,
    demands: Vec<(ConId, f64)>,
}

/// Builds the flow rows shared by the subproblem and its Pareto variant.
/// With `xi` the capacity and demand rows get the extra `xi` column.
fn sp_rows(teg: &TimeExpandedGraph, cf: bool, point: &[f64], xi: Option<(f64, &[f64])>, kind: VarKind) -> SpRows {
    let g = teg.graph();
    let mut m = Model::new(Sense::Maximize);
    let xi_var = xi.map(|(z_sp, _)| m.continuous("xi", f64::NEG_INFINITY, f64::INFINITY, z_sp));
    let mut phi = vec![None; teg.copies().len()];
    let mut caps = Vec::new();
    for (c, a) in teg.copies().iter().enumerate() {
        let CopyKind::Movement(e) = a.kind else { continue };
        let obj = if g.is_zone(g.arc(e).tail) { 1.0 } else { 0.0 };
        let v = m.add_var(format!("phi_{}_{}", e.0, a.time), kind, 0.0, f64::INFINITY, obj);
        phi[c] = Some(v);
        let u = gated_capacity(teg, e, a.time, cf);
        let row = match (xi, xi_var) {
            (Some((_, core)), Some(xv)) => m.add_con(
                format!("cap_{}_{}", e.0, a.time),
                vec![(v, 1.0), (xv, point[e.0] * u)],
                Cmp::Le,
                core[e.0] * u,
            ),
            _ => m.add_con(format!("cap_{}_{}", e.0, a.time), vec![(v, 1.0)], Cmp::Le, point[e.0] * u),
        };
        caps.push((row, e, u));
    }
    let mut demands = Vec::new();
    for &k in g.zones() {
        let d = g.demand(k) as f64;
        let mut terms: Vec<(VarId, f64)> =
            g.out_arcs(k).iter().flat_map(|&e| teg.movement_copies(e).filter_map(|(_, c)| phi[c])).map(|v| (v, 1.0)).collect();
        if let Some(xv) = xi_var {
            terms.push((xv, d));
        }
        demands.push((m.add_con(format!("demand_{}", k.0), terms, Cmp::Le, d), d));
    }
    for v in 0..teg.num_node_copies() {
        let Some((i, t)) = teg.node_at(v) else { continue };
        if !g.is_transit(i) || !teg.is_alive(v) {
            continue;
        }
        let mut terms: Vec<(VarId, f64)> = teg.inc(v).iter().filter_map(|&c| phi[c]).map(|p| (p, 1.0)).collect();
        terms.extend(teg.out(v).iter().filter_map(|&c| phi[c]).map(|p| (p, -1.0)));
        if !terms.is_empty() {
            m.add_con(format!("flow_{}_{}", i.0, t), terms, Cmp::Eq, 0.0);
        }
    }
    SpRows { model: m, phi, caps, demands }
}

fn cut_from(rows: &SpRows, duals: &crate::mp::Solution) -> Cut {
    let mut cut = Cut::new();
    let mut coef: BTreeMap<usize, f64> = BTreeMap::new();
    for &(row, e, u) in &rows.caps {
        *coef.entry(e.0).or_default() += u * duals.dual(row);
    }
    for (e, a) in coef {
        cut.add(e, a);
    }
    for &(row, d) in &rows.demands {
        cut.constant += d * duals.dual(row);
    }
    cut
}

/// Solves the scheduling problem on the arcs chosen in `point` (indexed by arc).
pub fn bc_subproblem(
    teg: &TimeExpandedGraph,
    contraflow: bool,
    point: &[f64],
    integer: bool,
    opts: &SolveOptions,
) -> Result<BcSubproblem, SolveError> {
    let cf = merged(teg.graph(), contraflow);
    let kind = if integer { VarKind::Integer } else { VarKind::Continuous };
    let rows = sp_rows(teg, cf, point, None, kind);
    let sol = if integer { solve_mip(&rows.model, opts)? } else { solve_lp(&rows.model, opts)? };
    if !sol.status.has_solution() {
        return Err(SolveError::Status { what: "subproblem".into(), status: format!("{:?}", sol.status) });
    }
    let cut = if integer {
        None
    } else if sol.duals.is_some() {
        Some(cut_from(&rows, &sol))
    } else {
        return Err(SolveError::MissingDuals("subproblem".into()));
    };
    let mut flows = BTreeMap::new();
    let mut integral = true;
    for (c, v) in rows.phi.iter().enumerate() {
        let Some(v) = v else { continue };
        let q = sol.value(*v);
        if q.abs() > 1e-7 {
            integral &= (q - q.round()).abs() <= 1e-6;
            if let CopyKind::Movement(e) = teg.copy(c).kind {
                flows.insert((e, teg.copy(c).time), q);
            }
        }
    }
    Ok(BcSubproblem { value: sol.objective, cut, flows, integral })
}

/// Pareto-optimal cut from the Magnanti-Wong dual problem, or `None` when
/// that problem has no optimal solution.
pub fn bc_pareto_cut(
    teg: &TimeExpandedGraph,
    contraflow: bool,
    point: &[f64],
    z_sp: f64,
    core: &[f64],
    opts: &SolveOptions,
) -> Result<Option<Cut>, SolveError> {
    let cf = merged(teg.graph(), contraflow);
    let rows = sp_rows(teg, cf, point, Some((z_sp, core)), VarKind::Continuous);
    let sol = solve_lp(&rows.model, opts)?;
    if sol.status != SolveStatus::Optimal || sol.duals.is_none() {
        return Ok(None);
    }
    Ok(Some(cut_from(&rows, &sol)))
}

struct Bc<'a> {
    teg: &'a TimeExpandedGraph,
    contraflow: bool,
    pareto: bool,
    core: Vec<f64>,
    master: BcMaster,
}

impl Decomposition for Bc<'_> {
    fn solve_master(&mut self, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
        self.master.solve(opts)
    }

    fn solve_sub(&self, point: &[f64], opts: &SolveOptions) -> Result<(f64, Cut), SolveError> {
        let sp = bc_subproblem(self.teg, self.contraflow, point, false, opts)?;
        let mut cut = sp.cut.unwrap();
        if self.pareto {
            match bc_pareto_cut(self.teg, self.contraflow, point, sp.value, &self.core, opts)? {
                Some(c) if (c.eval(point) - sp.value).abs() <= 1e-6 * sp.value.abs().max(1.0) => cut = c,
                _ => warn!("pareto cut unavailable; using the subproblem cut"),
            }
        }
        Ok((sp.value, cut))
    }

    fn add_cut(&mut self, cut: &Cut) {
        self.master.add_cut(cut);
    }
}

/// Splits single-commodity flows on a convergent forest into per-zone flows.
fn split_by_zone(teg: &TimeExpandedGraph, flows: &BTreeMap<(ArcId, u32), f64>) -> Vec<ZoneFlow> {
    let g = teg.graph();
    // Node copies in time order; every copy's outflow mixes its inflow.
    let mut at_node: HashMap<(NodeId, u32), BTreeMap<NodeId, f64>> = HashMap::new();
    let mut by_time: Vec<(u32, ArcId, f64)> = flows.iter().map(|(&(e, t), &q)| (t, e, q)).collect();
    by_time.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out_total: HashMap<(NodeId, u32), f64> = HashMap::new();
    for &(t, e, q) in &by_time {
        *out_total.entry((g.arc(e).tail, t)).or_default() += q;
    }
    let mut result = Vec::new();
    for (t, e, q) in by_time {
        let a = g.arc(e);
        let mix: BTreeMap<NodeId, f64> = if g.is_zone(a.tail) {
            [(a.tail, q)].into_iter().collect()
        } else {
            let inflow = at_node.get(&(a.tail, t)).cloned().unwrap_or_default();
            let total = out_total[&(a.tail, t)];
            inflow.into_iter().map(|(k, v)| (k, v * q / total)).collect()
        };
        let head = at_node.entry((a.head, t + a.travel)).or_default();
        for (&k, &v) in &mix {
            *head.entry(k).or_default() += v;
            if v > 1e-9 {
                result.push(ZoneFlow { zone: k, arc: e, time: t, amount: v });
            }
        }
    }
    result
}

pub fn bc_run(teg: &TimeExpandedGraph, contraflow: bool, pareto: bool, run: &RunConfig) -> Result<BendersRun, SolveError> {
    let budget = Budget::new(run.time_limit);
    let g = teg.graph();
    let bad = teg.infeasible_zones();
    if !bad.is_empty() {
        return Err(SolveError::InfeasibleZones(bad));
    }
    let horizon = teg.horizon();
    let tstar = find_tstar(horizon, &budget, |t| {
        let teg = TimeExpandedGraph::new(g, t)?;
        BcMaster::new(&teg, contraflow).solve(&run.backend.with_time_limit(budget.remaining()))
    })?;
    info!("benders-conv: t* = {}", tstar.steps);
    let mut bc = Bc { teg, contraflow, pareto, core: bc_core_point(g), master: BcMaster::new(teg, contraflow) };
    let lr = benders_loop(&mut bc, (tstar.value, tstar.point.clone()), &budget, run)?;

    let mut notes = lr.notes;
    let opts = run.backend.with_time_limit(budget.remaining());
    let mut fin = bc_subproblem(teg, contraflow, &lr.best_point, false, &opts)?;
    if !fin.integral {
        notes.push("relaxed schedule was fractional; solved it with integer flows".into());
        fin = bc_subproblem(teg, contraflow, &lr.best_point, true, &opts)?;
    }
    let chosen: HashMap<NodeId, ArcId> = g
        .arcs()
        .iter()
        .filter(|a| lr.best_point[a.id.0] > 0.5)
        .map(|a| (a.tail, a.id))
        .collect();
    let paths = complete_forest(g, &chosen);
    let mut reversed = Vec::new();
    if merged(g, contraflow) {
        for (&(e, _), &q) in &fin.flows {
            if q > g.arc(e).capacity as f64 + 1e-6 {
                let r = g.reverse(e).expect("only paired arcs exceed their own capacity");
                if !reversed.contains(&r) {
                    reversed.push(r);
                }
            }
        }
        reversed.sort();
    }
    let flows = split_by_zone(teg, &fin.flows);
    let plan = EvacuationPlan { horizon, paths, reversed, schedule: Schedule::Preemptive { flows } };

    let mut report = SolveReport::new(Method::BendersConv, horizon, contraflow, g.total_demand());
    report.outcome = lr.outcome;
    report.set_evacuated(fin.value);
    report.upper_bound = Some(lr.z_rmp);
    report.lp_objective = Some(lr.z_sp_max);
    report.gap = Some((lr.z_rmp - lr.z_sp_max).max(0.0) / lr.z_sp_max.max(1.0));
    report.iterations = lr.trace.len();
    if report.outcome == Outcome::TimeLimit {
        notes.push("time limit reached; returning best paths found".into());
    }
    report.notes = notes;
    report.trace = Trace::Benders(lr.trace);
    report.wall_seconds = budget.elapsed().as_secs_f64();
    Ok(BendersRun { solved: Solved { plan, report }, cuts: lr.cuts, tstar: tstar.steps })
}

pub fn bc_solve(teg: &TimeExpandedGraph, contraflow: bool, pareto: bool, run: &RunConfig) -> Result<Solved, SolveError> {
    bc_run(teg, contraflow, pareto, run).map(|r| r.solved)
}

