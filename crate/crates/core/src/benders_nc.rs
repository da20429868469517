//! Benders decomposition without convergence: path design on the static
//! graph, multi-commodity scheduling on the time-expanded graph.

use log::info;

use crate::benders::{benders_loop, find_tstar, Cut, CutRecord, Decomposition, TStar};
use crate::budget::Budget;
use crate::error::SolveError;
use crate::mp::{solve_lp, solve_mip, Cmp, Model, Sense, SolveOptions, SolveStatus, VarId, VarKind};
use crate::network::{
    fastest_path, ArcId, CopyKind, EvacuationPlan, Schedule, StaticGraph, TimeExpandedGraph, ZoneFlow,
};
use crate::report::{Method, Outcome, RunConfig, SolveReport, Solved, Trace};
use crate::zepp_mip::{gated_capacity, walk_choice};

/// Position of first-stage variables in a point: `x[zone][arc]` then `y[arc]`.
#[derive(Debug, Clone, Copy)]
pub struct BnLayout {
    pub zones: usize,
    pub arcs: usize,
}

impl BnLayout {
    pub fn new(g: &StaticGraph) -> Self {
        BnLayout { zones: g.zones().len(), arcs: g.num_arcs() }
    }

    pub fn x(&self, zone: usize, arc: ArcId) -> usize {
        zone * self.arcs + arc.0
    }

    pub fn y(&self, arc: ArcId) -> usize {
        self.zones * self.arcs + arc.0
    }

    pub fn len(&self) -> usize {
        (self.zones + 1) * self.arcs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A point with every lane in its normal direction and no arc chosen.
    pub fn empty_point(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        for v in &mut p[self.zones * self.arcs..] {
            *v = 1.0;
        }
        p
    }
}

fn contraflow_active(g: &StaticGraph, contraflow: bool) -> bool {
    contraflow && !g.pairs().is_empty()
}

/// Path-design master over aggregated capacities of `teg`'s horizon.
pub struct BnMaster {
    pub model: Model,
    layout: BnLayout,
    /// Variable per point index; unused slots hold the objective variable.
    vars: Vec<VarId>,
    z: VarId,
    cuts: usize,
}

impl BnMaster {
    pub fn new(teg: &TimeExpandedGraph, contraflow: bool) -> Self {
        let g = teg.graph();
        let cf = contraflow_active(g, contraflow);
        let layout = BnLayout::new(g);
        let mut m = Model::new(Sense::Maximize);
        let z = m.continuous("z_rmp", 0.0, f64::INFINITY, 1.0);
        let mut vars = vec![z; layout.len()];
        let agg = |e: ArcId, merged: bool| -> f64 {
            teg.movement_copies(e).map(|(t, _)| gated_capacity(teg, e, t, merged)).sum()
        };
        let plain: Vec<f64> = g.arcs().iter().map(|a| agg(a.id, false)).collect();
        let merged: Vec<f64> = g.arcs().iter().map(|a| agg(a.id, cf)).collect();

        let y: Vec<Option<VarId>> = g
            .arcs()
            .iter()
            .map(|a| (cf && g.is_contraflow(a.id)).then(|| m.binary(format!("y_{}", a.id.0), 0.0)))
            .collect();
        for (e, v) in y.iter().enumerate() {
            if let Some(v) = v {
                vars[layout.y(ArcId(e))] = *v;
            }
        }
        for p in g.pairs().iter().filter(|_| cf) {
            let terms = vec![(y[p.forward.0].unwrap(), 1.0), (y[p.backward.0].unwrap(), 1.0)];
            m.add_con(format!("pair_{}", p.forward.0), terms, Cmp::Ge, 1.0);
        }

        let mut exits = vec![(z, 1.0)];
        let mut load: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); g.num_arcs()];
        for (zi, &k) in g.zones().iter().enumerate() {
            let mut psi = vec![None; g.num_arcs()];
            for a in g.arcs() {
                let foreign = g.is_zone(a.tail) && a.tail != k;
                let x = m.add_var(format!("x_{}_{}", a.id.0, k.0), VarKind::Binary, 0.0, if foreign { 0.0 } else { 1.0 }, 0.0);
                vars[layout.x(zi, a.id)] = x;
                if foreign {
                    continue;
                }
                let p = m.continuous(format!("psi_{}_{}", a.id.0, k.0), 0.0, f64::INFINITY, 0.0);
                psi[a.id.0] = Some(p);
                load[a.id.0].push((p, 1.0));
                m.add_con(format!("gate_{}_{}", a.id.0, k.0), vec![(p, 1.0), (x, -merged[a.id.0])], Cmp::Le, 0.0);
            }
            let out: Vec<(VarId, f64)> = g.out_arcs(k).iter().map(|e| (psi[e.0].unwrap(), 1.0)).collect();
            exits.extend(out.iter().map(|&(p, _)| (p, -1.0)));
            m.add_con(format!("demand_{}", k.0), out, Cmp::Le, g.demand(k) as f64);
            let xs: Vec<(VarId, f64)> = g.out_arcs(k).iter().map(|e| (vars[layout.x(zi, *e)], 1.0)).collect();
            m.add_con(format!("one_path_{}", k.0), xs, Cmp::Eq, 1.0);
            for node in g.nodes().iter().filter(|n| g.is_transit(n.id)) {
                let i = node.id;
                let xs = g.out_arcs(i).iter().map(|e| (vars[layout.x(zi, *e)], 1.0)).collect();
                m.add_con(format!("outdeg_{}_{}", i.0, k.0), xs, Cmp::Le, 1.0);
                let mut terms: Vec<(VarId, f64)> = g.in_arcs(i).iter().filter_map(|e| psi[e.0]).map(|p| (p, 1.0)).collect();
                terms.extend(g.out_arcs(i).iter().filter_map(|e| psi[e.0]).map(|p| (p, -1.0)));
                m.add_con(format!("cons_{}_{}", i.0, k.0), terms, Cmp::Eq, 0.0);
            }
        }
        m.add_con("objective", exits, Cmp::Le, 0.0);
        for a in g.arcs() {
            let mut terms = std::mem::take(&mut load[a.id.0]);
            match (y[a.id.0], g.reverse(a.id)) {
                (Some(ye), Some(r)) => {
                    let ur = merged[a.id.0] - plain[a.id.0];
                    terms.push((ye, -plain[a.id.0]));
                    terms.push((y[r.0].unwrap(), ur));
                    m.add_con(format!("cap_{}", a.id.0), terms, Cmp::Le, ur);
                }
                _ => {
                    m.add_con(format!("cap_{}", a.id.0), terms, Cmp::Le, plain[a.id.0]);
                }
            }
        }
        BnMaster { model: m, layout, vars, z, cuts: 0 }
    }

    pub fn layout(&self) -> BnLayout {
        self.layout
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
        let sol = solve_mip(&self.model, opts)?;
        match sol.status {
            SolveStatus::Optimal | SolveStatus::TimeLimitFeasible => {}
            SolveStatus::TimeLimitNoSolution => return Ok(None),
            s => return Err(SolveError::Status { what: "master".into(), status: format!("{s:?}") }),
        }
        let mut point = self.layout.empty_point();
        for (i, v) in self.vars.iter().enumerate() {
            if *v != self.z {
                point[i] = sol.value(*v).round();
            }
        }
        let z = if sol.status == SolveStatus::Optimal { sol.objective } else { sol.bound.unwrap_or(sol.objective) };
        Ok(Some((z, point)))
    }

    pub fn add_cut(&mut self, cut: &Cut) {
        self.cuts += 1;
        cut.install(&mut self.model, format!("cut_{}", self.cuts), self.z, &self.vars);
    }
}

/// Scheduling subproblem solution at a fixed first-stage point.
#[derive(Debug, Clone)]
pub struct BnSubproblem {
    pub value: f64,
    /// Absent when flows were forced integral.
    pub cut: Option<Cut>,
    pub flows: Vec<ZoneFlow>,
}

/// Solves the scheduling problem along the arcs chosen in `point`.
pub fn bn_subproblem(
    teg: &TimeExpandedGraph,
    contraflow: bool,
    point: &[f64],
    integer: bool,
    opts: &SolveOptions,
) -> Result<BnSubproblem, SolveError> {
    let g = teg.graph();
    let cf = contraflow_active(g, contraflow);
    let layout = BnLayout::new(g);
    let kind = if integer { VarKind::Integer } else { VarKind::Continuous };
    let mut m = Model::new(Sense::Maximize);
    let nc = teg.copies().len();
    let mut cut = Cut::new();
    let mut gates = Vec::new();
    let mut demands = Vec::new();
    let mut phis = Vec::new();
    let mut load: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); nc];
    for (zi, &k) in g.zones().iter().enumerate() {
        let mut phi = vec![None; nc];
        for (c, a) in teg.copies().iter().enumerate() {
            let CopyKind::Movement(e) = a.kind else { continue };
            let tail = g.arc(e).tail;
            if g.is_zone(tail) && tail != k {
                continue;
            }
            let obj = if tail == k { 1.0 } else { 0.0 };
            let v = m.add_var(format!("phi_{}_{}_{}", e.0, a.time, k.0), kind, 0.0, f64::INFINITY, obj);
            phi[c] = Some(v);
            load[c].push((v, 1.0));
            let u = gated_capacity(teg, e, a.time, cf);
            let row = m.add_con(format!("gate_{}_{}_{}", e.0, a.time, k.0), vec![(v, 1.0)], Cmp::Le, u * point[layout.x(zi, e)]);
            gates.push((row, layout.x(zi, e), u));
        }
        let out: Vec<(VarId, f64)> = g
            .out_arcs(k)
            .iter()
            .flat_map(|&e| teg.movement_copies(e).filter_map(|(_, c)| phi[c]).map(|v| (v, 1.0)))
            .collect();
        let d = g.demand(k) as f64;
        demands.push((m.add_con(format!("demand_{}", k.0), out, Cmp::Le, d), d));
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
        phis.push(phi);
    }
    let mut caps = Vec::new();
    for (c, a) in teg.copies().iter().enumerate() {
        let CopyKind::Movement(e) = a.kind else { continue };
        let u = g.arc(e).capacity as f64;
        let terms = std::mem::take(&mut load[c]);
        match g.reverse(e).filter(|_| cf) {
            Some(r) => {
                let ur = teg.reverse_capacity(e, a.time) as f64;
                let rhs = point[layout.y(e)] * u + (1.0 - point[layout.y(r)]) * ur;
                let row = m.add_con(format!("cap_{}_{}", e.0, a.time), terms, Cmp::Le, rhs);
                caps.push((row, u, Some((e, r, ur))));
            }
            None => {
                let row = m.add_con(format!("cap_{}_{}", e.0, a.time), terms, Cmp::Le, u);
                caps.push((row, u, None));
            }
        }
    }

    let sol = if integer { solve_mip(&m, opts)? } else { solve_lp(&m, opts)? };
    if !sol.status.has_solution() {
        return Err(SolveError::Status { what: "subproblem".into(), status: format!("{:?}", sol.status) });
    }
    let cut = if integer {
        None
    } else {
        if sol.duals.is_none() {
            return Err(SolveError::MissingDuals("subproblem".into()));
        }
        for &(row, d) in &demands {
            cut.constant += d * sol.dual(row);
        }
        for &(row, idx, u) in &gates {
            cut.add(idx, u * sol.dual(row));
        }
        for &(row, u, pair) in &caps {
            let pi = sol.dual(row);
            match pair {
                Some((e, r, ur)) => {
                    cut.constant += ur * pi;
                    cut.add(layout.y(e), u * pi);
                    cut.add(layout.y(r), -ur * pi);
                }
                None => cut.constant += u * pi,
            }
        }
        Some(cut)
    };
    let mut flows = Vec::new();
    for (zi, &k) in g.zones().iter().enumerate() {
        for (c, v) in phis[zi].iter().enumerate() {
            let Some(v) = v else { continue };
            let q = sol.value(*v);
            if q > 1e-7 {
                let a = teg.copy(c);
                if let CopyKind::Movement(e) = a.kind {
                    flows.push(ZoneFlow { zone: k, arc: e, time: a.time, amount: q });
                }
            }
        }
    }
    Ok(BnSubproblem { value: sol.objective, cut, flows })
}

struct Bn<'a> {
    teg: &'a TimeExpandedGraph,
    contraflow: bool,
    master: BnMaster,
}

impl Decomposition for Bn<'_> {
    fn solve_master(&mut self, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
        self.master.solve(opts)
    }

    fn solve_sub(&self, point: &[f64], opts: &SolveOptions) -> Result<(f64, Cut), SolveError> {
        let sp = bn_subproblem(self.teg, self.contraflow, point, false, opts)?;
        Ok((sp.value, sp.cut.unwrap()))
    }

    fn add_cut(&mut self, cut: &Cut) {
        self.master.add_cut(cut);
    }
}

/// Tightest horizon whose master value matches the full horizon.
pub fn bn_find_tstar(g: &StaticGraph, horizon: u32, contraflow: bool, run: &RunConfig) -> Result<TStar, SolveError> {
    tstar_within(g, horizon, contraflow, run, &Budget::new(run.time_limit))
}

fn tstar_within(g: &StaticGraph, horizon: u32, contraflow: bool, run: &RunConfig, budget: &Budget) -> Result<TStar, SolveError> {
    find_tstar(horizon, budget, |t| {
        let teg = TimeExpandedGraph::new(g, t)?;
        BnMaster::new(&teg, contraflow).solve(&run.backend.with_time_limit(budget.remaining()))
    })
}

/// A full run with the cuts it generated.
#[derive(Debug, Clone)]
pub struct BendersRun {
    pub solved: Solved,
    pub cuts: Vec<CutRecord>,
    pub tstar: u32,
}

pub fn bn_run(teg: &TimeExpandedGraph, contraflow: bool, run: &RunConfig) -> Result<BendersRun, SolveError> {
    let budget = Budget::new(run.time_limit);
    let g = teg.graph();
    let bad = teg.infeasible_zones();
    if !bad.is_empty() {
        return Err(SolveError::InfeasibleZones(bad));
    }
    let horizon = teg.horizon();
    let tstar = tstar_within(g, horizon, contraflow, run, &budget)?;
    info!("benders-nc: t* = {} (master value {})", tstar.steps, tstar.value);
    let mut bn = Bn { teg, contraflow, master: BnMaster::new(teg, contraflow) };
    let lr = benders_loop(&mut bn, (tstar.value, tstar.point.clone()), &budget, run)?;

    let fin = bn_subproblem(teg, contraflow, &lr.best_point, true, &run.backend.with_time_limit(budget.remaining()))?;
    let layout = bn.master.layout();
    let mut paths = Vec::new();
    for (zi, &k) in g.zones().iter().enumerate() {
        let walked = walk_choice(g, k, |i| g.out_arcs(i).iter().copied().find(|&e| lr.best_point[layout.x(zi, e)] > 0.5));
        let path = match walked {
            Some(p) => p,
            None => fastest_path(g, k).expect("zones reach safety"),
        };
        paths.push(path);
    }
    let reversed = if contraflow_active(g, contraflow) {
        g.arcs().iter().filter(|a| g.is_contraflow(a.id) && lr.best_point[layout.y(a.id)] < 0.5).map(|a| a.id).collect()
    } else {
        Vec::new()
    };
    let plan = EvacuationPlan { horizon, paths, reversed, schedule: Schedule::Preemptive { flows: fin.flows } };

    let mut report = SolveReport::new(Method::BendersNc, horizon, contraflow, g.total_demand());
    report.outcome = lr.outcome;
    report.set_evacuated(fin.value);
    report.upper_bound = Some(lr.z_rmp);
    report.lp_objective = Some(lr.z_sp_max);
    report.gap = Some((lr.z_rmp - lr.z_sp_max).max(0.0) / lr.z_sp_max.max(1.0));
    report.iterations = lr.trace.len();
    report.notes = lr.notes;
    if tstar.truncated {
        report.notes.push("horizon search stopped early on the time limit".into());
    }
    if fin.value < lr.z_sp_max - 1e-6 {
        report.notes.push(format!("integer schedule {} below relaxed schedule {}", fin.value, lr.z_sp_max));
    }
    if report.outcome == Outcome::TimeLimit {
        report.notes.push("time limit reached; returning best paths found".into());
    }
    report.trace = Trace::Benders(lr.trace);
    report.wall_seconds = budget.elapsed().as_secs_f64();
    Ok(BendersRun { solved: Solved { plan, report }, cuts: lr.cuts, tstar: tstar.steps })
}

pub fn bn_solve(teg: &TimeExpandedGraph, contraflow: bool, run: &RunConfig) -> Result<Solved, SolveError> {
    bn_run(teg, contraflow, run).map(|r| r.solved)
}
