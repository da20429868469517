//! Column generation over time-response plans for non-preemptive schedules.

mod pricing;

pub use pricing::{cg_price, cg_price_elementary, Branch, Priced};

use std::collections::HashSet;

use log::info;
use rayon::prelude::*;

use crate::budget::Budget;
use crate::error::{ModelError, SolveError};
use crate::mp::{solve_lp, solve_mip, Cmp, ConId, Model, Sense, SolveOptions, SolveStatus, VarId, VarKind};
use crate::network::{
    induced_flows, ArcId, EvacuationPlan, NodeId, ResponseCurve, Schedule, StaticGraph, TimeExpandedGraph,
    TimeResponsePlan, ZoneResponse,
};
use crate::report::{ColGenIter, Method, Outcome, RunConfig, SolveReport, Solved, Trace};

/// Reduced costs at or above this are not worth a column.
pub const REDUCED_COST_TOL: f64 = 1e-6;

/// Arrival-time weights and the shortfall penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgCosts {
    pub horizon: u32,
    /// Penalty per stranded vehicle.
    pub cbar: f64,
}

impl CgCosts {
    pub fn new(teg: &TimeExpandedGraph) -> Self {
        let g = teg.graph();
        let h = teg.horizon();
        let mut max_c: f64 = 0.0;
        for a in g.arcs().iter().filter(|a| g.is_safe(a.head)) {
            for t in 0..h {
                if teg.in_horizon(a.id, t) {
                    max_c = max_c.max((t + a.travel) as f64 / h as f64);
                }
            }
        }
        if max_c == 0.0 {
            max_c = 1.0 / h as f64;
        }
        let max_d = g.zones().iter().map(|&k| g.demand(k)).max().unwrap_or(0) as f64;
        CgCosts { horizon: h, cbar: 100.0 * max_c * max_d }
    }

    /// Cost per vehicle entering `e` at `t`: the arrival step over the horizon
    /// when `e` enters safety.
    pub fn arc(&self, g: &StaticGraph, e: ArcId, t: u32) -> f64 {
        let a = g.arc(e);
        if g.is_safe(a.head) {
            (t + a.travel) as f64 / self.horizon as f64
        } else {
            0.0
        }
    }
}

/// Duals of the zone-selection rows and the per-copy capacity rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    horizon: u32,
    pub zone: Vec<f64>,
    pub cap: Vec<f64>,
}

impl Duals {
    pub fn zero(g: &StaticGraph, horizon: u32) -> Self {
        Duals { horizon, zone: vec![0.0; g.zones().len()], cap: vec![0.0; g.num_arcs() * horizon as usize] }
    }

    pub fn cap(&self, e: ArcId, t: u32) -> f64 {
        self.cap[e.0 * self.horizon as usize + t as usize]
    }

    pub fn set_cap(&mut self, e: ArcId, t: u32, v: f64) {
        self.cap[e.0 * self.horizon as usize + t as usize] = v;
    }

    pub fn zone(&self, g: &StaticGraph, k: NodeId) -> f64 {
        self.zone[g.zone_index(k).expect("evacuation node")]
    }
}

/// A pool column: a plan, or the empty plan that strands the whole zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub zone: NodeId,
    pub plan: Option<TimeResponsePlan>,
    /// Vehicles entering each arc copy.
    pub load: Vec<((ArcId, u32), u64)>,
    pub cost: f64,
    pub arrived: u64,
    pub shortfall: u64,
    pub last_arrival: Option<u32>,
}

/// Cost of a plan and, given duals, its reduced cost.
pub fn cg_plan_cost(
    teg: &TimeExpandedGraph,
    costs: &CgCosts,
    plan: &TimeResponsePlan,
    duals: Option<&Duals>,
) -> Result<(Column, Option<f64>), ModelError> {
    let g = teg.graph();
    let f = induced_flows(plan, teg)?;
    let mut cost = costs.cbar * f.shortfall as f64;
    let mut reduced = cost;
    for (&(e, t), &q) in &f.flows {
        cost += costs.arc(g, e, t) * q as f64;
        reduced += (costs.arc(g, e, t) - duals.map_or(0.0, |d| d.cap(e, t))) * q as f64;
    }
    let reduced = duals.map(|d| reduced - d.zone(g, plan.zone));
    let col = Column {
        zone: plan.zone,
        plan: Some(plan.clone()),
        load: f.flows.into_iter().collect(),
        cost,
        arrived: f.arrived,
        shortfall: f.shortfall,
        last_arrival: f.last_arrival,
    };
    Ok((col, reduced))
}

/// Columns with a dedup set keyed on zone, path, curve and start.
#[derive(Debug, Clone, Default)]
pub struct PlanPool {
    columns: Vec<Column>,
    seen: HashSet<TimeResponsePlan>,
}

impl PlanPool {
    pub fn insert(&mut self, c: Column) -> bool {
        if let Some(p) = &c.plan {
            if !self.seen.insert(p.clone()) {
                return false;
            }
        }
        self.columns.push(c);
        true
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn contains(&self, p: &TimeResponsePlan) -> bool {
        self.seen.contains(p)
    }
}

/// Column generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CgParams {
    pub curves: Vec<ResponseCurve>,
    pub elementary: bool,
    /// Enumeration depth before the elementary search falls back to the MIP.
    pub k_threshold: usize,
}

impl Default for CgParams {
    fn default() -> Self {
        CgParams {
            curves: [2, 6, 10, 25, 50].into_iter().map(|r| ResponseCurve::Step { rate: r }).collect(),
            elementary: false,
            k_threshold: 100_000,
        }
    }
}

/// Empty column for zone `k`.
fn null_column(g: &StaticGraph, costs: &CgCosts, k: NodeId) -> Column {
    let d = g.demand(k);
    Column { zone: k, plan: None, load: Vec::new(), cost: costs.cbar * d as f64, arrived: 0, shortfall: d, last_arrival: None }
}

/// Earliest admissible plan on the fastest path at the fastest curve the
/// path can carry on its own, or the slowest curve when none fits.
fn seed_column(teg: &TimeExpandedGraph, costs: &CgCosts, k: NodeId, curves: &[ResponseCurve]) -> Option<Column> {
    let g = teg.graph();
    let path = crate::network::fastest_path(g, k)?;
    let cap = path.capacity(g);
    let curve = curves
        .iter()
        .filter(|c| c.rate() <= cap)
        .max_by_key(|c| c.rate())
        .or_else(|| curves.iter().min_by_key(|c| c.rate()))
        .copied()?;
    path.usable_departures(teg).into_iter().find_map(|start| {
        let plan = TimeResponsePlan { zone: k, path: path.clone(), curve, start };
        cg_plan_cost(teg, costs, &plan, None).ok().map(|(c, _)| c)
    })
}

struct Master {
    model: Model,
    x: Vec<VarId>,
    y: Vec<Option<VarId>>,
    one: Vec<ConId>,
    cap: Vec<(ArcId, u32, ConId)>,
}

fn build_master(teg: &TimeExpandedGraph, pool: &PlanPool, contraflow: bool, integer: bool) -> Master {
    let g = teg.graph();
    let cf = contraflow && !g.pairs().is_empty();
    let h = teg.horizon();
    let mut m = Model::new(Sense::Minimize);
    let kind = if integer { VarKind::Binary } else { VarKind::Continuous };
    let x: Vec<VarId> = pool.columns().iter().enumerate().map(|(i, c)| m.add_var(format!("x_{i}"), kind, 0.0, 1.0, c.cost)).collect();
    let y: Vec<Option<VarId>> = g
        .arcs()
        .iter()
        .map(|a| (cf && g.is_contraflow(a.id)).then(|| m.add_var(format!("y_{}", a.id.0), kind, 0.0, 1.0, 0.0)))
        .collect();
    let mut one = Vec::new();
    for &k in g.zones() {
        let terms = pool.columns().iter().zip(&x).filter(|(c, _)| c.zone == k).map(|(_, &v)| (v, 1.0)).collect();
        one.push(m.add_con(format!("one_{}", k.0), terms, Cmp::Eq, 1.0));
    }
    let mut load: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); g.num_arcs() * h as usize];
    for (c, &v) in pool.columns().iter().zip(&x) {
        for &((e, t), q) in &c.load {
            load[e.0 * h as usize + t as usize].push((v, q as f64));
        }
    }
    let mut cap = Vec::new();
    for a in g.arcs() {
        for t in 0..h {
            if !teg.in_horizon(a.id, t) {
                continue;
            }
            let mut terms = std::mem::take(&mut load[a.id.0 * h as usize + t as usize]);
            let u = a.capacity as f64;
            let id = match (y[a.id.0], g.reverse(a.id)) {
                (Some(ye), Some(r)) => {
                    let ur = teg.reverse_capacity(a.id, t) as f64;
                    terms.push((ye, -u));
                    terms.push((y[r.0].unwrap(), ur));
                    m.add_con(format!("cap_{}_{t}", a.id.0), terms, Cmp::Le, ur)
                }
                _ => m.add_con(format!("cap_{}_{t}", a.id.0), terms, Cmp::Le, u),
            };
            cap.push((a.id, t, id));
        }
    }
    for p in g.pairs().iter().filter(|_| cf) {
        let terms = vec![(y[p.forward.0].unwrap(), 1.0), (y[p.backward.0].unwrap(), 1.0)];
        m.add_con(format!("pair_{}", p.forward.0), terms, Cmp::Ge, 1.0);
    }
    Master { model: m, x, y, one, cap }
}

/// Prices every zone and curve, returning the improving columns.
fn price_all(
    teg: &TimeExpandedGraph,
    costs: &CgCosts,
    duals: &Duals,
    params: &CgParams,
    opts: &SolveOptions,
) -> Result<Vec<Column>, SolveError> {
    let g = teg.graph();
    let tasks: Vec<(NodeId, ResponseCurve)> =
        g.zones().iter().flat_map(|&k| params.curves.iter().map(move |&c| (k, c))).collect();
    let found: Vec<Option<Priced>> = tasks
        .par_iter()
        .map(|&(k, c)| {
            if params.elementary {
                cg_price_elementary(teg, costs, duals, k, c, params.k_threshold, false, opts)
            } else {
                Ok(cg_price(teg, costs, duals, k, c))
            }
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for p in found.into_iter().flatten() {
        if p.reduced < -REDUCED_COST_TOL {
            let (col, _) = cg_plan_cost(teg, costs, &p.plan, Some(duals)).map_err(SolveError::Model)?;
            out.push(col);
        }
    }
    Ok(out)
}

/// Result of the pricing loop before the integer solve.
#[derive(Debug, Clone)]
pub struct CgRun {
    pub pool: PlanPool,
    pub lp: f64,
    pub trace: Vec<ColGenIter>,
    pub outcome: Outcome,
}

/// Solves the relaxed master and prices until no improving column is left.
pub fn cg_generate(teg: &TimeExpandedGraph, contraflow: bool, params: &CgParams, run: &RunConfig, budget: &Budget) -> Result<CgRun, SolveError> {
    assert!(!params.curves.is_empty(), "at least one response curve");
    let g = teg.graph();
    let costs = CgCosts::new(teg);
    let mut pool = PlanPool::default();
    for &k in g.zones() {
        pool.insert(null_column(g, &costs, k));
        if let Some(c) = seed_column(teg, &costs, k, &params.curves) {
            pool.insert(c);
        }
    }
    let mut trace = Vec::new();
    let mut iter = 1;
    loop {
        let mm = build_master(teg, &pool, contraflow, false);
        let sol = solve_lp(&mm.model, &run.backend.with_time_limit(budget.remaining()))?;
        if sol.status != SolveStatus::Optimal {
            return Err(SolveError::Status { what: "plan master".into(), status: format!("{:?}", sol.status) });
        }
        if sol.duals.is_none() {
            return Err(SolveError::MissingDuals("plan master".into()));
        }
        let mut duals = Duals::zero(g, teg.horizon());
        for (zi, &c) in mm.one.iter().enumerate() {
            duals.zone[zi] = sol.dual(c);
        }
        for &(e, t, c) in &mm.cap {
            duals.set_cap(e, t, sol.dual(c));
        }
        let lp = sol.objective;
        let cols = price_all(teg, &costs, &duals, params, &run.backend)?;
        let mut added = 0;
        for c in cols {
            if pool.insert(c) {
                added += 1;
            }
        }
        trace.push(ColGenIter { iter, added, lp, wall: budget.elapsed().as_secs_f64() });
        info!("colgen iter {iter}: lp {lp:.4} added {added} pool {}", pool.len());
        let outcome = if added == 0 {
            Some(Outcome::Converged)
        } else if budget.expired() {
            Some(Outcome::TimeLimit)
        } else if iter >= run.max_iterations {
            Some(Outcome::IterationCap)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            return Ok(CgRun { pool, lp, trace, outcome });
        }
        iter += 1;
    }
}

/// Column generation followed by the integer master over the final pool.
pub fn cg_solve(teg: &TimeExpandedGraph, contraflow: bool, params: &CgParams, run: &RunConfig) -> Result<Solved, SolveError> {
    let budget = Budget::new(run.time_limit);
    let g = teg.graph();
    let cg = cg_generate(teg, contraflow, params, run, &budget)?;
    let mm = build_master(teg, &cg.pool, contraflow, true);
    let sol = solve_mip(&mm.model, &run.backend.with_time_limit(budget.remaining()))?;
    if !sol.status.has_solution() {
        return Err(SolveError::Status { what: "integer plan master".into(), status: format!("{:?}", sol.status) });
    }
    let chosen: Vec<&Column> = cg.pool.columns().iter().zip(&mm.x).filter(|(_, &v)| sol.value(v) > 0.5).map(|(c, _)| c).collect();
    let mut paths = Vec::new();
    let mut responses = Vec::new();
    let mut evacuated = 0;
    for c in &chosen {
        evacuated += c.arrived;
        match &c.plan {
            Some(p) => {
                paths.push(p.path.clone());
                responses.push(ZoneResponse { zone: p.zone, curve: p.curve, start: p.start });
            }
            None => paths.extend(crate::network::fastest_path(g, c.zone)),
        }
    }
    let reversed = mm
        .y
        .iter()
        .enumerate()
        .filter_map(|(e, y)| y.filter(|&y| sol.value(y) < 0.5).map(|_| ArcId(e)))
        .collect();
    let plan = EvacuationPlan { horizon: teg.horizon(), paths, reversed, schedule: Schedule::NonPreemptive { responses } };
    let mut report = SolveReport::new(Method::ColGen, teg.horizon(), contraflow, g.total_demand());
    report.outcome = if sol.status == SolveStatus::Optimal { cg.outcome } else { Outcome::TimeLimit };
    report.set_evacuated(evacuated as f64);
    report.lp_objective = Some(cg.lp);
    report.gap = Some(if sol.objective.abs() > 1e-12 { (sol.objective - cg.lp) / sol.objective } else { 0.0 });
    let stranded: Vec<String> = chosen.iter().filter(|c| c.plan.is_none()).map(|c| c.zone.0.to_string()).collect();
    if !stranded.is_empty() {
        report.notes.push(format!("zones without a plan: {}", stranded.join(",")));
    }
    report.iterations = cg.trace.len();
    report.trace = Trace::ColGen(cg.trace);
    report.wall_seconds = budget.elapsed().as_secs_f64();
    Ok(Solved { plan, report })
}
