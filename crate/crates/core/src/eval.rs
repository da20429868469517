//! Independent replay and validation of evacuation plans.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::error::SolveError;
use crate::network::{ArcId, EvacuationPlan, NodeId, Schedule, StaticGraph};
use crate::report::{pct, Solved};

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingPath { zone: NodeId },
    DuplicatePath { zone: NodeId },
    BadPath { zone: NodeId, reason: String },
    OffPath { zone: NodeId, arc: ArcId, time: u32 },
    NegativeFlow { zone: NodeId, arc: ArcId, time: u32 },
    Continuity { zone: NodeId, node: NodeId, time: u32, imbalance: f64 },
    Demand { zone: NodeId, departed: f64, demand: u64 },
    Capacity { arc: ArcId, time: u32, load: f64, capacity: f64 },
    Horizon { arc: ArcId, time: u32 },
    Blocked { arc: ArcId, time: u32 },
    Deadline { zone: NodeId, time: u32 },
    PairExclusion { arc: ArcId },
    IllegalReversal { arc: ArcId },
    UnknownZone { zone: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

/// Per-zone flows on arc copies as recomputed from a plan.
pub type ZoneFlows = BTreeMap<NodeId, BTreeMap<(ArcId, u32), f64>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub metrics: PlanMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanMetrics {
    pub evacuated: f64,
    pub total_demand: u64,
    pub evacuated_pct: f64,
    /// Steps needed to finish the plan: last arrival plus one.
    pub clearance: Option<u32>,
    pub peak_utilization: f64,
    pub per_zone: Vec<(NodeId, f64)>,
}

/// Rebuilds arc-copy flows of a non-preemptive plan cohort by cohort.
fn replay(graph: &StaticGraph, plan: &EvacuationPlan, out: &mut Vec<Violation>) -> ZoneFlows {
    let h = plan.horizon;
    let mut flows = ZoneFlows::new();
    let Schedule::NonPreemptive { responses } = &plan.schedule else { return flows };
    for r in responses {
        if !graph.is_zone(r.zone) {
            out.push(Violation::UnknownZone { zone: r.zone });
            continue;
        }
        let Some(path) = plan.path_of(r.zone) else {
            out.push(Violation::MissingPath { zone: r.zone });
            continue;
        };
        let zf = flows.entry(r.zone).or_default();
        let d = graph.demand(r.zone);
        let rate = r.curve.rate();
        let (mut left, mut dep) = (d, r.start);
        let mut first = true;
        while left > 0 {
            let q = left.min(rate);
            left -= q;
            let mut t = dep;
            for (j, &e) in path.arcs.iter().enumerate() {
                let a = graph.arc(e);
                if t + a.travel >= h {
                    if first {
                        out.push(Violation::Horizon { arc: e, time: t });
                    }
                    break;
                }
                if j == 0 && graph.deadline(r.zone).is_some_and(|f| t >= f) {
                    out.push(Violation::Deadline { zone: r.zone, time: t });
                }
                if !a.open_at(t) {
                    out.push(Violation::Blocked { arc: e, time: t });
                }
                *zf.entry((e, t)).or_default() += q as f64;
                t += a.travel;
            }
            first = false;
            dep += 1;
        }
    }
    flows
}

fn collect_preemptive(graph: &StaticGraph, plan: &EvacuationPlan, out: &mut Vec<Violation>) -> ZoneFlows {
    let mut flows = ZoneFlows::new();
    if let Schedule::Preemptive { flows: list } = &plan.schedule {
        for f in list {
            if !graph.is_zone(f.zone) {
                out.push(Violation::UnknownZone { zone: f.zone });
                continue;
            }
            if f.amount < -TOL {
                out.push(Violation::NegativeFlow { zone: f.zone, arc: f.arc, time: f.time });
            }
            *flows.entry(f.zone).or_default().entry((f.arc, f.time)).or_default() += f.amount;
        }
    }
    flows
}

/// Replays `plan` and checks every feasibility rule. `contraflow` states
/// whether lane reversal is allowed at all.
pub fn validate_plan(graph: &StaticGraph, plan: &EvacuationPlan, contraflow: bool) -> Validation {
    let mut v = Vec::new();
    let h = plan.horizon;

    let mut seen: HashMap<NodeId, usize> = HashMap::new();
    for p in &plan.paths {
        *seen.entry(p.zone).or_default() += 1;
        if let Err(e) = p.check(graph) {
            v.push(Violation::BadPath { zone: p.zone, reason: e.to_string() });
        }
    }
    for &k in graph.zones() {
        match seen.get(&k) {
            None => v.push(Violation::MissingPath { zone: k }),
            Some(&n) if n > 1 => v.push(Violation::DuplicatePath { zone: k }),
            _ => {}
        }
    }

    for &e in &plan.reversed {
        match graph.reverse(e) {
            Some(r) if contraflow => {
                if plan.is_reversed(r) {
                    v.push(Violation::PairExclusion { arc: e.min(r) });
                }
            }
            _ => v.push(Violation::IllegalReversal { arc: e }),
        }
    }
    v.dedup();

    let flows = match plan.schedule {
        Schedule::Preemptive { .. } => collect_preemptive(graph, plan, &mut v),
        Schedule::NonPreemptive { .. } => replay(graph, plan, &mut v),
    };

    let mut load: BTreeMap<(ArcId, u32), f64> = BTreeMap::new();
    let mut evacuated = 0.0;
    let mut last_arrival: Option<u32> = None;
    let mut per_zone = Vec::new();
    for &k in graph.zones() {
        let Some(zf) = flows.get(&k) else {
            per_zone.push((k, 0.0));
            continue;
        };
        let path = plan.path_of(k);
        let mut balance: BTreeMap<(NodeId, u32), f64> = BTreeMap::new();
        let mut departed = 0.0;
        let mut arrived = 0.0;
        for (&(e, t), &q) in zf {
            if q.abs() <= TOL {
                continue;
            }
            let a = graph.arc(e);
            if path.is_some_and(|p| !p.arcs.contains(&e)) {
                v.push(Violation::OffPath { zone: k, arc: e, time: t });
            }
            if matches!(plan.schedule, Schedule::Preemptive { .. }) {
                if t + a.travel >= h {
                    v.push(Violation::Horizon { arc: e, time: t });
                }
                if !a.open_at(t) {
                    v.push(Violation::Blocked { arc: e, time: t });
                }
                if a.tail == k && graph.deadline(k).is_some_and(|f| t >= f) {
                    v.push(Violation::Deadline { zone: k, time: t });
                }
            }
            *load.entry((e, t)).or_default() += q;
            if a.tail == k {
                departed += q;
            } else {
                *balance.entry((a.tail, t)).or_default() -= q;
            }
            if graph.is_safe(a.head) {
                if t + a.travel < h {
                    arrived += q;
                    let arr = t + a.travel;
                    last_arrival = Some(last_arrival.map_or(arr, |x| x.max(arr)));
                }
            } else {
                *balance.entry((a.head, t + a.travel)).or_default() += q;
            }
        }
        if departed > graph.demand(k) as f64 + TOL {
            v.push(Violation::Demand { zone: k, departed, demand: graph.demand(k) });
        }
        // Non-preemptive cohorts may be cut off by the horizon mid-path.
        if matches!(plan.schedule, Schedule::Preemptive { .. }) {
            for (&(i, t), &b) in &balance {
                if b.abs() > TOL {
                    v.push(Violation::Continuity { zone: k, node: i, time: t, imbalance: b });
                }
            }
        }
        evacuated += arrived;
        per_zone.push((k, arrived));
    }

    let mut peak: f64 = 0.0;
    for (&(e, t), &q) in &load {
        let a = graph.arc(e);
        let cap = if plan.is_reversed(e) {
            0.0
        } else {
            let lent = match graph.reverse(e) {
                Some(r) if plan.is_reversed(r) && graph.arc(r).open_at(t) => graph.arc(r).capacity,
                _ => 0,
            };
            (a.capacity + lent) as f64
        };
        if q > cap + TOL {
            v.push(Violation::Capacity { arc: e, time: t, load: q, capacity: cap });
        }
        if cap > 0.0 {
            peak = peak.max(q / cap);
        }
    }

    let metrics = PlanMetrics {
        evacuated,
        total_demand: graph.total_demand(),
        evacuated_pct: pct(evacuated, graph.total_demand()),
        clearance: last_arrival.map(|t| t + 1),
        peak_utilization: peak,
        per_zone,
    };
    Validation { ok: v.is_empty(), violations: v, metrics }
}

/// Recomputes performance figures of a plan.
pub fn plan_metrics(graph: &StaticGraph, plan: &EvacuationPlan, contraflow: bool) -> PlanMetrics {
    validate_plan(graph, plan, contraflow).metrics
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub reported_pct: f64,
    pub replayed_pct: f64,
    /// Replayed over reported evacuation; 1.0 when the report is honest.
    pub replay_ratio: f64,
    pub valid: bool,
    pub clearance: Option<u32>,
    pub gap: Option<f64>,
    pub wall_seconds: f64,
}

/// Tabulates several solutions of the same instance and horizon.
pub fn compare_methods(graph: &StaticGraph, runs: &[Solved]) -> Result<Vec<ComparisonRow>, SolveError> {
    if let Some(first) = runs.first() {
        if runs.iter().any(|r| r.report.instance != first.report.instance || r.report.horizon != first.report.horizon) {
            return Err(SolveError::Invalid("solutions belong to different instances or horizons".into()));
        }
    }
    Ok(runs
        .iter()
        .map(|s| {
            let val = validate_plan(graph, &s.plan, s.report.contraflow);
            let ratio = if s.report.evacuated.abs() < TOL {
                if val.metrics.evacuated.abs() < TOL { 1.0 } else { f64::INFINITY }
            } else {
                val.metrics.evacuated / s.report.evacuated
            };
            ComparisonRow {
                method: s.report.method.name().to_string(),
                reported_pct: s.report.evacuated_pct,
                replayed_pct: val.metrics.evacuated_pct,
                replay_ratio: ratio,
                valid: val.ok,
                clearance: val.metrics.clearance,
                gap: s.report.gap,
                wall_seconds: s.report.wall_seconds,
            }
        })
        .collect())
}
