mod common;

use common::*;
use evac_core::benders_nc::bn_solve;
use evac_core::colgen::{cg_solve, CgParams};
use evac_core::eval::{validate_plan, Violation};
use evac_core::network::{
    ArcId, EvacPath, EvacuationPlan, Node, NodeId, ResponseCurve, Schedule, StaticArc, StaticGraph, TimeExpandedGraph,
    ZoneFlow, ZoneResponse,
};
use evac_core::report::RunConfig;

fn base() -> (StaticGraph, EvacuationPlan) {
    let g = t2();
    let teg = TimeExpandedGraph::new(&g, 4).unwrap();
    let s = bn_solve(&teg, false, &RunConfig::default()).unwrap();
    assert!(validate_plan(&g, &s.plan, false).ok);
    (g, s.plan)
}

fn flows(p: &mut EvacuationPlan) -> &mut Vec<ZoneFlow> {
    match &mut p.schedule {
        Schedule::Preemptive { flows } => flows,
        _ => panic!("expected a preemptive plan"),
    }
}

fn catches(g: &StaticGraph, p: &EvacuationPlan, cf: bool, what: fn(&Violation) -> bool) {
    let v = validate_plan(g, p, cf);
    assert!(!v.ok);
    assert!(v.violations.iter().any(what), "{:?}", v.violations);
}

#[test]
fn path_faults() {
    let (g, plan) = base();
    let mut p = plan.clone();
    p.paths.remove(0);
    catches(&g, &p, false, |v| matches!(v, Violation::MissingPath { .. }));
    let mut p = plan.clone();
    p.paths.push(p.paths[0].clone());
    catches(&g, &p, false, |v| matches!(v, Violation::DuplicatePath { .. }));
    let mut p = plan.clone();
    p.paths[0].arcs.truncate(1);
    catches(&g, &p, false, |v| matches!(v, Violation::BadPath { .. }));
}

#[test]
fn flow_faults() {
    let (g, plan) = base();
    let a = NodeId(0);
    let mut p = plan.clone();
    flows(&mut p).push(ZoneFlow { zone: a, arc: ArcId(1), time: 0, amount: 1.0 });
    catches(&g, &p, false, |v| matches!(v, Violation::OffPath { .. }));
    let mut p = plan.clone();
    flows(&mut p).push(ZoneFlow { zone: a, arc: ArcId(0), time: 1, amount: -1.0 });
    catches(&g, &p, false, |v| matches!(v, Violation::NegativeFlow { .. }));
    let mut p = plan.clone();
    flows(&mut p).push(ZoneFlow { zone: a, arc: ArcId(0), time: 0, amount: 1.0 });
    catches(&g, &p, false, |v| matches!(v, Violation::Continuity { .. }));
    let mut p = plan.clone();
    for f in flows(&mut p).iter_mut().filter(|f| f.zone == a) {
        f.amount *= 3.0;
    }
    catches(&g, &p, false, |v| matches!(v, Violation::Demand { .. }));
    // pile both zones onto the bottleneck at one step
    let mut p = plan.clone();
    *flows(&mut p) = vec![
        ZoneFlow { zone: NodeId(0), arc: ArcId(0), time: 0, amount: 5.0 },
        ZoneFlow { zone: NodeId(1), arc: ArcId(1), time: 0, amount: 5.0 },
        ZoneFlow { zone: NodeId(0), arc: ArcId(2), time: 1, amount: 5.0 },
        ZoneFlow { zone: NodeId(1), arc: ArcId(2), time: 1, amount: 5.0 },
    ];
    catches(&g, &p, false, |v| matches!(v, Violation::Capacity { .. }));
    let mut p = plan.clone();
    *flows(&mut p) = vec![
        ZoneFlow { zone: NodeId(0), arc: ArcId(0), time: 2, amount: 5.0 },
        ZoneFlow { zone: NodeId(0), arc: ArcId(2), time: 3, amount: 5.0 },
    ];
    catches(&g, &p, false, |v| matches!(v, Violation::Horizon { .. }));
}

#[test]
fn timing_faults() {
    let g = StaticGraph::new(
        vec![Node::evacuation(0, "E", 10, Some(1)), Node::safe(1, "S")],
        vec![StaticArc::new(0, 0, 1, 1, 5).blocked_at(2)],
        vec![],
    )
    .unwrap();
    let path = EvacPath { zone: NodeId(0), arcs: vec![ArcId(0)] };
    let pre = |t| EvacuationPlan {
        horizon: 5,
        paths: vec![path.clone()],
        reversed: vec![],
        schedule: Schedule::Preemptive { flows: vec![ZoneFlow { zone: NodeId(0), arc: ArcId(0), time: t, amount: 5.0 }] },
    };
    assert!(validate_plan(&g, &pre(0), false).ok);
    catches(&g, &pre(1), false, |v| matches!(v, Violation::Deadline { .. }));
    catches(&g, &pre(2), false, |v| matches!(v, Violation::Blocked { .. }));
    let np = |zone, start| EvacuationPlan {
        horizon: 5,
        paths: vec![path.clone()],
        reversed: vec![],
        schedule: Schedule::NonPreemptive {
            responses: vec![ZoneResponse { zone: NodeId(zone), curve: ResponseCurve::Step { rate: 5 }, start }],
        },
    };
    assert!(!validate_plan(&g, &np(0, 0), false).ok, "the second cohort leaves after the deadline");
    catches(&g, &np(0, 1), false, |v| matches!(v, Violation::Deadline { .. }));
    catches(&g, &np(1, 0), false, |v| matches!(v, Violation::UnknownZone { .. }));
}

#[test]
fn lane_faults() {
    let g = t3();
    let teg = TimeExpandedGraph::new(&g, 5).unwrap();
    let s = bn_solve(&teg, true, &RunConfig::default()).unwrap();
    assert!(validate_plan(&g, &s.plan, true).ok);
    assert_eq!(s.plan.reversed, vec![ArcId(2)]);
    catches(&g, &s.plan, false, |v| matches!(v, Violation::IllegalReversal { .. }));
    let mut p = s.plan.clone();
    p.reversed.clear();
    catches(&g, &p, true, |v| matches!(v, Violation::Capacity { .. }));
    p.reversed = vec![ArcId(1), ArcId(2)];
    catches(&g, &p, true, |v| matches!(v, Violation::PairExclusion { .. }));
}

#[test]
fn nonpreemptive_overload_is_caught() {
    let g = t2();
    let teg = TimeExpandedGraph::new(&g, 6).unwrap();
    let s = cg_solve(&teg, false, &CgParams::default(), &RunConfig::default()).unwrap();
    assert!(validate_plan(&g, &s.plan, false).ok);
    let mut p = s.plan.clone();
    let Schedule::NonPreemptive { responses } = &mut p.schedule else { panic!() };
    for r in responses.iter_mut() {
        r.curve = ResponseCurve::Step { rate: 5 };
        r.start = 0;
    }
    catches(&g, &p, false, |v| matches!(v, Violation::Capacity { .. }));
}
