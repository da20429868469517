//! Seeded synthetic instances: random road network on the unit square with
//! two-way roads between transit nodes, zones feeding in and shelters
//! hanging off the network.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{ArcRecord, InstanceFile, Meta, NodeKindTag, NodeRecord, INSTANCE_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub name: String,
    pub zones: usize,
    pub transit: usize,
    pub safe: usize,
    pub seed: u64,
    pub scale: f64,
    pub step_minutes: u32,
    pub horizon_steps: u32,
    /// Minutes to cross the whole square.
    pub span_minutes: u32,
    pub capacity: (u64, u64),
    pub demand: (u64, u64),
    /// Extra roads per transit node beyond the spanning tree.
    pub extra_degree: usize,
    /// Chance that a two-way road may be reversed.
    pub pair_probability: f64,
}

impl GenSpec {
    /// Desk-scale instance with a handful of zones.
    pub fn small(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        GenSpec {
            name: format!("small-{seed}"),
            zones: rng.gen_range(1..=4),
            transit: rng.gen_range(3..=7),
            safe: rng.gen_range(1..=2),
            seed,
            scale: 1.0,
            step_minutes: 5,
            horizon_steps: rng.gen_range(8..=14),
            span_minutes: 15,
            capacity: (2, 6),
            demand: (3, 12),
            extra_degree: 1,
            pair_probability: 0.5,
        }
    }

    /// Shape of the 80-zone case study: 184 transit and 5 safe nodes, about
    /// 38k vehicles, 10 hours in 5-minute steps.
    pub fn hn80(seed: u64) -> Self {
        GenSpec {
            name: format!("hn80-{seed}"),
            zones: 80,
            transit: 184,
            safe: 5,
            seed,
            scale: 1.0,
            step_minutes: 5,
            horizon_steps: 120,
            span_minutes: 90,
            capacity: (30, 90),
            demand: (160, 800),
            extra_degree: 1,
            pair_probability: 0.6,
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Indices of `pts` sorted by distance to `p`, ties by index.
fn nearest(p: (f64, f64), pts: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| dist(p, pts[a]).total_cmp(&dist(p, pts[b])).then(a.cmp(&b)));
    idx
}

pub fn generate_instance(spec: &GenSpec) -> InstanceFile {
    assert!(spec.zones >= 1 && spec.safe >= 1 && spec.transit >= 1, "need zones, transit and safe nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut point = || (rng.gen::<f64>(), rng.gen::<f64>());
    let tp: Vec<(f64, f64)> = (0..spec.transit).map(|_| point()).collect();
    let zp: Vec<(f64, f64)> = (0..spec.zones).map(|_| point()).collect();
    let sp: Vec<(f64, f64)> = (0..spec.safe).map(|_| point()).collect();
    let t0 = spec.zones;
    let s0 = spec.zones + spec.transit;

    let mut nodes = Vec::new();
    for i in 0..spec.zones {
        let demand = rng.gen_range(spec.demand.0..=spec.demand.1);
        nodes.push(NodeRecord { id: i, name: format!("Z{i}"), kind: NodeKindTag::Evacuation, demand: Some(demand), deadline_minutes: None });
    }
    for i in 0..spec.transit {
        nodes.push(NodeRecord { id: t0 + i, name: format!("T{i}"), kind: NodeKindTag::Transit, demand: None, deadline_minutes: None });
    }
    for i in 0..spec.safe {
        nodes.push(NodeRecord { id: s0 + i, name: format!("S{i}"), kind: NodeKindTag::Safe, demand: None, deadline_minutes: None });
    }

    // two-way roads: a random spanning tree plus nearest-neighbour links
    let mut roads: Vec<(usize, usize)> = Vec::new();
    let mut order: Vec<usize> = (0..spec.transit).collect();
    order.shuffle(&mut rng);
    for (k, &v) in order.iter().enumerate().skip(1) {
        let placed: Vec<(f64, f64)> = order[..k].iter().map(|&u| tp[u]).collect();
        let u = order[nearest(tp[v], &placed)[0]];
        roads.push((u.min(v), u.max(v)));
    }
    for v in 0..spec.transit {
        for &u in nearest(tp[v], &tp).iter().skip(1).take(spec.extra_degree) {
            let r = (u.min(v), u.max(v));
            if !roads.contains(&r) {
                roads.push(r);
            }
        }
    }
    roads.sort();

    let travel = |a: (f64, f64), b: (f64, f64)| ((dist(a, b) * spec.span_minutes as f64).ceil() as u32).max(1);
    let mut arcs = Vec::new();
    let mut pairs = Vec::new();
    let push = |arcs: &mut Vec<ArcRecord>, rng: &mut ChaCha8Rng, tail: usize, head: usize, minutes: u32| {
        let id = arcs.len();
        let capacity_per_step = rng.gen_range(spec.capacity.0..=spec.capacity.1);
        arcs.push(ArcRecord { id, tail, head, travel_minutes: minutes, capacity_per_step, block_minutes: None });
        id
    };
    for i in 0..spec.zones {
        let links = nearest(zp[i], &tp);
        let m = if spec.transit > 1 && rng.gen_bool(0.3) { 2 } else { 1 };
        for &t in links.iter().take(m) {
            push(&mut arcs, &mut rng, i, t0 + t, travel(zp[i], tp[t]));
        }
    }
    for &(u, v) in &roads {
        let minutes = travel(tp[u], tp[v]);
        let f = push(&mut arcs, &mut rng, t0 + u, t0 + v, minutes);
        let b = push(&mut arcs, &mut rng, t0 + v, t0 + u, minutes);
        if rng.gen_bool(spec.pair_probability) {
            pairs.push([f, b]);
        }
    }
    for i in 0..spec.safe {
        let links = nearest(sp[i], &tp);
        let m = spec.transit.min(2);
        for &t in links.iter().take(m) {
            push(&mut arcs, &mut rng, t0 + t, s0 + i, travel(sp[i], tp[t]));
        }
    }

    let file = InstanceFile {
        version: INSTANCE_VERSION,
        meta: Meta { name: spec.name.clone(), step_minutes: spec.step_minutes, horizon_steps: spec.horizon_steps, scale: 1.0 },
        nodes,
        arcs,
        contraflow_pairs: pairs,
    };
    if spec.scale == 1.0 {
        file
    } else {
        file.scaled(spec.scale)
    }
}
