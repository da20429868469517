use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::network::{ArcId, EvacPath, NodeId, StaticGraph};

/// Travel time to the nearest safe node for every node, with the first arc to take.
pub fn time_to_safety(graph: &StaticGraph) -> (Vec<Option<u64>>, Vec<Option<ArcId>>) {
    let n = graph.num_nodes();
    let mut dist = vec![None; n];
    let mut next = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &s in graph.safe_nodes() {
        dist[s.0] = Some(0);
        heap.push(Reverse((0u64, s.0)));
    }
    while let Some(Reverse((d, v))) = heap.pop() {
        if dist[v] != Some(d) {
            continue;
        }
        for &e in graph.in_arcs(NodeId(v)) {
            let u = graph.arc(e).tail.0;
            let nd = d + graph.arc(e).travel as u64;
            let better = match dist[u] {
                None => true,
                Some(old) => nd < old || (nd == old && next[u].is_some_and(|f: ArcId| e < f)),
            };
            if better {
                dist[u] = Some(nd);
                next[u] = Some(e);
                heap.push(Reverse((nd, u)));
            }
        }
    }
    (dist, next)
}

/// Fastest path from a zone to safety, ties broken by lowest arc id.
pub fn fastest_path(graph: &StaticGraph, zone: NodeId) -> Option<EvacPath> {
    let (_, next) = time_to_safety(graph);
    let mut at = zone;
    let mut arcs = Vec::new();
    while !graph.is_safe(at) {
        let e = next[at.0]?;
        arcs.push(e);
        at = graph.arc(e).head;
    }
    Some(EvacPath { zone, arcs })
}

/// Travel time to safety along the chosen exits, for nodes whose chain reaches it.
fn chain_times(graph: &StaticGraph, exit: &[Option<ArcId>], state: &[u8]) -> Vec<Option<u64>> {
    let n = graph.num_nodes();
    let mut rem: Vec<Option<u64>> = vec![None; n];
    for &s in graph.safe_nodes() {
        rem[s.0] = Some(0);
    }
    for v in 0..n {
        if state[v] != 1 || rem[v].is_some() {
            continue;
        }
        let mut chain = Vec::new();
        let mut at = v;
        while !graph.is_safe(NodeId(at)) && rem[at].is_none() {
            chain.push(at);
            at = graph.arc(exit[at].unwrap()).head.0;
        }
        let mut acc = rem[at].unwrap_or(0);
        for &c in chain.iter().rev() {
            acc += graph.arc(exit[c].unwrap()).travel as u64;
            rem[c] = Some(acc);
        }
    }
    rem
}

/// Turns a partial choice of exits into a convergent set of paths, one per
/// zone. Exits on chains that never reach safety are dropped and replaced by
/// fastest detours through nodes without an exit.
pub fn complete_forest(graph: &StaticGraph, chosen: &HashMap<NodeId, ArcId>) -> Vec<EvacPath> {
    let n = graph.num_nodes();
    let mut exit: Vec<Option<ArcId>> = vec![None; n];
    for (&i, &e) in chosen {
        exit[i.0] = Some(e);
    }
    // 0 unknown, 1 reaches safety, 2 does not
    let mut state = vec![0u8; n];
    for &s in graph.safe_nodes() {
        state[s.0] = 1;
    }
    let mut stamp = vec![usize::MAX; n];
    for v in 0..n {
        let mut chain = Vec::new();
        let mut at = v;
        let verdict = loop {
            if state[at] != 0 {
                break state[at];
            }
            if stamp[at] == v {
                break 2;
            }
            stamp[at] = v;
            chain.push(at);
            match exit[at] {
                Some(e) => at = graph.arc(e).head.0,
                None => break 2,
            }
        };
        for c in chain {
            state[c] = verdict;
        }
    }
    for v in 0..n {
        if state[v] == 2 {
            exit[v] = None;
        }
    }
    let mut rem = chain_times(graph, &exit, &state);
    for &k in graph.zones() {
        if state[k.0] == 1 {
            continue;
        }
        // detour through exit-free nodes to the good node with the least total time
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut pred: Vec<Option<ArcId>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[k.0] = Some(0);
        heap.push(Reverse((0u64, k.0)));
        let mut best: Option<(u64, ArcId)> = None;
        while let Some(Reverse((d, v))) = heap.pop() {
            if dist[v] != Some(d) || state[v] == 1 {
                continue;
            }
            if best.is_some_and(|(b, _)| d >= b) {
                break;
            }
            for &e in graph.out_arcs(NodeId(v)) {
                let w = graph.arc(e).head.0;
                let nd = d + graph.arc(e).travel as u64;
                if state[w] == 1 {
                    let total = nd + rem[w].expect("good nodes reach safety");
                    if best.is_none_or(|(b, _)| total < b) {
                        best = Some((total, e));
                    }
                } else if dist[w].is_none_or(|old| nd < old) {
                    dist[w] = Some(nd);
                    pred[w] = Some(e);
                    heap.push(Reverse((nd, w)));
                }
            }
        }
        let (_, last) = best.expect("every zone reaches safety");
        let mut e = last;
        loop {
            let tail = graph.arc(e).tail.0;
            exit[tail] = Some(e);
            state[tail] = 1;
            if tail == k.0 {
                break;
            }
            e = pred[tail].unwrap();
        }
        let mut at = k.0;
        let mut chain = Vec::new();
        while !graph.is_safe(NodeId(at)) && rem[at].is_none() {
            chain.push(at);
            at = graph.arc(exit[at].unwrap()).head.0;
        }
        let mut acc = rem[at].unwrap_or(0);
        for &c in chain.iter().rev() {
            acc += graph.arc(exit[c].unwrap()).travel as u64;
            rem[c] = Some(acc);
        }
    }
    graph
        .zones()
        .iter()
        .map(|&k| {
            let mut arcs = Vec::new();
            let mut at = k;
            while !graph.is_safe(at) {
                let e = exit[at.0].unwrap();
                arcs.push(e);
                at = graph.arc(e).head;
            }
            EvacPath { zone: k, arcs }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{is_convergent, Node, StaticArc};

    fn diamond() -> StaticGraph {
        StaticGraph::new(
            vec![
                Node::evacuation(0, "A", 5, None),
                Node::evacuation(1, "B", 5, None),
                Node::transit(2, "T"),
                Node::transit(3, "U"),
                Node::safe(4, "S"),
            ],
            vec![
                StaticArc::new(0, 0, 2, 1, 1),
                StaticArc::new(1, 1, 3, 1, 1),
                StaticArc::new(2, 2, 3, 1, 1),
                StaticArc::new(3, 3, 2, 1, 1),
                StaticArc::new(4, 2, 4, 3, 1),
                StaticArc::new(5, 3, 4, 1, 1),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn fastest_path_prefers_short_travel() {
        let g = diamond();
        let p = fastest_path(&g, NodeId(0)).unwrap();
        assert_eq!(p.arcs, vec![ArcId(0), ArcId(2), ArcId(5)]);
    }

    #[test]
    fn forest_completion_breaks_cycles() {
        let g = diamond();
        let chosen: HashMap<NodeId, ArcId> =
            [(NodeId(0), ArcId(0)), (NodeId(2), ArcId(2)), (NodeId(3), ArcId(3))].into_iter().collect();
        let paths = complete_forest(&g, &chosen);
        assert_eq!(paths.len(), 2);
        for p in &paths {
            p.check(&g).unwrap();
        }
        assert!(is_convergent(&g, &paths).convergent);
    }

    #[test]
    fn forest_completion_keeps_good_chains() {
        let g = diamond();
        let chosen: HashMap<NodeId, ArcId> = [(NodeId(0), ArcId(0)), (NodeId(2), ArcId(4))].into_iter().collect();
        let paths = complete_forest(&g, &chosen);
        assert_eq!(paths[0].arcs, vec![ArcId(0), ArcId(4)]);
        assert_eq!(paths[1].arcs, vec![ArcId(1), ArcId(5)]);
    }
}
