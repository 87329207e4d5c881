use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::RoadNetwork;

/// Structural statistics of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub total_lanes: u64,
    pub total_edges: u64,
    /// Longest of all shortest paths, in meters, inside the largest weakly
    /// connected component.
    pub route_length: f64,
    /// Mean Euclidean distance over all node pairs. This is an
    /// interpretation of an otherwise undefined "distance" statistic.
    pub pairwise_junction_distance: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct QueueItem {
    dist: f64,
    node: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Directed adjacency list: per node, (target node, edge index, length).
pub(crate) struct Graph {
    pub adjacency: Vec<Vec<(usize, usize, f64)>>,
}

impl Graph {
    pub fn new(net: &RoadNetwork) -> Self {
        let index = net.node_index();
        let mut adjacency = vec![Vec::new(); net.nodes.len()];
        for (ei, e) in net.edges.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
                adjacency[a].push((b, ei, net.edge_length(e)));
            }
        }
        Graph { adjacency }
    }

    /// Single-source shortest paths; returns distances and the edge used to
    /// reach each node.
    pub fn dijkstra(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.adjacency.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(QueueItem { dist: 0.0, node: source });
        while let Some(QueueItem { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, edge, len) in &self.adjacency[node] {
                let nd = d + len;
                if nd < dist[next] {
                    dist[next] = nd;
                    via[next] = Some(edge);
                    heap.push(QueueItem { dist: nd, node: next });
                }
            }
        }
        (dist, via)
    }

    /// Weakly connected component id per node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.adjacency.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for (a, outs) in self.adjacency.iter().enumerate() {
            for &(b, _, _) in outs {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        (0..n).map(|x| find(&mut parent, x)).collect()
    }
}

/// Nodes belonging to the largest weakly connected components (all of them
/// when several share the maximum size).
fn largest_component_nodes(graph: &Graph) -> Vec<bool> {
    let comp = graph.components();
    let mut sizes = std::collections::HashMap::new();
    for &c in &comp {
        *sizes.entry(c).or_insert(0usize) += 1;
    }
    let max = sizes.values().copied().max().unwrap_or(0);
    comp.iter().map(|c| sizes[c] == max).collect()
}

/// The (source, target) pair realising the route length, with its distance.
fn longest_shortest_path(net: &RoadNetwork, graph: &Graph) -> Option<(usize, usize, f64, Vec<Option<usize>>)> {
    let keep = largest_component_nodes(graph);
    let mut best: Option<(usize, usize, f64, Vec<Option<usize>>)> = None;
    for src in (0..net.nodes.len()).filter(|&i| keep[i]) {
        let (dist, via) = graph.dijkstra(src);
        for (dst, &d) in dist.iter().enumerate() {
            if dst == src || !d.is_finite() || !keep[dst] {
                continue;
            }
            if best.as_ref().map_or(true, |b| d > b.2) {
                best = Some((src, dst, d, via.clone()));
            }
        }
    }
    best
}

pub fn network_stats(net: &RoadNetwork) -> NetworkStats {
    let graph = Graph::new(net);
    let route_length = longest_shortest_path(net, &graph).map_or(0.0, |b| b.2);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, a) in net.nodes.iter().enumerate() {
        for b in &net.nodes[i + 1..] {
            sum += a.pos().distance(b.pos());
            pairs += 1;
        }
    }
    NetworkStats {
        total_lanes: net.total_lanes(),
        total_edges: net.edges.len() as u64,
        route_length,
        pairwise_junction_distance: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
    }
}

/// Edge ids along the path that realises [`NetworkStats::route_length`].
pub fn primary_route(net: &RoadNetwork) -> Vec<String> {
    let graph = Graph::new(net);
    let Some((src, dst, _, via)) = longest_shortest_path(net, &graph) else {
        return net.edges.first().map(|e| vec![e.id.clone()]).unwrap_or_default();
    };
    let index = net.node_index();
    let mut path = Vec::new();
    let mut cur = dst;
    while cur != src {
        let Some(ei) = via[cur] else { break };
        let edge = &net.edges[ei];
        path.push(edge.id.clone());
        cur = index[edge.from.as_str()];
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{RoadDescription, RoadLayout, RoadSegment};
    use crate::netgen::{build_network, Edge, Node, NodeType, SpreadType};

    fn road(layout: RoadLayout, length: f64, fw: u32, bw: u32) -> RoadDescription {
        RoadDescription {
            layout,
            segments: vec![RoadSegment { length, lanes_forward: fw, lanes_backward: bw, speed_limit: 13.89 }],
            junction_notes: String::new(),
        }
    }

    #[test]
    fn single_edge_stats() {
        let net = build_network(&road(RoadLayout::Straight, 100.0, 2, 0));
        let s = network_stats(&net);
        assert_eq!((s.total_lanes, s.total_edges, s.route_length), (2, 1, 100.0));
        assert_eq!(primary_route(&net), vec!["s0".to_string()]);
    }

    #[test]
    fn cross_route_is_arm_to_arm() {
        let net = build_network(&road(RoadLayout::CrossIntersection, 50.0, 1, 1));
        let s = network_stats(&net);
        assert_eq!(s.route_length, 100.0);
        assert_eq!(primary_route(&net).len(), 2);
    }

    #[test]
    fn disconnected_uses_largest_component() {
        let node = |id: &str, x: f64| Node { id: id.into(), x, y: 0.0, node_type: NodeType::Priority };
        let edge = |id: &str, a: &str, b: &str| Edge {
            id: id.into(),
            from: a.into(),
            to: b.into(),
            num_lanes: 1,
            speed: 10.0,
            spread_type: SpreadType::Right,
            lanes: vec![],
        };
        let net = RoadNetwork {
            // small component has the longer edge
            nodes: vec![node("a", 0.0), node("b", 10.0), node("c", 20.0), node("x", 100.0), node("y", 1000.0)],
            edges: vec![edge("ab", "a", "b"), edge("bc", "b", "c"), edge("xy", "x", "y")],
            connections: vec![],
        };
        assert_eq!(network_stats(&net).route_length, 20.0);
    }
}
