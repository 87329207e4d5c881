//! Deterministic junction and connectivity builder.
//!
//! Turns a [`RoadDescription`] into nodes, directed edges and lane-level
//! connections. "Forward" lanes of an arm run towards the junction and
//! "backward" lanes run away from it; for chains forward means along the
//! chain.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{Connection, Edge, Lane, Node, NodeType, RoadNetwork, SpreadType, DEFAULT_LANE_WIDTH};
use crate::geometry::{offset_polyline, Vec2};
use crate::ir::{RoadDescription, RoadLayout, RoadSegment};

const ROUNDABOUT_RADIUS: f64 = 20.0;
const ARC_SAMPLES: usize = 9;

#[derive(Default)]
struct Builder {
    net: RoadNetwork,
}

/// One piece of road with its lane counts in each direction.
pub(super) struct Piece<'a> {
    pub segment: &'a RoadSegment,
    pub one_way: bool,
}

impl Builder {
    fn node(&mut self, id: &str, p: Vec2, node_type: NodeType) {
        self.net.nodes.push(Node { id: id.into(), x: p.x, y: p.y, node_type });
    }

    fn pos(&self, id: &str) -> Vec2 {
        self.net.node(id).expect("builder node exists").pos()
    }

    fn edge(&mut self, id: String, from: &str, to: &str, lanes: u32, speed: f64, shape: Option<&[Vec2]>) {
        if lanes == 0 {
            return;
        }
        let lanes_geom = shape
            .map(|line| {
                (0..lanes)
                    .map(|i| {
                        let right = (f64::from(lanes) - 1.0 - f64::from(i) + 0.5) * DEFAULT_LANE_WIDTH;
                        Lane { index: i, shape: offset_polyline(line, -right) }
                    })
                    .collect()
            })
            .unwrap_or_default();
        self.net.edges.push(Edge {
            id,
            from: from.into(),
            to: to.into(),
            num_lanes: lanes,
            speed,
            spread_type: SpreadType::Right,
            lanes: lanes_geom,
        });
    }

    /// Adds the forward edge `id` (from → to) and the backward edge `-id`.
    fn road(&mut self, id: &str, from: &str, to: &str, seg: &RoadSegment, shape: Option<Vec<Vec2>>, one_way: bool) {
        self.edge(id.to_string(), from, to, seg.lanes_forward.max(u32::from(one_way)), seg.speed_limit, shape.as_deref());
        if !one_way {
            let reversed: Option<Vec<Vec2>> = shape.map(|s| s.into_iter().rev().collect());
            self.edge(format!("-{id}"), to, from, seg.lanes_backward, seg.speed_limit, reversed.as_deref());
        }
    }

    fn connect(&mut self) {
        let mut conns = Vec::new();
        for e in &self.net.edges {
            for o in self.net.edges.iter().filter(|o| o.from == e.to && o.to != e.from) {
                for i in 0..e.num_lanes {
                    conns.push(Connection {
                        from_edge: e.id.clone(),
                        to_edge: o.id.clone(),
                        from_lane: i,
                        to_lane: i.min(o.num_lanes - 1),
                    });
                }
            }
        }
        self.net.connections = conns;
    }
}

fn arc(start: Vec2, heading: f64, length: f64, turn: f64) -> Vec<Vec2> {
    if turn.abs() < 1e-9 {
        return vec![start, start + Vec2::from_angle(heading) * length];
    }
    // Signed radius: positive turns left (counterclockwise).
    let radius = length / turn;
    let center = start + Vec2::from_angle(heading).perp() * radius;
    let start_angle = (start - center).angle();
    (0..ARC_SAMPLES)
        .map(|k| {
            let a = start_angle + turn * k as f64 / (ARC_SAMPLES - 1) as f64;
            center + Vec2::from_angle(a) * radius.abs()
        })
        .collect()
}

fn seg(road: &RoadDescription, i: usize) -> &RoadSegment {
    &road.segments[i % road.segments.len()]
}

/// Road pieces in the order the builder consumes them, for lane-count checks.
pub(super) fn pieces(road: &RoadDescription) -> Vec<Piece<'_>> {
    let two_way = |i| Piece { segment: seg(road, i), one_way: false };
    match road.layout {
        RoadLayout::Straight | RoadLayout::Curve => (0..road.segments.len()).map(two_way).collect(),
        RoadLayout::CrossIntersection | RoadLayout::Roundabout => (0..4).map(two_way).collect(),
        RoadLayout::TJunction => (0..3).map(two_way).collect(),
        RoadLayout::Merge => {
            let ramp = Piece { segment: seg(road, 2), one_way: true };
            vec![two_way(0), two_way(1), ramp]
        }
    }
}

pub fn build_network(road: &RoadDescription) -> RoadNetwork {
    let mut b = Builder::default();
    match road.layout {
        RoadLayout::Straight => chain(&mut b, road, 0.0),
        RoadLayout::Curve => chain(&mut b, road, FRAC_PI_2),
        RoadLayout::CrossIntersection => star(&mut b, road, &[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]),
        RoadLayout::TJunction => star(&mut b, road, &[0.0, PI, 3.0 * FRAC_PI_2]),
        RoadLayout::Merge => merge(&mut b, road),
        RoadLayout::Roundabout => roundabout(&mut b, road),
    }
    b.connect();
    b.net
}

/// Linear chain; `total_turn` radians of heading change spread over the
/// segments in proportion to their length.
fn chain(b: &mut Builder, road: &RoadDescription, total_turn: f64) {
    let total_len = road.total_length();
    let mut p = Vec2::new(0.0, 0.0);
    let mut heading = 0.0;
    b.node("n0", p, NodeType::Priority);
    for (i, s) in road.segments.iter().enumerate() {
        let turn = total_turn * s.length / total_len;
        let shape = arc(p, heading, s.length, turn);
        let end = *shape.last().expect("arc has points");
        let id = format!("n{}", i + 1);
        b.node(&id, end, NodeType::Priority);
        let curved = turn != 0.0;
        b.road(&format!("s{i}"), &format!("n{i}"), &id, s, curved.then_some(shape), false);
        p = end;
        heading += turn;
    }
}

fn star(b: &mut Builder, road: &RoadDescription, directions: &[f64]) {
    b.node("J0", Vec2::new(0.0, 0.0), NodeType::TrafficLight);
    for (k, &dir) in directions.iter().enumerate() {
        let s = seg(road, k);
        let id = format!("A{k}");
        b.node(&id, Vec2::from_angle(dir) * s.length, NodeType::Priority);
        b.road(&format!("arm{k}"), &id, "J0", s, None, false);
    }
}

fn merge(b: &mut Builder, road: &RoadDescription) {
    let up = seg(road, 0);
    let down = seg(road, 1);
    let ramp = seg(road, 2);
    b.node("U", Vec2::new(-up.length, 0.0), NodeType::Priority);
    b.node("M", Vec2::new(0.0, 0.0), NodeType::Unregulated);
    b.node("D", Vec2::new(down.length, 0.0), NodeType::Priority);
    b.node("R", Vec2::from_angle(PI + PI / 6.0) * ramp.length, NodeType::Priority);
    b.road("main_up", "U", "M", up, None, false);
    b.road("main_down", "M", "D", down, None, false);
    b.road("ramp", "R", "M", ramp, None, true);
}

fn roundabout(b: &mut Builder, road: &RoadDescription) {
    let ring_lanes = road.segments[0].lanes_forward.clamp(1, 2);
    let ring_speed = road.segments[0].speed_limit.min(8.33);
    for k in 0..4 {
        let dir = FRAC_PI_2 * k as f64;
        b.node(&format!("R{k}"), Vec2::from_angle(dir) * ROUNDABOUT_RADIUS, NodeType::Priority);
    }
    for k in 0..4 {
        let from = format!("R{k}");
        let to = format!("R{}", (k + 1) % 4);
        let start = b.pos(&from);
        let shape = arc(start, FRAC_PI_2 * k as f64 + FRAC_PI_2, ROUNDABOUT_RADIUS * FRAC_PI_2, FRAC_PI_2);
        b.edge(format!("ring{k}"), &from, &to, ring_lanes, ring_speed, Some(&shape));
    }
    for k in 0..4 {
        let s = seg(road, k);
        let dir = FRAC_PI_2 * k as f64;
        let id = format!("A{k}");
        b.node(&id, Vec2::from_angle(dir) * (ROUNDABOUT_RADIUS + s.length), NodeType::Priority);
        b.road(&format!("arm{k}"), &id, &format!("R{k}"), s, None, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{check_layout, serialize_sumo_xml, validate_network};

    fn road(layout: RoadLayout, segs: &[(f64, u32, u32)]) -> RoadDescription {
        RoadDescription {
            layout,
            segments: segs
                .iter()
                .map(|&(length, lanes_forward, lanes_backward)| RoadSegment {
                    length,
                    lanes_forward,
                    lanes_backward,
                    speed_limit: 13.89,
                })
                .collect(),
            junction_notes: String::new(),
        }
    }

    #[test]
    fn straight_single_segment() {
        let net = build_network(&road(RoadLayout::Straight, &[(100.0, 2, 0)]));
        assert_eq!(net.nodes.len(), 2);
        assert_eq!(net.edges.len(), 1);
        assert_eq!(net.edges[0].num_lanes, 2);
        assert_eq!(net.edge_length(&net.edges[0]), 100.0);
    }

    #[test]
    fn cross_intersection_counts() {
        let net = build_network(&road(RoadLayout::CrossIntersection, &[(50.0, 1, 1); 4]));
        assert_eq!(net.nodes.len(), 5);
        assert_eq!(net.edges.len(), 8);
        assert_eq!(net.incident_edges("J0"), 8);
        assert_eq!(net.node_degrees()["J0"], 4);
    }

    #[test]
    fn curve_has_lane_shapes_and_arc_length() {
        let net = build_network(&road(RoadLayout::Curve, &[(120.0, 1, 1)]));
        assert!(net.edges.iter().all(|e| e.lanes.len() == e.num_lanes as usize));
        let end = net.node("n1").unwrap().pos();
        // quarter circle of arc length 120: chord = r·√2 with r = 240/π
        let r = 240.0 / PI;
        assert!((end.norm() - r * 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn every_layout_validates_and_matches() {
        let layouts = [
            RoadLayout::Straight,
            RoadLayout::Curve,
            RoadLayout::TJunction,
            RoadLayout::CrossIntersection,
            RoadLayout::Merge,
            RoadLayout::Roundabout,
        ];
        for layout in layouts {
            let r = road(layout, &[(80.0, 2, 1), (60.0, 1, 1), (40.0, 1, 0)]);
            let net = build_network(&r);
            let (n, e) = serialize_sumo_xml(&net);
            assert!(validate_network(&n, &e).is_empty(), "{layout:?}");
            assert!(check_layout(&r, &net).is_empty(), "{layout:?}: {:?}", check_layout(&r, &net));
        }
    }

    #[test]
    fn no_u_turn_connections() {
        let net = build_network(&road(RoadLayout::Straight, &[(100.0, 1, 1), (100.0, 1, 1)]));
        for c in &net.connections {
            let from = net.edge(&c.from_edge).unwrap();
            let to = net.edge(&c.to_edge).unwrap();
            assert_ne!(from.from, to.to);
        }
        assert_eq!(net.connections.len(), 2);
    }
}
