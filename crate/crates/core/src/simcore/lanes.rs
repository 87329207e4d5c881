//! Lane graph with junction connectors.

use std::collections::{BTreeMap, HashMap};

use crate::geometry::{Polyline, Vec2};
use crate::netgen::{LaneRef, RoadNetwork};

const CONNECTOR_SAMPLES: usize = 9;
/// Heading change (radians) below which a lane counts as straight.
const STRAIGHT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone)]
pub(crate) struct SimLane {
    pub id: LaneRef,
    pub line: Polyline,
    pub speed: f64,
    pub next: Vec<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub straight: bool,
    pub connector: bool,
    /// Owning edge; for connectors the edge they lead into.
    pub edge: String,
}

impl SimLane {
    pub fn length(&self) -> f64 {
        self.line.length()
    }

    pub fn end_heading(&self) -> f64 {
        self.line.pose_at(self.length()).1
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LaneGraph {
    pub lanes: Vec<SimLane>,
    index: HashMap<LaneRef, usize>,
}

fn is_straight(points: &[Vec2]) -> bool {
    let headings: Vec<f64> = points.windows(2).filter(|w| w[0].distance(w[1]) > 1e-9).map(|w| (w[1] - w[0]).angle()).collect();
    headings.windows(2).all(|h| {
        let d = (h[1] - h[0]).sin().abs();
        d < STRAIGHT_TOLERANCE && (h[1] - h[0]).cos() > 0.0
    })
}

/// Quadratic Bezier from `a` (heading `ha`) to `b` (heading `hb`), with the
/// control point where the two tangents meet.
fn connector_shape(a: Vec2, ha: f64, b: Vec2, hb: f64) -> Vec<Vec2> {
    let d0 = Vec2::from_angle(ha);
    let d2 = Vec2::from_angle(hb);
    let denom = d0.cross(d2);
    let mid = (a + b) * 0.5;
    let control = if denom.abs() < 1e-6 {
        mid
    } else {
        let t = (b - a).cross(d2) / denom;
        let u = d0.cross(b - a) / denom;
        if t > 0.0 && u > 0.0 {
            a + d0 * t
        } else {
            mid
        }
    };
    (0..CONNECTOR_SAMPLES)
        .map(|k| {
            let t = k as f64 / (CONNECTOR_SAMPLES - 1) as f64;
            a * ((1.0 - t) * (1.0 - t)) + control * (2.0 * (1.0 - t) * t) + b * (t * t)
        })
        .collect()
}

impl LaneGraph {
    pub fn new(net: &RoadNetwork) -> Self {
        let mut lanes = Vec::new();
        let mut index = HashMap::new();
        for r in net.lane_refs() {
            let edge = net.edge(&r.edge).expect("lane refs come from edges");
            let points = net.lane_shape(edge, r.index);
            if points.len() < 2 {
                continue;
            }
            index.insert(r.clone(), lanes.len());
            lanes.push(SimLane {
                id: r.clone(),
                straight: is_straight(&points),
                line: Polyline::new(points),
                speed: edge.speed,
                next: Vec::new(),
                left: None,
                right: None,
                connector: false,
                edge: edge.id.clone(),
            });
        }
        for i in 0..lanes.len() {
            let id = lanes[i].id.clone();
            lanes[i].left = index.get(&LaneRef::new(id.edge.clone(), id.index + 1)).copied();
            lanes[i].right = id.index.checked_sub(1).and_then(|j| index.get(&LaneRef::new(id.edge.clone(), j)).copied());
        }
        let successors: BTreeMap<LaneRef, Vec<LaneRef>> = net.lane_successors();
        for (from, tos) in &successors {
            let Some(&fi) = index.get(from) else { continue };
            for to in tos {
                let Some(&ti) = index.get(to) else { continue };
                let (a, ha) = lanes[fi].line.pose_at(lanes[fi].length());
                let (b, hb) = lanes[ti].line.pose_at(0.0);
                if a.distance(b) < 1e-9 {
                    if !lanes[fi].next.contains(&ti) {
                        lanes[fi].next.push(ti);
                    }
                    continue;
                }
                let shape = connector_shape(a, ha, b, hb);
                let ci = lanes.len();
                lanes.push(SimLane {
                    id: LaneRef::new(format!(":{from}>{to}"), 0),
                    straight: is_straight(&shape),
                    line: Polyline::new(shape),
                    speed: lanes[fi].speed.min(lanes[ti].speed),
                    next: vec![ti],
                    left: None,
                    right: None,
                    connector: true,
                    edge: lanes[ti].edge.clone(),
                });
                lanes[fi].next.push(ci);
            }
        }
        LaneGraph { lanes, index }
    }

    pub fn get(&self, r: &LaneRef) -> Option<usize> {
        self.index.get(r).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{RoadDescription, RoadLayout, RoadSegment};
    use crate::netgen::build_network;

    fn net(layout: RoadLayout, n: usize) -> RoadNetwork {
        build_network(&RoadDescription {
            layout,
            segments: vec![RoadSegment { length: 50.0, lanes_forward: 2, lanes_backward: 1, speed_limit: 10.0 }; n],
            junction_notes: String::new(),
        })
    }

    #[test]
    fn collinear_chain_joins_directly() {
        let g = LaneGraph::new(&net(RoadLayout::Straight, 2));
        assert!(g.lanes.iter().all(|l| !l.connector));
        let first = g.get(&LaneRef::new("s0", 0)).unwrap();
        assert_eq!(g.lanes[first].next, vec![g.get(&LaneRef::new("s1", 0)).unwrap()]);
        assert_eq!(g.lanes[first].left, g.get(&LaneRef::new("s0", 1)));
    }

    #[test]
    fn junction_connectors_are_continuous() {
        let g = LaneGraph::new(&net(RoadLayout::CrossIntersection, 4));
        let connectors: Vec<&SimLane> = g.lanes.iter().filter(|l| l.connector).collect();
        assert!(!connectors.is_empty());
        for c in connectors {
            let target = &g.lanes[c.next[0]];
            let end = c.line.pose_at(c.length()).0;
            assert!(end.distance(target.line.pose_at(0.0).0) < 1e-9);
        }
    }

    #[test]
    fn bezier_meets_tangents() {
        let pts = connector_shape(Vec2::new(0.0, 0.0), 0.0, Vec2::new(10.0, 10.0), std::f64::consts::FRAC_PI_2);
        assert_eq!(pts[0], Vec2::new(0.0, 0.0));
        assert!(pts[CONNECTOR_SAMPLES - 1].distance(Vec2::new(10.0, 10.0)) < 1e-12);
        // control point is (10, 0), so the midpoint is (7.5, 2.5)
        assert!(pts[4].distance(Vec2::new(7.5, 2.5)) < 1e-12);
    }
}
