//! Seeded random descriptions and networks for round-trip and property checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::offset_polyline;
use crate::ir::{
    AgentDescription, AgentKind, ObjectDescription, ObjectKind, RoadDescription, RoadLayout, RoadSegment, Role,
    ScenarioDescription, SceneType, WeatherDescription,
};
use crate::netgen::{Connection, Edge, Lane, Node, NodeType, RoadNetwork, SpreadType, DEFAULT_LANE_WIDTH};

const LAYOUTS: [RoadLayout; 6] = [
    RoadLayout::Straight,
    RoadLayout::Curve,
    RoadLayout::TJunction,
    RoadLayout::CrossIntersection,
    RoadLayout::Merge,
    RoadLayout::Roundabout,
];
const COLORS: [&str; 6] = ["red", "white", "black", "blue", "silver", "yellow"];
const INTENTS: [&str; 5] = ["follow lane", "cut in from the left", "sudden braking", "turn left at the junction", "cross the road"];

fn real(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// A valid description with arbitrary (unrounded) real fields.
pub fn random_description(seed: u64) -> ScenarioDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = *LAYOUTS.choose(&mut rng).expect("non-empty");
    let segments = (0..rng.gen_range(1..=4))
        .map(|_| {
            let fw = rng.gen_range(0..=3);
            RoadSegment {
                length: real(&mut rng, 10.0, 500.0),
                lanes_forward: fw,
                lanes_backward: rng.gen_range(u32::from(fw == 0)..=2),
                speed_limit: real(&mut rng, 5.0, 35.0),
            }
        })
        .collect();
    let mut objects = Vec::new();
    for kind in ObjectKind::ALL {
        if rng.gen_bool(0.4) {
            objects.push(ObjectDescription { kind, count: rng.gen_range(1..=9), placement_hint: "lane closure taper".into() });
        }
    }
    let mut has_av = false;
    let agents = (0..rng.gen_range(0..=6))
        .map(|_| {
            let kind = *AgentKind::ALL.choose(&mut rng).expect("non-empty");
            let role = if kind.is_vulnerable() {
                Role::VRU
            } else if !has_av && rng.gen_bool(0.5) {
                has_av = true;
                Role::AV
            } else {
                Role::BV
            };
            AgentDescription {
                kind,
                color: rng.gen_bool(0.6).then(|| COLORS.choose(&mut rng).expect("non-empty").to_string()),
                role,
                intent: INTENTS.choose(&mut rng).expect("non-empty").to_string(),
                approx_speed: real(&mut rng, 0.0, 30.0),
                relative_position: ["ahead", "behind", "left lane", "oncoming"].choose(&mut rng).expect("non-empty").to_string(),
            }
        })
        .collect();
    let weather = WeatherDescription {
        precipitation: real(&mut rng, 0.0, 1.0),
        fog_density: real(&mut rng, 0.0, 1.0),
        sun_altitude: real(&mut rng, -90.0, 90.0),
        time_of_day: real(&mut rng, 0.0, 24.0),
    };
    ScenarioDescription {
        road: RoadDescription { layout, segments, junction_notes: "auto & <generated>".into() },
        objects,
        agents,
        weather,
        narrative: format!("Synthetic scenario {seed} with \"quotes\" and unicode: ±"),
        scene_type: *SceneType::ALL.choose(&mut rng).expect("non-empty"),
    }
}

/// A random directed network with at most `max_nodes` nodes (at least 2):
/// a random spanning tree plus extra edges, some with lane shapes, and
/// connections between consecutive edges.
pub fn random_network(seed: u64, max_nodes: usize) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes.max(2));
    let types = [NodeType::Priority, NodeType::TrafficLight, NodeType::Unregulated];
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: format!("v{i}"),
            x: real(&mut rng, -500.0, 500.0),
            y: real(&mut rng, -500.0, 500.0),
            node_type: *types.choose(&mut rng).expect("non-empty"),
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        pairs.push(if rng.gen_bool(0.5) { (i, j) } else { (j, i) });
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let spreads = [SpreadType::Right, SpreadType::Center, SpreadType::RoadCenter];
    let edges: Vec<Edge> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let num_lanes = rng.gen_range(1..=3);
            let line = [nodes[a].pos(), nodes[b].pos()];
            let lanes = if rng.gen_bool(0.5) {
                (0..num_lanes)
                    .map(|i| Lane {
                        index: i,
                        shape: offset_polyline(&line, -(f64::from(num_lanes - i) - 0.5) * DEFAULT_LANE_WIDTH),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Edge {
                id: format!("e{k}"),
                from: nodes[a].id.clone(),
                to: nodes[b].id.clone(),
                num_lanes,
                speed: real(&mut rng, 5.0, 35.0),
                spread_type: *spreads.choose(&mut rng).expect("non-empty"),
                lanes,
            }
        })
        .collect();
    let mut connections = Vec::new();
    for e in &edges {
        for o in edges.iter().filter(|o| o.from == e.to && o.to != e.from) {
            if rng.gen_bool(0.5) {
                connections.push(Connection {
                    from_edge: e.id.clone(),
                    to_edge: o.id.clone(),
                    from_lane: rng.gen_range(0..e.num_lanes),
                    to_lane: rng.gen_range(0..o.num_lanes),
                });
            }
        }
    }
    RoadNetwork { nodes, edges, connections }
}
