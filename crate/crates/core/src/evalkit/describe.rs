//! Re-deriving a description from a generated scenario.

use std::collections::{BTreeMap, BTreeSet};

use super::{cosine_similarity, Embedder, EvalError};
use crate::compgen::{AgentState, PlacedObject};
use crate::geometry::{wrap_degrees, Vec2};
use crate::ir::{
    serialize_description, AgentDescription, ObjectDescription, ObjectKind, RoadDescription, RoadLayout, RoadSegment,
    ScenarioBundle, ScenarioDescription, SceneType,
};
use crate::netgen::{NodeType, RoadNetwork};

/// Chains whose heading changes by more than this many degrees are curves.
const CURVE_DEGREES: f64 = 10.0;
const EGO_FOV_DEGREES: f64 = 120.0;
const EGO_RANGE: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum View {
    /// What the AV's forward camera sees.
    Ego,
    /// Overhead view: everything, but colours are not visible.
    Bev,
}

fn neighbours(net: &RoadNetwork) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut out: BTreeMap<&str, BTreeSet<&str>> = net.nodes.iter().map(|n| (n.id.as_str(), BTreeSet::new())).collect();
    for e in &net.edges {
        if e.from != e.to {
            out.entry(e.from.as_str()).or_default().insert(e.to.as_str());
            out.entry(e.to.as_str()).or_default().insert(e.from.as_str());
        }
    }
    out
}

fn is_junction(net: &RoadNetwork, id: &str, degree: usize) -> bool {
    degree >= 3 && net.node(id).map_or(true, |n| n.node_type != NodeType::Unregulated)
}

/// Road layout read off the network topology.
pub fn infer_layout(net: &RoadNetwork) -> RoadLayout {
    let nb = neighbours(net);
    let degree = |d: usize| nb.values().filter(|s| s.len() == d).count();
    if nb.values().any(|s| s.len() >= 4) {
        return RoadLayout::CrossIntersection;
    }
    if nb.iter().any(|(id, s)| s.len() == 3 && !is_junction(net, id, 3)) {
        return RoadLayout::Merge;
    }
    match degree(3) {
        0 => {}
        1 => return RoadLayout::TJunction,
        _ => return RoadLayout::Roundabout,
    }
    let forward: Vec<_> = net.edges.iter().filter(|e| !e.id.starts_with('-')).collect();
    let (Some(first), Some(last)) = (forward.first(), forward.last()) else { return RoadLayout::Straight };
    let a = net.edge_line(first);
    let b = net.edge_line(last);
    if a.len() < 2 || b.len() < 2 {
        return RoadLayout::Straight;
    }
    let h0 = (a[1] - a[0]).angle().to_degrees();
    let h1 = (b[b.len() - 1] - b[b.len() - 2]).angle().to_degrees();
    if wrap_degrees(h1 - h0).abs() > CURVE_DEGREES {
        RoadLayout::Curve
    } else {
        RoadLayout::Straight
    }
}

/// Construction zone when cones or barriers are placed, intersection when a
/// regulated node joins three or more roads, general otherwise.
pub fn classify_scene(net: &RoadNetwork, objects: &[PlacedObject]) -> SceneType {
    if objects.iter().any(|o| matches!(o.kind, ObjectKind::Cone | ObjectKind::Barrier)) {
        SceneType::ConstructionZone
    } else if neighbours(net).iter().any(|(id, s)| is_junction(net, id, s.len())) {
        SceneType::Intersection
    } else {
        SceneType::General
    }
}

fn road_of(net: &RoadNetwork) -> RoadDescription {
    let forward: Vec<_> = net.edges.iter().filter(|e| !e.id.starts_with('-') && !e.id.starts_with("ring")).collect();
    let edges = if forward.is_empty() { net.edges.iter().collect() } else { forward };
    let segments = edges
        .iter()
        .map(|e| RoadSegment {
            length: round2(net.edge_length(e)),
            lanes_forward: e.num_lanes,
            lanes_backward: net.edge(&format!("-{}", e.id)).map_or(0, |b| b.num_lanes),
            speed_limit: e.speed,
        })
        .collect();
    RoadDescription { layout: infer_layout(net), segments, junction_notes: String::new() }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn relative_position(av: Option<&AgentState>, a: &AgentState) -> String {
    let Some(av) = av else { return String::new() };
    if av.id == a.id {
        return "ego".into();
    }
    let fwd = Vec2::from_angle(av.heading.to_radians());
    let d = a.position() - av.position();
    let (lon, lat) = (d.dot(fwd), fwd.cross(d));
    let along = if lon >= 0.0 { "ahead" } else { "behind" };
    let side = if lat > 0.0 { "left" } else { "right" };
    if lat.abs() < 2.0 {
        along.into()
    } else if lon.abs() < 5.0 {
        side.into()
    } else {
        format!("{along} {side}")
    }
}

fn visible(av: Option<&AgentState>, p: Vec2) -> bool {
    let Some(av) = av else { return true };
    let d = p - av.position();
    let dist = d.norm();
    if dist < 1e-9 {
        return true;
    }
    let bearing = wrap_degrees(d.angle().to_degrees() - av.heading);
    dist <= EGO_RANGE && bearing.abs() <= EGO_FOV_DEGREES / 2.0
}

fn describe_parts<'a>(
    bundle: &'a ScenarioBundle,
    agents: impl Iterator<Item = &'a AgentState>,
    objects: impl Iterator<Item = &'a PlacedObject>,
) -> ScenarioDescription {
    let av = bundle.av();
    let agents: Vec<AgentDescription> = agents
        .map(|a| AgentDescription {
            kind: a.kind,
            color: a.color.clone(),
            role: a.role,
            intent: a.intent.clone(),
            approx_speed: round2(a.speed),
            relative_position: relative_position(av, a),
        })
        .collect();
    let mut counts: BTreeMap<ObjectKind, u32> = BTreeMap::new();
    for o in objects {
        *counts.entry(o.kind).or_default() += 1;
    }
    let objects: Vec<ObjectDescription> =
        counts.into_iter().map(|(kind, count)| ObjectDescription { kind, count, placement_hint: String::new() }).collect();
    let road = road_of(&bundle.network);
    let scene_type = classify_scene(&bundle.network, &bundle.objects);
    let narrative = format!(
        "{} scene on a {:?} road with {} road users and {} static objects.",
        scene_type.label(),
        road.layout,
        agents.len(),
        objects.iter().map(|o| o.count).sum::<u32>()
    );
    ScenarioDescription { road, objects, agents, weather: bundle.weather.clone(), narrative, scene_type }
}

/// Description of what the bundle actually contains.
pub fn describe_bundle(bundle: &ScenarioBundle) -> ScenarioDescription {
    describe_parts(bundle, bundle.agents.iter(), bundle.objects.iter())
}

/// Description as seen from one viewpoint.
pub fn describe_view(bundle: &ScenarioBundle, view: View) -> ScenarioDescription {
    match view {
        View::Bev => {
            let mut d = describe_bundle(bundle);
            d.agents.iter_mut().for_each(|a| a.color = None);
            d
        }
        View::Ego => {
            let av = bundle.av();
            describe_parts(
                bundle,
                bundle.agents.iter().filter(|a| visible(av, a.position())),
                bundle.objects.iter().filter(|o| visible(av, Vec2::new(o.x, o.y))),
            )
        }
    }
}

/// 1 − cos between the embedded description and the embedded re-derived one.
pub fn objective_distance(
    l: &ScenarioDescription,
    s: &ScenarioBundle,
    embedder: &dyn Embedder,
    describer: impl Fn(&ScenarioBundle) -> ScenarioDescription,
) -> Result<f64, EvalError> {
    let a = embedder.embed(&serialize_description(l))?;
    let b = embedder.embed(&serialize_description(&describer(s)))?;
    Ok(1.0 - cosine_similarity(&a, &b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::{EmbeddingVector, HashingEmbedder, HASHING_DIMENSION};
    use crate::ir::{RoadDescription, RoadSegment};
    use crate::netgen::build_network;
    use crate::testutil::{bundle_for, construction_fixture, intersection_fixture};

    fn road(layout: RoadLayout) -> RoadDescription {
        RoadDescription {
            layout,
            segments: vec![RoadSegment { length: 80.0, lanes_forward: 2, lanes_backward: 1, speed_limit: 13.89 }; 2],
            junction_notes: String::new(),
        }
    }

    #[test]
    fn layouts_are_recovered_from_topology() {
        for layout in [
            RoadLayout::Straight,
            RoadLayout::Curve,
            RoadLayout::TJunction,
            RoadLayout::CrossIntersection,
            RoadLayout::Merge,
            RoadLayout::Roundabout,
        ] {
            assert_eq!(infer_layout(&build_network(&road(layout))), layout);
        }
    }

    #[test]
    fn scene_classes() {
        let b = bundle_for(&construction_fixture(), 1);
        assert_eq!(classify_scene(&b.network, &b.objects), SceneType::ConstructionZone);
        assert_eq!(classify_scene(&b.network, &[]), SceneType::General);
        let i = bundle_for(&intersection_fixture(), 1);
        assert_eq!(classify_scene(&i.network, &i.objects), SceneType::Intersection);
        let merge = build_network(&road(RoadLayout::Merge));
        assert_eq!(classify_scene(&merge, &[]), SceneType::General);
    }

    #[test]
    fn description_of_bundle_keeps_counts() {
        let desc = construction_fixture();
        let b = bundle_for(&desc, 3);
        let d = describe_bundle(&b);
        assert_eq!(d.scene_type, desc.scene_type);
        assert_eq!(d.road.layout, desc.road.layout);
        assert_eq!(d.road.segments[0].lanes_forward, desc.road.segments[0].lanes_forward);
        assert_eq!(d.object_count(ObjectKind::Cone), desc.object_count(ObjectKind::Cone));
        assert_eq!(d.agents.len(), b.agents.len());
        assert_eq!(d.agents.iter().filter(|a| a.relative_position == "ego").count(), 1);
    }

    #[test]
    fn views() {
        let b = bundle_for(&construction_fixture(), 3);
        assert!(describe_view(&b, View::Bev).agents.iter().all(|a| a.color.is_none()));
        let mut far = b.clone();
        let av = far.agents.iter().position(|a| a.role == crate::ir::Role::AV).unwrap();
        let p = far.agents[av].position() - Vec2::from_angle(far.agents[av].heading.to_radians()) * 30.0;
        let other = (0..far.agents.len()).find(|&i| i != av).unwrap();
        far.agents[other].x = p.x;
        far.agents[other].y = p.y;
        assert_eq!(describe_view(&far, View::Ego).agents.len(), far.agents.len() - 1);
    }

    #[test]
    fn exact_reconstruction_has_zero_distance() {
        let desc = construction_fixture();
        let b = bundle_for(&desc, 1);
        let d = objective_distance(&desc, &b, &HashingEmbedder::default(), |s| s.description.clone()).unwrap();
        assert!(d.abs() < 1e-12);
    }

    /// Independent recomputation of the hashing embedding and cosine.
    fn oracle_distance(a: &str, b: &str) -> f64 {
        fn fnv(s: &str) -> u64 {
            let mut h: u64 = 0xcbf29ce484222325;
            for byte in s.bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h
        }
        let embed = |t: &str| {
            let mut v = vec![0.0f64; HASHING_DIMENSION];
            let lower = t.to_lowercase();
            let mut cur = String::new();
            for ch in lower.chars().chain(std::iter::once(' ')) {
                if ch.is_alphanumeric() {
                    cur.push(ch);
                } else if !cur.is_empty() {
                    v[(fnv(&cur) % HASHING_DIMENSION as u64) as usize] += 1.0;
                    cur.clear();
                }
            }
            v
        };
        let (u, w) = (embed(a), embed(b));
        let dot: f64 = u.iter().zip(&w).map(|(x, y)| x * y).sum();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        1.0 - dot / (nu * nw)
    }

    #[test]
    fn weather_change_matches_oracle() {
        let desc = construction_fixture();
        let mut b = bundle_for(&desc, 1);
        b.weather.precipitation = 0.8;
        b.weather.fog_density = 0.35;
        let describe = |s: &ScenarioBundle| {
            let mut d = s.description.clone();
            d.weather = s.weather.clone();
            d
        };
        let got = objective_distance(&desc, &b, &HashingEmbedder::default(), describe).unwrap();
        let want = oracle_distance(&serialize_description(&desc), &serialize_description(&describe(&b)));
        assert!(got > 0.0);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    struct Zero;
    impl Embedder for Zero {
        fn embed(&self, _: &str) -> Result<EmbeddingVector, EvalError> {
            Ok(EmbeddingVector::new(vec![0.0; 4]))
        }
    }

    #[test]
    fn empty_embedding_is_an_error() {
        let desc = construction_fixture();
        let b = bundle_for(&desc, 1);
        assert_eq!(objective_distance(&desc, &b, &Zero, describe_bundle), Err(EvalError::ZeroVector));
    }
}
