use proptest::prelude::*;

use super::*;
use crate::ir::{
    AgentDescription, AgentKind, ObjectDescription, ObjectKind, RoadDescription, RoadLayout, RoadSegment, Role,
    ScenarioDescription, SceneType, WeatherDescription,
};
use crate::kb::PromptKnowledgeBase;
use crate::netgen::{build_network, DEFAULT_LANE_WIDTH};
use crate::provider::MockProvider;
use crate::testutil::construction_fixture;

fn road(layout: RoadLayout, length: f64, fw: u32, bw: u32) -> RoadDescription {
    RoadDescription {
        layout,
        segments: vec![RoadSegment { length, lanes_forward: fw, lanes_backward: bw, speed_limit: 13.89 }],
        junction_notes: String::new(),
    }
}

fn agent(kind: AgentKind, role: Role, intent: &str) -> AgentDescription {
    AgentDescription { kind, color: None, role, intent: intent.into(), approx_speed: 8.0, relative_position: String::new() }
}

fn desc(road: RoadDescription, agents: Vec<AgentDescription>, objects: Vec<ObjectDescription>) -> ScenarioDescription {
    ScenarioDescription {
        road,
        objects,
        agents,
        weather: WeatherDescription::default(),
        narrative: String::new(),
        scene_type: SceneType::General,
    }
}

fn generate(d: &ScenarioDescription, c: &PlacementConstraints) -> Result<Vec<AgentState>, CompgenError> {
    let net = build_network(&d.road);
    generate_agents(d, &net, c, &PromptKnowledgeBase::builtin(), &MockProvider::new(c.seed), 3)
}

/// Every pair's center distance, computed directly from coordinates.
fn min_pairwise(states: &[AgentState]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..states.len() {
        for j in 0..states.len() {
            if i != j {
                let d = ((states[i].x - states[j].x).powi(2) + (states[i].y - states[j].y).powi(2)).sqrt();
                best = best.min(d);
            }
        }
    }
    best
}

fn on_lane(net: &RoadNetwork, a: &AgentState) -> bool {
    let line = lane_polyline(net, &a.lane).unwrap();
    let (s, lat) = line.project(a.position());
    (s - a.s).abs() < 1e-6 && lat.abs() <= DEFAULT_LANE_WIDTH / 2.0 - a.width / 2.0 + 1e-6 && a.s >= 0.0 && a.s <= line.length()
}

#[test]
fn two_cars_keep_the_gap() {
    let d = desc(
        road(RoadLayout::Straight, 100.0, 1, 1),
        vec![agent(AgentKind::Car, Role::AV, "proceed"), agent(AgentKind::Car, Role::BV, "follow lane")],
        vec![],
    );
    let states = generate(&d, &PlacementConstraints::default()).unwrap();
    let net = build_network(&d.road);
    assert_eq!(states.len(), 2);
    assert!(states.iter().all(|a| on_lane(&net, a)));
    assert!(min_pairwise(&states) >= 4.0);
    assert_eq!(states.iter().filter(|a| a.role == Role::AV).count(), 1);
}

#[test]
fn ten_cars_do_not_fit_on_twenty_meters() {
    let mut agents = vec![agent(AgentKind::Car, Role::AV, "proceed")];
    agents.extend((0..9).map(|_| agent(AgentKind::Car, Role::BV, "follow lane")));
    let d = desc(road(RoadLayout::Straight, 20.0, 1, 0), agents, vec![]);
    assert!(matches!(generate(&d, &PlacementConstraints::default()), Err(CompgenError::PlacementInfeasible(_))));
}

#[test]
fn intersection_shortest_distance_matches_oracle() {
    let d = desc(
        road(RoadLayout::CrossIntersection, 60.0, 2, 1),
        vec![
            agent(AgentKind::Car, Role::AV, "go straight"),
            agent(AgentKind::Car, Role::BV, "turn left across ego"),
            agent(AgentKind::Truck, Role::BV, "wait at the stop line"),
            agent(AgentKind::Bus, Role::BV, "follow lane"),
            agent(AgentKind::Pedestrian, Role::VRU, "cross the road"),
            agent(AgentKind::Cyclist, Role::VRU, "ride along the curb"),
        ],
        vec![],
    );
    for seed in 0..5 {
        let states = generate(&d, &PlacementConstraints { seed, ..Default::default() }).unwrap();
        assert_eq!(states.len(), 6);
        let got = shortest_distance(&states).unwrap();
        assert!((got - min_pairwise(&states)).abs() < 1e-12);
        assert!(got >= 2.0);
    }
}

#[test]
fn implicit_ego_is_added() {
    let d = desc(road(RoadLayout::Straight, 100.0, 1, 1), vec![agent(AgentKind::Car, Role::BV, "follow lane")], vec![]);
    let states = generate(&d, &PlacementConstraints::default()).unwrap();
    assert_eq!(states.len(), 2);
    assert_eq!(states[0].id, IMPLICIT_EGO_ID);
    assert_eq!(states[0].role, Role::AV);
}

#[test]
fn conflict_pair_gap_is_tightened() {
    let d = desc(
        road(RoadLayout::Straight, 200.0, 2, 0),
        vec![agent(AgentKind::Car, Role::AV, "proceed"), agent(AgentKind::Car, Role::BV, "cut in from the left")],
        vec![],
    );
    for seed in 0..10 {
        let c = PlacementConstraints { seed, min_gap: 8.0, ..Default::default() };
        let states = generate(&d, &c).unwrap();
        let gap = states[0].position().distance(states[1].position());
        assert!(gap >= c.min_gap / 2.0 - 1e-9 && gap <= c.min_gap + 1e-9, "seed {seed}: {gap}");
    }
}

fn objects(d: &ScenarioDescription) -> Vec<PlacedObject> {
    let net = build_network(&d.road);
    generate_objects(d, &net, &PlacementConstraints::default(), &PromptKnowledgeBase::builtin(), &MockProvider::new(0), 3).unwrap()
}

#[test]
fn taper_is_evenly_spaced_and_monotone() {
    let d = construction_fixture();
    let placed = objects(&d);
    let net = build_network(&d.road);
    let first = crate::netgen::primary_route(&net)[0].clone();
    let line = lane_polyline(&net, &LaneRef::new(first, 0)).unwrap();
    let cones: Vec<(f64, f64)> =
        placed.iter().filter(|o| o.kind == ObjectKind::Cone).map(|o| line.project(Vec2::new(o.x, o.y))).collect();
    assert_eq!(cones.len(), 5);
    let spacing: Vec<f64> = cones.windows(2).map(|w| w[1].0 - w[0].0).collect();
    assert!(spacing.iter().all(|s| (s - spacing[0]).abs() < 1e-6 && *s > 0.0));
    let lateral: Vec<f64> = cones.iter().map(|c| c.1).collect();
    assert!(lateral.windows(2).all(|w| w[1] > w[0]) || lateral.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn warning_sign_stands_upstream() {
    let mut d = construction_fixture();
    d.objects.push(ObjectDescription { kind: ObjectKind::WarningSign, count: 1, placement_hint: String::new() });
    let placed = objects(&d);
    let net = build_network(&d.road);
    let line = lane_polyline(&net, &LaneRef::new(crate::netgen::primary_route(&net)[0].clone(), 0)).unwrap();
    let s_of = |k: ObjectKind| {
        placed.iter().filter(|o| o.kind == k).map(|o| line.project(Vec2::new(o.x, o.y)).0).fold(f64::INFINITY, f64::min)
    };
    assert!(s_of(ObjectKind::Cone) - s_of(ObjectKind::WarningSign) >= 15.0 - 1e-9);
}

#[test]
fn random_trip_is_seeded() {
    let net = build_network(&road(RoadLayout::CrossIntersection, 80.0, 2, 1));
    assert_eq!(random_trip_placement(&net, 8, 3), random_trip_placement(&net, 8, 3));
    assert_ne!(random_trip_placement(&net, 8, 3), random_trip_placement(&net, 8, 4));
    assert!(random_trip_placement(&net, 0, 3).is_empty());
}

#[test]
fn random_trip_splits_equal_lanes_evenly() {
    let net = build_network(&road(RoadLayout::Straight, 100.0, 1, 1));
    let placed = random_trip_placement(&net, 1000, 11);
    let on_first = placed.iter().filter(|a| a.lane == placed[0].lane).count();
    assert!((450..=550).contains(&on_first), "{on_first}");
}

#[test]
fn random_trip_can_break_the_gap() {
    let net = build_network(&road(RoadLayout::Straight, 60.0, 1, 0));
    let violated = (0..50).any(|seed| shortest_distance(&random_trip_placement(&net, 6, seed)).unwrap() < 4.0);
    assert!(violated);
}

fn at(x: f64, y: f64, heading: f64) -> AgentState {
    let mut a = crate::testutil::bundle_for(&construction_fixture(), 0).agents[0].clone();
    a.x = x;
    a.y = y;
    a.heading = heading;
    a
}

#[test]
fn diversity_examples() {
    let one = placement_diversity(&[vec![at(0.0, 0.0, 0.0), at(5.0, 0.0, 0.0)]]);
    assert_eq!(one.shortest_distance.mean, 5.0);
    assert_eq!(one.shortest_distance.std, 0.0);
    let yaw = placement_diversity(&[vec![at(0.0, 0.0, 90.0), at(10.0, 0.0, -90.0)]]);
    assert!(yaw.vehicle_yaw.mean.abs() < 1e-12);
    // sample std of {90, −90}: sqrt((90² + 90²) / 1)
    assert!((yaw.vehicle_yaw.std - (2.0f64 * 8100.0).sqrt()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn placement_is_deterministic_on_lane_and_above_floor(seed in 0u64..10_000, n in 1usize..6, gap in 2.0f64..8.0) {
        let mut agents = vec![agent(AgentKind::Car, Role::AV, "proceed")];
        let intents = ["follow lane", "cut in", "sudden braking", "overtake"];
        agents.extend((0..n).map(|i| agent(AgentKind::Car, Role::BV, intents[i % intents.len()])));
        let d = desc(road(RoadLayout::Straight, 300.0, 2, 1), agents, vec![]);
        let c = PlacementConstraints { seed, min_gap: gap, ..Default::default() };
        let a = generate(&d, &c).unwrap();
        prop_assert_eq!(&a, &generate(&d, &c).unwrap());
        let net = build_network(&d.road);
        for s in &a {
            prop_assert!(on_lane(&net, s), "{:?}", s);
            prop_assert!(s.heading > -180.0 && s.heading <= 180.0);
        }
        prop_assert!(min_pairwise(&a) >= gap / 2.0 - 1e-9);
    }

    #[test]
    fn object_counts_are_preserved(counts in prop::collection::vec(0u32..6, 5)) {
        let objs: Vec<ObjectDescription> = ObjectKind::ALL
            .iter()
            .zip(&counts)
            .filter(|(_, c)| **c > 0)
            .map(|(k, c)| ObjectDescription { kind: *k, count: *c, placement_hint: "closure".into() })
            .collect();
        let d = desc(road(RoadLayout::Straight, 200.0, 2, 1), vec![agent(AgentKind::Car, Role::AV, "proceed")], objs);
        let placed = objects(&d);
        prop_assert_eq!(placed.len() as u32, counts.iter().sum::<u32>());
        for k in ObjectKind::ALL {
            prop_assert_eq!(placed.iter().filter(|o| o.kind == k).count() as u32, d.object_count(k));
        }
    }

    #[test]
    fn random_trip_agents_are_on_lanes(seed in 0u64..10_000, n in 0usize..20) {
        let net = build_network(&road(RoadLayout::TJunction, 50.0, 1, 1));
        for a in random_trip_placement(&net, n, seed) {
            prop_assert!(on_lane(&net, &a));
        }
    }
}
