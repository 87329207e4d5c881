use proptest::prelude::*;

use super::*;
use crate::ir::{DetectedElement, RoadLayout, Role, SceneType, VideoFrame};
use crate::provider::{MockFaults, MockProvider};

fn kb() -> PromptKnowledgeBase {
    PromptKnowledgeBase::builtin()
}

fn cfg() -> InterpreterConfig {
    InterpreterConfig::default()
}

fn mock() -> MockProvider {
    MockProvider::new(7)
}

#[test]
fn forward_distance_examples() {
    assert_eq!(integrate_forward_distance(&[50.0, 45.0, 40.0]).unwrap(), 10.0);
    assert_eq!(integrate_forward_distance(&[50.0, 55.0]).unwrap(), 0.0);
    assert!(matches!(integrate_forward_distance(&[50.0]), Err(InterpretError::Input(InputError::InsufficientFrames(1)))));
    assert!(matches!(integrate_forward_distance(&[50.0, 0.0]), Err(InterpretError::NonPositiveDepth)));
}

#[test]
fn cut_in_request() {
    let d = interpret(&MultimodalInput::TextRequest("two vehicles, one cuts in on a highway".into()), &kb(), &mock(), &cfg()).unwrap();
    assert_eq!(d.road.layout, RoadLayout::Straight);
    assert_eq!(d.agents.iter().filter(|a| a.kind == AgentKind::Car).count(), 2);
}

#[test]
fn construction_request() {
    let d = expand_short_request("construction zone test", &kb(), &mock(), &cfg()).unwrap();
    assert!(d.object_count(ObjectKind::Cone) >= 1);
    assert_eq!(d.scene_type, SceneType::ConstructionZone);
}

#[test]
fn left_turn_request() {
    let d = expand_short_request("intersection left turn conflict", &kb(), &mock(), &cfg()).unwrap();
    assert_eq!(d.road.layout, RoadLayout::CrossIntersection);
    assert!(d.agents.len() >= 2);
}

#[test]
fn empty_request_is_unparseable() {
    let r = expand_short_request("", &kb(), &mock(), &cfg());
    assert!(matches!(r, Err(InterpretError::UnparseableAfterRetries { attempts: 4, .. })), "{r:?}");
}

#[test]
fn malformed_answer_is_retried_once() {
    let p = MockProvider::with_faults(7, MockFaults { malformed_description_once: true, ..Default::default() });
    let r = interpret_detailed(&MultimodalInput::TextRequest("a car follows a truck".into()), &kb(), &p, &cfg()).unwrap();
    assert_eq!(r.attempt_count, 2);
    r.parsed.unwrap().validate().unwrap();
}

#[test]
fn unavailable_provider_surfaces() {
    let p = MockProvider::with_faults(7, MockFaults { unavailable: true, ..Default::default() });
    let r = expand_short_request("a car", &kb(), &p, &cfg());
    assert!(matches!(r, Err(InterpretError::ProviderUnavailable(_))));
}

const PEDESTRIAN_REPORT: &str = "V1, a sedan travelling northbound on a two-lane urban street at dusk, struck a pedestrian \
who was crossing mid-block outside the crosswalk. The driver stated the pedestrian stepped out from between parked vehicles. \
Road surface was dry and the posted limit was 35 mph.";

#[test]
fn crash_report_with_pedestrian() {
    let d = interpret(&MultimodalInput::CrashReport(PEDESTRIAN_REPORT.into()), &kb(), &mock(), &cfg()).unwrap();
    assert_eq!(d.agents.iter().filter(|a| a.role == Role::VRU).count(), 1);
}

#[test]
fn wet_night_report() {
    let text = "Two vehicles collided on a wet road at night. V1 rear-ended V2 after V2 braked suddenly for debris on the road.";
    let d = restructure_report(text, &kb(), &mock(), &cfg()).unwrap();
    assert!(d.weather.precipitation > 0.0);
    assert!(d.weather.time_of_day >= 20.0 || d.weather.time_of_day <= 5.0);
}

#[test]
fn rear_end_report() {
    let text = "Vehicle one, a pickup, rear-ended vehicle two, a car, which had stopped for traffic. Both vehicles were \
travelling in the right lane of a divided highway in daylight.";
    let d = restructure_report(text, &kb(), &mock(), &cfg()).unwrap();
    assert_eq!(d.agents.iter().filter(|a| a.kind == AgentKind::Car).count(), 2);
    assert!(d.agents.iter().all(|a| !a.intent.is_empty()));
}

#[test]
fn report_without_road_recovers() {
    let text = "Vehicle one struck vehicle two from behind when vehicle two slowed down. Nobody was injured and both \
drivers exchanged insurance details before the police arrived at the scene some minutes later.";
    let r = restructure_report_detailed(text, &kb(), &mock(), &cfg()).unwrap();
    assert_eq!(r.attempt_count, 2);
    assert_eq!(r.parsed.unwrap().road.layout, RoadLayout::Straight);
}

fn image(elements: &[(&str, u32)], caption: &str) -> ImageDescriptor {
    ImageDescriptor {
        captions: vec![caption.into()],
        elements: elements.iter().map(|(l, c)| DetectedElement { label: l.to_string(), count: *c }).collect(),
    }
}

#[test]
fn image_counts_are_kept() {
    let d = interpret_image_descriptor(&image(&[("car", 3), ("traffic cone", 5)], "a street with roadworks"), &kb(), &mock(), &cfg())
        .unwrap();
    assert_eq!(d.agents.iter().filter(|a| a.kind == AgentKind::Car).count(), 3);
    assert_eq!(d.object_count(ObjectKind::Cone), 5);
}

#[test]
fn image_with_buildings_is_straight() {
    let d = interpret_image_descriptor(&image(&[("car", 1)], "buildings aligned along both sides of the street"), &kb(), &mock(), &cfg())
        .unwrap();
    assert_eq!(d.road.layout, RoadLayout::Straight);
}

#[test]
fn image_without_elements_has_no_agents() {
    let d = interpret_image_descriptor(&image(&[], "an empty road"), &kb(), &mock(), &cfg()).unwrap();
    assert!(d.agents.is_empty());
}

fn video(depths: &[f64]) -> VideoDescriptor {
    VideoDescriptor {
        frames: depths.iter().map(|d| VideoFrame { caption: "a car ahead on a straight road".into(), forward_depth: *d }).collect(),
    }
}

#[test]
fn two_frame_video() {
    let d = interpret_video_descriptor(&video(&[30.0, 24.0]), &kb(), &mock(), &cfg()).unwrap();
    assert!((d.road.total_length() - 6.0).abs() < 1e-9);
}

#[test]
fn eleven_frame_video_matches_oracle() {
    let depths = [80.0, 76.5, 71.0, 72.0, 66.25, 60.0, 58.5, 59.0, 50.0, 41.75, 40.0];
    // independent summation over the fixture
    let mut want = 0.0;
    let mut i = 1;
    while i < depths.len() {
        if depths[i] < depths[i - 1] {
            want += depths[i - 1] - depths[i];
        }
        i += 1;
    }
    let d = interpret_video_descriptor(&video(&depths), &kb(), &mock(), &cfg()).unwrap();
    assert!((d.road.total_length() - want).abs() < 1e-9);
}

#[test]
fn single_frame_video_is_rejected() {
    let r = interpret_video_descriptor(&video(&[30.0]), &kb(), &mock(), &cfg());
    assert!(matches!(r, Err(InterpretError::Input(InputError::InsufficientFrames(1)))));
}

#[test]
fn gps_box_is_validated() {
    let bad = GpsBoundingBox { min_lat: 1.0, min_lon: 1.0, max_lat: 0.0, max_lon: 2.0 };
    assert!(matches!(interpret_gps(&bad, None, &kb(), &mock(), &cfg()), Err(InterpretError::Input(InputError::InvalidBoundingBox))));
    let good = GpsBoundingBox { min_lat: 0.0, min_lon: 0.0, max_lat: 0.01, max_lon: 0.01 };
    let facts = NetworkFacts { edges: 8, nodes: 5, max_junction_degree: 4, route_length: 200.0, max_lanes: 2, speed_limit: 13.89 };
    let d = interpret_gps(&good, Some(&facts), &kb(), &mock(), &cfg()).unwrap().parsed.unwrap();
    assert_eq!(d.road.layout, RoadLayout::CrossIntersection);
}

proptest! {
    #[test]
    fn forward_distance_equals_pairwise_sum(depths in prop::collection::vec(0.5f64..200.0, 2..30)) {
        let mut want = 0.0;
        for i in 0..depths.len() - 1 {
            want += f64::max(0.0, depths[i] - depths[i + 1]);
        }
        let got = integrate_forward_distance(&depths).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!((got - want).abs() < 1e-9);
        let mut extended = depths.clone();
        extended.push(*depths.last().unwrap());
        prop_assert_eq!(integrate_forward_distance(&extended).unwrap(), got);
    }

    #[test]
    fn same_seed_same_description(seed in 0u64..1000, words in prop::sample::subsequence(
        vec!["two", "cars", "truck", "pedestrian", "intersection", "highway", "cut", "in", "rain", "night", "construction"], 1..8)) {
        let text = words.join(" ");
        let a = expand_short_request(&text, &kb(), &MockProvider::new(seed), &cfg());
        let b = expand_short_request(&text, &kb(), &MockProvider::new(seed), &cfg());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "diverging outcomes"),
        }
    }

    #[test]
    fn attempts_never_exceed_budget(max_retries in 0u32..5, malformed in any::<bool>()) {
        let p = MockProvider::with_faults(3, MockFaults { malformed_description_once: malformed, ..Default::default() });
        let c = InterpreterConfig { max_retries, ..cfg() };
        match expand_short_request_detailed("a bus overtakes a cyclist", &kb(), &p, &c) {
            Ok(r) => prop_assert!(r.attempt_count <= max_retries + 1),
            Err(InterpretError::UnparseableAfterRetries { attempts, .. }) => prop_assert_eq!(attempts, max_retries + 1),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn image_vehicle_counts_are_preserved(cars in 0u32..5, trucks in 0u32..3, buses in 0u32..2) {
        let d = interpret_image_descriptor(&image(&[("car", cars), ("truck", trucks), ("bus", buses)], "a road"), &kb(), &mock(), &cfg())
            .unwrap();
        prop_assert_eq!(d.vehicle_count() as u32, cars + trucks + buses);
    }
}

#[test]
fn direct_prompt_without_interpreter_fails() {
    let r = direct_scenario_detailed(&MultimodalInput::TextRequest("two cars on a highway".into()), &kb(), &mock(), &cfg());
    assert!(matches!(r, Err(InterpretError::UnparseableAfterRetries { attempts: 4, .. })));
}

#[test]
fn facts_of_a_cross_network() {
    let road = crate::ir::RoadDescription {
        layout: RoadLayout::CrossIntersection,
        segments: vec![crate::ir::RoadSegment { length: 50.0, lanes_forward: 2, lanes_backward: 1, speed_limit: 13.89 }; 4],
        junction_notes: String::new(),
    };
    let f = NetworkFacts::of(&crate::netgen::build_network(&road));
    assert_eq!((f.max_junction_degree, f.max_lanes), (4, 2));
    assert_eq!(f.speed_limit, 13.89);
}
