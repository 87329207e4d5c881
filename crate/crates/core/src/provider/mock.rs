//! Deterministic offline provider.
//!
//! Answers every built-in template from the prompt alone: interpreter
//! templates go through a keyword engine, generator templates through the
//! deterministic builders. Faults can be injected to exercise the retry loop
//! and the validator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionProvider, ProviderError, FEEDBACK_HEADER};
use crate::compgen::{plan_agents, plan_objects, AgentPlanEntry, PlacementConstraints};
use crate::interpreter::{element_kind, Element};
use crate::ir::{
    description_from_value, serialize_description, AgentDescription, AgentKind, ImageDescriptor, ObjectDescription,
    ObjectKind, RoadDescription, RoadLayout, RoadSegment, Role, ScenarioDescription, SceneType, WeatherDescription,
};
use crate::kb::{input_block, names, template_of, KNOWLEDGE_HEADER, REASONING_HEADER};
use crate::netgen::{build_network, serialize_sumo_xml, RoadNetwork};

/// Structural faults the mock can write into a generated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFault {
    /// `#` appended to the first edge id.
    HashInEdgeId,
    /// First `spreadType="right"` becomes `"left"`.
    SpreadTypeLeft,
    /// A lane element without a shape.
    MissingLaneShape,
    /// An undeclared `function` attribute on the first edge.
    FunctionAttribute,
}

impl NetworkFault {
    pub const ALL: [NetworkFault; 4] =
        [NetworkFault::HashInEdgeId, NetworkFault::SpreadTypeLeft, NetworkFault::MissingLaneShape, NetworkFault::FunctionAttribute];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockFaults {
    /// Injected on every network answer.
    pub network_fault: Option<NetworkFault>,
    /// Injected only on first attempts, so a retry repairs it.
    pub network_fault_once: Option<NetworkFault>,
    /// First description answer lacks its weather section.
    pub malformed_description_once: bool,
    /// Every call fails as if the endpoint were down.
    pub unavailable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    seed: u64,
    faults: MockFaults,
}

const PROSE: &str = "Here is a scenario: a car drives down a road while another vehicle approaches. \
The weather is clear and traffic is light.";

/// Chance a network answer is corrupted when the prompt has no reasoning steps.
const NO_REASONING_FAULT_RATE: f64 = 0.5;
/// Chance an agent plan reuses blueprint names when the prompt has no domain knowledge.
const NO_KNOWLEDGE_REUSE_RATE: f64 = 0.7;

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed, faults: MockFaults::default() }
    }

    pub fn with_faults(seed: u64, faults: MockFaults) -> Self {
        MockProvider { seed, faults }
    }

    fn rng(&self, template: &str, input: &str) -> ChaCha8Rng {
        let mut key = template.as_bytes().to_vec();
        key.push(0);
        key.extend_from_slice(input.as_bytes());
        ChaCha8Rng::seed_from_u64(self.seed ^ crate::fnv1a(&key))
    }
}

impl CompletionProvider for MockProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        if self.faults.unavailable {
            return Err(ProviderError::Unavailable("mock provider configured as unavailable".into()));
        }
        let Some(template) = template_of(prompt) else {
            return Ok(PROSE.into());
        };
        let input = input_block(prompt).unwrap_or("").trim();
        let retry = prompt.contains(FEEDBACK_HEADER);
        let mut rng = self.rng(template, input);
        let answer = match template {
            names::EXPAND_REQUEST | names::RESTRUCTURE_REPORT if !input.is_empty() => {
                let report = template == names::RESTRUCTURE_REPORT;
                let mut d = describe_text(input, &mut rng);
                d.narrative = input.to_string();
                let mut value = description_value(&d);
                if report && !mentions_road(input) && !retry {
                    remove(&mut value, "road");
                }
                self.finish_description(value, retry)
            }
            names::INTERPRET_IMAGE => match serde_json::from_str::<ImageDescriptor>(input) {
                Ok(desc) => self.finish_description(description_value(&describe_image(&desc, &mut rng)), retry),
                Err(_) => PROSE.into(),
            },
            names::INTERPRET_VIDEO => match serde_json::from_str::<Value>(input) {
                Ok(v) => self.finish_description(description_value(&describe_video(&v, &mut rng)), retry),
                Err(_) => PROSE.into(),
            },
            names::INTERPRET_GPS => match serde_json::from_str::<Value>(input) {
                Ok(v) => self.finish_description(description_value(&describe_gps(&v)), retry),
                Err(_) => PROSE.into(),
            },
            names::NET_GENERATOR => match serde_json::from_str::<RoadDescription>(input) {
                Ok(road) => {
                    let mut fault = self.faults.network_fault.or(if retry { None } else { self.faults.network_fault_once });
                    if fault.is_none() && !prompt.contains(REASONING_HEADER) && rng.gen_bool(NO_REASONING_FAULT_RATE) {
                        fault = Some(NetworkFault::ALL[rng.gen_range(0..NetworkFault::ALL.len())]);
                    }
                    network_answer(&build_network(&road), fault)
                }
                Err(_) => PROSE.into(),
            },
            names::AGENT_GENERATOR => match placement_parts(input) {
                Some((desc, net, c)) => {
                    let reuse = !prompt.contains(KNOWLEDGE_HEADER) && rng.gen_bool(NO_KNOWLEDGE_REUSE_RATE);
                    match plan_agents(&desc, &net, &c) {
                        Ok(states) => {
                            let mut entries: Vec<AgentPlanEntry> = states.iter().map(|a| AgentPlanEntry::from_state(a, &net)).collect();
                            if reuse {
                                if let Some(e) = entries.last_mut() {
                                    e.blueprint = format!("{0}.{0}", e.blueprint);
                                }
                            }
                            json!({ "agents": entries }).to_string()
                        }
                        Err(e) => json!({ "infeasible": e.to_string() }).to_string(),
                    }
                }
                None => PROSE.into(),
            },
            names::OBJECT_GENERATOR => match placement_parts(input) {
                Some((desc, net, _)) => match plan_objects(&desc, &net) {
                    Ok(objects) => json!({ "objects": objects }).to_string(),
                    Err(e) => json!({ "infeasible": e.to_string() }).to_string(),
                },
                None => PROSE.into(),
            },
            _ => PROSE.into(),
        };
        Ok(answer)
    }
}

impl MockProvider {
    fn finish_description(&self, mut value: Value, retry: bool) -> String {
        if self.faults.malformed_description_once && !retry {
            remove(&mut value, "weather");
        }
        format!("```json\n{}\n```", serde_json::to_string_pretty(&value).expect("values render"))
    }
}

fn description_value(d: &ScenarioDescription) -> Value {
    serde_json::from_str(&serialize_description(d)).expect("canonical documents are JSON")
}

fn remove(value: &mut Value, key: &str) {
    if let Value::Object(map) = value {
        map.remove(key);
    }
}

fn placement_parts(input: &str) -> Option<(ScenarioDescription, RoadNetwork, PlacementConstraints)> {
    let v: Value = serde_json::from_str(input).ok()?;
    let desc = description_from_value(v.get("description")?).ok()?;
    let net: RoadNetwork = serde_json::from_value(v.get("network")?.clone()).ok()?;
    let c: PlacementConstraints = serde_json::from_value(v.get("constraints")?.clone()).ok()?;
    Some((desc, net, c))
}

fn network_answer(net: &RoadNetwork, fault: Option<NetworkFault>) -> String {
    let (nodes, mut edges) = serialize_sumo_xml(net);
    if let Some(f) = fault {
        edges = inject(&edges, f);
    }
    format!("Node file:\n```xml\n{nodes}```\nEdge file:\n```xml\n{edges}```\n")
}

fn inject(edges: &str, fault: NetworkFault) -> String {
    let Some(start) = edges.find("<edge ") else {
        return edges.to_string();
    };
    let line_end = start + edges[start..].find('\n').unwrap_or(edges.len() - start);
    let line = &edges[start..line_end];
    let patched = match fault {
        NetworkFault::HashInEdgeId => {
            let id_end = line[10..].find('"').map(|i| i + 10).unwrap_or(10);
            format!("{}#1{}", &line[..id_end], &line[id_end..])
        }
        NetworkFault::SpreadTypeLeft => line.replacen("spreadType=\"right\"", "spreadType=\"left\"", 1),
        NetworkFault::FunctionAttribute => line.replacen("<edge ", "<edge function=\"internal\" ", 1),
        NetworkFault::MissingLaneShape => match line.strip_suffix("/>") {
            Some(open) => format!("{open}>\n        <lane index=\"0\"/>\n    </edge>"),
            None => format!("{line}\n        <lane index=\"0\"/>"),
        },
    };
    let mut out = edges.to_string();
    out.replace_range(start..line_end, &patched);
    if fault == NetworkFault::MissingLaneShape && !line.ends_with("/>") {
        // the edge already lists its own lane 0; drop the original
        if let Some(pos) = out[start + patched.len()..].find("<lane index=\"0\" ") {
            let at = start + patched.len() + pos;
            let end = at + out[at..].find('\n').map_or(out.len() - at, |i| i + 1);
            let line_start = out[..at].rfind('\n').map_or(at, |i| i + 1);
            out.replace_range(line_start..end, "");
        }
    }
    out
}

// ---- keyword engine ----

const NUMBER_WORDS: &[(&str, u32)] = &[
    ("a", 1),
    ("an", 1),
    ("one", 1),
    ("single", 1),
    ("two", 2),
    ("pair", 2),
    ("both", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("twelve", 12),
];

const COLORS: &[&str] = &["red", "blue", "white", "black", "silver", "gray", "grey", "green", "yellow", "orange"];

const ROAD_WORDS: &[&str] = &["road", "street", "highway", "freeway", "lane", "avenue", "interstate", "carriageway"];

fn words(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

fn agent_word(w: &str) -> Option<Option<AgentKind>> {
    Some(match w.trim_end_matches('s') {
        "vehicle" => None,
        "car" | "sedan" | "suv" | "taxi" | "van" | "hatchback" | "pickup" => Some(AgentKind::Car),
        "truck" | "lorry" | "semi" => Some(AgentKind::Truck),
        "bus" | "buse" | "coach" => Some(AgentKind::Bus),
        "motorcycle" | "motorbike" | "scooter" | "motorcyclist" => Some(AgentKind::Motorcycle),
        "cyclist" | "bicycle" | "bike" | "bicyclist" => Some(AgentKind::Cyclist),
        "pedestrian" | "walker" | "child" | "children" | "person" | "people" | "jogger" => Some(AgentKind::Pedestrian),
        _ => return None,
    })
}

fn object_word(w: &str) -> Option<ObjectKind> {
    Some(match w.trim_end_matches('s') {
        "cone" => ObjectKind::Cone,
        "barrier" | "barricade" => ObjectKind::Barrier,
        "sign" => ObjectKind::WarningSign,
        "fence" => ObjectKind::Fence,
        "marking" => ObjectKind::LaneMarking,
        _ => return None,
    })
}

fn number_before(ws: &[String], i: usize) -> Option<u32> {
    // allow one adjective between the number and the noun
    for back in 1..=3 {
        let w = ws.get(i.checked_sub(back)?)?;
        if let Ok(n) = w.parse::<u32>() {
            return Some(n);
        }
        if let Some((_, n)) = NUMBER_WORDS.iter().find(|(k, _)| k == w) {
            return Some(*n);
        }
    }
    None
}

/// Agent and object counts mentioned in a text. Each kind takes the largest
/// count attached to any of its mentions, a bare mention counting once.
fn mentioned_counts(text: &str) -> (Vec<(AgentKind, u32)>, Option<u32>, Vec<(ObjectKind, Option<u32>)>) {
    let ws = words(text);
    let mut agents: Vec<(AgentKind, u32)> = Vec::new();
    let mut generic: Option<u32> = None;
    let mut objects: Vec<(ObjectKind, Option<u32>)> = Vec::new();
    for (i, w) in ws.iter().enumerate() {
        if i > 0 && ws[i - 1] == "ego" {
            continue;
        }
        if let Some(kind) = agent_word(w) {
            let n = number_before(&ws, i).unwrap_or(1).clamp(1, 12);
            match kind {
                None => generic = Some(generic.map_or(n, |g| g.max(n))),
                Some(k) => match agents.iter_mut().find(|(a, _)| *a == k) {
                    Some(entry) => entry.1 = entry.1.max(n),
                    None => agents.push((k, n)),
                },
            }
        } else if let Some(k) = object_word(w) {
            let n = number_before(&ws, i).filter(|n| *n > 1);
            match objects.iter_mut().find(|(o, _)| *o == k) {
                Some(entry) => entry.1 = entry.1.max(n),
                None => objects.push((k, n)),
            }
        }
    }
    (agents, generic, objects)
}

/// Kind of the vehicle called "ego" in a text, if any.
fn ego_kind(text: &str) -> Option<AgentKind> {
    let ws = words(text);
    let i = ws.iter().position(|w| w == "ego")?;
    match ws.get(i + 1).and_then(|w| agent_word(w)) {
        Some(Some(k)) if k.is_vehicle() => Some(k),
        _ => Some(AgentKind::Car),
    }
}

fn has(text: &str, needles: &[&str]) -> bool {
    needles.iter().any(|n| text.contains(n))
}

fn mentions_road(text: &str) -> bool {
    let t = text.to_ascii_lowercase();
    layout_of(&t).is_some() || has(&t, ROAD_WORDS)
}

fn layout_of(t: &str) -> Option<RoadLayout> {
    if has(t, &["roundabout", "traffic circle", "rotary"]) {
        Some(RoadLayout::Roundabout)
    } else if has(t, &["t-junction", "t junction", "t-intersection", "three-way"]) {
        Some(RoadLayout::TJunction)
    } else if has(t, &["intersection", "junction", "crossroad", "left turn", "right turn", "turns left", "turning left", "unprotected"]) {
        Some(RoadLayout::CrossIntersection)
    } else if has(t, &["merge", "merging", "on-ramp", "ramp"]) {
        Some(RoadLayout::Merge)
    } else if has(t, &["curve", "bend", "winding", "curvy"]) {
        Some(RoadLayout::Curve)
    } else if has(t, &["straight", "highway", "freeway", "road", "street"]) {
        Some(RoadLayout::Straight)
    } else {
        None
    }
}

fn jitter(rng: &mut ChaCha8Rng, v: f64) -> f64 {
    (v * rng.gen_range(0.8..1.2) * 100.0).round() / 100.0
}

fn road_for(layout: RoadLayout, t: &str, rng: &mut ChaCha8Rng) -> RoadDescription {
    let highway = has(t, &["highway", "freeway", "motorway", "interstate"]);
    let (fw, bw, speed) = if highway { (2, 2, 27.78) } else { (2, 1, 13.89) };
    let seg = |length: f64, fw: u32, bw: u32| RoadSegment { length, lanes_forward: fw, lanes_backward: bw, speed_limit: speed };
    let (segments, notes) = match layout {
        RoadLayout::Straight => (vec![seg(jitter(rng, if highway { 300.0 } else { 200.0 }), fw, bw)], ""),
        RoadLayout::Curve => (vec![seg(jitter(rng, 150.0), fw, bw)], ""),
        RoadLayout::TJunction => ((0..3).map(|_| seg(jitter(rng, 60.0), fw, bw)).collect(), "priority T-junction"),
        RoadLayout::CrossIntersection => ((0..4).map(|_| seg(jitter(rng, 60.0), fw, bw)).collect(), "four-arm intersection"),
        RoadLayout::Roundabout => ((0..4).map(|_| seg(jitter(rng, 60.0), fw, bw)).collect(), "single-lane roundabout"),
        RoadLayout::Merge => (
            vec![seg(jitter(rng, 150.0), fw, bw), seg(jitter(rng, 150.0), fw, bw), seg(jitter(rng, 80.0), 1, 0)],
            "on-ramp merge",
        ),
    };
    RoadDescription { layout, segments, junction_notes: notes.into() }
}

fn weather_of(t: &str) -> WeatherDescription {
    let mut w = WeatherDescription::default();
    if has(t, &["rain", "wet", "drizzle", "storm"]) {
        w.precipitation = if has(t, &["heavy", "storm", "downpour"]) { 0.9 } else { 0.6 };
    }
    if has(t, &["snow", "sleet"]) {
        w.precipitation = 0.8;
    }
    if has(t, &["fog", "mist", "haze"]) {
        w.fog_density = 0.6;
    }
    if has(t, &["night", "dark"]) {
        w.time_of_day = 22.0;
        w.sun_altitude = -30.0;
    } else if has(t, &["dusk", "evening", "sunset"]) {
        w.time_of_day = 19.0;
        w.sun_altitude = 5.0;
    } else if has(t, &["dawn", "sunrise", "early morning"]) {
        w.time_of_day = 7.0;
        w.sun_altitude = 10.0;
    }
    w
}

/// Conflict intents named in a text, in a fixed order.
fn conflict_intents(t: &str) -> Vec<&'static str> {
    let mut out = Vec::new();
    if has(t, &["cut in", "cuts in", "cut-in", "cutting in"]) {
        out.push("cut in ahead of ego");
    }
    if has(t, &["left turn", "turns left", "turning left", "unprotected"]) {
        out.push("unprotected left turn across ego path");
    }
    if has(t, &["rear-end", "rear end", "rear-ended", "brake", "braking", "brakes"]) {
        out.push("sudden braking ahead of ego");
    }
    if has(t, &["merge", "merging", "merges"]) {
        out.push("merge into ego lane");
    }
    if has(t, &["overtak", "passes ego", "passing"]) {
        out.push("overtake ego");
    }
    out
}

fn scene_type_for(layout: RoadLayout, objects: &[ObjectDescription]) -> SceneType {
    if objects.iter().any(|o| matches!(o.kind, ObjectKind::Cone | ObjectKind::Barrier)) {
        SceneType::ConstructionZone
    } else if matches!(layout, RoadLayout::CrossIntersection | RoadLayout::TJunction | RoadLayout::Roundabout) {
        SceneType::Intersection
    } else {
        SceneType::General
    }
}

fn agent(kind: AgentKind, role: Role, intent: &str, speed: f64, position: &str) -> AgentDescription {
    AgentDescription {
        kind,
        color: None,
        role,
        intent: intent.into(),
        approx_speed: (speed * 100.0).round() / 100.0,
        relative_position: position.into(),
    }
}

fn vru_speed(kind: AgentKind) -> f64 {
    if kind == AgentKind::Cyclist {
        4.0
    } else {
        1.4
    }
}

/// Builds agents from counts. With `with_av` the first vehicle is the AV.
fn agents_from_counts(counts: &[(AgentKind, u32)], t: &str, limit: f64, with_av: bool, rng: &mut ChaCha8Rng) -> Vec<AgentDescription> {
    let mut intents = conflict_intents(t).into_iter();
    let crossing = has(t, &["cross", "jaywalk", "darts", "steps into", "steps out"]);
    let mut out = Vec::new();
    let mut av_given = !with_av;
    let mut ahead = true;
    for kind in AgentKind::ALL {
        let n = counts.iter().filter(|(k, _)| *k == kind).map(|(_, n)| *n).sum::<u32>();
        for _ in 0..n {
            if kind.is_vulnerable() {
                let intent = if crossing { "crossing the road ahead of ego" } else { "moving along the roadside" };
                out.push(agent(kind, Role::VRU, intent, vru_speed(kind), "roadside ahead"));
            } else if !av_given {
                av_given = true;
                out.push(agent(kind, Role::AV, "proceed along route", 0.8 * limit, "ego"));
            } else if let Some(intent) = intents.next() {
                out.push(agent(kind, Role::BV, intent, rng.gen_range(0.6..0.9) * limit, "adjacent lane ahead"));
            } else {
                let pos = if ahead { "ahead in traffic" } else { "behind in traffic" };
                ahead = !ahead;
                out.push(agent(kind, Role::BV, "follow lane", rng.gen_range(0.6..0.9) * limit, pos));
            }
        }
    }
    let mut colors = words(t).into_iter().filter(|w| COLORS.contains(&w.as_str()));
    for a in out.iter_mut().filter(|a| a.kind.is_vehicle()) {
        match colors.next() {
            Some(c) => a.color = Some(c),
            None => break,
        }
    }
    out
}

fn objects_for(t: &str, mentioned: &[(ObjectKind, Option<u32>)], rng: &mut ChaCha8Rng) -> Vec<ObjectDescription> {
    let construction = has(t, &["construction", "work zone", "roadwork", "road work", "workzone"]);
    let count = |k: ObjectKind| mentioned.iter().find(|(o, _)| *o == k).map(|(_, n)| *n);
    let mut out = Vec::new();
    if construction || count(ObjectKind::Cone).is_some() {
        let n = count(ObjectKind::Cone).flatten().unwrap_or_else(|| rng.gen_range(5..=8));
        out.push(ObjectDescription { kind: ObjectKind::Cone, count: n, placement_hint: "lane closure taper".into() });
        out.push(ObjectDescription { kind: ObjectKind::WarningSign, count: 1, placement_hint: "upstream of the taper".into() });
    }
    if let Some(n) = count(ObjectKind::Barrier) {
        out.push(ObjectDescription { kind: ObjectKind::Barrier, count: n.unwrap_or(2), placement_hint: "behind the taper".into() });
    }
    if let Some(n) = count(ObjectKind::Fence) {
        out.push(ObjectDescription { kind: ObjectKind::Fence, count: n.unwrap_or(3), placement_hint: "along the roadside".into() });
    }
    if let Some(n) = count(ObjectKind::LaneMarking) {
        out.push(ObjectDescription { kind: ObjectKind::LaneMarking, count: n.unwrap_or(4), placement_hint: "lane divider".into() });
    }
    out
}

fn describe_text(text: &str, rng: &mut ChaCha8Rng) -> ScenarioDescription {
    let t = text.to_ascii_lowercase();
    let layout = layout_of(&t).unwrap_or(RoadLayout::Straight);
    let road = road_for(layout, &t, rng);
    let limit = road.segments[0].speed_limit;
    let (mut counts, generic, mentioned_objects) = mentioned_counts(&t);
    let named_vehicles: u32 = counts.iter().filter(|(k, _)| k.is_vehicle()).map(|(_, n)| n).sum();
    if let Some(g) = generic {
        let cars = counts.iter().find(|(k, _)| *k == AgentKind::Car).map_or(0, |(_, n)| *n);
        let extra = g.saturating_sub(named_vehicles);
        if extra > 0 {
            match counts.iter_mut().find(|(k, _)| *k == AgentKind::Car) {
                Some(e) => e.1 = cars + extra,
                None => counts.push((AgentKind::Car, extra)),
            }
        }
    }
    let ego = ego_kind(&t);
    let vehicles: u32 = counts.iter().filter(|(k, _)| k.is_vehicle()).map(|(_, n)| n).sum();
    if vehicles == 0 && ego.is_none() {
        let vrus = counts.iter().any(|(k, _)| k.is_vulnerable());
        counts.push((AgentKind::Car, if vrus { 1 } else { 2 }));
    }
    let agents = match ego {
        Some(kind) => {
            let mut agents = vec![agent(kind, Role::AV, "proceed along route", 0.8 * limit, "ego")];
            agents.extend(agents_from_counts(&counts, &t, limit, false, rng));
            agents
        }
        None => agents_from_counts(&counts, &t, limit, true, rng),
    };
    let objects = objects_for(&t, &mentioned_objects, rng);
    let scene_type = scene_type_for(layout, &objects);
    ScenarioDescription { road, objects, agents, weather: weather_of(&t), narrative: String::new(), scene_type }
}

fn describe_image(desc: &ImageDescriptor, rng: &mut ChaCha8Rng) -> ScenarioDescription {
    let t = desc.captions.join(" ").to_ascii_lowercase();
    let layout = layout_of(&t).unwrap_or(RoadLayout::Straight);
    let road = road_for(layout, &t, rng);
    let mut counts: Vec<(AgentKind, u32)> = Vec::new();
    let mut objects: Vec<ObjectDescription> = Vec::new();
    for e in desc.elements.iter().filter(|e| e.count > 0) {
        match element_kind(&e.label) {
            Some(Element::Agent(k)) => counts.push((k, e.count)),
            Some(Element::Object(k)) => match objects.iter_mut().find(|o| o.kind == k) {
                Some(o) => o.count += e.count,
                None => objects.push(ObjectDescription { kind: k, count: e.count, placement_hint: e.label.clone() }),
            },
            None => {}
        }
    }
    let agents = agents_from_counts(&counts, &t, road.segments[0].speed_limit, false, rng);
    let scene_type = scene_type_for(layout, &objects);
    ScenarioDescription { road, objects, agents, weather: weather_of(&t), narrative: desc.captions.join(" "), scene_type }
}

fn describe_video(v: &Value, rng: &mut ChaCha8Rng) -> ScenarioDescription {
    let captions: Vec<String> = v
        .get("frames")
        .and_then(Value::as_array)
        .map(|fs| fs.iter().filter_map(|f| f.get("caption")?.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let distance = v.get("forward_distance").and_then(Value::as_f64).filter(|d| *d > 0.0).unwrap_or(100.0);
    let t = captions.join(" ").to_ascii_lowercase();
    let layout = layout_of(&t).unwrap_or(RoadLayout::Straight);
    let mut road = road_for(layout, &t, rng);
    if road.segments.len() == 1 {
        road.segments[0].length = distance;
    }
    // the same agent seen in several frames counts once: take the per-kind
    // maximum over frames
    let mut counts: Vec<(AgentKind, u32)> = Vec::new();
    let mut object_counts: Vec<(ObjectKind, u32)> = Vec::new();
    for caption in &captions {
        let (agents, generic, objects) = mentioned_counts(caption);
        let mut frame = agents;
        if frame.iter().all(|(k, _)| !k.is_vehicle()) {
            if let Some(g) = generic {
                frame.push((AgentKind::Car, g));
            }
        }
        for (k, n) in frame {
            match counts.iter_mut().find(|(c, _)| *c == k) {
                Some(e) => e.1 = e.1.max(n),
                None => counts.push((k, n)),
            }
        }
        for (k, n) in objects {
            let n = n.unwrap_or(1);
            match object_counts.iter_mut().find(|(c, _)| *c == k) {
                Some(e) => e.1 = e.1.max(n),
                None => object_counts.push((k, n)),
            }
        }
    }
    let agents = agents_from_counts(&counts, &t, road.segments[0].speed_limit, false, rng);
    let objects: Vec<ObjectDescription> = object_counts
        .into_iter()
        .map(|(kind, count)| ObjectDescription { kind, count, placement_hint: "seen along the route".into() })
        .collect();
    let scene_type = scene_type_for(layout, &objects);
    ScenarioDescription { road, objects, agents, weather: weather_of(&t), narrative: captions.join(" "), scene_type }
}

fn describe_gps(v: &Value) -> ScenarioDescription {
    let facts = v.get("network").filter(|n| !n.is_null());
    let num = |key: &str, default: f64| facts.and_then(|f| f.get(key)).and_then(Value::as_f64).unwrap_or(default);
    let degree = num("max_junction_degree", 2.0);
    let layout = if degree >= 4.0 {
        RoadLayout::CrossIntersection
    } else if degree >= 3.0 {
        RoadLayout::TJunction
    } else {
        RoadLayout::Straight
    };
    let route = num("route_length", 200.0).max(1.0);
    let lanes = num("max_lanes", 2.0).max(1.0) as u32;
    let speed = num("speed_limit", 13.89).max(1.0);
    let arms = match layout {
        RoadLayout::CrossIntersection => 4,
        RoadLayout::TJunction => 3,
        _ => 1,
    };
    let length = if arms == 1 { route } else { route / 2.0 };
    let seg = RoadSegment { length, lanes_forward: lanes.div_ceil(2).max(1), lanes_backward: lanes / 2, speed_limit: speed };
    let road = RoadDescription { layout, segments: vec![seg; arms], junction_notes: "from map data".into() };
    let agents = vec![
        agent(AgentKind::Car, Role::AV, "proceed along route", 0.8 * speed, "ego"),
        agent(AgentKind::Car, Role::BV, "follow lane", 0.7 * speed, "ahead in traffic"),
    ];
    let scene_type = scene_type_for(layout, &[]);
    ScenarioDescription {
        road,
        objects: vec![],
        agents,
        weather: WeatherDescription::default(),
        narrative: "Real-world road layout from map data.".into(),
        scene_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_description;
    use crate::kb::PromptKnowledgeBase;
    use crate::netgen::{validate_network, split_documents, ValidationError};
    use crate::provider::extract_json;

    fn ask(mock: &MockProvider, template: &str, input: &str) -> String {
        let kb = PromptKnowledgeBase::builtin();
        mock.complete(&kb.render(template, &[("input", input)]).unwrap()).unwrap()
    }

    fn describe(text: &str) -> ScenarioDescription {
        let raw = ask(&MockProvider::new(3), names::EXPAND_REQUEST, text);
        parse_description(extract_json(&raw).unwrap()).unwrap()
    }

    #[test]
    fn cut_in_on_highway() {
        let d = describe("two vehicles, one cuts in on a highway");
        assert_eq!(d.road.layout, RoadLayout::Straight);
        assert_eq!(d.agents.len(), 2);
        assert!(d.agents.iter().all(|a| a.kind == AgentKind::Car));
        assert_eq!(d.agents[1].intent, "cut in ahead of ego");
    }

    #[test]
    fn construction_keyword_adds_cones() {
        let d = describe("construction zone test");
        assert!(d.object_count(ObjectKind::Cone) >= 1);
        assert_eq!(d.scene_type, SceneType::ConstructionZone);
    }

    #[test]
    fn left_turn_is_an_intersection() {
        let d = describe("intersection left turn conflict");
        assert_eq!(d.road.layout, RoadLayout::CrossIntersection);
        assert!(d.agents.len() >= 2);
        assert_eq!(d.scene_type, SceneType::Intersection);
    }

    #[test]
    fn pedestrian_becomes_vru() {
        let d = describe("a car hits a pedestrian who crosses the street");
        assert_eq!(d.agents.iter().filter(|a| a.role == Role::VRU).count(), 1);
        assert_eq!(d.agents.iter().filter(|a| a.role == Role::AV).count(), 1);
    }

    #[test]
    fn ego_mention_is_the_av() {
        let d = describe("A car cuts in from the adjacent lane on a highway, forcing the ego vehicle to brake hard.");
        assert_eq!(d.agents.len(), 2);
        assert_eq!((d.agents[0].role, d.agents[1].role), (Role::AV, Role::BV));
        let d = describe("the ego truck waits while a pedestrian crosses");
        assert_eq!(d.agents.iter().map(|a| (a.kind, a.role)).collect::<Vec<_>>(), [(AgentKind::Truck, Role::AV), (AgentKind::Pedestrian, Role::VRU)]);
    }

    #[test]
    fn wet_night() {
        let w = describe("wet road at night with three cars").weather;
        assert!(w.precipitation > 0.0);
        assert!(w.time_of_day >= 20.0 || w.time_of_day < 5.0);
    }

    #[test]
    fn same_seed_same_answer() {
        let a = ask(&MockProvider::new(9), names::EXPAND_REQUEST, "a truck on a curve");
        let b = ask(&MockProvider::new(9), names::EXPAND_REQUEST, "a truck on a curve");
        assert_eq!(a, b);
    }

    #[test]
    fn every_fault_is_caught_by_the_validator() {
        let road = RoadDescription {
            layout: RoadLayout::Curve,
            segments: vec![RoadSegment { length: 100.0, lanes_forward: 2, lanes_backward: 1, speed_limit: 10.0 }],
            junction_notes: String::new(),
        };
        let input = serde_json::to_string(&road).unwrap();
        let clean = ask(&MockProvider::new(1), names::NET_GENERATOR, &input);
        let (n, e) = split_documents(&clean).unwrap();
        assert!(validate_network(&n, &e).is_empty());
        for fault in NetworkFault::ALL {
            let mock = MockProvider::with_faults(1, MockFaults { network_fault: Some(fault), ..Default::default() });
            let (n, e) = split_documents(&ask(&mock, names::NET_GENERATOR, &input)).unwrap();
            let errs = validate_network(&n, &e);
            let hit = match fault {
                NetworkFault::HashInEdgeId => errs.iter().any(ValidationError::is_malformed_keyword),
                NetworkFault::SpreadTypeLeft => errs.iter().any(|e| matches!(e, ValidationError::InvalidEnum { .. })),
                NetworkFault::MissingLaneShape => errs.iter().any(|e| matches!(e, ValidationError::MissingAttribute { .. })),
                NetworkFault::FunctionAttribute => errs.iter().any(|e| matches!(e, ValidationError::UndeclaredAttribute { .. })),
            };
            assert!(hit, "{fault:?}: {errs:?}");
        }
    }

    #[test]
    fn direct_scenario_is_prose() {
        let raw = ask(&MockProvider::new(1), names::DIRECT_SCENARIO, "two cars on a road");
        assert!(extract_json(&raw).is_none());
    }

    #[test]
    fn unavailable_errors() {
        let mock = MockProvider::with_faults(1, MockFaults { unavailable: true, ..Default::default() });
        assert!(matches!(mock.complete("TEMPLATE: x"), Err(ProviderError::Unavailable(_))));
    }
}
