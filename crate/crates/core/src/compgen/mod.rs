//! Agent and object generators.

mod plan;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use plan::{agent_id, object_zone, plan_agents, plan_objects, ObjectZone, SIGN_SETBACK};

use crate::geometry::{wrap_degrees, OrientedRect, Polyline, Vec2};
use crate::ir::{canonical_json, AgentKind, ObjectKind, Role, ScenarioDescription};
use crate::kb::{names, KbError, PromptKnowledgeBase};
use crate::netgen::{primary_route, LaneRef, RoadNetwork, DEFAULT_LANE_WIDTH};
use crate::provider::{complete_structured, extract_json, CompletionProvider, ProviderError, ProviderRequest, RetryError};
use crate::stats::Summary;

/// Id given to the ego vehicle added when a description names no AV.
pub const IMPLICIT_EGO_ID: &str = "ego";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: String,
    pub kind: AgentKind,
    pub role: Role,
    pub lane: LaneRef,
    /// Arc length along the lane, meters.
    pub s: f64,
    /// Offset from the lane centerline, left positive.
    #[serde(default)]
    pub lateral: f64,
    pub speed: f64,
    /// Degrees, 0 = +x, counterclockwise, in (−180, 180].
    pub heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    pub length: f64,
    pub width: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub intent: String,
}

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn rect(&self) -> OrientedRect {
        OrientedRect::new(self.position(), self.length, self.width, self.heading.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    /// Degrees.
    pub yaw: f64,
    /// (length, width) in meters.
    pub footprint: (f64, f64),
}

impl PlacedObject {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect::new(Vec2::new(self.x, self.y), self.footprint.0, self.footprint.1, self.yaw.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementConstraints {
    pub min_gap: f64,
    pub max_agents: usize,
    pub keep_av_route_free: bool,
    pub seed: u64,
}

impl Default for PlacementConstraints {
    fn default() -> Self {
        PlacementConstraints { min_gap: 4.0, max_agents: 32, keep_av_route_free: false, seed: 0 }
    }
}

impl PlacementConstraints {
    pub fn validate(&self) -> Result<(), CompgenError> {
        if self.min_gap.is_finite() && self.min_gap > 0.0 {
            Ok(())
        } else {
            Err(CompgenError::InvalidConstraints("min_gap must be positive".into()))
        }
    }
}

/// Why an answered placement plan was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("answer is not a JSON plan: {0}")]
    Unreadable(String),
    #[error("blueprint {0:?} repeats a blueprint name")]
    BlueprintReuse(String),
    #[error("blueprint {found:?} does not match {expected:?} for {agent}")]
    WrongBlueprint { agent: String, expected: String, found: String },
    #[error("plan entries do not match the described agents: {0}")]
    AgentSet(String),
    #[error("{agent} is placed on missing lane {lane}")]
    UnknownLane { agent: String, lane: String },
    #[error("{agent} is off its lane: {detail}")]
    OffLane { agent: String, detail: String },
    #[error("{agent} speed {speed} exceeds 1.5x the lane limit")]
    TooFast { agent: String, speed: String },
    #[error("{a} and {b} are {distance} m apart, below the {required} m minimum")]
    TooClose { a: String, b: String, distance: String, required: String },
    #[error("object counts do not match the description: {0}")]
    ObjectCounts(String),
    #[error("{0} is not on the carriageway")]
    ObjectOffRoad(String),
}

#[derive(Debug, Error)]
pub enum CompgenError {
    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("placement plan rejected after {attempts} attempts: {error}")]
    Rejected { error: PlanError, attempts: u32 },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] KbError),
}

impl CompgenError {
    pub fn is_blueprint_reuse(&self) -> bool {
        matches!(self, CompgenError::Rejected { error: PlanError::BlueprintReuse(_), .. })
    }
}

/// Intent phrases that mark an agent as the AV's conflict partner.
pub fn is_conflict_intent(intent: &str) -> bool {
    const WORDS: &[&str] = &["cut", "turn", "brak", "merg", "cross", "overtak", "conflict", "rear", "swerv", "jaywalk", "run"];
    let i = intent.to_ascii_lowercase();
    WORDS.iter().any(|w| i.contains(w))
}

pub fn lane_polyline(net: &RoadNetwork, lane: &LaneRef) -> Option<Polyline> {
    let edge = net.edge(&lane.edge)?;
    (lane.index < edge.num_lanes).then(|| Polyline::new(net.lane_shape(edge, lane.index)))
}

/// All known blueprint labels.
fn blueprints() -> Vec<&'static str> {
    AgentKind::ALL.iter().map(|k| k.blueprint()).collect()
}

/// One entry of an agent-placement answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlanEntry {
    #[serde(rename = "ref")]
    pub id: String,
    pub blueprint: String,
    pub edge: String,
    pub lane: u32,
    pub s: f64,
    #[serde(default)]
    pub lateral: f64,
    pub speed: f64,
    #[serde(default)]
    pub yaw_offset: f64,
}

impl AgentPlanEntry {
    pub fn from_state(a: &AgentState, net: &RoadNetwork) -> Self {
        let lane_heading = lane_polyline(net, &a.lane).map_or(0.0, |l| l.pose_at(a.s).1.to_degrees());
        AgentPlanEntry {
            id: a.id.clone(),
            blueprint: a.kind.blueprint().into(),
            edge: a.lane.edge.clone(),
            lane: a.lane.index,
            s: a.s,
            lateral: a.lateral,
            speed: a.speed,
            yaw_offset: wrap_degrees(a.heading - lane_heading),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentPlan {
    Agents { agents: Vec<AgentPlanEntry> },
    Infeasible { infeasible: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectPlan {
    Objects { objects: Vec<PlacedObject> },
    Infeasible { infeasible: String },
}

/// Prompt input shared by both generators.
pub fn placement_input(desc: &ScenarioDescription, net: &RoadNetwork, c: &PlacementConstraints) -> String {
    let value = json!({ "description": desc, "network": net, "constraints": c });
    canonical_json(&value).trim_end().to_string()
}

/// Turns a plan into states and checks it against the description, the
/// network and the gap constraints.
pub fn accept_agent_plan(
    entries: &[AgentPlanEntry],
    desc: &ScenarioDescription,
    net: &RoadNetwork,
    c: &PlacementConstraints,
) -> Result<Vec<AgentState>, PlanError> {
    let known = blueprints();
    let mut expected: Vec<(String, crate::ir::AgentDescription)> =
        desc.agents.iter().enumerate().map(|(i, a)| (agent_id(i), a.clone())).collect();
    if !desc.agents.iter().any(|a| a.role == Role::AV) {
        expected.insert(0, (IMPLICIT_EGO_ID.into(), plan::implicit_ego()));
    }
    if entries.len() != expected.len() {
        return Err(PlanError::AgentSet(format!("expected {} entries, got {}", expected.len(), entries.len())));
    }
    let mut states = Vec::with_capacity(entries.len());
    for (id, d) in &expected {
        let e = entries
            .iter()
            .find(|e| &e.id == id)
            .ok_or_else(|| PlanError::AgentSet(format!("no entry for {id}")))?;
        if e.blueprint != d.kind.blueprint() {
            let hits = known.iter().map(|b| e.blueprint.matches(b).count()).sum::<usize>();
            if hits > 1 {
                return Err(PlanError::BlueprintReuse(e.blueprint.clone()));
            }
            return Err(PlanError::WrongBlueprint {
                agent: id.clone(),
                expected: d.kind.blueprint().into(),
                found: e.blueprint.clone(),
            });
        }
        let lane = LaneRef::new(e.edge.clone(), e.lane);
        let line = lane_polyline(net, &lane).ok_or_else(|| PlanError::UnknownLane { agent: id.clone(), lane: lane.to_string() })?;
        let edge = net.edge(&e.edge).expect("lane exists");
        if !(e.s >= 0.0 && e.s <= line.length()) {
            return Err(PlanError::OffLane { agent: id.clone(), detail: format!("s = {} outside [0, {}]", e.s, line.length()) });
        }
        let (length, width) = d.kind.dimensions();
        let max_lateral = DEFAULT_LANE_WIDTH / 2.0 - width / 2.0 + 1e-9;
        if !(e.lateral.abs() <= max_lateral) {
            return Err(PlanError::OffLane { agent: id.clone(), detail: format!("lateral offset {}", e.lateral) });
        }
        if !(e.speed >= 0.0 && e.speed <= 1.5 * edge.speed + 1e-9) {
            return Err(PlanError::TooFast { agent: id.clone(), speed: e.speed.to_string() });
        }
        let p = line.point_at(e.s, e.lateral);
        let (_, heading) = line.pose_at(e.s);
        states.push(AgentState {
            id: id.clone(),
            kind: d.kind,
            role: d.role,
            lane,
            s: e.s,
            lateral: e.lateral,
            speed: e.speed,
            heading: wrap_degrees(heading.to_degrees() + e.yaw_offset),
            color: d.color.clone(),
            length,
            width,
            x: p.x,
            y: p.y,
            intent: d.intent.clone(),
        });
    }
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            let pair_conflict = (a.role == Role::AV && is_conflict_intent(&b.intent)) || (b.role == Role::AV && is_conflict_intent(&a.intent));
            let required = if pair_conflict { c.min_gap / 2.0 } else { c.min_gap };
            let d = a.position().distance(b.position());
            if d < required || a.rect().overlaps(&b.rect()) {
                return Err(PlanError::TooClose {
                    a: a.id.clone(),
                    b: b.id.clone(),
                    distance: format!("{d:.2}"),
                    required: format!("{required:.2}"),
                });
            }
        }
    }
    Ok(states)
}

/// Checks object counts per kind and that lane obstacles sit on the road.
pub fn accept_object_plan(objects: &[PlacedObject], desc: &ScenarioDescription, net: &RoadNetwork) -> Result<(), PlanError> {
    for kind in ObjectKind::ALL {
        let want = desc.object_count(kind) as usize;
        let got = objects.iter().filter(|o| o.kind == kind).count();
        if want != got {
            return Err(PlanError::ObjectCounts(format!("{kind:?}: described {want}, placed {got}")));
        }
    }
    for (i, o) in objects.iter().enumerate() {
        if o.kind.is_lane_obstacle() && distance_to_lanes(net, Vec2::new(o.x, o.y)) > DEFAULT_LANE_WIDTH / 2.0 + 2.0 {
            return Err(PlanError::ObjectOffRoad(format!("{:?} #{i}", o.kind)));
        }
    }
    Ok(())
}

/// Distance from a point to the nearest lane centerline.
pub fn distance_to_lanes(net: &RoadNetwork, p: Vec2) -> f64 {
    net.lane_refs()
        .iter()
        .filter_map(|l| lane_polyline(net, l))
        .map(|line| line.project(p).1.abs())
        .fold(f64::INFINITY, f64::min)
}

fn plan_request(kb: &PromptKnowledgeBase, template: &str, input: &str, max_retries: u32) -> Result<ProviderRequest, KbError> {
    Ok(ProviderRequest {
        template_name: template.into(),
        rendered_prompt: kb.render(template, &[("input", input)])?,
        expected_schema: vec![],
        max_retries,
    })
}

fn read_plan<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<T, PlanError> {
    let json = extract_json(raw).ok_or_else(|| PlanError::Unreadable("no JSON object".into()))?;
    serde_json::from_str(json).map_err(|e| PlanError::Unreadable(e.to_string()))
}

fn retry_error(e: RetryError<PlanError>) -> CompgenError {
    match e {
        RetryError::Provider(p) => CompgenError::Provider(p),
        RetryError::Exhausted { last_error, attempts } => CompgenError::Rejected { error: last_error, attempts },
    }
}

/// Places one agent per described agent (plus an ego vehicle when none is
/// the AV) by asking the provider for a plan and checking it.
pub fn generate_agents(
    desc: &ScenarioDescription,
    net: &RoadNetwork,
    c: &PlacementConstraints,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    max_retries: u32,
) -> Result<Vec<AgentState>, CompgenError> {
    c.validate()?;
    let request = plan_request(kb, names::AGENT_GENERATOR, &placement_input(desc, net, c), max_retries)?;
    let resp = complete_structured(provider, &request, |raw| match read_plan::<AgentPlan>(raw)? {
        AgentPlan::Infeasible { infeasible } => Ok(Err(infeasible)),
        AgentPlan::Agents { agents } => accept_agent_plan(&agents, desc, net, c).map(Ok),
    })
    .map_err(retry_error)?;
    resp.parsed.expect("accepted").map_err(CompgenError::PlacementInfeasible)
}

pub fn generate_objects(
    desc: &ScenarioDescription,
    net: &RoadNetwork,
    c: &PlacementConstraints,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    max_retries: u32,
) -> Result<Vec<PlacedObject>, CompgenError> {
    c.validate()?;
    if desc.objects.is_empty() {
        return Ok(Vec::new());
    }
    let request = plan_request(kb, names::OBJECT_GENERATOR, &placement_input(desc, net, c), max_retries)?;
    let resp = complete_structured(provider, &request, |raw| match read_plan::<ObjectPlan>(raw)? {
        ObjectPlan::Infeasible { infeasible } => Ok(Err(infeasible)),
        ObjectPlan::Objects { objects } => accept_object_plan(&objects, desc, net).map(|_| Ok(objects)),
    })
    .map_err(retry_error)?;
    resp.parsed.expect("accepted").map_err(CompgenError::PlacementInfeasible)
}

/// Baseline placement: uniformly random lane and position, no gap rule.
/// The first agent is the AV.
pub fn random_trip_placement(net: &RoadNetwork, n_agents: usize, seed: u64) -> Vec<AgentState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes: Vec<(LaneRef, Polyline, f64)> = net
        .lane_refs()
        .into_iter()
        .filter_map(|l| {
            let line = lane_polyline(net, &l)?;
            let speed = net.edge(&l.edge)?.speed;
            (line.length() > 0.0).then_some((l, line, speed))
        })
        .collect();
    if lanes.is_empty() {
        return Vec::new();
    }
    let (length, width) = AgentKind::Car.dimensions();
    (0..n_agents)
        .map(|i| {
            let (lane, line, limit) = &lanes[rng.gen_range(0..lanes.len())];
            let s = rng.gen_range(0.0..=line.length());
            let speed = rng.gen_range(0.0..=*limit);
            let p = line.point_at(s, 0.0);
            let (_, heading) = line.pose_at(s);
            AgentState {
                id: format!("r{i}"),
                kind: AgentKind::Car,
                role: if i == 0 { Role::AV } else { Role::BV },
                lane: lane.clone(),
                s,
                lateral: 0.0,
                speed,
                heading: wrap_degrees(heading.to_degrees()),
                color: None,
                length,
                width,
                x: p.x,
                y: p.y,
                intent: String::new(),
            }
        })
        .collect()
}

/// Smallest center distance between any two agents.
pub fn shortest_distance(agents: &[AgentState]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in agents.iter().enumerate() {
        for b in &agents[i + 1..] {
            let d = a.position().distance(b.position());
            best = Some(best.map_or(d, |x| x.min(d)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementDiversity {
    pub agent_count: Summary,
    pub shortest_distance: Summary,
    pub vehicle_yaw: Summary,
}

impl fmt::Display for PlacementDiversity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20}{}", "Agents", self.agent_count)?;
        writeln!(f, "{:<20}{}", "Shortest distance", self.shortest_distance)?;
        writeln!(f, "{:<20}{}", "Vehicle yaw", self.vehicle_yaw)
    }
}

/// Agent count, shortest distance (scenarios with ≥ 2 agents) and pooled
/// vehicle yaw over a scenario set.
pub fn placement_diversity(scenarios: &[Vec<AgentState>]) -> PlacementDiversity {
    let counts: Vec<f64> = scenarios.iter().map(|s| s.len() as f64).collect();
    let shortest: Vec<f64> = scenarios.iter().filter_map(|s| shortest_distance(s)).collect();
    let yaw: Vec<f64> = scenarios.iter().flatten().filter(|a| a.kind.is_vehicle()).map(|a| a.heading).collect();
    PlacementDiversity { agent_count: Summary::of(&counts), shortest_distance: Summary::of(&shortest), vehicle_yaw: Summary::of(&yaw) }
}

/// The AV's route: the primary route when the AV starts on it, otherwise the
/// longest shortest path leaving the AV's edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub edges: Vec<String>,
    /// Meters from the AV's start position to the route end.
    pub length: f64,
    pub speed_limit: f64,
}

pub fn plan_route(net: &RoadNetwork, start: &LaneRef, s: f64) -> PlannedRoute {
    let primary = primary_route(net);
    let edges = if primary.first() == Some(&start.edge) {
        primary
    } else {
        let graph = crate::netgen::stats_graph(net);
        let index = net.node_index();
        let mut edges = vec![start.edge.clone()];
        if let Some(e) = net.edge(&start.edge) {
            if let Some(&from) = index.get(e.to.as_str()) {
                let (dist, via) = graph.dijkstra(from);
                let far = dist
                    .iter()
                    .enumerate()
                    .filter(|(i, d)| d.is_finite() && *i != from && net.nodes[*i].id != e.from)
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i);
                if let Some(mut cur) = far {
                    let mut tail = Vec::new();
                    while cur != from {
                        let Some(ei) = via[cur] else { break };
                        tail.push(net.edges[ei].id.clone());
                        cur = index[net.edges[ei].from.as_str()];
                    }
                    tail.reverse();
                    edges.extend(tail);
                }
            }
        }
        edges
    };
    let length: f64 = edges.iter().filter_map(|e| net.edge(e)).map(|e| net.edge_length(e)).sum::<f64>() - s;
    let speed_limit = edges.iter().filter_map(|e| net.edge(e)).map(|e| e.speed).fold(0.0, f64::max);
    PlannedRoute { edges, length: length.max(0.0), speed_limit }
}

#[cfg(test)]
mod tests;
