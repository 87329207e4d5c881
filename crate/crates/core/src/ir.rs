//! Universal scenario representation.
//!
//! A [`ScenarioDescription`] captures a driving scene from four perspectives
//! (road structure, static objects, agents, weather) plus a free-text
//! narrative. It is the hand-off format between the interpreters and the
//! generators, so it has a canonical text form: a JSON document with sorted
//! keys and a `"format": "usd-v1"` header. Serialization is deterministic and
//! [`parse_description`] inverts it exactly.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::compgen::{AgentState, PlacedObject};
use crate::netgen::RoadNetwork;

/// Format tag carried by every canonical description document.
pub const FORMAT_TAG: &str = "usd-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SceneType {
    General,
    Intersection,
    ConstructionZone,
}

impl SceneType {
    pub const ALL: [SceneType; 3] = [SceneType::General, SceneType::Intersection, SceneType::ConstructionZone];

    pub fn label(self) -> &'static str {
        match self {
            SceneType::General => "General",
            SceneType::Intersection => "Intersection",
            SceneType::ConstructionZone => "Construction Zone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoadLayout {
    Straight,
    Curve,
    TJunction,
    CrossIntersection,
    Merge,
    Roundabout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    /// Meters, > 0.
    pub length: f64,
    pub lanes_forward: u32,
    pub lanes_backward: u32,
    /// m/s, > 0.
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadDescription {
    pub layout: RoadLayout,
    pub segments: Vec<RoadSegment>,
    pub junction_notes: String,
}

impl RoadDescription {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Car,
    Truck,
    Bus,
    Motorcycle,
    Cyclist,
    Pedestrian,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Car,
        AgentKind::Truck,
        AgentKind::Bus,
        AgentKind::Motorcycle,
        AgentKind::Cyclist,
        AgentKind::Pedestrian,
    ];

    pub fn is_vulnerable(self) -> bool {
        matches!(self, AgentKind::Cyclist | AgentKind::Pedestrian)
    }

    /// Motorised road users; these are the ones counted as "vehicles".
    pub fn is_vehicle(self) -> bool {
        matches!(self, AgentKind::Car | AgentKind::Truck | AgentKind::Bus | AgentKind::Motorcycle)
    }

    /// Default footprint as (length, width) in meters.
    pub fn dimensions(self) -> (f64, f64) {
        match self {
            AgentKind::Car => (4.5, 1.8),
            AgentKind::Truck => (8.0, 2.5),
            AgentKind::Bus => (12.0, 2.5),
            AgentKind::Motorcycle => (2.2, 0.8),
            AgentKind::Cyclist => (1.8, 0.6),
            AgentKind::Pedestrian => (0.5, 0.5),
        }
    }

    /// Simulator asset label, e.g. `vehicle.car`.
    pub fn blueprint(self) -> &'static str {
        match self {
            AgentKind::Car => "vehicle.car",
            AgentKind::Truck => "vehicle.truck",
            AgentKind::Bus => "vehicle.bus",
            AgentKind::Motorcycle => "vehicle.motorcycle",
            AgentKind::Cyclist => "vehicle.bicycle",
            AgentKind::Pedestrian => "walker.pedestrian",
        }
    }
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    AV,
    BV,
    VRU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescription {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    pub role: Role,
    pub intent: String,
    /// m/s, ≥ 0.
    pub approx_speed: f64,
    pub relative_position: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectKind {
    Cone,
    WarningSign,
    Barrier,
    Fence,
    LaneMarking,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] =
        [ObjectKind::Cone, ObjectKind::WarningSign, ObjectKind::Barrier, ObjectKind::Fence, ObjectKind::LaneMarking];

    /// Footprint as (length, width) in meters.
    pub fn footprint(self) -> (f64, f64) {
        match self {
            ObjectKind::Cone => (0.4, 0.4),
            ObjectKind::WarningSign => (0.8, 0.2),
            ObjectKind::Barrier => (2.0, 0.5),
            ObjectKind::Fence => (3.0, 0.1),
            ObjectKind::LaneMarking => (3.0, 0.15),
        }
    }

    /// Kinds that physically occupy a lane and must sit on the carriageway.
    pub fn is_lane_obstacle(self) -> bool {
        matches!(self, ObjectKind::Cone | ObjectKind::Barrier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDescription {
    pub kind: ObjectKind,
    pub count: u32,
    pub placement_hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDescription {
    pub precipitation: f64,
    pub fog_density: f64,
    /// Degrees in [-90, 90].
    pub sun_altitude: f64,
    /// Hours in [0, 24).
    pub time_of_day: f64,
}

impl Default for WeatherDescription {
    fn default() -> Self {
        WeatherDescription { precipitation: 0.0, fog_density: 0.0, sun_altitude: 45.0, time_of_day: 12.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    pub road: RoadDescription,
    pub objects: Vec<ObjectDescription>,
    pub agents: Vec<AgentDescription>,
    pub weather: WeatherDescription,
    pub narrative: String,
    pub scene_type: SceneType,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptionError {
    #[error("document is not valid JSON: {0}")]
    Malformed(String),
    #[error("unsupported format tag {0:?}")]
    UnsupportedFormat(String),
    #[error("missing section {0:?}")]
    MissingSection(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("invalid value {value:?} for enum field {field:?}")]
    InvalidEnum { field: String, value: String },
    #[error("value out of range for field {0:?}")]
    RangeViolation(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl ScenarioDescription {
    pub fn validate(&self) -> Result<(), DescriptionError> {
        let road = &self.road;
        if road.segments.is_empty() {
            return Err(DescriptionError::RangeViolation("segments".into()));
        }
        for seg in &road.segments {
            if !(seg.length.is_finite() && seg.length > 0.0) {
                return Err(DescriptionError::RangeViolation("length".into()));
            }
            if !(seg.speed_limit.is_finite() && seg.speed_limit > 0.0) {
                return Err(DescriptionError::RangeViolation("speed_limit".into()));
            }
            if seg.lanes_forward + seg.lanes_backward == 0 {
                return Err(DescriptionError::RangeViolation("lanes_forward".into()));
            }
        }
        for obj in &self.objects {
            if obj.count == 0 {
                return Err(DescriptionError::RangeViolation("count".into()));
            }
        }
        let mut avs = 0;
        for agent in &self.agents {
            if !(agent.approx_speed.is_finite() && agent.approx_speed >= 0.0) {
                return Err(DescriptionError::RangeViolation("approx_speed".into()));
            }
            if agent.kind.is_vulnerable() && agent.role != Role::VRU {
                return Err(DescriptionError::Invariant(format!("{:?} must have role VRU", agent.kind)));
            }
            if agent.role == Role::AV {
                avs += 1;
            }
        }
        if avs > 1 {
            return Err(DescriptionError::Invariant("more than one agent has role AV".into()));
        }
        self.weather.validate()
    }

    pub fn vehicle_count(&self) -> usize {
        self.agents.iter().filter(|a| a.kind.is_vehicle()).count()
    }

    pub fn object_count(&self, kind: ObjectKind) -> u32 {
        self.objects.iter().filter(|o| o.kind == kind).map(|o| o.count).sum()
    }
}

impl WeatherDescription {
    pub fn validate(&self) -> Result<(), DescriptionError> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        if !in_range(self.precipitation, 0.0, 1.0) {
            return Err(DescriptionError::RangeViolation("precipitation".into()));
        }
        if !in_range(self.fog_density, 0.0, 1.0) {
            return Err(DescriptionError::RangeViolation("fog_density".into()));
        }
        if !in_range(self.sun_altitude, -90.0, 90.0) {
            return Err(DescriptionError::RangeViolation("sun_altitude".into()));
        }
        if !(in_range(self.time_of_day, 0.0, 24.0) && self.time_of_day < 24.0) {
            return Err(DescriptionError::RangeViolation("time_of_day".into()));
        }
        Ok(())
    }
}

/// Renders a serde value as a pretty JSON document. `serde_json::Map` is
/// ordered by key, so the output is canonical.
pub(crate) fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("domain types always serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("values always render");
    out.push('\n');
    out
}

pub fn serialize_description(d: &ScenarioDescription) -> String {
    let mut value = serde_json::to_value(d).expect("descriptions always serialize");
    if let Value::Object(map) = &mut value {
        map.insert("format".into(), Value::String(FORMAT_TAG.into()));
    }
    canonical_json(&value)
}

pub fn parse_description(doc: &str) -> Result<ScenarioDescription, DescriptionError> {
    let value: Value = serde_json::from_str(doc).map_err(|e| DescriptionError::Malformed(e.to_string()))?;
    description_from_value(&value)
}

pub(crate) fn description_from_value(value: &Value) -> Result<ScenarioDescription, DescriptionError> {
    let root = value.as_object().ok_or_else(|| DescriptionError::Malformed("top level is not an object".into()))?;
    if let Some(tag) = root.get("format") {
        match tag.as_str() {
            Some(FORMAT_TAG) => {}
            _ => return Err(DescriptionError::UnsupportedFormat(tag.to_string())),
        }
    }
    for section in ["road", "objects", "agents", "weather"] {
        if root.get(section).map_or(true, Value::is_null) {
            return Err(DescriptionError::MissingSection(section.into()));
        }
    }
    let road = parse_road(object(root, "road")?)?;
    let objects = array(root, "objects")?.iter().map(parse_object).collect::<Result<Vec<_>, _>>()?;
    let agents = array(root, "agents")?.iter().map(parse_agent).collect::<Result<Vec<_>, _>>()?;
    let weather = parse_weather(object(root, "weather")?)?;
    let narrative = opt_string(root, "narrative")?.unwrap_or_default();
    let scene_type = enum_field(root, "scene_type")?;
    let d = ScenarioDescription { road, objects, agents, weather, narrative, scene_type };
    d.validate()?;
    Ok(d)
}

fn object<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>, DescriptionError> {
    match map.get(key) {
        Some(Value::Object(o)) => Ok(o),
        Some(_) => Err(DescriptionError::Malformed(format!("{key} must be an object"))),
        None => Err(DescriptionError::MissingField(key.into())),
    }
}

fn array<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>, DescriptionError> {
    match map.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(DescriptionError::Malformed(format!("{key} must be a list"))),
        None => Err(DescriptionError::MissingField(key.into())),
    }
}

fn as_object<'a>(value: &'a Value, what: &str) -> Result<&'a Map<String, Value>, DescriptionError> {
    value.as_object().ok_or_else(|| DescriptionError::Malformed(format!("{what} entry must be an object")))
}

fn number(map: &Map<String, Value>, key: &str) -> Result<f64, DescriptionError> {
    match map.get(key) {
        Some(v) => v.as_f64().ok_or_else(|| DescriptionError::RangeViolation(key.into())),
        None => Err(DescriptionError::MissingField(key.into())),
    }
}

fn unsigned(map: &Map<String, Value>, key: &str) -> Result<u32, DescriptionError> {
    match map.get(key) {
        Some(v) => v.as_u64().and_then(|n| u32::try_from(n).ok()).ok_or_else(|| DescriptionError::RangeViolation(key.into())),
        None => Err(DescriptionError::MissingField(key.into())),
    }
}

fn opt_string(map: &Map<String, Value>, key: &str) -> Result<Option<String>, DescriptionError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(DescriptionError::Malformed(format!("{key} must be a string"))),
    }
}

fn string(map: &Map<String, Value>, key: &str) -> Result<String, DescriptionError> {
    opt_string(map, key).map(Option::unwrap_or_default)
}

fn enum_field<T: for<'de> Deserialize<'de>>(map: &Map<String, Value>, key: &str) -> Result<T, DescriptionError> {
    let raw = map.get(key).ok_or_else(|| DescriptionError::MissingField(key.into()))?;
    serde_json::from_value(raw.clone()).map_err(|_| DescriptionError::InvalidEnum {
        field: key.into(),
        value: raw.as_str().map(str::to_string).unwrap_or_else(|| raw.to_string()),
    })
}

fn parse_road(map: &Map<String, Value>) -> Result<RoadDescription, DescriptionError> {
    let layout = enum_field(map, "layout")?;
    let segments = array(map, "segments")?
        .iter()
        .map(|v| {
            let seg = as_object(v, "segment")?;
            Ok(RoadSegment {
                length: number(seg, "length")?,
                lanes_forward: unsigned(seg, "lanes_forward")?,
                lanes_backward: unsigned(seg, "lanes_backward")?,
                speed_limit: number(seg, "speed_limit")?,
            })
        })
        .collect::<Result<Vec<_>, DescriptionError>>()?;
    Ok(RoadDescription { layout, segments, junction_notes: string(map, "junction_notes")? })
}

fn parse_object(value: &Value) -> Result<ObjectDescription, DescriptionError> {
    let map = as_object(value, "object")?;
    Ok(ObjectDescription {
        kind: enum_field(map, "kind")?,
        count: unsigned(map, "count")?,
        placement_hint: string(map, "placement_hint")?,
    })
}

fn parse_agent(value: &Value) -> Result<AgentDescription, DescriptionError> {
    let map = as_object(value, "agent")?;
    Ok(AgentDescription {
        kind: enum_field(map, "kind")?,
        color: opt_string(map, "color")?,
        role: enum_field(map, "role")?,
        intent: string(map, "intent")?,
        approx_speed: number(map, "approx_speed")?,
        relative_position: string(map, "relative_position")?,
    })
}

fn parse_weather(map: &Map<String, Value>) -> Result<WeatherDescription, DescriptionError> {
    Ok(WeatherDescription {
        precipitation: number(map, "precipitation")?,
        fog_density: number(map, "fog_density")?,
        sun_altitude: number(map, "sun_altitude")?,
        time_of_day: number(map, "time_of_day")?,
    })
}

/// WGS84 bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsBoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GpsBoundingBox {
    pub fn validate(&self) -> Result<(), InputError> {
        let finite = [self.min_lat, self.min_lon, self.max_lat, self.max_lon].iter().all(|v| v.is_finite());
        if !finite || self.min_lat >= self.max_lat || self.min_lon >= self.max_lon {
            return Err(InputError::InvalidBoundingBox);
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }
}

impl fmt::Display for GpsBoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.min_lat, self.min_lon, self.max_lat, self.max_lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedElement {
    pub label: String,
    pub count: u32,
}

/// Pre-extracted content of a still image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDescriptor {
    pub captions: Vec<String>,
    #[serde(default)]
    pub elements: Vec<DetectedElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFrame {
    pub caption: String,
    /// Forward depth, in meters, to the landmark tracked across frames.
    pub forward_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDescriptor {
    pub frames: Vec<VideoFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "data")]
pub enum MultimodalInput {
    TextRequest(String),
    CrashReport(String),
    ImageDescriptor(ImageDescriptor),
    VideoDescriptor(VideoDescriptor),
    GpsBoundingBox(GpsBoundingBox),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("bounding box needs min < max on both axes")]
    InvalidBoundingBox,
    #[error("video descriptor needs at least 2 frames, got {0}")]
    InsufficientFrames(usize),
}

impl MultimodalInput {
    pub fn validate(&self) -> Result<(), InputError> {
        match self {
            MultimodalInput::GpsBoundingBox(b) => b.validate(),
            MultimodalInput::VideoDescriptor(v) if v.frames.len() < 2 => Err(InputError::InsufficientFrames(v.frames.len())),
            _ => Ok(()),
        }
    }
}

/// A generated scenario at the critical moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBundle {
    pub description: ScenarioDescription,
    pub network: RoadNetwork,
    pub agents: Vec<AgentState>,
    pub objects: Vec<PlacedObject>,
    pub weather: WeatherDescription,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("agent {agent} references missing lane {edge}_{lane}")]
    UnknownLane { agent: String, edge: String, lane: u32 },
    #[error("bundle must contain exactly one AV, found {0}")]
    AvCount(usize),
    #[error("bundle document is malformed: {0}")]
    Malformed(String),
}

impl ScenarioBundle {
    pub fn validate(&self) -> Result<(), BundleError> {
        for agent in &self.agents {
            let ok = self
                .network
                .edge(&agent.lane.edge)
                .map_or(false, |e| agent.lane.index < e.num_lanes);
            if !ok {
                return Err(BundleError::UnknownLane {
                    agent: agent.id.clone(),
                    edge: agent.lane.edge.clone(),
                    lane: agent.lane.index,
                });
            }
        }
        let avs = self.agents.iter().filter(|a| a.role == Role::AV).count();
        if avs != 1 {
            return Err(BundleError::AvCount(avs));
        }
        Ok(())
    }

    pub fn av(&self) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.role == Role::AV)
    }

    pub fn to_document(&self) -> String {
        canonical_json(self)
    }

    pub fn from_document(doc: &str) -> Result<Self, BundleError> {
        let bundle: ScenarioBundle = serde_json::from_str(doc).map_err(|e| BundleError::Malformed(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}
