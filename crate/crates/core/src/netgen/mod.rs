//! Road networks in SUMO plain-XML terms.
//!
//! A [`RoadNetwork`] is what netconvert would read from a `.nod.xml` and
//! `.edg.xml` pair. This module compiles road descriptions into networks,
//! reads and writes the XML, checks documents against the failure modes
//! language models tend to produce, ingests OSM extracts and computes the
//! structural statistics used for diversity reporting.

mod build;
mod compile;
pub mod osm;
mod stats;
mod validate;
mod xml;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{offset_polyline, polyline_length, Vec2};

pub use build::build_network;
pub use compile::{check_layout, compile_network, NetgenError};
pub use osm::{ingest_osm, OsmError, OsmSource, OverpassClient};
pub use stats::{network_stats, primary_route, NetworkStats};

pub(crate) fn stats_graph(net: &RoadNetwork) -> stats::Graph {
    stats::Graph::new(net)
}
pub use validate::{validate_network, DocumentKind, ValidationError};
pub use xml::{parse_sumo_xml, serialize_sumo_xml, split_documents};

pub const DEFAULT_LANE_WIDTH: f64 = 3.2;
pub const DEFAULT_SPEED: f64 = 13.89;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Priority,
    TrafficLight,
    Unregulated,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Priority => "priority",
            NodeType::TrafficLight => "traffic_light",
            NodeType::Unregulated => "unregulated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "priority" => Some(NodeType::Priority),
            "traffic_light" => Some(NodeType::TrafficLight),
            "unregulated" => Some(NodeType::Unregulated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpreadType {
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "roadCenter")]
    RoadCenter,
}

impl SpreadType {
    pub fn as_str(self) -> &'static str {
        match self {
            SpreadType::Right => "right",
            SpreadType::Center => "center",
            SpreadType::RoadCenter => "roadCenter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "right" => Some(SpreadType::Right),
            "center" => Some(SpreadType::Center),
            "roadCenter" => Some(SpreadType::RoadCenter),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub node_type: NodeType,
}

impl Node {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub index: u32,
    pub shape: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub num_lanes: u32,
    pub speed: f64,
    pub spread_type: SpreadType,
    /// Explicit lane geometry; empty when lanes follow the edge line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lanes: Vec<Lane>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub from_edge: String,
    pub to_edge: String,
    pub from_lane: u32,
    pub to_lane: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaneRef {
    pub edge: String,
    pub index: u32,
}

impl LaneRef {
    pub fn new(edge: impl Into<String>, index: u32) -> Self {
        LaneRef { edge: edge.into(), index }
    }
}

impl fmt::Display for LaneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.edge, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub connections: Vec<Connection>,
}

impl RoadNetwork {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    pub fn total_lanes(&self) -> u64 {
        self.edges.iter().map(|e| u64::from(e.num_lanes)).sum()
    }

    fn has_reverse(&self, edge: &Edge) -> bool {
        self.edges.iter().any(|e| e.from == edge.to && e.to == edge.from)
    }

    /// Straight line between the edge's end nodes.
    pub fn edge_line(&self, edge: &Edge) -> Vec<Vec2> {
        match (self.node(&edge.from), self.node(&edge.to)) {
            (Some(a), Some(b)) => vec![a.pos(), b.pos()],
            _ => Vec::new(),
        }
    }

    /// Geometric length used for routing: mean explicit lane length when lane
    /// shapes are present, otherwise the node-to-node distance.
    pub fn edge_length(&self, edge: &Edge) -> f64 {
        if edge.lanes.is_empty() {
            polyline_length(&self.edge_line(edge))
        } else {
            edge.lanes.iter().map(|l| polyline_length(&l.shape)).sum::<f64>() / edge.lanes.len() as f64
        }
    }

    /// Centerline of one lane, honoring explicit shapes and the spread type.
    /// Lane 0 is the rightmost lane.
    pub fn lane_shape(&self, edge: &Edge, index: u32) -> Vec<Vec2> {
        if let Some(lane) = edge.lanes.iter().find(|l| l.index == index) {
            return lane.shape.clone();
        }
        let line = self.edge_line(edge);
        let n = f64::from(edge.num_lanes);
        let i = f64::from(index);
        let w = DEFAULT_LANE_WIDTH;
        let right_of_line = match edge.spread_type {
            SpreadType::Right => (n - 1.0 - i + 0.5) * w,
            SpreadType::Center => (n / 2.0 - i - 0.5) * w,
            SpreadType::RoadCenter if self.has_reverse(edge) => (n - 1.0 - i + 0.5) * w,
            SpreadType::RoadCenter => (n / 2.0 - i - 0.5) * w,
        };
        offset_polyline(&line, -right_of_line)
    }

    pub fn lane_refs(&self) -> Vec<LaneRef> {
        self.edges
            .iter()
            .flat_map(|e| (0..e.num_lanes).map(move |i| LaneRef::new(e.id.clone(), i)))
            .collect()
    }

    /// Lane-level successors. Explicit connections win; a network without any
    /// connections gets lane i → min(i, n−1) on every non-U-turn outgoing edge.
    pub fn lane_successors(&self) -> BTreeMap<LaneRef, Vec<LaneRef>> {
        let mut out: BTreeMap<LaneRef, Vec<LaneRef>> = BTreeMap::new();
        if !self.connections.is_empty() {
            for c in &self.connections {
                out.entry(LaneRef::new(c.from_edge.clone(), c.from_lane))
                    .or_default()
                    .push(LaneRef::new(c.to_edge.clone(), c.to_lane));
            }
            return out;
        }
        for e in &self.edges {
            for next in self.edges.iter().filter(|n| n.from == e.to && n.to != e.from) {
                for i in 0..e.num_lanes {
                    out.entry(LaneRef::new(e.id.clone(), i))
                        .or_default()
                        .push(LaneRef::new(next.id.clone(), i.min(next.num_lanes - 1)));
                }
            }
        }
        out
    }

    /// Number of distinct neighbouring nodes per node id.
    pub fn node_degrees(&self) -> HashMap<&str, usize> {
        let mut neigh: HashMap<&str, std::collections::BTreeSet<&str>> = HashMap::new();
        for n in &self.nodes {
            neigh.entry(n.id.as_str()).or_default();
        }
        for e in &self.edges {
            neigh.entry(e.from.as_str()).or_default().insert(e.to.as_str());
            neigh.entry(e.to.as_str()).or_default().insert(e.from.as_str());
        }
        neigh.into_iter().map(|(k, v)| (k, v.len())).collect()
    }

    /// Count of directed edges touching a node, both directions included.
    pub fn incident_edges(&self, node: &str) -> usize {
        self.edges.iter().filter(|e| e.from == node || e.to == node).count()
    }
}
