//! OpenStreetMap ingestion: extract parsing, drivable-way filtering,
//! projection to local meters and splitting at shared junction nodes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{serialize_sumo_xml, validate_network, Edge, Lane, Node, NodeType, RoadNetwork, SpreadType, ValidationError};
use super::{DEFAULT_LANE_WIDTH, DEFAULT_SPEED};
use crate::geometry::{offset_polyline, Vec2};
use crate::ir::GpsBoundingBox;

const EARTH_RADIUS: f64 = 6_371_008.8;

pub const DEFAULT_OVERPASS_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";

const DRIVABLE: &[&str] = &[
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "service",
    "living_street",
    "road",
    "motorway_link",
    "trunk_link",
    "primary_link",
    "secondary_link",
    "tertiary_link",
];

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("bounding box needs min < max on both axes")]
    InvalidBoundingBox,
    #[error("extract contains no usable highway ways")]
    EmptyExtract,
    #[error("fetching the extract failed: {0}")]
    FetchFailed(String),
    #[error("extract is not valid OSM XML: {0}")]
    Malformed(String),
    #[error("ingested network does not validate: {0:?}")]
    Invalid(Vec<ValidationError>),
}

/// Overpass API client with an on-disk response cache. Only one request is
/// in flight at a time.
pub struct OverpassClient {
    endpoint: String,
    cache_dir: PathBuf,
    agent: ureq::Agent,
    gate: Mutex<()>,
}

impl OverpassClient {
    pub fn new(endpoint: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        OverpassClient {
            endpoint: endpoint.into(),
            cache_dir: cache_dir.into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(180)).build(),
            gate: Mutex::new(()),
        }
    }

    pub fn query(bbox: &GpsBoundingBox) -> String {
        format!(
            "[out:xml][timeout:60];(way[\"highway\"]({},{},{},{}););(._;>;);out body;",
            bbox.min_lat, bbox.min_lon, bbox.max_lat, bbox.max_lon
        )
    }

    pub fn cache_path(&self, bbox: &GpsBoundingBox) -> PathBuf {
        let digest = Sha256::digest(Self::query(bbox).as_bytes());
        self.cache_dir.join(format!("{}.osm", hex::encode(digest)))
    }

    /// Returns the cached extract for `bbox`, fetching it first if needed.
    pub fn fetch(&self, bbox: &GpsBoundingBox) -> Result<String, OsmError> {
        let _guard = self.gate.lock().expect("overpass gate");
        let path = self.cache_path(bbox);
        if let Ok(cached) = fs::read_to_string(&path) {
            return Ok(cached);
        }
        let query = Self::query(bbox);
        let body = self
            .agent
            .post(&self.endpoint)
            .send_form(&[("data", query.as_str())])
            .map_err(|e| OsmError::FetchFailed(e.to_string()))?
            .into_string()
            .map_err(|e| OsmError::FetchFailed(e.to_string()))?;
        fs::create_dir_all(&self.cache_dir).map_err(|e| OsmError::FetchFailed(e.to_string()))?;
        fs::write(&path, &body).map_err(|e| OsmError::FetchFailed(e.to_string()))?;
        Ok(body)
    }
}

pub enum OsmSource<'a> {
    Document(&'a str),
    Remote(&'a OverpassClient),
}

struct Way {
    id: String,
    refs: Vec<String>,
    tags: HashMap<String, String>,
}

fn parse_speed(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Some(mph) = raw.strip_suffix("mph") {
        return mph.trim().parse::<f64>().ok().map(|v| v * 0.44704);
    }
    raw.trim_end_matches("km/h").trim().parse::<f64>().ok().map(|v| v / 3.6)
}

fn default_speed(class: &str) -> f64 {
    match class.trim_end_matches("_link") {
        "motorway" => 27.78,
        "trunk" => 22.22,
        "primary" => 16.67,
        "residential" | "living_street" => 8.33,
        "service" => 5.56,
        _ => DEFAULT_SPEED,
    }
}

/// Lanes in the (forward, backward) directions of a way.
fn lane_split(tags: &HashMap<String, String>, oneway: bool) -> (u32, u32) {
    let get = |k: &str| tags.get(k).and_then(|v| v.trim().parse::<u32>().ok()).filter(|&n| n > 0);
    if oneway {
        return (get("lanes").unwrap_or(1), 0);
    }
    match (get("lanes:forward"), get("lanes:backward")) {
        (Some(f), Some(b)) => (f, b),
        _ => {
            let total = get("lanes").unwrap_or(2).max(2);
            (total - total / 2, total / 2)
        }
    }
}

/// Builds a road network from an OSM extract. Each kept way becomes one
/// edge per direction and per stretch between junction nodes.
pub fn ingest_osm(bbox: &GpsBoundingBox, source: &OsmSource<'_>, drivable_only: bool) -> Result<RoadNetwork, OsmError> {
    bbox.validate().map_err(|_| OsmError::InvalidBoundingBox)?;
    let owned;
    let text = match source {
        OsmSource::Document(t) => *t,
        OsmSource::Remote(client) => {
            owned = client.fetch(bbox)?;
            owned.as_str()
        }
    };
    let doc = roxmltree::Document::parse(text).map_err(|e| OsmError::Malformed(e.to_string()))?;
    let mut coords: HashMap<String, (f64, f64)> = HashMap::new();
    let mut signals: HashMap<String, bool> = HashMap::new();
    let mut ways = Vec::new();
    for el in doc.root_element().children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let (Some(id), Some(lat), Some(lon)) = (el.attribute("id"), el.attribute("lat"), el.attribute("lon")) else {
                    continue;
                };
                let (Ok(lat), Ok(lon)) = (lat.parse::<f64>(), lon.parse::<f64>()) else { continue };
                coords.insert(id.to_string(), (lat, lon));
                let signal = el
                    .children()
                    .any(|t| t.has_tag_name("tag") && t.attribute("k") == Some("highway") && t.attribute("v") == Some("traffic_signals"));
                signals.insert(id.to_string(), signal);
            }
            "way" => {
                let Some(id) = el.attribute("id") else { continue };
                let refs = el.children().filter(|c| c.has_tag_name("nd")).filter_map(|c| c.attribute("ref")).map(String::from).collect();
                let tags = el
                    .children()
                    .filter(|c| c.has_tag_name("tag"))
                    .filter_map(|c| Some((c.attribute("k")?.to_string(), c.attribute("v")?.to_string())))
                    .collect();
                ways.push(Way { id: id.into(), refs, tags });
            }
            _ => {}
        }
    }
    let mut kept: Vec<Way> = ways
        .into_iter()
        .filter(|w| match w.tags.get("highway") {
            Some(class) => !drivable_only || DRIVABLE.contains(&class.as_str()),
            None => false,
        })
        .map(|mut w| {
            w.refs.retain(|r| coords.contains_key(r));
            w.refs.dedup();
            w
        })
        .filter(|w| w.refs.len() >= 2)
        .collect();
    if kept.is_empty() {
        return Err(OsmError::EmptyExtract);
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));

    // a node is a junction when it ends a way or is used more than once
    let mut uses: HashMap<&str, usize> = HashMap::new();
    for w in &kept {
        for r in &w.refs {
            *uses.entry(r.as_str()).or_default() += 1;
        }
    }
    let (lat0, lon0) = bbox.center();
    let project = |id: &str| {
        let (lat, lon) = coords[id];
        let x = EARTH_RADIUS * (lon - lon0).to_radians() * lat0.to_radians().cos();
        let y = EARTH_RADIUS * (lat - lat0).to_radians();
        Vec2::new(x, y)
    };

    let mut nodes: BTreeMap<String, Node> = BTreeMap::new();
    let mut edges = Vec::new();
    for w in &kept {
        let last = w.refs.len() - 1;
        let mut cuts: Vec<usize> = (0..=last).filter(|&i| i == 0 || i == last || uses[w.refs[i].as_str()] > 1).collect();
        // closed ways would otherwise produce a self-loop
        if cuts.len() == 2 && w.refs[0] == w.refs[last] {
            if last < 2 {
                continue;
            }
            cuts.insert(1, last / 2);
        }
        let class = w.tags.get("highway").map(String::as_str).unwrap_or("road");
        let oneway_tag = w.tags.get("oneway").map(String::as_str);
        let reversed = oneway_tag == Some("-1");
        let oneway = reversed || matches!(oneway_tag, Some("yes" | "true" | "1")) || class == "motorway";
        let (fw, bw) = lane_split(&w.tags, oneway);
        let speed = w.tags.get("maxspeed").and_then(|s| parse_speed(s)).filter(|&v| v > 0.0).unwrap_or_else(|| default_speed(class));
        for (k, pair) in cuts.windows(2).enumerate() {
            let mut ids: Vec<&str> = w.refs[pair[0]..=pair[1]].iter().map(String::as_str).collect();
            if reversed {
                ids.reverse();
            }
            for id in [ids[0], ids[ids.len() - 1]] {
                nodes.entry(id.to_string()).or_insert_with(|| {
                    let p = project(id);
                    let node_type = if signals.get(id).copied().unwrap_or(false) { NodeType::TrafficLight } else { NodeType::Priority };
                    Node { id: format!("n{id}"), x: p.x, y: p.y, node_type }
                });
            }
            let line: Vec<Vec2> = ids.iter().map(|id| project(id)).collect();
            let mut push = |id: String, from: &str, to: &str, lanes: u32, line: Vec<Vec2>| {
                if lanes == 0 {
                    return;
                }
                let lanes_geom = if line.len() > 2 {
                    (0..lanes)
                        .map(|i| Lane {
                            index: i,
                            shape: offset_polyline(&line, -(f64::from(lanes) - 1.0 - f64::from(i) + 0.5) * DEFAULT_LANE_WIDTH),
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                edges.push(Edge {
                    id,
                    from: format!("n{from}"),
                    to: format!("n{to}"),
                    num_lanes: lanes,
                    speed,
                    spread_type: SpreadType::Right,
                    lanes: lanes_geom,
                });
            };
            let (a, b) = (ids[0], ids[ids.len() - 1]);
            push(format!("w{}_{k}", w.id), a, b, fw, line.clone());
            push(format!("-w{}_{k}", w.id), b, a, bw, line.into_iter().rev().collect());
        }
    }
    let net = RoadNetwork { nodes: nodes.into_values().collect(), edges, connections: Vec::new() };
    let (n, e) = serialize_sumo_xml(&net);
    let errors = validate_network(&n, &e);
    if errors.is_empty() {
        Ok(net)
    } else {
        Err(OsmError::Invalid(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::http::testserver;

    const FIXTURE: &str = include_str!("../../fixtures/osm/grid.osm");

    fn bbox() -> GpsBoundingBox {
        GpsBoundingBox { min_lat: 48.1350, min_lon: 11.5800, max_lat: 48.1390, max_lon: 11.5860 }
    }

    /// Independent count: split every drivable way at nodes shared with
    /// another drivable way, one edge per segment and direction.
    fn oracle_edge_count(text: &str) -> usize {
        let doc = roxmltree::Document::parse(text).unwrap();
        let mut ways: Vec<(Vec<String>, bool)> = Vec::new();
        for w in doc.descendants().filter(|n| n.has_tag_name("way")) {
            let tag = |k: &str| w.children().find(|t| t.attribute("k") == Some(k)).and_then(|t| t.attribute("v"));
            if !DRIVABLE.contains(&tag("highway").unwrap_or("")) {
                continue;
            }
            let refs = w.children().filter_map(|c| c.attribute("ref")).map(String::from).collect();
            ways.push((refs, tag("oneway") == Some("yes")));
        }
        let mut total = 0;
        for (i, (refs, oneway)) in ways.iter().enumerate() {
            let mut segments = 1;
            for r in &refs[1..refs.len() - 1] {
                if ways.iter().enumerate().any(|(j, (o, _))| j != i && o.contains(r)) {
                    segments += 1;
                }
            }
            total += segments * if *oneway { 1 } else { 2 };
        }
        total
    }

    #[test]
    fn fixture_splits_at_shared_nodes() {
        let net = ingest_osm(&bbox(), &OsmSource::Document(FIXTURE), true).unwrap();
        assert_eq!(net.edges.len(), oracle_edge_count(FIXTURE));
        // the footway never contributes edges
        assert!(net.edges.iter().all(|e| !e.id.contains("900")));
        let (n, e) = serialize_sumo_xml(&net);
        assert!(validate_network(&n, &e).is_empty());
    }

    #[test]
    fn projection_is_local_meters() {
        let net = ingest_osm(&bbox(), &OsmSource::Document(FIXTURE), true).unwrap();
        for n in &net.nodes {
            assert!(n.x.abs() < 400.0 && n.y.abs() < 400.0, "{n:?}");
        }
    }

    #[test]
    fn footways_only_is_empty() {
        let doc = r#"<osm><node id="1" lat="48.136" lon="11.581"/><node id="2" lat="48.137" lon="11.582"/>
            <way id="5"><nd ref="1"/><nd ref="2"/><tag k="highway" v="footway"/></way></osm>"#;
        assert!(matches!(ingest_osm(&bbox(), &OsmSource::Document(doc), true), Err(OsmError::EmptyExtract)));
        assert!(ingest_osm(&bbox(), &OsmSource::Document(doc), false).is_ok());
    }

    #[test]
    fn inverted_bbox_is_rejected() {
        let mut b = bbox();
        b.min_lat = b.max_lat + 0.1;
        assert!(matches!(ingest_osm(&b, &OsmSource::Document(FIXTURE), true), Err(OsmError::InvalidBoundingBox)));
    }

    #[test]
    fn remote_fetch_is_cached() {
        let (url, _rx) = testserver::serve(vec![(200, FIXTURE.to_string())]);
        let dir = tempfile::tempdir().unwrap();
        let client = OverpassClient::new(url, dir.path());
        let first = ingest_osm(&bbox(), &OsmSource::Remote(&client), true).unwrap();
        assert!(client.cache_path(&bbox()).exists());
        // the test server answers once; the second call must come from disk
        let second = ingest_osm(&bbox(), &OsmSource::Remote(&client), true).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn unreachable_overpass_is_fetch_failed() {
        let dir = tempfile::tempdir().unwrap();
        let client = OverpassClient::new("http://127.0.0.1:9", dir.path());
        assert!(matches!(client.fetch(&bbox()), Err(OsmError::FetchFailed(_))));
    }
}
