use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{Connection, Edge, Lane, Node, NodeType, RoadNetwork, SpreadType, DEFAULT_SPEED};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DocumentKind {
    Nodes,
    Edges,
}

impl fmt::Display for DocumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocumentKind::Nodes => "nodes",
            DocumentKind::Edges => "edges",
        })
    }
}

/// One problem found in a nodes/edges document pair.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("{document} document is not well-formed XML: {message}")]
    XmlSyntax { document: DocumentKind, message: String },
    #[error("{document} document has root <{found}>")]
    UnexpectedRoot { document: DocumentKind, found: String },
    #[error("element <{element}> is not allowed here")]
    UnknownElement { element: String },
    #[error("element <{element}> is missing required attribute '{attribute}'")]
    MissingAttribute { element: String, attribute: String },
    #[error("attribute '{attribute}' is not declared for element <{element}>")]
    UndeclaredAttribute { element: String, attribute: String },
    #[error("attribute '{attribute}' of <{element}> has value '{value}' outside the allowed set")]
    InvalidEnum { element: String, attribute: String, value: String },
    #[error("attribute '{attribute}' of <{element}> has invalid value '{value}'")]
    InvalidValue { element: String, attribute: String, value: String },
    #[error("id '{id}' contains a malformed keyword character")]
    MalformedKeyword { id: String },
    #[error("duplicate <{element}> id '{id}'")]
    DuplicateId { element: String, id: String },
    #[error("<{element}> attribute '{attribute}' references unknown id '{id}'")]
    UnknownReference { element: String, attribute: String, id: String },
    #[error("lane {index} does not exist on edge '{edge}'")]
    LaneOutOfRange { edge: String, index: u32 },
    #[error("network has no edges")]
    EmptyNetwork,
    #[error("network does not match the requested layout: {0}")]
    LayoutMismatch(String),
}

impl ValidationError {
    pub fn is_malformed_keyword(&self) -> bool {
        matches!(self, ValidationError::MalformedKeyword { .. })
    }
}

const NODE_ATTRS: &[&str] = &["id", "x", "y", "type"];
const EDGE_ATTRS: &[&str] = &["id", "from", "to", "numLanes", "speed", "spreadType"];
const LANE_ATTRS: &[&str] = &["index", "shape"];
const CONNECTION_ATTRS: &[&str] = &["from", "to", "fromLane", "toLane"];

/// Characters that never appear in well-formed ids.
const FORBIDDEN_ID_CHARS: &[char] = &['#'];

/// Checks both documents and returns every violation found, in document order.
pub fn validate_network(xml_nodes: &str, xml_edges: &str) -> Vec<ValidationError> {
    read_network(xml_nodes, xml_edges).1
}

pub(super) fn read_network(xml_nodes: &str, xml_edges: &str) -> (Option<RoadNetwork>, Vec<ValidationError>) {
    let mut reader = Reader::default();
    reader.read_nodes(xml_nodes);
    reader.read_edges(xml_edges);
    let Reader { nodes, edges, connections, errors, .. } = reader;
    if errors.is_empty() {
        (Some(RoadNetwork { nodes, edges, connections }), errors)
    } else {
        (None, errors)
    }
}

#[derive(Default)]
struct Reader {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    connections: Vec<Connection>,
    errors: Vec<ValidationError>,
    node_ids: HashSet<String>,
    edge_lanes: HashMap<String, u32>,
}

fn parse_shape(raw: &str) -> Option<Vec<Vec2>> {
    let points = raw
        .split_whitespace()
        .map(|pair| {
            let (x, y) = pair.split_once(',')?;
            let x: f64 = x.parse().ok()?;
            let y: f64 = y.parse().ok()?;
            (x.is_finite() && y.is_finite()).then_some(Vec2::new(x, y))
        })
        .collect::<Option<Vec<_>>>()?;
    (points.len() >= 2).then_some(points)
}

impl Reader {
    fn push(&mut self, e: ValidationError) {
        self.errors.push(e);
    }

    fn check_attrs(&mut self, node: roxmltree::Node<'_, '_>, allowed: &[&str], required: &[&str]) -> bool {
        let name = node.tag_name().name().to_string();
        for attr in node.attributes() {
            if !allowed.contains(&attr.name()) {
                self.push(ValidationError::UndeclaredAttribute { element: name.clone(), attribute: attr.name().into() });
            }
        }
        let mut complete = true;
        for attr in required {
            if node.attribute(*attr).is_none() {
                self.push(ValidationError::MissingAttribute { element: name.clone(), attribute: (*attr).into() });
                complete = false;
            }
        }
        complete
    }

    fn check_id(&mut self, id: &str) {
        if id.contains(FORBIDDEN_ID_CHARS) || id.is_empty() {
            self.push(ValidationError::MalformedKeyword { id: id.into() });
        }
    }

    fn float(&mut self, node: roxmltree::Node<'_, '_>, attr: &str, positive: bool) -> Option<f64> {
        let raw = node.attribute(attr)?;
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && (!positive || v > 0.0) => Some(v),
            _ => {
                self.push(ValidationError::InvalidValue {
                    element: node.tag_name().name().into(),
                    attribute: attr.into(),
                    value: raw.into(),
                });
                None
            }
        }
    }

    fn unsigned(&mut self, node: roxmltree::Node<'_, '_>, attr: &str, min: u32) -> Option<u32> {
        let raw = node.attribute(attr)?;
        match raw.trim().parse::<u32>() {
            Ok(v) if v >= min => Some(v),
            _ => {
                self.push(ValidationError::InvalidValue {
                    element: node.tag_name().name().into(),
                    attribute: attr.into(),
                    value: raw.into(),
                });
                None
            }
        }
    }

    fn root<'a, 'i>(&mut self, doc: &'a roxmltree::Document<'i>, kind: DocumentKind) -> Option<roxmltree::Node<'a, 'i>> {
        let root = doc.root_element();
        if root.tag_name().name() != kind.to_string() {
            self.push(ValidationError::UnexpectedRoot { document: kind, found: root.tag_name().name().into() });
            return None;
        }
        Some(root)
    }

    fn read_nodes(&mut self, text: &str) {
        let doc = match roxmltree::Document::parse(text) {
            Ok(d) => d,
            Err(e) => {
                self.push(ValidationError::XmlSyntax { document: DocumentKind::Nodes, message: e.to_string() });
                return;
            }
        };
        let Some(root) = self.root(&doc, DocumentKind::Nodes) else { return };
        for el in root.children().filter(|n| n.is_element()) {
            if el.tag_name().name() != "node" {
                self.push(ValidationError::UnknownElement { element: el.tag_name().name().into() });
                continue;
            }
            let complete = self.check_attrs(el, NODE_ATTRS, &["id", "x", "y"]);
            let id = el.attribute("id").unwrap_or_default().to_string();
            if el.attribute("id").is_some() {
                self.check_id(&id);
            }
            let x = self.float(el, "x", false);
            let y = self.float(el, "y", false);
            let node_type = match el.attribute("type") {
                None => Some(NodeType::Priority),
                Some(raw) => {
                    let t = NodeType::parse(raw);
                    if t.is_none() {
                        self.push(ValidationError::InvalidEnum {
                            element: "node".into(),
                            attribute: "type".into(),
                            value: raw.into(),
                        });
                    }
                    t
                }
            };
            if el.attribute("id").is_some() && !self.node_ids.insert(id.clone()) {
                self.push(ValidationError::DuplicateId { element: "node".into(), id: id.clone() });
            }
            if let (true, Some(x), Some(y), Some(node_type)) = (complete, x, y, node_type) {
                self.nodes.push(Node { id, x, y, node_type });
            }
        }
    }

    fn read_edges(&mut self, text: &str) {
        let doc = match roxmltree::Document::parse(text) {
            Ok(d) => d,
            Err(e) => {
                self.push(ValidationError::XmlSyntax { document: DocumentKind::Edges, message: e.to_string() });
                return;
            }
        };
        let Some(root) = self.root(&doc, DocumentKind::Edges) else { return };
        let mut pending_connections = Vec::new();
        for el in root.children().filter(|n| n.is_element()) {
            match el.tag_name().name() {
                "edge" => self.read_edge(el),
                "connection" => pending_connections.push(el),
                other => self.push(ValidationError::UnknownElement { element: other.into() }),
            }
        }
        for el in pending_connections {
            self.read_connection(el);
        }
        if self.edges.is_empty() && self.edge_lanes.is_empty() {
            self.push(ValidationError::EmptyNetwork);
        }
    }

    fn read_edge(&mut self, el: roxmltree::Node<'_, '_>) {
        let complete = self.check_attrs(el, EDGE_ATTRS, &["id", "from", "to"]);
        let id = el.attribute("id").unwrap_or_default().to_string();
        if el.attribute("id").is_some() {
            self.check_id(&id);
            if self.edge_lanes.contains_key(&id) {
                self.push(ValidationError::DuplicateId { element: "edge".into(), id: id.clone() });
            }
        }
        for attr in ["from", "to"] {
            if let Some(node) = el.attribute(attr) {
                if !self.node_ids.contains(node) {
                    self.push(ValidationError::UnknownReference {
                        element: "edge".into(),
                        attribute: attr.into(),
                        id: node.into(),
                    });
                }
            }
        }
        let num_lanes = if el.attribute("numLanes").is_some() { self.unsigned(el, "numLanes", 1) } else { Some(1) };
        let speed = if el.attribute("speed").is_some() { self.float(el, "speed", true) } else { Some(DEFAULT_SPEED) };
        let spread_type = match el.attribute("spreadType") {
            None => Some(SpreadType::Right),
            Some(raw) => {
                let t = SpreadType::parse(raw);
                if t.is_none() {
                    self.push(ValidationError::InvalidEnum {
                        element: "edge".into(),
                        attribute: "spreadType".into(),
                        value: raw.into(),
                    });
                }
                t
            }
        };
        if el.attribute("id").is_some() {
            self.edge_lanes.insert(id.clone(), num_lanes.unwrap_or(u32::MAX));
        }

        let mut lanes = Vec::new();
        let mut seen_lanes = HashSet::new();
        for child in el.children().filter(|n| n.is_element()) {
            if child.tag_name().name() != "lane" {
                self.push(ValidationError::UnknownElement { element: child.tag_name().name().into() });
                continue;
            }
            let lane_complete = self.check_attrs(child, LANE_ATTRS, &["index", "shape"]);
            let index = self.unsigned(child, "index", 0);
            let shape = child.attribute("shape").and_then(|raw| {
                let parsed = parse_shape(raw);
                if parsed.is_none() {
                    self.push(ValidationError::InvalidValue {
                        element: "lane".into(),
                        attribute: "shape".into(),
                        value: raw.into(),
                    });
                }
                parsed
            });
            if let Some(index) = index {
                if num_lanes.map_or(false, |n| index >= n) {
                    self.push(ValidationError::LaneOutOfRange { edge: id.clone(), index });
                } else if !seen_lanes.insert(index) {
                    self.push(ValidationError::DuplicateId { element: "lane".into(), id: format!("{id}_{index}") });
                }
            }
            if let (true, Some(index), Some(shape)) = (lane_complete, index, shape) {
                lanes.push(Lane { index, shape });
            }
        }
        lanes.sort_by_key(|l| l.index);

        if let (true, Some(num_lanes), Some(speed), Some(spread_type)) = (complete, num_lanes, speed, spread_type) {
            self.edges.push(Edge {
                id,
                from: el.attribute("from").unwrap_or_default().into(),
                to: el.attribute("to").unwrap_or_default().into(),
                num_lanes,
                speed,
                spread_type,
                lanes,
            });
        }
    }

    fn read_connection(&mut self, el: roxmltree::Node<'_, '_>) {
        let complete = self.check_attrs(el, CONNECTION_ATTRS, CONNECTION_ATTRS);
        let from_lane = self.unsigned(el, "fromLane", 0);
        let to_lane = self.unsigned(el, "toLane", 0);
        let mut refs_ok = true;
        for (attr, lane) in [("from", from_lane), ("to", to_lane)] {
            let Some(edge) = el.attribute(attr) else { continue };
            match self.edge_lanes.get(edge).copied() {
                None => {
                    refs_ok = false;
                    self.push(ValidationError::UnknownReference {
                        element: "connection".into(),
                        attribute: attr.into(),
                        id: edge.into(),
                    });
                }
                Some(n) => {
                    if let Some(lane) = lane {
                        if lane >= n {
                            refs_ok = false;
                            self.push(ValidationError::LaneOutOfRange { edge: edge.into(), index: lane });
                        }
                    }
                }
            }
        }
        if let (true, true, Some(from_lane), Some(to_lane)) = (complete, refs_ok, from_lane, to_lane) {
            self.connections.push(Connection {
                from_edge: el.attribute("from").unwrap_or_default().into(),
                to_edge: el.attribute("to").unwrap_or_default().into(),
                from_lane,
                to_lane,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: &str = r#"<nodes>
    <node id="a" x="0" y="0" type="priority"/>
    <node id="b" x="100" y="0" type="priority"/>
</nodes>"#;

    fn edges(edge_attrs: &str, lane: &str) -> String {
        format!(
            r#"<edges>
    <edge id="e0" from="a" to="b" numLanes="2" speed="13.89" {edge_attrs}>
        {lane}
    </edge>
</edges>"#
        )
    }

    const GOOD_LANE: &str = r#"<lane index="0" shape="0,-4.8 100,-4.8"/>"#;

    #[test]
    fn clean_pair_has_no_errors() {
        assert!(validate_network(NODES, &edges(r#"spreadType="right""#, GOOD_LANE)).is_empty());
    }

    #[test]
    fn lane_without_shape() {
        let errs = validate_network(NODES, &edges(r#"spreadType="right""#, r#"<lane index="0"/>"#));
        assert_eq!(errs, vec![ValidationError::MissingAttribute { element: "lane".into(), attribute: "shape".into() }]);
    }

    #[test]
    fn spread_type_left() {
        let errs = validate_network(NODES, &edges(r#"spreadType="left""#, GOOD_LANE));
        assert_eq!(
            errs,
            vec![ValidationError::InvalidEnum { element: "edge".into(), attribute: "spreadType".into(), value: "left".into() }]
        );
    }

    #[test]
    fn function_attribute_is_undeclared() {
        let errs = validate_network(NODES, &edges(r#"spreadType="right" function="internal""#, GOOD_LANE));
        assert_eq!(
            errs,
            vec![ValidationError::UndeclaredAttribute { element: "edge".into(), attribute: "function".into() }]
        );
    }

    #[test]
    fn hash_in_id() {
        let bad = edges(r#"spreadType="right""#, GOOD_LANE).replace("id=\"e0\"", "id=\"e#0\"");
        assert_eq!(validate_network(NODES, &bad), vec![ValidationError::MalformedKeyword { id: "e#0".into() }]);
    }

    #[test]
    fn unknown_node_reference_and_lane_range() {
        let bad = edges("", r#"<lane index="2" shape="0,0 1,0"/>"#).replace("to=\"b\"", "to=\"zz\"");
        let errs = validate_network(NODES, &bad);
        assert!(errs.contains(&ValidationError::UnknownReference {
            element: "edge".into(),
            attribute: "to".into(),
            id: "zz".into()
        }));
        assert!(errs.contains(&ValidationError::LaneOutOfRange { edge: "e0".into(), index: 2 }));
    }

    #[test]
    fn empty_edges_document() {
        assert_eq!(validate_network(NODES, "<edges/>"), vec![ValidationError::EmptyNetwork]);
    }

    #[test]
    fn syntax_errors_are_reported_per_document() {
        let errs = validate_network("<nodes>", "<edges></edges>");
        assert!(matches!(errs[0], ValidationError::XmlSyntax { document: DocumentKind::Nodes, .. }));
    }

    #[test]
    fn bad_shape_string() {
        let errs = validate_network(NODES, &edges("", r#"<lane index="0" shape="0,0"/>"#));
        assert!(matches!(&errs[0], ValidationError::InvalidValue { attribute, .. } if attribute == "shape"));
    }
}
