use std::fmt::Write as _;

use super::validate::read_network;
use super::{RoadNetwork, ValidationError};
use crate::geometry::Vec2;

fn escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn shape_string(points: &[Vec2]) -> String {
    points.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join(" ")
}

/// Writes the nodes and edges documents. Floats use the shortest
/// representation that reads back to the same value.
pub fn serialize_sumo_xml(net: &RoadNetwork) -> (String, String) {
    let mut nodes = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<nodes>\n");
    for n in &net.nodes {
        let _ = writeln!(
            nodes,
            "    <node id=\"{}\" x=\"{}\" y=\"{}\" type=\"{}\"/>",
            escape(&n.id),
            n.x,
            n.y,
            n.node_type.as_str()
        );
    }
    nodes.push_str("</nodes>\n");

    let mut edges = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<edges>\n");
    for e in &net.edges {
        let _ = write!(
            edges,
            "    <edge id=\"{}\" from=\"{}\" to=\"{}\" numLanes=\"{}\" speed=\"{}\" spreadType=\"{}\"",
            escape(&e.id),
            escape(&e.from),
            escape(&e.to),
            e.num_lanes,
            e.speed,
            e.spread_type.as_str()
        );
        if e.lanes.is_empty() {
            edges.push_str("/>\n");
        } else {
            edges.push_str(">\n");
            for lane in &e.lanes {
                let _ = writeln!(edges, "        <lane index=\"{}\" shape=\"{}\"/>", lane.index, shape_string(&lane.shape));
            }
            edges.push_str("    </edge>\n");
        }
    }
    for c in &net.connections {
        let _ = writeln!(
            edges,
            "    <connection from=\"{}\" to=\"{}\" fromLane=\"{}\" toLane=\"{}\"/>",
            escape(&c.from_edge),
            escape(&c.to_edge),
            c.from_lane,
            c.to_lane
        );
    }
    edges.push_str("</edges>\n");
    (nodes, edges)
}

/// Reads a document pair, failing with the first violation found.
pub fn parse_sumo_xml(xml_nodes: &str, xml_edges: &str) -> Result<RoadNetwork, ValidationError> {
    match read_network(xml_nodes, xml_edges) {
        (Some(net), _) => Ok(net),
        (None, mut errors) => Err(errors.swap_remove(0)),
    }
}

/// Pulls the `<nodes>…</nodes>` and `<edges>…</edges>` documents out of a
/// free-form model response.
pub fn split_documents(response: &str) -> Option<(String, String)> {
    let grab = |tag: &str| {
        let open = format!("<{tag}");
        let close = format!("</{tag}>");
        let start = find_open_tag(response, &open)?;
        let rest = &response[start..];
        if let Some(end) = rest.find(&close) {
            return Some(rest[..end + close.len()].to_string());
        }
        // self-closing root, e.g. <edges/>
        let end = rest.find("/>")?;
        Some(rest[..end + 2].to_string())
    };
    Some((grab("nodes")?, grab("edges")?))
}

fn find_open_tag(haystack: &str, open: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(open) {
        let idx = from + pos;
        let next = haystack[idx + open.len()..].chars().next();
        if matches!(next, Some('>') | Some('/') | Some(' ') | Some('\n') | Some('\t') | Some('\r')) {
            return Some(idx);
        }
        from = idx + open.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{validate_network, Connection, Edge, Lane, Node, NodeType, SpreadType};

    fn sample() -> RoadNetwork {
        RoadNetwork {
            nodes: vec![
                Node { id: "a".into(), x: 0.0, y: 0.0, node_type: NodeType::Priority },
                Node { id: "b".into(), x: 100.0, y: 0.0, node_type: NodeType::TrafficLight },
                Node { id: "c".into(), x: 150.5, y: -3.25, node_type: NodeType::Unregulated },
            ],
            edges: vec![
                Edge {
                    id: "e0".into(),
                    from: "a".into(),
                    to: "b".into(),
                    num_lanes: 2,
                    speed: 13.89,
                    spread_type: SpreadType::Right,
                    lanes: vec![],
                },
                Edge {
                    id: "e1".into(),
                    from: "b".into(),
                    to: "c".into(),
                    num_lanes: 1,
                    speed: 8.3,
                    spread_type: SpreadType::Center,
                    lanes: vec![Lane { index: 0, shape: vec![Vec2::new(100.0, 0.0), Vec2::new(150.5, -3.25)] }],
                },
            ],
            connections: vec![Connection { from_edge: "e0".into(), to_edge: "e1".into(), from_lane: 1, to_lane: 0 }],
        }
    }

    #[test]
    fn num_lanes_attribute_is_written() {
        let (_, edges) = serialize_sumo_xml(&sample());
        assert!(edges.contains("numLanes=\"2\""));
    }

    #[test]
    fn lane_shapes_use_space_separated_pairs() {
        let (_, edges) = serialize_sumo_xml(&sample());
        assert!(edges.contains("<lane index=\"0\" shape=\"100,0 150.5,-3.25\"/>"));
    }

    #[test]
    fn round_trip_and_clean_validation() {
        let net = sample();
        let (n, e) = serialize_sumo_xml(&net);
        assert!(validate_network(&n, &e).is_empty());
        assert_eq!(parse_sumo_xml(&n, &e).unwrap(), net);
    }

    #[test]
    fn malformed_document_reports_missing_attribute() {
        let (n, e) = serialize_sumo_xml(&sample());
        let e = e.replace(" shape=\"100,0 150.5,-3.25\"", "");
        assert_eq!(
            parse_sumo_xml(&n, &e).unwrap_err(),
            ValidationError::MissingAttribute { element: "lane".into(), attribute: "shape".into() }
        );
    }

    #[test]
    fn empty_edges_is_empty_network() {
        let (n, _) = serialize_sumo_xml(&sample());
        assert_eq!(parse_sumo_xml(&n, "<edges>\n</edges>").unwrap_err(), ValidationError::EmptyNetwork);
    }

    #[test]
    fn ids_are_escaped() {
        let mut net = sample();
        net.nodes[0].id = "a&<b>".into();
        net.edges[0].from = "a&<b>".into();
        let (n, e) = serialize_sumo_xml(&net);
        assert_eq!(parse_sumo_xml(&n, &e).unwrap(), net);
    }

    #[test]
    fn split_from_chatty_response() {
        let (n, e) = serialize_sumo_xml(&sample());
        let response = format!("Here is the network.\n```xml\n{n}```\n\n```xml\n{e}```\nDone.");
        let (n2, e2) = split_documents(&response).unwrap();
        assert_eq!(parse_sumo_xml(&n2, &e2).unwrap(), sample());
        assert!(split_documents("no xml here").is_none());
    }
}
