use thiserror::Error;

use super::build::pieces;
use super::validate::read_network;
use super::{split_documents, RoadNetwork, ValidationError};
use crate::ir::{canonical_json, RoadDescription, RoadLayout};
use crate::kb::{names, KbError, PromptKnowledgeBase};
use crate::provider::{complete_structured, CompletionProvider, ProviderError, ProviderRequest, RetryError};

#[derive(Debug, Error)]
pub enum NetgenError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("network failed validation after {attempts} attempts: {}", summarize(.errors))]
    CompileFailed { errors: Vec<ValidationError>, attempts: u32 },
    #[error(transparent)]
    Template(#[from] KbError),
}

impl NetgenError {
    pub fn validation_errors(&self) -> &[ValidationError] {
        match self {
            NetgenError::CompileFailed { errors, .. } => errors,
            _ => &[],
        }
    }
}

fn summarize(errors: &[ValidationError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

struct Rejection(Vec<ValidationError>);

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.0 {
            writeln!(f, "- {e}")?;
        }
        Ok(())
    }
}

/// Checks the structural promises a compiled network makes about its layout
/// and per-segment lane counts.
pub fn check_layout(road: &RoadDescription, net: &RoadNetwork) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let degrees = net.node_degrees();
    let count_deg = |d: usize| degrees.values().filter(|&&v| v == d).count();
    let mismatch = |msg: String| ValidationError::LayoutMismatch(msg);
    match road.layout {
        RoadLayout::Straight | RoadLayout::Curve => {
            if degrees.values().any(|&d| d > 2) {
                errors.push(mismatch("a chain layout has a node joining more than two roads".into()));
            }
            if net.nodes.len() != road.segments.len() + 1 {
                errors.push(mismatch(format!(
                    "expected {} chain nodes, found {}",
                    road.segments.len() + 1,
                    net.nodes.len()
                )));
            }
        }
        RoadLayout::CrossIntersection => {
            if count_deg(4) != 1 {
                errors.push(mismatch(format!("expected one four-way junction, found {}", count_deg(4))));
            }
        }
        RoadLayout::TJunction => {
            if count_deg(3) != 1 {
                errors.push(mismatch(format!("expected one three-way junction, found {}", count_deg(3))));
            }
        }
        RoadLayout::Merge => {
            if count_deg(3) < 1 {
                errors.push(mismatch("merge has no node joining three roads".into()));
            }
        }
        RoadLayout::Roundabout => {
            if count_deg(3) < 3 {
                errors.push(mismatch("roundabout ring needs at least three entries".into()));
            }
        }
    }
    let mut pool: Vec<u32> = net.edges.iter().map(|e| e.num_lanes).collect();
    for (i, piece) in pieces(road).iter().enumerate() {
        let s = piece.segment;
        let wanted = if piece.one_way {
            vec![s.lanes_forward.max(1)]
        } else {
            [s.lanes_forward, s.lanes_backward].into_iter().filter(|&n| n > 0).collect()
        };
        for n in wanted {
            match pool.iter().position(|&p| p == n) {
                Some(k) => {
                    pool.swap_remove(k);
                }
                None => errors.push(mismatch(format!("segment {i}: no edge carries {n} lanes"))),
            }
        }
    }
    errors
}

/// Asks the provider for a nodes/edges document pair and accepts it only
/// when it validates and matches the layout.
pub fn compile_network(
    road: &RoadDescription,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    max_retries: u32,
) -> Result<RoadNetwork, NetgenError> {
    let input = canonical_json(road);
    let prompt = kb.render(names::NET_GENERATOR, &[("input", input.trim_end())])?;
    let request = ProviderRequest {
        template_name: names::NET_GENERATOR.into(),
        rendered_prompt: prompt,
        expected_schema: vec!["nodes".into(), "edges".into()],
        max_retries,
    };
    let accept = |raw: &str| -> Result<RoadNetwork, Rejection> {
        let Some((nodes, edges)) = split_documents(raw) else {
            return Err(Rejection(vec![ValidationError::UnknownElement {
                element: "answer has no <nodes> and <edges> documents".into(),
            }]));
        };
        match read_network(&nodes, &edges) {
            (Some(net), _) => {
                let layout = check_layout(road, &net);
                if layout.is_empty() {
                    Ok(net)
                } else {
                    Err(Rejection(layout))
                }
            }
            (None, errors) => Err(Rejection(errors)),
        }
    };
    match complete_structured(provider, &request, accept) {
        Ok(resp) => Ok(resp.parsed.expect("accepted answers are parsed")),
        Err(RetryError::Provider(e)) => Err(NetgenError::Provider(e)),
        Err(RetryError::Exhausted { last_error, attempts }) => {
            Err(NetgenError::CompileFailed { errors: last_error.0, attempts })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::RoadSegment;
    use crate::netgen::{build_network, network_stats};
    use crate::provider::{MockFaults, MockProvider, NetworkFault};

    fn road(layout: RoadLayout, n: usize, length: f64, fw: u32, bw: u32) -> RoadDescription {
        RoadDescription {
            layout,
            segments: vec![RoadSegment { length, lanes_forward: fw, lanes_backward: bw, speed_limit: 13.89 }; n],
            junction_notes: String::new(),
        }
    }

    #[test]
    fn straight_road_compiles() {
        let kb = PromptKnowledgeBase::builtin();
        let net = compile_network(&road(RoadLayout::Straight, 1, 100.0, 2, 0), &kb, &MockProvider::new(1), 3).unwrap();
        assert_eq!((net.nodes.len(), net.edges.len(), net.edges[0].num_lanes), (2, 1, 2));
        assert_eq!(network_stats(&net).route_length, 100.0);
    }

    #[test]
    fn cross_intersection_compiles() {
        let kb = PromptKnowledgeBase::builtin();
        let net = compile_network(&road(RoadLayout::CrossIntersection, 4, 50.0, 1, 1), &kb, &MockProvider::new(1), 3).unwrap();
        // four arms, each with one edge per direction, all meeting at the centre
        assert_eq!(net.nodes.len(), 1 + 4);
        assert_eq!(net.edges.len(), 4 * 2);
        assert_eq!(net.incident_edges("J0"), 8);
    }

    #[test]
    fn left_spread_type_fails_compilation() {
        let kb = PromptKnowledgeBase::builtin();
        let mock = MockProvider::with_faults(1, MockFaults { network_fault: Some(NetworkFault::SpreadTypeLeft), ..Default::default() });
        let err = compile_network(&road(RoadLayout::Straight, 1, 100.0, 1, 1), &kb, &mock, 2).unwrap_err();
        match &err {
            NetgenError::CompileFailed { errors, attempts } => {
                assert_eq!(*attempts, 3);
                assert!(errors.iter().any(|e| matches!(e, ValidationError::InvalidEnum { value, .. } if value == "left")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_off_fault_is_repaired_by_retry() {
        let kb = PromptKnowledgeBase::builtin();
        let mock = MockProvider::with_faults(1, MockFaults { network_fault_once: Some(NetworkFault::HashInEdgeId), ..Default::default() });
        assert!(compile_network(&road(RoadLayout::Straight, 1, 100.0, 1, 1), &kb, &mock, 1).is_ok());
    }

    #[test]
    fn layout_check_catches_wrong_topology() {
        let cross = road(RoadLayout::CrossIntersection, 4, 50.0, 1, 1);
        let straight_net = build_network(&road(RoadLayout::Straight, 2, 50.0, 1, 1));
        assert!(!check_layout(&cross, &straight_net).is_empty());
        let fewer_lanes = road(RoadLayout::Straight, 2, 50.0, 3, 1);
        assert!(!check_layout(&fewer_lanes, &straight_net).is_empty());
    }
}
