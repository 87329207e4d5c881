//! Multimodal interpreter: turns every input variant into a
//! [`ScenarioDescription`] by prompting a provider and checking the answer.

use std::collections::BTreeMap;

use serde_json::json;
use thiserror::Error;

use crate::ir::{
    canonical_json, parse_description, AgentKind, DescriptionError, GpsBoundingBox, ImageDescriptor, InputError,
    MultimodalInput, ObjectKind, ScenarioDescription, VideoDescriptor,
};
use crate::kb::{names, KbError, PromptKnowledgeBase};
use crate::netgen::{network_stats, RoadNetwork};
use crate::provider::{
    complete_structured, extract_json, CompletionProvider, ProviderError, ProviderRequest, ProviderResponse, RetryError,
    DEFAULT_MAX_RETRIES,
};

pub const DESCRIPTION_SECTIONS: [&str; 4] = ["road", "objects", "agents", "weather"];

#[derive(Debug, Clone, PartialEq)]
pub struct InterpreterConfig {
    pub max_retries: u32,
    /// Text inputs shorter than this many characters are expanded, longer
    /// ones are restructured.
    pub short_request_chars: usize,
}

impl Default for InterpreterConfig {
    fn default() -> Self {
        InterpreterConfig { max_retries: DEFAULT_MAX_RETRIES, short_request_chars: 160 }
    }
}

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(ProviderError),
    #[error("no parseable description after {attempts} attempts: {last_error}")]
    UnparseableAfterRetries { last_error: DescriptionError, attempts: u32 },
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("depth samples must be positive")]
    NonPositiveDepth,
    #[error(transparent)]
    Template(#[from] KbError),
}

/// What a detected image label stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    Agent(AgentKind),
    Object(ObjectKind),
}

/// Maps a detector label such as "parked cars" or "traffic cone" to a kind.
pub fn element_kind(label: &str) -> Option<Element> {
    let l = label.to_ascii_lowercase();
    let has = |w: &str| l.contains(w);
    Some(if has("cone") {
        Element::Object(ObjectKind::Cone)
    } else if has("sign") {
        Element::Object(ObjectKind::WarningSign)
    } else if has("barrier") || has("barricade") {
        Element::Object(ObjectKind::Barrier)
    } else if has("fence") {
        Element::Object(ObjectKind::Fence)
    } else if has("marking") {
        Element::Object(ObjectKind::LaneMarking)
    } else if has("truck") || has("lorry") {
        Element::Agent(AgentKind::Truck)
    } else if has("bus") {
        Element::Agent(AgentKind::Bus)
    } else if has("motorcycle") || has("motorbike") || has("scooter") {
        Element::Agent(AgentKind::Motorcycle)
    } else if has("cyclist") || has("bicycle") || has("bike") {
        Element::Agent(AgentKind::Cyclist)
    } else if has("pedestrian") || has("person") || has("people") || has("child") || has("walker") {
        Element::Agent(AgentKind::Pedestrian)
    } else if has("car") || has("vehicle") || has("van") || has("suv") || has("taxi") {
        Element::Agent(AgentKind::Car)
    } else {
        return None;
    })
}

/// Forward distance travelled towards a fixed landmark: the sum of the
/// positive depth decreases between consecutive frames.
pub fn integrate_forward_distance(depth_samples: &[f64]) -> Result<f64, InterpretError> {
    if depth_samples.len() < 2 {
        return Err(InputError::InsufficientFrames(depth_samples.len()).into());
    }
    if depth_samples.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(InterpretError::NonPositiveDepth);
    }
    Ok(depth_samples.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum())
}

type Check<'a> = dyn Fn(&ScenarioDescription) -> Result<(), DescriptionError> + 'a;

fn ask(
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
    template: &str,
    input: &str,
    check: &Check<'_>,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    let request = ProviderRequest {
        template_name: template.into(),
        rendered_prompt: kb.render(template, &[("input", input)])?,
        expected_schema: DESCRIPTION_SECTIONS.iter().map(|s| s.to_string()).collect(),
        max_retries: cfg.max_retries,
    };
    complete_structured(provider, &request, |raw| {
        let json = extract_json(raw).ok_or_else(|| DescriptionError::Malformed("answer contains no JSON object".into()))?;
        let d = parse_description(json)?;
        check(&d)?;
        Ok(d)
    })
    .map_err(|e| match e {
        RetryError::Provider(p) => InterpretError::ProviderUnavailable(p),
        RetryError::Exhausted { last_error, attempts } => InterpretError::UnparseableAfterRetries { last_error, attempts },
    })
}

fn no_check(_: &ScenarioDescription) -> Result<(), DescriptionError> {
    Ok(())
}

fn needs_agents(d: &ScenarioDescription) -> Result<(), DescriptionError> {
    if d.agents.is_empty() {
        return Err(DescriptionError::Invariant("an expanded request needs at least one agent".into()));
    }
    Ok(())
}

/// Dispatches on the input variant. GPS boxes are described without a
/// network; the pipeline passes ingested network facts through
/// [`interpret_gps`] instead.
pub fn interpret_detailed(
    input: &MultimodalInput,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    input.validate()?;
    match input {
        MultimodalInput::TextRequest(text) if text.chars().count() < cfg.short_request_chars => {
            expand_short_request_detailed(text, kb, provider, cfg)
        }
        MultimodalInput::TextRequest(text) | MultimodalInput::CrashReport(text) => {
            restructure_report_detailed(text, kb, provider, cfg)
        }
        MultimodalInput::ImageDescriptor(d) => interpret_image_detailed(d, kb, provider, cfg),
        MultimodalInput::VideoDescriptor(d) => interpret_video_detailed(d, kb, provider, cfg),
        MultimodalInput::GpsBoundingBox(b) => interpret_gps(b, None, kb, provider, cfg),
    }
}

pub fn interpret(
    input: &MultimodalInput,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ScenarioDescription, InterpretError> {
    interpret_detailed(input, kb, provider, cfg).map(into_description)
}

fn into_description(r: ProviderResponse<ScenarioDescription>) -> ScenarioDescription {
    r.parsed.expect("accepted answers are parsed")
}

pub fn expand_short_request_detailed(
    text: &str,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    ask(kb, provider, cfg, names::EXPAND_REQUEST, text.trim(), &needs_agents)
}

pub fn expand_short_request(
    text: &str,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ScenarioDescription, InterpretError> {
    expand_short_request_detailed(text, kb, provider, cfg).map(into_description)
}

pub fn restructure_report_detailed(
    text: &str,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    ask(kb, provider, cfg, names::RESTRUCTURE_REPORT, text.trim(), &no_check)
}

pub fn restructure_report(
    text: &str,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ScenarioDescription, InterpretError> {
    restructure_report_detailed(text, kb, provider, cfg).map(into_description)
}

/// Described counts per detected kind of an image descriptor.
pub fn detected_counts(desc: &ImageDescriptor) -> (BTreeMap<AgentKind, u32>, BTreeMap<ObjectKind, u32>) {
    let mut agents = BTreeMap::new();
    let mut objects = BTreeMap::new();
    for e in &desc.elements {
        match element_kind(&e.label) {
            Some(Element::Agent(k)) => *agents.entry(k).or_insert(0) += e.count,
            Some(Element::Object(k)) => *objects.entry(k).or_insert(0) += e.count,
            None => {}
        }
    }
    (agents, objects)
}

pub fn interpret_image_detailed(
    desc: &ImageDescriptor,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    if desc.captions.is_empty() {
        return Err(InterpretError::UnparseableAfterRetries {
            last_error: DescriptionError::MissingField("captions".into()),
            attempts: 0,
        });
    }
    let (agents, objects) = detected_counts(desc);
    let check = |d: &ScenarioDescription| -> Result<(), DescriptionError> {
        for kind in AgentKind::ALL {
            let want = agents.get(&kind).copied().unwrap_or(0) as usize;
            let got = d.agents.iter().filter(|a| a.kind == kind).count();
            if want != got {
                return Err(DescriptionError::Invariant(format!("{kind:?}: detected {want}, described {got}")));
            }
        }
        for kind in ObjectKind::ALL {
            let want = objects.get(&kind).copied().unwrap_or(0);
            if d.object_count(kind) != want {
                return Err(DescriptionError::Invariant(format!("{kind:?}: detected {want}, described {}", d.object_count(kind))));
            }
        }
        Ok(())
    };
    let input = canonical_json(desc);
    ask(kb, provider, cfg, names::INTERPRET_IMAGE, input.trim_end(), &check)
}

pub fn interpret_image_descriptor(
    desc: &ImageDescriptor,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ScenarioDescription, InterpretError> {
    interpret_image_detailed(desc, kb, provider, cfg).map(into_description)
}

/// Frames are passed in order with the depth-derived distance so the answer
/// can carry one agent set across frames. Segment lengths are then rescaled
/// to sum to the measured forward distance.
pub fn interpret_video_detailed(
    desc: &VideoDescriptor,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    if desc.frames.len() < 2 {
        return Err(InputError::InsufficientFrames(desc.frames.len()).into());
    }
    let depths: Vec<f64> = desc.frames.iter().map(|f| f.forward_depth).collect();
    let distance = integrate_forward_distance(&depths)?;
    if distance <= 0.0 {
        return Err(InterpretError::UnparseableAfterRetries {
            last_error: DescriptionError::RangeViolation("length".into()),
            attempts: 0,
        });
    }
    let frames: Vec<_> = desc.frames.iter().enumerate().map(|(i, f)| json!({"index": i, "caption": f.caption})).collect();
    let input = canonical_json(&json!({ "frames": frames, "forward_distance": distance }));
    let mut resp = ask(kb, provider, cfg, names::INTERPRET_VIDEO, input.trim_end(), &no_check)?;
    if let Some(d) = resp.parsed.as_mut() {
        let total = d.road.total_length();
        for seg in &mut d.road.segments {
            seg.length *= distance / total;
        }
        // the last segment absorbs rounding so the sum is exact
        let rest: f64 = d.road.segments.iter().rev().skip(1).map(|s| s.length).sum();
        if let Some(last) = d.road.segments.last_mut() {
            last.length = distance - rest;
        }
    }
    Ok(resp)
}

pub fn interpret_video_descriptor(
    desc: &VideoDescriptor,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ScenarioDescription, InterpretError> {
    interpret_video_detailed(desc, kb, provider, cfg).map(into_description)
}

/// Facts about an ingested network shown to the GPS prompt.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NetworkFacts {
    pub edges: usize,
    pub nodes: usize,
    pub max_junction_degree: usize,
    pub route_length: f64,
    pub max_lanes: u32,
    pub speed_limit: f64,
}

impl NetworkFacts {
    pub fn of(net: &RoadNetwork) -> Self {
        NetworkFacts {
            edges: net.edges.len(),
            nodes: net.nodes.len(),
            max_junction_degree: net.node_degrees().values().copied().max().unwrap_or(0),
            route_length: network_stats(net).route_length,
            max_lanes: net.edges.iter().map(|e| e.num_lanes).max().unwrap_or(0),
            speed_limit: net.edges.iter().map(|e| e.speed).fold(0.0, f64::max),
        }
    }
}

pub fn interpret_gps(
    bbox: &GpsBoundingBox,
    facts: Option<&NetworkFacts>,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    bbox.validate()?;
    let input = canonical_json(&json!({ "bbox": bbox, "network": facts }));
    ask(kb, provider, cfg, names::INTERPRET_GPS, input.trim_end(), &no_check)
}

/// Skips interpretation: the raw input goes straight to a single
/// whole-scenario prompt whose answer must still parse as a description.
pub fn direct_scenario_detailed(
    input: &MultimodalInput,
    kb: &PromptKnowledgeBase,
    provider: &dyn CompletionProvider,
    cfg: &InterpreterConfig,
) -> Result<ProviderResponse<ScenarioDescription>, InterpretError> {
    input.validate()?;
    let text = match input {
        MultimodalInput::TextRequest(t) | MultimodalInput::CrashReport(t) => t.clone(),
        MultimodalInput::ImageDescriptor(d) => canonical_json(d),
        MultimodalInput::VideoDescriptor(d) => canonical_json(d),
        MultimodalInput::GpsBoundingBox(b) => canonical_json(b),
    };
    ask(kb, provider, cfg, names::DIRECT_SCENARIO, text.trim_end(), &no_check)
}

#[cfg(test)]
mod tests;
