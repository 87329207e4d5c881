//! Prompt knowledge base: templates, rule strings and code examples.
//!
//! Templates are split into tagged sections so that whole classes of
//! guidance (reasoning steps, prior knowledge) can be removed for ablation.
//! Placeholders use `{{slot}}` syntax and must all be bound at render time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TEMPLATE_LINE_PREFIX: &str = "TEMPLATE: ";
pub const REASONING_HEADER: &str = "### Reasoning steps";
pub const KNOWLEDGE_HEADER: &str = "### Domain knowledge";
pub const FORMAT_HEADER: &str = "### Output format";
pub const INPUT_FENCE: &str = "```input";

pub mod names {
    pub const EXPAND_REQUEST: &str = "expand_request";
    pub const RESTRUCTURE_REPORT: &str = "restructure_report";
    pub const INTERPRET_IMAGE: &str = "interpret_image";
    pub const INTERPRET_VIDEO: &str = "interpret_video";
    pub const INTERPRET_GPS: &str = "interpret_gps";
    pub const NET_GENERATOR: &str = "net_generator";
    pub const AGENT_GENERATOR: &str = "agent_generator";
    pub const OBJECT_GENERATOR: &str = "object_generator";
    pub const DIRECT_SCENARIO: &str = "direct_scenario";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionTag {
    Task,
    Reasoning,
    PriorKnowledge,
    Format,
}

impl SectionTag {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "task" => Some(SectionTag::Task),
            "reasoning" => Some(SectionTag::Reasoning),
            "knowledge" | "prior_knowledge" => Some(SectionTag::PriorKnowledge),
            "format" => Some(SectionTag::Format),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSection {
    pub tag: SectionTag,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub sections: Vec<TemplateSection>,
}

impl PromptTemplate {
    pub fn slots(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.sections {
            let mut rest = s.text.as_str();
            while let Some(start) = rest.find("{{") {
                let after = &rest[start + 2..];
                let Some(end) = after.find("}}") else { break };
                out.insert(after[..end].trim().to_string());
                rest = &after[end + 2..];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeExample {
    /// Template the example belongs to.
    pub template: String,
    pub name: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptKnowledgeBase {
    pub templates: BTreeMap<String, PromptTemplate>,
    pub constraints: Vec<String>,
    pub code_examples: Vec<CodeExample>,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} slot {slot:?} is not bound")]
    UnboundSlot { template: String, slot: String },
    #[error("cannot read templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file {file:?}: {message}")]
    Format { file: String, message: String },
}

fn section(tag: SectionTag, text: &str) -> TemplateSection {
    TemplateSection { tag, text: text.trim().to_string() }
}

const DESCRIPTION_FORMAT: &str = r#"Answer with one JSON object and nothing else. Keys:
"road" {layout: Straight|Curve|TJunction|CrossIntersection|Merge|Roundabout, segments: [{length, lanes_forward, lanes_backward, speed_limit}], junction_notes},
"objects" [{kind: Cone|WarningSign|Barrier|Fence|LaneMarking, count, placement_hint}],
"agents" [{kind: Car|Truck|Bus|Motorcycle|Cyclist|Pedestrian, color, role: AV|BV|VRU, intent, approx_speed, relative_position}],
"weather" {precipitation, fog_density, sun_altitude, time_of_day},
"narrative", "scene_type": General|Intersection|ConstructionZone, "format": "usd-v1".
Units are meters, m/s, degrees and hours."#;

const DESCRIPTION_REASONING: &str = r#"1. Identify the road structure: layout, number of lanes per direction, segment lengths, speed limit.
2. List static objects that constrain motion, with counts.
3. List every road user, which one is the ego vehicle under test, and what each one intends to do at the critical moment.
4. Estimate weather and lighting.
5. Decide which of the three scene types fits best."#;

const DESCRIPTION_KNOWLEDGE: &str = r#"Pedestrians and cyclists are vulnerable road users (role VRU). At most one agent is the AV.
Risk comes from conflicts: cut-ins, unprotected turns, sudden braking, occluded crossings."#;

impl PromptKnowledgeBase {
    /// Built-in templates for every generator stage.
    pub fn builtin() -> Self {
        use names::*;
        use SectionTag::*;
        let describe = |name: &str, task: &str, extra_reasoning: &str| PromptTemplate {
            name: name.into(),
            sections: vec![
                section(Task, task),
                section(Reasoning, &format!("{DESCRIPTION_REASONING}\n{extra_reasoning}")),
                section(PriorKnowledge, DESCRIPTION_KNOWLEDGE),
                section(Format, DESCRIPTION_FORMAT),
            ],
        };
        let mut templates = BTreeMap::new();
        let mut add = |t: PromptTemplate| {
            templates.insert(t.name.clone(), t);
        };
        add(describe(
            EXPAND_REQUEST,
            "A test engineer asked for a driving scenario in a few words. Expand the request into a detailed, safety-critical scenario description.",
            "6. Fill in every detail the request leaves open with plausible, risky choices.",
        ));
        add(describe(
            RESTRUCTURE_REPORT,
            "Below is a crash report. Reconstruct the moment just before the accident and restructure it into road, static objects, agents and weather.",
            "6. Attribute each sentence of the report to the perspective it informs.",
        ));
        add(describe(
            INTERPRET_IMAGE,
            "Below are captions and detected elements from a front-camera image. Describe the scene it shows.",
            "6. Use buildings and parked vehicles along the road to infer the road geometry.\n7. Every detected vehicle and object must appear with its exact count.",
        ));
        add(describe(
            INTERPRET_VIDEO,
            "Below are captions of frames sampled in order from a dashcam video, with the measured forward distance. Describe the scene, keeping one consistent set of road users across frames.",
            "6. Carry what earlier frames showed forward into later frames.\n7. Road length follows the measured forward distance.",
        ));
        add(describe(
            INTERPRET_GPS,
            "A real road region was selected by GPS bounding box. Describe a risky scenario that could happen on it.",
            "",
        ));
        add(PromptTemplate {
            name: NET_GENERATOR.into(),
            sections: vec![
                section(Task, "Generate a SUMO road network for the road description below as a Node file and an Edge file."),
                section(
                    Reasoning,
                    "1. Place one node per junction and segment end.\n2. Create one edge per direction that has lanes.\n3. Check every edge references existing nodes.\n4. Check every attribute against the allowed schema before answering.",
                ),
                section(
                    PriorKnowledge,
                    "Node attributes: id, x, y, type (priority|traffic_light|unregulated).\nEdge attributes: id, from, to, numLanes, speed, spreadType (right|center|roadCenter).\nLane children need index and shape (\"x1,y1 x2,y2\").",
                ),
                section(Format, "Answer with a <nodes> document followed by an <edges> document.\n```input\n{{input}}\n```"),
            ],
        });
        add(PromptTemplate {
            name: AGENT_GENERATOR.into(),
            sections: vec![
                section(Task, "Place the described road users on the network at the critical moment."),
                section(
                    Reasoning,
                    "1. Put the AV at the start of its route.\n2. Place conflict partners close to the AV, other agents at least the minimum gap apart.\n3. Assign speeds below 1.5 times the lane speed limit.",
                ),
                section(
                    PriorKnowledge,
                    "Blueprints: vehicle.car, vehicle.truck, vehicle.bus, vehicle.motorcycle, vehicle.bicycle, walker.pedestrian.",
                ),
                section(
                    Format,
                    "Answer with JSON {\"agents\": [{\"ref\", \"blueprint\", \"edge\", \"lane\", \"s\", \"speed\", \"yaw_offset\"}]} or {\"infeasible\": reason}.\n```input\n{{input}}\n```",
                ),
            ],
        });
        add(PromptTemplate {
            name: OBJECT_GENERATOR.into(),
            sections: vec![
                section(Task, "Place the described static objects on the network."),
                section(
                    Reasoning,
                    "1. Closures use a taper of equally spaced cones.\n2. Warning signs stand upstream of the first cone.",
                ),
                section(PriorKnowledge, "Cones and barriers stand on the carriageway."),
                section(
                    Format,
                    "Answer with JSON {\"objects\": [{\"kind\", \"x\", \"y\", \"yaw\", \"footprint\": [length, width]}]} or {\"infeasible\": reason}.\n```input\n{{input}}\n```",
                ),
            ],
        });
        add(PromptTemplate {
            name: DIRECT_SCENARIO.into(),
            sections: vec![
                section(Task, "Generate a complete simulation scenario (network, agents, objects, weather) for the request below in a single answer."),
                section(Format, DESCRIPTION_FORMAT),
            ],
        });
        // interpreter templates take the raw input block
        for name in [EXPAND_REQUEST, RESTRUCTURE_REPORT, INTERPRET_IMAGE, INTERPRET_VIDEO, INTERPRET_GPS, DIRECT_SCENARIO] {
            if let Some(t) = templates.get_mut(name) {
                if let Some(fmt) = t.sections.iter_mut().find(|s| s.tag == Format) {
                    fmt.text.push_str("\n```input\n{{input}}\n```");
                }
            }
        }
        PromptKnowledgeBase {
            templates,
            constraints: vec![
                "Ids contain only letters, digits, '_' and '-'.".into(),
                "Never reuse a blueprint name inside another blueprint name.".into(),
                "All distances are meters, speeds m/s.".into(),
            ],
            code_examples: vec![
                CodeExample {
                    template: NET_GENERATOR.into(),
                    name: "two-lane straight road".into(),
                    snippet: "<nodes>\n    <node id=\"n0\" x=\"0\" y=\"0\" type=\"priority\"/>\n    <node id=\"n1\" x=\"100\" y=\"0\" type=\"priority\"/>\n</nodes>\n<edges>\n    <edge id=\"s0\" from=\"n0\" to=\"n1\" numLanes=\"2\" speed=\"13.89\" spreadType=\"right\"/>\n</edges>".into(),
                },
                CodeExample {
                    template: AGENT_GENERATOR.into(),
                    name: "ego and a cut-in car".into(),
                    snippet: "{\"agents\": [{\"ref\": 0, \"blueprint\": \"vehicle.car\", \"edge\": \"s0\", \"lane\": 0, \"s\": 10.0, \"speed\": 12.0, \"yaw_offset\": 0.0}, {\"ref\": 1, \"blueprint\": \"vehicle.car\", \"edge\": \"s0\", \"lane\": 1, \"s\": 12.0, \"speed\": 13.0, \"yaw_offset\": 0.0}]}".into(),
                },
            ],
        }
    }

    /// Loads templates from a directory on top of the built-in set.
    ///
    /// `<name>.prompt` files hold sections introduced by `@@ task`,
    /// `@@ reasoning`, `@@ knowledge` or `@@ format` lines. An optional
    /// `constraints.txt` replaces the rule list, one rule per line.
    pub fn load_dir(dir: &Path) -> Result<Self, KbError> {
        let mut kb = Self::builtin();
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            let file = path.display().to_string();
            if path.extension().and_then(|e| e.to_str()) == Some("prompt") {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let text = fs::read_to_string(&path)?;
                let mut sections: Vec<TemplateSection> = Vec::new();
                for line in text.lines() {
                    if let Some(tag) = line.strip_prefix("@@") {
                        let tag = SectionTag::parse(tag)
                            .ok_or_else(|| KbError::Format { file: file.clone(), message: format!("unknown section {tag:?}") })?;
                        sections.push(TemplateSection { tag, text: String::new() });
                    } else if let Some(cur) = sections.last_mut() {
                        cur.text.push_str(line);
                        cur.text.push('\n');
                    } else if !line.trim().is_empty() {
                        return Err(KbError::Format { file, message: "text before the first @@ section".into() });
                    }
                }
                for s in &mut sections {
                    s.text = s.text.trim().to_string();
                }
                kb.templates.insert(name.clone(), PromptTemplate { name, sections });
            } else if path.file_name().and_then(|n| n.to_str()) == Some("constraints.txt") {
                kb.constraints = fs::read_to_string(&path)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect();
            }
        }
        Ok(kb)
    }

    pub fn template(&self, name: &str) -> Result<&PromptTemplate, KbError> {
        self.templates.get(name).ok_or_else(|| KbError::UnknownTemplate(name.into()))
    }

    /// Knowledge base with every reasoning section removed.
    pub fn without_reasoning(&self) -> Self {
        self.without_tag(SectionTag::Reasoning)
    }

    /// Knowledge base with prior-knowledge sections, rule strings and code
    /// examples removed.
    pub fn without_prior_knowledge(&self) -> Self {
        let mut kb = self.without_tag(SectionTag::PriorKnowledge);
        kb.constraints.clear();
        kb.code_examples.clear();
        kb
    }

    fn without_tag(&self, tag: SectionTag) -> Self {
        let mut kb = self.clone();
        for t in kb.templates.values_mut() {
            t.sections.retain(|s| s.tag != tag);
        }
        kb
    }

    pub fn render(&self, name: &str, bindings: &[(&str, &str)]) -> Result<String, KbError> {
        let template = self.template(name)?;
        for slot in template.slots() {
            if !bindings.iter().any(|(k, _)| *k == slot) {
                return Err(KbError::UnboundSlot { template: name.into(), slot });
            }
        }
        let fill = |text: &str| {
            let mut out = text.to_string();
            for (k, v) in bindings {
                out = out.replace(&format!("{{{{{k}}}}}"), v);
            }
            out
        };
        let mut out = format!("{TEMPLATE_LINE_PREFIX}{name}\n");
        let mut knowledge: Vec<String> = template
            .sections
            .iter()
            .filter(|s| s.tag == SectionTag::PriorKnowledge)
            .map(|s| fill(&s.text))
            .collect();
        knowledge.extend(self.constraints.iter().map(|c| format!("- {c}")));
        for ex in self.code_examples.iter().filter(|e| e.template == name) {
            knowledge.push(format!("Example ({}):\n{}", ex.name, ex.snippet));
        }
        for s in template.sections.iter().filter(|s| s.tag == SectionTag::Task) {
            out.push_str(&fill(&s.text));
            out.push_str("\n\n");
        }
        let reasoning: Vec<String> =
            template.sections.iter().filter(|s| s.tag == SectionTag::Reasoning).map(|s| fill(&s.text)).collect();
        if !reasoning.is_empty() {
            out.push_str(REASONING_HEADER);
            out.push('\n');
            out.push_str(&reasoning.join("\n"));
            out.push_str("\n\n");
        }
        if !knowledge.is_empty() {
            out.push_str(KNOWLEDGE_HEADER);
            out.push('\n');
            out.push_str(&knowledge.join("\n"));
            out.push_str("\n\n");
        }
        let formats: Vec<String> =
            template.sections.iter().filter(|s| s.tag == SectionTag::Format).map(|s| fill(&s.text)).collect();
        if !formats.is_empty() {
            out.push_str(FORMAT_HEADER);
            out.push('\n');
            out.push_str(&formats.join("\n"));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Template name recorded on the first line of a rendered prompt.
pub fn template_of(prompt: &str) -> Option<&str> {
    prompt.lines().next()?.strip_prefix(TEMPLATE_LINE_PREFIX).map(str::trim)
}

/// Contents of the first ```input fenced block.
pub fn input_block(prompt: &str) -> Option<&str> {
    let start = prompt.find(INPUT_FENCE)? + INPUT_FENCE.len();
    let rest = prompt[start..].strip_prefix('\n').unwrap_or(&prompt[start..]);
    let end = rest.find("\n```")?;
    Some(&rest[..end])
}
