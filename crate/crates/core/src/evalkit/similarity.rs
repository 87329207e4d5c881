//! Section-wise similarity between input descriptions and descriptions
//! regenerated from the ego and bird's-eye views.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{cosine_similarity, Embedder, EvalError, TextTable};
use crate::ir::ScenarioDescription;
use crate::stats::Summary;

pub const SECTIONS: [&str; 5] = ["Overall scene", "Net", "Road User", "Static object", "Vehicle behavior"];

/// Plain-text rendering of each section, in the order of [`SECTIONS`].
pub fn section_texts(d: &ScenarioDescription) -> [String; 5] {
    let overall = format!("{} {}", d.scene_type.label(), d.narrative);
    let mut net = format!("{:?}", d.road.layout);
    for s in &d.road.segments {
        net.push_str(&format!(" segment {} m {} forward {} backward {} mps", s.length, s.lanes_forward, s.lanes_backward, s.speed_limit));
    }
    let users: Vec<String> = d
        .agents
        .iter()
        .map(|a| format!("{:?} {} {:?} {}", a.kind, a.color.as_deref().unwrap_or(""), a.role, a.relative_position))
        .collect();
    let objects: Vec<String> = d.objects.iter().map(|o| format!("{} {:?}", o.count, o.kind)).collect();
    let behavior: Vec<String> = d.agents.iter().map(|a| format!("{} at {} mps", a.intent, a.approx_speed)).collect();
    [overall, net, users.join("; "), objects.join("; "), behavior.join("; ")]
}

fn section_similarity(a: &str, b: &str, embedder: &dyn Embedder) -> Result<f64, EvalError> {
    match (a.trim().is_empty(), b.trim().is_empty()) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        _ => cosine_similarity(&embedder.embed(a)?, &embedder.embed(b)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    /// Per section, in the order of [`SECTIONS`].
    pub ego: Vec<Summary>,
    pub bev: Vec<Summary>,
}

/// `sets` holds (input, regenerated from ego view, regenerated from BEV).
/// Sections empty on both sides count as identical, on one side as 0.
pub fn cross_view_similarity(
    sets: &[(ScenarioDescription, ScenarioDescription, ScenarioDescription)],
    embedder: &dyn Embedder,
) -> Result<SimilarityTable, EvalError> {
    let mut ego = vec![Vec::new(); SECTIONS.len()];
    let mut bev = vec![Vec::new(); SECTIONS.len()];
    for (input, e, b) in sets {
        let (ti, te, tb) = (section_texts(input), section_texts(e), section_texts(b));
        for k in 0..SECTIONS.len() {
            ego[k].push(section_similarity(&ti[k], &te[k], embedder)?);
            bev[k].push(section_similarity(&ti[k], &tb[k], embedder)?);
        }
    }
    Ok(SimilarityTable { ego: ego.iter().map(|v| Summary::of(v)).collect(), bev: bev.iter().map(|v| Summary::of(v)).collect() })
}

impl SimilarityTable {
    pub fn to_table(&self) -> TextTable {
        let mut t = TextTable::new(&["Scenario", "Ego car view", "BEV"]);
        for (k, name) in SECTIONS.iter().enumerate() {
            t.row(vec![name.to_string(), self.ego[k].to_string(), self.bev[k].to_string()]);
        }
        t
    }
}

impl fmt::Display for SimilarityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_table())
    }
}
