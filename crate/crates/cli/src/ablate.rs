//! Success rate with prompt components removed.

use serde::{Deserialize, Serialize};

use scenforge::evalkit::TextTable;

use crate::batch::run_batch_labeled;
use crate::config::{Knobs, PipelineConfig};
use crate::inputs::InputSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    NoInterpreter,
    NoPriorKnowledge,
    NoReasoningSection,
}

impl Knob {
    pub const ALL: [Knob; 3] = [Knob::NoInterpreter, Knob::NoPriorKnowledge, Knob::NoReasoningSection];

    pub fn label(self) -> &'static str {
        match self {
            Knob::NoInterpreter => "without interpreter",
            Knob::NoPriorKnowledge => "without prior knowledge",
            Knob::NoReasoningSection => "without reasoning section",
        }
    }

    pub fn apply(self, k: &mut Knobs) {
        match self {
            Knob::NoInterpreter => k.no_interpreter = true,
            Knob::NoPriorKnowledge => k.no_prior_knowledge = true,
            Knob::NoReasoningSection => k.no_reasoning_section = true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub knob: Option<Knob>,
    pub success_rate: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_table(&self) -> TextTable {
        let mut t = TextTable::new(&["Metrics", "Success rate"]);
        for r in &self.rows {
            t.row(vec![r.label.clone(), format!("{:.2}", r.success_rate)]);
        }
        t
    }
}

/// The full pipeline first, then one configuration per knob, each removing
/// only that component.
pub fn ablate(inputs: &[InputSpec], cfg: &PipelineConfig, knobs: &[Knob]) -> std::io::Result<AblationTable> {
    let mut chosen: Vec<Knob> = knobs.to_vec();
    chosen.sort();
    chosen.dedup();
    let mut configs: Vec<(String, Option<Knob>, Knobs)> = vec![("Ours".into(), None, cfg.knobs)];
    for k in chosen {
        let mut knobs = cfg.knobs;
        k.apply(&mut knobs);
        configs.push((k.label().into(), Some(k), knobs));
    }
    let mut rows = Vec::new();
    for (label, knob, knobs) in configs {
        let c = PipelineConfig { knobs, compare_baseline: false, ..cfg.clone() };
        let tag = knob.map_or("ablate-ours".to_string(), |k| format!("ablate-{}", serde_json::to_value(k).expect("knob").as_str().expect("str")));
        let out = run_batch_labeled(inputs, &c, &tag)?;
        rows.push(AblationRow { label, knob, success_rate: out.report.success_rate, runs: out.report.runs.len() });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_and_interpreter_row_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { output_dir: dir.path().into(), batch_size: 2, workers: 2, ..Default::default() };
        let inputs = [InputSpec::text("a", "two cars on a highway, one cuts in"), InputSpec::text("b", "construction zone test")];
        let t = ablate(&inputs, &cfg, &Knob::ALL).unwrap();
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["Ours", "without interpreter", "without prior knowledge", "without reasoning section"]);
        assert_eq!(t.rows[0].success_rate, 1.0);
        assert_eq!(t.rows[1].success_rate, 0.0);
        assert!(t.rows.iter().all(|r| r.runs == 4));
        assert_eq!(t.to_table().row_labels().len(), 4);
    }

    #[test]
    fn no_knobs_is_just_the_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { output_dir: dir.path().into(), batch_size: 1, workers: 1, ..Default::default() };
        let t = ablate(&[InputSpec::text("a", "a car on a road")], &cfg, &[]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].success_rate, 1.0);
    }
}
