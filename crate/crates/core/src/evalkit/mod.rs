//! Scenario metrics: conformity, diversity, embedding distance, AV
//! performance, cross-view similarity and hint export.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compgen::CompgenError;
use crate::interpreter::InterpretError;
use crate::netgen::NetgenError;
use crate::provider::ProviderError;
use crate::simcore::SimError;

mod conformity;
mod describe;
mod diversity;
mod embed;
mod hints;
mod performance;
mod similarity;

pub use conformity::{
    conformity, conformity_table, static_obj_attr_acc, vehicle_attr_acc, ConformityReport, ConformityTable, ScenarioOutcome,
};
pub use describe::{classify_scene, describe_bundle, describe_view, infer_layout, objective_distance, View};
pub use diversity::{diversity, scenario_stats, DiversityColumn, DiversityReport, ScenarioStats, DIVERSITY_ROWS};
pub use embed::{
    cosine_similarity, tokens, Embedder, EmbeddingVector, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
    ENV_EMBEDDING_ENDPOINT, ENV_EMBEDDING_MODEL, HASHING_DIMENSION,
};
pub use hints::{export_hints, HintRecord, HintSource, PRE_COLLISION_WINDOW};
pub use performance::{compare_pipelines, performance, ComparisonReport, PerformanceReport, PerformanceWeights, COMPARISON_ROWS};
pub use similarity::{cross_view_similarity, section_texts, SimilarityTable, SECTIONS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("trace has no AV")]
    AvNotFound,
    #[error("run counts differ: {ours} vs {baseline}")]
    CountMismatch { ours: usize, baseline: usize },
}

/// Why a pipeline run did not produce a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureClass {
    MalformedKeyword,
    BlueprintReuse,
    ValidationError,
    RuntimeError,
}

impl FailureClass {
    pub const ALL: [FailureClass; 4] =
        [FailureClass::MalformedKeyword, FailureClass::BlueprintReuse, FailureClass::ValidationError, FailureClass::RuntimeError];
}

impl From<&NetgenError> for FailureClass {
    fn from(e: &NetgenError) -> Self {
        match e {
            NetgenError::CompileFailed { errors, .. } if errors.iter().any(|v| v.is_malformed_keyword()) => FailureClass::MalformedKeyword,
            NetgenError::CompileFailed { .. } => FailureClass::ValidationError,
            NetgenError::Provider(_) | NetgenError::Template(_) => FailureClass::RuntimeError,
        }
    }
}

impl From<&CompgenError> for FailureClass {
    fn from(e: &CompgenError) -> Self {
        match e {
            e if e.is_blueprint_reuse() => FailureClass::BlueprintReuse,
            CompgenError::Rejected { .. } | CompgenError::PlacementInfeasible(_) => FailureClass::ValidationError,
            _ => FailureClass::RuntimeError,
        }
    }
}

impl From<&InterpretError> for FailureClass {
    fn from(e: &InterpretError) -> Self {
        match e {
            InterpretError::UnparseableAfterRetries { .. } => FailureClass::ValidationError,
            _ => FailureClass::RuntimeError,
        }
    }
}

impl From<&SimError> for FailureClass {
    fn from(_: &SimError) -> Self {
        FailureClass::RuntimeError
    }
}

/// Aligned-column text table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(header: &[&str]) -> Self {
        TextTable { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn row_labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r[0].as_str()).collect()
    }
}

impl fmt::Display for TextTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let padded: Vec<String> =
                (0..cols).map(|i| format!("{:<w$}", cells.get(i).map(String::as_str).unwrap_or(""), w = widths[i])).collect();
            writeln!(f, "| {} |", padded.join(" | "))
        };
        line(f, &self.header)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(f, "|-{}-|", rule.join("-|-"))?;
        for r in &self.rows {
            line(f, r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::ValidationError;

    #[test]
    fn table_aligns_columns() {
        let mut t = TextTable::new(&["Metrics", "A"]);
        t.row(vec!["x".into(), "1.00".into()]);
        let s = t.to_string();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "| Metrics | A    |");
        assert_eq!(lines[2], "| x       | 1.00 |");
        assert!(lines.iter().all(|l| l.chars().count() == lines[0].chars().count()));
    }

    #[test]
    fn netgen_failures_are_classified() {
        let keyword = NetgenError::CompileFailed { errors: vec![ValidationError::MalformedKeyword { id: "#e".into() }], attempts: 4 };
        assert_eq!(FailureClass::from(&keyword), FailureClass::MalformedKeyword);
        let other = NetgenError::CompileFailed { errors: vec![ValidationError::EmptyNetwork], attempts: 4 };
        assert_eq!(FailureClass::from(&other), FailureClass::ValidationError);
        let down = NetgenError::Provider(ProviderError::Unavailable("x".into()));
        assert_eq!(FailureClass::from(&down), FailureClass::RuntimeError);
    }
}
