//! Pipeline configuration: one JSON document, provider credentials from the
//! environment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scenforge::compgen::PlacementConstraints;
use scenforge::evalkit::{Embedder, HashingEmbedder, PerformanceWeights, RemoteEmbedder, RemoteEmbedderConfig};
use scenforge::kb::PromptKnowledgeBase;
use scenforge::provider::{CompletionProvider, HttpProvider, HttpProviderConfig, MockFaults, MockProvider};
use scenforge::simcore::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSettings {
    Mock {
        #[serde(default)]
        faults: MockFaults,
    },
    Http(HttpProviderConfig),
}

impl ProviderSettings {
    /// A fresh provider for one run. The mock is seeded per run.
    pub fn build(&self, seed: u64) -> Box<dyn CompletionProvider> {
        match self {
            ProviderSettings::Mock { faults } => Box::new(MockProvider::with_faults(seed, faults.clone())),
            ProviderSettings::Http(c) => Box::new(HttpProvider::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSettings {
    Hashing { dimension: usize },
    Remote(RemoteEmbedderConfig),
}

impl EmbedderSettings {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self {
            EmbedderSettings::Hashing { dimension } => Box::new(HashingEmbedder { dimension: *dimension }),
            EmbedderSettings::Remote(c) => Box::new(RemoteEmbedder::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    /// Seconds.
    pub duration: f64,
    pub dt: f64,
    pub params: SimConfig,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings { duration: 20.0, dt: 0.1, params: SimConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    pub weights: PerformanceWeights,
    pub embedder: EmbedderSettings,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            weights: PerformanceWeights::default(),
            embedder: EmbedderSettings::Hashing { dimension: scenforge::evalkit::HASHING_DIMENSION },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OsmSettings {
    pub endpoint: String,
    pub cache_dir: PathBuf,
    /// A local extract used instead of querying the endpoint.
    pub document: Option<PathBuf>,
    pub drivable_only: bool,
}

impl Default for OsmSettings {
    fn default() -> Self {
        OsmSettings {
            endpoint: "https://overpass-api.de/api/interpreter".into(),
            cache_dir: PathBuf::from("cache/osm"),
            document: None,
            drivable_only: true,
        }
    }
}

/// Prompt components removed for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Knobs {
    pub no_interpreter: bool,
    pub no_prior_knowledge: bool,
    pub no_reasoning_section: bool,
}

impl Knobs {
    pub fn knowledge_base(&self) -> PromptKnowledgeBase {
        self.apply(PromptKnowledgeBase::builtin())
    }

    pub fn apply(&self, mut kb: PromptKnowledgeBase) -> PromptKnowledgeBase {
        if self.no_prior_knowledge {
            kb = kb.without_prior_knowledge();
        }
        if self.no_reasoning_section {
            kb = kb.without_reasoning();
        }
        kb
    }
}

/// Every key is optional; missing ones take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub provider: ProviderSettings,
    pub max_retries: u32,
    pub placement: PlacementConstraints,
    pub simulation: SimulationSettings,
    pub evaluation: EvaluationSettings,
    pub osm: OsmSettings,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    /// Variations per input in a batch.
    pub batch_size: usize,
    pub workers: usize,
    /// Also run the random-placement baseline on every generated network.
    pub compare_baseline: bool,
    pub knobs: Knobs,
    /// `.prompt` files overriding the built-in templates.
    pub templates_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            provider: ProviderSettings::Mock { faults: MockFaults::default() },
            max_retries: scenforge::provider::DEFAULT_MAX_RETRIES,
            placement: PlacementConstraints::default(),
            simulation: SimulationSettings::default(),
            evaluation: EvaluationSettings::default(),
            osm: OsmSettings::default(),
            output_dir: PathBuf::from("out"),
            global_seed: 0,
            batch_size: 10,
            workers: 4,
            compare_baseline: false,
            knobs: Knobs::default(),
            templates_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.into(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        Ok(cfg.with_env_overrides())
    }

    pub fn with_env_overrides(mut self) -> Self {
        if let ProviderSettings::Http(c) = self.provider {
            self.provider = ProviderSettings::Http(c.with_env_overrides());
        }
        if let EmbedderSettings::Remote(c) = self.evaluation.embedder {
            self.evaluation.embedder = EmbedderSettings::Remote(c.with_env_overrides());
        }
        self
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Templates from `templates_dir` (or the built-in set) with the knobs applied.
    pub fn knowledge_base(&self) -> Result<PromptKnowledgeBase, ConfigError> {
        let base = match &self.templates_dir {
            Some(dir) => PromptKnowledgeBase::load_dir(dir).map_err(|e| ConfigError::Invalid(format!("templates: {e}")))?,
            None => PromptKnowledgeBase::builtin(),
        };
        Ok(self.knobs.apply(base))
    }

    /// Checks ranges, loads the templates and creates the output directory.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.knowledge_base()?;
        let sim = &self.simulation;
        if !(sim.dt > 0.0 && sim.dt <= 0.5) {
            return Err(ConfigError::Invalid(format!("simulation.dt must be in (0, 0.5], got {}", sim.dt)));
        }
        if !(sim.duration.is_finite() && sim.duration > 0.0) {
            return Err(ConfigError::Invalid(format!("simulation.duration must be positive, got {}", sim.duration)));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.placement.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let w = &self.evaluation.weights;
        if [w.safety, w.efficiency, w.comfort].iter().any(|v| !v.is_finite() || *v < 0.0) || w.ttc_ref <= 0.0 || w.jerk_ref <= 0.0 {
            return Err(ConfigError::Invalid("evaluation.weights out of range".into()));
        }
        if let EmbedderSettings::Hashing { dimension: 0 } = self.evaluation.embedder {
            return Err(ConfigError::Invalid("hashing embedder needs a positive dimension".into()));
        }
        fs::create_dir_all(&self.output_dir)
            .map_err(|e| ConfigError::Invalid(format!("output_dir {} not creatable: {e}", self.output_dir.display())))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&cfg.to_document()).unwrap(), cfg);
    }

    #[test]
    fn dt_range() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig { output_dir: dir.path().join("o"), ..Default::default() };
        cfg.validate().unwrap();
        assert!(cfg.output_dir.is_dir());
        for dt in [0.0, -0.1, 0.51, f64::NAN] {
            cfg.simulation.dt = dt;
            assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))), "{dt}");
        }
        cfg.simulation.dt = 0.5;
        cfg.validate().unwrap();
    }

    #[test]
    fn uncreatable_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, "x").unwrap();
        let cfg = PipelineConfig { output_dir: file.join("sub"), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn partial_faults_parse() {
        let mut doc: serde_json::Value = serde_json::from_str(&PipelineConfig::default().to_document()).unwrap();
        doc["provider"] = serde_json::json!({ "kind": "mock", "faults": { "network_fault": "hash_in_edge_id" } });
        let cfg = PipelineConfig::parse(&doc.to_string()).unwrap();
        let ProviderSettings::Mock { faults } = cfg.provider else { panic!() };
        assert_eq!(faults.network_fault, Some(scenforge::provider::NetworkFault::HashInEdgeId));
        assert!(!faults.unavailable);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let c = PipelineConfig::parse(r#"{"simulation": {"dt": 0.05}, "batch_size": 3}"#).unwrap();
        assert_eq!((c.simulation.dt, c.simulation.duration, c.batch_size, c.workers), (0.05, 20.0, 3, 4));
        assert_eq!(PipelineConfig::parse("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(PipelineConfig::parse("{\"provider\": 3}"), Err(ConfigError::Malformed(_))));
    }

    #[test]
    fn templates_dir_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("expand_request.prompt"), "@@ task\nDescribe {{input}} briefly.\n").unwrap();
        let cfg = PipelineConfig { templates_dir: Some(dir.path().into()), ..Default::default() };
        let kb = cfg.knowledge_base().unwrap();
        assert_ne!(kb, PromptKnowledgeBase::builtin());
        assert_eq!(kb.template("expand_request").unwrap().sections.len(), 1);
        let missing = PipelineConfig { templates_dir: Some(dir.path().join("nope")), ..Default::default() };
        assert!(matches!(missing.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn knobs_strip_sections() {
        let kb = Knobs { no_reasoning_section: true, ..Default::default() }.knowledge_base();
        assert_eq!(kb, PromptKnowledgeBase::builtin().without_reasoning());
    }
}
