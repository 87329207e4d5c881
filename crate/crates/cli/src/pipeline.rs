//! One run: interpret, network, agents, objects, simulate, evaluate.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use scenforge::compgen::{generate_agents, generate_objects, random_trip_placement};
use scenforge::evalkit::{
    classify_scene, describe_bundle, objective_distance, performance, scenario_stats, static_obj_attr_acc,
    vehicle_attr_acc, EvalError, FailureClass, PerformanceReport, ScenarioOutcome, ScenarioStats,
};
use scenforge::interpreter::{direct_scenario_detailed, interpret_detailed, interpret_gps, InterpretError, InterpreterConfig, NetworkFacts};
use scenforge::kb::PromptKnowledgeBase;
use scenforge::netgen::{compile_network, ingest_osm, serialize_sumo_xml, OsmError, OsmSource, OverpassClient};
use scenforge::provider::{CompletionProvider, Exchange, RecordingProvider};
use scenforge::simcore::{run_with, SimulationTrace};
use scenforge::{
    serialize_description, AgentState, MultimodalInput, RoadNetwork, ScenarioBundle, ScenarioDescription,
    SceneType,
};

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Interpret,
    Network,
    Agents,
    Objects,
    Simulate,
    Evaluate,
}

impl Stage {
    pub const ORDER: [Stage; 6] = [Stage::Interpret, Stage::Network, Stage::Agents, Stage::Objects, Stage::Simulate, Stage::Evaluate];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Error { kind: FailureClass, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(flatten)]
    pub status: StageStatus,
    pub millis: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    Generator,
    Osm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub input: String,
    pub seed: u64,
    pub started_at: String,
    pub network_source: NetworkSource,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<String>,
    pub total_millis: u64,
}

impl RunManifest {
    pub fn ok(&self) -> bool {
        self.stages.len() == Stage::ORDER.len() && self.stages.iter().all(|s| s.status == StageStatus::Ok)
    }

    pub fn failure(&self) -> Option<(Stage, FailureClass)> {
        self.stages.iter().find_map(|s| match &s.status {
            StageStatus::Error { kind, .. } => Some((s.stage, *kind)),
            StageStatus::Ok => None,
        })
    }

    /// Stages appear in pipeline order and nothing follows an error.
    pub fn is_well_formed(&self) -> bool {
        let in_order = self.stages.iter().zip(Stage::ORDER).all(|(r, s)| r.stage == s);
        let halted = match self.stages.iter().position(|s| s.status != StageStatus::Ok) {
            Some(i) => i + 1 == self.stages.len(),
            None => true,
        };
        in_order && halted && self.stages.len() <= Stage::ORDER.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene_type: SceneType,
    pub classified_scene: SceneType,
    pub vehicle_attr_acc: f64,
    pub static_obj_attr_acc: f64,
    pub objective_distance: f64,
    pub performance: PerformanceReport,
    pub stats: ScenarioStats,
    pub collisions: usize,
    pub trace_hash: String,
}

/// Everything one run produced, in memory.
#[derive(Debug, Clone)]
pub struct Execution {
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub network_source: NetworkSource,
    pub description: Option<ScenarioDescription>,
    pub network: Option<RoadNetwork>,
    pub bundle: Option<ScenarioBundle>,
    pub trace: Option<SimulationTrace>,
    pub report: Option<RunReport>,
    pub exchanges: Vec<Exchange>,
}

impl Execution {
    pub fn ok(&self) -> bool {
        self.report.is_some()
    }

    pub fn failure(&self) -> Option<FailureClass> {
        self.stages.iter().find_map(|s| match &s.status {
            StageStatus::Error { kind, .. } => Some(*kind),
            StageStatus::Ok => None,
        })
    }

    /// The conformity view of this run; `None` when nothing was interpreted.
    pub fn outcome(&self) -> Option<ScenarioOutcome> {
        Some(ScenarioOutcome {
            description: self.description.clone()?,
            bundle: if self.ok() { self.bundle.clone() } else { None },
            failure: self.failure(),
        })
    }
}

type StageResult<T> = Result<T, (FailureClass, String)>;

fn fail<E: std::fmt::Display>(kind: FailureClass) -> impl FnOnce(E) -> (FailureClass, String) {
    move |e| (kind, e.to_string())
}

fn osm_class(e: &OsmError) -> FailureClass {
    match e {
        OsmError::Invalid(_) => FailureClass::ValidationError,
        _ => FailureClass::RuntimeError,
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    kb: PromptKnowledgeBase,
    provider: RecordingProvider<Box<dyn CompletionProvider>>,
    seed: u64,
    stages: Vec<StageRecord>,
}

impl Runner<'_> {
    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce(&Self) -> StageResult<T>) -> Option<T> {
        let start = Instant::now();
        let result = f(self);
        let millis = start.elapsed().as_millis() as u64;
        let (status, value) = match result {
            Ok(v) => (StageStatus::Ok, Some(v)),
            Err((kind, message)) => {
                log::warn!("seed {}: {stage:?} failed ({kind:?}): {message}", self.seed);
                (StageStatus::Error { kind, message }, None)
            }
        };
        self.stages.push(StageRecord { stage, status, millis });
        value
    }

    fn interpreter_cfg(&self) -> InterpreterConfig {
        InterpreterConfig { max_retries: self.cfg.max_retries, ..Default::default() }
    }

    fn interpret(&self, input: &MultimodalInput) -> StageResult<(ScenarioDescription, Option<RoadNetwork>)> {
        let icfg = self.interpreter_cfg();
        let class = |e: InterpretError| (FailureClass::from(&e), e.to_string());
        if self.cfg.knobs.no_interpreter {
            let r = direct_scenario_detailed(input, &self.kb, &self.provider, &icfg).map_err(class)?;
            return Ok((r.parsed.expect("accepted"), None));
        }
        match input {
            MultimodalInput::GpsBoundingBox(bbox) => {
                let osm = &self.cfg.osm;
                let net = match &osm.document {
                    Some(path) => {
                        let doc = fs::read_to_string(path).map_err(fail(FailureClass::RuntimeError))?;
                        ingest_osm(bbox, &OsmSource::Document(&doc), osm.drivable_only)
                    }
                    None => {
                        let client = OverpassClient::new(osm.endpoint.clone(), osm.cache_dir.clone());
                        ingest_osm(bbox, &OsmSource::Remote(&client), osm.drivable_only)
                    }
                }
                .map_err(|e| (osm_class(&e), format!("osm ingest: {e}")))?;
                let facts = NetworkFacts::of(&net);
                let r = interpret_gps(bbox, Some(&facts), &self.kb, &self.provider, &icfg).map_err(class)?;
                Ok((r.parsed.expect("accepted"), Some(net)))
            }
            _ => {
                let r = interpret_detailed(input, &self.kb, &self.provider, &icfg).map_err(class)?;
                Ok((r.parsed.expect("accepted"), None))
            }
        }
    }

    fn constraints(&self) -> scenforge::PlacementConstraints {
        scenforge::PlacementConstraints { seed: self.seed, ..self.cfg.placement.clone() }
    }
}

fn evaluate(cfg: &PipelineConfig, bundle: &ScenarioBundle, trace: &SimulationTrace) -> Result<RunReport, EvalError> {
    let d = &bundle.description;
    let route = &trace.av.as_ref().ok_or(EvalError::AvNotFound)?.route;
    let embedder = cfg.evaluation.embedder.build();
    Ok(RunReport {
        scene_type: d.scene_type,
        classified_scene: classify_scene(&bundle.network, &bundle.objects),
        vehicle_attr_acc: vehicle_attr_acc(d, bundle),
        static_obj_attr_acc: static_obj_attr_acc(d, bundle),
        objective_distance: objective_distance(d, bundle, embedder.as_ref(), describe_bundle)?,
        performance: performance(trace, route, &cfg.evaluation.weights)?,
        stats: scenario_stats(bundle, d.scene_type),
        collisions: trace.collisions.len(),
        trace_hash: trace.hash(),
    })
}

/// Runs every stage in memory, stopping at the first failure.
pub fn execute(input: &MultimodalInput, cfg: &PipelineConfig, seed: u64) -> Execution {
    let (kb, kb_error) = match cfg.knowledge_base() {
        Ok(kb) => (kb, None),
        Err(e) => (PromptKnowledgeBase::builtin(), Some(e.to_string())),
    };
    let mut r = Runner {
        cfg,
        kb,
        provider: RecordingProvider::new(cfg.provider.build(seed)),
        seed,
        stages: Vec::new(),
    };
    let mut ex = Execution {
        seed,
        stages: Vec::new(),
        network_source: NetworkSource::Generator,
        description: None,
        network: None,
        bundle: None,
        trace: None,
        report: None,
        exchanges: Vec::new(),
    };
    'run: {
        let Some((desc, osm_net)) = r.stage(Stage::Interpret, |r| {
            if let Some(e) = &kb_error {
                return Err((FailureClass::RuntimeError, e.clone()));
            }
            r.interpret(input)
        }) else {
            break 'run;
        };
        ex.description = Some(desc.clone());
        if osm_net.is_some() {
            ex.network_source = NetworkSource::Osm;
        }
        let Some(net) = r.stage(Stage::Network, |r| match osm_net {
            Some(net) => Ok(net),
            None => compile_network(&desc.road, &r.kb, &r.provider, cfg.max_retries).map_err(|e| (FailureClass::from(&e), e.to_string())),
        }) else {
            break 'run;
        };
        ex.network = Some(net.clone());
        let Some(agents) = r.stage(Stage::Agents, |r| {
            generate_agents(&desc, &net, &r.constraints(), &r.kb, &r.provider, cfg.max_retries)
                .map_err(|e| (FailureClass::from(&e), e.to_string()))
        }) else {
            break 'run;
        };
        let Some(objects) = r.stage(Stage::Objects, |r| {
            generate_objects(&desc, &net, &r.constraints(), &r.kb, &r.provider, cfg.max_retries)
                .map_err(|e| (FailureClass::from(&e), e.to_string()))
        }) else {
            break 'run;
        };
        let bundle = ScenarioBundle { weather: desc.weather.clone(), description: desc, network: net, agents, objects, seed };
        ex.bundle = Some(bundle.clone());
        let Some(trace) = r.stage(Stage::Simulate, |_| {
            bundle.validate().map_err(fail(FailureClass::RuntimeError))?;
            run_with(&bundle, cfg.simulation.duration, cfg.simulation.dt, &cfg.simulation.params)
                .map_err(|e| (FailureClass::from(&e), e.to_string()))
        }) else {
            break 'run;
        };
        ex.trace = Some(trace.clone());
        ex.report = r.stage(Stage::Evaluate, |_| evaluate(cfg, &bundle, &trace).map_err(fail(FailureClass::RuntimeError)));
    }
    ex.stages = r.stages;
    ex.exchanges = r.provider.exchanges();
    ex
}

/// The random-placement arm on a generated scenario: same network, objects
/// and weather, agents scattered uniformly with no gap rule.
pub fn baseline_bundle(bundle: &ScenarioBundle) -> ScenarioBundle {
    let agents: Vec<AgentState> = random_trip_placement(&bundle.network, bundle.agents.len().max(1), bundle.seed);
    ScenarioBundle { agents, objects: bundle.objects.clone(), ..bundle.clone() }
}

pub fn baseline_performance(cfg: &PipelineConfig, bundle: &ScenarioBundle) -> Result<PerformanceReport, String> {
    let b = baseline_bundle(bundle);
    let trace = run_with(&b, cfg.simulation.duration, cfg.simulation.dt, &cfg.simulation.params).map_err(|e| e.to_string())?;
    let route = &trace.av.as_ref().ok_or("baseline has no AV")?.route;
    performance(&trace, route, &cfg.evaluation.weights).map_err(|e| e.to_string())
}

/// Claims a fresh `<timestamp>-<seed>` directory under `root`.
pub fn claim_run_dir(root: &Path, seed: u64) -> io::Result<(String, PathBuf)> {
    claim_dir(root, "", seed)
}

/// Like [`claim_run_dir`] with a name prefix.
pub fn claim_dir(root: &Path, prefix: &str, seed: u64) -> io::Result<(String, PathBuf)> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
    for attempt in 0.. {
        let base = format!("{prefix}{stamp}-{seed}");
        let id = if attempt == 0 { base } else { format!("{base}-{attempt}") };
        let dir = root.join(&id);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct PromptLine<'a> {
    template: Option<&'a str>,
    prompt: &'a str,
    response: Option<&'a str>,
    error: Option<&'a str>,
}

/// Writes every artifact the execution produced, then the manifest.
pub fn write_artifacts(dir: &Path, ex: &Execution) -> io::Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> io::Result<()> {
        fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };
    if let Some(d) = &ex.description {
        put("description.json", serialize_description(d))?;
    }
    if let Some(net) = &ex.network {
        let (nodes, edges) = serialize_sumo_xml(net);
        put("network.nod.xml", nodes)?;
        put("network.edg.xml", edges)?;
    }
    if let Some(b) = &ex.bundle {
        put("bundle.json", pretty(b))?;
    }
    if let Some(t) = &ex.trace {
        put("trace.jsonl", t.to_jsonl())?;
    }
    if let Some(r) = &ex.report {
        put("report.json", pretty(r))?;
    }
    let mut prompts = String::new();
    for x in &ex.exchanges {
        let line = PromptLine {
            template: x.template.as_deref(),
            prompt: &x.prompt,
            response: x.response.as_ref().ok().map(String::as_str),
            error: x.response.as_ref().err().map(String::as_str),
        };
        prompts.push_str(&serde_json::to_string(&line).expect("serializable"));
        prompts.push('\n');
    }
    put("prompts.jsonl", prompts)?;
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub execution: Execution,
}

/// Executes one run and writes it to `<root>/<timestamp>-<seed>/`.
pub fn run_pipeline_in(root: &Path, name: &str, input: &MultimodalInput, cfg: &PipelineConfig, seed: u64) -> io::Result<RunOutcome> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let start = Instant::now();
    let (run_id, dir) = claim_run_dir(root, seed)?;
    let execution = execute(input, cfg, seed);
    let mut artifacts = write_artifacts(&dir, &execution)?;
    artifacts.push("manifest.json".into());
    let manifest = RunManifest {
        run_id,
        input: name.to_string(),
        seed,
        started_at,
        network_source: execution.network_source,
        stages: execution.stages.clone(),
        artifacts,
        total_millis: start.elapsed().as_millis() as u64,
    };
    fs::write(dir.join("manifest.json"), pretty(&manifest))?;
    Ok(RunOutcome { dir, manifest, execution })
}

/// A single run under `<output_dir>/runs/`.
pub fn run_pipeline(name: &str, input: &MultimodalInput, cfg: &PipelineConfig, seed: u64) -> io::Result<RunOutcome> {
    run_pipeline_in(&cfg.output_dir.join("runs"), name, input, cfg, seed)
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub description: Option<ScenarioDescription>,
    pub bundle: Option<ScenarioBundle>,
    pub report: Option<RunReport>,
}

impl RunRecord {
    pub fn outcome(&self) -> Option<ScenarioOutcome> {
        Some(ScenarioOutcome {
            description: self.description.clone()?,
            bundle: if self.manifest.ok() { self.bundle.clone() } else { None },
            failure: self.manifest.failure().map(|f| f.1),
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> io::Result<Option<T>> {
    match fs::read_to_string(path) {
        Ok(s) => serde_json::from_str(&s).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn read_run(dir: &Path) -> io::Result<RunRecord> {
    let manifest: RunManifest = read_json(&dir.join("manifest.json"))?
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("{}: no manifest.json", dir.display())))?;
    let description = match fs::read_to_string(dir.join("description.json")) {
        Ok(s) => Some(scenforge::parse_description(&s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(e),
    };
    Ok(RunRecord {
        dir: dir.to_path_buf(),
        manifest,
        description,
        bundle: read_json(&dir.join("bundle.json"))?,
        report: read_json(&dir.join("report.json"))?,
    })
}

/// A run directory itself, or every run directory found below `root`, in
/// path order.
pub fn read_runs(root: &Path) -> io::Result<Vec<RunRecord>> {
    if root.join("manifest.json").is_file() {
        return Ok(vec![read_run(root)?]);
    }
    let mut dirs = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                if p.join("manifest.json").is_file() {
                    dirs.push(p);
                } else {
                    stack.push(p);
                }
            }
        }
    }
    dirs.sort();
    dirs.iter().map(|d| read_run(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenforge::provider::{MockFaults, NetworkFault};

    use crate::config::ProviderSettings;

    fn cfg(dir: &Path) -> PipelineConfig {
        PipelineConfig { output_dir: dir.to_path_buf(), ..Default::default() }
    }

    fn text(t: &str) -> MultimodalInput {
        MultimodalInput::TextRequest(t.into())
    }

    #[test]
    fn happy_path_runs_every_stage() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline("cut-in", &text("two cars on a highway, one cuts in"), &cfg(dir.path()), 3).unwrap();
        assert!(out.manifest.ok(), "{:?}", out.manifest.stages);
        assert!(out.manifest.is_well_formed());
        for f in ["description.json", "network.nod.xml", "network.edg.xml", "bundle.json", "trace.jsonl", "report.json", "prompts.jsonl", "manifest.json"] {
            assert!(out.dir.join(f).is_file(), "{f}");
        }
        assert!(out.dir.parent().unwrap().ends_with("runs"));
        assert!(out.manifest.run_id.ends_with("-3"));
    }

    #[test]
    fn tainted_edge_id_stops_at_network() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.provider = ProviderSettings::Mock { faults: MockFaults { network_fault: Some(NetworkFault::HashInEdgeId), ..Default::default() } };
        let out = run_pipeline("x", &text("a car on a straight road"), &c, 0).unwrap();
        assert_eq!(out.manifest.failure(), Some((Stage::Network, FailureClass::MalformedKeyword)));
        assert_eq!(out.manifest.stages.len(), 2);
        assert!(out.manifest.is_well_formed());
        assert!(out.dir.join("description.json").is_file());
        assert!(!out.dir.join("bundle.json").exists());
    }

    #[test]
    fn unavailable_provider_is_a_runtime_error() {
        let mut c = PipelineConfig::default();
        c.provider = ProviderSettings::Mock { faults: MockFaults { unavailable: true, ..Default::default() } };
        let ex = execute(&text("a car"), &c, 0);
        assert_eq!(ex.failure(), Some(FailureClass::RuntimeError));
        assert!(ex.outcome().is_none());
    }

    #[test]
    fn direct_prompting_never_parses() {
        let mut c = PipelineConfig::default();
        c.knobs.no_interpreter = true;
        let ex = execute(&text("two cars on a highway"), &c, 0);
        assert_eq!(ex.stages.len(), 1);
        assert_eq!(ex.failure(), Some(FailureClass::ValidationError));
    }

    #[test]
    fn execution_is_deterministic() {
        let c = PipelineConfig::default();
        let input = text("an intersection where a truck turns left across the ego car");
        let (a, b) = (execute(&input, &c, 9), execute(&input, &c, 9));
        assert_eq!(a.report, b.report);
        assert_eq!(a.bundle, b.bundle);
        assert!(a.ok());
    }

    #[test]
    fn run_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline("x", &text("construction zone on a two lane road"), &cfg(dir.path()), 1).unwrap();
        let rec = read_run(&out.dir).unwrap();
        assert_eq!(rec.manifest, out.manifest);
        assert_eq!(rec.bundle, out.execution.bundle);
        assert_eq!(rec.report, out.execution.report);
        assert_eq!(rec.outcome(), out.execution.outcome());
        assert_eq!(read_runs(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn claimed_dirs_are_unique() {
        let dir = tempfile::tempdir().unwrap();
        let a = claim_run_dir(dir.path(), 5).unwrap();
        let b = claim_run_dir(dir.path(), 5).unwrap();
        assert_ne!(a.0, b.0);
    }

    #[test]
    fn manifest_shape_checks() {
        let rec = |stage, ok: bool| StageRecord {
            stage,
            status: if ok { StageStatus::Ok } else { StageStatus::Error { kind: FailureClass::RuntimeError, message: String::new() } },
            millis: 0,
        };
        let mut m = RunManifest {
            run_id: String::new(),
            input: String::new(),
            seed: 0,
            started_at: String::new(),
            network_source: NetworkSource::Generator,
            stages: vec![rec(Stage::Interpret, true), rec(Stage::Network, false)],
            artifacts: vec![],
            total_millis: 0,
        };
        assert!(m.is_well_formed() && !m.ok());
        m.stages.push(rec(Stage::Agents, true));
        assert!(!m.is_well_formed());
        m.stages = vec![rec(Stage::Network, true)];
        assert!(!m.is_well_formed());
    }
}
