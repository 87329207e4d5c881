//! `forge` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use scenforge::compgen::{generate_agents, generate_objects, random_trip_placement, shortest_distance};
use scenforge::evalkit::{
    conformity_table, cross_view_similarity, describe_view, diversity, export_hints, compare_pipelines, HintSource, PerformanceReport,
    ScenarioOutcome, TextTable, View,
};
use scenforge::interpreter::{interpret_detailed, InterpreterConfig};
use scenforge::netgen::{
    compile_network, ingest_osm, network_stats, parse_sumo_xml, serialize_sumo_xml, validate_network, OsmSource, OverpassClient,
};
use scenforge::simcore::run_with;
use scenforge::stats::Summary;
use scenforge::ir::GpsBoundingBox;
use scenforge::{parse_description, serialize_description, ScenarioBundle};

use crate::ablate::{ablate, Knob};
use crate::batch::run_batch;
use crate::config::{ConfigError, PipelineConfig};
use crate::inputs::{load_input, load_inputs, InputSpec};
use crate::pipeline::{baseline_performance, read_runs, run_pipeline, RunRecord, StageStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or input files.
    #[error("{0}")]
    Config(String),
    /// A stage or check failed.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Generate, simulate and score driving scenarios")]
pub struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Overrides the configured global seed; for `simcore run`, the bundle's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default configuration.
    Config,
    /// Run the whole pipeline on one input.
    Run(RunArgs),
    /// Run every input under several seeds and aggregate.
    Batch(BatchArgs),
    /// Success rate with prompt components removed.
    Ablate(AblateArgs),
    /// Conformity, diversity and performance over finished runs.
    Eval { runs: PathBuf },
    /// Interpret one input and print its description.
    Interpret { input: PathBuf },
    #[command(subcommand)]
    Netgen(NetgenCommand),
    #[command(subcommand)]
    Compgen(CompgenCommand),
    #[command(subcommand)]
    Simcore(SimcoreCommand),
    #[command(subcommand)]
    Evalkit(EvalkitCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input file (`.json` multimodal input or text).
    #[arg(required_unless_present = "text")]
    pub input: Option<PathBuf>,
    /// Inline text request instead of a file.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Input files or directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Variations per input.
    #[arg(long)]
    pub variations: Option<usize>,
    /// Also run the random-placement baseline and print the comparison.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Components to remove, one configuration each. All when omitted.
    #[arg(long = "knob", value_enum)]
    pub knobs: Vec<Knob>,
    #[arg(long)]
    pub variations: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum NetgenCommand {
    /// Compile a description's road into node and edge files.
    Compile {
        description: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate a node/edge file pair.
    Validate { nodes: PathBuf, edges: PathBuf },
    /// Network statistics of a node/edge file pair.
    Stats { nodes: PathBuf, edges: PathBuf },
    /// Build a network from an OpenStreetMap extract.
    Osm {
        /// min_lat,min_lon,max_lat,max_lon
        #[arg(long, value_parser = parse_bbox)]
        bbox: GpsBoundingBox,
        /// Local extract; otherwise the configured endpoint is queried.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CompgenCommand {
    /// Place agents and objects of a description on a network.
    Place {
        description: PathBuf,
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Uniform random placement instead.
        #[arg(long)]
        random_trip: bool,
        /// Writes the bundle here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimcoreCommand {
    /// Simulate a bundle and write its trace as JSON lines.
    Run {
        bundle: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalkitCommand {
    Conformity { runs: PathBuf },
    Diversity { runs: PathBuf },
    /// Ego-view and bird's-eye descriptions against each input description.
    Similarity { runs: PathBuf },
    Performance { runs: PathBuf },
    /// Generated placements against the random baseline on the same networks.
    Compare { runs: PathBuf },
    /// Pre-collision windows with a suggested behavior change, as JSON lines.
    Hints { runs: PathBuf },
}

pub fn parse_bbox(s: &str) -> Result<GpsBoundingBox, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    let [min_lat, min_lon, max_lat, max_lon] = v[..] else {
        return Err("expected min_lat,min_lon,max_lat,max_lon".into());
    };
    let b = GpsBoundingBox { min_lat, min_lon, max_lat, max_lon };
    b.validate().map_err(|e| e.to_string())?;
    Ok(b)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default().with_env_overrides(),
    };
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.global_seed = s;
    }
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn read_description(path: &Path) -> Result<scenforge::ScenarioDescription, CliError> {
    parse_description(&read(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn read_network(nodes: &Path, edges: &Path) -> Result<scenforge::RoadNetwork, CliError> {
    parse_sumo_xml(&read(nodes)?, &read(edges)?).map_err(failure)
}

fn write_network(out: &Path, net: &scenforge::RoadNetwork) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(config_err)?;
    let (n, e) = serialize_sumo_xml(net);
    fs::write(out.join("network.nod.xml"), n).map_err(failure)?;
    fs::write(out.join("network.edg.xml"), e).map_err(failure)?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn runs_of(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let runs = read_runs(dir).map_err(config_err)?;
    if runs.is_empty() {
        return Err(config_err(format!("no runs under {}", dir.display())));
    }
    Ok(runs)
}

fn outcomes(runs: &[RunRecord]) -> Vec<ScenarioOutcome> {
    runs.iter().filter_map(RunRecord::outcome).collect()
}

fn ok_bundles(runs: &[RunRecord]) -> Vec<&ScenarioBundle> {
    runs.iter().filter(|r| r.manifest.ok()).filter_map(|r| r.bundle.as_ref()).collect()
}

fn diversity_text(runs: &[RunRecord]) -> Option<String> {
    let stats: Vec<_> = runs.iter().filter(|r| r.manifest.ok()).filter_map(|r| r.report.as_ref().map(|x| x.stats.clone())).collect();
    (!stats.is_empty()).then(|| diversity(&stats).to_string())
}

fn performance_table(reports: &[&PerformanceReport]) -> TextTable {
    let mut t = TextTable::new(&["Metric", "Value"]);
    let col = |f: fn(&PerformanceReport) -> f64| Summary::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    let rows: [(&str, fn(&PerformanceReport) -> f64); 5] = [
        ("Route completion", |r| r.route_completion),
        ("Driving score", |r| r.driving_score),
        ("Total score", |r| r.total_score),
        ("Use time", |r| r.use_time),
        ("Success rate", |r| f64::from(u8::from(r.success))),
    ];
    for (name, f) in rows {
        t.row(vec![name.into(), col(f).to_string()]);
    }
    let collisions = reports.iter().filter(|r| r.collision).count() as f64 / reports.len().max(1) as f64;
    t.row(vec!["Collision rate".into(), format!("{collisions:.2}")]);
    t
}

/// Runs one parsed command line; returns what to print.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Config => Ok(cfg.to_document()),
        Command::Run(args) => {
            cfg.validate()?;
            let spec = match (&args.input, &args.text) {
                (_, Some(t)) => InputSpec::text("inline", t),
                (Some(p), None) => load_input(p).map_err(config_err)?,
                (None, None) => return Err(config_err("an input file or --text is required")),
            };
            let out = run_pipeline(&spec.name, &spec.input, &cfg, cfg.global_seed).map_err(failure)?;
            let mut text = format!("{}\n", out.dir.display());
            for s in &out.manifest.stages {
                let status = match &s.status {
                    StageStatus::Ok => "ok".to_string(),
                    StageStatus::Error { kind, message } => format!("{kind:?}: {message}"),
                };
                text.push_str(&format!("{:?}: {status}\n", s.stage));
            }
            match out.manifest.failure() {
                None => Ok(text),
                Some((stage, kind)) => Err(CliError::Failure(format!("{text}run failed at {stage:?} ({kind:?})"))),
            }
        }
        Command::Batch(args) => {
            if let Some(v) = args.variations {
                cfg.batch_size = v;
            }
            if let Some(w) = args.workers {
                cfg.workers = w;
            }
            cfg.compare_baseline |= args.compare;
            cfg.validate()?;
            let inputs = load_inputs(&args.inputs).map_err(config_err)?;
            let out = run_batch(&inputs, &cfg).map_err(failure)?;
            Ok(format!("{}\n{}", out.dir.display(), out.report.render()))
        }
        Command::Ablate(args) => {
            if let Some(v) = args.variations {
                cfg.batch_size = v;
            }
            cfg.validate()?;
            let inputs = load_inputs(&args.inputs).map_err(config_err)?;
            let knobs = if args.knobs.is_empty() { Knob::ALL.to_vec() } else { args.knobs.clone() };
            let table = ablate(&inputs, &cfg, &knobs).map_err(failure)?;
            fs::write(cfg.output_dir.join("ablation.json"), json(&table)).map_err(failure)?;
            Ok(table.to_table().to_string())
        }
        Command::Eval { runs } => {
            let runs = runs_of(runs)?;
            let mut text = conformity_table(&outcomes(&runs)).to_table().to_string();
            if let Some(d) = diversity_text(&runs) {
                text.push('\n');
                text.push_str(&d);
            }
            let reports: Vec<&PerformanceReport> = runs.iter().filter_map(|r| r.report.as_ref().map(|x| &x.performance)).collect();
            if !reports.is_empty() {
                text.push('\n');
                text.push_str(&performance_table(&reports).to_string());
            }
            Ok(text)
        }
        Command::Interpret { input } => {
            let spec = load_input(input).map_err(config_err)?;
            let provider = cfg.provider.build(cfg.global_seed);
            let icfg = InterpreterConfig { max_retries: cfg.max_retries, ..Default::default() };
            let r = interpret_detailed(&spec.input, &cfg.knowledge_base()?, provider.as_ref(), &icfg).map_err(failure)?;
            Ok(serialize_description(&r.parsed.expect("accepted")))
        }
        Command::Netgen(c) => netgen(c, &cfg),
        Command::Compgen(c) => compgen(c, &cfg),
        Command::Simcore(c) => simcore(c, &cfg, cli.seed),
        Command::Evalkit(c) => evalkit(c, &cfg),
    }
}

fn netgen(c: &NetgenCommand, cfg: &PipelineConfig) -> Result<String, CliError> {
    match c {
        NetgenCommand::Compile { description, out } => {
            let d = read_description(description)?;
            let provider = cfg.provider.build(cfg.global_seed);
            let net = compile_network(&d.road, &cfg.knowledge_base()?, provider.as_ref(), cfg.max_retries).map_err(failure)?;
            write_network(out, &net)?;
            Ok(json(&network_stats(&net)))
        }
        NetgenCommand::Validate { nodes, edges } => {
            let errors = validate_network(&read(nodes)?, &read(edges)?);
            if errors.is_empty() {
                Ok("valid\n".into())
            } else {
                Err(CliError::Failure(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")))
            }
        }
        NetgenCommand::Stats { nodes, edges } => Ok(json(&network_stats(&read_network(nodes, edges)?))),
        NetgenCommand::Osm { bbox, file, out } => {
            let net = match file {
                Some(f) => ingest_osm(bbox, &OsmSource::Document(&read(f)?), cfg.osm.drivable_only),
                None => {
                    let client = OverpassClient::new(cfg.osm.endpoint.clone(), cfg.osm.cache_dir.clone());
                    ingest_osm(bbox, &OsmSource::Remote(&client), cfg.osm.drivable_only)
                }
            }
            .map_err(failure)?;
            write_network(out, &net)?;
            Ok(json(&network_stats(&net)))
        }
    }
}

fn compgen(c: &CompgenCommand, cfg: &PipelineConfig) -> Result<String, CliError> {
    let CompgenCommand::Place { description, nodes, edges, random_trip, out } = c;
    let d = read_description(description)?;
    let net = read_network(nodes, edges)?;
    let seed = cfg.global_seed;
    let (agents, objects) = if *random_trip {
        (random_trip_placement(&net, d.agents.len().max(1), seed), Vec::new())
    } else {
        let provider = cfg.provider.build(seed);
        let kb = cfg.knowledge_base()?;
        let constraints = scenforge::PlacementConstraints { seed, ..cfg.placement.clone() };
        let agents = generate_agents(&d, &net, &constraints, &kb, provider.as_ref(), cfg.max_retries).map_err(failure)?;
        let objects = generate_objects(&d, &net, &constraints, &kb, provider.as_ref(), cfg.max_retries).map_err(failure)?;
        (agents, objects)
    };
    let shortest = shortest_distance(&agents);
    let bundle = ScenarioBundle { weather: d.weather.clone(), description: d, network: net, agents, objects, seed };
    let doc = json(&bundle);
    match out {
        Some(p) => {
            fs::write(p, doc + "\n").map_err(failure)?;
            Ok(format!("{} agents, {} objects, shortest distance {:?}\n", bundle.agents.len(), bundle.objects.len(), shortest))
        }
        None => Ok(doc),
    }
}

fn simcore(c: &SimcoreCommand, cfg: &PipelineConfig, seed: Option<u64>) -> Result<String, CliError> {
    let SimcoreCommand::Run { bundle, duration, dt, out } = c;
    let mut b: ScenarioBundle = serde_json::from_str(&read(bundle)?).map_err(config_err)?;
    if let Some(s) = seed {
        b.seed = s;
    }
    b.validate().map_err(config_err)?;
    let trace = run_with(&b, duration.unwrap_or(cfg.simulation.duration), dt.unwrap_or(cfg.simulation.dt), &cfg.simulation.params)
        .map_err(config_err)?;
    let summary = format!("steps {}  collisions {}  hash {}\n", trace.steps.len(), trace.collisions.len(), trace.hash());
    match out {
        Some(p) => {
            fs::write(p, trace.to_jsonl()).map_err(failure)?;
            Ok(summary)
        }
        None => Ok(trace.to_jsonl()),
    }
}

fn evalkit(c: &EvalkitCommand, cfg: &PipelineConfig) -> Result<String, CliError> {
    match c {
        EvalkitCommand::Conformity { runs } => Ok(conformity_table(&outcomes(&runs_of(runs)?)).to_table().to_string()),
        EvalkitCommand::Diversity { runs } => diversity_text(&runs_of(runs)?).ok_or_else(|| failure("no successful runs")),
        EvalkitCommand::Similarity { runs } => {
            let runs = runs_of(runs)?;
            let triples: Vec<_> = ok_bundles(&runs)
                .into_iter()
                .map(|b| (b.description.clone(), describe_view(b, View::Ego), describe_view(b, View::Bev)))
                .collect();
            if triples.is_empty() {
                return Err(failure("no successful runs"));
            }
            let embedder = cfg.evaluation.embedder.build();
            Ok(cross_view_similarity(&triples, embedder.as_ref()).map_err(failure)?.to_table().to_string())
        }
        EvalkitCommand::Performance { runs } => {
            let runs = runs_of(runs)?;
            let reports: Vec<&PerformanceReport> = runs.iter().filter_map(|r| r.report.as_ref().map(|x| &x.performance)).collect();
            if reports.is_empty() {
                return Err(failure("no evaluated runs"));
            }
            Ok(performance_table(&reports).to_string())
        }
        EvalkitCommand::Compare { runs } => {
            let runs = runs_of(runs)?;
            let pairs: Vec<(&PerformanceReport, &ScenarioBundle)> = runs
                .iter()
                .filter(|r| r.manifest.ok())
                .filter_map(|r| Some((&r.report.as_ref()?.performance, r.bundle.as_ref()?)))
                .collect();
            if pairs.is_empty() {
                return Err(failure("no successful runs"));
            }
            let ours: Vec<PerformanceReport> = pairs.iter().map(|p| p.0.clone()).collect();
            let baseline = pairs.iter().map(|p| baseline_performance(cfg, p.1)).collect::<Result<Vec<_>, _>>().map_err(failure)?;
            Ok(compare_pipelines(&ours, &baseline).map_err(failure)?.to_table().to_string())
        }
        EvalkitCommand::Hints { runs } => {
            let runs = runs_of(runs)?;
            let mut traces = Vec::new();
            for r in runs.iter().filter(|r| r.manifest.ok()) {
                let Some(b) = &r.bundle else { continue };
                let trace = run_with(b, cfg.simulation.duration, cfg.simulation.dt, &cfg.simulation.params).map_err(failure)?;
                traces.push((r.manifest.run_id.clone(), b.description.narrative.clone(), trace));
            }
            let sources: Vec<HintSource<'_>> =
                traces.iter().map(|(id, ctx, t)| HintSource { scenario_id: id, trace: t, context: ctx }).collect();
            let mut text = String::new();
            for h in export_hints(&sources) {
                text.push_str(&serde_json::to_string(&h).expect("serializable"));
                text.push('\n');
            }
            Ok(text)
        }
    }
}
