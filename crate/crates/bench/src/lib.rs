//! In-memory pipeline stages shared by the benchmarks.

use scenforge::compgen::{generate_agents, generate_objects, plan_route};
use scenforge::evalkit::{performance, PerformanceWeights};
use scenforge::interpreter::{interpret, InterpreterConfig};
use scenforge::netgen::compile_network;
use scenforge::simcore::run;
use scenforge::{
    MockProvider, MultimodalInput, PerformanceReport, PlacementConstraints, PromptKnowledgeBase, ScenarioBundle, ScenarioDescription,
    SimulationTrace,
};

pub const REQUESTS: [&str; 3] = [
    "Unprotected left turn at a four-way intersection. An oncoming car goes straight while the ego vehicle turns left.",
    "A construction zone on a two-lane road narrows traffic to one lane. Cones line the closed lane and a truck follows the ego vehicle.",
    "A car cuts in from the adjacent lane on a highway, forcing the ego vehicle to brake hard.",
];

pub const MAX_RETRIES: u32 = 3;

pub fn describe(text: &str, seed: u64) -> ScenarioDescription {
    let input = MultimodalInput::TextRequest(text.into());
    interpret(&input, &PromptKnowledgeBase::builtin(), &MockProvider::new(seed), &InterpreterConfig::default()).expect("mock interprets")
}

/// Network, agents and objects for a description.
pub fn build(desc: &ScenarioDescription, seed: u64) -> ScenarioBundle {
    let kb = PromptKnowledgeBase::builtin();
    let provider = MockProvider::new(seed);
    let network = compile_network(&desc.road, &kb, &provider, MAX_RETRIES).expect("network compiles");
    let c = PlacementConstraints { seed, ..Default::default() };
    let agents = generate_agents(desc, &network, &c, &kb, &provider, MAX_RETRIES).expect("agents placed");
    let objects = generate_objects(desc, &network, &c, &kb, &provider, MAX_RETRIES).expect("objects placed");
    ScenarioBundle { description: desc.clone(), network, agents, objects, weather: desc.weather.clone(), seed }
}

pub fn simulate(bundle: &ScenarioBundle, duration: f64) -> SimulationTrace {
    run(bundle, duration, 0.1).expect("bundle simulates")
}

pub fn score(bundle: &ScenarioBundle, trace: &SimulationTrace) -> PerformanceReport {
    let av = bundle.agents.iter().find(|a| a.role == scenforge::Role::AV).expect("an AV");
    let route = plan_route(&bundle.network, &av.lane, av.s);
    performance(trace, &route, &PerformanceWeights::default()).expect("AV present")
}

/// Text in, driving scores out.
pub fn end_to_end(text: &str, seed: u64) -> PerformanceReport {
    let bundle = build(&describe(text, seed), seed);
    let trace = simulate(&bundle, 20.0);
    score(&bundle, &trace)
}
