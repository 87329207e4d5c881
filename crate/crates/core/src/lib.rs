//! Scenario generation toolchain: multimodal descriptions are interpreted
//! into a canonical scenario description, compiled into SUMO-style road
//! networks, populated with agents and objects, simulated in closed loop and
//! scored.

pub mod compgen;
pub mod evalkit;
pub mod geometry;
pub mod interpreter;
pub mod ir;
pub mod kb;
pub mod netgen;
pub mod provider;
pub mod simcore;
pub mod stats;
pub mod synth;

pub use compgen::{AgentState, PlacedObject, PlacementConstraints, PlannedRoute};
pub use evalkit::{ConformityReport, EmbeddingVector, FailureClass, PerformanceReport};
pub use ir::{
    parse_description, serialize_description, AgentDescription, AgentKind, DescriptionError, MultimodalInput, ObjectDescription,
    ObjectKind, RoadDescription, RoadLayout, RoadSegment, Role, ScenarioBundle, ScenarioDescription, SceneType,
    WeatherDescription,
};
pub use kb::PromptKnowledgeBase;
pub use netgen::{NetworkStats, RoadNetwork};
pub use provider::{CompletionProvider, MockProvider};
pub use simcore::SimulationTrace;
pub use stats::Summary;

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
