//! Scenario suites, the acquisition stage, evaluation modes and metrics.

mod metrics;
mod pipeline;
mod scenario;
mod words;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    aggregate, brute_force_spl, render_table, EpisodeRow, MetricsFile, MetricsReport, RecallRow,
};
pub use pipeline::{
    acquire, eval_world, evaluate, memorize_logs, prepare, raw_sample, EvalOptions, SpecData,
};
pub use scenario::{gen_scenarios, grounds_gold, CATEGORIES, DEFAULT_FILLER_COUNT};

use crate::agent::AgentError;
use crate::distill::DistillError;
use crate::episode::Fact;
use crate::memory::GraphError;
use crate::retrieval::RetrievalError;
use crate::world::{AgentState, Point, WorldError, WorldParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scenario generation failed: {0}")]
    Generation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    CompositionalSingle,
    CompositionalJoint,
    Distractor,
    TemporalContext,
    TemporalObject,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::CompositionalSingle,
        ScenarioKind::CompositionalJoint,
        ScenarioKind::Distractor,
        ScenarioKind::TemporalContext,
        ScenarioKind::TemporalObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CompositionalSingle => "compositional-single",
            ScenarioKind::CompositionalJoint => "compositional-joint",
            ScenarioKind::Distractor => "distractor",
            ScenarioKind::TemporalContext => "temporal-context",
            ScenarioKind::TemporalObject => "temporal-object",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario kind {s:?}"))
    }
}

/// How the evaluation episode is grounded.
///
/// The last four replace the episodic text attached to retrieved
/// candidates; `EpisodicMemory` leaves it as memorized and so matches
/// `Polar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    NoPrior,
    RawInteraction,
    Polar,
    InstructionOnly,
    RawTrajectory,
    Summary,
    EpisodicMemory,
}

impl EvalMode {
    pub const ALL: [EvalMode; 7] = [
        EvalMode::NoPrior,
        EvalMode::RawInteraction,
        EvalMode::Polar,
        EvalMode::InstructionOnly,
        EvalMode::RawTrajectory,
        EvalMode::Summary,
        EvalMode::EpisodicMemory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::NoPrior => "no-prior",
            EvalMode::RawInteraction => "raw-interaction",
            EvalMode::Polar => "polar",
            EvalMode::InstructionOnly => "instruction-only",
            EvalMode::RawTrajectory => "raw-trajectory",
            EvalMode::Summary => "summary",
            EvalMode::EpisodicMemory => "episodic-memory",
        }
    }

    /// Whether the mode reads the memory graph.
    pub fn needs_graph(self) -> bool {
        !matches!(self, EvalMode::NoPrior | EvalMode::RawInteraction)
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptRole {
    /// Teaches a fact about the gold object.
    Gold,
    /// Teaches a fact about another object that the eval cue depends on.
    Support,
    /// A same-category object with a competing fact.
    Decoy,
    /// An assignment later replaced by a gold script.
    Outdated,
    Filler,
}

/// One acquisition-stage episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScript {
    pub episode_id: String,
    pub role: ScriptRole,
    pub instruction: String,
    pub facts: Vec<Fact>,
    pub target_object_id: String,
    pub target_category: String,
    pub timestamp: u64,
    /// Where the target is during acquisition.
    pub object_position: Point,
    pub agent_start: AgentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMove {
    pub object_id: String,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub instruction: String,
    pub gold_object_id: String,
    pub gold_category: String,
    pub agent_start: AgentState,
    /// Where every object sits during evaluation.
    pub object_moves: Vec<ObjectMove>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub world: WorldParams,
    pub scripts: Vec<AcquisitionScript>,
    pub eval: EvalSetup,
    pub filler_count: usize,
}

impl ScenarioSpec {
    pub fn script(&self, episode_id: &str) -> Option<&AcquisitionScript> {
        self.scripts.iter().find(|s| s.episode_id == episode_id)
    }

    /// Acquisition episodes that targeted the gold object.
    pub fn gold_episode_ids(&self) -> Vec<String> {
        self.scripts
            .iter()
            .filter(|s| s.target_object_id == self.eval.gold_object_id)
            .map(|s| s.episode_id.clone())
            .collect()
    }
}
