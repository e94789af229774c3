//! The hierarchical agent: target grounding, room-level planning and
//! low-level control.

mod oracle;
mod remote;
mod runner;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{content_tokens, parse_prior_room, NaiveMatcher, OraclePlanner};
pub use remote::RemotePlanner;
pub use runner::{run_episode, run_episode_with, EpisodeRun, EpisodeTask, Navigator, Termination};

use crate::episode::EpisodeLog;
use crate::retrieval::RetrievalResult;
use crate::world::{Point, SceneGraph, WorldError};

pub const DEFAULT_MAX_STEPS: u32 = 700;
pub const DEFAULT_SUCCESS_RADIUS_M: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("grounding failed: {0}")]
    GroundingFailed(String),
    #[error("planner unavailable: {0}")]
    PlannerUnavailable(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundingSource {
    Polar,
    Raw,
    None,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingDecision {
    /// Empty for category-only grounding.
    pub chosen_object_id: String,
    pub chosen_category: String,
    pub prior_room: Option<String>,
    pub rationale: String,
    pub source: GroundingSource,
}

/// What the planner gets to ground the instruction with.
#[derive(Debug, Clone)]
pub enum GroundingContext {
    Polar(RetrievalResult),
    Raw(Vec<EpisodeLog>),
    /// No memory at all; only the categories present in the world.
    Empty { categories: Vec<String> },
    /// The target is given directly, as in acquisition.
    Explicit { object_id: String, category: String },
}

pub trait PlannerAdapter: Send + Sync {
    fn ground(
        &self,
        instruction: &str,
        context: &GroundingContext,
        scene: &SceneGraph,
    ) -> Result<GroundingDecision, AgentError>;

    /// The next room to search, or `None` when nothing is left.
    fn choose_room(
        &self,
        scene: &SceneGraph,
        decision: &GroundingDecision,
        current_room: &str,
        position: Point,
        visited: &BTreeSet<String>,
    ) -> Result<Option<String>, AgentError> {
        Ok(choose_target_room(scene, decision, current_room, position, visited))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_steps: u32,
    pub success_radius_m: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            success_radius_m: DEFAULT_SUCCESS_RADIUS_M,
            k: crate::retrieval::DEFAULT_K,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_steps == 0 {
            return Err(AgentError::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.success_radius_m.is_nan() || self.success_radius_m <= 0.0 {
            return Err(AgentError::InvalidConfig("success radius must be positive".into()));
        }
        if self.k == 0 {
            return Err(AgentError::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// The prior room when it is still unvisited, else the nearest unvisited
/// room by hops, then by distance to its waypoint, then by name.
pub fn choose_target_room(
    scene: &SceneGraph,
    decision: &GroundingDecision,
    current_room: &str,
    position: Point,
    visited: &BTreeSet<String>,
) -> Option<String> {
    if let Some(prior) = &decision.prior_room {
        if !visited.contains(prior) && scene.room(prior).is_some() {
            return Some(prior.clone());
        }
    }
    let hops = scene.hops_from(current_room);
    scene
        .rooms
        .iter()
        .filter(|r| !visited.contains(&r.name))
        .filter_map(|r| hops.get(&r.name).map(|h| (*h, r.waypoint.distance(&position), &r.name)))
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.cmp(b.2)))
        .map(|(_, _, name)| name.clone())
}

/// Room path to the chosen room, excluding the current room unless the
/// current room is itself the target.
pub fn plan_high(
    scene: &SceneGraph,
    decision: &GroundingDecision,
    current_room: &str,
    position: Point,
    visited: &BTreeSet<String>,
) -> Option<Vec<String>> {
    let target = choose_target_room(scene, decision, current_room, position, visited)?;
    if target == current_room {
        return Some(vec![target]);
    }
    scene.bfs_path(current_room, &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::SceneRoom;

    fn chain() -> SceneGraph {
        let room = |name: &str, x: f64| SceneRoom {
            name: name.into(),
            waypoint: Point::new(x, 0.0),
        };
        SceneGraph {
            rooms: vec![room("kitchen", 0.0), room("hall", 5.0), room("bedroom", 10.0), room("study", 6.0)],
            edges: vec![
                ("bedroom".into(), "hall".into()),
                ("hall".into(), "kitchen".into()),
                ("hall".into(), "study".into()),
            ],
        }
    }

    fn decision(prior: Option<&str>) -> GroundingDecision {
        GroundingDecision {
            chosen_object_id: "mug_01".into(),
            chosen_category: "mug".into(),
            prior_room: prior.map(str::to_string),
            rationale: String::new(),
            source: GroundingSource::Polar,
        }
    }

    #[test]
    fn prior_room_path() {
        let g = chain();
        let p = plan_high(&g, &decision(Some("bedroom")), "kitchen", Point::new(0.0, 0.0), &BTreeSet::new());
        assert_eq!(p.unwrap(), ["hall", "bedroom"]);
    }

    #[test]
    fn nearest_unvisited_sweep() {
        let g = chain();
        let visited: BTreeSet<String> = ["kitchen".to_string()].into();
        let p = plan_high(&g, &decision(None), "kitchen", Point::new(0.0, 0.0), &visited);
        assert_eq!(p.unwrap(), ["hall"]);
        // Both bedroom and study are two hops from kitchen; study is nearer.
        let visited: BTreeSet<String> = ["kitchen".to_string(), "hall".to_string()].into();
        let p = plan_high(&g, &decision(None), "hall", Point::new(0.0, 0.0), &visited);
        assert_eq!(p.unwrap(), ["study"]);
    }

    #[test]
    fn visited_prior_falls_through_to_sweep() {
        let g = chain();
        let visited: BTreeSet<String> = ["bedroom".to_string()].into();
        let p = plan_high(&g, &decision(Some("bedroom")), "bedroom", Point::new(10.0, 0.0), &visited);
        assert_eq!(p.unwrap(), ["hall"]);
        let all: BTreeSet<String> = g.rooms.iter().map(|r| r.name.clone()).collect();
        assert!(plan_high(&g, &decision(None), "hall", Point::new(5.0, 0.0), &all).is_none());
    }

    #[test]
    fn current_room_is_searched_first() {
        let g = chain();
        let p = plan_high(&g, &decision(None), "study", Point::new(6.0, 0.0), &BTreeSet::new());
        assert_eq!(p.unwrap(), ["study"]);
    }
}
