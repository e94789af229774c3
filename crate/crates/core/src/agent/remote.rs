//! Planner served by an external JSON endpoint.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentError, GroundingContext, GroundingDecision, GroundingSource, PlannerAdapter};
use crate::http::JsonClient;
use crate::retrieval::CandidateObject;
use crate::world::{Point, SceneGraph};

#[derive(Serialize)]
struct GroundRequest<'a> {
    instruction: &'a str,
    candidates: &'a [CandidateObject],
    scene_graph: &'a SceneGraph,
}

#[derive(Deserialize)]
struct GroundResponse {
    object_id: String,
    prior_room: Option<String>,
    #[serde(default)]
    rationale: String,
}

#[derive(Serialize)]
struct RoomRequest<'a> {
    scene_graph: &'a SceneGraph,
    decision: &'a GroundingDecision,
    current_room: &'a str,
    visited: &'a BTreeSet<String>,
}

#[derive(Deserialize)]
struct RoomResponse {
    room: Option<String>,
}

/// Posts to `{endpoint}/ground` and `{endpoint}/choose_room`.
///
/// Only memory-backed grounding goes over the wire; every response is
/// checked against the candidates and the scene before use.
#[derive(Debug, Clone)]
pub struct RemotePlanner {
    client: JsonClient,
}

impl RemotePlanner {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Result<Self, AgentError> {
        let client =
            JsonClient::new(endpoint, Duration::from_millis(timeout_ms)).map_err(AgentError::PlannerUnavailable)?;
        Ok(Self { client })
    }
}

impl PlannerAdapter for RemotePlanner {
    fn ground(
        &self,
        instruction: &str,
        context: &GroundingContext,
        scene: &SceneGraph,
    ) -> Result<GroundingDecision, AgentError> {
        let GroundingContext::Polar(result) = context else {
            return Err(AgentError::GroundingFailed(
                "the remote planner only grounds against retrieved memory".into(),
            ));
        };
        let request = GroundRequest {
            instruction,
            candidates: &result.candidates,
            scene_graph: scene,
        };
        let response: GroundResponse = self
            .client
            .post_path("ground", &request)
            .map_err(AgentError::PlannerUnavailable)?;
        let candidate = result.candidate(&response.object_id).ok_or_else(|| {
            AgentError::GroundingFailed(format!("planner chose unknown object {:?}", response.object_id))
        })?;
        if let Some(room) = &response.prior_room {
            if scene.room(room).is_none() {
                return Err(AgentError::GroundingFailed(format!("planner named unknown room {room:?}")));
            }
        }
        Ok(GroundingDecision {
            chosen_object_id: candidate.object_id.clone(),
            chosen_category: candidate.category.clone(),
            prior_room: response.prior_room,
            rationale: response.rationale,
            source: GroundingSource::Polar,
        })
    }

    fn choose_room(
        &self,
        scene: &SceneGraph,
        decision: &GroundingDecision,
        current_room: &str,
        _position: Point,
        visited: &BTreeSet<String>,
    ) -> Result<Option<String>, AgentError> {
        let request = RoomRequest {
            scene_graph: scene,
            decision,
            current_room,
            visited,
        };
        let response: RoomResponse = self
            .client
            .post_path("choose_room", &request)
            .map_err(AgentError::PlannerUnavailable)?;
        match response.room {
            Some(room) if scene.room(&room).is_none() => {
                Err(AgentError::GroundingFailed(format!("planner named unknown room {room:?}")))
            }
            other => Ok(other),
        }
    }
}
