//! Memorization: turning finished episodes into graph memories.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{cosine, Encoder, EncoderError};
use crate::episode::{render_trajectory, EpisodeLog};
use crate::http::JsonClient;
use crate::memory::{EpisodicRecord, EpisodicSummary, GraphError, MemoryGraph};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("distiller unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// One user-specific fact about one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticStatement {
    pub object_id: String,
    pub text: String,
    pub source_fact_key: String,
    pub supersedes_key: Option<String>,
}

pub fn statement_text(key: &str, value: &str, category: &str, object_id: &str) -> String {
    format!("user: {key} = {value} refers to {category} {object_id}")
}

/// Splits a templated statement into its key and value.
pub fn parse_statement(text: &str) -> Option<(&str, &str)> {
    let rest = text.strip_prefix("user: ")?;
    let (key, rest) = rest.split_once(" = ")?;
    let (value, _) = rest.rsplit_once(" refers to ")?;
    Some((key, value))
}

/// One statement per fact, in fact order.
pub fn distill_semantic(episode: &EpisodeLog) -> Vec<SemanticStatement> {
    episode
        .facts
        .iter()
        .map(|f| SemanticStatement {
            object_id: episode.target_object_id.clone(),
            text: statement_text(&f.key, &f.value, &episode.target_category, &episode.target_object_id),
            source_fact_key: f.key.clone(),
            supersedes_key: Some(f.key.clone()),
        })
        .collect()
}

/// Outcome, room order, unpromising rooms and distance travelled.
pub fn summarize_episodic(episode: &EpisodeLog) -> Result<EpisodicSummary, DistillError> {
    episode.validate().map_err(DistillError::InvalidEpisode)?;
    let mut room_sequence: Vec<String> = Vec::new();
    for s in &episode.trajectory {
        if !room_sequence.contains(&s.room) {
            room_sequence.push(s.room.clone());
        }
    }
    let found_room = episode
        .success
        .then(|| episode.trajectory.last().map(|s| s.room.clone()))
        .flatten();
    let unpromising_rooms: Vec<String> = room_sequence
        .iter()
        .filter(|r| Some(*r) != found_room.as_ref())
        .cloned()
        .collect();
    let path_length_m = episode.path_length_m();
    let rendered_text = format!(
        "outcome={}; searched={}; found_in={}; length={:.1}m",
        if episode.success { "success" } else { "failure" },
        room_sequence.join(","),
        found_room.as_deref().unwrap_or("none"),
        path_length_m
    );
    Ok(EpisodicSummary {
        success: episode.success,
        room_sequence,
        unpromising_rooms,
        found_room,
        path_length_m,
        rendered_text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DistillerMode {
    Builtin,
    Remote { endpoint: String, timeout_ms: u64 },
}

#[derive(Serialize)]
struct DistillRequest<'a> {
    instruction: &'a str,
    trajectory_text: &'a str,
}

#[derive(Deserialize)]
struct RemoteStatement {
    text: String,
    fact_key: String,
}

#[derive(Deserialize)]
struct DistillResponse {
    statements: Vec<RemoteStatement>,
    summary_text: String,
}

/// Produces statements and summaries, locally or through a remote model.
#[derive(Debug, Clone)]
pub struct Distiller {
    client: Option<JsonClient>,
}

impl Default for Distiller {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Distiller {
    pub fn builtin() -> Self {
        Self { client: None }
    }

    pub fn new(mode: &DistillerMode) -> Result<Self, DistillError> {
        match mode {
            DistillerMode::Builtin => Ok(Self::builtin()),
            DistillerMode::Remote {
                endpoint,
                timeout_ms,
            } => Ok(Self {
                client: Some(
                    JsonClient::new(endpoint, Duration::from_millis(*timeout_ms))
                        .map_err(DistillError::Unavailable)?,
                ),
            }),
        }
    }

    pub fn distill(
        &self,
        episode: &EpisodeLog,
    ) -> Result<(Vec<SemanticStatement>, EpisodicSummary), DistillError> {
        let mut summary = summarize_episodic(episode)?;
        let Some(client) = &self.client else {
            return Ok((distill_semantic(episode), summary));
        };
        let trajectory_text = render_trajectory(episode);
        let response: DistillResponse = client
            .post(&DistillRequest {
                instruction: &episode.instruction,
                trajectory_text: &trajectory_text,
            })
            .map_err(DistillError::Unavailable)?;
        let keys: Vec<&str> = episode.facts.iter().map(|f| f.key.as_str()).collect();
        let mut statements = Vec::with_capacity(response.statements.len());
        for s in response.statements {
            check_single_fact(&s.text, &s.fact_key, &keys).map_err(DistillError::Unavailable)?;
            statements.push(SemanticStatement {
                object_id: episode.target_object_id.clone(),
                text: s.text,
                supersedes_key: Some(s.fact_key.clone()),
                source_fact_key: s.fact_key,
            });
        }
        if !response.summary_text.trim().is_empty() {
            summary.rendered_text = response.summary_text;
        }
        Ok((statements, summary))
    }
}

/// A remote statement must mention its own fact key and no other key of
/// the episode.
fn check_single_fact(text: &str, fact_key: &str, episode_keys: &[&str]) -> Result<(), String> {
    if text.trim().is_empty() || fact_key.trim().is_empty() {
        return Err("statement with empty text or fact key".into());
    }
    let lower = text.to_lowercase();
    if !lower.contains(&fact_key.to_lowercase()) {
        return Err(format!("statement {text:?} does not mention its key {fact_key:?}"));
    }
    let others = episode_keys
        .iter()
        .filter(|k| !k.eq_ignore_ascii_case(fact_key) && !fact_key.to_lowercase().contains(&k.to_lowercase()))
        .filter(|k| lower.contains(&k.to_lowercase()))
        .count();
    if others > 0 {
        return Err(format!("statement {text:?} names more than one fact"));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorizeReport {
    pub objects_created: usize,
    pub semantic_created: usize,
    pub edges_created: usize,
    pub supersessions: usize,
    pub episodic_node: String,
}

/// Writes one episode into the graph. Every edge carries the episode's
/// timestamp. A statement whose key already has a different active
/// statement on the same object supersedes it.
pub fn memorize(
    episode: &EpisodeLog,
    graph: &mut MemoryGraph,
    encoder: &Encoder,
    distiller: &Distiller,
) -> Result<MemorizeReport, DistillError> {
    let ts = episode.timestamp;
    if ts < graph.clock() {
        return Err(GraphError::StaleTimestamp {
            given: ts,
            clock: graph.clock(),
        }
        .into());
    }
    let (statements, summary) = distiller.distill(episode)?;
    let texts: Vec<&str> = statements.iter().map(|s| s.text.as_str()).collect();
    let embeddings = encoder.encode_batch(&texts)?;

    let before = (graph.object_count(), graph.semantic_count(), graph.edges().len());
    let object = graph.upsert_object(
        &episode.target_category,
        Some(&episode.target_object_id),
        episode.reference_feature.as_deref(),
        ts,
    )?;
    let mut supersessions = 0;
    for (s, emb) in statements.iter().zip(embeddings) {
        let key = s.supersedes_key.as_deref().unwrap_or(&s.source_fact_key);
        // An active statement that dedup would merge with this one is the
        // same fact, so repeating an episode changes nothing.
        let theta = graph.config().theta_dedup;
        let previous = match graph.active_semantic_for_key(&object, key) {
            Some(old) if old.statement == s.text || cosine(&old.embedding, &emb)? >= theta => continue,
            other => other.map(|old| old.node_id.clone()),
        };
        match previous {
            Some(old) => {
                let new = graph.find_or_create_semantic(&s.text, emb, Some(&s.source_fact_key), ts, Some(&old))?;
                graph.supersede(&object, &old, &new, ts)?;
                supersessions += 1;
            }
            None => {
                graph.add_semantic(&object, &s.text, emb, Some(&s.source_fact_key), ts)?;
            }
        }
    }
    let episodic = graph.add_episodic(
        &object,
        EpisodicRecord {
            episode_id: episode.episode_id.clone(),
            instruction: episode.instruction.clone(),
            summary,
        },
        ts,
    )?;
    Ok(MemorizeReport {
        objects_created: graph.object_count() - before.0,
        semantic_created: graph.semantic_count() - before.1,
        edges_created: graph.edges().len() - before.2,
        supersessions,
        episodic_node: episodic.to_string(),
    })
}

/// Memorizes episodes in timestamp order (stable for equal timestamps).
pub fn memorize_all(
    episodes: &[EpisodeLog],
    graph: &mut MemoryGraph,
    encoder: &Encoder,
    distiller: &Distiller,
) -> Result<Vec<MemorizeReport>, DistillError> {
    let mut order: Vec<&EpisodeLog> = episodes.iter().collect();
    order.sort_by_key(|e| e.timestamp);
    order
        .into_iter()
        .map(|e| memorize(e, graph, encoder, distiller))
        .collect()
}
