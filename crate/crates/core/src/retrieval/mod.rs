//! Memory retrieval for a new instruction.
//!
//! Semantic retrieval ranks statement nodes by cosine to the instruction and
//! expands each hit to its linked objects. The raw baselines rank whole
//! episode logs with BM25 or dense cosine.

mod bm25;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{tokenize, Bm25Index};

use crate::encoder::{cosine, Embedding, Encoder, EncoderError};
use crate::episode::{raw_document, EpisodeLog};
use crate::memory::{EdgeKind, MemoryGraph, NodeId};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    pub k: usize,
    pub active_only: bool,
    /// Break score ties by newest linking edge before node id.
    pub recency_tiebreak: bool,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            active_only: true,
            recency_tiebreak: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticHit {
    pub node_id: String,
    pub score: f64,
    pub timestamp: u64,
    pub object_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStatement {
    pub node_id: String,
    pub text: String,
    pub score: f64,
    pub timestamp: u64,
    pub active: bool,
    /// Whether this statement was itself among the hits.
    pub retrieved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    pub episode_id: String,
    pub timestamp: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateObject {
    pub object_id: String,
    pub category: String,
    pub statements: Vec<CandidateStatement>,
    /// Newest first.
    pub episodic_memories: Vec<EpisodicMemory>,
    pub instructions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub instruction: String,
    pub hits: Vec<SemanticHit>,
    pub candidates: Vec<CandidateObject>,
}

impl RetrievalResult {
    pub fn candidate(&self, object_id: &str) -> Option<&CandidateObject> {
        self.candidates.iter().find(|c| c.object_id == object_id)
    }
}

/// Top-k statement nodes by cosine to `query`.
pub fn retrieve_semantic(
    graph: &MemoryGraph,
    query: &Embedding,
    options: &RetrievalOptions,
) -> Result<Vec<SemanticHit>, RetrievalError> {
    if options.k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let mut links: BTreeMap<&NodeId, (u64, BTreeSet<&str>)> = BTreeMap::new();
    for e in graph.edges() {
        if e.kind != EdgeKind::ObjectSemantic || (options.active_only && !e.active) {
            continue;
        }
        let entry = links.entry(&e.dst).or_insert((0, BTreeSet::new()));
        entry.0 = entry.0.max(e.timestamp);
        entry.1.insert(e.src.as_str());
    }
    let mut hits = Vec::with_capacity(links.len());
    for (id, (timestamp, objects)) in links {
        let Some(node) = graph.semantic(id) else {
            continue;
        };
        hits.push(SemanticHit {
            node_id: id.to_string(),
            score: cosine(query, &node.embedding)?,
            timestamp,
            object_ids: objects.into_iter().map(str::to_string).collect(),
        });
    }
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| {
                if options.recency_tiebreak {
                    b.timestamp.cmp(&a.timestamp)
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
    hits.truncate(options.k);
    Ok(hits)
}

/// Expands hits to their linked objects, merged per object in order of
/// each object's best hit.
pub fn assemble_candidates(
    graph: &MemoryGraph,
    query: &Embedding,
    hits: &[SemanticHit],
) -> Result<Vec<CandidateObject>, RetrievalError> {
    let retrieved: BTreeSet<&str> = hits.iter().map(|h| h.node_id.as_str()).collect();
    let mut order: Vec<&str> = Vec::new();
    for h in hits {
        for o in &h.object_ids {
            if !order.contains(&o.as_str()) {
                order.push(o);
            }
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for object_id in order {
        let oid = NodeId::new(object_id);
        let Some(node) = graph.object(&oid) else {
            continue;
        };
        let mut statements = Vec::new();
        let mut episodic_memories = Vec::new();
        let mut instructions = Vec::new();
        let mut edges: Vec<_> = graph.edges().iter().filter(|e| e.src == oid && e.active).collect();
        edges.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then_with(|| a.dst.cmp(&b.dst)));
        for e in edges {
            match e.kind {
                EdgeKind::ObjectSemantic => {
                    if let Some(s) = graph.semantic(&e.dst) {
                        statements.push(CandidateStatement {
                            node_id: s.node_id.to_string(),
                            text: s.statement.clone(),
                            score: cosine(query, &s.embedding)?,
                            timestamp: e.timestamp,
                            active: e.active,
                            retrieved: retrieved.contains(s.node_id.as_str()),
                        });
                    }
                }
                EdgeKind::ObjectEpisodic => {
                    if let Some(p) = graph.episodic(&e.dst) {
                        episodic_memories.push(EpisodicMemory {
                            episode_id: p.episode_id.clone(),
                            timestamp: e.timestamp,
                            text: p.summary.rendered_text.clone(),
                        });
                        instructions.push(p.instruction.clone());
                    }
                }
            }
        }
        out.push(CandidateObject {
            object_id: object_id.to_string(),
            category: node.category.clone(),
            statements,
            episodic_memories,
            instructions,
        });
    }
    Ok(out)
}

/// Retrieval plus assembly for one instruction.
pub fn retrieve(
    graph: &MemoryGraph,
    encoder: &Encoder,
    instruction: &str,
    options: &RetrievalOptions,
) -> Result<RetrievalResult, RetrievalError> {
    let query = encoder.encode(instruction)?;
    let hits = retrieve_semantic(graph, &query, options)?;
    let candidates = assemble_candidates(graph, &query, &hits)?;
    Ok(RetrievalResult {
        instruction: instruction.to_string(),
        hits,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawMode {
    Bm25,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHit {
    pub episode_id: String,
    pub score: f64,
}

/// Ranks whole episode logs against the instruction.
pub fn raw_retrieve(
    episodes: &[EpisodeLog],
    encoder: &Encoder,
    instruction: &str,
    k: usize,
    mode: RawMode,
) -> Result<Vec<RawHit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let docs: Vec<String> = episodes.iter().map(raw_document).collect();
    let scores = match mode {
        RawMode::Bm25 => Bm25Index::new(&docs).scores(instruction),
        RawMode::Dense => {
            let q = encoder.encode(instruction)?;
            let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
            encoder
                .encode_batch(&refs)?
                .iter()
                .map(|d| cosine(&q, d))
                .collect::<Result<_, _>>()?
        }
    };
    let mut hits: Vec<RawHit> = episodes
        .iter()
        .zip(scores)
        .map(|(e, score)| RawHit {
            episode_id: e.episode_id.clone(),
            score,
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.episode_id.cmp(&b.episode_id)));
    hits.truncate(k);
    Ok(hits)
}

/// Object-level recall: the gold object is among the candidates.
pub fn recall_semantic(result: &RetrievalResult, gold_object_id: &str) -> bool {
    result.candidates.iter().any(|c| c.object_id == gold_object_id)
}

/// Episode-level recall: some gold episode is among the raw hits.
pub fn recall_raw(hits: &[RawHit], gold_episode_ids: &[String]) -> bool {
    hits.iter().any(|h| gold_episode_ids.contains(&h.episode_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::NodeKind;

    fn graph_with(statements: &[(&str, &str, u64)]) -> MemoryGraph {
        let enc = Encoder::builtin();
        let mut g = MemoryGraph::new();
        for (obj, text, ts) in statements {
            let o = g.upsert_object("mug", Some(obj), None, *ts).unwrap();
            g.add_semantic(&o, text, enc.encode(text).unwrap(), None, *ts).unwrap();
        }
        g
    }

    #[test]
    fn identical_statement_ranks_first_with_unit_score() {
        let g = graph_with(&[("mug_01", "morning coffee ritual", 1), ("mug_02", "blue vase on shelf", 2)]);
        let enc = Encoder::builtin();
        let r = retrieve(&g, &enc, "morning coffee ritual", &RetrievalOptions::default()).unwrap();
        assert!((r.hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(r.candidates[0].object_id, "mug_01");
    }

    #[test]
    fn equal_scores_break_by_newer_edge() {
        let mut g = MemoryGraph::new();
        let a = g.upsert_object("mug", Some("mug_01"), None, 3).unwrap();
        let mut e = vec![0.0; 256];
        e[0] = 1.0;
        g.add_semantic(&a, "x", Embedding::new(e.clone()), None, 3).unwrap();
        let b = g.upsert_object("mug", Some("mug_02"), None, 7).unwrap();
        let mut f = vec![0.0; 256];
        f[1] = 1.0;
        g.add_semantic(&b, "y", Embedding::new(f), None, 7).unwrap();
        let mut q = vec![0.0; 256];
        q[0] = 1.0;
        q[1] = 1.0;
        let q = Embedding::normalized(q);
        let hits = retrieve_semantic(&g, &q, &RetrievalOptions::default()).unwrap();
        assert_eq!(hits[0].timestamp, 7);
        assert_eq!(hits[1].timestamp, 3);
    }

    #[test]
    fn under_full_and_empty() {
        let enc = Encoder::builtin();
        let g = graph_with(&[("a_1", "alpha beta", 1), ("b_1", "gamma delta", 2), ("c_1", "epsilon zeta", 3)]);
        let q = enc.encode("alpha").unwrap();
        assert_eq!(retrieve_semantic(&g, &q, &RetrievalOptions::default()).unwrap().len(), 3);
        assert!(retrieve_semantic(&MemoryGraph::new(), &q, &RetrievalOptions::default())
            .unwrap()
            .is_empty());
        let bad = RetrievalOptions {
            k: 0,
            ..Default::default()
        };
        assert!(retrieve_semantic(&g, &q, &bad).is_err());
    }

    #[test]
    fn shared_node_expands_to_both_objects() {
        let enc = Encoder::builtin();
        let mut g = MemoryGraph::new();
        for id in ["mug_01", "mug_02"] {
            let o = g.upsert_object("mug", Some(id), None, 1).unwrap();
            g.add_semantic(&o, "shared fact", enc.encode("shared fact").unwrap(), None, 1)
                .unwrap();
        }
        assert_eq!(g.semantic_count(), 1);
        let r = retrieve(&g, &enc, "shared fact", &RetrievalOptions::default()).unwrap();
        assert_eq!(r.hits.len(), 1);
        let ids: Vec<_> = r.candidates.iter().map(|c| c.object_id.as_str()).collect();
        assert_eq!(ids, ["mug_01", "mug_02"]);
    }

    #[test]
    fn two_hits_on_one_object_make_one_candidate() {
        let g = graph_with(&[("mug_01", "coffee in the morning", 1), ("mug_01", "tea in the evening", 2)]);
        let enc = Encoder::builtin();
        let r = retrieve(&g, &enc, "coffee tea", &RetrievalOptions::default()).unwrap();
        assert_eq!(r.hits.len(), 2);
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].statements.len(), 2);
    }

    #[test]
    fn superseded_statements_are_not_retrieved() {
        let enc = Encoder::builtin();
        let mut g = MemoryGraph::new();
        let o = g.upsert_object("mug", Some("mug_01"), None, 1).unwrap();
        let old = g.add_semantic(&o, "old fact", enc.encode("old fact").unwrap(), None, 1).unwrap();
        let new = g.add_semantic(&o, "brand new", enc.encode("brand new").unwrap(), None, 2).unwrap();
        g.supersede(&o, &old, &new, 3).unwrap();
        let q = enc.encode("old fact").unwrap();
        let hits = retrieve_semantic(&g, &q, &RetrievalOptions::default()).unwrap();
        assert!(hits.iter().all(|h| h.node_id != old.as_str()));
        let all = RetrievalOptions {
            active_only: false,
            ..Default::default()
        };
        let hits = retrieve_semantic(&g, &q, &all).unwrap();
        assert_eq!(hits[0].node_id, old.as_str());
        assert!(g.neighbors(&o, Some(NodeKind::Semantic), true).unwrap().len() == 1);
    }

    fn log(id: &str, instruction: &str) -> EpisodeLog {
        let mut l = crate::episode::fixtures::walk(&["kitchen"], &[1], true);
        l.episode_id = id.into();
        l.instruction = instruction.into();
        l
    }

    #[test]
    fn raw_retrievers() {
        let enc = Encoder::builtin();
        let one = [log("e1", "anything")];
        assert_eq!(raw_retrieve(&one, &enc, "query", 5, RawMode::Bm25).unwrap().len(), 1);
        assert!(raw_retrieve(&[], &enc, "query", 5, RawMode::Dense).unwrap().is_empty());

        let corpus = [log("e1", "bring the lamp"), log("e2", "bring the unicorn"), log("e3", "bring the mug")];
        let hits = raw_retrieve(&corpus, &enc, "unicorn", 5, RawMode::Bm25).unwrap();
        assert_eq!(hits[0].episode_id, "e2");

        let doc = raw_document(&corpus[2]);
        let hits = raw_retrieve(&corpus, &enc, &doc, 5, RawMode::Dense).unwrap();
        assert_eq!(hits[0].episode_id, "e3");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recall_definitions() {
        let empty = RetrievalResult {
            instruction: String::new(),
            hits: vec![],
            candidates: vec![],
        };
        assert!(!recall_semantic(&empty, "mug_01"));
        let hits = [RawHit {
            episode_id: "e2".into(),
            score: 1.0,
        }];
        assert!(recall_raw(&hits, &["e2".to_string()]));
        assert!(!recall_raw(&hits, &["e1".to_string()]));
    }
}
