//! Object-centric multimodal memory graph.
//!
//! Three node kinds: objects, semantic statements and episodic memories.
//! Every edge starts at an object node and carries an integer timestamp and
//! an `active` flag. Superseded edges are kept, inactive, forever.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{cosine_slices, Embedding};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_THETA_DEDUP: f64 = 0.92;
pub const DEFAULT_THETA_OBJ: f64 = 0.95;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("timestamp {given} is older than graph clock {clock}")]
    StaleTimestamp { given: u64, clock: u64 },
    #[error("parse error{}: {message}", position(*.line, *.column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

fn position(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl GraphError {
    fn corrupt(message: impl Into<String>) -> Self {
        GraphError::Parse {
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Object,
    Semantic,
    Episodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub object_id: NodeId,
    pub category: String,
    pub reference_feature: Option<Vec<f64>>,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticNode {
    pub node_id: NodeId,
    pub statement: String,
    pub embedding: Embedding,
    /// Key of the fact this statement was distilled from; drives supersession.
    pub fact_key: Option<String>,
    pub created_at: u64,
}

/// The planning-relevant digest of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicSummary {
    pub success: bool,
    pub room_sequence: Vec<String>,
    pub unpromising_rooms: Vec<String>,
    pub found_room: Option<String>,
    pub path_length_m: f64,
    pub rendered_text: String,
}

impl EpisodicSummary {
    pub fn validate(&self) -> Result<(), String> {
        if self.success != self.found_room.is_some() {
            return Err("found_room must be present iff success".into());
        }
        if let Some(found) = &self.found_room {
            if !self.room_sequence.contains(found) {
                return Err(format!("found room {found} not in room sequence"));
            }
        }
        if let Some(r) = self
            .unpromising_rooms
            .iter()
            .find(|r| !self.room_sequence.contains(r))
        {
            return Err(format!("unpromising room {r} not in room sequence"));
        }
        if !self.path_length_m.is_finite() || self.path_length_m < 0.0 {
            return Err(format!("invalid path length {}", self.path_length_m));
        }
        Ok(())
    }
}

/// Input for [`MemoryGraph::add_episodic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub episode_id: String,
    pub instruction: String,
    #[serde(flatten)]
    pub summary: EpisodicSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicNode {
    pub node_id: NodeId,
    pub episode_id: String,
    pub instruction: String,
    #[serde(flatten)]
    pub summary: EpisodicSummary,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "object->semantic")]
    ObjectSemantic,
    #[serde(rename = "object->episodic")]
    ObjectEpisodic,
}

impl EdgeKind {
    fn target(self) -> NodeKind {
        match self {
            EdgeKind::ObjectSemantic => NodeKind::Semantic,
            EdgeKind::ObjectEpisodic => NodeKind::Episodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub timestamp: u64,
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub next_object: u64,
    pub next_semantic: u64,
    pub next_episodic: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub theta_dedup: f64,
    pub theta_obj: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            theta_dedup: DEFAULT_THETA_DEDUP,
            theta_obj: DEFAULT_THETA_OBJ,
        }
    }
}

/// A neighbor reached over one edge, with that edge's timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub timestamp: u64,
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryGraph {
    objects: BTreeMap<NodeId, ObjectNode>,
    semantic: BTreeMap<NodeId, SemanticNode>,
    episodic: BTreeMap<NodeId, EpisodicNode>,
    edges: Vec<Edge>,
    counters: Counters,
    clock: u64,
    config: GraphConfig,
}

fn is_unit(v: &[f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n - 1.0).abs() <= UNIT_TOLERANCE
}

impl MemoryGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_config(config: GraphConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> GraphConfig {
        self.config
    }

    pub fn set_config(&mut self, config: GraphConfig) {
        self.config = config;
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn semantic_count(&self) -> usize {
        self.semantic.len()
    }

    pub fn episodic_count(&self) -> usize {
        self.episodic.len()
    }

    pub fn node_count(&self) -> usize {
        self.objects.len() + self.semantic.len() + self.episodic.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectNode> {
        self.objects.values()
    }

    pub fn semantic_nodes(&self) -> impl Iterator<Item = &SemanticNode> {
        self.semantic.values()
    }

    pub fn episodic_nodes(&self) -> impl Iterator<Item = &EpisodicNode> {
        self.episodic.values()
    }

    pub fn object(&self, id: &NodeId) -> Option<&ObjectNode> {
        self.objects.get(id)
    }

    pub fn semantic(&self, id: &NodeId) -> Option<&SemanticNode> {
        self.semantic.get(id)
    }

    pub fn episodic(&self, id: &NodeId) -> Option<&EpisodicNode> {
        self.episodic.get(id)
    }

    pub fn kind_of(&self, id: &NodeId) -> Option<NodeKind> {
        if self.objects.contains_key(id) {
            Some(NodeKind::Object)
        } else if self.semantic.contains_key(id) {
            Some(NodeKind::Semantic)
        } else if self.episodic.contains_key(id) {
            Some(NodeKind::Episodic)
        } else {
            None
        }
    }

    fn tick(&mut self, timestamp: u64) -> Result<(), GraphError> {
        if timestamp < self.clock {
            return Err(GraphError::StaleTimestamp {
                given: timestamp,
                clock: self.clock,
            });
        }
        self.clock = timestamp;
        Ok(())
    }

    fn require_object(&self, id: &NodeId) -> Result<&ObjectNode, GraphError> {
        self.objects
            .get(id)
            .ok_or_else(|| GraphError::NotFound(format!("object node {id}")))
    }

    /// Finds the object node matching `object_id` exactly, else the most
    /// similar same-category node whose reference feature clears `theta_obj`,
    /// else creates a new node. Existing nodes are never modified.
    pub fn upsert_object(
        &mut self,
        category: &str,
        object_id: Option<&str>,
        reference_feature: Option<&[f64]>,
        timestamp: u64,
    ) -> Result<NodeId, GraphError> {
        if object_id.is_none() && reference_feature.is_none() {
            return Err(GraphError::InvalidInput(
                "object needs an id or a reference feature".into(),
            ));
        }
        if let Some(id) = object_id {
            if id.is_empty() || id.starts_with("sem-") || id.starts_with("epi-") {
                return Err(GraphError::InvalidInput(format!("invalid object id {id:?}")));
            }
        }
        if let Some(f) = reference_feature {
            if !is_unit(f) {
                return Err(GraphError::InvalidInput(
                    "reference feature is not unit-norm".into(),
                ));
            }
        }
        self.tick(timestamp)?;

        if let Some(id) = object_id {
            let id = NodeId::new(id);
            if self.objects.contains_key(&id) {
                return Ok(id);
            }
        }
        if let Some(feature) = reference_feature {
            let mut best: Option<(f64, &NodeId)> = None;
            for node in self.objects.values().filter(|n| n.category == category) {
                let Some(existing) = &node.reference_feature else {
                    continue;
                };
                let Ok(sim) = cosine_slices(feature, existing) else {
                    continue;
                };
                if sim >= self.config.theta_obj && best.is_none_or(|(b, _)| sim > b) {
                    best = Some((sim, &node.object_id));
                }
            }
            if let Some((_, id)) = best {
                return Ok(id.clone());
            }
        }

        let id = match object_id {
            Some(id) => NodeId::new(id),
            None => loop {
                self.counters.next_object += 1;
                let candidate = NodeId::new(format!("obj-{:04}", self.counters.next_object));
                if !self.objects.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        self.objects.insert(
            id.clone(),
            ObjectNode {
                object_id: id.clone(),
                category: category.to_string(),
                reference_feature: reference_feature.map(<[f64]>::to_vec),
                created_at: timestamp,
            },
        );
        Ok(id)
    }

    fn active_edge_index(&self, src: &NodeId, dst: &NodeId) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.active && &e.src == src && &e.dst == dst)
    }

    fn link(&mut self, src: &NodeId, dst: &NodeId, kind: EdgeKind, timestamp: u64) {
        if self.active_edge_index(src, dst).is_none() {
            self.edges.push(Edge {
                src: src.clone(),
                dst: dst.clone(),
                kind,
                timestamp,
                active: true,
            });
        }
    }

    /// Returns the existing semantic node most similar to `embedding` when it
    /// clears `theta_dedup`, else creates one. Does not link anything.
    pub(crate) fn find_or_create_semantic(
        &mut self,
        statement: &str,
        embedding: Embedding,
        fact_key: Option<&str>,
        timestamp: u64,
        exclude: Option<&NodeId>,
    ) -> Result<NodeId, GraphError> {
        if statement.trim().is_empty() {
            return Err(GraphError::InvalidInput("statement is empty".into()));
        }
        if !is_unit(embedding.as_slice()) {
            return Err(GraphError::InvalidInput("embedding is not unit-norm".into()));
        }
        let mut best: Option<(f64, &NodeId)> = None;
        for node in self.semantic.values() {
            if Some(&node.node_id) == exclude {
                continue;
            }
            let sim = cosine_slices(embedding.as_slice(), node.embedding.as_slice())
                .map_err(|e| GraphError::InvalidInput(e.to_string()))?;
            if sim >= self.config.theta_dedup && best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, &node.node_id));
            }
        }
        if let Some((_, id)) = best {
            return Ok(id.clone());
        }
        self.counters.next_semantic += 1;
        let id = NodeId::new(format!("sem-{:06}", self.counters.next_semantic));
        self.semantic.insert(
            id.clone(),
            SemanticNode {
                node_id: id.clone(),
                statement: statement.to_string(),
                embedding,
                fact_key: fact_key.map(str::to_string),
                created_at: timestamp,
            },
        );
        Ok(id)
    }

    /// Links `object` to a semantic node for `statement`, reusing a
    /// sufficiently similar existing node instead of creating a duplicate.
    pub fn add_semantic(
        &mut self,
        object: &NodeId,
        statement: &str,
        embedding: Embedding,
        fact_key: Option<&str>,
        timestamp: u64,
    ) -> Result<NodeId, GraphError> {
        self.require_object(object)?;
        self.tick(timestamp)?;
        let id = self.find_or_create_semantic(statement, embedding, fact_key, timestamp, None)?;
        self.link(object, &id, EdgeKind::ObjectSemantic, timestamp);
        Ok(id)
    }

    /// Appends an episodic memory; episodic nodes are never deduplicated.
    pub fn add_episodic(
        &mut self,
        object: &NodeId,
        record: EpisodicRecord,
        timestamp: u64,
    ) -> Result<NodeId, GraphError> {
        self.require_object(object)?;
        record.summary.validate().map_err(GraphError::InvalidInput)?;
        self.tick(timestamp)?;
        self.counters.next_episodic += 1;
        let id = NodeId::new(format!("epi-{:06}", self.counters.next_episodic));
        self.episodic.insert(
            id.clone(),
            EpisodicNode {
                node_id: id.clone(),
                episode_id: record.episode_id,
                instruction: record.instruction,
                summary: record.summary,
                created_at: timestamp,
            },
        );
        self.link(object, &id, EdgeKind::ObjectEpisodic, timestamp);
        Ok(id)
    }

    /// Deactivates `object -> old` and ensures an active `object -> new` edge.
    pub fn supersede(
        &mut self,
        object: &NodeId,
        old: &NodeId,
        new: &NodeId,
        timestamp: u64,
    ) -> Result<(), GraphError> {
        self.require_object(object)?;
        if !self.semantic.contains_key(new) {
            return Err(GraphError::NotFound(format!("semantic node {new}")));
        }
        let idx = self
            .edges
            .iter()
            .position(|e| e.active && e.kind == EdgeKind::ObjectSemantic && &e.src == object && &e.dst == old)
            .ok_or_else(|| GraphError::NotFound(format!("active edge {object} -> {old}")))?;
        self.tick(timestamp)?;
        self.edges[idx].active = false;
        self.link(object, new, EdgeKind::ObjectSemantic, timestamp);
        Ok(())
    }

    /// Neighbors over one edge, newest edge first, then by id.
    ///
    /// From an object node this follows outgoing edges; from a semantic or
    /// episodic node it returns the objects pointing at it.
    pub fn neighbors(
        &self,
        node: &NodeId,
        kind: Option<NodeKind>,
        active_only: bool,
    ) -> Result<Vec<Neighbor>, GraphError> {
        let own_kind = self
            .kind_of(node)
            .ok_or_else(|| GraphError::NotFound(format!("node {node}")))?;
        let mut out: Vec<Neighbor> = self
            .edges
            .iter()
            .filter(|e| !active_only || e.active)
            .filter_map(|e| match own_kind {
                NodeKind::Object if &e.src == node => Some(Neighbor {
                    node_id: e.dst.clone(),
                    kind: e.kind.target(),
                    timestamp: e.timestamp,
                    active: e.active,
                }),
                NodeKind::Semantic | NodeKind::Episodic if &e.dst == node => Some(Neighbor {
                    node_id: e.src.clone(),
                    kind: NodeKind::Object,
                    timestamp: e.timestamp,
                    active: e.active,
                }),
                _ => None,
            })
            .filter(|n| kind.is_none_or(|k| k == n.kind))
            .collect();
        out.sort_by(|a, b| {
            b.timestamp
                .cmp(&a.timestamp)
                .then_with(|| a.node_id.cmp(&b.node_id))
        });
        Ok(out)
    }

    /// The active semantic neighbor of `object` distilled from `fact_key`.
    pub fn active_semantic_for_key(&self, object: &NodeId, fact_key: &str) -> Option<&SemanticNode> {
        self.edges
            .iter()
            .filter(|e| e.active && e.kind == EdgeKind::ObjectSemantic && &e.src == object)
            .filter_map(|e| self.semantic.get(&e.dst))
            .find(|s| s.fact_key.as_deref() == Some(fact_key))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let text = self.to_json()?;
        crate::io::write_atomic(path.as_ref(), text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        let snapshot = Snapshot {
            format_version: FORMAT_VERSION,
            nodes: SnapshotNodes {
                objects: self.objects.values().cloned().collect(),
                semantic: self.semantic.values().cloned().collect(),
                episodic: self.episodic.values().cloned().collect(),
            },
            edges: self.edges.clone(),
            counters: self.counters.clone(),
            clock: self.clock,
        };
        let mut text = serde_json::to_string_pretty(&snapshot)
            .map_err(|e| GraphError::InvalidInput(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let snapshot: Snapshot = serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        snapshot.into_graph()
    }

    /// Checks every structural invariant; used after load and by tests.
    pub fn validate(&self) -> Result<(), GraphError> {
        for node in self.objects.values() {
            if let Some(f) = &node.reference_feature {
                if !is_unit(f) {
                    return Err(GraphError::corrupt(format!(
                        "object {} has a non-unit reference feature",
                        node.object_id
                    )));
                }
            }
        }
        for node in self.semantic.values() {
            if node.statement.trim().is_empty() || !is_unit(node.embedding.as_slice()) {
                return Err(GraphError::corrupt(format!("invalid semantic node {}", node.node_id)));
            }
        }
        for node in self.episodic.values() {
            node.summary
                .validate()
                .map_err(|m| GraphError::corrupt(format!("episodic node {}: {m}", node.node_id)))?;
        }
        let mut active_pairs = std::collections::BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            if !self.objects.contains_key(&e.src) {
                return Err(GraphError::corrupt(format!("edge {i}: dangling source {}", e.src)));
            }
            match self.kind_of(&e.dst) {
                None => {
                    return Err(GraphError::corrupt(format!("edge {i}: dangling target {}", e.dst)))
                }
                Some(k) if k != e.kind.target() => {
                    return Err(GraphError::corrupt(format!(
                        "edge {i}: kind does not match target {}",
                        e.dst
                    )))
                }
                _ => {}
            }
            if e.active && !active_pairs.insert((&e.src, &e.dst)) {
                return Err(GraphError::corrupt(format!(
                    "edge {i}: second active edge {} -> {}",
                    e.src, e.dst
                )));
            }
        }
        let linked: std::collections::BTreeSet<&NodeId> = self.edges.iter().map(|e| &e.dst).collect();
        if let Some(orphan) = self
            .semantic
            .keys()
            .chain(self.episodic.keys())
            .find(|id| !linked.contains(id))
        {
            return Err(GraphError::corrupt(format!("node {orphan} has no incoming edge")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotNodes {
    objects: Vec<ObjectNode>,
    semantic: Vec<SemanticNode>,
    episodic: Vec<EpisodicNode>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format_version: u32,
    nodes: SnapshotNodes,
    edges: Vec<Edge>,
    counters: Counters,
    clock: u64,
}

impl Snapshot {
    fn into_graph(self) -> Result<MemoryGraph, GraphError> {
        if self.format_version != FORMAT_VERSION {
            return Err(GraphError::corrupt(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut graph = MemoryGraph {
            edges: self.edges,
            counters: self.counters,
            clock: self.clock,
            ..MemoryGraph::default()
        };
        let mut seen = std::collections::BTreeSet::new();
        let mut check = |id: &NodeId| {
            if seen.insert(id.clone()) {
                Ok(())
            } else {
                Err(GraphError::corrupt(format!("duplicate node id {id}")))
            }
        };
        for n in self.nodes.objects {
            check(&n.object_id)?;
            graph.objects.insert(n.object_id.clone(), n);
        }
        for n in self.nodes.semantic {
            check(&n.node_id)?;
            graph.semantic.insert(n.node_id.clone(), n);
        }
        for n in self.nodes.episodic {
            check(&n.node_id)?;
            graph.episodic.insert(n.node_id.clone(), n);
        }
        graph.validate()?;
        Ok(graph)
    }
}
