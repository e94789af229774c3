//! Acquisition, memorization and evaluation of scenario specs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{aggregate, EpisodeRow, MetricsReport, RecallRow};
use super::{EvalError, EvalMode, ScenarioSpec, ScriptRole};
use crate::agent::{run_episode_with, EpisodeTask, GroundingContext, Navigator, PlannerAdapter, RunConfig};
use crate::distill::{memorize_all, Distiller};
use crate::encoder::{fnv1a64, Encoder};
use crate::episode::{render_trajectory, EpisodeLog};
use crate::exec::Execution;
use crate::memory::{GraphConfig, MemoryGraph};
use crate::retrieval::{raw_retrieve, recall_raw, recall_semantic, retrieve, RawMode, RetrievalOptions, RetrievalResult};
use crate::world::{build_scene_graph, gen_world, shortest_path_length, World};

pub const DEFAULT_RAW_SAMPLE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub run: RunConfig,
    /// Logs handed to the raw-interaction baseline.
    pub raw_sample: usize,
    /// Keep only episodes where both semantic and dense retrieval hit.
    pub only_retrieval_hits: bool,
    pub execution: Execution,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            raw_sample: DEFAULT_RAW_SAMPLE,
            only_retrieval_hits: false,
            execution: Execution::default(),
        }
    }
}

/// Everything evaluation needs about one spec.
#[derive(Debug, Clone)]
pub struct SpecData {
    pub spec: ScenarioSpec,
    /// The acquisition-stage world.
    pub world: World,
    pub logs: Vec<EpisodeLog>,
    pub graph: Option<MemoryGraph>,
}

/// The world with every object at its evaluation position.
pub fn eval_world(spec: &ScenarioSpec, world: &World) -> Result<World, EvalError> {
    Ok(world.with_positions(spec.eval.object_moves.iter().map(|m| (m.object_id.as_str(), m.position)))?)
}

/// Runs every acquisition script with the target given explicitly.
pub fn acquire(
    spec: &ScenarioSpec,
    world: &World,
    planner: &dyn PlannerAdapter,
    config: &RunConfig,
) -> Result<Vec<EpisodeLog>, EvalError> {
    let scene = build_scene_graph(world);
    let mut nav = Navigator::new();
    spec.scripts
        .iter()
        .map(|s| {
            let task = EpisodeTask {
                episode_id: s.episode_id.clone(),
                timestamp: s.timestamp,
                instruction: s.instruction.clone(),
                facts: s.facts.clone(),
                gold_object_id: s.target_object_id.clone(),
                start: s.agent_start,
            };
            let context = GroundingContext::Explicit {
                object_id: s.target_object_id.clone(),
                category: s.target_category.clone(),
            };
            Ok(run_episode_with(&mut nav, world, &scene, &task, &context, planner, config)?.log)
        })
        .collect()
}

pub fn memorize_logs(
    logs: &[EpisodeLog],
    encoder: &Encoder,
    distiller: &Distiller,
    config: GraphConfig,
) -> Result<MemoryGraph, EvalError> {
    let mut graph = MemoryGraph::with_config(config);
    memorize_all(logs, &mut graph, encoder, distiller)?;
    Ok(graph)
}

/// World generation, acquisition and memorization for one spec.
pub fn prepare(
    spec: &ScenarioSpec,
    planner: &dyn PlannerAdapter,
    encoder: &Encoder,
    distiller: &Distiller,
    graph_config: GraphConfig,
    config: &RunConfig,
) -> Result<SpecData, EvalError> {
    let world = gen_world(&spec.world)?;
    let logs = acquire(spec, &world, planner, config)?;
    let graph = memorize_logs(&logs, encoder, distiller, graph_config)?;
    Ok(SpecData {
        spec: spec.clone(),
        world,
        logs,
        graph: Some(graph),
    })
}

/// A seeded sample of `size` logs that always contains every gold and
/// support episode; all logs when there are no more than `size`.
pub fn raw_sample(spec: &ScenarioSpec, logs: &[EpisodeLog], size: usize, seed: u64) -> Vec<EpisodeLog> {
    if logs.len() <= size {
        return logs.to_vec();
    }
    let required: BTreeSet<&str> = spec
        .scripts
        .iter()
        .filter(|s| s.target_object_id == spec.eval.gold_object_id || s.role == ScriptRole::Support)
        .map(|s| s.episode_id.as_str())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(spec.scenario_id.as_bytes()));
    let mut rest: Vec<&EpisodeLog> = logs.iter().filter(|l| !required.contains(l.episode_id.as_str())).collect();
    rest.shuffle(&mut rng);
    let mut picked: Vec<&EpisodeLog> = logs.iter().filter(|l| required.contains(l.episode_id.as_str())).collect();
    let room = size.saturating_sub(picked.len());
    picked.extend(rest.into_iter().take(room));
    picked.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.episode_id.cmp(&b.episode_id)));
    picked.into_iter().cloned().collect()
}

fn summary_text(log: &EpisodeLog) -> String {
    let mut rooms: Vec<&str> = Vec::new();
    for s in &log.trajectory {
        if rooms.last() != Some(&s.room.as_str()) {
            rooms.push(&s.room);
        }
    }
    format!(
        "summary: visited {}; {}",
        rooms.join(" > "),
        if log.success { "succeeded" } else { "failed" }
    )
}

/// Replaces the episodic text of every candidate for the ablation modes.
fn apply_ablation(mut result: RetrievalResult, mode: EvalMode, logs: &[EpisodeLog]) -> RetrievalResult {
    let log_of = |id: &str| logs.iter().find(|l| l.episode_id == id);
    for c in &mut result.candidates {
        match mode {
            EvalMode::InstructionOnly => c.episodic_memories.clear(),
            EvalMode::RawTrajectory | EvalMode::Summary => {
                for m in &mut c.episodic_memories {
                    if let Some(log) = log_of(&m.episode_id) {
                        m.text = if mode == EvalMode::Summary {
                            summary_text(log)
                        } else {
                            format!("trajectory: {}", render_trajectory(log))
                        };
                    }
                }
            }
            _ => {}
        }
    }
    result
}

fn evaluate_one(
    data: &SpecData,
    mode: EvalMode,
    encoder: &Encoder,
    planner: &dyn PlannerAdapter,
    options: &EvalOptions,
) -> Result<EpisodeRow, EvalError> {
    let spec = &data.spec;
    let world = eval_world(spec, &data.world)?;
    let scene = build_scene_graph(&world);
    let opts = RetrievalOptions {
        k: options.run.k,
        ..RetrievalOptions::default()
    };
    let instruction = &spec.eval.instruction;
    let retrieved = match &data.graph {
        Some(g) => Some(retrieve(g, encoder, instruction, &opts)?),
        None if mode.needs_graph() => {
            return Err(EvalError::Config(format!(
                "mode {mode} needs a memorized graph for {}; run memorize first",
                spec.scenario_id
            )))
        }
        None => None,
    };
    let context = match mode {
        EvalMode::NoPrior => GroundingContext::Empty {
            categories: world.categories(),
        },
        EvalMode::RawInteraction => {
            GroundingContext::Raw(raw_sample(spec, &data.logs, options.raw_sample, options.run.seed))
        }
        _ => GroundingContext::Polar(apply_ablation(
            retrieved.clone().expect("graph checked above"),
            mode,
            &data.logs,
        )),
    };
    let task = EpisodeTask {
        episode_id: format!("{}-eval", spec.scenario_id),
        timestamp: spec.eval.timestamp,
        instruction: instruction.clone(),
        facts: vec![],
        gold_object_id: spec.eval.gold_object_id.clone(),
        start: spec.eval.agent_start,
    };
    let run = run_episode_with(&mut Navigator::new(), &world, &scene, &task, &context, planner, &options.run)?;

    let gold = world
        .object(&spec.eval.gold_object_id)
        .ok_or_else(|| EvalError::Config(format!("gold {} missing from world", spec.eval.gold_object_id)))?;
    let radius = options.run.success_radius_m;
    let end = run.log.final_position;
    let near_gold = end.distance(&gold.position) <= radius;
    let category_match = !near_gold
        && world
            .objects()
            .iter()
            .any(|o| o.category == gold.category && o.object_id != gold.object_id && end.distance(&o.position) <= radius);

    let gold_episodes = spec.gold_episode_ids();
    let bm25 = raw_retrieve(&data.logs, encoder, instruction, options.run.k, RawMode::Bm25)?;
    let dense = raw_retrieve(&data.logs, encoder, instruction, options.run.k, RawMode::Dense)?;
    let grounded = run.decision.as_ref().map(|d| d.chosen_object_id.clone()).filter(|id| !id.is_empty());
    Ok(EpisodeRow {
        scenario_id: spec.scenario_id.clone(),
        kind: spec.kind,
        success: run.log.success,
        path_length_m: run.log.path_length_m(),
        shortest_path_m: shortest_path_length(&world, spec.eval.agent_start.position, gold.position)?,
        steps: run.log.steps(),
        grounded_object_id: grounded.clone(),
        grounding_correct: grounded.as_deref() == Some(gold.object_id.as_str()),
        category_match,
        recall: RecallRow {
            semantic: retrieved.as_ref().map(|r| recall_semantic(r, &gold.object_id)),
            bm25: recall_raw(&bm25, &gold_episodes),
            dense: recall_raw(&dense, &gold_episodes),
        },
        termination: run.termination,
    })
}

/// Runs the evaluation episode of every spec under `mode` and aggregates
/// one report per scenario kind, in kind order.
pub fn evaluate(
    data: &[SpecData],
    mode: EvalMode,
    encoder: &Encoder,
    planner: &dyn PlannerAdapter,
    options: &EvalOptions,
) -> Result<Vec<MetricsReport>, EvalError> {
    options.run.validate()?;
    let mut rows = options
        .execution
        .try_map(data, |d| evaluate_one(d, mode, encoder, planner, options))?;
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    if options.only_retrieval_hits {
        rows.retain(|r| r.recall.semantic == Some(true) && r.recall.dense);
    }
    let kinds: BTreeSet<_> = data.iter().map(|d| d.spec.kind).collect();
    Ok(kinds
        .into_iter()
        .map(|kind| {
            let kind_rows: Vec<EpisodeRow> = rows.iter().filter(|r| r.kind == kind).cloned().collect();
            aggregate(mode, kind, options.run.k, kind_rows)
        })
        .collect())
}
