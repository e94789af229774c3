//! One function per pipeline stage. Stages talk to each other only through
//! files under the output directory:
//!
//! ```text
//! specs.jsonl          scenario gen
//! worlds/<id>.json     scenario gen
//! logs/<id>.jsonl      acquire
//! graphs/<id>.json     memorize
//! metrics.json         eval
//! table.txt            eval, report
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use polar_core::agent::{
    AgentError, GroundingContext, GroundingDecision, OraclePlanner, PlannerAdapter, RemotePlanner,
};
use polar_core::distill::Distiller;
use polar_core::encoder::Encoder;
use polar_core::episode::EpisodeLog;
use polar_core::eval::{
    acquire, evaluate, gen_scenarios, memorize_logs, render_table, MetricsFile, ScenarioSpec, SpecData, CATEGORIES,
};
use polar_core::io::{read_jsonl, write_atomic, write_jsonl};
use polar_core::memory::MemoryGraph;
use polar_core::world::{gen_world, render_map, ObjectSpec, Point, SceneGraph, World, WorldParams};

use crate::config::Resolved;

pub const METRICS_FORMAT_VERSION: u32 = 1;

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn specs(&self) -> PathBuf {
        self.root.join("specs.jsonl")
    }

    pub fn world(&self, id: &str) -> PathBuf {
        self.root.join("worlds").join(format!("{id}.json"))
    }

    pub fn logs(&self, id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{id}.jsonl"))
    }

    pub fn graph(&self, id: &str) -> PathBuf {
        self.root.join("graphs").join(format!("{id}.json"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn table(&self) -> PathBuf {
        self.root.join("table.txt")
    }
}

/// Sends memory-backed grounding to the remote planner and leaves the
/// baselines, which have no candidates to send, to the oracle.
struct RemoteWithFallback {
    remote: RemotePlanner,
    local: OraclePlanner,
}

impl PlannerAdapter for RemoteWithFallback {
    fn ground(
        &self,
        instruction: &str,
        context: &GroundingContext,
        scene: &SceneGraph,
    ) -> Result<GroundingDecision, AgentError> {
        match context {
            GroundingContext::Polar(_) => self.remote.ground(instruction, context, scene),
            _ => self.local.ground(instruction, context, scene),
        }
    }

    fn choose_room(
        &self,
        scene: &SceneGraph,
        decision: &GroundingDecision,
        current_room: &str,
        position: Point,
        visited: &BTreeSet<String>,
    ) -> Result<Option<String>, AgentError> {
        self.remote.choose_room(scene, decision, current_room, position, visited)
    }
}

fn encoder(cfg: &Resolved) -> Result<Encoder> {
    Ok(Encoder::new(cfg.encoder.clone())?)
}

fn planner(cfg: &Resolved, encoder: &Encoder) -> Result<Box<dyn PlannerAdapter>> {
    let local = OraclePlanner::new(encoder.clone());
    Ok(match &cfg.planner_endpoint {
        None => Box::new(local),
        Some(endpoint) => Box::new(RemoteWithFallback {
            remote: RemotePlanner::new(endpoint, cfg.timeout_ms)?,
            local,
        }),
    })
}

/// A standalone world with two instances of the first eight categories.
pub fn world_gen(cfg: &Resolved, out: &Path, map: Option<&Path>) -> Result<()> {
    let params = WorldParams {
        seed: cfg.seed,
        n_rooms: cfg.n_rooms,
        objects: CATEGORIES[..8]
            .iter()
            .map(|c| ObjectSpec {
                category: c.to_string(),
                count: 2,
            })
            .collect(),
    };
    let world = gen_world(&params)?;
    world.save(out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(map) = map {
        write_atomic(map, render_map(&world).as_bytes()).with_context(|| format!("writing {}", map.display()))?;
    }
    Ok(())
}

pub fn scenario_gen(cfg: &Resolved) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let mut specs = Vec::new();
    for &kind in &cfg.kinds {
        specs.extend(gen_scenarios(cfg.seed, kind, cfg.n, cfg.filler_count)?);
    }
    cfg.execution.try_map(&specs, |spec| -> Result<()> {
        let path = layout.world(&spec.scenario_id);
        gen_world(&spec.world)?
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))
    })?;
    write_jsonl(&layout.specs(), &specs).with_context(|| format!("writing {}", layout.specs().display()))?;
    Ok(())
}

fn load_specs(layout: &Layout) -> Result<Vec<ScenarioSpec>> {
    let path = layout.specs();
    if !path.exists() {
        bail!("{} not found; run `scenario gen` first", path.display());
    }
    read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_world(layout: &Layout, id: &str) -> Result<World> {
    let path = layout.world(id);
    World::load(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_logs(layout: &Layout, id: &str) -> Result<Vec<EpisodeLog>> {
    let path = layout.logs(id);
    if !path.exists() {
        bail!("{} not found; run `acquire` first", path.display());
    }
    read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
}

pub fn acquire_stage(cfg: &Resolved) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let specs = load_specs(&layout)?;
    // Acquisition targets are explicit, so no memory or remote model is involved.
    let guide = OraclePlanner::default();
    cfg.execution.try_map(&specs, |spec| -> Result<()> {
        let world = load_world(&layout, &spec.scenario_id)?;
        let logs = acquire(spec, &world, &guide, &cfg.run)?;
        let path = layout.logs(&spec.scenario_id);
        write_jsonl(&path, &logs).with_context(|| format!("writing {}", path.display()))
    })?;
    Ok(())
}

pub fn memorize_stage(cfg: &Resolved) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let specs = load_specs(&layout)?;
    let encoder = encoder(cfg)?;
    let distiller = Distiller::new(&cfg.distiller)?;
    cfg.execution.try_map(&specs, |spec| -> Result<()> {
        let logs = load_logs(&layout, &spec.scenario_id)?;
        let graph = memorize_logs(&logs, &encoder, &distiller, cfg.graph)?;
        let path = layout.graph(&spec.scenario_id);
        graph.save(&path).with_context(|| format!("writing {}", path.display()))
    })?;
    Ok(())
}

pub fn eval_stage(cfg: &Resolved, only_retrieval_hits: bool, metrics: &Path, table: &Path) -> Result<String> {
    let layout = Layout::new(&cfg.out_dir);
    let specs = load_specs(&layout)?;
    let data: Vec<SpecData> = cfg.execution.try_map(&specs, |spec| -> Result<SpecData> {
        let graph_path = layout.graph(&spec.scenario_id);
        let graph = if graph_path.exists() {
            Some(MemoryGraph::load(&graph_path).with_context(|| format!("reading {}", graph_path.display()))?)
        } else {
            None
        };
        Ok(SpecData {
            spec: spec.clone(),
            world: load_world(&layout, &spec.scenario_id)?,
            logs: load_logs(&layout, &spec.scenario_id)?,
            graph,
        })
    })?;
    let encoder = encoder(cfg)?;
    let planner = planner(cfg, &encoder)?;
    let options = cfg.eval_options(only_retrieval_hits);
    let mut reports = Vec::new();
    for &mode in &cfg.modes {
        reports.extend(evaluate(&data, mode, &encoder, planner.as_ref(), &options)?);
    }
    let file = MetricsFile {
        format_version: METRICS_FORMAT_VERSION,
        seed: cfg.seed,
        reports,
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    write_atomic(metrics, json.as_bytes()).with_context(|| format!("writing {}", metrics.display()))?;
    let text = render_table(&file.reports);
    write_atomic(table, text.as_bytes()).with_context(|| format!("writing {}", table.display()))?;
    Ok(text)
}

pub fn report_stage(metrics: &Path, table: &Path) -> Result<String> {
    let text = fs::read_to_string(metrics).with_context(|| format!("reading {}", metrics.display()))?;
    let file: MetricsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", metrics.display()))?;
    if file.format_version != METRICS_FORMAT_VERSION {
        bail!("{}: unsupported format version {}", metrics.display(), file.format_version);
    }
    let text = render_table(&file.reports);
    write_atomic(table, text.as_bytes()).with_context(|| format!("writing {}", table.display()))?;
    Ok(text)
}
