//! Low-level control and the episode loop.

use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AgentError, GroundingContext, GroundingDecision, PlannerAdapter, RunConfig};
use crate::episode::{EpisodeLog, Fact, Step};
use crate::world::{ActionLow, AgentState, Cell, DistanceField, Heading, Observation, Point, SceneGraph, World};

/// Geodesic distance at which a waypoint or a last-seen position counts as
/// reached.
const ARRIVE_M: f64 = 1.0;
/// Turns spent looking for a target that should be close but is not in view.
const LOOK_AROUND_TURNS: u32 = 12;
const SCAN_TURNS: u32 = 3;
const ESCAPE_EXPANSIONS: usize = 4000;
const EPS: f64 = 1e-9;

/// Greedy descent on cached grid distance fields, with a bounded lattice
/// search when the greedy step makes no progress.
///
/// Fields depend only on the floor plan, so one navigator can serve every
/// episode in worlds that share a layout.
#[derive(Debug, Default)]
pub struct Navigator {
    fields: HashMap<Cell, DistanceField>,
    escape: Option<(Cell, VecDeque<Heading>)>,
}

impl Navigator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops any half-followed escape plan.
    pub fn reset(&mut self) {
        self.escape = None;
    }

    /// Geodesic distance from `from` to `goal` in meters.
    pub fn distance(&mut self, world: &World, from: Point, goal: Point) -> f64 {
        let cell = crate::world::grid_snap(world, goal);
        self.fields
            .entry(cell)
            .or_insert_with(|| DistanceField::new(world, cell))
            .at(world, from)
    }

    /// The next action toward `goal`, or `None` once within `arrive_m` or
    /// when no further progress is possible.
    pub fn next_action(&mut self, world: &World, state: &AgentState, goal: Point, arrive_m: f64) -> Option<ActionLow> {
        let Self { fields, escape } = self;
        let goal_cell = crate::world::grid_snap(world, goal);
        let field = fields
            .entry(goal_cell)
            .or_insert_with(|| DistanceField::new(world, goal_cell));
        let here = field.at(world, state.position);
        if here <= arrive_m || !here.is_finite() {
            *escape = None;
            return None;
        }
        if let Some((cell, plan)) = escape {
            if *cell == goal_cell {
                if let Some(&h) = plan.front() {
                    if h != state.heading {
                        return state.heading.turn_toward(h);
                    }
                    if world.forward_target(state.position, h).is_some() {
                        plan.pop_front();
                        return Some(ActionLow::MoveForward);
                    }
                }
            }
            *escape = None;
        }

        let best = Heading::all()
            .filter_map(|h| world.forward_target(state.position, h).map(|p| (h, field.at(world, p))))
            .min_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then(state.heading.turns_to(a.0).cmp(&state.heading.turns_to(b.0)))
                    .then(a.0.degrees().cmp(&b.0.degrees()))
            });
        if let Some((h, value)) = best {
            if value < here - EPS {
                return Some(state.heading.turn_toward(h).unwrap_or(ActionLow::MoveForward));
            }
        }

        let mut plan = escape_plan(world, field, state.position, here, arrive_m)?;
        let h = *plan.front()?;
        let action = match state.heading.turn_toward(h) {
            Some(turn) => turn,
            None => {
                plan.pop_front();
                ActionLow::MoveForward
            }
        };
        *escape = Some((goal_cell, plan));
        Some(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    priority: f64,
    index: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first search over positions reachable by whole forward moves for
/// one within `arrive_m` of the goal, falling back to the expanded position
/// with the lowest field value when that beats `here`.
fn escape_plan(world: &World, field: &DistanceField, start: Point, here: f64, arrive_m: f64) -> Option<VecDeque<Heading>> {
    let key = |p: Point| ((p.x / 0.25).round() as i64, (p.y / 0.25).round() as i64);
    // (position, parent, heading taken from parent, moves)
    let mut nodes: Vec<(Point, usize, Heading, u32)> = vec![(start, usize::MAX, Heading::NORTH, 0)];
    let mut seen: HashSet<(i64, i64)> = HashSet::from([key(start)]);
    let mut heap = BinaryHeap::from([Node {
        priority: here,
        index: 0,
    }]);
    let mut best: Option<(f64, usize)> = None;
    let mut found = None;
    let mut expansions = 0;
    while let Some(Node { index, .. }) = heap.pop() {
        let (p, _, _, moves) = nodes[index];
        let value = field.at(world, p);
        if index != 0 {
            if value <= arrive_m {
                found = Some(index);
                break;
            }
            if value < here - EPS && best.is_none_or(|(b, _)| value < b) {
                best = Some((value, index));
            }
        }
        expansions += 1;
        if expansions > ESCAPE_EXPANSIONS {
            break;
        }
        for h in Heading::all() {
            let Some(q) = world.forward_target(p, h) else {
                continue;
            };
            if !seen.insert(key(q)) {
                continue;
            }
            let v = field.at(world, q);
            if !v.is_finite() {
                continue;
            }
            nodes.push((q, index, h, moves + 1));
            heap.push(Node {
                priority: (moves + 1) as f64 + v / 1.09,
                index: nodes.len() - 1,
            });
        }
    }
    let mut index = found.or(best.map(|(_, i)| i))?;
    let mut plan = VecDeque::new();
    while index != 0 {
        let (_, parent, h, _) = nodes[index];
        plan.push_front(h);
        index = parent;
    }
    Some(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Stopped,
    Exhausted,
    StepCap,
    PlannerFailed,
}

/// One episode to run: who asks for what, and where the agent starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTask {
    pub episode_id: String,
    pub timestamp: u64,
    pub instruction: String,
    pub facts: Vec<Fact>,
    /// The object that counts as success.
    pub gold_object_id: String,
    pub start: AgentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub decision: Option<GroundingDecision>,
    pub termination: Termination,
}

struct Explorer<'a> {
    world: &'a World,
    scene: &'a SceneGraph,
    planner: &'a dyn PlannerAdapter,
    decision: GroundingDecision,
    nav: &'a mut Navigator,
    target: Option<String>,
    last_seen: Option<Point>,
    look_turns: u32,
    visited: BTreeSet<String>,
    route: VecDeque<String>,
    scan_left: u32,
}

enum Next {
    Act(ActionLow),
    Exhausted,
}

impl Explorer<'_> {
    fn update_target(&mut self, obs: &Observation) {
        if self.target.is_none() {
            self.target = obs
                .sightings()
                .into_iter()
                .find(|s| s.category == self.decision.chosen_category)
                .map(|s| s.object_id.clone());
        }
        if let Some(id) = &self.target {
            if obs.sees(id).is_some() {
                self.last_seen = self.world.object(id).map(|o| o.position);
                self.look_turns = 0;
            }
        }
    }

    fn decide(&mut self, state: &AgentState, obs: &Observation, radius: f64) -> Result<Next, AgentError> {
        self.update_target(obs);
        if let Some(d) = self.target.as_deref().and_then(|id| obs.sees(id)) {
            if d <= radius {
                return Ok(Next::Act(ActionLow::Stop));
            }
        }
        if obs.blocked {
            return Ok(Next::Act(ActionLow::TurnRight));
        }
        if let Some(goal) = self.last_seen {
            match self.nav.next_action(self.world, state, goal, ARRIVE_M) {
                Some(a) => return Ok(Next::Act(a)),
                None if self.look_turns < LOOK_AROUND_TURNS => {
                    self.look_turns += 1;
                    return Ok(Next::Act(ActionLow::TurnRight));
                }
                None => {
                    // Seen before but not findable from here; resume the sweep.
                    self.last_seen = None;
                    self.look_turns = 0;
                }
            }
        }
        self.explore(state, obs)
    }

    fn explore(&mut self, state: &AgentState, obs: &Observation) -> Result<Next, AgentError> {
        let current = obs.room().to_string();
        for _ in 0..64 {
            if self.scan_left > 0 {
                self.scan_left -= 1;
                if self.scan_left == 0 {
                    if let Some(room) = self.route.pop_front() {
                        self.visited.insert(room);
                    }
                }
                return Ok(Next::Act(ActionLow::TurnRight));
            }
            if self.route.is_empty() {
                let Some(target) =
                    self.planner
                        .choose_room(self.scene, &self.decision, &current, state.position, &self.visited)?
                else {
                    return Ok(Next::Exhausted);
                };
                match self.scene.bfs_path(&current, &target) {
                    Some(path) if path.is_empty() => self.route.push_back(target),
                    Some(path) => self.route.extend(path),
                    None => {
                        self.visited.insert(target);
                        continue;
                    }
                }
            }
            let next = self.route.front().expect("route is non-empty").clone();
            let is_goal = self.route.len() == 1;
            if !is_goal && next == current {
                self.route.pop_front();
                continue;
            }
            let Some(waypoint) = self.scene.waypoint(&next) else {
                self.visited.insert(next);
                self.route.clear();
                continue;
            };
            match self.nav.next_action(self.world, state, waypoint, ARRIVE_M) {
                Some(a) => return Ok(Next::Act(a)),
                None if is_goal => self.scan_left = SCAN_TURNS,
                None => {
                    self.route.pop_front();
                }
            }
        }
        Ok(Next::Exhausted)
    }
}

fn record(state: &AgentState, obs: &Observation, action: ActionLow) -> Step {
    Step {
        position: state.position,
        heading: state.heading,
        action,
        room: obs.room().to_string(),
        visible_object_ids: obs.sightings().into_iter().map(|s| s.object_id.clone()).collect(),
    }
}

/// Grounds the instruction, then searches for the target until STOP, an
/// exhausted sweep or the step cap.
pub fn run_episode(
    world: &World,
    scene: &SceneGraph,
    task: &EpisodeTask,
    context: &GroundingContext,
    planner: &dyn PlannerAdapter,
    config: &RunConfig,
) -> Result<EpisodeRun, AgentError> {
    run_episode_with(&mut Navigator::new(), world, scene, task, context, planner, config)
}

/// [`run_episode`] reusing the distance fields cached in `nav`.
pub fn run_episode_with(
    nav: &mut Navigator,
    world: &World,
    scene: &SceneGraph,
    task: &EpisodeTask,
    context: &GroundingContext,
    planner: &dyn PlannerAdapter,
    config: &RunConfig,
) -> Result<EpisodeRun, AgentError> {
    nav.reset();
    config.validate()?;
    let gold = world
        .object(&task.gold_object_id)
        .ok_or_else(|| AgentError::InvalidConfig(format!("unknown gold object {}", task.gold_object_id)))?;
    if !world.is_free(task.start.position) {
        return Err(AgentError::InvalidConfig(format!(
            "start ({:.2}, {:.2}) is not free",
            task.start.position.x, task.start.position.y
        )));
    }
    let mut state = AgentState::new(task.start.position, task.start.heading);
    let mut obs = world.observe(&state);
    let mut trajectory = Vec::new();
    let mut failure_reason = None;

    let (decision, termination) = match planner.ground(&task.instruction, context, scene) {
        Err(e) => {
            failure_reason = Some(e.to_string());
            trajectory.push(record(&state, &obs, ActionLow::Stop));
            state = world.step(&state, ActionLow::Stop).state;
            (None, Termination::PlannerFailed)
        }
        Ok(decision) => {
            let target = (!decision.chosen_object_id.is_empty()).then(|| decision.chosen_object_id.clone());
            let mut explorer = Explorer {
                world,
                scene,
                planner,
                decision: decision.clone(),
                nav,
                target,
                last_seen: None,
                look_turns: 0,
                visited: BTreeSet::new(),
                route: VecDeque::new(),
                scan_left: 0,
            };
            let termination = loop {
                if state.steps_taken >= config.max_steps {
                    break Termination::StepCap;
                }
                let (action, ending) = match explorer.decide(&state, &obs, config.success_radius_m) {
                    Ok(Next::Act(ActionLow::Stop)) => (ActionLow::Stop, Some(Termination::Stopped)),
                    Ok(Next::Act(a)) => (a, None),
                    Ok(Next::Exhausted) => (ActionLow::Stop, Some(Termination::Exhausted)),
                    Err(e) => {
                        failure_reason = Some(e.to_string());
                        (ActionLow::Stop, Some(Termination::PlannerFailed))
                    }
                };
                trajectory.push(record(&state, &obs, action));
                let result = world.step(&state, action);
                state = result.state;
                obs = result.observation;
                if let Some(t) = ending {
                    break t;
                }
            };
            (Some(decision), termination)
        }
    };

    let reached = state.position.distance(&gold.position) <= config.success_radius_m;
    let success = reached && termination != Termination::PlannerFailed;
    if !success && failure_reason.is_none() {
        failure_reason = Some(
            match termination {
                Termination::Stopped => "stopped away from the target",
                Termination::Exhausted => "searched every room without finding the target",
                Termination::StepCap => "step cap reached",
                Termination::PlannerFailed => "planner failed",
            }
            .to_string(),
        );
    }
    let log = EpisodeLog {
        episode_id: task.episode_id.clone(),
        timestamp: task.timestamp,
        instruction: task.instruction.clone(),
        facts: task.facts.clone(),
        reference_feature: gold.feature.clone(),
        target_object_id: gold.object_id.clone(),
        target_category: gold.category.clone(),
        trajectory,
        success,
        final_position: state.position,
        failure_reason,
    };
    Ok(EpisodeRun {
        log,
        decision,
        termination,
    })
}
