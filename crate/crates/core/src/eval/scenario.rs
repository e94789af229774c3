//! Seeded scenario generation.
//!
//! Every spec is checked against the oracle before it is returned: the
//! full script set must ground the gold object, and for joint specs no
//! strict subset of the gold and support scripts may.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::words::WORDS;
use super::{AcquisitionScript, EvalError, EvalSetup, ObjectMove, ScenarioKind, ScenarioSpec, ScriptRole};
use crate::agent::{AgentError, OraclePlanner};
use crate::distill::{memorize_all, Distiller};
use crate::encoder::{fnv1a64, Encoder};
use crate::episode::{EpisodeLog, Fact, Step};
use crate::memory::MemoryGraph;
use crate::retrieval::{retrieve, RetrievalOptions};
use crate::world::{gen_world, ActionLow, AgentState, Heading, ObjectSpec, Point, World, WorldParams};

pub const DEFAULT_FILLER_COUNT: usize = 12;
const MAX_ATTEMPTS: usize = 50;
/// Object categories drawn on by scenario generation.
pub const CATEGORIES: [&str; 20] = [
    "mug", "backpack", "shoes", "umbrella", "laptop", "vase", "lamp", "book", "bottle", "pillow", "towel",
    "jacket", "headphones", "camera", "wallet", "watch", "scarf", "plant", "keys", "glasses",
];
/// Eval-stage objects and starts keep this far from their acquisition
/// positions and from each other.
const MIN_SHIFT_M: f64 = 1.0;
const OBJECT_MARGIN_CELLS: usize = 4;
const START_MARGIN_CELLS: usize = 2;

/// `n` specs of one kind. Deterministic in `(seed, kind, n)`; spec `i` does
/// not depend on `n`.
pub fn gen_scenarios(
    seed: u64,
    kind: ScenarioKind,
    n: usize,
    filler_count: usize,
) -> Result<Vec<ScenarioSpec>, EvalError> {
    if n == 0 {
        return Err(EvalError::Generation("n must be >= 1".into()));
    }
    let filler_categories = filler_count.div_ceil(2);
    if 3 + filler_categories > CATEGORIES.len() {
        return Err(EvalError::Generation(format!(
            "filler count {filler_count} needs more categories than the {} available",
            CATEGORIES.len()
        )));
    }
    (0..n)
        .map(|i| {
            let scenario_id = format!("{kind}-s{seed}-{i:03}");
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(scenario_id.as_bytes()));
            let mut last = String::new();
            for _ in 0..MAX_ATTEMPTS {
                match gen_one(&mut rng, kind, &scenario_id, filler_count) {
                    Ok(spec) => return Ok(spec),
                    Err(e) => last = e,
                }
            }
            Err(EvalError::Generation(format!(
                "{scenario_id}: no valid draw in {MAX_ATTEMPTS} attempts ({last})"
            )))
        })
        .collect()
}

struct Planned {
    role: ScriptRole,
    target: String,
    category: String,
    key: String,
    value: String,
}

struct Vocabulary(Vec<&'static str>);

impl Vocabulary {
    fn word(&mut self) -> Result<String, String> {
        self.0.pop().map(str::to_string).ok_or_else(|| "vocabulary exhausted".to_string())
    }

    fn phrase(&mut self) -> Result<String, String> {
        Ok(format!("{} {}", self.word()?, self.word()?))
    }
}

fn instance(category: &str, k: usize) -> String {
    format!("{category}_{:02}", k + 1)
}

fn random_heading(rng: &mut ChaCha8Rng) -> Heading {
    Heading::all().nth(rng.gen_range(0..12)).expect("twelve headings")
}

fn random_start(rng: &mut ChaCha8Rng, world: &World, avoid: &[Point]) -> Result<AgentState, String> {
    for _ in 0..200 {
        let room = rng.gen_range(0..world.rooms().len()) as u16;
        let cells = world.interior_cells(room, START_MARGIN_CELLS);
        let Some(cell) = cells.choose(rng) else {
            continue;
        };
        let p = World::cell_center(*cell);
        if avoid.iter().all(|a| a.distance(&p) >= MIN_SHIFT_M) {
            return Ok(AgentState::new(p, random_heading(rng)));
        }
    }
    Err("no admissible start position".into())
}

fn gen_one(
    rng: &mut ChaCha8Rng,
    kind: ScenarioKind,
    scenario_id: &str,
    filler_count: usize,
) -> Result<ScenarioSpec, String> {
    let mut cats = CATEGORIES.to_vec();
    cats.shuffle(rng);
    let joint3 = kind == ScenarioKind::CompositionalJoint && rng.gen_bool(0.5);
    let n_bridges = match kind {
        ScenarioKind::CompositionalJoint if joint3 => 2,
        ScenarioKind::CompositionalJoint => 1,
        _ => 0,
    };
    let gold_count = match kind {
        ScenarioKind::Distractor => 3,
        ScenarioKind::CompositionalJoint if joint3 => 3,
        _ => 2,
    };
    let gold_cat = cats[0];
    let bridge_cats = &cats[1..1 + n_bridges];
    let filler_cats = &cats[1 + n_bridges..1 + n_bridges + filler_count.div_ceil(2)];

    let mut objects = vec![ObjectSpec {
        category: gold_cat.to_string(),
        count: gold_count,
    }];
    objects.extend(bridge_cats.iter().map(|c| ObjectSpec {
        category: c.to_string(),
        count: 1,
    }));
    let mut remaining = filler_count;
    for c in filler_cats {
        let count = remaining.min(2);
        remaining -= count;
        objects.push(ObjectSpec {
            category: c.to_string(),
            count,
        });
    }
    let params = WorldParams {
        seed: rng.gen(),
        n_rooms: rng.gen_range(5..=8),
        objects,
    };
    let world = gen_world(&params).map_err(|e| e.to_string())?;

    let g = rng.gen_range(0..gold_count);
    let gold = instance(gold_cat, g);
    let others: Vec<String> = (0..gold_count).filter(|k| *k != g).map(|k| instance(gold_cat, k)).collect();
    let mut vocab = Vocabulary({
        let mut w = WORDS.to_vec();
        w.shuffle(rng);
        w
    });
    let mut plan: Vec<Planned> = Vec::new();
    let mut push = |role, target: &str, category: &str, key: String, value: String| {
        plan.push(Planned {
            role,
            target: target.to_string(),
            category: category.to_string(),
            key,
            value,
        })
    };
    let instruction;
    let mut decoys_from = 0;
    match kind {
        ScenarioKind::CompositionalSingle | ScenarioKind::Distractor => {
            let key = vocab.phrase()?;
            push(ScriptRole::Gold, &gold, gold_cat, key.clone(), vocab.phrase()?);
            instruction = format!("bring the {gold_cat} for my {key}");
        }
        ScenarioKind::CompositionalJoint if !joint3 => {
            let (c1, c2, x, y) = (vocab.word()?, vocab.word()?, vocab.word()?, vocab.word()?);
            let bridge = instance(bridge_cats[0], 0);
            push(ScriptRole::Support, &bridge, bridge_cats[0], format!("{c1} {c2}"), format!("{x} {y}"));
            push(ScriptRole::Gold, &gold, gold_cat, format!("{x} {y}"), vocab.phrase()?);
            let shared = if rng.gen_bool(0.5) { &c1 } else { &c2 };
            push(ScriptRole::Decoy, &others[0], gold_cat, format!("{shared} {}", vocab.word()?), vocab.phrase()?);
            decoys_from = 1;
            instruction = format!("bring the {gold_cat} for my {c1} {c2}");
        }
        ScenarioKind::CompositionalJoint => {
            let cue1 = (vocab.word()?, vocab.word()?);
            let cue2 = (vocab.word()?, vocab.word()?);
            let (x1, p1, x2, p2) = (vocab.word()?, vocab.word()?, vocab.word()?, vocab.word()?);
            let b1 = instance(bridge_cats[0], 0);
            let b2 = instance(bridge_cats[1], 0);
            push(ScriptRole::Support, &b1, bridge_cats[0], format!("{} {}", cue1.0, cue1.1), format!("{x1} {p1}"));
            push(ScriptRole::Support, &b2, bridge_cats[1], format!("{} {}", cue2.0, cue2.1), format!("{x2} {p2}"));
            push(ScriptRole::Gold, &gold, gold_cat, format!("{x1} {x2}"), vocab.phrase()?);
            push(ScriptRole::Decoy, &others[0], gold_cat, format!("{x1} {}", cue2.0), vocab.phrase()?);
            push(ScriptRole::Decoy, &others[1], gold_cat, format!("{x2} {}", cue1.0), vocab.phrase()?);
            decoys_from = 2;
            instruction = format!(
                "bring the {gold_cat} for my {} {} and {} {}",
                cue1.0, cue1.1, cue2.0, cue2.1
            );
        }
        ScenarioKind::TemporalContext => {
            let key = vocab.phrase()?;
            let (old, new) = (vocab.phrase()?, vocab.phrase()?);
            push(ScriptRole::Outdated, &gold, gold_cat, key.clone(), old);
            push(ScriptRole::Gold, &gold, gold_cat, key.clone(), new.clone());
            instruction = format!("bring the {gold_cat} for my {key} with the {new}");
        }
        ScenarioKind::TemporalObject => {
            let (key, value) = (vocab.phrase()?, vocab.phrase()?);
            push(ScriptRole::Outdated, &others[0], gold_cat, key.clone(), value.clone());
            push(ScriptRole::Gold, &gold, gold_cat, key.clone(), value);
            decoys_from = 1;
            instruction = format!("bring the {gold_cat} for my {key}");
        }
    }
    for d in &others[decoys_from..] {
        push(ScriptRole::Decoy, d, gold_cat, vocab.phrase()?, vocab.phrase()?);
    }
    for spec in &params.objects[1 + n_bridges..] {
        for k in 0..spec.count {
            let id = instance(&spec.category, k);
            push(ScriptRole::Filler, &id, &spec.category, vocab.phrase()?, vocab.phrase()?);
        }
    }

    let mut timestamps: Vec<u64> = (1..=plan.len() as u64).collect();
    timestamps.shuffle(rng);
    if let (Some(o), Some(gi)) = (
        plan.iter().position(|p| p.role == ScriptRole::Outdated),
        plan.iter().position(|p| p.role == ScriptRole::Gold),
    ) {
        if timestamps[o] > timestamps[gi] {
            timestamps.swap(o, gi);
        }
    }

    let mut scripts = Vec::with_capacity(plan.len());
    let mut starts = Vec::with_capacity(plan.len());
    for (j, (p, ts)) in plan.iter().zip(&timestamps).enumerate() {
        let object = world
            .object(&p.target)
            .ok_or_else(|| format!("world lacks {}", p.target))?;
        let start = random_start(rng, &world, &[])?;
        starts.push(start.position);
        scripts.push(AcquisitionScript {
            episode_id: format!("{scenario_id}-a{:02}", j + 1),
            role: p.role,
            instruction: format!(
                "bring my {} {} for my {} with the {}",
                p.category, p.target, p.key, p.value
            ),
            facts: vec![Fact::new(p.key.clone(), p.value.clone())],
            target_object_id: p.target.clone(),
            target_category: p.category.clone(),
            timestamp: *ts,
            object_position: object.position,
            agent_start: start,
        });
    }

    let object_moves = move_objects(rng, &world)?;
    let agent_start = random_start(rng, &world, &starts)?;
    let spec = ScenarioSpec {
        scenario_id: scenario_id.to_string(),
        kind,
        world: params,
        scripts,
        eval: EvalSetup {
            instruction,
            gold_object_id: gold,
            gold_category: gold_cat.to_string(),
            agent_start,
            object_moves,
            timestamp: plan.len() as u64 + 1,
        },
        filler_count,
    };
    verify(&spec)?;
    Ok(spec)
}

/// New positions in the same room, away from the old position and from
/// objects already moved.
fn move_objects(rng: &mut ChaCha8Rng, world: &World) -> Result<Vec<ObjectMove>, String> {
    let mut moves: Vec<ObjectMove> = Vec::new();
    for o in world.objects() {
        let room = world
            .cell_of(o.position)
            .and_then(|c| world.label(c))
            .ok_or_else(|| format!("{} is not in a room", o.object_id))?;
        let options: Vec<Point> = world
            .interior_cells(room, OBJECT_MARGIN_CELLS)
            .into_iter()
            .map(World::cell_center)
            .filter(|p| p.distance(&o.position) >= MIN_SHIFT_M)
            .filter(|p| moves.iter().all(|m| m.position.distance(p) >= MIN_SHIFT_M))
            .collect();
        let position = *options
            .choose(rng)
            .ok_or_else(|| format!("no room to move {}", o.object_id))?;
        moves.push(ObjectMove {
            object_id: o.object_id.clone(),
            position,
        });
    }
    Ok(moves)
}

fn verify(spec: &ScenarioSpec) -> Result<(), String> {
    let all: Vec<&AcquisitionScript> = spec.scripts.iter().collect();
    let gold = &spec.eval.gold_object_id;
    let check = |scripts: &[&AcquisitionScript]| {
        grounds_gold(scripts, &spec.eval.instruction, gold).map_err(|e| e.to_string())
    };
    if !check(&all)? {
        return Err("the oracle does not ground gold from the full script set".into());
    }
    if spec.kind == ScenarioKind::CompositionalJoint {
        let core: Vec<&AcquisitionScript> = all
            .iter()
            .copied()
            .filter(|s| matches!(s.role, ScriptRole::Gold | ScriptRole::Support))
            .collect();
        let rest: Vec<&AcquisitionScript> = all
            .iter()
            .copied()
            .filter(|s| !matches!(s.role, ScriptRole::Gold | ScriptRole::Support))
            .collect();
        for mask in 0..(1u32 << core.len()) - 1 {
            let mut subset = rest.clone();
            subset.extend(core.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| *s));
            if check(&subset)? {
                return Err("gold is identifiable without every joint script".into());
            }
        }
    }
    Ok(())
}

/// Whether the oracle grounds `gold` from a graph memorizing only the
/// statements of `scripts`.
pub fn grounds_gold(scripts: &[&AcquisitionScript], instruction: &str, gold: &str) -> Result<bool, EvalError> {
    let logs: Vec<EpisodeLog> = scripts
        .iter()
        .map(|s| EpisodeLog {
            episode_id: s.episode_id.clone(),
            timestamp: s.timestamp,
            instruction: s.instruction.clone(),
            facts: s.facts.clone(),
            reference_feature: None,
            target_object_id: s.target_object_id.clone(),
            target_category: s.target_category.clone(),
            trajectory: vec![Step {
                position: s.agent_start.position,
                heading: s.agent_start.heading,
                action: ActionLow::Stop,
                room: String::new(),
                visible_object_ids: vec![],
            }],
            success: false,
            final_position: s.agent_start.position,
            failure_reason: None,
        })
        .collect();
    let encoder = Encoder::builtin();
    let mut graph = MemoryGraph::new();
    memorize_all(&logs, &mut graph, &encoder, &Distiller::builtin())?;
    let result = retrieve(&graph, &encoder, instruction, &RetrievalOptions::default())?;
    match OraclePlanner::ground_polar(&result) {
        Ok(d) => Ok(d.chosen_object_id == gold),
        Err(AgentError::GroundingFailed(_)) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_specs() {
        for kind in ScenarioKind::ALL {
            let a = gen_scenarios(7, kind, 3, DEFAULT_FILLER_COUNT).unwrap();
            let b = gen_scenarios(7, kind, 3, DEFAULT_FILLER_COUNT).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, gen_scenarios(8, kind, 3, DEFAULT_FILLER_COUNT).unwrap());
        }
    }

    #[test]
    fn spec_prefix_is_stable_in_n() {
        let a = gen_scenarios(1, ScenarioKind::Distractor, 2, DEFAULT_FILLER_COUNT).unwrap();
        let b = gen_scenarios(1, ScenarioKind::Distractor, 4, DEFAULT_FILLER_COUNT).unwrap();
        assert_eq!(a[..], b[..2]);
    }

    #[test]
    fn instructions_hide_the_object_id() {
        for kind in ScenarioKind::ALL {
            for s in gen_scenarios(3, kind, 5, DEFAULT_FILLER_COUNT).unwrap() {
                assert!(!s.eval.instruction.contains(&s.eval.gold_object_id));
                assert!(!s.eval.instruction.contains('_'));
                let fillers = s.scripts.iter().filter(|x| x.role == ScriptRole::Filler).count();
                assert_eq!(fillers, DEFAULT_FILLER_COUNT);
            }
        }
    }

    #[test]
    fn invalid_requests_are_errors() {
        assert!(gen_scenarios(0, ScenarioKind::Distractor, 0, 12).is_err());
        assert!(gen_scenarios(0, ScenarioKind::Distractor, 1, 40).is_err());
    }
}
