use std::collections::BTreeMap;

use proptest::prelude::*;

use polar_core::agent::{run_episode, EpisodeTask, GroundingContext, OraclePlanner, RunConfig, Termination};
use polar_core::distill::Distiller;
use polar_core::encoder::Encoder;
use polar_core::eval::{eval_world, gen_scenarios, prepare, ScenarioKind, ScriptRole, DEFAULT_FILLER_COUNT};
use polar_core::memory::GraphConfig;
use polar_core::retrieval::{retrieve, RetrievalOptions};
use polar_core::world::{build_scene_graph, gen_world, AgentState, Heading, ObjectSpec, World, WorldParams};

fn task(gold: &str, start: AgentState, instruction: &str) -> EpisodeTask {
    EpisodeTask {
        episode_id: "t".into(),
        timestamp: 1,
        instruction: instruction.into(),
        facts: vec![],
        gold_object_id: gold.into(),
        start,
    }
}

fn world(seed: u64) -> World {
    gen_world(&WorldParams {
        seed,
        n_rooms: 7,
        objects: ["mug", "lamp", "book"]
            .iter()
            .map(|c| ObjectSpec {
                category: c.to_string(),
                count: 2,
            })
            .collect(),
    })
    .unwrap()
}

fn start(world: &World, pick: usize, h: u16) -> AgentState {
    let cells: Vec<_> = world.free_cells().collect();
    AgentState::new(World::cell_center(cells[pick % cells.len()]), Heading::new(h * 30).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correct_grounding_always_reaches_the_target(seed in 0u64..10_000, pick in any::<usize>(), h in 0u16..12, o in 0usize..6) {
        let w = world(seed);
        let scene = build_scene_graph(&w);
        let target = w.objects()[o].clone();
        let context = GroundingContext::Explicit { object_id: target.object_id.clone(), category: target.category.clone() };
        let t = task(&target.object_id, start(&w, pick, h), "bring it");
        let run = run_episode(&w, &scene, &t, &context, &OraclePlanner::default(), &RunConfig::default()).unwrap();
        prop_assert!(run.log.success, "{} from {:?}", target.object_id, t.start);
        prop_assert_eq!(run.termination, Termination::Stopped);
        prop_assert!(run.log.steps() <= 700);

        let again = run_episode(&w, &scene, &t, &context, &OraclePlanner::default(), &RunConfig::default()).unwrap();
        prop_assert_eq!(again.log, run.log);
    }

    #[test]
    fn the_step_cap_is_never_exceeded(seed in 0u64..10_000, pick in any::<usize>(), cap in 1u32..40) {
        let w = world(seed);
        let scene = build_scene_graph(&w);
        let target = w.objects()[0].clone();
        let context = GroundingContext::Empty { categories: w.categories() };
        let config = RunConfig { max_steps: cap, ..RunConfig::default() };
        let run = run_episode(&w, &scene, &task(&target.object_id, start(&w, pick, 0), "bring the vase"), &context, &OraclePlanner::default(), &config).unwrap();
        prop_assert!(run.log.steps() <= cap as usize);
        if run.termination == Termination::StepCap {
            prop_assert_eq!(run.log.steps(), cap as usize);
        }
    }
}

#[test]
fn no_prior_choice_ignores_which_instance_is_gold() {
    let planner = OraclePlanner::default();
    let config = RunConfig::default();
    let mut by_rank: BTreeMap<usize, usize> = BTreeMap::new();
    let mut gold_hits = 0;
    let seeds = 200;
    let mut m = 0;
    for seed in 0..seeds {
        let spec = gen_scenarios(seed, ScenarioKind::Distractor, 1, DEFAULT_FILLER_COUNT).unwrap().remove(0);
        let w = eval_world(&spec, &gen_world(&spec.world).unwrap()).unwrap();
        let scene = build_scene_graph(&w);
        let mut instances: Vec<_> = w.objects().iter().filter(|o| o.category == spec.eval.gold_category).collect();
        instances.sort_by(|a, b| a.object_id.cmp(&b.object_id));
        m = instances.len();
        let context = GroundingContext::Empty { categories: w.categories() };
        let t = task(&spec.eval.gold_object_id, spec.eval.agent_start, &spec.eval.instruction);
        let run = run_episode(&w, &scene, &t, &context, &planner, &config).unwrap();
        let end = run.log.final_position;
        let reached = instances
            .iter()
            .enumerate()
            .filter(|(_, o)| end.distance(&o.position) <= config.success_radius_m)
            .min_by(|a, b| end.distance(&a.1.position).total_cmp(&end.distance(&b.1.position)));
        if let Some((rank, o)) = reached {
            *by_rank.entry(rank).or_default() += 1;
            if o.object_id == spec.eval.gold_object_id {
                gold_hits += 1;
            }
        }
    }
    assert_eq!(m, 3);
    let reached: usize = by_rank.values().sum();
    assert!(reached >= seeds as usize * 9 / 10, "only {reached} episodes ended at an instance");
    let expected = 1.0 / m as f64;
    for (rank, n) in &by_rank {
        let freq = *n as f64 / reached as f64;
        assert!((freq - expected).abs() <= 0.15, "instance rank {rank} chosen with frequency {freq:.3}");
    }
    let gold_freq = gold_hits as f64 / reached as f64;
    assert!((gold_freq - expected).abs() <= 0.15, "gold chosen with frequency {gold_freq:.3}");
}

#[test]
fn grounding_prefers_the_newest_edge_among_tied_candidates() {
    let enc = Encoder::builtin();
    let planner = OraclePlanner::new(enc.clone());
    for spec in gen_scenarios(3, ScenarioKind::TemporalObject, 20, DEFAULT_FILLER_COUNT).unwrap() {
        let data = prepare(&spec, &planner, &enc, &Distiller::builtin(), GraphConfig::default(), &RunConfig::default()).unwrap();
        let result = retrieve(data.graph.as_ref().unwrap(), &enc, &spec.eval.instruction, &RetrievalOptions::default()).unwrap();
        let decision = polar_core::agent::PlannerAdapter::ground(
            &planner,
            &spec.eval.instruction,
            &GroundingContext::Polar(result.clone()),
            &build_scene_graph(&data.world),
        )
        .unwrap();
        let newest = |id: &str| {
            result.candidate(id).unwrap().statements.iter().map(|s| s.timestamp).max().unwrap_or(0)
        };
        let outdated = spec.scripts.iter().find(|s| s.role == ScriptRole::Outdated).unwrap();
        assert_eq!(decision.chosen_object_id, spec.eval.gold_object_id, "{}", spec.scenario_id);
        if result.candidate(&outdated.target_object_id).is_some() {
            assert!(newest(&decision.chosen_object_id) > newest(&outdated.target_object_id));
        }
    }
}
