use proptest::prelude::*;

use polar_core::agent::{GroundingContext, OraclePlanner, PlannerAdapter, RunConfig, Termination};
use polar_core::distill::Distiller;
use polar_core::encoder::Encoder;
use polar_core::eval::{
    aggregate, brute_force_spl, evaluate, gen_scenarios, memorize_logs, prepare, raw_sample, render_table,
    EpisodeRow, EvalMode, EvalOptions, MetricsFile, RecallRow, ScenarioKind, ScriptRole, SpecData,
    DEFAULT_FILLER_COUNT,
};
use polar_core::memory::{GraphConfig, MemoryGraph, NodeId};
use polar_core::retrieval::{recall_semantic, retrieve, retrieve_semantic, RetrievalOptions};
use polar_core::world::build_scene_graph;

fn prepared(seed: u64, kind: ScenarioKind, n: usize) -> Vec<SpecData> {
    let enc = Encoder::builtin();
    gen_scenarios(seed, kind, n, DEFAULT_FILLER_COUNT)
        .unwrap()
        .iter()
        .map(|s| prepare(s, &OraclePlanner::default(), &enc, &Distiller::builtin(), GraphConfig::default(), &RunConfig::default()).unwrap())
        .collect()
}

fn row(success: bool, p: f64, l: f64) -> EpisodeRow {
    EpisodeRow {
        scenario_id: "s".into(),
        kind: ScenarioKind::Distractor,
        success,
        path_length_m: p,
        shortest_path_m: l,
        steps: 1,
        grounded_object_id: None,
        grounding_correct: success,
        category_match: false,
        recall: RecallRow { semantic: None, bm25: false, dense: false },
        termination: Termination::Stopped,
    }
}

proptest! {
    #[test]
    fn spl_matches_brute_force_and_never_exceeds_sr(
        episodes in prop::collection::vec((any::<bool>(), 0.0f64..80.0, 0.0f64..60.0), 1..100),
    ) {
        let rows: Vec<EpisodeRow> = episodes.iter().map(|&(s, p, l)| row(s, p, l)).collect();
        let r = aggregate(EvalMode::Polar, ScenarioKind::Distractor, 5, rows);
        let (sr, spl) = (r.sr.unwrap(), r.spl.unwrap());
        prop_assert!(spl <= sr + 1e-12);
        prop_assert!((spl - brute_force_spl(&episodes)).abs() <= 1e-9);
    }
}

#[test]
fn every_mode_keeps_spl_below_sr_and_cm_apart_from_success() {
    let data = prepared(1, ScenarioKind::Distractor, 8);
    let enc = Encoder::builtin();
    let planner = OraclePlanner::new(enc.clone());
    for mode in EvalMode::ALL {
        for r in evaluate(&data, mode, &enc, &planner, &EvalOptions::default()).unwrap() {
            assert!(r.spl.unwrap() <= r.sr.unwrap() + 1e-12, "{mode}");
            assert!(r.rows.iter().all(|x| !(x.success && x.category_match)), "{mode}");
            assert!(r.rows.iter().all(|x| x.steps <= 700));
        }
    }
}

#[test]
fn raw_samples_hold_every_gold_episode() {
    for d in prepared(2, ScenarioKind::TemporalContext, 4).iter().chain(&prepared(2, ScenarioKind::CompositionalJoint, 4)) {
        for size in [3, 15, 40] {
            let s = raw_sample(&d.spec, &d.logs, size, 9);
            assert_eq!(s.len(), size.min(d.logs.len()), "{} size {size}", d.spec.scenario_id);
            for g in d.spec.gold_episode_ids() {
                assert!(s.iter().any(|l| l.episode_id == g));
            }
            assert_eq!(s, raw_sample(&d.spec, &d.logs, size, 9));
        }
    }
}

#[test]
fn joint_specs_need_every_joint_episode() {
    let enc = Encoder::builtin();
    let planner = OraclePlanner::new(enc.clone());
    for d in prepared(4, ScenarioKind::CompositionalJoint, 6) {
        let scene = build_scene_graph(&d.world);
        let ground = |logs: &[polar_core::episode::EpisodeLog]| {
            let graph = memorize_logs(logs, &enc, &Distiller::builtin(), GraphConfig::default()).unwrap();
            let result = retrieve(&graph, &enc, &d.spec.eval.instruction, &RetrievalOptions::default()).unwrap();
            planner
                .ground(&d.spec.eval.instruction, &GroundingContext::Polar(result), &scene)
                .map(|g| g.chosen_object_id)
                .ok()
        };
        let gold = Some(d.spec.eval.gold_object_id.clone());
        assert_eq!(ground(&d.logs), gold, "{}", d.spec.scenario_id);
        let core: Vec<&str> = d
            .spec
            .scripts
            .iter()
            .filter(|s| matches!(s.role, ScriptRole::Gold | ScriptRole::Support))
            .map(|s| s.episode_id.as_str())
            .collect();
        assert!(core.len() >= 2);
        for dropped in core {
            let subset: Vec<_> = d.logs.iter().filter(|l| l.episode_id != dropped).cloned().collect();
            assert_ne!(ground(&subset), gold, "{} without {dropped}", d.spec.scenario_id);
        }
    }
}

#[test]
fn retrieval_lists_grow_by_prefix_and_recall_is_monotone() {
    let enc = Encoder::builtin();
    for d in prepared(0, ScenarioKind::CompositionalJoint, 5) {
        let graph = d.graph.as_ref().unwrap();
        let query = enc.encode(&d.spec.eval.instruction).unwrap();
        let mut previous = Vec::new();
        let mut hit = false;
        for k in 1..=12 {
            let opts = RetrievalOptions { k, ..RetrievalOptions::default() };
            let hits = retrieve_semantic(graph, &query, &opts).unwrap();
            assert_eq!(&hits[..previous.len()], &previous[..]);
            assert_eq!(hits, retrieve_semantic(graph, &query, &opts).unwrap());
            let now = recall_semantic(&retrieve(graph, &enc, &d.spec.eval.instruction, &opts).unwrap(), &d.spec.eval.gold_object_id);
            assert!(now || !hit, "recall dropped at k={k}");
            hit = now;
            previous = hits;
        }
    }
}

#[test]
fn superseded_statements_are_never_retrieved() {
    let enc = Encoder::builtin();
    for d in prepared(5, ScenarioKind::TemporalContext, 5) {
        let graph: &MemoryGraph = d.graph.as_ref().unwrap();
        let inactive: Vec<&NodeId> = graph
            .edges()
            .iter()
            .filter(|e| !e.active && !graph.edges().iter().any(|f| f.active && f.dst == e.dst))
            .map(|e| &e.dst)
            .collect();
        assert!(!inactive.is_empty(), "{} has no superseded statement", d.spec.scenario_id);
        let query = enc.encode(&d.spec.eval.instruction).unwrap();
        let all = RetrievalOptions { k: 1000, ..RetrievalOptions::default() };
        let hits = retrieve_semantic(graph, &query, &all).unwrap();
        assert!(hits.iter().all(|h| !inactive.iter().any(|n| n.as_str() == h.node_id)));
        let with_history = RetrievalOptions { active_only: false, ..all };
        let hits = retrieve_semantic(graph, &query, &with_history).unwrap();
        assert!(inactive.iter().all(|n| hits.iter().any(|h| h.node_id == n.as_str())));
    }
}

#[test]
fn metrics_files_render_identically_twice() {
    let data = prepared(6, ScenarioKind::CompositionalSingle, 4);
    let enc = Encoder::builtin();
    let planner = OraclePlanner::new(enc.clone());
    let render = || {
        let reports = evaluate(&data, EvalMode::Polar, &enc, &planner, &EvalOptions::default()).unwrap();
        let file = MetricsFile { format_version: 1, seed: 6, reports };
        (serde_json::to_string_pretty(&file).unwrap(), render_table(&file.reports))
    };
    let (a, b) = (render(), render());
    assert_eq!(a, b);
    let back: MetricsFile = serde_json::from_str(&a.0).unwrap();
    assert_eq!(render_table(&back.reports), a.1);
    assert_eq!(a.1.lines().count(), 2);
}
