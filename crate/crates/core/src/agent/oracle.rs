//! Deterministic grounding rules.

use std::collections::{BTreeMap, BTreeSet};

use super::{AgentError, GroundingContext, GroundingDecision, GroundingSource, PlannerAdapter};
use crate::distill::parse_statement;
use crate::encoder::{cosine, Encoder};
use crate::episode::{raw_document, EpisodeLog};
use crate::retrieval::{CandidateObject, EpisodicMemory, RetrievalResult};
use crate::world::SceneGraph;

const STOPWORDS: [&str; 11] = [
    "user", "refers", "to", "the", "a", "my", "for", "with", "and", "bring", "=",
];
const TIE_EPS: f64 = 1e-9;

/// Lowercased whitespace tokens with edge punctuation and stopwords removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
                .to_lowercase()
        })
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// The room suggested by the newest memory that names one.
///
/// Understands the episodic rendering (`found_in=`), the summary form
/// (`summary: visited a > b; succeeded`) and raw trajectories (the room
/// that appears most often).
pub fn parse_prior_room(memories: &[EpisodicMemory]) -> Option<String> {
    memories.iter().find_map(|m| parse_one(&m.text))
}

fn parse_one(text: &str) -> Option<String> {
    if text.starts_with("outcome=") {
        if !text.starts_with("outcome=success") {
            return None;
        }
        return text
            .split(';')
            .find_map(|part| part.trim().strip_prefix("found_in="))
            .filter(|r| *r != "none")
            .map(str::to_string);
    }
    if let Some(rest) = text.strip_prefix("summary: visited ") {
        let (rooms, outcome) = rest.split_once(';')?;
        if outcome.trim() != "succeeded" {
            return None;
        }
        return rooms.split(" > ").last().map(|r| r.trim().to_string());
    }
    if let Some(rest) = text.strip_prefix("trajectory: ") {
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (i, room) in tokens.iter().step_by(2).enumerate() {
            let e = counts.entry(room).or_insert((0, i));
            e.0 += 1;
        }
        return counts
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(r, _)| r.to_string());
    }
    None
}

fn category_only(
    instruction: &str,
    categories: &[String],
    encoder: &Encoder,
) -> Result<GroundingDecision, AgentError> {
    if categories.is_empty() {
        return Err(AgentError::GroundingFailed("the world has no object categories".into()));
    }
    let tokens = content_tokens(instruction);
    let parsed = tokens.iter().find(|t| categories.contains(t)).cloned();
    let (category, rationale) = match parsed {
        Some(c) => (c, "category named in the instruction".to_string()),
        None => {
            let q = encoder
                .encode(instruction)
                .map_err(|e| AgentError::GroundingFailed(e.to_string()))?;
            let mut best: Option<(f64, &String)> = None;
            for c in categories {
                let e = encoder
                    .encode(c)
                    .map_err(|e| AgentError::GroundingFailed(e.to_string()))?;
                let s = cosine(&q, &e).map_err(|e| AgentError::GroundingFailed(e.to_string()))?;
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, c));
                }
            }
            let (_, c) = best.expect("categories is non-empty");
            (c.clone(), "most instruction-similar category".to_string())
        }
    };
    Ok(GroundingDecision {
        chosen_object_id: String::new(),
        chosen_category: category,
        prior_room: None,
        rationale,
        source: GroundingSource::None,
    })
}

fn explicit(object_id: &str, category: &str) -> GroundingDecision {
    GroundingDecision {
        chosen_object_id: object_id.to_string(),
        chosen_category: category.to_string(),
        prior_room: None,
        rationale: "target given explicitly".into(),
        source: GroundingSource::Explicit,
    }
}

/// Scores candidates by summed statement similarity plus composition,
/// breaking ties by recency.
#[derive(Debug, Clone, Default)]
pub struct OraclePlanner {
    encoder: Encoder,
}

impl OraclePlanner {
    pub fn new(encoder: Encoder) -> Self {
        Self { encoder }
    }

    /// Per-candidate scores in candidate order, restricted to candidates of
    /// a category named in the instruction when there are any.
    ///
    /// A candidate's score is the sum of its statements' similarities, plus
    /// the similarity of every retrieved statement held only by another
    /// candidate whose value shares a token with one of this candidate's
    /// keys.
    pub fn score_candidates(result: &RetrievalResult) -> Vec<(&CandidateObject, f64)> {
        let wanted: BTreeSet<String> = content_tokens(&result.instruction).into_iter().collect();
        let named: Vec<&CandidateObject> = result
            .candidates
            .iter()
            .filter(|c| wanted.contains(&c.category.to_lowercase()))
            .collect();
        let pool: Vec<&CandidateObject> = if named.is_empty() {
            result.candidates.iter().collect()
        } else {
            named
        };
        let key_tokens = |c: &CandidateObject| -> BTreeSet<String> {
            c.statements
                .iter()
                .filter_map(|s| parse_statement(&s.text))
                .flat_map(|(key, _)| content_tokens(key))
                .collect()
        };
        pool.into_iter()
            .map(|x| {
                let own: f64 = x.statements.iter().map(|s| s.score).sum();
                let x_tokens = key_tokens(x);
                let x_nodes: BTreeSet<&str> = x.statements.iter().map(|s| s.node_id.as_str()).collect();
                let mut inherited = 0.0;
                let mut counted: BTreeSet<&str> = BTreeSet::new();
                for y in result.candidates.iter().filter(|y| y.object_id != x.object_id) {
                    for s in y.statements.iter().filter(|s| s.retrieved) {
                        if x_nodes.contains(s.node_id.as_str()) || counted.contains(s.node_id.as_str()) {
                            continue;
                        }
                        let Some((_, value)) = parse_statement(&s.text) else {
                            continue;
                        };
                        if content_tokens(value).iter().any(|t| x_tokens.contains(t)) {
                            inherited += s.score;
                            counted.insert(&s.node_id);
                        }
                    }
                }
                (x, own + inherited)
            })
            .collect()
    }

    pub fn ground_polar(result: &RetrievalResult) -> Result<GroundingDecision, AgentError> {
        let scored = Self::score_candidates(result);
        let latest = |c: &CandidateObject| c.statements.iter().map(|s| s.timestamp).max().unwrap_or(0);
        let best = scored
            .iter()
            .copied()
            .reduce(|best, cur| {
                let (b, bs) = best;
                let (c, cs) = cur;
                if cs > bs + TIE_EPS {
                    cur
                } else if (cs - bs).abs() <= TIE_EPS {
                    match latest(c).cmp(&latest(b)) {
                        std::cmp::Ordering::Greater => cur,
                        std::cmp::Ordering::Less => best,
                        std::cmp::Ordering::Equal if c.object_id < b.object_id => cur,
                        std::cmp::Ordering::Equal => best,
                    }
                } else {
                    best
                }
            })
            .ok_or_else(|| AgentError::GroundingFailed("no retrieved candidates".into()))?;
        let (c, score) = best;
        Ok(GroundingDecision {
            chosen_object_id: c.object_id.clone(),
            chosen_category: c.category.clone(),
            prior_room: parse_prior_room(&c.episodic_memories),
            rationale: format!("score {score:.4} over {} candidates", scored.len()),
            source: GroundingSource::Polar,
        })
    }
}

impl PlannerAdapter for OraclePlanner {
    fn ground(
        &self,
        instruction: &str,
        context: &GroundingContext,
        _scene: &SceneGraph,
    ) -> Result<GroundingDecision, AgentError> {
        match context {
            GroundingContext::Polar(result) => Self::ground_polar(result),
            GroundingContext::Raw(episodes) => NaiveMatcher::match_episodes(instruction, episodes),
            GroundingContext::Empty { categories } => category_only(instruction, categories, &self.encoder),
            GroundingContext::Explicit { object_id, category } => Ok(explicit(object_id, category)),
        }
    }
}

/// Token-overlap grounding over raw interaction logs.
#[derive(Debug, Clone, Default)]
pub struct NaiveMatcher {
    encoder: Encoder,
}

impl NaiveMatcher {
    pub fn new(encoder: Encoder) -> Self {
        Self { encoder }
    }

    /// The episode sharing the most distinct tokens with the instruction;
    /// ties go to the later episode, then the smaller id.
    pub fn match_episodes(instruction: &str, episodes: &[EpisodeLog]) -> Result<GroundingDecision, AgentError> {
        let wanted: BTreeSet<String> = content_tokens(instruction).into_iter().collect();
        let best = episodes
            .iter()
            .map(|e| {
                let doc: BTreeSet<String> = content_tokens(&raw_document(e)).into_iter().collect();
                (wanted.intersection(&doc).count(), e)
            })
            .max_by(|(a, ea), (b, eb)| {
                a.cmp(b)
                    .then(ea.timestamp.cmp(&eb.timestamp))
                    .then_with(|| eb.episode_id.cmp(&ea.episode_id))
            })
            .ok_or_else(|| AgentError::GroundingFailed("no raw interactions".into()))?;
        let (overlap, e) = best;
        Ok(GroundingDecision {
            chosen_object_id: e.target_object_id.clone(),
            chosen_category: e.target_category.clone(),
            prior_room: None,
            rationale: format!("{overlap} shared tokens with {}", e.episode_id),
            source: GroundingSource::Raw,
        })
    }
}

impl PlannerAdapter for NaiveMatcher {
    fn ground(
        &self,
        instruction: &str,
        context: &GroundingContext,
        _scene: &SceneGraph,
    ) -> Result<GroundingDecision, AgentError> {
        match context {
            GroundingContext::Raw(episodes) => Self::match_episodes(instruction, episodes),
            GroundingContext::Polar(result) => {
                let wanted: BTreeSet<String> = content_tokens(instruction).into_iter().collect();
                let best = result
                    .candidates
                    .iter()
                    .map(|c| {
                        let toks: BTreeSet<String> =
                            c.statements.iter().flat_map(|s| content_tokens(&s.text)).collect();
                        (wanted.intersection(&toks).count(), c)
                    })
                    .max_by(|(a, ca), (b, cb)| a.cmp(b).then_with(|| cb.object_id.cmp(&ca.object_id)))
                    .ok_or_else(|| AgentError::GroundingFailed("no retrieved candidates".into()))?;
                Ok(GroundingDecision {
                    chosen_object_id: best.1.object_id.clone(),
                    chosen_category: best.1.category.clone(),
                    prior_room: None,
                    rationale: format!("{} shared tokens", best.0),
                    source: GroundingSource::Polar,
                })
            }
            GroundingContext::Empty { categories } => category_only(instruction, categories, &self.encoder),
            GroundingContext::Explicit { object_id, category } => Ok(explicit(object_id, category)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::CandidateStatement;

    fn stmt(node: &str, text: &str, score: f64, ts: u64, retrieved: bool) -> CandidateStatement {
        CandidateStatement {
            node_id: node.into(),
            text: text.into(),
            score,
            timestamp: ts,
            active: true,
            retrieved,
        }
    }

    fn cand(id: &str, cat: &str, statements: Vec<CandidateStatement>, memories: &[&str]) -> CandidateObject {
        CandidateObject {
            object_id: id.into(),
            category: cat.into(),
            statements,
            episodic_memories: memories
                .iter()
                .enumerate()
                .map(|(i, t)| EpisodicMemory {
                    episode_id: format!("e{i}"),
                    timestamp: 10 - i as u64,
                    text: t.to_string(),
                })
                .collect(),
            instructions: vec![],
        }
    }

    fn result(instruction: &str, candidates: Vec<CandidateObject>) -> RetrievalResult {
        RetrievalResult {
            instruction: instruction.into(),
            hits: vec![],
            candidates,
        }
    }

    #[test]
    fn single_candidate_with_prior_room() {
        let r = result(
            "bring the mug for my morning brew",
            vec![cand(
                "mug_01",
                "mug",
                vec![stmt("s1", "user: morning brew = tall cup refers to mug mug_01", 0.8, 1, true)],
                &["outcome=success; searched=hall,kitchen; found_in=kitchen; length=7.0m"],
            )],
        );
        let d = OraclePlanner::ground_polar(&r).unwrap();
        assert_eq!(d.chosen_object_id, "mug_01");
        assert_eq!(d.prior_room.as_deref(), Some("kitchen"));
    }

    #[test]
    fn equal_scores_pick_the_newer_assignment() {
        let s = "user: trip to-go = day pack refers to backpack bag_01";
        let r = result(
            "bring the backpack for my trip to-go",
            vec![
                cand("bag_01", "backpack", vec![stmt("s1", s, 0.7, 2, true)], &[]),
                cand("bag_02", "backpack", vec![stmt("s1", s, 0.7, 6, true)], &[]),
            ],
        );
        assert_eq!(OraclePlanner::ground_polar(&r).unwrap().chosen_object_id, "bag_02");
    }

    #[test]
    fn composition_through_a_shared_value_token() {
        // The umbrella statement links "rainy commute" to "north door"; the
        // gold mug is keyed by "north door", a decoy mug shares "rainy".
        let r = result(
            "bring the mug for my rainy commute",
            vec![
                cand(
                    "umbrella_01",
                    "umbrella",
                    vec![stmt("s1", "user: rainy commute = north door refers to umbrella umbrella_01", 0.6, 1, true)],
                    &[],
                ),
                cand(
                    "mug_02",
                    "mug",
                    vec![stmt("s3", "user: rainy lunch = green tea refers to mug mug_02", 0.5, 3, true)],
                    &[],
                ),
                cand(
                    "mug_01",
                    "mug",
                    vec![stmt("s2", "user: north door = warm tea refers to mug mug_01", 0.3, 2, true)],
                    &[],
                ),
            ],
        );
        let scores = OraclePlanner::score_candidates(&r);
        // Only mugs are eligible; mug_01 = 0.3 + 0.6.
        assert_eq!(scores.len(), 2);
        let gold = scores.iter().find(|(c, _)| c.object_id == "mug_01").unwrap().1;
        assert!((gold - 0.9).abs() < 1e-12);
        assert_eq!(OraclePlanner::ground_polar(&r).unwrap().chosen_object_id, "mug_01");

        // Without the umbrella's statement the decoy wins.
        let mut r2 = r.clone();
        r2.candidates.remove(0);
        assert_eq!(OraclePlanner::ground_polar(&r2).unwrap().chosen_object_id, "mug_02");
    }

    #[test]
    fn empty_polar_context_fails() {
        assert!(matches!(
            OraclePlanner::ground_polar(&result("x", vec![])),
            Err(AgentError::GroundingFailed(_))
        ));
    }

    #[test]
    fn prior_room_parsing() {
        let m = |t: &str| EpisodicMemory {
            episode_id: "e".into(),
            timestamp: 1,
            text: t.into(),
        };
        assert_eq!(parse_prior_room(&[m("outcome=failure; searched=hall; found_in=none; length=3.0m")]), None);
        assert_eq!(
            parse_prior_room(&[m("summary: visited hall > study; succeeded")]).as_deref(),
            Some("study")
        );
        assert_eq!(parse_prior_room(&[m("summary: visited hall > study; failed")]), None);
        assert_eq!(
            parse_prior_room(&[m("trajectory: hall move_forward study turn_right study stop")]).as_deref(),
            Some("study")
        );
        assert_eq!(parse_prior_room(&[]), None);
    }

    #[test]
    fn no_prior_grounds_category_only() {
        let planner = OraclePlanner::default();
        let scene = SceneGraph {
            rooms: vec![],
            edges: vec![],
        };
        let ctx = GroundingContext::Empty {
            categories: vec!["mug".into(), "shoes".into()],
        };
        let d = planner
            .ground("bring my trip to-go shoes for the walk", &ctx, &scene)
            .unwrap();
        assert_eq!(d.chosen_category, "shoes");
        assert!(d.chosen_object_id.is_empty());
        let d = planner.ground("fetch something mugs", &ctx, &scene).unwrap();
        assert_eq!(d.chosen_category, "mug");
    }

    #[test]
    fn naive_matcher_picks_largest_overlap() {
        let mut a = crate::episode::fixtures::walk(&["kitchen"], &[1], true);
        a.episode_id = "a".into();
        a.instruction = "bring my mug mug_01 for my morning brew".into();
        a.target_object_id = "mug_01".into();
        let mut b = a.clone();
        b.episode_id = "b".into();
        b.instruction = "bring my lamp lamp_01 for my night reading".into();
        b.target_object_id = "lamp_01".into();
        let d = NaiveMatcher::match_episodes("bring the lamp for my night reading", &[a, b]).unwrap();
        assert_eq!(d.chosen_object_id, "lamp_01");
        assert!(d.prior_room.is_none());
    }
}
