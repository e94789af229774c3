//! Episode logs: one instruction, its trajectory and outcome.

use serde::{Deserialize, Serialize};

use crate::world::{ActionLow, Heading, Point, World};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub value: String,
}

impl Fact {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
        }
    }
}

/// The agent's state when it took `action`, and what it saw then.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub position: Point,
    pub heading: Heading,
    pub action: ActionLow,
    pub room: String,
    pub visible_object_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode_id: String,
    pub timestamp: u64,
    pub instruction: String,
    pub facts: Vec<Fact>,
    pub reference_feature: Option<Vec<f64>>,
    pub target_object_id: String,
    pub target_category: String,
    pub trajectory: Vec<Step>,
    pub success: bool,
    pub final_position: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl EpisodeLog {
    pub fn validate(&self) -> Result<(), String> {
        if self.episode_id.is_empty() {
            return Err("episode_id is empty".into());
        }
        if self.trajectory.is_empty() {
            return Err(format!("episode {}: trajectory is empty", self.episode_id));
        }
        if let Some(f) = self.facts.iter().find(|f| f.key.trim().is_empty() || f.value.trim().is_empty()) {
            return Err(format!("episode {}: empty fact {:?}", self.episode_id, f));
        }
        Ok(())
    }

    /// Also checks that `success` agrees with the geometry of `world`.
    pub fn validate_in(&self, world: &World, success_radius_m: f64) -> Result<(), String> {
        self.validate()?;
        let target = world
            .object(&self.target_object_id)
            .ok_or_else(|| format!("unknown target {}", self.target_object_id))?;
        let within = self.final_position.distance(&target.position) <= success_radius_m;
        if self.success && !within {
            return Err(format!(
                "episode {} claims success but ends {:.2} m from its target",
                self.episode_id,
                self.final_position.distance(&target.position)
            ));
        }
        Ok(())
    }

    /// Number of forward moves that changed the agent's position.
    pub fn forward_moves(&self) -> usize {
        self.trajectory
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                s.action == ActionLow::MoveForward && {
                    let next = self
                        .trajectory
                        .get(i + 1)
                        .map_or(self.final_position, |n| n.position);
                    next != s.position
                }
            })
            .count()
    }

    pub fn path_length_m(&self) -> f64 {
        self.forward_moves() as f64 * crate::world::MOVE_DISTANCE
    }

    pub fn steps(&self) -> usize {
        self.trajectory.len()
    }
}

/// Flat trajectory text: `room action` pairs in order.
pub fn render_trajectory(log: &EpisodeLog) -> String {
    let mut out = String::new();
    for s in &log.trajectory {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s.room);
        out.push(' ');
        out.push_str(s.action.name());
    }
    out
}

/// The instruction followed by the flat trajectory.
pub fn raw_document(log: &EpisodeLog) -> String {
    format!("{} {}", log.instruction, render_trajectory(log))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A trajectory that walks the given rooms, spending `moves[i]` forward
    /// moves in room `i`, then stops.
    pub fn walk(rooms: &[&str], moves: &[usize], success: bool) -> EpisodeLog {
        let mut trajectory = Vec::new();
        let mut y = 0.5;
        for (room, n) in rooms.iter().zip(moves) {
            trajectory.push(Step {
                position: Point::new(0.5, y),
                heading: Heading::NORTH,
                action: ActionLow::TurnRight,
                room: room.to_string(),
                visible_object_ids: vec![],
            });
            for _ in 0..*n {
                trajectory.push(Step {
                    position: Point::new(0.5, y),
                    heading: Heading::NORTH,
                    action: ActionLow::MoveForward,
                    room: room.to_string(),
                    visible_object_ids: vec![],
                });
                y += 1.0;
            }
        }
        trajectory.push(Step {
            position: Point::new(0.5, y),
            heading: Heading::NORTH,
            action: ActionLow::Stop,
            room: rooms.last().unwrap().to_string(),
            visible_object_ids: vec![],
        });
        EpisodeLog {
            episode_id: "ep-1".into(),
            timestamp: 1,
            instruction: "bring my backpack bag_02 for my trip to-go with the backpack use".into(),
            facts: vec![Fact::new("trip to-go", "backpack use")],
            reference_feature: None,
            target_object_id: "bag_02".into(),
            target_category: "backpack".into(),
            trajectory,
            success,
            final_position: Point::new(0.5, y),
            failure_reason: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::walk;
    use super::*;

    #[test]
    fn forward_moves_count_only_translations() {
        let mut log = walk(&["kitchen", "hall"], &[3, 2], true);
        assert_eq!(log.forward_moves(), 5);
        // A blocked forward leaves the position unchanged.
        let blocked = log.trajectory[1].clone();
        log.trajectory.insert(1, blocked);
        assert_eq!(log.forward_moves(), 5);
        assert_eq!(log.path_length_m(), 5.0);
    }

    #[test]
    fn trajectory_rendering() {
        let log = walk(&["kitchen"], &[1], true);
        assert_eq!(render_trajectory(&log), "kitchen turn_right kitchen move_forward kitchen stop");
        assert!(raw_document(&log).starts_with("bring my backpack"));
    }

    #[test]
    fn validation() {
        let mut log = walk(&["kitchen"], &[0], true);
        assert!(log.validate().is_ok());
        log.trajectory.clear();
        assert!(log.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let log = walk(&["kitchen", "hall"], &[2, 2], false);
        let text = crate::io::to_jsonl(std::slice::from_ref(&log)).unwrap();
        let back: Vec<EpisodeLog> = crate::io::from_jsonl(&text).unwrap();
        assert_eq!(back, vec![log]);
    }
}
