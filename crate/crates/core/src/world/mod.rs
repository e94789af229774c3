//! Deterministic 2D house world.
//!
//! Geometry lives on a 0.25 m occupancy grid. Headings are clockwise degrees
//! with 0 pointing along +y, so heading 90 points along +x. The agent moves
//! 1 m per `MOVE_FORWARD` and turns in 30 degree increments.

mod file;
mod gen;
mod grid;
mod scene;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{render_map, WorldFile};
pub use gen::{gen_world, ObjectSpec, WorldParams, FEATURE_DIM, HALL};
pub use grid::{shortest_path_length, DistanceField};
pub(crate) use grid::snap as grid_snap;
pub use scene::{build_scene_graph, SceneGraph, SceneRoom};

pub const RESOLUTION: f64 = 0.25;
pub const MOVE_DISTANCE: f64 = 1.0;
pub const TURN_DEGREES: u16 = 30;
pub const VIEW_RANGE: f64 = 5.0;
pub const VIEW_HALF_ANGLE: f64 = 45.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("malformed world file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Compass bearing from `self` to `other` in degrees, [0, 360).
    pub fn bearing_to(&self, other: &Point) -> f64 {
        let b = (other.x - self.x).atan2(other.y - self.y).to_degrees();
        if b < 0.0 {
            b + 360.0
        } else {
            b
        }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A heading in {0, 30, ..., 330} degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Heading(u16);

// sin of k * 30 degrees, exact where representable.
const SIN_TABLE: [f64; 12] = [
    0.0,
    0.5,
    0.866_025_403_784_438_6,
    1.0,
    0.866_025_403_784_438_6,
    0.5,
    0.0,
    -0.5,
    -0.866_025_403_784_438_6,
    -1.0,
    -0.866_025_403_784_438_6,
    -0.5,
];

impl Heading {
    pub const NORTH: Heading = Heading(0);

    pub fn new(degrees: u16) -> Result<Self, WorldError> {
        if !degrees.is_multiple_of(TURN_DEGREES) || degrees >= 360 {
            return Err(WorldError::InvalidInput(format!(
                "heading {degrees} is not a multiple of 30 in [0, 330]"
            )));
        }
        Ok(Self(degrees))
    }

    pub fn degrees(self) -> u16 {
        self.0
    }

    pub fn turned_left(self) -> Self {
        Self((self.0 + 360 - TURN_DEGREES) % 360)
    }

    pub fn turned_right(self) -> Self {
        Self((self.0 + TURN_DEGREES) % 360)
    }

    /// Unit vector (dx, dy) of this heading.
    pub fn direction(self) -> (f64, f64) {
        let k = (self.0 / TURN_DEGREES) as usize;
        (SIN_TABLE[k], SIN_TABLE[(k + 3) % 12])
    }

    pub fn all() -> impl Iterator<Item = Heading> {
        (0..12).map(|k| Heading(k * TURN_DEGREES))
    }

    /// The single turn that reaches `target` in the fewest turns; right wins
    /// the 180 degree tie. `None` when already aligned.
    pub fn turn_toward(self, target: Heading) -> Option<ActionLow> {
        let diff = (target.0 + 360 - self.0) % 360;
        match diff {
            0 => None,
            d if d <= 180 => Some(ActionLow::TurnRight),
            _ => Some(ActionLow::TurnLeft),
        }
    }

    /// Number of 30 degree turns between two headings.
    pub fn turns_to(self, target: Heading) -> u16 {
        let diff = (target.0 + 360 - self.0) % 360 / TURN_DEGREES;
        diff.min(12 - diff)
    }

    /// The heading closest to a compass bearing.
    pub fn nearest(bearing: f64) -> Heading {
        let k = (bearing.rem_euclid(360.0) / TURN_DEGREES as f64).round() as u16 % 12;
        Heading(k * TURN_DEGREES)
    }
}

impl TryFrom<u16> for Heading {
    type Error = WorldError;
    fn try_from(v: u16) -> Result<Self, Self::Error> {
        Heading::new(v)
    }
}

impl From<Heading> for u16 {
    fn from(h: Heading) -> u16 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionLow {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl ActionLow {
    pub fn name(self) -> &'static str {
        match self {
            ActionLow::MoveForward => "move_forward",
            ActionLow::TurnLeft => "turn_left",
            ActionLow::TurnRight => "turn_right",
            ActionLow::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub object_id: String,
    pub category: String,
    pub position: Point,
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point,
    pub heading: Heading,
    pub steps_taken: u32,
}

impl AgentState {
    pub fn new(position: Point, heading: Heading) -> Self {
        Self {
            position,
            heading,
            steps_taken: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub object_id: String,
    pub category: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub view_heading: u16,
    pub visible: Vec<Sighting>,
    pub room: String,
}

/// Front, left and right egocentric views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub front: View,
    pub left: View,
    pub right: View,
    pub blocked: bool,
}

impl Observation {
    pub fn views(&self) -> [&View; 3] {
        [&self.front, &self.left, &self.right]
    }

    pub fn room(&self) -> &str {
        &self.front.room
    }

    /// Distinct visible objects across all views, nearest first.
    pub fn sightings(&self) -> Vec<&Sighting> {
        let mut seen = BTreeSet::new();
        let mut out: Vec<&Sighting> = self
            .views()
            .into_iter()
            .flat_map(|v| v.visible.iter())
            .filter(|s| seen.insert(s.object_id.as_str()))
            .collect();
        out.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.object_id.cmp(&b.object_id))
        });
        out
    }

    pub fn sees(&self, object_id: &str) -> Option<f64> {
        self.views()
            .into_iter()
            .flat_map(|v| v.visible.iter())
            .find(|s| s.object_id == object_id)
            .map(|s| s.distance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: AgentState,
    pub observation: Observation,
    pub done: bool,
}

/// Grid cell coordinates (column, row).
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    width: usize,
    height: usize,
    cells: Vec<Option<u16>>,
    rooms: Vec<String>,
    objects: Vec<ObjectInstance>,
    adjacency: Vec<BTreeSet<u16>>,
}

impl World {
    /// Builds a world and checks its invariants.
    pub fn from_parts(
        width: usize,
        height: usize,
        cells: Vec<Option<u16>>,
        rooms: Vec<String>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self, WorldError> {
        if cells.len() != width * height {
            return Err(WorldError::Format(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        let mut per_room = vec![0usize; rooms.len()];
        for c in cells.iter().flatten() {
            let idx = *c as usize;
            if idx >= rooms.len() {
                return Err(WorldError::Format(format!("unknown room index {idx}")));
            }
            per_room[idx] += 1;
        }
        if let Some(i) = per_room.iter().position(|n| *n == 0) {
            return Err(WorldError::Format(format!("room {} has no free cell", rooms[i])));
        }
        let unique: BTreeSet<&String> = rooms.iter().collect();
        if unique.len() != rooms.len() {
            return Err(WorldError::Format("duplicate room names".into()));
        }
        let mut world = Self {
            width,
            height,
            cells,
            rooms,
            objects: Vec::new(),
            adjacency: Vec::new(),
        };
        world.adjacency = world.compute_adjacency();
        world.set_objects(objects)?;
        Ok(world)
    }

    fn compute_adjacency(&self) -> Vec<BTreeSet<u16>> {
        let mut adj = vec![BTreeSet::new(); self.rooms.len()];
        for row in 0..self.height {
            for col in 0..self.width {
                let Some(a) = self.label((col, row)) else {
                    continue;
                };
                for (dc, dr) in [(1usize, 0usize), (0, 1)] {
                    if let Some(b) = self.label((col + dc, row + dr)) {
                        if a != b {
                            adj[a as usize].insert(b);
                            adj[b as usize].insert(a);
                        }
                    }
                }
            }
        }
        adj
    }

    /// Replaces the object table; every object must sit on a free cell.
    pub fn set_objects(&mut self, objects: Vec<ObjectInstance>) -> Result<(), WorldError> {
        let mut ids = BTreeSet::new();
        for o in &objects {
            if !self.is_free(o.position) {
                return Err(WorldError::InvalidInput(format!(
                    "object {} is not on a free cell",
                    o.object_id
                )));
            }
            if !ids.insert(o.object_id.as_str()) {
                return Err(WorldError::InvalidInput(format!("duplicate object id {}", o.object_id)));
            }
        }
        self.objects = objects;
        Ok(())
    }

    /// A copy with some objects moved.
    pub fn with_positions<'a>(
        &self,
        moves: impl IntoIterator<Item = (&'a str, Point)>,
    ) -> Result<World, WorldError> {
        let mut objects = self.objects.clone();
        for (id, pos) in moves {
            let o = objects
                .iter_mut()
                .find(|o| o.object_id == id)
                .ok_or_else(|| WorldError::InvalidInput(format!("unknown object {id}")))?;
            o.position = pos;
        }
        let mut w = self.clone();
        w.set_objects(objects)?;
        Ok(w)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Extent in meters.
    pub fn bounds(&self) -> (f64, f64) {
        (self.width as f64 * RESOLUTION, self.height as f64 * RESOLUTION)
    }

    pub fn rooms(&self) -> &[String] {
        &self.rooms
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn categories(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.objects.iter().map(|o| o.category.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn room_index(&self, name: &str) -> Option<u16> {
        self.rooms.iter().position(|r| r == name).map(|i| i as u16)
    }

    pub fn adjacent_rooms(&self, room: u16) -> impl Iterator<Item = u16> + '_ {
        self.adjacency[room as usize].iter().copied()
    }

    pub(crate) fn raw_cells(&self) -> &[Option<u16>] {
        &self.cells
    }

    pub fn label(&self, (col, row): Cell) -> Option<u16> {
        if col < self.width && row < self.height {
            self.cells[row * self.width + col]
        } else {
            None
        }
    }

    pub fn cell_free(&self, cell: Cell) -> bool {
        self.label(cell).is_some()
    }

    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / RESOLUTION).floor() as usize;
        let row = (p.y / RESOLUTION).floor() as usize;
        (col < self.width && row < self.height).then_some((col, row))
    }

    pub fn cell_center((col, row): Cell) -> Point {
        Point::new((col as f64 + 0.5) * RESOLUTION, (row as f64 + 0.5) * RESOLUTION)
    }

    pub fn is_free(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|c| self.cell_free(c))
    }

    pub fn room_at(&self, p: Point) -> Option<&str> {
        self.cell_of(p)
            .and_then(|c| self.label(c))
            .map(|i| self.rooms[i as usize].as_str())
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| (col, row)))
            .filter(|c| self.cell_free(*c))
    }

    /// Cells of `room` whose (2m+1)-square neighborhood is entirely `room`.
    pub fn interior_cells(&self, room: u16, margin: usize) -> Vec<Cell> {
        let m = margin as isize;
        self.free_cells()
            .filter(|c| self.label(*c) == Some(room))
            .filter(|&(col, row)| {
                (-m..=m).all(|dr| {
                    (-m..=m).all(|dc| {
                        let (c, r) = (col as isize + dc, row as isize + dr);
                        c >= 0 && r >= 0 && self.label((c as usize, r as usize)) == Some(room)
                    })
                })
            })
            .collect()
    }

    /// True when every 0.25 m sample along the segment lies in free space.
    pub fn segment_free(&self, from: Point, to: Point) -> bool {
        let len = from.distance(&to);
        let n = (len / RESOLUTION).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            self.is_free(Point::new(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t))
        })
    }

    /// Grid ray cast: true when no cell crossed by the segment is a wall.
    pub fn line_of_sight(&self, from: Point, to: Point) -> bool {
        let (Some(start), Some(end)) = (self.cell_of(from), self.cell_of(to)) else {
            return false;
        };
        if !self.cell_free(start) || !self.cell_free(end) {
            return false;
        }
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        let step_c: isize = if dx > 0.0 { 1 } else { -1 };
        let step_r: isize = if dy > 0.0 { 1 } else { -1 };
        let next_boundary = |pos: f64, cell: usize, d: f64| {
            let edge = if d > 0.0 { cell + 1 } else { cell } as f64 * RESOLUTION;
            (edge - pos) / d
        };
        let mut t_max_c = if dx != 0.0 { next_boundary(from.x, start.0, dx) } else { f64::INFINITY };
        let mut t_max_r = if dy != 0.0 { next_boundary(from.y, start.1, dy) } else { f64::INFINITY };
        let t_delta_c = if dx != 0.0 { RESOLUTION / dx.abs() } else { f64::INFINITY };
        let t_delta_r = if dy != 0.0 { RESOLUTION / dy.abs() } else { f64::INFINITY };
        let (mut c, mut r) = (start.0 as isize, start.1 as isize);
        let limit = self.width + self.height + 4;
        for _ in 0..limit {
            if (c as usize, r as usize) == end {
                return true;
            }
            if (t_max_c - t_max_r).abs() < 1e-12 {
                // Passing exactly through a corner: both side cells must be open.
                if !self.cell_free(((c + step_c) as usize, r as usize))
                    || !self.cell_free((c as usize, (r + step_r) as usize))
                {
                    return false;
                }
                c += step_c;
                r += step_r;
                t_max_c += t_delta_c;
                t_max_r += t_delta_r;
            } else if t_max_c < t_max_r {
                c += step_c;
                t_max_c += t_delta_c;
            } else {
                r += step_r;
                t_max_r += t_delta_r;
            }
            if c < 0 || r < 0 || !self.cell_free((c as usize, r as usize)) {
                return false;
            }
        }
        false
    }

    /// Egocentric observation: front, left (-90) and right (+90) views.
    pub fn observe(&self, state: &AgentState) -> Observation {
        let room = self.room_at(state.position).unwrap_or("").to_string();
        let h = state.heading.degrees();
        let view = |offset: u16| {
            let view_heading = (h + offset) % 360;
            let mut visible: Vec<Sighting> = self
                .objects
                .iter()
                .filter_map(|o| {
                    let d = state.position.distance(&o.position);
                    if d > VIEW_RANGE {
                        return None;
                    }
                    let in_cone = if d < 1e-9 {
                        offset == 0
                    } else {
                        let b = state.position.bearing_to(&o.position);
                        let diff = (b - view_heading as f64).rem_euclid(360.0);
                        diff.min(360.0 - diff) <= VIEW_HALF_ANGLE + 1e-9
                    };
                    (in_cone && self.line_of_sight(state.position, o.position)).then(|| Sighting {
                        object_id: o.object_id.clone(),
                        category: o.category.clone(),
                        distance: d,
                    })
                })
                .collect();
            visible.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.object_id.cmp(&b.object_id)));
            View {
                view_heading,
                visible,
                room: room.clone(),
            }
        };
        Observation {
            front: view(0),
            left: view(270),
            right: view(90),
            blocked: false,
        }
    }

    /// Landing point of a forward move, or `None` if the move is blocked.
    pub fn forward_target(&self, position: Point, heading: Heading) -> Option<Point> {
        let (dx, dy) = heading.direction();
        let to = Point::new(position.x + dx * MOVE_DISTANCE, position.y + dy * MOVE_DISTANCE);
        self.segment_free(position, to).then_some(to)
    }

    /// The transition function.
    pub fn step(&self, state: &AgentState, action: ActionLow) -> StepResult {
        let mut next = *state;
        next.steps_taken += 1;
        let mut blocked = false;
        let mut done = false;
        match action {
            ActionLow::MoveForward => match self.forward_target(state.position, state.heading) {
                Some(p) => next.position = p,
                None => blocked = true,
            },
            ActionLow::TurnLeft => next.heading = state.heading.turned_left(),
            ActionLow::TurnRight => next.heading = state.heading.turned_right(),
            ActionLow::Stop => done = true,
        }
        let mut observation = self.observe(&next);
        observation.blocked = blocked;
        StepResult {
            state: next,
            observation,
            done,
        }
    }
}
