//! 8-connected shortest paths on the occupancy grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Cell, Point, World, WorldError, RESOLUTION};

const DIAGONAL: f64 = RESOLUTION * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grid distances in meters from every free cell to one goal cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    goal: Cell,
    dist: Vec<f64>,
}

impl DistanceField {
    /// Dijkstra from `goal`. Diagonal steps may not cut wall corners.
    pub fn new(world: &World, goal: Cell) -> Self {
        let (w, h) = (world.width(), world.height());
        let mut dist = vec![f64::INFINITY; w * h];
        let mut heap = BinaryHeap::new();
        if world.cell_free(goal) {
            let gi = goal.1 * w + goal.0;
            dist[gi] = 0.0;
            heap.push(Entry { cost: 0.0, index: gi });
        }
        while let Some(Entry { cost, index }) = heap.pop() {
            if cost > dist[index] {
                continue;
            }
            let (col, row) = ((index % w) as isize, (index / w) as isize);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nc, nr) = (col + dc, row + dr);
                    if nc < 0 || nr < 0 || nc as usize >= w || nr as usize >= h {
                        continue;
                    }
                    if !world.cell_free((nc as usize, nr as usize)) {
                        continue;
                    }
                    let step = if dr != 0 && dc != 0 {
                        if !world.cell_free(((col + dc) as usize, row as usize))
                            || !world.cell_free((col as usize, (row + dr) as usize))
                        {
                            continue;
                        }
                        DIAGONAL
                    } else {
                        RESOLUTION
                    };
                    let ni = nr as usize * w + nc as usize;
                    let next = cost + step;
                    if next < dist[ni] {
                        dist[ni] = next;
                        heap.push(Entry { cost: next, index: ni });
                    }
                }
            }
        }
        Self { width: w, goal, dist }
    }

    /// Field toward the free cell nearest `p`.
    pub fn toward(world: &World, p: Point) -> Self {
        Self::new(world, snap(world, p))
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn at_cell(&self, (col, row): Cell) -> f64 {
        self.dist
            .get(row * self.width + col)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Distance from the free cell nearest `p`.
    pub fn at(&self, world: &World, p: Point) -> f64 {
        self.at_cell(snap(world, p))
    }
}

/// The free cell whose center is nearest `p` (row-major first on ties).
pub(crate) fn snap(world: &World, p: Point) -> Cell {
    if let Some(c) = world.cell_of(p) {
        if world.cell_free(c) {
            return c;
        }
    }
    let mut best: Option<(f64, Cell)> = None;
    for c in world.free_cells() {
        let d = World::cell_center(c).distance(&p);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c).unwrap_or((0, 0))
}

/// Grid shortest-path length in meters; `f64::INFINITY` when unreachable.
pub fn shortest_path_length(world: &World, from: Point, to: Point) -> Result<f64, WorldError> {
    let (bw, bh) = world.bounds();
    for p in [from, to] {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < bw && p.y < bh) {
            return Err(WorldError::InvalidInput(format!(
                "position ({}, {}) is outside the world",
                p.x, p.y
            )));
        }
    }
    let start = snap(world, from);
    let goal = snap(world, to);
    if start == goal {
        return Ok(0.0);
    }
    Ok(DistanceField::new(world, goal).at_cell(start))
}

#[cfg(test)]
mod tests {
    use super::super::test_worlds::*;
    use super::*;

    #[test]
    fn same_point_is_zero() {
        let w = open_room(8, 8);
        let p = Point::new(1.0, 1.0);
        assert_eq!(shortest_path_length(&w, p, p).unwrap(), 0.0);
    }

    #[test]
    fn straight_corridor() {
        let w = open_room(20, 1);
        let a = World::cell_center((1, 1));
        let b = World::cell_center((17, 1));
        assert_eq!(shortest_path_length(&w, a, b).unwrap(), 4.0);
    }

    /// Bellman-Ford relaxation to a fixpoint, as an independent check on Dijkstra.
    fn brute_force(w: &World, a: Cell, b: Cell) -> f64 {
        let n = w.width() * w.height();
        let max_steps = n;
        let mut dist = vec![f64::INFINITY; n];
        dist[a.1 * w.width() + a.0] = 0.0;
        for _ in 0..max_steps {
            let mut changed = false;
            for c in w.free_cells().collect::<Vec<_>>() {
                let here = dist[c.1 * w.width() + c.0];
                if !here.is_finite() {
                    continue;
                }
                for (dc, dr) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (nc, nr) = (c.0 as isize + dc, c.1 as isize + dr);
                    if nc < 0 || nr < 0 {
                        continue;
                    }
                    let nb = (nc as usize, nr as usize);
                    if !w.cell_free(nb) {
                        continue;
                    }
                    let diag = dc != 0 && dr != 0;
                    if diag
                        && (!w.cell_free((nc as usize, c.1)) || !w.cell_free((c.0, nr as usize)))
                    {
                        continue;
                    }
                    let cost = here + if diag { 0.25 * 2f64.sqrt() } else { 0.25 };
                    let idx = nb.1 * w.width() + nb.0;
                    if cost < dist[idx] - 1e-12 {
                        dist[idx] = cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist[b.1 * w.width() + b.0]
    }

    #[test]
    fn l_shaped_path_around_a_wall() {
        // 3 m up a 1-cell corridor, then 4 m along the top.
        let mut rows = vec!["#".repeat(19)];
        rows.push(format!("#{}#", "a".repeat(17)));
        for _ in 0..12 {
            rows.push(format!("#a{}#", "#".repeat(16)));
        }
        rows.push("#".repeat(19));
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let w = sketch(&refs);
        let start = (1, 1);
        let goal = (17, 13);
        let got = shortest_path_length(&w, World::cell_center(start), World::cell_center(goal)).unwrap();
        let oracle = brute_force(&w, start, goal);
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        assert!((got - 7.0).abs() <= 0.36, "{got}");
    }

    #[test]
    fn unreachable_is_infinite() {
        let w = sketch(&["#####", "#a#b#", "#####"]);
        let d = shortest_path_length(&w, World::cell_center((1, 1)), World::cell_center((3, 1))).unwrap();
        assert!(d.is_infinite());
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let w = open_room(4, 4);
        assert!(shortest_path_length(&w, Point::new(-1.0, 0.5), Point::new(0.5, 0.5)).is_err());
        assert!(shortest_path_length(&w, Point::new(0.5, 0.5), Point::new(99.0, 0.5)).is_err());
    }

    #[test]
    fn open_space_diagonal_matches_brute_force() {
        let w = open_room(12, 12);
        for goal in [(12, 12), (5, 9), (1, 12)] {
            let got = shortest_path_length(&w, World::cell_center((1, 1)), World::cell_center(goal)).unwrap();
            assert!((got - brute_force(&w, (1, 1), goal)).abs() < 1e-9);
        }
    }
}
