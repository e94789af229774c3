//! Room-level scene graph with one waypoint per room.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Point, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRoom {
    pub name: String,
    pub waypoint: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub rooms: Vec<SceneRoom>,
    /// Undirected adjacency, each pair stored once with names in order.
    pub edges: Vec<(String, String)>,
}

/// One node per room, an edge per doorway, waypoint = the room's free cell
/// nearest its centroid.
pub fn build_scene_graph(world: &World) -> SceneGraph {
    let n = world.rooms().len();
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n];
    for c in world.free_cells() {
        let r = world.label(c).unwrap() as usize;
        let p = World::cell_center(c);
        sums[r].0 += p.x;
        sums[r].1 += p.y;
        sums[r].2 += 1;
    }
    let mut best: Vec<Option<(f64, Point)>> = vec![None; n];
    for c in world.free_cells() {
        let r = world.label(c).unwrap() as usize;
        let (sx, sy, k) = sums[r];
        let centroid = Point::new(sx / k as f64, sy / k as f64);
        let p = World::cell_center(c);
        let d = p.distance(&centroid);
        if best[r].is_none_or(|(b, _)| d < b - 1e-12) {
            best[r] = Some((d, p));
        }
    }
    let rooms = world
        .rooms()
        .iter()
        .zip(best)
        .map(|(name, b)| SceneRoom {
            name: name.clone(),
            waypoint: b.map(|(_, p)| p).unwrap_or(Point::new(0.0, 0.0)),
        })
        .collect();
    let mut edges = BTreeSet::new();
    for a in 0..n as u16 {
        for b in world.adjacent_rooms(a) {
            let (x, y) = (&world.rooms()[a as usize], &world.rooms()[b as usize]);
            edges.insert(if x < y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) });
        }
    }
    SceneGraph {
        rooms,
        edges: edges.into_iter().collect(),
    }
}

impl SceneGraph {
    pub fn room(&self, name: &str) -> Option<&SceneRoom> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn waypoint(&self, name: &str) -> Option<Point> {
        self.room(name).map(|r| r.waypoint)
    }

    pub fn neighbors(&self, name: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter_map(|(a, b)| {
                if a == name {
                    Some(b.as_str())
                } else if b == name {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Hop counts from `start` to every reachable room.
    pub fn hops_from(&self, start: &str) -> BTreeMap<String, usize> {
        let mut hops = BTreeMap::new();
        if self.room(start).is_none() {
            return hops;
        }
        hops.insert(start.to_string(), 0);
        let mut queue = VecDeque::from([start.to_string()]);
        while let Some(r) = queue.pop_front() {
            let d = hops[&r];
            for nb in self.neighbors(&r) {
                if !hops.contains_key(nb) {
                    hops.insert(nb.to_string(), d + 1);
                    queue.push_back(nb.to_string());
                }
            }
        }
        hops
    }

    /// Breadth-first room path from `from` to `to`, excluding `from`.
    /// Neighbors expand in name order, so the path is deterministic.
    pub fn bfs_path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        if from == to {
            return self.room(to).map(|_| Vec::new());
        }
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        let mut queue = VecDeque::from([from.to_string()]);
        let mut seen = BTreeSet::from([from.to_string()]);
        while let Some(r) = queue.pop_front() {
            for nb in self.neighbors(&r) {
                if seen.insert(nb.to_string()) {
                    parent.insert(nb.to_string(), r.clone());
                    if nb == to {
                        let mut path = vec![to.to_string()];
                        let mut cur = to.to_string();
                        while let Some(p) = parent.get(&cur) {
                            if p == from {
                                break;
                            }
                            path.push(p.clone());
                            cur = p.clone();
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(nb.to_string());
                }
            }
        }
        None
    }

    pub fn is_connected(&self) -> bool {
        match self.rooms.first() {
            Some(r) => self.hops_from(&r.name).len() == self.rooms.len(),
            None => true,
        }
    }
}
