//! Seeded house layouts: a corridor spine with rooms above and below.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, ObjectInstance, World, WorldError};

pub const FEATURE_DIM: usize = 32;
pub const HALL: &str = "hall";
const ROOM_NAMES: [&str; 11] = [
    "kitchen",
    "bedroom",
    "bathroom",
    "living_room",
    "study",
    "dining_room",
    "laundry",
    "office",
    "nursery",
    "guest_room",
    "pantry",
];
const CORRIDOR_CELLS: usize = 8;
const DOOR_CELLS: usize = 4;
const SIDE_DOOR_PROBABILITY: f64 = 0.3;
/// Objects keep 1 m (4 cells) from walls and from each other.
const OBJECT_MARGIN_CELLS: usize = 4;
const OBJECT_SPACING_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldParams {
    pub seed: u64,
    pub n_rooms: usize,
    pub objects: Vec<ObjectSpec>,
}

pub(crate) fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Rect {
    col: usize,
    row: usize,
    w: usize,
    h: usize,
}

/// Generates a world. Room 0 is the hall, a 2 m corridor; the other rooms
/// are 4-8 m rectangles above and below it, each with a 1 m door onto the
/// hall. Neighboring rooms on the same side sometimes share a second door.
/// Instances of one category are spread over distinct rooms where possible.
pub fn gen_world(params: &WorldParams) -> Result<World, WorldError> {
    let n_rooms = params.n_rooms;
    if !(2..=12).contains(&n_rooms) {
        return Err(WorldError::InvalidInput(format!(
            "n_rooms must be in [2, 12], got {n_rooms}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_side = n_rooms - 1;
    let n_top = n_side.div_ceil(2);
    let n_bottom = n_side / 2;
    let mut side_dims = |count: usize| -> Vec<(usize, usize)> {
        (0..count)
            .map(|_| (rng.gen_range(8..=16) * 2, rng.gen_range(8..=16) * 2))
            .collect()
    };
    let top = side_dims(n_top);
    let bottom = side_dims(n_bottom);
    let band_width = |dims: &[(usize, usize)]| {
        dims.iter().map(|d| d.0).sum::<usize>() + dims.len().saturating_sub(1)
    };
    let spine = band_width(&top).max(band_width(&bottom)).max(16);
    let width = spine + 2;
    let bottom_h = bottom.iter().map(|d| d.1).max().unwrap_or(0);
    let top_h = top.iter().map(|d| d.1).max().unwrap_or(0);
    let corridor_row = if bottom_h > 0 { bottom_h + 2 } else { 1 };
    let top_row = corridor_row + CORRIDOR_CELLS + 1;
    let height = top_row + top_h + 1;

    let mut names: Vec<&str> = ROOM_NAMES.to_vec();
    names.shuffle(&mut rng);
    let mut rooms = vec![HALL.to_string()];
    rooms.extend(names.iter().take(n_side).map(|s| s.to_string()));

    let mut cells: Vec<Option<u16>> = vec![None; width * height];
    let fill = |cells: &mut Vec<Option<u16>>, col: usize, row: usize, label: u16| {
        cells[row * width + col] = Some(label);
    };
    for row in corridor_row..corridor_row + CORRIDOR_CELLS {
        for col in 1..=spine {
            fill(&mut cells, col, row, 0);
        }
    }

    let mut rects: Vec<Rect> = Vec::with_capacity(n_side);
    let mut label = 1u16;
    for (is_top, dims) in [(true, &top), (false, &bottom)] {
        let mut col = 1;
        let mut prev: Option<(u16, usize)> = None;
        for &(w, h) in dims.iter() {
            let row = if is_top { top_row } else { corridor_row - 1 - h };
            for r in row..row + h {
                for c in col..col + w {
                    fill(&mut cells, c, r, label);
                }
            }
            let door_col = rng.gen_range(col + 1..=col + w - DOOR_CELLS - 1);
            let door_row = if is_top { top_row - 1 } else { corridor_row - 1 };
            for c in door_col..door_col + DOOR_CELLS {
                fill(&mut cells, c, door_row, label);
            }
            if let Some((prev_label, prev_h)) = prev {
                if rng.gen_bool(SIDE_DOOR_PROBABILITY) {
                    let shared = prev_h.min(h);
                    let offset = rng.gen_range(1..=shared - DOOR_CELLS - 1);
                    let wall_col = col - 1;
                    for k in 0..DOOR_CELLS {
                        let r = if is_top { top_row + offset + k } else { corridor_row - 2 - offset - k };
                        fill(&mut cells, wall_col, r, prev_label);
                    }
                }
            }
            rects.push(Rect { col, row, w, h });
            prev = Some((label, h));
            col += w + 1;
            label += 1;
        }
    }

    let mut world = World::from_parts(width, height, cells, rooms, Vec::new())?;
    let objects = place_objects(&rects, &params.objects, &mut rng)?;
    world.set_objects(objects)?;
    Ok(world)
}

fn place_objects(
    rects: &[Rect],
    specs: &[ObjectSpec],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ObjectInstance>, WorldError> {
    let m = OBJECT_MARGIN_CELLS;
    let candidates: Vec<Vec<Cell>> = rects
        .iter()
        .map(|r| {
            (r.row + m..r.row + r.h - m)
                .flat_map(|row| (r.col + m..r.col + r.w - m).map(move |col| (col, row)))
                .collect()
        })
        .collect();
    let mut placed: Vec<ObjectInstance> = Vec::new();
    for spec in specs {
        if spec.category.is_empty() || spec.category.contains(char::is_whitespace) {
            return Err(WorldError::InvalidInput(format!(
                "invalid category {:?}",
                spec.category
            )));
        }
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.shuffle(rng);
        for i in 0..spec.count {
            let object_id = format!("{}_{:02}", spec.category, i + 1);
            let preferred = order[i % order.len()];
            let mut tries = vec![preferred];
            tries.extend(order.iter().copied().filter(|r| *r != preferred));
            let mut position = None;
            for room in tries {
                let free: Vec<&Cell> = candidates[room]
                    .iter()
                    .filter(|c| {
                        let p = World::cell_center(**c);
                        placed.iter().all(|o| o.position.distance(&p) >= OBJECT_SPACING_M)
                    })
                    .collect();
                if let Some(c) = free.choose(rng) {
                    position = Some(World::cell_center(**c));
                    break;
                }
            }
            let position = position.ok_or_else(|| {
                WorldError::Generation(format!("no free space left for {object_id}"))
            })?;
            placed.push(ObjectInstance {
                object_id,
                category: spec.category.clone(),
                position,
                feature: Some(random_unit(rng, FEATURE_DIM)),
            });
        }
    }
    Ok(placed)
}
