//! World file format and a plain-text debug map.
//!
//! Rows are stored bottom-up (row 0 spans y in [0, 0.25)) as run-length
//! tokens `count:symbol`, where the symbol is `#` for wall or a room index.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectInstance, World, WorldError, RESOLUTION};
use crate::io::write_atomic;

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub format_version: u32,
    pub resolution_m: f64,
    pub width: usize,
    pub height: usize,
    pub rooms: Vec<String>,
    pub rows: Vec<String>,
    pub objects: Vec<ObjectInstance>,
}

fn encode_row(cells: &[Option<u16>]) -> String {
    let mut runs: Vec<(usize, Option<u16>)> = Vec::new();
    for c in cells {
        match runs.last_mut() {
            Some((n, v)) if v == c => *n += 1,
            _ => runs.push((1, *c)),
        }
    }
    runs.iter()
        .map(|(n, v)| match v {
            Some(i) => format!("{n}:{i}"),
            None => format!("{n}:#"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_row(row: &str, index: usize) -> Result<Vec<Option<u16>>, WorldError> {
    let bad = |msg: String| WorldError::Format(format!("row {index}: {msg}"));
    let mut out = Vec::new();
    for token in row.split(',') {
        let (n, sym) = token
            .split_once(':')
            .ok_or_else(|| bad(format!("token {token:?} lacks ':'")))?;
        let n: usize = n.parse().map_err(|_| bad(format!("bad run length {n:?}")))?;
        let v = match sym {
            "#" => None,
            s => Some(s.parse::<u16>().map_err(|_| bad(format!("bad symbol {s:?}")))?),
        };
        out.extend(std::iter::repeat_n(v, n));
    }
    Ok(out)
}

impl WorldFile {
    pub fn from_world(world: &World) -> Self {
        let rows = world
            .raw_cells()
            .chunks(world.width())
            .map(encode_row)
            .collect();
        Self {
            format_version: WORLD_FORMAT_VERSION,
            resolution_m: RESOLUTION,
            width: world.width(),
            height: world.height(),
            rooms: world.rooms().to_vec(),
            rows,
            objects: world.objects().to_vec(),
        }
    }

    pub fn into_world(self) -> Result<World, WorldError> {
        if self.format_version != WORLD_FORMAT_VERSION {
            return Err(WorldError::Format(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.resolution_m != RESOLUTION {
            return Err(WorldError::Format(format!(
                "unsupported resolution {}",
                self.resolution_m
            )));
        }
        if self.rows.len() != self.height {
            return Err(WorldError::Format(format!(
                "expected {} rows, got {}",
                self.height,
                self.rows.len()
            )));
        }
        let mut cells = Vec::with_capacity(self.width * self.height);
        for (i, row) in self.rows.iter().enumerate() {
            let decoded = decode_row(row, i)?;
            if decoded.len() != self.width {
                return Err(WorldError::Format(format!(
                    "row {i}: expected {} cells, got {}",
                    self.width,
                    decoded.len()
                )));
            }
            cells.extend(decoded);
        }
        World::from_parts(self.width, self.height, cells, self.rooms, self.objects)
            .map_err(|e| match e {
                WorldError::InvalidInput(m) => WorldError::Format(m),
                other => other,
            })
    }
}

impl World {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&WorldFile::from_world(self))
            .expect("world file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<World, WorldError> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| {
            WorldError::Format(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        file.into_world()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<World, WorldError> {
        World::from_json(&fs::read_to_string(path)?)
    }
}

const ROOM_GLYPHS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Top-down text map, north up. `#` wall, a glyph per room, `*` objects.
pub fn render_map(world: &World) -> String {
    let mut grid: Vec<Vec<u8>> = (0..world.height())
        .map(|row| {
            (0..world.width())
                .map(|col| match world.label((col, row)) {
                    Some(i) => ROOM_GLYPHS.get(i as usize).copied().unwrap_or(b'?'),
                    None => b'#',
                })
                .collect()
        })
        .collect();
    for o in world.objects() {
        if let Some((c, r)) = world.cell_of(o.position) {
            grid[r][c] = b'*';
        }
    }
    let mut out = String::new();
    for row in grid.iter().rev() {
        out.push_str(std::str::from_utf8(row).expect("ascii"));
        out.push('\n');
    }
    for (i, name) in world.rooms().iter().enumerate() {
        let glyph = ROOM_GLYPHS.get(i).map(|g| *g as char).unwrap_or('?');
        out.push_str(&format!("{glyph} = {name}\n"));
    }
    for o in world.objects() {
        out.push_str(&format!(
            "* {} ({}) at ({:.2}, {:.2}) in {}\n",
            o.object_id,
            o.category,
            o.position.x,
            o.position.y,
            world.room_at(o.position).unwrap_or("?")
        ));
    }
    out
}
