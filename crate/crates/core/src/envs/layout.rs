use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, EnvName, EnvSpec, Variant, CRAFTSMAN_QUOTA};
use crate::error::{Error, Result};
use crate::tabular::stream_rng;

/// Per-environment layout parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvParams {
    Craftsman {
        rows: u8,
        cols: u8,
        start: Cell,
        home: Cell,
        factory: Cell,
        wood: Vec<Cell>,
        quota: u8,
    },
    Dungeon {
        rows: u8,
        cols: u8,
        start: Cell,
        walls: Vec<Cell>,
        key: Cell,
        chest: Cell,
        shield: Cell,
        dragon: Cell,
    },
    MountainCar {
        positions: u8,
        valley: u8,
        /// Velocity change applied by the slope at each position bucket.
        gravity: Vec<i8>,
        power_cell: u8,
        sensor_array: u8,
        data_crystal: u8,
        base_station: u8,
    },
    Warehouse {
        rows: u8,
        cols: u8,
        start: Cell,
        walls: Vec<Cell>,
        scanner: Cell,
        shelf: Cell,
        charging_station: Cell,
        item: Cell,
        dock: Cell,
        battery_period: u8,
    },
}

impl EnvParams {
    fn kind_matches(&self, name: EnvName) -> bool {
        matches!(
            (self, name),
            (EnvParams::Craftsman { .. }, EnvName::BlindCraftsman)
                | (EnvParams::Dungeon { .. }, EnvName::DungeonQuest)
                | (EnvParams::MountainCar { .. }, EnvName::MountainCarCollection)
                | (EnvParams::Warehouse { .. }, EnvName::WarehouseRobotics)
        )
    }
}

fn scaled(fr: f64, fc: f64, rows: u8, cols: u8) -> Cell {
    Cell::new(
        (fr * (rows - 1) as f64).round() as u8,
        (fc * (cols - 1) as f64).round() as u8,
    )
}

/// Moves each site by up to one cell in each axis, keeping it on a free,
/// unoccupied cell.
fn jitter(sites: &mut [Cell], fixed: &[Cell], walls: &[Cell], rows: u8, cols: u8, seed: u64) {
    let mut rng = stream_rng(seed, 0x1a40);
    for i in 0..sites.len() {
        for _ in 0..16 {
            let dr: i16 = rng.gen_range(-1..=1);
            let dc: i16 = rng.gen_range(-1..=1);
            let r = sites[i].row as i16 + dr;
            let c = sites[i].col as i16 + dc;
            if r < 0 || c < 0 || r >= rows as i16 || c >= cols as i16 {
                continue;
            }
            let cand = Cell::new(r as u8, c as u8);
            let taken = walls.contains(&cand)
                || fixed.contains(&cand)
                || sites.iter().enumerate().any(|(j, s)| j != i && *s == cand);
            if !taken {
                sites[i] = cand;
                break;
            }
        }
    }
}

fn dungeon_walls(rows: u8, cols: u8) -> Vec<Cell> {
    let (wall_row, wall_col) = (rows / 2, cols / 2);
    let row_doors = [rows / 4, 3 * rows / 4];
    let col_doors = [cols / 4, 3 * cols / 4];
    let mut walls = BTreeSet::new();
    for r in 0..rows {
        if !row_doors.contains(&r) {
            walls.insert(Cell::new(r, wall_col));
        }
    }
    for c in 0..cols {
        if !col_doors.contains(&c) {
            walls.insert(Cell::new(wall_row, c));
        }
    }
    walls.into_iter().collect()
}

fn rack_walls(rows: &[u8], cols: std::ops::RangeInclusive<u8>) -> Vec<Cell> {
    rows.iter()
        .flat_map(|&r| cols.clone().map(move |c| Cell::new(r, c)))
        .collect()
}

pub(super) fn generate(name: EnvName, variant: Variant, layout_seed: u64) -> EnvParams {
    let source = variant == Variant::Source;
    match name {
        EnvName::BlindCraftsman => {
            let n = if source { 15 } else { 25 };
            let start = scaled(0.1, 0.1, n, n);
            let mut sites = vec![
                scaled(0.9, 0.1, n, n),
                scaled(0.5, 0.3, n, n),
                scaled(0.15, 0.85, n, n),
                scaled(0.5, 0.9, n, n),
                scaled(0.85, 0.8, n, n),
            ];
            if source {
                jitter(&mut sites, &[start], &[], n, n, layout_seed);
            }
            EnvParams::Craftsman {
                rows: n,
                cols: n,
                start,
                home: sites[0],
                factory: sites[1],
                wood: sites[2..].to_vec(),
                quota: CRAFTSMAN_QUOTA,
            }
        }
        EnvName::DungeonQuest => {
            let n = if source { 12 } else { 20 };
            let walls = dungeon_walls(n, n);
            let start = scaled(0.05, 0.05, n, n);
            let mut sites = vec![
                scaled(0.15, 0.85, n, n),
                scaled(0.85, 0.85, n, n),
                scaled(0.85, 0.15, n, n),
                scaled(0.3, 0.3, n, n),
            ];
            if source {
                jitter(&mut sites, &[start], &walls, n, n, layout_seed);
            }
            EnvParams::Dungeon {
                rows: n,
                cols: n,
                start,
                walls,
                key: sites[0],
                chest: sites[1],
                shield: sites[2],
                dragon: sites[3],
            }
        }
        EnvName::MountainCarCollection => {
            let (n, valley, steep, sites) = if source {
                (9u8, 2u8, 6u8, [4u8, 6, 7, 8])
            } else {
                (15, 4, 10, [7, 10, 12, 14])
            };
            let gravity = (0..n)
                .map(|p| match p {
                    p if p < valley => 1,
                    p if p == valley => 0,
                    p if p < steep => -1,
                    _ => -2,
                })
                .collect();
            EnvParams::MountainCar {
                positions: n,
                valley,
                gravity,
                power_cell: sites[0],
                sensor_array: sites[1],
                data_crystal: sites[2],
                base_station: sites[3],
            }
        }
        EnvName::WarehouseRobotics => {
            if source {
                EnvParams::Warehouse {
                    rows: 6,
                    cols: 8,
                    start: Cell::new(5, 0),
                    walls: rack_walls(&[2], 2..=5),
                    scanner: Cell::new(5, 3),
                    shelf: Cell::new(0, 6),
                    charging_station: Cell::new(3, 0),
                    item: Cell::new(0, 1),
                    dock: Cell::new(3, 7),
                    battery_period: 10,
                }
            } else {
                EnvParams::Warehouse {
                    rows: 10,
                    cols: 12,
                    start: Cell::new(9, 0),
                    walls: rack_walls(&[3, 7], 3..=8),
                    scanner: Cell::new(9, 4),
                    shelf: Cell::new(0, 10),
                    charging_station: Cell::new(5, 0),
                    item: Cell::new(1, 2),
                    dock: Cell::new(6, 11),
                    battery_period: 10,
                }
            }
        }
    }
}

fn check_cells(rows: u8, cols: u8, walls: &[Cell], sites: &[(&str, Cell)]) -> Result<()> {
    let inside = |c: &Cell| c.row < rows && c.col < cols;
    if let Some(w) = walls.iter().find(|w| !inside(w)) {
        return Err(Error::InvalidSpec(format!("wall {w:?} outside {rows}x{cols} grid")));
    }
    let mut seen = BTreeSet::new();
    for (name, cell) in sites {
        if !inside(cell) {
            return Err(Error::InvalidSpec(format!("{name} at {cell:?} outside {rows}x{cols} grid")));
        }
        if walls.contains(cell) {
            return Err(Error::InvalidSpec(format!("{name} at {cell:?} is inside a wall")));
        }
        if !seen.insert(*cell) {
            return Err(Error::InvalidSpec(format!("{name} at {cell:?} overlaps another site")));
        }
    }
    Ok(())
}

fn require_dims(name: EnvName, variant: Variant, rows: u8, cols: u8) -> Result<()> {
    let expected = match (name, variant) {
        (EnvName::BlindCraftsman, Variant::Target) => Some((25, 25)),
        (EnvName::DungeonQuest, Variant::Target) => Some((20, 20)),
        (EnvName::WarehouseRobotics, Variant::Target) => Some((10, 12)),
        (EnvName::WarehouseRobotics, Variant::Source) => Some((6, 8)),
        _ => None,
    };
    match expected {
        Some(dims) if dims != (rows, cols) => Err(Error::InvalidSpec(format!(
            "{name} {variant:?} must be {}x{}, got {rows}x{cols}",
            dims.0, dims.1
        ))),
        _ if rows < 3 || cols < 3 => Err(Error::InvalidSpec(format!("{rows}x{cols} grid is too small"))),
        _ => Ok(()),
    }
}

pub(super) fn validate(name: EnvName, variant: Variant, params: &EnvParams) -> Result<()> {
    if !params.kind_matches(name) {
        return Err(Error::InvalidSpec(format!("parameters do not describe {name}")));
    }
    match params {
        EnvParams::Craftsman { rows, cols, start, home, factory, wood, quota } => {
            require_dims(name, variant, *rows, *cols)?;
            if wood.is_empty() || *quota == 0 {
                return Err(Error::InvalidSpec("craftsman needs wood piles and a positive quota".into()));
            }
            let mut sites = vec![("start", *start), ("home", *home), ("factory", *factory)];
            sites.extend(wood.iter().map(|w| ("wood", *w)));
            check_cells(*rows, *cols, &[], &sites)
        }
        EnvParams::Dungeon { rows, cols, start, walls, key, chest, shield, dragon } => {
            require_dims(name, variant, *rows, *cols)?;
            let sites = [
                ("start", *start),
                ("key", *key),
                ("chest", *chest),
                ("shield", *shield),
                ("dragon", *dragon),
            ];
            check_cells(*rows, *cols, walls, &sites)
        }
        EnvParams::MountainCar { positions, valley, gravity, power_cell, sensor_array, data_crystal, base_station } => {
            if *positions < 3 || gravity.len() != *positions as usize {
                return Err(Error::InvalidSpec("slope needs >= 3 positions and one gravity entry each".into()));
            }
            let sites = [*valley, *power_cell, *sensor_array, *data_crystal, *base_station];
            if sites.iter().any(|p| p >= positions) {
                return Err(Error::InvalidSpec("slope site outside position range".into()));
            }
            if sites.iter().collect::<BTreeSet<_>>().len() != sites.len() {
                return Err(Error::InvalidSpec("slope sites must be distinct".into()));
            }
            if gravity.iter().any(|g| g.abs() > 3) {
                return Err(Error::InvalidSpec("gravity entries must lie in -3..=3".into()));
            }
            Ok(())
        }
        EnvParams::Warehouse { rows, cols, start, walls, scanner, shelf, charging_station, item, dock, battery_period } => {
            require_dims(name, variant, *rows, *cols)?;
            if *battery_period == 0 {
                return Err(Error::InvalidSpec("battery_period must be positive".into()));
            }
            let sites = [
                ("start", *start),
                ("scanner", *scanner),
                ("shelf", *shelf),
                ("charging_station", *charging_station),
                ("item", *item),
                ("dock", *dock),
            ];
            check_cells(*rows, *cols, walls, &sites)
        }
    }
}

pub(super) fn render(spec: &EnvSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} ({:?}, layout_seed {})", spec.name, spec.variant, spec.layout_seed);
    let grid = |rows: u8, cols: u8, marks: &[(char, Cell)], walls: &[Cell]| {
        let mut g = vec![vec!['.'; cols as usize]; rows as usize];
        for w in walls {
            g[w.row as usize][w.col as usize] = '#';
        }
        for (ch, c) in marks {
            g[c.row as usize][c.col as usize] = *ch;
        }
        g.into_iter()
            .map(|row| row.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    };
    match &spec.parameters {
        EnvParams::Craftsman { rows, cols, start, home, factory, wood, quota } => {
            let mut marks = vec![('S', *start), ('H', *home), ('F', *factory)];
            marks.extend(wood.iter().map(|w| ('W', *w)));
            let _ = writeln!(out, "{}", grid(*rows, *cols, &marks, &[]));
            let _ = writeln!(out, "S start  W wood  F factory  H home  (quota {quota})");
        }
        EnvParams::Dungeon { rows, cols, start, walls, key, chest, shield, dragon } => {
            let marks = [('S', *start), ('K', *key), ('C', *chest), ('P', *shield), ('D', *dragon)];
            let _ = writeln!(out, "{}", grid(*rows, *cols, &marks, walls));
            let _ = writeln!(out, "S start  K key  C chest (sword inside)  P shield  D dragon  # wall");
        }
        EnvParams::MountainCar { positions, valley, gravity, power_cell, sensor_array, data_crystal, base_station } => {
            let _ = writeln!(out, "pos  gravity  site");
            for p in 0..*positions {
                let site = match p {
                    p if p == *valley => "valley (start)",
                    p if p == *power_cell => "power_cell",
                    p if p == *sensor_array => "sensor_array",
                    p if p == *data_crystal => "data_crystal",
                    p if p == *base_station => "base_station",
                    _ => "",
                };
                let _ = writeln!(out, "{p:>3}  {:>7}  {site}", gravity[p as usize]);
            }
        }
        EnvParams::Warehouse { rows, cols, start, walls, scanner, shelf, charging_station, item, dock, battery_period } => {
            let marks = [
                ('S', *start),
                ('R', *scanner),
                ('V', *shelf),
                ('B', *charging_station),
                ('I', *item),
                ('X', *dock),
            ];
            let _ = writeln!(out, "{}", grid(*rows, *cols, &marks, walls));
            let _ = writeln!(
                out,
                "S start  R scanner  V shelf to scan  B charging station  I item  X dock  # rack  (battery drains every {battery_period} steps)"
            );
        }
    }
    out
}
