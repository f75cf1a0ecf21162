//! Ground-truth environment: a fine obstacle raster, charging stations, the
//! spawn region, and the nine-ray range sensor.
//!
//! Maps are authored as ASCII documents in which every character is a
//! 0.5 m square block that expands to 5 x 5 fine cells of 0.1 m. Row 0 of
//! the document is `y` in `[0, 0.5)`, column 0 is `x` in `[0, 0.5)`.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Side of a fine obstacle cell, meters.
pub const FINE_CELL: f64 = 0.1;
/// Side of a block in the ASCII map format, meters.
pub const BLOCK_SIZE: f64 = 0.5;
/// Fine cells per block side.
pub const FINE_PER_BLOCK: usize = 5;

pub const RAY_COUNT: usize = 9;
pub const SENSOR_RANGE: f64 = 1.0;
pub const SENSOR_HALF_FOV_DEG: f64 = 70.0;

/// Continuous robot pose. `theta` is counter-clockwise from +x and is kept in
/// `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_signed(theta: f64) -> f64 {
    let t = normalize_angle(theta);
    if t > std::f64::consts::PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    /// Offset from the robot heading, radians.
    pub bearing_offset: f64,
    /// Distance to the first obstacle boundary, `None` when nothing is within
    /// range.
    pub hit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rays: Vec<Ray>,
}

/// The nine sensor bearings relative to the heading, evenly spaced over
/// `[-70°, +70°]`.
pub fn ray_offsets() -> [f64; RAY_COUNT] {
    let step = 2.0 * SENSOR_HALF_FOV_DEG / (RAY_COUNT - 1) as f64;
    let mut out = [0.0; RAY_COUNT];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (-SENSOR_HALF_FOV_DEG + step * k as f64).to_radians();
    }
    out
}

#[derive(Clone, PartialEq)]
pub struct EnvironmentMap {
    width_m: f64,
    height_m: f64,
    fine_cols: usize,
    fine_rows: usize,
    obstacles: Vec<bool>,
    charging_stations: Vec<(f64, f64)>,
    spawn_region: Rect,
}

impl fmt::Debug for EnvironmentMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvironmentMap")
            .field("width_m", &self.width_m)
            .field("height_m", &self.height_m)
            .field("charging_stations", &self.charging_stations)
            .field("spawn_region", &self.spawn_region)
            .finish_non_exhaustive()
    }
}

impl EnvironmentMap {
    /// Builds a map from a fine obstacle raster (row-major, row 0 at `y = 0`).
    pub fn from_raster(
        fine_cols: usize,
        fine_rows: usize,
        obstacles: Vec<bool>,
        charging_stations: Vec<(f64, f64)>,
        spawn_region: Rect,
    ) -> Result<Self> {
        if fine_cols == 0 || fine_rows == 0 {
            return Err(Error::domain("environment must have at least one cell"));
        }
        if obstacles.len() != fine_cols * fine_rows {
            return Err(Error::domain(format!(
                "obstacle raster has {} cells, expected {}x{}",
                obstacles.len(),
                fine_cols,
                fine_rows
            )));
        }
        let env = EnvironmentMap {
            width_m: fine_cols as f64 * FINE_CELL,
            height_m: fine_rows as f64 * FINE_CELL,
            fine_cols,
            fine_rows,
            obstacles,
            charging_stations,
            spawn_region,
        };
        for &(x, y) in &env.charging_stations {
            if !env.contains(x, y) || env.point_blocked(x, y) {
                return Err(Error::domain(format!(
                    "charging station ({x}, {y}) is outside the map or inside an obstacle"
                )));
            }
        }
        let s = env.spawn_region;
        if !(s.min_x >= 0.0 && s.min_y >= 0.0 && s.max_x <= env.width_m && s.max_y <= env.height_m)
            || s.min_x >= s.max_x
            || s.min_y >= s.max_y
        {
            return Err(Error::domain("spawn region lies outside the map"));
        }
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        load_environment(&text)
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn fine_dims(&self) -> (usize, usize) {
        (self.fine_cols, self.fine_rows)
    }

    pub fn charging_stations(&self) -> &[(f64, f64)] {
        &self.charging_stations
    }

    pub fn spawn_region(&self) -> Rect {
        self.spawn_region
    }

    /// Whether a point lies inside the map rectangle (upper edges excluded).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width_m && y < self.height_m
    }

    /// Obstacle lookup on the fine raster. Out-of-range indices are solid.
    pub fn is_obstacle(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col as usize >= self.fine_cols || row as usize >= self.fine_rows {
            return true;
        }
        self.obstacles[row as usize * self.fine_cols + col as usize]
    }

    fn point_blocked(&self, x: f64, y: f64) -> bool {
        self.is_obstacle(
            (x / FINE_CELL).floor() as i64,
            (y / FINE_CELL).floor() as i64,
        )
    }

    /// True when a disc overlaps an obstacle fine cell or pokes outside the
    /// map.
    pub fn disc_collides(&self, x: f64, y: f64, radius: f64) -> bool {
        if x - radius < 0.0
            || y - radius < 0.0
            || x + radius > self.width_m
            || y + radius > self.height_m
        {
            return true;
        }
        let c0 = ((x - radius) / FINE_CELL).floor() as i64;
        let c1 = ((x + radius) / FINE_CELL).floor() as i64;
        let r0 = ((y - radius) / FINE_CELL).floor() as i64;
        let r1 = ((y + radius) / FINE_CELL).floor() as i64;
        for row in r0..=r1 {
            for col in c0..=c1 {
                if !self.is_obstacle(col, row) {
                    continue;
                }
                let lo_x = col as f64 * FINE_CELL;
                let lo_y = row as f64 * FINE_CELL;
                let nx = x.clamp(lo_x, lo_x + FINE_CELL);
                let ny = y.clamp(lo_y, lo_y + FINE_CELL);
                if (x - nx).hypot(y - ny) < radius {
                    return true;
                }
            }
        }
        false
    }

    /// Distance along `bearing` from `origin` to the first obstacle fine-cell
    /// boundary (the map border counts), or `None` beyond `max_range`.
    ///
    /// Amanatides-Woo traversal over the fine raster; the cell containing the
    /// origin is never reported as a hit.
    pub fn raycast(&self, origin: &Pose, bearing: f64, max_range: f64) -> Result<Option<f64>> {
        if !self.contains(origin.x, origin.y) {
            return Err(Error::domain(format!(
                "ray origin ({}, {}) outside the {}x{} m map",
                origin.x, origin.y, self.width_m, self.height_m
            )));
        }
        let (dy, dx) = bearing.sin_cos();
        let gx = origin.x / FINE_CELL;
        let gy = origin.y / FINE_CELL;
        let mut cx = (gx.floor() as i64).min(self.fine_cols as i64 - 1);
        let mut cy = (gy.floor() as i64).min(self.fine_rows as i64 - 1);
        let limit = max_range / FINE_CELL;

        let (step_x, mut t_max_x, t_delta_x) = axis_setup(gx, cx, dx);
        let (step_y, mut t_max_y, t_delta_y) = axis_setup(gy, cy, dy);

        loop {
            let t = if t_max_x < t_max_y {
                let t = t_max_x;
                cx += step_x;
                t_max_x += t_delta_x;
                t
            } else {
                let t = t_max_y;
                cy += step_y;
                t_max_y += t_delta_y;
                t
            };
            if t > limit {
                return Ok(None);
            }
            if self.is_obstacle(cx, cy) {
                return Ok(Some(t * FINE_CELL));
            }
        }
    }

    /// Nine raycasts at the fixed sensor offsets around the heading.
    pub fn sense(&self, pose: &Pose) -> Result<ScanResult> {
        let rays = ray_offsets()
            .iter()
            .map(|&offset| {
                Ok(Ray {
                    bearing_offset: offset,
                    hit: self.raycast(pose, pose.theta + offset, SENSOR_RANGE)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScanResult { rays })
    }
}

fn axis_setup(g: f64, cell: i64, d: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, ((cell + 1) as f64 - g) / d, 1.0 / d)
    } else if d < 0.0 {
        (-1, (cell as f64 - g) / d, -1.0 / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Parses an ASCII map document.
///
/// Alphabet: `#` obstacle, `.` free, `C` charging station, `S` spawn cell.
/// Stations are placed at block centers; the spawn region is the bounding box
/// of all `S` blocks.
pub fn load_environment(text: &str) -> Result<EnvironmentMap> {
    let lines: Vec<&str> = text
        .strip_suffix('\n')
        .unwrap_or(text)
        .split('\n')
        .collect();
    if lines.len() == 1 && lines[0].is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty map document".into(),
        });
    }
    let width = lines[0].chars().count();
    let height = lines.len();
    let fine_cols = width * FINE_PER_BLOCK;
    let fine_rows = height * FINE_PER_BLOCK;
    let mut obstacles = vec![false; fine_cols * fine_rows];
    let mut stations = Vec::new();
    let mut spawn: Option<(usize, usize, usize, usize)> = None;

    for (row, line) in lines.iter().enumerate() {
        let len = line.chars().count();
        if len != width {
            return Err(Error::Parse {
                line: row + 1,
                column: len.min(width) + 1,
                message: format!("row has {len} blocks, expected {width}"),
            });
        }
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '#' => {
                    for fr in row * FINE_PER_BLOCK..(row + 1) * FINE_PER_BLOCK {
                        let base = fr * fine_cols;
                        obstacles[base + col * FINE_PER_BLOCK..base + (col + 1) * FINE_PER_BLOCK]
                            .fill(true);
                    }
                }
                '.' => {}
                'C' => stations.push((
                    (col as f64 + 0.5) * BLOCK_SIZE,
                    (row as f64 + 0.5) * BLOCK_SIZE,
                )),
                'S' => {
                    spawn = Some(match spawn {
                        None => (col, row, col, row),
                        Some((c0, r0, c1, r1)) => {
                            (c0.min(col), r0.min(row), c1.max(col), r1.max(row))
                        }
                    })
                }
                other => {
                    return Err(Error::Parse {
                        line: row + 1,
                        column: col + 1,
                        message: format!("unknown map character {other:?}"),
                    })
                }
            }
        }
    }

    let (c0, r0, c1, r1) = spawn.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "map has no spawn cell 'S'".into(),
    })?;
    let spawn_region = Rect {
        min_x: c0 as f64 * BLOCK_SIZE,
        min_y: r0 as f64 * BLOCK_SIZE,
        max_x: (c1 + 1) as f64 * BLOCK_SIZE,
        max_y: (r1 + 1) as f64 * BLOCK_SIZE,
    };
    EnvironmentMap::from_raster(fine_cols, fine_rows, obstacles, stations, spawn_region)
}
