//! Shared occupancy belief: a log-odds grid over 0.5 m cells.
//!
//! Values are deviations from the uniform prior (0 ⇔ p = 0.5) and are kept
//! within `[-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP]`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::world::{Pose, ScanResult, SENSOR_RANGE};

pub const CELL_SIZE: f64 = 0.5;
pub const L_OCC: f64 = 0.85;
pub const L_FREE: f64 = -0.4;
pub const LOG_ODDS_CLAMP: f64 = 10.0;
pub const P_OCCUPIED: f64 = 0.65;
pub const P_FREE: f64 = 0.35;

// Hit points lie on obstacle boundaries; this pushes them into the struck cell.
const HIT_NUDGE: f64 = 1e-6;

/// Grid index. Ordered row-major: by row, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellCoord {
    pub col: usize,
    pub row: usize,
}

impl CellCoord {
    pub const fn new(col: usize, row: usize) -> Self {
        CellCoord { col, row }
    }

    /// Center of the cell in meters.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.col as f64 + 0.5) * CELL_SIZE,
            (self.row as f64 + 0.5) * CELL_SIZE,
        )
    }

    pub fn manhattan(&self, other: &CellCoord) -> usize {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row)
    }
}

impl Ord for CellCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.row, self.col).cmp(&(other.row, other.col))
    }
}

impl PartialOrd for CellCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Free,
    Occupied,
    Unknown,
}

pub fn probability(log_odds: f64) -> f64 {
    1.0 / (1.0 + (-log_odds).exp())
}

pub fn class_of(log_odds: f64) -> CellClass {
    let p = probability(log_odds);
    if p >= P_OCCUPIED {
        CellClass::Occupied
    } else if p <= P_FREE {
        CellClass::Free
    } else {
        CellClass::Unknown
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    cols: usize,
    rows: usize,
    log_odds: Vec<f64>,
}

impl OccupancyGrid {
    /// All-prior grid.
    pub fn new(cols: usize, rows: usize) -> Self {
        OccupancyGrid {
            cols,
            rows,
            log_odds: vec![0.0; cols * rows],
        }
    }

    /// Grid covering a `width_m` x `height_m` area.
    pub fn covering(width_m: f64, height_m: f64) -> Self {
        // 1e-9 absorbs float noise in exact multiples of the cell size
        let cols = (width_m / CELL_SIZE - 1e-9).ceil().max(1.0) as usize;
        let rows = (height_m / CELL_SIZE - 1e-9).ceil().max(1.0) as usize;
        Self::new(cols, rows)
    }

    /// Grid from explicit values, clamped.
    pub fn from_log_odds(cols: usize, rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != cols * rows {
            return Err(Error::domain(format!(
                "{} values for a {cols}x{rows} grid",
                values.len()
            )));
        }
        Ok(OccupancyGrid {
            cols,
            rows,
            log_odds: values.into_iter().map(clamp).collect(),
        })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cell_size(&self) -> f64 {
        CELL_SIZE
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.log_odds
    }

    pub fn in_bounds(&self, cell: CellCoord) -> bool {
        cell.col < self.cols && cell.row < self.rows
    }

    pub fn index(&self, cell: CellCoord) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn coord(&self, index: usize) -> CellCoord {
        CellCoord::new(index % self.cols, index / self.cols)
    }

    fn check(&self, cell: CellCoord) -> Result<()> {
        if self.in_bounds(cell) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "cell ({}, {}) outside {}x{} grid",
                cell.col, cell.row, self.cols, self.rows
            )))
        }
    }

    pub fn log_odds(&self, cell: CellCoord) -> f64 {
        self.log_odds[self.index(cell)]
    }

    pub fn add(&mut self, cell: CellCoord, delta: f64) {
        let i = self.index(cell);
        self.log_odds[i] = clamp(self.log_odds[i] + delta);
    }

    pub fn probability(&self, cell: CellCoord) -> f64 {
        probability(self.log_odds(cell))
    }

    /// Cell containing a metric point, if it lies on the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellCoord> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let c = CellCoord::new((x / CELL_SIZE) as usize, (y / CELL_SIZE) as usize);
        self.in_bounds(c).then_some(c)
    }

    pub fn classify(&self, cell: CellCoord) -> Result<CellClass> {
        self.check(cell)?;
        Ok(self.class_unchecked(cell))
    }

    pub(crate) fn class_unchecked(&self, cell: CellCoord) -> CellClass {
        class_of(self.log_odds(cell))
    }

    pub fn class_at(&self, index: usize) -> CellClass {
        class_of(self.log_odds[index])
    }

    /// In-bounds 4-neighbors in the order left, right, up, down.
    pub fn neighbors4(&self, cell: CellCoord) -> impl Iterator<Item = CellCoord> + '_ {
        const D: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        D.iter()
            .filter_map(move |&(dc, dr)| self.offset(cell, dc, dr))
    }

    pub fn neighbors8(&self, cell: CellCoord) -> impl Iterator<Item = CellCoord> + '_ {
        const D: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        D.iter()
            .filter_map(move |&(dc, dr)| self.offset(cell, dc, dr))
    }

    fn offset(&self, cell: CellCoord, dc: isize, dr: isize) -> Option<CellCoord> {
        let c = cell.col.checked_add_signed(dc)?;
        let r = cell.row.checked_add_signed(dr)?;
        let out = CellCoord::new(c, r);
        self.in_bounds(out).then_some(out)
    }

    /// Applies the inverse sensor model for one scan taken at `pose`.
    ///
    /// Per ray: cells the beam passes through before its endpoint get
    /// `L_FREE`; on a hit the struck cell gets `L_OCC`; a miss frees the whole
    /// 1 m beam.
    pub fn integrate_scan(&mut self, pose: &Pose, scan: &ScanResult) -> Result<()> {
        if self.cell_at(pose.x, pose.y).is_none() {
            return Err(Error::domain(format!(
                "pose ({}, {}) outside grid extents",
                pose.x, pose.y
            )));
        }
        for ray in &scan.rays {
            let bearing = pose.theta + ray.bearing_offset;
            let (dy, dx) = bearing.sin_cos();
            let length = ray.hit.unwrap_or(SENSOR_RANGE);
            let end = (pose.x + dx * length, pose.y + dy * length);
            let cells = supercover(self, (pose.x, pose.y), end);
            match ray.hit {
                Some(d) => {
                    let struck =
                        self.cell_at(pose.x + dx * (d + HIT_NUDGE), pose.y + dy * (d + HIT_NUDGE));
                    for &c in cells.iter().filter(|&&c| Some(c) != struck) {
                        self.add(c, L_FREE);
                    }
                    if let Some(c) = struck {
                        self.add(c, L_OCC);
                    }
                }
                None => {
                    for &c in &cells {
                        self.add(c, L_FREE);
                    }
                }
            }
        }
        Ok(())
    }

    /// Free cells with at least one Unknown 4-neighbor, row-major.
    pub fn detect_frontiers(&self) -> Vec<CellCoord> {
        let classes: Vec<CellClass> = self.log_odds.iter().map(|&l| class_of(l)).collect();
        let mut out = Vec::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                let cell = CellCoord::new(col, row);
                if classes[self.index(cell)] != CellClass::Free {
                    continue;
                }
                if self
                    .neighbors4(cell)
                    .any(|n| classes[self.index(n)] == CellClass::Unknown)
                {
                    out.push(cell);
                }
            }
        }
        out
    }

    /// `(frontier neighbors, occupied neighbors)` over the 8-neighborhood.
    pub fn neighborhood_features(
        &self,
        cell: CellCoord,
        frontier_set: &BTreeSet<CellCoord>,
    ) -> Result<(u8, u8)> {
        self.check(cell)?;
        let mut nf = 0;
        let mut no = 0;
        for n in self.neighbors8(cell) {
            if frontier_set.contains(&n) {
                nf += 1;
            }
            if self.class_unchecked(n) == CellClass::Occupied {
                no += 1;
            }
        }
        Ok((nf, no))
    }

    /// Cell-wise log-odds sum, clamped.
    pub fn fuse(&self, other: &OccupancyGrid) -> Result<OccupancyGrid> {
        if self.cols != other.cols || self.rows != other.rows {
            return Err(Error::domain(format!(
                "cannot fuse {}x{} with {}x{}",
                self.cols, self.rows, other.cols, other.rows
            )));
        }
        Ok(OccupancyGrid {
            cols: self.cols,
            rows: self.rows,
            log_odds: self
                .log_odds
                .iter()
                .zip(&other.log_odds)
                .map(|(a, b)| clamp(a + b))
                .collect(),
        })
    }

    /// Binary PGM: Occupied 0, Unknown 128, Free 255, row 0 first.
    pub fn write_pgm(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self
            .log_odds
            .iter()
            .map(|&l| match class_of(l) {
                CellClass::Occupied => 0,
                CellClass::Unknown => 128,
                CellClass::Free => 255,
            })
            .collect();
        out.write_all(&bytes)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_pgm(&mut file)
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(path, e))
    }
}

pub fn save_frontier_csv(path: &Path, frontiers: &[CellCoord]) -> Result<()> {
    let mut text = String::from("col,row\n");
    for f in frontiers {
        text.push_str(&format!("{},{}\n", f.col, f.row));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn clamp(l: f64) -> f64 {
    l.clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP)
}

/// Every in-bounds grid cell the segment `a → b` passes through, in travel
/// order. When the segment crosses a cell corner exactly, both side cells are
/// included. A cell touched only at `b` is not included.
pub fn supercover(grid: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> Vec<CellCoord> {
    let (ax, ay) = (a.0 / CELL_SIZE, a.1 / CELL_SIZE);
    let (bx, by) = (b.0 / CELL_SIZE, b.1 / CELL_SIZE);
    let (dx, dy) = (bx - ax, by - ay);
    let mut cx = ax.floor() as i64;
    let mut cy = ay.floor() as i64;

    let axis = |g: f64, cell: i64, d: f64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((cell + 1) as f64 - g) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (cell as f64 - g) / d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, tdx) = axis(ax, cx, dx);
    let (sy, mut ty, tdy) = axis(ay, cy, dy);

    let mut out = Vec::new();
    let mut push = |c: i64, r: i64| {
        if c >= 0 && r >= 0 {
            let cell = CellCoord::new(c as usize, r as usize);
            if grid.in_bounds(cell) {
                out.push(cell);
            }
        }
    };
    push(cx, cy);
    const TIE: f64 = 1e-12;
    loop {
        let t = tx.min(ty);
        if t >= 1.0 {
            break;
        }
        if (tx - ty).abs() <= TIE {
            push(cx + sx, cy);
            push(cx, cy + sy);
            cx += sx;
            cy += sy;
            tx += tdx;
            ty += tdy;
        } else if tx < ty {
            cx += sx;
            tx += tdx;
        } else {
            cy += sy;
            ty += tdy;
        }
        push(cx, cy);
    }
    out
}
