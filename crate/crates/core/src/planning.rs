//! A* over the occupancy grid with occupancy probability as the step cost.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mapping::{CellClass, CellCoord, OccupancyGrid};

/// Weight on occupancy probability in the cost of entering a cell.
pub const PROBABILITY_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub cells: Vec<CellCoord>,
    pub total_cost: f64,
}

impl Route {
    pub fn start(&self) -> CellCoord {
        self.cells[0]
    }

    pub fn goal(&self) -> CellCoord {
        *self.cells.last().expect("route is never empty")
    }
}

/// Costs are accumulated as integers in units of `1 / COST_SCALE` so that a
/// route's total does not depend on the order its steps were summed in.
pub const COST_SCALE: f64 = 1e9;

/// Cost of stepping into `cell` in fixed-point units, or `None` if it is
/// Occupied.
pub fn entry_cost_units(grid: &OccupancyGrid, cell: CellCoord) -> Option<u64> {
    match grid.class_unchecked(cell) {
        CellClass::Occupied => None,
        _ => {
            Some(((1.0 + PROBABILITY_WEIGHT * grid.probability(cell)) * COST_SCALE).round() as u64)
        }
    }
}

/// Cost of stepping into `cell`, or `None` if it is Occupied.
pub fn entry_cost(grid: &OccupancyGrid, cell: CellCoord) -> Option<f64> {
    entry_cost_units(grid, cell).map(|u| u as f64 / COST_SCALE)
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: u64,
    h: u64,
    cell: CellCoord,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .cmp(&other.f)
            .then(self.h.cmp(&other.h))
            .then(self.cell.cmp(&other.cell))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimal-cost 4-connected route from `start` to `goal`.
///
/// Occupied cells are impassable; Free and Unknown cells cost `1 + 10·p` to
/// enter. Ties in the open list break on lower f, then lower h, then
/// row-major cell order. The start cell is never entered, so it is not
/// required to be passable.
pub fn plan_route(
    grid: &OccupancyGrid,
    start: CellCoord,
    goal: CellCoord,
) -> Result<Option<Route>> {
    for (name, c) in [("start", start), ("goal", goal)] {
        if !grid.in_bounds(c) {
            return Err(Error::domain(format!(
                "{name} ({}, {}) outside {}x{} grid",
                c.col,
                c.row,
                grid.cols(),
                grid.rows()
            )));
        }
    }
    if start == goal {
        return Ok(Some(Route {
            cells: vec![start],
            total_cost: 0.0,
        }));
    }
    if entry_cost_units(grid, goal).is_none() {
        return Ok(None);
    }

    let n = grid.len();
    let mut g = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let si = grid.index(start);
    g[si] = 0;
    let unit = COST_SCALE as u64;
    let h0 = start.manhattan(&goal) as u64 * unit;
    open.push(Reverse(OpenEntry {
        f: h0,
        h: h0,
        cell: start,
    }));

    while let Some(Reverse(entry)) = open.pop() {
        let ci = grid.index(entry.cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if entry.cell == goal {
            let mut cells = vec![goal];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                cells.push(grid.coord(i));
            }
            cells.reverse();
            return Ok(Some(Route {
                cells,
                total_cost: g[ci] as f64 / COST_SCALE,
            }));
        }
        for next in grid.neighbors4(entry.cell) {
            let ni = grid.index(next);
            if closed[ni] {
                continue;
            }
            let Some(step) = entry_cost_units(grid, next) else {
                continue;
            };
            let tentative = g[ci] + step;
            if tentative < g[ni] {
                g[ni] = tentative;
                parent[ni] = ci;
                let h = next.manhattan(&goal) as u64 * unit;
                open.push(Reverse(OpenEntry {
                    f: tentative + h,
                    h,
                    cell: next,
                }));
            }
        }
    }
    Ok(None)
}
