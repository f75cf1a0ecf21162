//! Target selection for team leaders.
//!
//! Two strategies pick a frontier cell for a team:
//! - the baseline draws a distance quantile from `Normal(μ_i, 0.02)` clipped
//!   to `[0, 1]`, where `μ_i` is the leader's fixed bias, and takes the
//!   frontier at that quantile;
//! - the language-model strategy renders the map around the leader as a cell
//!   list, asks a [`ChatClient`] for a target, validates it against the
//!   frontier set, and retries up to five times before falling back to the
//!   baseline.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::sync::LazyLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::ChatClient;
use crate::mapping::{CellClass, CellCoord, OccupancyGrid};
use crate::world::Pose;

pub const QUANTILE_STDDEV: f64 = 0.02;
pub const BIAS_RANGE: (f64, f64) = (0.10, 0.25);
/// Retries after the first request.
pub const MAX_RETRIES: u32 = 5;
pub const MAX_ATTEMPTS: u32 = MAX_RETRIES + 1;
/// Cap on label-1 and label-2 records each; frontier records are never cut.
pub const RECORD_CAP: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Explored = 1,
    Obstacle = 2,
    Frontier = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub coord: CellCoord,
    pub label: Label,
    pub n_frontier_neighbors: u8,
    pub n_occupied_neighbors: u8,
    /// Meters from the leader to the cell center.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtherTeam {
    pub team_id: usize,
    pub leader_position: Pose,
    pub target: Option<CellCoord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionContext {
    pub cell_records: Vec<CellRecord>,
    pub leader_position: Pose,
    pub other_teams: Vec<OtherTeam>,
}

impl SelectionContext {
    pub fn frontier_records(&self) -> impl Iterator<Item = &CellRecord> {
        self.cell_records
            .iter()
            .filter(|r| r.label == Label::Frontier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Llm,
    LlmFallback,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Llm => "llm",
            Method::LlmFallback => "llm_fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDecision {
    pub target: CellCoord,
    pub method: Method,
    pub attempts: u32,
    pub rationale: String,
}

fn distance_to(leader: &Pose, c: CellCoord, cell_size: f64) -> f64 {
    let (x, y) = (
        (c.col as f64 + 0.5) * cell_size,
        (c.row as f64 + 0.5) * cell_size,
    );
    leader.distance_to(x, y)
}

/// Sorts ascending by distance, ties in row-major order.
fn sort_by_distance(items: &mut [(CellCoord, f64)]) {
    items.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Cell list for one leader: every frontier cell (row-major), then the
/// nearest explored free cells, then the nearest occupied cells.
pub fn build_context(
    grid: &OccupancyGrid,
    frontiers: &[CellCoord],
    leader: &Pose,
    other_teams: Vec<OtherTeam>,
) -> Result<SelectionContext> {
    let cs = grid.cell_size();
    let frontier_set: BTreeSet<CellCoord> = frontiers.iter().copied().collect();
    let mut free = Vec::new();
    let mut occupied = Vec::new();
    for i in 0..grid.len() {
        let c = grid.coord(i);
        match grid.class_at(i) {
            CellClass::Free if !frontier_set.contains(&c) => {
                free.push((c, distance_to(leader, c, cs)))
            }
            CellClass::Occupied => occupied.push((c, distance_to(leader, c, cs))),
            _ => {}
        }
    }
    sort_by_distance(&mut free);
    sort_by_distance(&mut occupied);

    let record = |c: CellCoord, label: Label, d: f64| -> Result<CellRecord> {
        let (nf, no) = grid.neighborhood_features(c, &frontier_set)?;
        Ok(CellRecord {
            coord: c,
            label,
            n_frontier_neighbors: nf,
            n_occupied_neighbors: no,
            distance: d,
        })
    };
    let mut records = Vec::with_capacity(frontier_set.len() + 2 * RECORD_CAP);
    for &c in &frontier_set {
        records.push(record(c, Label::Frontier, distance_to(leader, c, cs))?);
    }
    for &(c, d) in free.iter().take(RECORD_CAP) {
        records.push(record(c, Label::Explored, d)?);
    }
    for &(c, d) in occupied.iter().take(RECORD_CAP) {
        records.push(record(c, Label::Obstacle, d)?);
    }
    Ok(SelectionContext {
        cell_records: records,
        leader_position: *leader,
        other_teams,
    })
}

/// One quantile draw from `Normal(bias, 0.02)` clipped to `[0, 1]`.
pub fn sample_quantile(bias: f64, rng: &mut impl Rng) -> f64 {
    let normal = Normal::new(bias, QUANTILE_STDDEV).expect("positive stddev");
    normal.sample(rng).clamp(0.0, 1.0)
}

/// Index of quantile `q` in a list of `len` items, nearest rank.
pub fn quantile_index(q: f64, len: usize) -> usize {
    (q * (len - 1) as f64).round() as usize
}

/// Frontier at a sampled distance quantile.
pub fn baseline_select(
    frontiers_with_distance: &[(CellCoord, f64)],
    bias: f64,
    rng: &mut impl Rng,
) -> Result<CellCoord> {
    if frontiers_with_distance.is_empty() {
        return Err(Error::NoFrontier);
    }
    let mut sorted = frontiers_with_distance.to_vec();
    sort_by_distance(&mut sorted);
    let q = sample_quantile(bias, rng);
    Ok(sorted[quantile_index(q, sorted.len())].0)
}

/// Pairs every frontier with its distance from `leader`.
pub fn frontier_distances(
    frontiers: &[CellCoord],
    leader: &Pose,
    cell_size: f64,
) -> Vec<(CellCoord, f64)> {
    frontiers
        .iter()
        .map(|&c| (c, distance_to(leader, c, cell_size)))
        .collect()
}

pub const TARGET_CONTRACT: &str =
    "Reply with reasoning, then a final line exactly: TARGET: (col,row)";

/// Deterministic prompt text for a selection context.
pub fn render_prompt(ctx: &SelectionContext) -> String {
    let mut p = String::new();
    p.push_str(
        "You coordinate one team of small exploration robots mapping an unknown 2D environment.\n\
         The map is a grid of 0.5 m cells addressed as (col,row).\n\
         Select the next target frontier cell for the team for efficient exploration.\n\
         Prefer frontier cells with more frontier neighbors (nf) and fewer obstacle neighbors (no).\n\
         Avoid cells that other teams are already targeting, and consider the distance d (meters) from the team leader.\n\
         Cell labels: 1 = explored non-obstacle cell, 2 = explored obstacle cell, 3 = frontier cell.\n\
         nf and no count frontier and obstacle cells among the 8 neighbors.\n\n",
    );
    let lp = &ctx.leader_position;
    let _ = writeln!(p, "Team leader position: x={:.2} y={:.2}", lp.x, lp.y);
    p.push('\n');
    p.push_str("Other teams:\n");
    if ctx.other_teams.is_empty() {
        p.push_str("none\n");
    }
    for t in &ctx.other_teams {
        let target = t
            .target
            .map_or_else(|| "none".to_owned(), |c| format!("({},{})", c.col, c.row));
        let _ = writeln!(
            p,
            "team {}: leader x={:.2} y={:.2} target={}",
            t.team_id, t.leader_position.x, t.leader_position.y, target
        );
    }
    p.push('\n');
    p.push_str("Cells:\n");
    for r in &ctx.cell_records {
        let _ = writeln!(
            p,
            "({},{}) label={} nf={} no={} d={:.2}",
            r.coord.col,
            r.coord.row,
            r.label as u8,
            r.n_frontier_neighbors,
            r.n_occupied_neighbors,
            r.distance
        );
    }
    p.push('\n');
    p.push_str(TARGET_CONTRACT);
    p.push('\n');
    p
}

static TARGET_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*TARGET:\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$").expect("valid regex")
});

/// Last `TARGET: (col,row)` line of a reply.
pub fn parse_response(text: &str) -> Option<CellCoord> {
    text.lines().rev().find_map(|line| {
        let c = TARGET_LINE.captures(line)?;
        Some(CellCoord::new(c[1].parse().ok()?, c[2].parse().ok()?))
    })
}

/// Asks `client` for a target up to [`MAX_ATTEMPTS`] times. An attempt fails
/// on a transport error, an unparseable reply, or a cell outside
/// `frontier_set`; once all attempts fail the baseline picks the target.
pub fn llm_select<F>(
    ctx: &SelectionContext,
    client: &dyn ChatClient,
    frontier_set: &BTreeSet<CellCoord>,
    baseline_fallback: F,
) -> Result<TargetDecision>
where
    F: FnOnce() -> Result<CellCoord>,
{
    let prompt = render_prompt(ctx);
    for attempt in 1..=MAX_ATTEMPTS {
        let Ok(reply) = client.complete(&prompt) else {
            continue;
        };
        if let Some(target) = parse_response(&reply).filter(|t| frontier_set.contains(t)) {
            return Ok(TargetDecision {
                target,
                method: Method::Llm,
                attempts: attempt,
                rationale: reply,
            });
        }
    }
    Ok(TargetDecision {
        target: baseline_fallback()?,
        method: Method::LlmFallback,
        attempts: MAX_ATTEMPTS,
        rationale: String::new(),
    })
}
