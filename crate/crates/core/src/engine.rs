//! The simulation loop.
//!
//! Each step runs fixed phases in order:
//! 1. every robot senses and its scan is folded into the shared grid
//!    (ascending robot id);
//! 2. battery drain/charge and mode switching;
//! 3. team maintenance: departures, then merges;
//! 4. target maintenance: teams with no valid target select one
//!    (baseline during warm-up or for the baseline method, otherwise the
//!    model pipeline); results are applied in ascending team id;
//! 5. every robot plans a route to its team target, or to the nearest
//!    charging station in charge mode;
//! 6. every robot acts and moves (ascending robot id);
//! 7. metrics are recorded.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    apply_motion, avoid_action, choose_action, steer_towards, update_battery_and_mode, Action,
    Mode, RobotId, RobotState, TeamId, ROBOT_RADIUS,
};
use crate::config::{SimConfig, Strategy};
use crate::error::{Error, Result};
use crate::llm::{ChatClient, HeuristicMock, HttpChatClient};
use crate::mapping::{save_frontier_csv, CellClass, CellCoord, OccupancyGrid};
use crate::planning::plan_route;
use crate::rng::substream;
use crate::selection::{
    baseline_select, build_context, frontier_distances, llm_select, Method, OtherTeam,
    TargetDecision, BIAS_RANGE,
};
use crate::teams::{TeamEvent, TeamRegistry};
use crate::world::{EnvironmentMap, Pose};

pub const INITIAL_BATTERY: (f64, f64) = (0.6, 1.0);
/// Rejection-sampling budget per robot when placing the swarm.
pub const PLACEMENT_TRIES_PER_ROBOT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Cells currently Free or Occupied.
    pub explored_cells: usize,
    /// Cells that have left Unknown at least once; the reported explored area.
    pub ever_explored_cells: usize,
    pub free_cells: usize,
    pub occupied_cells: usize,
    pub frontier_count: usize,
    pub n_teams: usize,
    pub n_chr: usize,
    pub llm_calls: u64,
    pub llm_fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventRecord {
    pub step: usize,
    pub event: String,
    pub team_ids: String,
    pub robot_ids: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub step: usize,
    pub team_id: TeamId,
    pub method: Method,
    pub attempts: u32,
    pub target_col: usize,
    pub target_row: usize,
    pub n_frontier_neighbors: u8,
    pub n_occupied_neighbors: u8,
    pub distance: f64,
}

/// What a finished run leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SimConfig,
    pub steps: usize,
    pub final_explored_cells: usize,
    pub final_nonunknown_cells: usize,
    pub baseline_decisions: usize,
    pub llm_decisions: usize,
    pub llm_fallback_decisions: usize,
    pub wall_time_secs: f64,
}

fn join_ids<T: ToString>(ids: impl IntoIterator<Item = T>) -> String {
    ids.into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Builds the chat client a strategy needs.
pub fn client_for(cfg: &SimConfig) -> Result<Option<Arc<dyn ChatClient>>> {
    Ok(match cfg.method {
        Strategy::Baseline => None,
        Strategy::MockHeuristic => Some(Arc::new(HeuristicMock::new(cfg.heuristic))),
        Strategy::Llm => Some(Arc::new(
            HttpChatClient::new(cfg.llm.clone()).map_err(|e| Error::Config(e.to_string()))?,
        )),
    })
}

pub struct Simulation {
    cfg: SimConfig,
    env: EnvironmentMap,
    grid: OccupancyGrid,
    robots: Vec<RobotState>,
    teams: TeamRegistry,
    client: Option<Arc<dyn ChatClient>>,
    baseline_rngs: Vec<ChaCha8Rng>,
    step: usize,
    ever_explored: Vec<bool>,
    ever_count: usize,
    /// Cell in which a robot last had its forward move blocked.
    avoiding: Vec<Option<CellCoord>>,
    unreachable: BTreeSet<TeamId>,
    llm_calls: u64,
    llm_fallbacks: u64,
    metrics: Vec<StepMetrics>,
    events: Vec<EventRecord>,
    decisions: Vec<DecisionRecord>,
}

impl Simulation {
    /// Loads the configured world and builds the configured client.
    pub fn initialize(cfg: SimConfig) -> Result<Self> {
        let env = EnvironmentMap::load(&cfg.env_path)?;
        let client = client_for(&cfg)?;
        Self::with_client(cfg, env, client)
    }

    /// Places the swarm in the spawn region. Every robot starts as its own
    /// exploring team on an all-prior grid.
    pub fn with_client(
        cfg: SimConfig,
        env: EnvironmentMap,
        client: Option<Arc<dyn ChatClient>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.method.uses_llm_pipeline() && client.is_none() {
            return Err(Error::Config(format!(
                "method {} needs a chat client",
                cfg.method
            )));
        }
        let n = cfg.n_robots;
        let poses = place_robots(&env, n, cfg.seed)?;
        let mut robots: Vec<RobotState> = poses
            .into_iter()
            .enumerate()
            .map(|(i, pose)| {
                let battery = substream(cfg.seed, "battery", i as u64)
                    .random_range(INITIAL_BATTERY.0..=INITIAL_BATTERY.1);
                let bias =
                    substream(cfg.seed, "bias", i as u64).random_range(BIAS_RANGE.0..=BIAS_RANGE.1);
                RobotState::new(i, pose, battery, bias)
            })
            .collect();
        let teams = TeamRegistry::singletons(&mut robots);
        let baseline_rngs = (0..n)
            .map(|i| substream(cfg.seed, "baseline", i as u64))
            .collect();
        let grid = OccupancyGrid::covering(env.width_m(), env.height_m());
        let cells = grid.len();
        Ok(Simulation {
            cfg,
            env,
            grid,
            robots,
            teams,
            client,
            baseline_rngs,
            step: 0,
            ever_explored: vec![false; cells],
            ever_count: 0,
            avoiding: vec![None; n],
            unreachable: BTreeSet::new(),
            llm_calls: 0,
            llm_fallbacks: 0,
            metrics: Vec::new(),
            events: Vec::new(),
            decisions: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn env(&self) -> &EnvironmentMap {
        &self.env
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn teams(&self) -> &TeamRegistry {
        &self.teams
    }

    /// Number of steps completed.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn metrics(&self) -> &[StepMetrics] {
        &self.metrics
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.total_steps
    }

    /// Overrides a team's target. The cell must currently be a frontier.
    pub fn assign_target(&mut self, team_id: TeamId, cell: CellCoord) -> Result<()> {
        if !self.grid.detect_frontiers().contains(&cell) {
            return Err(Error::domain(format!(
                "({}, {}) is not a frontier",
                cell.col, cell.row
            )));
        }
        let team = self
            .teams
            .get_mut(team_id)
            .ok_or_else(|| Error::domain(format!("no team {team_id}")))?;
        team.target = Some(cell);
        Ok(())
    }

    fn cell_of(&self, pose: &Pose) -> CellCoord {
        self.grid
            .cell_at(pose.x, pose.y)
            .expect("robots stay inside the map")
    }

    fn event(&mut self, event: &str, team_ids: String, robot_ids: String, detail: String) {
        self.events.push(EventRecord {
            step: self.step,
            event: event.to_owned(),
            team_ids,
            robot_ids,
            detail,
        });
    }

    /// Advances one step and returns its metrics.
    pub fn step(&mut self) -> Result<StepMetrics> {
        if self.is_finished() {
            return Err(Error::domain(format!(
                "simulation already ran its {} steps",
                self.cfg.total_steps
            )));
        }
        self.sense_phase()?;
        self.battery_phase();
        let team_events = self.team_phase();
        let frontiers = self.target_phase()?;
        self.planning_phase()?;
        self.motion_phase()?;
        let m = self.record_metrics(frontiers.len());
        if self.cfg.check_invariants {
            self.check_invariants(&team_events)?;
        }
        self.step += 1;
        Ok(m)
    }

    fn sense_phase(&mut self) -> Result<()> {
        for r in &self.robots {
            let scan = self.env.sense(&r.pose)?;
            self.grid.integrate_scan(&r.pose, &scan)?;
        }
        Ok(())
    }

    fn station_cells(&self) -> Vec<CellCoord> {
        self.env
            .charging_stations()
            .iter()
            .filter_map(|&(x, y)| self.grid.cell_at(x, y))
            .collect()
    }

    fn battery_phase(&mut self) {
        let stations = self.station_cells();
        for i in 0..self.robots.len() {
            let cell = self.cell_of(&self.robots[i].pose);
            let at_station = stations.contains(&cell);
            let r = &mut self.robots[i];
            if let Some(mode) = update_battery_and_mode(r, at_station) {
                let (team, battery) = (r.team_id, r.battery);
                let name = match mode {
                    Mode::Charge => "mode_chr",
                    Mode::Explore => "mode_exp",
                };
                self.event(
                    name,
                    team.to_string(),
                    i.to_string(),
                    format!("battery={battery:.4}"),
                );
            }
        }
    }

    fn team_phase(&mut self) -> Vec<TeamEvent> {
        let mut events = self
            .teams
            .leave_step(&mut self.robots, self.cfg.general_leave_rule);
        events.extend(self.teams.merge_step(&mut self.robots, self.cfg.d_join));
        for e in &events {
            let (team_ids, robot_ids, detail) = match e {
                TeamEvent::Merge {
                    kept,
                    absorbed,
                    size_kept,
                    size_absorbed,
                    mean_desired_kept,
                    mean_desired_absorbed,
                    members,
                    leader,
                } => (
                    join_ids([kept, absorbed]),
                    join_ids(members),
                    format!(
                        "sizes={size_kept}+{size_absorbed};mean_desired={mean_desired_kept}/{mean_desired_absorbed};leader={leader}"
                    ),
                ),
                TeamEvent::Leave {
                    robot,
                    from_team,
                    new_team,
                    leader,
                    ..
                } => (
                    join_ids([from_team, new_team]),
                    robot.to_string(),
                    format!("leader={leader}"),
                ),
            };
            self.event(e.kind(), team_ids, robot_ids, detail);
        }
        events
    }

    fn is_charging_singleton(&self, team_id: TeamId) -> bool {
        let team = self.teams.get(team_id).expect("team exists");
        team.size() == 1 && self.robots[team.leader].mode == Mode::Charge
    }

    fn target_phase(&mut self) -> Result<Vec<CellCoord>> {
        let frontiers = self.grid.detect_frontiers();
        let frontier_set: BTreeSet<CellCoord> = frontiers.iter().copied().collect();

        // drop targets that are gone, reached, or unreachable
        let mut pending: Vec<(TeamId, RobotId)> = Vec::new();
        for team_id in self.teams.ids() {
            let charging = self.is_charging_singleton(team_id);
            let team = self.teams.get(team_id).expect("team exists");
            let valid = !charging
                && team.target.is_some_and(|t| {
                    frontier_set.contains(&t)
                        && !self.unreachable.contains(&team_id)
                        && !team
                            .members
                            .iter()
                            .any(|&m| self.cell_of(&self.robots[m].pose) == t)
                });
            let leader = team.leader;
            if !valid {
                self.teams.get_mut(team_id).expect("team exists").target = None;
                if !charging {
                    pending.push((team_id, leader));
                }
            }
        }
        if pending.is_empty() {
            return Ok(frontiers);
        }
        if frontiers.is_empty() {
            for &(team_id, leader) in &pending {
                self.event(
                    "no_frontier",
                    team_id.to_string(),
                    leader.to_string(),
                    String::new(),
                );
            }
            return Ok(frontiers);
        }

        let use_model = self.cfg.method.uses_llm_pipeline() && self.step >= self.cfg.warmup_steps;
        let cell_size = self.grid.cell_size();
        let mut jobs: Vec<Job> = pending
            .iter()
            .map(|&(team_id, leader)| Job {
                team_id,
                leader,
                pose: self.robots[leader].pose,
                bias: self.robots[leader].sampler_bias,
                rng: std::mem::replace(
                    &mut self.baseline_rngs[leader],
                    ChaCha8Rng::seed_from_u64(0),
                ),
                others: if use_model {
                    self.other_teams(team_id)
                } else {
                    Vec::new()
                },
                occupied: self
                    .teams
                    .get(team_id)
                    .expect("team exists")
                    .members
                    .iter()
                    .map(|&m| self.cell_of(&self.robots[m].pose))
                    .filter(|c| frontier_set.contains(c))
                    .collect(),
            })
            .collect();

        let shared = Shared {
            grid: &self.grid,
            frontiers: &frontiers,
            client: if use_model {
                self.client.as_deref()
            } else {
                None
            },
            cell_size,
        };
        let results: Vec<Result<TargetDecision>> =
            if use_model && self.cfg.concurrent_selection && jobs.len() > 1 {
                std::thread::scope(|s| {
                    let handles: Vec<_> = jobs
                        .iter_mut()
                        .map(|job| {
                            let shared = &shared;
                            s.spawn(move || shared.decide(job))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("selection thread panicked"))
                        .collect()
                })
            } else {
                jobs.iter_mut().map(|job| shared.decide(job)).collect()
            };

        for (job, result) in jobs.into_iter().zip(results) {
            self.baseline_rngs[job.leader] = job.rng;
            let decision = result?;
            debug_assert!(frontier_set.contains(&decision.target));
            let (nf, no) = self
                .grid
                .neighborhood_features(decision.target, &frontier_set)?;
            let (cx, cy) = decision.target.center();
            match decision.method {
                Method::Baseline => {}
                Method::Llm => self.llm_calls += decision.attempts as u64,
                Method::LlmFallback => {
                    self.llm_calls += decision.attempts as u64;
                    self.llm_fallbacks += 1;
                }
            }
            self.decisions.push(DecisionRecord {
                step: self.step,
                team_id: job.team_id,
                method: decision.method,
                attempts: decision.attempts,
                target_col: decision.target.col,
                target_row: decision.target.row,
                n_frontier_neighbors: nf,
                n_occupied_neighbors: no,
                distance: job.pose.distance_to(cx, cy),
            });
            self.teams.get_mut(job.team_id).expect("team exists").target = Some(decision.target);
        }
        Ok(frontiers)
    }

    fn other_teams(&self, own: TeamId) -> Vec<OtherTeam> {
        self.teams
            .iter()
            .filter(|t| t.team_id != own)
            .map(|t| OtherTeam {
                team_id: t.team_id,
                leader_position: self.robots[t.leader].pose,
                target: t.target,
            })
            .collect()
    }

    fn nearest_station(&self, pose: &Pose) -> Option<CellCoord> {
        let mut best: Option<(f64, (f64, f64))> = None;
        for &(x, y) in self.env.charging_stations() {
            let d = pose.distance_to(x, y);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (x, y)));
            }
        }
        best.and_then(|(_, (x, y))| self.grid.cell_at(x, y))
    }

    fn planning_phase(&mut self) -> Result<()> {
        self.unreachable.clear();
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            let team = self.teams.get(r.team_id).expect("team exists");
            let goal = match r.mode {
                Mode::Charge => self.nearest_station(&r.pose),
                Mode::Explore => team.target,
            };
            let start = self.cell_of(&r.pose);
            let route = match goal {
                Some(g) => plan_route(&self.grid, start, g)?,
                None => None,
            };
            if route.is_none() && goal.is_some() && team.leader == i && r.mode == Mode::Explore {
                self.unreachable.insert(team.team_id);
            }
            self.robots[i].current_route = route;
        }
        Ok(())
    }

    fn motion_phase(&mut self) -> Result<()> {
        let cs = self.grid.cell_size();
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            let Some(route) = &r.current_route else {
                continue;
            };
            let here = self.cell_of(&r.pose);
            if self.avoiding[i].is_some_and(|c| c != here) {
                self.avoiding[i] = None;
            }
            let action = match route.cells.as_slice() {
                [_, next, ..] if self.avoiding[i].is_some() => {
                    avoid_action(&self.env, &r.pose, next.center())
                        .unwrap_or_else(|| steer_towards(&r.pose, here.center()))
                }
                _ => choose_action(r, route, cs)?,
            };
            let pose = apply_motion(&self.env, &r.pose, action);
            if action == Action::Forward && pose == r.pose {
                self.avoiding[i] = Some(here);
            }
            self.robots[i].pose = pose;
        }
        Ok(())
    }

    fn record_metrics(&mut self, frontier_count: usize) -> StepMetrics {
        let (mut free, mut occupied) = (0, 0);
        for i in 0..self.grid.len() {
            let class = self.grid.class_at(i);
            match class {
                CellClass::Free => free += 1,
                CellClass::Occupied => occupied += 1,
                CellClass::Unknown => {}
            }
            if class != CellClass::Unknown && !self.ever_explored[i] {
                self.ever_explored[i] = true;
                self.ever_count += 1;
            }
        }
        let m = StepMetrics {
            step: self.step,
            explored_cells: free + occupied,
            ever_explored_cells: self.ever_count,
            free_cells: free,
            occupied_cells: occupied,
            frontier_count,
            n_teams: self.teams.len(),
            n_chr: self
                .robots
                .iter()
                .filter(|r| r.mode == Mode::Charge)
                .count(),
            llm_calls: self.llm_calls,
            llm_fallbacks: self.llm_fallbacks,
        };
        self.metrics.push(m.clone());
        m
    }

    fn check_invariants(&self, team_events: &[TeamEvent]) -> Result<()> {
        let fail = |message: String| Error::Invariant {
            step: self.step,
            message,
        };
        self.teams.check_partition(&self.robots).map_err(fail)?;
        for t in self.teams.iter() {
            if t.size() > 5
                && t.members
                    .iter()
                    .all(|&m| self.robots[m].mode == Mode::Explore)
            {
                return Err(fail(format!(
                    "exploring team {} has {} members",
                    t.team_id,
                    t.size()
                )));
            }
        }
        for e in team_events {
            if let TeamEvent::Merge {
                kept,
                size_kept,
                size_absorbed,
                mean_desired_kept,
                mean_desired_absorbed,
                ..
            } = e
            {
                if (size_kept + size_absorbed) as u64
                    > *mean_desired_kept.min(mean_desired_absorbed)
                {
                    return Err(fail(format!(
                        "merge into team {kept} violates the size condition"
                    )));
                }
            }
        }
        for r in &self.robots {
            if !(0.0..=1.0).contains(&r.battery) {
                return Err(fail(format!("robot {} battery {}", r.id, r.battery)));
            }
            if r.desired_team_size != r.mode.desired_team_size() {
                return Err(fail(format!(
                    "robot {} desired size inconsistent with mode",
                    r.id
                )));
            }
            if self.env.disc_collides(r.pose.x, r.pose.y, ROBOT_RADIUS) {
                return Err(fail(format!("robot {} overlaps an obstacle", r.id)));
            }
        }
        if let [.., prev, last] = self.metrics.as_slice() {
            if last.ever_explored_cells < prev.ever_explored_cells {
                return Err(fail("explored area decreased".into()));
            }
        }
        Ok(())
    }

    /// Runs the remaining steps, writing snapshots along the way and every
    /// output file at the end.
    pub fn run(mut self) -> Result<RunOutcome> {
        let started = Instant::now();
        let out = self.cfg.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        if self.step == 0 {
            self.snapshot(&out)?;
        }
        while !self.is_finished() {
            self.step()?;
            if let Some(every) = self.cfg.snapshot_every {
                if self.step.is_multiple_of(every) {
                    self.snapshot(&out)?;
                }
            }
        }
        self.write_logs(&out)?;
        let summary = self.summary(started.elapsed().as_secs_f64());
        let path = out.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(RunOutcome {
            summary,
            metrics: self.metrics,
            events: self.events,
            decisions: self.decisions,
        })
    }

    pub fn summary(&self, wall_time_secs: f64) -> RunSummary {
        let count = |m: Method| self.decisions.iter().filter(|d| d.method == m).count();
        RunSummary {
            config: self.cfg.clone(),
            steps: self.step,
            final_explored_cells: self.ever_count,
            final_nonunknown_cells: self.metrics.last().map_or(0, |m| m.explored_cells),
            baseline_decisions: count(Method::Baseline),
            llm_decisions: count(Method::Llm),
            llm_fallback_decisions: count(Method::LlmFallback),
            wall_time_secs,
        }
    }

    /// `map_<step>.pgm` plus `frontiers_<step>.csv`.
    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        self.grid
            .save_pgm(&dir.join(format!("map_{}.pgm", self.step)))?;
        save_frontier_csv(
            &dir.join(format!("frontiers_{}.csv", self.step)),
            &self.grid.detect_frontiers(),
        )
    }

    /// metrics.csv, events.csv and decisions.csv.
    pub fn write_logs(&self, dir: &Path) -> Result<()> {
        write_csv(
            &dir.join("metrics.csv"),
            &self.metrics,
            &[
                "step",
                "explored_cells",
                "ever_explored_cells",
                "free_cells",
                "occupied_cells",
                "frontier_count",
                "n_teams",
                "n_chr",
                "llm_calls",
                "llm_fallbacks",
            ],
        )?;
        write_csv(
            &dir.join("events.csv"),
            &self.events,
            &["step", "event", "team_ids", "robot_ids", "detail"],
        )?;
        write_csv(
            &dir.join("decisions.csv"),
            &self.decisions,
            &[
                "step",
                "team_id",
                "method",
                "attempts",
                "target_col",
                "target_row",
                "n_frontier_neighbors",
                "n_occupied_neighbors",
                "distance",
            ],
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub metrics: Vec<StepMetrics>,
    pub events: Vec<EventRecord>,
    pub decisions: Vec<DecisionRecord>,
}

/// Loads, runs and writes one configured simulation.
pub fn run(cfg: SimConfig) -> Result<RunOutcome> {
    Simulation::initialize(cfg)?.run()
}

// the header is written explicitly so empty logs still carry one
fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: PathBuf::from(path),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Job {
    team_id: TeamId,
    leader: RobotId,
    pose: Pose,
    bias: f64,
    rng: ChaCha8Rng,
    others: Vec<OtherTeam>,
    /// Frontier cells the team already stands on.
    occupied: BTreeSet<CellCoord>,
}

struct Shared<'a> {
    grid: &'a OccupancyGrid,
    frontiers: &'a [CellCoord],
    client: Option<&'a dyn ChatClient>,
    cell_size: f64,
}

impl Shared<'_> {
    fn decide(&self, job: &mut Job) -> Result<TargetDecision> {
        // a cell a member stands on would count as reached right away
        let mut frontiers: Vec<CellCoord> = self
            .frontiers
            .iter()
            .copied()
            .filter(|c| !job.occupied.contains(c))
            .collect();
        if frontiers.is_empty() {
            frontiers = self.frontiers.to_vec();
        }
        let frontier_set: BTreeSet<CellCoord> = frontiers.iter().copied().collect();
        let candidates = frontier_distances(&frontiers, &job.pose, self.cell_size);
        let Some(client) = self.client else {
            return Ok(TargetDecision {
                target: baseline_select(&candidates, job.bias, &mut job.rng)?,
                method: Method::Baseline,
                attempts: 0,
                rationale: String::new(),
            });
        };
        let ctx = build_context(
            self.grid,
            &frontiers,
            &job.pose,
            std::mem::take(&mut job.others),
        )?;
        let rng = &mut job.rng;
        llm_select(&ctx, client, &frontier_set, || {
            baseline_select(&candidates, job.bias, rng)
        })
    }
}

fn place_robots(env: &EnvironmentMap, n: usize, seed: u64) -> Result<Vec<Pose>> {
    let region = env.spawn_region();
    let mut budget = PLACEMENT_TRIES_PER_ROBOT * n;
    let mut placed: Vec<Pose> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(seed, "placement", i as u64);
        loop {
            if budget == 0 {
                return Err(Error::Init(format!(
                    "spawn region {:.2}x{:.2} m cannot hold {n} robots (placed {})",
                    region.width(),
                    region.height(),
                    placed.len()
                )));
            }
            budget -= 1;
            let x = rng.random_range(region.min_x..region.max_x);
            let y = rng.random_range(region.min_y..region.max_y);
            let theta = rng.random_range(0.0..TAU);
            if env.disc_collides(x, y, ROBOT_RADIUS) {
                continue;
            }
            if placed
                .iter()
                .any(|p| p.distance_to(x, y) < 2.0 * ROBOT_RADIUS)
            {
                continue;
            }
            placed.push(Pose::new(x, y, theta));
            break;
        }
    }
    Ok(placed)
}
