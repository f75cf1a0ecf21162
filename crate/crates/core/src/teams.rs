//! Decentralized team formation.
//!
//! Every robot belongs to exactly one team; a lone robot is a team of one.
//! A team recruits while its mean desired size exceeds its size. Two
//! recruiting teams within `d_join` of each other merge when their combined
//! size fits under both teams' (floored) mean desired sizes. Robots in charge
//! mode always leave; an optional general rule lets one surplus member leave
//! per step when the team is larger than its mean desired size.

use std::collections::{BTreeMap, BTreeSet};

use crate::agents::{Mode, RobotId, RobotState, TeamId};
use crate::mapping::CellCoord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Team {
    pub team_id: TeamId,
    pub members: BTreeSet<RobotId>,
    pub leader: RobotId,
    pub target: Option<CellCoord>,
}

impl Team {
    pub fn singleton(team_id: TeamId, robot: RobotId) -> Self {
        Team {
            team_id,
            members: BTreeSet::from([robot]),
            leader: robot,
            target: None,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    fn desired_sum(&self, robots: &[RobotState]) -> u64 {
        self.members
            .iter()
            .map(|&id| robots[id].desired_team_size as u64)
            .sum()
    }

    /// Mean desired team size over members, floored.
    pub fn mean_desired_floor(&self, robots: &[RobotState]) -> u64 {
        self.desired_sum(robots) / self.size() as u64
    }

    pub fn mean_desired(&self, robots: &[RobotState]) -> f64 {
        self.desired_sum(robots) as f64 / self.size() as f64
    }
}

/// True iff the members' mean desired size exceeds the team size.
pub fn is_recruiting(team: &Team, robots: &[RobotState]) -> bool {
    let n = team.size() as u64;
    team.desired_sum(robots) > n * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaveReason {
    Charge,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TeamEvent {
    Merge {
        kept: TeamId,
        absorbed: TeamId,
        size_kept: usize,
        size_absorbed: usize,
        mean_desired_kept: u64,
        mean_desired_absorbed: u64,
        members: Vec<RobotId>,
        leader: RobotId,
    },
    Leave {
        robot: RobotId,
        from_team: TeamId,
        new_team: TeamId,
        reason: LeaveReason,
        /// Leader of the team left behind.
        leader: RobotId,
    },
}

impl TeamEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TeamEvent::Merge { .. } => "merge",
            TeamEvent::Leave {
                reason: LeaveReason::Charge,
                ..
            } => "leave_chr",
            TeamEvent::Leave {
                reason: LeaveReason::General,
                ..
            } => "leave_general",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamRegistry {
    teams: BTreeMap<TeamId, Team>,
    next_id: TeamId,
}

impl TeamRegistry {
    /// One singleton team per robot, team id = robot id. Sets each robot's
    /// `team_id`.
    pub fn singletons(robots: &mut [RobotState]) -> Self {
        let mut teams = BTreeMap::new();
        for r in robots.iter_mut() {
            r.team_id = r.id;
            teams.insert(r.id, Team::singleton(r.id, r.id));
        }
        TeamRegistry {
            teams,
            next_id: robots.len(),
        }
    }

    pub fn from_teams(teams: impl IntoIterator<Item = Team>, robots: &mut [RobotState]) -> Self {
        let teams: BTreeMap<_, _> = teams.into_iter().map(|t| (t.team_id, t)).collect();
        for t in teams.values() {
            for &m in &t.members {
                robots[m].team_id = t.team_id;
            }
        }
        let next_id = teams.keys().next_back().map_or(0, |k| k + 1);
        TeamRegistry { teams, next_id }
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    pub fn get(&self, id: TeamId) -> Option<&Team> {
        self.teams.get(&id)
    }

    pub fn get_mut(&mut self, id: TeamId) -> Option<&mut Team> {
        self.teams.get_mut(&id)
    }

    /// Teams in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Team> {
        self.teams.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Team> {
        self.teams.values_mut()
    }

    pub fn ids(&self) -> Vec<TeamId> {
        self.teams.keys().copied().collect()
    }

    fn fresh_id(&mut self) -> TeamId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn split_off(
        &mut self,
        robots: &mut [RobotState],
        team_id: TeamId,
        robot: RobotId,
        reason: LeaveReason,
    ) -> TeamEvent {
        let new_team = self.fresh_id();
        let team = self.teams.get_mut(&team_id).expect("robot's team exists");
        team.members.remove(&robot);
        if team.leader == robot {
            team.leader = *team.members.first().expect("team keeps a member");
        }
        let leader = team.leader;
        self.teams
            .insert(new_team, Team::singleton(new_team, robot));
        robots[robot].team_id = new_team;
        TeamEvent::Leave {
            robot,
            from_team: team_id,
            new_team,
            reason,
            leader,
        }
    }

    /// Individual departures: every charge-mode robot in a team of two or
    /// more leaves, then (optionally) one surplus member per oversized team.
    pub fn leave_step(&mut self, robots: &mut [RobotState], general_rule: bool) -> Vec<TeamEvent> {
        let mut events = Vec::new();
        for id in 0..robots.len() {
            let team_id = robots[id].team_id;
            if robots[id].mode == Mode::Charge && self.teams[&team_id].size() >= 2 {
                events.push(self.split_off(robots, team_id, id, LeaveReason::Charge));
            }
        }
        if general_rule {
            for team_id in self.ids() {
                let team = &self.teams[&team_id];
                let n = team.size() as u64;
                if team.desired_sum(robots) >= n * n {
                    continue;
                }
                let leaving = team
                    .members
                    .iter()
                    .rev()
                    .copied()
                    .find(|&m| m != team.leader);
                if let Some(robot) = leaving {
                    events.push(self.split_off(robots, team_id, robot, LeaveReason::General));
                }
            }
        }
        events
    }

    /// Team-level merging of nearby recruiting teams. Candidate pairs are
    /// visited in ascending `(a, b)` id order and each team takes part in at
    /// most one merge per call.
    pub fn merge_step(&mut self, robots: &mut [RobotState], d_join: f64) -> Vec<TeamEvent> {
        let ids = self.ids();
        let recruiting: BTreeSet<TeamId> = ids
            .iter()
            .copied()
            .filter(|id| is_recruiting(&self.teams[id], robots))
            .collect();
        let mut used = BTreeSet::new();
        let mut events = Vec::new();

        for (i, &a) in ids.iter().enumerate() {
            if !recruiting.contains(&a) {
                continue;
            }
            for &b in &ids[i + 1..] {
                if used.contains(&a) {
                    break;
                }
                if used.contains(&b) || !recruiting.contains(&b) {
                    continue;
                }
                let (ta, tb) = (&self.teams[&a], &self.teams[&b]);
                let cap = ta
                    .mean_desired_floor(robots)
                    .min(tb.mean_desired_floor(robots));
                if (ta.size() + tb.size()) as u64 > cap || !within(ta, tb, robots, d_join) {
                    continue;
                }
                let (size_kept, size_absorbed) = (ta.size(), tb.size());
                let mean_desired_kept = ta.mean_desired_floor(robots);
                let mean_desired_absorbed = tb.mean_desired_floor(robots);

                let absorbed = self.teams.remove(&b).expect("team b exists");
                let kept = self.teams.get_mut(&a).expect("team a exists");
                kept.members.extend(absorbed.members);
                kept.leader = *kept.members.first().expect("nonempty");
                kept.target = None;
                for &m in &kept.members {
                    robots[m].team_id = a;
                }
                events.push(TeamEvent::Merge {
                    kept: a,
                    absorbed: b,
                    size_kept,
                    size_absorbed,
                    mean_desired_kept,
                    mean_desired_absorbed,
                    members: kept.members.iter().copied().collect(),
                    leader: kept.leader,
                });
                used.insert(a);
                used.insert(b);
            }
        }
        events
    }

    /// Checks that the registry partitions `robots` and every leader is a
    /// member of its team.
    pub fn check_partition(&self, robots: &[RobotState]) -> Result<(), String> {
        let mut seen = vec![false; robots.len()];
        for (id, team) in &self.teams {
            if *id != team.team_id {
                return Err(format!("team keyed {id} carries id {}", team.team_id));
            }
            if team.members.is_empty() {
                return Err(format!("team {id} is empty"));
            }
            if !team.members.contains(&team.leader) {
                return Err(format!("team {id} leader {} is not a member", team.leader));
            }
            for &m in &team.members {
                if m >= robots.len() {
                    return Err(format!("team {id} lists unknown robot {m}"));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return Err(format!("robot {m} belongs to more than one team"));
                }
                if robots[m].team_id != *id {
                    return Err(format!(
                        "robot {m} records team {} but is listed in team {id}",
                        robots[m].team_id
                    ));
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(m) => Err(format!("robot {m} belongs to no team")),
            None => Ok(()),
        }
    }
}

fn within(a: &Team, b: &Team, robots: &[RobotState], d_join: f64) -> bool {
    a.members.iter().any(|&i| {
        b.members.iter().any(|&j| {
            let (p, q) = (&robots[i].pose, &robots[j].pose);
            (p.x - q.x).hypot(p.y - q.y) <= d_join
        })
    })
}
