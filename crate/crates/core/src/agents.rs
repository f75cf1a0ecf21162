//! Robot state, the discrete motion model, and battery-driven mode switching.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::CellCoord;
use crate::planning::Route;
use crate::world::{wrap_signed, EnvironmentMap, Pose};

pub const ROBOT_RADIUS: f64 = 0.15;
pub const FORWARD_STEP: f64 = 0.2;
pub const ROTATION_STEP_DEG: f64 = 40.0;
/// Heading error above which the controller rotates instead of driving.
pub const HEADING_TOLERANCE_DEG: f64 = 20.0;

pub const BATTERY_DRAIN: f64 = 0.002;
pub const BATTERY_CHARGE: f64 = 0.05;
pub const LOW_BATTERY: f64 = 0.25;

pub const EXP_TEAM_SIZE: u32 = 5;
pub const CHR_TEAM_SIZE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "EXP")]
    Explore,
    #[serde(rename = "CHR")]
    Charge,
}

impl Mode {
    pub fn desired_team_size(self) -> u32 {
        match self {
            Mode::Explore => EXP_TEAM_SIZE,
            Mode::Charge => CHR_TEAM_SIZE,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Explore => "EXP",
            Mode::Charge => "CHR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stop,
    Forward,
    RotateLeft,
    RotateRight,
}

pub type RobotId = usize;
pub type TeamId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose,
    pub battery: f64,
    pub mode: Mode,
    pub team_id: TeamId,
    pub desired_team_size: u32,
    /// Mean of this robot's baseline quantile draws, fixed for a run.
    pub sampler_bias: f64,
    pub current_route: Option<Route>,
}

impl RobotState {
    pub fn new(id: RobotId, pose: Pose, battery: f64, sampler_bias: f64) -> Self {
        RobotState {
            id,
            pose,
            battery,
            mode: Mode::Explore,
            team_id: id,
            desired_team_size: EXP_TEAM_SIZE,
            sampler_bias,
            current_route: None,
        }
    }

    /// Grid cell occupied by the robot center.
    pub fn cell(&self, cell_size: f64) -> CellCoord {
        CellCoord::new(
            (self.pose.x / cell_size) as usize,
            (self.pose.y / cell_size) as usize,
        )
    }
}

/// Turns toward `target` when the heading error exceeds the tolerance,
/// otherwise drives forward. Counter-clockwise is positive; an error of
/// exactly 180° turns left.
pub fn steer_towards(pose: &Pose, target: (f64, f64)) -> Action {
    let bearing = (target.1 - pose.y).atan2(target.0 - pose.x);
    let error = wrap_signed(bearing - pose.theta);
    if error.abs() > HEADING_TOLERANCE_DEG.to_radians() {
        if error > 0.0 {
            Action::RotateLeft
        } else {
            Action::RotateRight
        }
    } else {
        Action::Forward
    }
}

/// Next discrete action for following `route` toward the center of its
/// second cell.
pub fn choose_action(robot: &RobotState, route: &Route, cell_size: f64) -> Result<Action> {
    match route.cells.as_slice() {
        [] => Err(Error::domain(format!("robot {}: empty route", robot.id))),
        [_] => Ok(Action::Stop),
        [_, next, ..] => Ok(steer_towards(
            &robot.pose,
            (
                (next.col as f64 + 0.5) * cell_size,
                (next.row as f64 + 0.5) * cell_size,
            ),
        )),
    }
}

/// Turn or move toward the reachable heading closest to `waypoint`, for a
/// robot whose direct approach is blocked. Only headings the robot can reach
/// by whole rotation steps, that leave it free to move forward, and that
/// point less than 90° away from the waypoint qualify. `None` when no
/// heading does.
pub fn avoid_action(env: &EnvironmentMap, pose: &Pose, waypoint: (f64, f64)) -> Option<Action> {
    let rot = ROTATION_STEP_DEG.to_radians();
    let turns = (360.0 / ROTATION_STEP_DEG).round() as usize;
    let bearing = (waypoint.1 - pose.y).atan2(waypoint.0 - pose.x);
    let mut best: Option<(f64, usize, usize)> = None;
    for k in 0..turns {
        let heading = Pose::new(pose.x, pose.y, pose.theta + k as f64 * rot);
        let error = wrap_signed(bearing - heading.theta).abs();
        if error >= std::f64::consts::FRAC_PI_2 {
            continue;
        }
        if apply_motion(env, &heading, Action::Forward) == heading {
            continue;
        }
        let rotations = k.min(turns - k);
        if best.is_none_or(|(e, r, _)| (error, rotations) < (e, r)) {
            best = Some((error, rotations, k));
        }
    }
    best.map(|(_, _, k)| match k {
        0 => Action::Forward,
        k if k <= turns / 2 => Action::RotateLeft,
        _ => Action::RotateRight,
    })
}

/// Pose after `action`. Blocked forward motion leaves the pose unchanged.
pub fn apply_motion(env: &EnvironmentMap, pose: &Pose, action: Action) -> Pose {
    let rot = ROTATION_STEP_DEG.to_radians();
    match action {
        Action::Stop => *pose,
        Action::RotateLeft => Pose::new(pose.x, pose.y, pose.theta + rot),
        Action::RotateRight => Pose::new(pose.x, pose.y, pose.theta - rot),
        Action::Forward => {
            let (dy, dx) = pose.theta.sin_cos();
            let (nx, ny) = (pose.x + FORWARD_STEP * dx, pose.y + FORWARD_STEP * dy);
            if env.disc_collides(nx, ny, ROBOT_RADIUS) {
                *pose
            } else {
                Pose {
                    x: nx,
                    y: ny,
                    theta: pose.theta,
                }
            }
        }
    }
}

/// One step of battery bookkeeping. Returns the new mode when it changed.
pub fn update_battery_and_mode(robot: &mut RobotState, at_station: bool) -> Option<Mode> {
    if at_station && robot.mode == Mode::Charge {
        robot.battery = (robot.battery + BATTERY_CHARGE).min(1.0);
    } else {
        robot.battery = (robot.battery - BATTERY_DRAIN).max(0.0);
    }
    let next = match robot.mode {
        Mode::Explore if robot.battery < LOW_BATTERY => Mode::Charge,
        Mode::Charge if robot.battery >= 1.0 => Mode::Explore,
        m => m,
    };
    robot.desired_team_size = next.desired_team_size();
    if next != robot.mode {
        robot.mode = next;
        Some(next)
    } else {
        None
    }
}
