//! Local planning over traversability maps.
//!
//! Two planners share the map representation. The primitive planner scores a
//! fan of fixed arc trajectories by traversability and goal progress and
//! picks the cheapest. The graph planner ([`graph::graph_plan`]) runs a
//! shortest-path search over grid cells with per-cell traversability costs
//! and a hard admission threshold.
//!
//! Both expose their result as a single scalar path cost, which is the
//! quantity the gating layer brackets. Costs are non-increasing in the map:
//! raising traversability anywhere never makes a plan worse.

mod graph;
mod primitives;

pub use graph::{graph_plan, GraphPlan};
pub use primitives::{
    generate_primitives, project_trajectory, trim_to_frame, FanSpec, GridFrame, Path2D, Pose3,
    PrimitiveSet, Trajectory,
};

use std::fmt;

use crate::grid::{check_same_shape, GridError, TravMap};

/// A point in world coordinates, `[x, y, z]` in meters.
pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    BadConfig { param: &'static str, value: f64 },
    EmptyCurvatures,
    EmptyTrajectory,
    NonFiniteWaypoint { trajectory: usize, index: usize },
    EmptyPrimitiveSet,
    WaypointOutOfBounds { index: usize, x: f64, y: f64 },
    CellOutOfBounds { row: usize, col: usize },
    Grid(GridError),
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::BadConfig { param, value } => {
                write!(f, "planner parameter {param} has invalid value {value}")
            }
            PlanError::EmptyCurvatures => write!(f, "fan needs at least one curvature"),
            PlanError::EmptyTrajectory => write!(f, "trajectory has no waypoints"),
            PlanError::NonFiniteWaypoint { trajectory, index } => {
                write!(f, "trajectory {trajectory} waypoint {index} is non-finite")
            }
            PlanError::EmptyPrimitiveSet => write!(f, "primitive set has no trajectories"),
            PlanError::WaypointOutOfBounds { index, x, y } => {
                write!(f, "waypoint {index} at ({x}, {y}) falls outside the grid frame")
            }
            PlanError::CellOutOfBounds { row, col } => {
                write!(f, "cell ({row}, {col}) is outside the map")
            }
            PlanError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PlanError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PlanError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GridError> for PlanError {
    fn from(e: GridError) -> Self {
        PlanError::Grid(e)
    }
}

/// Shared planner knobs.
///
/// * `lambda` weighs goal progress against traversability in arc scoring,
/// * `horizon` is the arc length and the progress normalizer, in meters,
/// * `theta` is the graph planner's admission threshold on traversability,
/// * `aux_step_cost` is the graph planner's per-edge base cost, keeping
///   path length relevant when terrain is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub lambda: f64,
    pub horizon: f64,
    pub theta: f64,
    pub aux_step_cost: f64,
}

impl PlannerConfig {
    pub fn new(
        lambda: f64,
        horizon: f64,
        theta: f64,
        aux_step_cost: f64,
    ) -> Result<PlannerConfig, PlanError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(PlanError::BadConfig {
                param: "lambda",
                value: lambda,
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(PlanError::BadConfig {
                param: "horizon",
                value: horizon,
            });
        }
        if !(theta.is_finite() && (0.0..=1.0).contains(&theta)) {
            return Err(PlanError::BadConfig {
                param: "theta",
                value: theta,
            });
        }
        if !(aux_step_cost.is_finite() && aux_step_cost >= 0.0) {
            return Err(PlanError::BadConfig {
                param: "aux_step_cost",
                value: aux_step_cost,
            });
        }
        Ok(PlannerConfig {
            lambda,
            horizon,
            theta,
            aux_step_cost,
        })
    }

    pub fn with_horizon(self, horizon: f64) -> Result<PlannerConfig, PlanError> {
        PlannerConfig::new(self.lambda, horizon, self.theta, self.aux_step_cost)
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lambda: 1.0,
            horizon: 2.0,
            theta: 0.25,
            aux_step_cost: 0.01,
        }
    }
}

/// Mean untraversability along a projected path: `sum(1 - t) / |path|`.
pub fn j_trav(path: &Path2D, t: &TravMap) -> Result<f64, PlanError> {
    if path.cells.is_empty() {
        return Err(PlanError::EmptyTrajectory);
    }
    let mut sum = 0.0;
    for &(row, col) in &path.cells {
        if !t.dims().contains(row, col) {
            return Err(PlanError::CellOutOfBounds { row, col });
        }
        sum += 1.0 - t.get(row, col);
    }
    Ok(sum / path.cells.len() as f64)
}

/// Goal progress score in `[0, 1]`, lower is better:
/// `1 - (dist(robot, goal) - min_i dist(waypoint_i, goal)) / horizon`,
/// clamped. A trajectory that closes the full horizon toward the goal
/// scores 0; one that makes no progress scores 1.
pub fn j_dis(
    traj: &Trajectory,
    robot: Point3,
    goal: Point3,
    horizon: f64,
) -> Result<f64, PlanError> {
    if traj.waypoints.is_empty() {
        return Err(PlanError::EmptyTrajectory);
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(PlanError::BadConfig {
            param: "horizon",
            value: horizon,
        });
    }
    let d_rg = dist3(robot, goal);
    let closest = traj
        .waypoints
        .iter()
        .map(|&wp| dist3(wp, goal))
        .fold(f64::INFINITY, f64::min);
    Ok((1.0 - (d_rg - closest) / horizon).clamp(0.0, 1.0))
}

fn dist3(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Outcome of scoring a primitive fan against a map.
///
/// `cost` is `+inf` and `best` is `None` when no candidate projects into the
/// frame. `candidate_costs` keeps one entry per input trajectory in order,
/// `+inf` for candidates that left the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub best: Option<Trajectory>,
    pub cost: f64,
    pub candidate_costs: Vec<f64>,
}

/// Score every primitive against the map and keep the cheapest.
///
/// Each candidate costs `j_trav + lambda * j_dis`. Candidates that do not
/// project fully into the frame are excluded. Ties keep the earliest
/// candidate, so the result is deterministic for a fixed fan.
pub fn plan(
    t: &TravMap,
    prims: &PrimitiveSet,
    frame: &GridFrame,
    robot: Point3,
    goal: Point3,
    config: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    if prims.trajectories.is_empty() {
        return Err(PlanError::EmptyPrimitiveSet);
    }
    check_same_shape(frame.dims(), t.dims())?;
    let mut best: Option<(usize, f64)> = None;
    let mut candidate_costs = Vec::with_capacity(prims.trajectories.len());
    for (i, traj) in prims.trajectories.iter().enumerate() {
        let cost = match project_trajectory(traj, frame) {
            Ok(path) => {
                let trav = j_trav(&path, t)?;
                let dis = j_dis(traj, robot, goal, config.horizon)?;
                trav + config.lambda * dis
            }
            Err(PlanError::WaypointOutOfBounds { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        candidate_costs.push(cost);
        if cost.is_finite() && best.map_or(true, |(_, c)| cost < c) {
            best = Some((i, cost));
        }
    }
    Ok(match best {
        Some((i, cost)) => PlanResult {
            best: Some(prims.trajectories[i].clone()),
            cost,
            candidate_costs,
        },
        None => PlanResult {
            best: None,
            cost: f64::INFINITY,
            candidate_costs,
        },
    })
}
