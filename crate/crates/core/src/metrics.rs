//! Evaluation metrics: how wrong a map is, and how much that wrongness
//! costs the planner.
//!
//! Three views, from raw to consequential:
//!
//! * `metric_e_m`: mean squared map error against the ground truth.
//! * `metric_e_p`: mean squared error of per-candidate path costs, i.e.
//!   the map error filtered through what the planner actually reads.
//! * `metric_q_p`: quality ratio of the chosen trajectory against the
//!   best trajectory available on the ground truth, both scored on the
//!   ground truth. 1.0 means the estimate led to the optimal choice.
//!
//! Plus `flop_savings`, the fraction of expert compute avoided.

use std::fmt;

use crate::grid::{mse, GridError, TravMap};
use crate::planner::{
    j_dis, j_trav, plan, project_trajectory, GridFrame, PlanError, PlannerConfig, Point3,
    PrimitiveSet, Pose3, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    /// No candidate trajectory projects into the frame.
    NoCandidates,
    /// Even the ground truth admits no feasible plan; quality is undefined.
    GtInfeasible,
    /// The ground-truth optimum has zero utility, so the ratio is undefined.
    UndefinedQuality,
    /// Flop counts must satisfy `0 <= used <= full` with `full > 0`.
    BadFlops { used: f64, full: f64 },
    Plan(PlanError),
    Grid(GridError),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::NoCandidates => {
                write!(f, "no candidate trajectory projects into the frame")
            }
            MetricError::GtInfeasible => {
                write!(f, "ground truth admits no feasible plan; quality undefined")
            }
            MetricError::UndefinedQuality => {
                write!(f, "ground-truth optimum has zero utility; ratio undefined")
            }
            MetricError::BadFlops { used, full } => {
                write!(f, "bad flop counts: used {used}, full {full}")
            }
            MetricError::Plan(e) => write!(f, "{e}"),
            MetricError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for MetricError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            MetricError::Plan(e) => Some(e),
            MetricError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

impl From<PlanError> for MetricError {
    fn from(e: PlanError) -> Self {
        MetricError::Plan(e)
    }
}

impl From<GridError> for MetricError {
    fn from(e: GridError) -> Self {
        MetricError::Grid(e)
    }
}

/// Mean squared error between the estimated and true maps.
pub fn metric_e_m(est: &TravMap, gt: &TravMap) -> Result<f64, MetricError> {
    Ok(mse(est, gt)?)
}

/// Planning error: mean over in-frame candidates of the squared difference
/// between the path cost read off the estimate and off the ground truth.
///
/// Candidates that leave the frame are skipped on both maps alike; if none
/// remains the metric is undefined.
pub fn metric_e_p(
    est: &TravMap,
    gt: &TravMap,
    prims: &PrimitiveSet,
    frame: &GridFrame,
) -> Result<f64, MetricError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for traj in &prims.trajectories {
        let path = match project_trajectory(traj, frame) {
            Ok(path) => path,
            Err(PlanError::WaypointOutOfBounds { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let diff = j_trav(&path, est)? - j_trav(&path, gt)?;
        sum += diff * diff;
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::NoCandidates);
    }
    Ok(sum / count as f64)
}

/// Normalized utility of one trajectory scored on a map: `1 - f` where
/// `f = (j_trav + lambda * j_dis) / (1 + lambda)` lies in `[0, 1]`.
/// Higher is better; 1.0 is a free path that closes the full horizon.
fn plan_utility(
    traj: &Trajectory,
    map: &TravMap,
    frame: &GridFrame,
    robot: Point3,
    goal: Point3,
    config: &PlannerConfig,
) -> Result<f64, MetricError> {
    let path = project_trajectory(traj, frame)?;
    let trav = j_trav(&path, map)?;
    let dis = j_dis(traj, robot, goal, config.horizon)?;
    let f = (trav + config.lambda * dis) / (1.0 + config.lambda);
    Ok(1.0 - f)
}

/// Plan quality ratio: utility of the chosen trajectory over the utility of
/// the best trajectory on the ground truth, both scored on the ground truth.
///
/// `None` for the chosen trajectory means the estimate yielded no feasible
/// plan; that scores 0. A chosen trajectory that coincides with the
/// ground-truth optimum scores exactly 1.0, because both sides go through
/// the same arithmetic.
pub fn metric_q_p(
    chosen: Option<&Trajectory>,
    gt: &TravMap,
    prims: &PrimitiveSet,
    frame: &GridFrame,
    robot: Pose3,
    goal: Point3,
    config: &PlannerConfig,
) -> Result<f64, MetricError> {
    let reference = plan(gt, prims, frame, robot.position(), goal, config)?;
    let best_gt = reference.best.ok_or(MetricError::GtInfeasible)?;
    let eta_gt = plan_utility(&best_gt, gt, frame, robot.position(), goal, config)?;
    if eta_gt <= 1e-12 {
        return Err(MetricError::UndefinedQuality);
    }
    let Some(chosen) = chosen else {
        return Ok(0.0);
    };
    let eta = plan_utility(chosen, gt, frame, robot.position(), goal, config)?;
    Ok(eta / eta_gt)
}

/// Fraction of expert compute avoided: `1 - used / full`.
pub fn flop_savings(used: f64, full: f64) -> Result<f64, MetricError> {
    if !(full.is_finite() && full > 0.0 && used.is_finite() && (0.0..=full).contains(&used)) {
        return Err(MetricError::BadFlops { used, full });
    }
    Ok(1.0 - used / full)
}
