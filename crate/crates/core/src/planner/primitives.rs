//! Arc primitive generation and grid projection.
//!
//! Primitives are constant-curvature arcs rolled out from the robot pose.
//! In the body frame an arc of curvature `k` sampled at arc length `s` is
//! `(sin(k s) / k, (1 - cos(k s)) / k)`, which degenerates to a straight
//! segment as `k` approaches 0. Arcs are sampled densely enough that
//! consecutive waypoints land in the same or an adjacent grid cell.

use super::{PlanError, Point3};
use crate::grid::GridDims;

/// Planar robot pose: position in meters, yaw in radians (0 along +x,
/// counterclockwise positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose3 {
    pub fn position(&self) -> Point3 {
        [self.x, self.y, self.z]
    }
}

/// An ordered waypoint sequence with a stable candidate id.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub waypoints: Vec<Point3>,
}

impl Trajectory {
    pub fn new(id: usize, waypoints: Vec<Point3>) -> Result<Trajectory, PlanError> {
        if waypoints.is_empty() {
            return Err(PlanError::EmptyTrajectory);
        }
        for (i, wp) in waypoints.iter().enumerate() {
            if !wp.iter().all(|v| v.is_finite()) {
                return Err(PlanError::NonFiniteWaypoint {
                    trajectory: id,
                    index: i,
                });
            }
        }
        Ok(Trajectory { id, waypoints })
    }
}

/// A fan of candidate trajectories sharing one rollout horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSet {
    pub trajectories: Vec<Trajectory>,
    pub horizon: f64,
}

/// Curvature fan definition. `sample_step` caps the arc length between
/// consecutive waypoints, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FanSpec {
    curvatures: Vec<f64>,
    sample_step: f64,
}

impl FanSpec {
    pub fn new(curvatures: Vec<f64>, sample_step: f64) -> Result<FanSpec, PlanError> {
        if curvatures.is_empty() {
            return Err(PlanError::EmptyCurvatures);
        }
        for &k in &curvatures {
            if !k.is_finite() {
                return Err(PlanError::BadConfig {
                    param: "curvature",
                    value: k,
                });
            }
        }
        if !(sample_step.is_finite() && sample_step > 0.0) {
            return Err(PlanError::BadConfig {
                param: "sample_step",
                value: sample_step,
            });
        }
        Ok(FanSpec {
            curvatures,
            sample_step,
        })
    }

    /// `count` curvatures spread evenly over `[-max_curvature, max_curvature]`.
    /// A single-candidate fan is the straight arc.
    pub fn symmetric(
        count: usize,
        max_curvature: f64,
        sample_step: f64,
    ) -> Result<FanSpec, PlanError> {
        if count == 0 {
            return Err(PlanError::EmptyCurvatures);
        }
        if !(max_curvature.is_finite() && max_curvature >= 0.0) {
            return Err(PlanError::BadConfig {
                param: "max_curvature",
                value: max_curvature,
            });
        }
        let curvatures = if count == 1 {
            vec![0.0]
        } else {
            (0..count)
                .map(|i| {
                    let frac = i as f64 / (count - 1) as f64;
                    -max_curvature + 2.0 * max_curvature * frac
                })
                .collect()
        };
        FanSpec::new(curvatures, sample_step)
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn sample_step(&self) -> f64 {
        self.sample_step
    }
}

/// Roll out the fan from `start`. Waypoint `j` of arc `k` sits at arc length
/// `j * horizon / n` where `n = ceil(horizon / sample_step)`, so spacing
/// never exceeds the sample step and every arc starts at the robot position.
pub fn generate_primitives(
    start: &Pose3,
    horizon: f64,
    fan: &FanSpec,
) -> Result<PrimitiveSet, PlanError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(PlanError::BadConfig {
            param: "horizon",
            value: horizon,
        });
    }
    let n = (horizon / fan.sample_step).ceil().max(1.0) as usize;
    let ds = horizon / n as f64;
    let (sin_yaw, cos_yaw) = start.yaw.sin_cos();
    let mut trajectories = Vec::with_capacity(fan.curvatures.len());
    for (id, &k) in fan.curvatures.iter().enumerate() {
        let mut waypoints = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let s = j as f64 * ds;
            let (bx, by) = if k.abs() < 1e-12 {
                (s, 0.0)
            } else {
                ((k * s).sin() / k, (1.0 - (k * s).cos()) / k)
            };
            waypoints.push([
                start.x + cos_yaw * bx - sin_yaw * by,
                start.y + sin_yaw * bx + cos_yaw * by,
                start.z,
            ]);
        }
        trajectories.push(Trajectory { id, waypoints });
    }
    Ok(PrimitiveSet {
        trajectories,
        horizon,
    })
}

/// Placement of a grid in world coordinates. `(origin_x, origin_y)` is the
/// outer corner of cell `(0, 0)`; rows advance along +y, columns along +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    dims: GridDims,
}

impl GridFrame {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        dims: GridDims,
    ) -> Result<GridFrame, PlanError> {
        if !origin_x.is_finite() {
            return Err(PlanError::BadConfig {
                param: "origin_x",
                value: origin_x,
            });
        }
        if !origin_y.is_finite() {
            return Err(PlanError::BadConfig {
                param: "origin_y",
                value: origin_y,
            });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(PlanError::BadConfig {
                param: "cell_size",
                value: cell_size,
            });
        }
        Ok(GridFrame {
            origin_x,
            origin_y,
            cell_size,
            dims,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Cell containing the world point, or `None` outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let col = fx.floor() as usize;
        let row = fy.floor() as usize;
        if self.dims.contains(row, col) {
            Some((row, col))
        } else {
            None
        }
    }

    /// World coordinates of a cell center.
    pub fn center_of(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (row as f64 + 0.5) * self.cell_size,
        )
    }
}

/// A trajectory flattened onto grid cells, consecutive duplicates removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Path2D {
    pub cells: Vec<(usize, usize)>,
}

/// Map every waypoint to its cell. A waypoint outside the frame fails the
/// whole projection; use [`trim_to_frame`] first when partial candidates
/// should survive.
pub fn project_trajectory(traj: &Trajectory, frame: &GridFrame) -> Result<Path2D, PlanError> {
    if traj.waypoints.is_empty() {
        return Err(PlanError::EmptyTrajectory);
    }
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(traj.waypoints.len());
    for (i, wp) in traj.waypoints.iter().enumerate() {
        match frame.cell_of(wp[0], wp[1]) {
            Some(cell) => {
                if cells.last() != Some(&cell) {
                    cells.push(cell);
                }
            }
            None => {
                return Err(PlanError::WaypointOutOfBounds {
                    index: i,
                    x: wp[0],
                    y: wp[1],
                })
            }
        }
    }
    Ok(Path2D { cells })
}

/// Longest prefix of the trajectory that stays inside the frame, or `None`
/// if even the first waypoint is outside.
pub fn trim_to_frame(traj: &Trajectory, frame: &GridFrame) -> Option<Trajectory> {
    let keep = traj
        .waypoints
        .iter()
        .take_while(|wp| frame.cell_of(wp[0], wp[1]).is_some())
        .count();
    if keep == 0 {
        return None;
    }
    Some(Trajectory {
        id: traj.id,
        waypoints: traj.waypoints[..keep].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    fn origin_pose(yaw: f64) -> Pose3 {
        Pose3 {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            yaw,
        }
    }

    #[test]
    fn symmetric_fan_layout() {
        let fan = FanSpec::symmetric(3, 0.8, 0.5).unwrap();
        assert_eq!(fan.curvatures(), &[-0.8, 0.0, 0.8]);
        let single = FanSpec::symmetric(1, 0.8, 0.5).unwrap();
        assert_eq!(single.curvatures(), &[0.0]);
        assert!(FanSpec::symmetric(0, 0.8, 0.5).is_err());
        assert!(FanSpec::new(vec![], 0.5).is_err());
    }

    #[test]
    fn straight_arc_runs_along_heading() {
        let fan = FanSpec::new(vec![0.0], 0.5).unwrap();
        let prims = generate_primitives(&origin_pose(0.0), 2.0, &fan).unwrap();
        let wp = &prims.trajectories[0].waypoints;
        assert_eq!(wp.len(), 5);
        assert_eq!(wp[0], [0.0, 0.0, 0.0]);
        assert!((wp[4][0] - 2.0).abs() <= 1e-12);
        assert!(wp.iter().all(|p| p[1].abs() <= 1e-12));

        // Quarter turn of heading rotates the rollout.
        let up = generate_primitives(&origin_pose(std::f64::consts::FRAC_PI_2), 2.0, &fan).unwrap();
        let wp = &up.trajectories[0].waypoints;
        assert!((wp[4][1] - 2.0).abs() <= 1e-12);
        assert!(wp[4][0].abs() <= 1e-12);
    }

    #[test]
    fn unit_curvature_quarter_circle_hand_value() {
        // k = 1, s = pi/2: body point (sin(pi/2), 1 - cos(pi/2)) = (1, 1).
        let s = std::f64::consts::FRAC_PI_2;
        let fan = FanSpec::new(vec![1.0], s).unwrap();
        let prims = generate_primitives(&origin_pose(0.0), s, &fan).unwrap();
        let end = prims.trajectories[0].waypoints.last().unwrap();
        assert!((end[0] - 1.0).abs() <= 1e-12);
        assert!((end[1] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn opposite_curvatures_mirror_across_heading() {
        let fan = FanSpec::new(vec![0.7, -0.7], 0.25).unwrap();
        let prims = generate_primitives(&origin_pose(0.0), 3.0, &fan).unwrap();
        let left = &prims.trajectories[0].waypoints;
        let right = &prims.trajectories[1].waypoints;
        assert_eq!(left.len(), right.len());
        for (l, r) in left.iter().zip(right) {
            assert!((l[0] - r[0]).abs() <= 1e-12);
            assert!((l[1] + r[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn waypoint_spacing_respects_sample_step() {
        let fan = FanSpec::symmetric(7, 1.2, 0.3).unwrap();
        let prims = generate_primitives(&origin_pose(0.4), 2.0, &fan).unwrap();
        for traj in &prims.trajectories {
            for pair in traj.waypoints.windows(2) {
                let dx = pair[1][0] - pair[0][0];
                let dy = pair[1][1] - pair[0][1];
                let chord = dx.hypot(dy);
                assert!(chord <= 0.3 + 1e-12, "chord {chord}");
            }
        }
    }

    #[test]
    fn projection_hand_traced_diagonal() {
        let frame = GridFrame::new(0.0, 0.0, 1.0, dims(3, 3)).unwrap();
        let traj = Trajectory::new(
            0,
            vec![
                [0.9, 0.5, 0.0],
                [1.5, 1.1, 0.0],
                [2.1, 1.7, 0.0],
                [2.7, 2.3, 0.0],
            ],
        )
        .unwrap();
        let path = project_trajectory(&traj, &frame).unwrap();
        assert_eq!(path.cells, vec![(0, 0), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn projection_collapses_same_cell_waypoints() {
        let frame = GridFrame::new(0.0, 0.0, 1.0, dims(2, 2)).unwrap();
        let traj = Trajectory::new(
            0,
            vec![[0.2, 0.2, 0.0], [0.8, 0.8, 0.0], [1.2, 0.2, 0.0]],
        )
        .unwrap();
        let path = project_trajectory(&traj, &frame).unwrap();
        assert_eq!(path.cells, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn projection_rejects_out_of_frame_waypoints() {
        let frame = GridFrame::new(0.0, 0.0, 1.0, dims(2, 2)).unwrap();
        let traj = Trajectory::new(0, vec![[0.5, 0.5, 0.0], [2.5, 0.5, 0.0]]).unwrap();
        assert!(matches!(
            project_trajectory(&traj, &frame),
            Err(PlanError::WaypointOutOfBounds { index: 1, .. })
        ));
        // Negative side is out too, not wrapped by the float-to-int cast.
        let neg = Trajectory::new(0, vec![[-0.1, 0.5, 0.0]]).unwrap();
        assert!(project_trajectory(&neg, &frame).is_err());
    }

    #[test]
    fn trim_keeps_in_frame_prefix() {
        let frame = GridFrame::new(0.0, 0.0, 1.0, dims(2, 2)).unwrap();
        let traj = Trajectory::new(
            3,
            vec![[0.5, 0.5, 0.0], [1.5, 0.5, 0.0], [2.5, 0.5, 0.0]],
        )
        .unwrap();
        let trimmed = trim_to_frame(&traj, &frame).unwrap();
        assert_eq!(trimmed.id, 3);
        assert_eq!(trimmed.waypoints.len(), 2);

        let outside = Trajectory::new(0, vec![[5.0, 5.0, 0.0]]).unwrap();
        assert!(trim_to_frame(&outside, &frame).is_none());
    }

    #[test]
    fn frame_cell_lookup_edges() {
        let frame = GridFrame::new(1.0, 2.0, 0.5, dims(2, 2)).unwrap();
        assert_eq!(frame.cell_of(1.0, 2.0), Some((0, 0)));
        assert_eq!(frame.cell_of(1.99, 2.99), Some((1, 1)));
        assert_eq!(frame.cell_of(2.0, 2.5), None);
        assert_eq!(frame.cell_of(0.99, 2.5), None);
        assert_eq!(frame.center_of(0, 1), (1.75, 2.25));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn rollouts_stay_within_horizon(
            yaw in -3.2f64..=3.2,
            horizon in 0.5f64..=8.0,
            max_curv in 0.0f64..=1.5,
        ) {
            let fan = FanSpec::symmetric(5, max_curv, 0.2).unwrap();
            let start = Pose3 { x: 1.0, y: -2.0, z: 0.5, yaw };
            let prims = generate_primitives(&start, horizon, &fan).unwrap();
            for traj in &prims.trajectories {
                prop_assert_eq!(traj.waypoints[0], [1.0, -2.0, 0.5]);
                for wp in &traj.waypoints {
                    let dist = (wp[0] - 1.0).hypot(wp[1] + 2.0);
                    // Chord length never exceeds arc length.
                    prop_assert!(dist <= horizon + 1e-9);
                }
            }
        }
    }
}
