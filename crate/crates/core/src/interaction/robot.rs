use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Point2, Polyline, Pose2, Segment};
use crate::perception::{CameraError, CameraIntrinsics, CameraModel};
use crate::planner::{Path, PlanError, Planner, DEFAULT_INFLATION};

/// Kinematic and sensor parameters of the simulated mobile robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    /// Translational speed limit, m/s.
    pub v_max: f64,
    /// Turn rate while navigating, rad/s.
    pub turn_rate: f64,
    /// Turn rate when the user rotates the robot toward a seed, rad/s.
    pub seed_turn_rate: f64,
    /// Translation pauses while the heading error exceeds this, rad.
    pub max_drive_heading_error: f64,
    /// Path-following lookahead, m.
    pub lookahead: f64,
    pub inflation: f64,
    /// The robot stops this far from a dispatch target, m.
    pub standoff: f64,
    /// ... but not closer than this, so the target stays in the camera's view, m.
    pub min_standoff: f64,
    /// A new dispatch target closer than this to the current one is ignored, m.
    pub replan_distance: f64,
    /// Routes up to this long that start behind the robot are driven in reverse, m.
    pub max_reverse: f64,
    pub camera: CameraIntrinsics,
    pub camera_forward: f64,
    pub camera_height: f64,
    pub camera_pitch: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            v_max: 0.2,
            turn_rate: 1.5,
            seed_turn_rate: 0.5,
            max_drive_heading_error: 60f64.to_radians(),
            lookahead: 0.3,
            inflation: DEFAULT_INFLATION,
            standoff: 0.9,
            min_standoff: 0.6,
            replan_distance: 0.25,
            max_reverse: 0.5,
            camera: CameraIntrinsics::centered(640, 480, 525.0),
            camera_forward: 0.1,
            camera_height: 0.45,
            camera_pitch: 35f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Following {
    route: Polyline,
    progress: f64,
    /// Short back-offs are driven in reverse so the camera keeps facing forward.
    reverse: bool,
}

/// Velocity-limited differential-drive robot with a front camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSim {
    pose: Pose2,
    config: RobotConfig,
    camera: CameraModel,
    dispatch_target: Option<Point2>,
    /// Target of the most recent plan, kept after arrival to suppress needless replans.
    planned_for: Option<Point2>,
    current_path: Option<Path>,
    following: Option<Following>,
    /// Point to turn toward when not driving, with the turn rate to use.
    facing: Option<(Point2, f64)>,
    odometer: f64,
}

fn mounted_camera(pose: &Pose2, config: &RobotConfig) -> Result<CameraModel, CameraError> {
    CameraModel::mounted(
        "robot",
        pose,
        config.camera_forward,
        config.camera_height,
        config.camera_pitch,
        config.camera,
    )
}

impl RobotSim {
    pub fn new(pose: Pose2, config: RobotConfig) -> Result<Self, CameraError> {
        let camera = mounted_camera(&pose, &config)?;
        Ok(Self {
            pose,
            config,
            camera,
            dispatch_target: None,
            planned_for: None,
            current_path: None,
            following: None,
            facing: None,
            odometer: 0.0,
        })
    }

    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn dispatch_target(&self) -> Option<Point2> {
        self.dispatch_target
    }

    pub fn current_path(&self) -> Option<&Path> {
        self.current_path.as_ref()
    }

    /// Total distance driven.
    pub fn odometer(&self) -> f64 {
        self.odometer
    }

    pub fn is_moving(&self) -> bool {
        self.following.is_some()
    }

    fn set_pose(&mut self, pose: Pose2) {
        self.pose = pose;
        self.camera = mounted_camera(&pose, &self.config).expect("camera config validated at construction");
    }

    /// Follows an explicit path, starting from the current position.
    pub fn follow(&mut self, path: Path, target: Option<Point2>) {
        let mut pts = vec![self.pose.position];
        pts.extend(path.waypoints.iter().copied());
        pts.dedup();
        self.dispatch_target = target;
        self.facing = target.map(|t| (t, self.config.turn_rate));
        self.following = Polyline::new(pts).ok().map(|route| {
            let ahead = route
                .point_at(self.config.lookahead.min(route.length()))
                .sub(self.pose.position);
            let behind = normalize_angle(ahead.y.atan2(ahead.x) - self.pose.theta).abs() > std::f64::consts::FRAC_PI_2;
            Following {
                reverse: behind && route.length() <= self.config.max_reverse,
                route,
                progress: 0.0,
            }
        });
        self.current_path = Some(path);
    }

    pub fn stop(&mut self) {
        self.dispatch_target = None;
        self.planned_for = None;
        self.current_path = None;
        self.following = None;
        self.facing = None;
    }

    /// Rotates in place toward `p` (e.g. a user turning the robot by hand).
    pub fn turn_toward(&mut self, p: Point2, rate: f64) {
        if self.following.is_none() {
            self.facing = Some((p, rate));
        }
    }

    /// Sends the robot near `target`, stopping within the standoff distance.
    /// Returns the new path when a (re)plan happened.
    pub fn dispatch(&mut self, planner: &Planner, target: Point2) -> Result<Option<Path>, PlanError> {
        let here = self.pose.position;
        let (inner, outer) = (self.config.min_standoff, self.config.standoff);
        let in_ring = (inner..=outer).contains(&here.distance(&target));
        if let Some(prev) = self.planned_for {
            // an idle robot that drifted out of the viewing ring must react even to small moves
            if prev.distance(&target) <= self.config.replan_distance && (self.following.is_some() || in_ring) {
                return Ok(None);
            }
        }
        self.planned_for = Some(target);
        if in_ring {
            self.following = None;
            self.current_path = None;
            self.dispatch_target = None;
            self.facing = Some((target, self.config.turn_rate));
            return Ok(None);
        }
        let start = if planner.is_traversable_at(here) {
            here
        } else {
            match planner.nearest_traversable(here) {
                Some(p) => p,
                None => return Ok(None),
            }
        };
        let path = match planner.plan_to_ring(start, target, inner, outer)? {
            Some(p) => Some(p),
            None => match planner.nearest_reachable(start, target)? {
                Some(goal) => planner.plan(start, goal)?,
                None => None,
            },
        };
        match path {
            Some(p) => {
                self.follow(p.clone(), Some(target));
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }

    /// Whether the robot has finished turning toward `p`.
    pub fn is_facing(&self, p: Point2) -> bool {
        let d = p.sub(self.pose.position);
        normalize_angle(d.y.atan2(d.x) - self.pose.theta).abs() < 1e-3
    }

    /// Moves the robot (as a user pushing it would) to the closest spot of the viewing ring
    /// around `p` from which its camera, turned toward `p`, would see it past `walls`.
    /// Falls back to any ring cell when no such place is reachable.
    pub fn reposition(&mut self, planner: &Planner, p: Point2, walls: &[Segment]) -> Result<(), PlanError> {
        let here = self.pose.position;
        if !planner.is_traversable_at(here) {
            return Ok(());
        }
        let (inner, outer) = (self.config.min_standoff, self.config.standoff);
        let config = &self.config;
        let sees_from = |q: Point2| {
            let d = p.sub(q);
            mounted_camera(&Pose2::new(q.x, q.y, d.y.atan2(d.x)), config).is_ok_and(|cam| cam.sees(p, walls))
        };
        let path = match planner.plan_to_ring_where(here, p, inner, outer, sees_from)? {
            Some(path) => Some(path),
            None => planner.plan_to_ring(here, p, inner, outer)?,
        };
        if let Some(path) = path {
            self.follow(path, None);
        }
        self.facing = Some((p, self.config.seed_turn_rate));
        Ok(())
    }

    fn rotate_toward(&mut self, desired: f64, rate: f64, dt: f64) -> f64 {
        let err = normalize_angle(desired - self.pose.theta);
        let step = err.clamp(-rate * dt, rate * dt);
        let pose = Pose2::new(self.pose.position.x, self.pose.position.y, self.pose.theta + step);
        self.set_pose(pose);
        normalize_angle(desired - self.pose.theta)
    }

    /// Advances the robot by `dt` seconds. Translation never exceeds `v_max * dt`.
    pub fn tick(&mut self, dt: f64) {
        if let Some(mut f) = self.following.take() {
            let len = f.route.length();
            let here = self.pose.position;
            let ahead = f.route.point_at((f.progress + self.config.lookahead).min(len));
            let desired = if ahead.distance(&here) > 1e-9 {
                let d = ahead.sub(here);
                let heading = d.y.atan2(d.x);
                if f.reverse {
                    heading + std::f64::consts::PI
                } else {
                    heading
                }
            } else {
                self.pose.theta
            };
            let err = self.rotate_toward(desired, self.config.turn_rate, dt);
            if err.abs() < self.config.max_drive_heading_error {
                let before = f.progress;
                f.progress = (f.progress + self.config.v_max * dt).min(len);
                self.odometer += f.progress - before;
                let p = f.route.point_at(f.progress);
                self.set_pose(Pose2::new(p.x, p.y, self.pose.theta));
            }
            if f.progress >= len - 1e-12 {
                self.current_path = None;
                self.dispatch_target = None;
            } else {
                self.following = Some(f);
            }
            return;
        }
        if let Some((p, rate)) = self.facing {
            let d = p.sub(self.pose.position);
            if d.norm() < 1e-9 {
                self.facing = None;
                return;
            }
            let err = self.rotate_toward(d.y.atan2(d.x), rate, dt);
            if err.abs() < 1e-9 {
                self.facing = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{Occupancy, OccupancyGrid};
    use approx::assert_relative_eq;

    fn open_planner() -> Planner {
        let g = OccupancyGrid::new(200, 80, 0.025, Pose2::default(), Occupancy::Free).unwrap();
        Planner::new(&g, 0.0).unwrap()
    }

    #[test]
    fn aligned_robot_moves_exactly_v_dt() {
        let mut r = RobotSim::new(Pose2::new(0.5, 1.0, 0.0), RobotConfig::default()).unwrap();
        let path = Path {
            waypoints: vec![Point2::new(1.5, 1.0)],
            length: 1.0,
        };
        r.follow(path, None);
        r.tick(1.0);
        assert_relative_eq!(r.pose().position.x, 0.7, epsilon = 1e-12);
        assert_relative_eq!(r.odometer(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn idle_robot_stays_put() {
        let mut r = RobotSim::new(Pose2::new(0.5, 1.0, 0.3), RobotConfig::default()).unwrap();
        r.tick(5.0);
        assert_eq!(r.pose(), Pose2::new(0.5, 1.0, 0.3));
    }

    #[test]
    fn arrival_time_matches_kinematics() {
        let planner = open_planner();
        let mut r = RobotSim::new(
            planner
                .grid()
                .cell_to_world(crate::gridmap::Cell::new(20, 40))
                .into_pose(0.0),
            RobotConfig::default(),
        )
        .unwrap();
        let target = Point2::new(4.0, 1.0);
        let path = r.dispatch(&planner, target).unwrap().expect("planned");
        let dt = 0.04;
        let mut t = 0.0;
        let mut last = r.pose().position;
        while r.is_moving() {
            r.tick(dt);
            t += dt;
            assert!(r.pose().position.distance(&last) <= 0.2 * dt + 1e-9);
            last = r.pose().position;
            assert!(t < 100.0);
        }
        let route = path.length + 0.0;
        assert!((t - route / 0.2).abs() <= dt + 1e-9, "t={t} route={route}");
        let d = r.pose().position.distance(&target);
        assert!((0.6 - 1e-9..=0.9 + 1e-9).contains(&d));
        assert!(r.dispatch_target().is_none());
    }

    #[test]
    fn small_target_moves_do_not_replan() {
        let planner = open_planner();
        let mut r = RobotSim::new(Pose2::new(0.5, 1.0, 0.0), RobotConfig::default()).unwrap();
        assert!(r.dispatch(&planner, Point2::new(4.0, 1.0)).unwrap().is_some());
        assert!(r.dispatch(&planner, Point2::new(4.2, 1.0)).unwrap().is_none());
        assert!(r.dispatch(&planner, Point2::new(4.3, 1.0)).unwrap().is_some());
    }

    #[test]
    fn turns_in_place_at_limited_rate() {
        let mut r = RobotSim::new(Pose2::new(1.0, 1.0, 0.0), RobotConfig::default()).unwrap();
        r.turn_toward(Point2::new(1.0, 2.0), 0.5);
        r.tick(1.0);
        assert_relative_eq!(r.pose().theta, 0.5, epsilon = 1e-12);
        for _ in 0..10 {
            r.tick(1.0);
        }
        assert_relative_eq!(r.pose().theta, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(r.pose().position, Point2::new(1.0, 1.0));
    }

    #[test]
    fn short_back_off_is_driven_in_reverse() {
        let mut r = RobotSim::new(Pose2::new(1.0, 1.0, 0.0), RobotConfig::default()).unwrap();
        r.follow(
            Path {
                waypoints: vec![Point2::new(0.7, 1.0)],
                length: 0.3,
            },
            None,
        );
        r.tick(1.0);
        assert_relative_eq!(r.pose().theta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.pose().position.x, 0.8, epsilon = 1e-12);
    }

    trait IntoPose {
        fn into_pose(self, theta: f64) -> Pose2;
    }

    impl IntoPose for Point2 {
        fn into_pose(self, theta: f64) -> Pose2 {
            Pose2::new(self.x, self.y, theta)
        }
    }
}
