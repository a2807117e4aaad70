use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::ExtractionParams;
use crate::geometry::{Point2, Polyline, Pose2, RigidTransform3, Segment};
use crate::gridmap::{integrate_border, load_map, BorderKind, Cell, MapError, Occupancy, OccupancyGrid, VirtualBorder};
use crate::interaction::{Mode, RobotConfig, SessionConfig};
use crate::perception::{CameraError, CameraIntrinsics, CameraKind, CameraModel, NoiseModel, DEFAULT_FRAME_RATE};
use crate::planner::{reachable, PlanError, Planner};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Offending field for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// A straight wall of given thickness. Low furniture can be marked non-occluding:
/// it blocks the robot but not the cameras' view of the floor around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: Point2,
    pub to: Point2,
    #[serde(default = "default_wall_thickness")]
    pub thickness: f64,
    #[serde(default = "yes")]
    pub occludes: bool,
}

fn default_wall_thickness() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

impl Wall {
    pub fn new(from: Point2, to: Point2) -> Self {
        Self {
            from,
            to,
            thickness: default_wall_thickness(),
            occludes: true,
        }
    }

    pub fn segment(&self) -> Segment {
        Segment::new(self.from, self.to)
    }

    /// True when `p` lies in the wall's rectangle (flat ends, no end caps).
    pub fn covers(&self, p: Point2) -> bool {
        let d = self.to.sub(self.from);
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return p.distance(&self.from) <= self.thickness / 2.0;
        }
        let t = p.sub(self.from).dot(d) / len2;
        if !(-1e-9..=1.0 + 1e-9).contains(&t) {
            return false;
        }
        let perp = p.sub(self.from).cross(d).abs() / len2.sqrt();
        perp <= self.thickness / 2.0 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CameraPlacement {
    /// Ceiling mounted, looking straight down.
    Nadir { x: f64, y: f64, height: f64, yaw: f64 },
    /// Arbitrary camera-to-map transform.
    Transform { transform: RigidTransform3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    pub placement: CameraPlacement,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

impl CameraSpec {
    pub fn build(&self) -> Result<CameraModel, CameraError> {
        let mut cam = match &self.placement {
            CameraPlacement::Nadir { x, y, height, yaw } => {
                CameraModel::nadir(self.id.clone(), *x, *y, *height, *yaw, self.intrinsics)?
            }
            CameraPlacement::Transform { transform } => {
                self.intrinsics.validate()?;
                CameraModel {
                    id: self.id.clone(),
                    intrinsics: self.intrinsics,
                    pose: transform.clone(),
                    kind: CameraKind::Stationary,
                    frame_rate: self.frame_rate,
                }
            }
        };
        cam.frame_rate = self.frame_rate;
        Ok(cam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrokePurpose {
    Border,
    Seed,
}

/// What the scripted user does with the laser pointer in one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedStroke {
    pub purpose: StrokePurpose,
    /// Points to trace; a single point means holding still.
    pub points: Vec<Point2>,
    /// Seconds of detected pointing at the first point before tracing begins.
    #[serde(default)]
    pub dwell: f64,
}

impl ScriptedStroke {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Position after travelling `s` meters along the stroke.
    pub fn point_at(&self, s: f64) -> Point2 {
        match Polyline::dedup(self.points.clone()) {
            Ok(line) => line.point_at(s),
            Err(_) => self.points[0],
        }
    }
}

/// A probe for navigational change: reachable on the prior, not on the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityProbe {
    pub start: Point2,
    pub goal: Point2,
}

impl ReachabilityProbe {
    /// Whether the robot can plan from `start` to `goal` on `map`.
    pub fn check(&self, map: &OccupancyGrid, inflation: f64) -> Result<bool, PlanError> {
        reachable(map, self.start, self.goal, inflation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Map extent in meters (width, height); the origin is (0, 0).
    pub bounds: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub walls: Vec<Wall>,
    /// Map file (YAML or PGM) to use instead of rasterizing the walls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_map: Option<String>,
    pub cameras: Vec<CameraSpec>,
    pub robot_start: Pose2,
    #[serde(default)]
    pub robot: RobotConfig,
    pub ground_truth_border: VirtualBorder,
    pub strokes: Vec<ScriptedStroke>,
    #[serde(default = "default_stroke_speed")]
    pub stroke_speed: f64,
    #[serde(default)]
    pub params: ExtractionParams,
    #[serde(default)]
    pub noise_sigma: NoiseModel,
    #[serde(default = "default_switch_latency")]
    pub switch_latency: f64,
    /// Lead distance of the guiding laser spot ahead of the robot, m.
    #[serde(default = "default_guide_lead")]
    pub guide_lead: f64,
    /// Guiding ends once the first stroke point is visible and this close, m.
    #[serde(default = "default_guide_reach")]
    pub guide_reach: f64,
    /// Give up a stroke after this many simulated seconds.
    #[serde(default = "default_stroke_timeout")]
    pub stroke_timeout: f64,
    /// Time the user spends checking feedback after a stroke before the next command, s.
    #[serde(default = "default_confirm_pause")]
    pub confirm_pause: f64,
    pub probe: ReachabilityProbe,
}

fn default_resolution() -> f64 {
    0.025
}

fn default_stroke_speed() -> f64 {
    0.4
}

fn default_switch_latency() -> f64 {
    3.0
}

fn default_guide_lead() -> f64 {
    1.3
}

fn default_guide_reach() -> f64 {
    1.0
}

fn default_stroke_timeout() -> f64 {
    300.0
}

fn default_confirm_pause() -> f64 {
    4.0
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let mut sc = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // relative map paths are resolved next to the scenario file
        if let Some(file) = &mut sc.prior_map {
            let p = FsPath::new(file.as_str());
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(sc)
    }

    pub fn width_cells(&self) -> usize {
        (self.bounds[0] / self.resolution).round() as usize
    }

    pub fn height_cells(&self) -> usize {
        (self.bounds[1] / self.resolution).round() as usize
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.bounds[0] && p.y <= self.bounds[1]
    }

    pub fn build_cameras(&self) -> Result<Vec<CameraModel>, ScenarioError> {
        self.cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.build()
                    .map_err(|e| ScenarioError::invalid(format!("cameras[{i}]"), e.to_string()))
            })
            .collect()
    }

    /// Segments that block camera sight lines.
    pub fn occluders(&self) -> Vec<Segment> {
        self.walls.iter().filter(|w| w.occludes).map(Wall::segment).collect()
    }

    /// Rasterizes the walls into a trinary grid (cells whose center lies in a wall are occupied).
    pub fn generate_prior(&self) -> Result<OccupancyGrid, ScenarioError> {
        let mut grid = OccupancyGrid::new(
            self.width_cells(),
            self.height_cells(),
            self.resolution,
            Pose2::default(),
            Occupancy::Free,
        )?;
        for r in 0..grid.height() {
            for c in 0..grid.width() {
                let cell = Cell::new(c, r);
                let p = grid.cell_to_world(cell);
                if self.walls.iter().any(|w| w.covers(p)) {
                    grid.set(cell, Occupancy::Occupied);
                }
            }
        }
        Ok(grid)
    }

    pub fn prior(&self) -> Result<OccupancyGrid, ScenarioError> {
        match &self.prior_map {
            Some(file) => Ok(load_map(file)?),
            None => self.generate_prior(),
        }
    }

    pub fn ground_truth(&self, prior: &OccupancyGrid) -> Result<OccupancyGrid, ScenarioError> {
        integrate_border(prior, &self.ground_truth_border)
            .map_err(|e| ScenarioError::invalid("ground_truth_border", e.to_string()))
    }

    /// Session configuration for a replay or live session of this scenario.
    pub fn session_config(&self, mode: Mode, seed: u64, noise_scale: f64) -> Result<SessionConfig, ScenarioError> {
        Ok(SessionConfig {
            mode,
            cameras: self.build_cameras()?,
            walls: self.occluders(),
            robot_start: self.robot_start,
            robot: self.robot.clone(),
            noise: self.noise_sigma.scaled(noise_scale),
            params: self.params.clone(),
            switch_latency: self.switch_latency,
            rng_seed: seed,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.bounds[0] > 0.0 && self.bounds[1] > 0.0) {
            return Err(ScenarioError::invalid("bounds", "width and height must be positive"));
        }
        if self.resolution.is_nan() || self.resolution <= 0.0 {
            return Err(ScenarioError::invalid("resolution", "must be positive"));
        }
        if self.stroke_speed.is_nan() || self.stroke_speed <= 0.0 {
            return Err(ScenarioError::invalid("stroke_speed", "must be positive"));
        }
        if self.switch_latency < 0.0 {
            return Err(ScenarioError::invalid("switch_latency", "must be non-negative"));
        }
        self.params
            .validate()
            .map_err(|e| ScenarioError::invalid("params", e.to_string()))?;
        self.build_cameras()?;
        if self.strokes.is_empty() {
            return Err(ScenarioError::invalid("strokes", "at least one stroke is required"));
        }
        for (i, s) in self.strokes.iter().enumerate() {
            if s.points.is_empty() {
                return Err(ScenarioError::invalid(format!("strokes[{i}].points"), "empty"));
            }
            if let Some(p) = s.points.iter().find(|p| !self.contains(**p)) {
                return Err(ScenarioError::invalid(
                    format!("strokes[{i}].points"),
                    format!("({}, {}) is outside the bounds", p.x, p.y),
                ));
            }
            if s.dwell < 0.0 {
                return Err(ScenarioError::invalid(
                    format!("strokes[{i}].dwell"),
                    "must be non-negative",
                ));
            }
        }
        if !self.strokes.iter().any(|s| s.purpose == StrokePurpose::Border)
            || !self.strokes.iter().any(|s| s.purpose == StrokePurpose::Seed)
        {
            return Err(ScenarioError::invalid("strokes", "need a border and a seed stroke"));
        }
        let gt = &self.ground_truth_border;
        if let Some(p) = gt
            .chain
            .vertices()
            .iter()
            .chain([&gt.seed])
            .find(|p| !self.contains(**p))
        {
            return Err(ScenarioError::invalid(
                "ground_truth_border",
                format!("({}, {}) is outside the bounds", p.x, p.y),
            ));
        }
        if gt.kind == BorderKind::Polygon && gt.chain.len() < 3 {
            return Err(ScenarioError::invalid(
                "ground_truth_border.chain",
                "a polygon needs 3 vertices",
            ));
        }
        let prior = self.prior()?;
        if prior.width() != self.width_cells() || prior.height() != self.height_cells() {
            return Err(ScenarioError::invalid("prior_map", "map size does not match bounds"));
        }
        let planner = Planner::new(&prior, self.robot.inflation)
            .map_err(|e| ScenarioError::invalid("robot.inflation", e.to_string()))?;
        if !planner.is_traversable_at(self.robot_start.position) {
            return Err(ScenarioError::invalid("robot_start", "not in free space"));
        }
        self.ground_truth(&prior)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin_scenarios;

    fn room() -> Scenario {
        builtin_scenarios().remove(0)
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        for sc in builtin_scenarios() {
            let back = Scenario::from_toml(&sc.to_toml()).unwrap();
            assert_eq!(back, sc);
        }
    }

    #[test]
    fn optional_fields_take_defaults() {
        let mut sc = room();
        let text = sc.to_toml();
        let trimmed: String = text
            .lines()
            .filter(|l| {
                ![
                    "stroke_speed",
                    "switch_latency",
                    "guide_lead",
                    "guide_reach",
                    "stroke_timeout",
                    "confirm_pause",
                ]
                .iter()
                .any(|k| l.starts_with(k))
            })
            .map(|l| format!("{l}\n"))
            .collect();
        let parsed = Scenario::from_toml(&trimmed).unwrap();
        sc.stroke_speed = 0.4;
        sc.switch_latency = 3.0;
        sc.guide_lead = 1.3;
        sc.guide_reach = 1.0;
        sc.stroke_timeout = 300.0;
        sc.confirm_pause = 4.0;
        assert_eq!(parsed, sc);
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut sc = room();
        sc.stroke_speed = 0.0;
        assert_eq!(sc.validate().unwrap_err().field(), Some("stroke_speed"));

        let mut sc = room();
        sc.strokes[1].points[0] = Point2::new(9.0, 1.0);
        assert_eq!(sc.validate().unwrap_err().field(), Some("strokes[1].points"));

        let mut sc = room();
        sc.robot_start = Pose2::new(0.05, 2.0, 0.0);
        assert_eq!(sc.validate().unwrap_err().field(), Some("robot_start"));

        let mut sc = room();
        sc.params.eps = -1.0;
        assert_eq!(sc.validate().unwrap_err().field(), Some("params"));

        let mut sc = room();
        sc.strokes.retain(|s| s.purpose == StrokePurpose::Border);
        assert_eq!(sc.validate().unwrap_err().field(), Some("strokes"));
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        assert!(matches!(Scenario::from_toml("name = 3"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn walls_cover_their_footprint_only() {
        let w = Wall::new(Point2::new(1.0, 1.0), Point2::new(3.0, 1.0));
        assert!(w.covers(Point2::new(2.0, 1.04)));
        assert!(!w.covers(Point2::new(2.0, 1.06)));
        assert!(!w.covers(Point2::new(3.01, 1.0)));
    }

    #[test]
    fn stroke_is_parameterized_by_arc_length() {
        let s = ScriptedStroke {
            purpose: StrokePurpose::Border,
            points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 2.0)],
            dwell: 0.0,
        };
        assert!((s.length() - 3.0).abs() < 1e-12);
        assert_eq!(s.point_at(2.0), Point2::new(1.0, 1.0));
        assert_eq!(s.point_at(10.0), Point2::new(1.0, 2.0));
    }

    #[test]
    fn prior_map_file_overrides_walls() {
        let dir = tempfile::tempdir().unwrap();
        let sc = room();
        let prior = sc.generate_prior().unwrap();
        crate::gridmap::save_map(&prior, dir.path().join("lab.yaml")).unwrap();
        let mut with_file = sc.clone();
        with_file.prior_map = Some("lab.yaml".into());
        with_file.walls.clear();
        let path = dir.path().join("room.toml");
        std::fs::write(&path, with_file.to_toml()).unwrap();
        let loaded = Scenario::load(&path).unwrap();
        assert_eq!(loaded.prior().unwrap(), prior);
        loaded.validate().unwrap();
    }
}
