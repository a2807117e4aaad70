//! The interaction state machine: commands switch between Default, Border, Seed and
//! Guide; laser spots are perceived by the available cameras, buffered, and used to
//! dispatch the robot; Save extracts a border and integrates it into the map.

mod events;
mod robot;

pub use events::{from_json_lines, to_json_lines, BufferKind, Event, EventBody};
pub use robot::{RobotConfig, RobotSim};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{extract_border, ExtractionParams};
use crate::geometry::{Point2, Polyline, Pose2, Segment};
use crate::gridmap::{integrate_border_with, IntegrationOptions, MapError, OccupancyGrid, VirtualBorder};
use crate::perception::{fuse, simulate_detection, CameraError, CameraKind, CameraModel, NoiseModel};
use crate::planner::{PlanError, Planner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Default,
    Border,
    Seed,
    Guide,
}

impl SessionState {
    pub const ALL: [SessionState; 4] = [
        SessionState::Default,
        SessionState::Border,
        SessionState::Seed,
        SessionState::Guide,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Command {
    DefineBorder,
    DefineSeed,
    GuideRobot,
    Save,
    Cancel,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::DefineBorder,
        Command::DefineSeed,
        Command::GuideRobot,
        Command::Save,
        Command::Cancel,
    ];
}

impl std::str::FromStr for Command {
    type Err = String;

    /// Accepts `DefineBorder`, `define_border`, `define-border` or `define border`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "defineborder" => Ok(Command::DefineBorder),
            "defineseed" => Ok(Command::DefineSeed),
            "guiderobot" => Ok(Command::GuideRobot),
            "save" => Ok(Command::Save),
            "cancel" => Ok(Command::Cancel),
            _ => Err(format!(
                "unknown command {s:?}; expected one of define_border, define_seed, guide_robot, save, cancel"
            )),
        }
    }
}

/// NRS uses stationary cameras plus the robot camera; RobotOnly has the robot camera alone
/// and pays a fixed latency for every state switch made on the robot itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Nrs,
    RobotOnly,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nrs" => Ok(Mode::Nrs),
            "robot-only" | "robotonly" => Ok(Mode::RobotOnly),
            other => Err(format!("unknown mode {other:?}; expected nrs or robot-only")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Nrs => "nrs",
            Mode::RobotOnly => "robot-only",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("session is not finished: no save or cancel has happened yet")]
    Unfinished,
    #[error("tick duration must be positive and finite, got {0}")]
    InvalidTick(f64),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Stationary cameras; ignored in RobotOnly mode.
    pub cameras: Vec<CameraModel>,
    /// Occluding wall segments.
    pub walls: Vec<Segment>,
    pub robot_start: Pose2,
    pub robot: RobotConfig,
    pub noise: NoiseModel,
    pub params: ExtractionParams,
    /// Extra time a RobotOnly state switch costs, seconds.
    pub switch_latency: f64,
    pub rng_seed: u64,
}

impl SessionConfig {
    pub fn new(mode: Mode, robot_start: Pose2) -> Self {
        Self {
            mode,
            cameras: Vec::new(),
            walls: Vec::new(),
            robot_start,
            robot: RobotConfig::default(),
            noise: NoiseModel::default(),
            params: ExtractionParams::default(),
            switch_latency: 3.0,
            rng_seed: 0,
        }
    }
}

/// Seconds spent in each active state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub guide: f64,
    pub border: f64,
    pub seed: f64,
    pub total: f64,
}

impl Timing {
    fn slot(&mut self, state: SessionState) -> Option<&mut f64> {
        match state {
            SessionState::Default => None,
            SessionState::Border => Some(&mut self.border),
            SessionState::Seed => Some(&mut self.seed),
            SessionState::Guide => Some(&mut self.guide),
        }
    }

    fn charge(&mut self, state: SessionState, seconds: f64) {
        if let Some(t) = self.slot(state) {
            *t += seconds;
            self.total = self.guide + self.border + self.seed;
        }
    }
}

/// Consistent view of a session for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub state: SessionState,
    pub mode: Mode,
    pub sim_time: f64,
    pub robot_pose: Pose2,
    pub dispatch_target: Option<Point2>,
    pub border_points: usize,
    pub seed_points: usize,
    pub map_version: u64,
    pub timing: Timing,
    pub events: u64,
}

pub struct InteractionSession {
    config: SessionConfig,
    state: SessionState,
    prior: OccupancyGrid,
    posterior: Option<OccupancyGrid>,
    last_border: Option<VirtualBorder>,
    planner: Planner,
    border_buffer: Vec<Point2>,
    seed_buffer: Vec<Point2>,
    robot: RobotSim,
    timing: Timing,
    clock: f64,
    rng: ChaCha8Rng,
    log: Vec<Event>,
    map_version: u64,
    finished: bool,
}

impl InteractionSession {
    pub fn new(config: SessionConfig, prior: OccupancyGrid) -> Result<Self, SessionError> {
        let planner = Planner::new(&prior, config.robot.inflation)?;
        let robot = RobotSim::new(config.robot_start, config.robot.clone())?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            state: SessionState::Default,
            prior,
            posterior: None,
            last_border: None,
            planner,
            border_buffer: Vec::new(),
            seed_buffer: Vec::new(),
            robot,
            timing: Timing::default(),
            clock: 0.0,
            log: Vec::new(),
            map_version: 0,
            finished: false,
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn prior(&self) -> &OccupancyGrid {
        &self.prior
    }

    pub fn posterior(&self) -> Option<&OccupancyGrid> {
        self.posterior.as_ref()
    }

    /// The map navigation currently runs on: the latest posterior, else the prior.
    pub fn current_map(&self) -> &OccupancyGrid {
        self.posterior.as_ref().unwrap_or(&self.prior)
    }

    pub fn last_border(&self) -> Option<&VirtualBorder> {
        self.last_border.as_ref()
    }

    pub fn border_buffer(&self) -> &[Point2] {
        &self.border_buffer
    }

    pub fn seed_buffer(&self) -> &[Point2] {
        &self.seed_buffer
    }

    pub fn robot(&self) -> &RobotSim {
        &self.robot
    }

    pub fn sim_time(&self) -> f64 {
        self.clock
    }

    pub fn map_version(&self) -> u64 {
        self.map_version
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn events_since(&self, seq: u64) -> &[Event] {
        let start = (seq as usize).min(self.log.len());
        &self.log[start..]
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            state: self.state,
            mode: self.config.mode,
            sim_time: self.clock,
            robot_pose: self.robot.pose(),
            dispatch_target: self.robot.dispatch_target(),
            border_points: self.border_buffer.len(),
            seed_points: self.seed_buffer.len(),
            map_version: self.map_version,
            timing: self.timing,
            events: self.log.len() as u64,
        }
    }

    /// Cameras available in this mode: stationary ones (NRS only) followed by the robot's.
    pub fn active_cameras(&self) -> Vec<&CameraModel> {
        let mut cams: Vec<&CameraModel> = match self.config.mode {
            Mode::Nrs => self.config.cameras.iter().collect(),
            Mode::RobotOnly => Vec::new(),
        };
        cams.push(self.robot.camera());
        cams
    }

    fn emit(&mut self, body: EventBody, out: &mut Vec<Event>) {
        let e = Event {
            seq: self.log.len() as u64,
            sim_time: self.clock,
            body,
        };
        self.log.push(e.clone());
        out.push(e);
    }

    fn error(&mut self, code: &str, message: String, stage: Option<&str>, out: &mut Vec<Event>) {
        self.emit(
            EventBody::Error {
                code: code.into(),
                message,
                stage: stage.map(str::to_string),
            },
            out,
        );
    }

    /// Switch cost in RobotOnly mode: commands given from an active state are entered on
    /// the robot and take `switch_latency`. The cost lands on `charged`; Guide never pays.
    fn pay_switch(&mut self, charged: SessionState) {
        if self.config.mode != Mode::RobotOnly
            || self.state == SessionState::Default
            || charged == SessionState::Guide
            || self.config.switch_latency <= 0.0
        {
            return;
        }
        self.clock += self.config.switch_latency;
        self.timing.charge(charged, self.config.switch_latency);
    }

    fn enter(&mut self, to: SessionState, command: Command, out: &mut Vec<Event>) {
        if to == self.state {
            return;
        }
        self.pay_switch(to);
        let from = self.state;
        self.state = to;
        self.emit(EventBody::StateChanged { from, to, command }, out);
    }

    fn reset_to_default(&mut self, command: Command, out: &mut Vec<Event>) {
        self.border_buffer.clear();
        self.seed_buffer.clear();
        self.robot.stop();
        let from = self.state;
        self.state = SessionState::Default;
        if from != SessionState::Default {
            self.emit(
                EventBody::StateChanged {
                    from,
                    to: SessionState::Default,
                    command,
                },
                out,
            );
        }
    }

    pub fn handle_command(&mut self, cmd: Command) -> Vec<Event> {
        let mut out = Vec::new();
        match cmd {
            Command::DefineBorder => self.enter(SessionState::Border, cmd, &mut out),
            Command::DefineSeed => self.enter(SessionState::Seed, cmd, &mut out),
            Command::GuideRobot => self.enter(SessionState::Guide, cmd, &mut out),
            Command::Cancel => {
                let current = self.state;
                self.pay_switch(current);
                let (b, s) = (self.border_buffer.len(), self.seed_buffer.len());
                self.emit(
                    EventBody::Cancelled {
                        discarded_border_points: b,
                        discarded_seed_points: s,
                    },
                    &mut out,
                );
                self.reset_to_default(cmd, &mut out);
                self.finished = true;
            }
            Command::Save => self.save(&mut out),
        }
        out
    }

    fn save(&mut self, out: &mut Vec<Event>) {
        if self.border_buffer.is_empty() || self.seed_buffer.is_empty() {
            let message = format!(
                "nothing to save: {} border and {} seed points buffered",
                self.border_buffer.len(),
                self.seed_buffer.len()
            );
            self.error("nothing_to_save", message, None, out);
            return;
        }
        let (border, diagnostics) = match extract_border(&self.border_buffer, &self.seed_buffer, &self.config.params) {
            Ok(r) => r,
            Err(e) => {
                let stage = e.stage();
                self.error("extraction_failed", e.to_string(), Some(stage), out);
                return;
            }
        };
        let base = self.current_map().clone();
        // measurement noise can push a vertex next to an outer wall just past the map edge
        let border = match Polyline::new(border.chain.vertices().iter().map(|&p| base.clamp_to_map(p)).collect()) {
            Ok(chain) => VirtualBorder { chain, ..border },
            Err(_) => border,
        };
        let posterior = match integrate_border_with(&base, &border, IntegrationOptions::default()) {
            Ok(p) => p,
            Err(e) => {
                let code = match e {
                    MapError::SeedOnBorder => "seed_on_border",
                    MapError::SeedNotFree(_) => "seed_not_free",
                    MapError::OutOfBounds { .. } => "out_of_bounds",
                    _ => "integration_failed",
                };
                self.error(code, e.to_string(), Some("integration"), out);
                return;
            }
        };
        let planner = match Planner::new(&posterior, self.config.robot.inflation) {
            Ok(p) => p,
            Err(e) => {
                self.error("planner_failed", e.to_string(), Some("integration"), out);
                return;
            }
        };
        let current = self.state;
        self.pay_switch(current);
        self.planner = planner;
        self.posterior = Some(posterior);
        self.map_version += 1;
        self.finished = true;
        self.emit(
            EventBody::BorderSaved {
                kind: border.kind,
                vertices: border.chain.vertices().to_vec(),
                seed: border.seed,
                map_version: self.map_version,
                diagnostics,
            },
            out,
        );
        self.last_border = Some(border);
        self.reset_to_default(Command::Save, out);
    }

    /// Presents the true laser spot to every available camera at the current time.
    /// Returns the events and the number of cameras that detected the spot.
    pub fn on_laser_spot(&mut self, true_spot: Point2) -> (Vec<Event>, usize) {
        let mut out = Vec::new();
        if self.state == SessionState::Default {
            return (out, 0);
        }
        let detections = {
            let cams: Vec<&CameraModel> = match self.config.mode {
                Mode::Nrs => self.config.cameras.iter().collect(),
                Mode::RobotOnly => Vec::new(),
            };
            let mut cams = cams;
            cams.push(self.robot.camera());
            simulate_detection(
                &self.config.walls,
                &cams,
                true_spot,
                &self.config.noise,
                self.clock,
                &mut self.rng,
            )
        };
        let count = detections.len();
        if count == 0 {
            // nobody sees the spot: the user adjusts the idle robot by hand, turning it toward
            // the spot, or pushing it to a better place when it is too close or turning did not help
            if !self.robot.is_moving() {
                let too_close = self.robot.pose().position.distance(&true_spot) < self.config.robot.min_standoff;
                if too_close || self.robot.is_facing(true_spot) {
                    if let Err(e) = self.robot.reposition(&self.planner, true_spot, &self.config.walls) {
                        self.error("dispatch_failed", e.to_string(), None, &mut out);
                    }
                } else {
                    let rate = self.config.robot.seed_turn_rate;
                    self.robot.turn_toward(true_spot, rate);
                }
            }
            return (out, 0);
        }
        let sources: Vec<usize> = detections.iter().map(|d| d.source).collect();
        let points = fuse(&[detections]);
        let buffer = match self.state {
            SessionState::Border => {
                self.border_buffer.extend_from_slice(&points);
                BufferKind::Border
            }
            SessionState::Seed => {
                self.seed_buffer.extend_from_slice(&points);
                BufferKind::Seed
            }
            _ => BufferKind::None,
        };
        let buffer_len = match buffer {
            BufferKind::Border => self.border_buffer.len(),
            BufferKind::Seed => self.seed_buffer.len(),
            BufferKind::None => 0,
        };
        let target = crate::geometry::centroid(&points).expect("at least one detection");
        self.emit(
            EventBody::SpotDetected {
                points,
                sources,
                buffer,
                buffer_len,
            },
            &mut out,
        );
        match self.robot.dispatch(&self.planner, target) {
            Ok(Some(path)) => {
                self.emit(
                    EventBody::RobotDispatched {
                        target,
                        path_length: path.length,
                        waypoints: path.waypoints,
                    },
                    &mut out,
                );
            }
            Ok(None) => {}
            Err(e) => self.error("dispatch_failed", e.to_string(), None, &mut out),
        }
        (out, count)
    }

    /// Advances simulated time: the active state's timer and the robot.
    pub fn tick(&mut self, dt: f64) -> Result<Vec<Event>, SessionError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SessionError::InvalidTick(dt));
        }
        self.clock += dt;
        self.timing.charge(self.state, dt);
        self.robot.tick(dt);
        Ok(Vec::new())
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    pub fn timing_report(&self) -> Result<Timing, SessionError> {
        if self.finished {
            Ok(self.timing)
        } else {
            Err(SessionError::Unfinished)
        }
    }

    /// Number of stationary cameras, which come first in detection source indices.
    pub fn stationary_count(&self) -> usize {
        match self.config.mode {
            Mode::Nrs => self
                .config
                .cameras
                .iter()
                .filter(|c| c.kind == CameraKind::Stationary)
                .count(),
            Mode::RobotOnly => 0,
        }
    }
}
