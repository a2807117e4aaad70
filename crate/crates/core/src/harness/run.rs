use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, ScenarioError, ScriptedStroke, StrokePurpose};
use crate::geometry::{Point2, Polyline, Segment};
use crate::gridmap::{jsi, OccupancyGrid};
use crate::interaction::{Command, Event, EventBody, InteractionSession, Mode, SessionState, Timing};
use crate::perception::DEFAULT_FRAME_RATE;
use crate::planner::Planner;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Multiplies every camera noise sigma; 0 gives noise-free detections.
    pub noise_scale: f64,
}

impl RunOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            noise_scale: 1.0,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCounts {
    pub border: usize,
    pub seed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub noise_scale: f64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsi: Option<f64>,
    pub timing: Timing,
    pub points_collected: PointCounts,
    pub dropped_points: usize,
    /// Shortest-path length from the robot start to where guiding ended, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide_path_length: Option<f64>,
    pub robot_distance: f64,
    pub sim_time: f64,
}

impl RunReport {
    /// Time the robot needs for `guide_path_length` at full speed.
    pub fn guide_kinematic_time(&self, v_max: f64) -> Option<f64> {
        self.guide_path_length.map(|l| l / v_max)
    }
}

/// One input the scripted user gave the session, in order. Feeding the same actions
/// to a fresh session with the same configuration reproduces the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum UserAction {
    Command { command: Command },
    Spot { x: f64, y: f64 },
    Tick { dt: f64 },
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub prior: OccupancyGrid,
    pub ground_truth: OccupancyGrid,
    pub posterior: Option<OccupancyGrid>,
    pub events: Vec<Event>,
    pub actions: Vec<UserAction>,
}

/// Stand-in for the human: points the laser, waits for detection, issues commands.
struct ScriptedUser<'a> {
    sc: &'a Scenario,
    dt: f64,
    occluders: Vec<Segment>,
    /// Last place the pointer was aimed at.
    pointer: Option<Point2>,
    actions: Vec<UserAction>,
}

impl ScriptedUser<'_> {
    fn command(&mut self, s: &mut InteractionSession, command: Command) -> Vec<Event> {
        self.actions.push(UserAction::Command { command });
        s.handle_command(command)
    }

    fn tick(&mut self, s: &mut InteractionSession) -> Result<(), String> {
        self.actions.push(UserAction::Tick { dt: self.dt });
        s.tick(self.dt).map(drop).map_err(|e| e.to_string())
    }

    fn present(&mut self, s: &mut InteractionSession, spot: Point2) -> Result<usize, String> {
        self.pointer = Some(spot);
        self.actions.push(UserAction::Spot { x: spot.x, y: spot.y });
        let (_, n) = s.on_laser_spot(spot);
        self.tick(s)?;
        Ok(n)
    }

    fn idle(&mut self, s: &mut InteractionSession, seconds: f64) -> Result<(), String> {
        let steps = (seconds / self.dt - 1e-9).ceil().max(0.0) as usize;
        for _ in 0..steps {
            self.tick(s)?;
        }
        Ok(())
    }

    /// Leads the robot along a reference path with the laser until it can see `target`.
    fn guide(&mut self, s: &mut InteractionSession, planner: &Planner, target: Point2) -> Result<f64, String> {
        self.command(s, Command::GuideRobot);
        let start = s.robot().pose().position;
        let reference = planner
            .plan_to_disk(start, target, self.sc.guide_reach * 0.5)
            .map_err(|e| format!("guide: {e}"))?
            .ok_or("guide: no path toward the first stroke")?;
        let mut pts = vec![start];
        pts.extend(reference.waypoints);
        pts.push(target);
        let route = Polyline::dedup(pts).map_err(|e| format!("guide: {e}"))?;
        let len = route.length();
        let began = s.sim_time();
        let mut progress = 0.0f64;
        loop {
            if s.sim_time() - began > self.sc.stroke_timeout {
                return Err("guide: timed out".into());
            }
            let robot = s.robot().pose().position;
            if robot.distance(&target) <= self.sc.guide_reach && s.robot().camera().sees(target, &self.occluders) {
                break;
            }
            // closest route position ahead of the current progress
            let mut best = (f64::INFINITY, progress);
            let mut q = progress;
            while q <= (progress + 1.0).min(len) {
                let d = route.point_at(q).distance(&robot);
                if d < best.0 {
                    best = (d, q);
                }
                q += 0.05;
            }
            progress = best.1;
            let lead = self.sc.guide_lead;
            let cam = s.robot().camera();
            // a spot inside the standoff ring would not pull the robot any further
            let standoff = s.config().robot.standoff;
            let pulls = |c: &Point2| c.distance(&robot) > standoff || c.distance(&target) < 1e-9;
            let spot = (0..8)
                .map(|k| route.point_at((progress + lead * (1.0 - 0.1 * k as f64)).min(len)))
                .find(|c| pulls(c) && cam.sees(*c, &self.occluders))
                .unwrap_or_else(|| route.point_at((progress + lead).min(len)));
            self.present(s, spot)?;
        }
        let end = s.robot().pose().position;
        let shortest = planner
            .plan(start, end)
            .map_err(|e| format!("guide: {e}"))?
            .map(|p| p.length)
            .ok_or("guide: robot ended somewhere unreachable")?;
        Ok(shortest)
    }

    fn stroke(&mut self, s: &mut InteractionSession, stroke: &ScriptedStroke) -> Result<(), String> {
        let first = stroke.points[0];
        // move the pointer to the first point with the laser off
        if let Some(prev) = self.pointer {
            self.idle(s, prev.distance(&first) / self.sc.stroke_speed)?;
        }
        let began = s.sim_time();
        let timed_out = |s: &InteractionSession| s.sim_time() - began > self.sc.stroke_timeout;
        let mut detected = 0.0;
        loop {
            if timed_out(s) {
                return Err(format!(
                    "{:?} stroke: timed out aiming at the first point",
                    stroke.purpose
                ));
            }
            if self.present(s, first)? > 0 {
                detected += self.dt;
                if detected >= stroke.dwell - 1e-9 {
                    break;
                }
            }
        }
        let len = stroke.length();
        let mut along = 0.0f64;
        while along < len {
            if timed_out(s) {
                return Err(format!(
                    "{:?} stroke: timed out at {along:.2} m of {len:.2} m",
                    stroke.purpose
                ));
            }
            let spot = stroke.point_at(along);
            if self.present(s, spot)? > 0 {
                along = (along + self.sc.stroke_speed * self.dt).min(len);
            }
        }
        if len > 0.0 {
            while self.present(s, stroke.point_at(len))? == 0 {
                if timed_out(s) {
                    return Err(format!("{:?} stroke: timed out at the last point", stroke.purpose));
                }
            }
        }
        Ok(())
    }
}

/// Replays a scenario's scripted strokes through an interaction session.
pub fn run_scenario(sc: &Scenario, opts: RunOptions) -> Result<RunArtifacts, ScenarioError> {
    let prior = sc.prior()?;
    let ground_truth = sc.ground_truth(&prior)?;
    let config = sc.session_config(opts.mode, opts.seed, opts.noise_scale)?;
    let frame_rate = config.cameras.first().map_or(DEFAULT_FRAME_RATE, |c| c.frame_rate);
    let mut session = InteractionSession::new(config, prior.clone()).map_err(|e| ScenarioError::Invalid {
        field: "robot".into(),
        message: e.to_string(),
    })?;
    let planner = Planner::new(&prior, sc.robot.inflation).map_err(|e| ScenarioError::Invalid {
        field: "robot.inflation".into(),
        message: e.to_string(),
    })?;

    let mut user = ScriptedUser {
        sc,
        dt: 1.0 / frame_rate,
        occluders: sc.occluders(),
        pointer: None,
        actions: Vec::new(),
    };
    let mut guide_path_length = None;
    let outcome: Result<(), String> = (|| {
        if opts.mode == Mode::RobotOnly {
            guide_path_length = Some(user.guide(&mut session, &planner, sc.strokes[0].points[0])?);
        }
        for stroke in &sc.strokes {
            let cmd = match stroke.purpose {
                StrokePurpose::Border => Command::DefineBorder,
                StrokePurpose::Seed => Command::DefineSeed,
            };
            user.command(&mut session, cmd);
            user.stroke(&mut session, stroke)?;
            user.idle(&mut session, sc.confirm_pause)?;
        }
        let events = user.command(&mut session, Command::Save);
        match events.iter().find_map(|e| match &e.body {
            EventBody::Error { message, .. } => Some(message.clone()),
            _ => None,
        }) {
            Some(m) => Err(format!("save failed: {m}")),
            None if session.state() == SessionState::Default && session.posterior().is_some() => Ok(()),
            None => Err("save did not produce a map".into()),
        }
    })();

    let (border_pts, seed_pts, dropped) = session
        .events()
        .iter()
        .find_map(|e| match &e.body {
            EventBody::BorderSaved { diagnostics, .. } => Some((
                diagnostics.input_points,
                diagnostics.seed_points,
                diagnostics.dropped_points,
            )),
            _ => None,
        })
        .unwrap_or((session.border_buffer().len(), session.seed_buffer().len(), 0));
    let posterior = session.posterior().cloned();
    let jsi = match &posterior {
        Some(post) => Some(jsi(&prior, &ground_truth, post)?),
        None => None,
    };
    let report = RunReport {
        scenario: sc.name.clone(),
        mode: opts.mode,
        seed: opts.seed,
        noise_scale: opts.noise_scale,
        success: outcome.is_ok(),
        reason: outcome.err(),
        jsi,
        timing: session.timing(),
        points_collected: PointCounts {
            border: border_pts,
            seed: seed_pts,
        },
        dropped_points: dropped,
        guide_path_length,
        robot_distance: session.robot().odometer(),
        sim_time: session.sim_time(),
    };
    Ok(RunArtifacts {
        report,
        prior,
        ground_truth,
        posterior,
        events: session.events().to_vec(),
        actions: user.actions,
    })
}
