use super::scenario::{CameraPlacement, CameraSpec, ReachabilityProbe, Scenario, ScriptedStroke, StrokePurpose, Wall};
use crate::extraction::ExtractionParams;
use crate::geometry::{Point2, Polyline, Pose2};
use crate::gridmap::{BorderKind, VirtualBorder};
use crate::interaction::RobotConfig;
use crate::perception::{CameraIntrinsics, NoiseModel};

const WIDTH: f64 = 8.0;
const HEIGHT: f64 = 5.0;
const CEILING: f64 = 2.95;

/// Left jamb of the door into the small room; the opening is 0.70 m wide.
const DOOR_X: f64 = 1.2;
const DOOR_WIDTH: f64 = 0.7;
const ROOM_WALL_Y: f64 = 2.5;
const ROOM_WALL_X: f64 = 3.55;

/// Seconds the scripted user aims at the first vertex / seed before moving on.
const BORDER_DWELL: f64 = 3.0;
const SEED_DWELL: f64 = 3.0;

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn lab_walls() -> Vec<Wall> {
    let half = 0.05;
    vec![
        Wall::new(p(0.0, half), p(WIDTH, half)),
        Wall::new(p(0.0, HEIGHT - half), p(WIDTH, HEIGHT - half)),
        Wall::new(p(half, 0.0), p(half, HEIGHT)),
        Wall::new(p(WIDTH - half, 0.0), p(WIDTH - half, HEIGHT)),
        // small room in the upper left, entered through a door in its lower wall
        Wall::new(p(0.1, ROOM_WALL_Y), p(DOOR_X, ROOM_WALL_Y)),
        Wall::new(p(DOOR_X + DOOR_WIDTH, ROOM_WALL_Y), p(ROOM_WALL_X + half, ROOM_WALL_Y)),
        Wall::new(p(ROOM_WALL_X, ROOM_WALL_Y - half), p(ROOM_WALL_X, HEIGHT - 0.1)),
    ]
}

fn ceiling_camera(id: &str, x: f64, y: f64) -> CameraSpec {
    CameraSpec {
        id: id.into(),
        intrinsics: CameraIntrinsics::centered(1920, 1080, 1371.0),
        placement: CameraPlacement::Nadir {
            x,
            y,
            height: CEILING,
            yaw: 0.0,
        },
        frame_rate: 25.0,
    }
}

fn lab_cameras() -> Vec<CameraSpec> {
    vec![
        ceiling_camera("red", 1.6, 3.2),
        ceiling_camera("green", 2.3, 1.4),
        ceiling_camera("blue", 6.2, 3.8),
    ]
}

fn robot_start() -> Pose2 {
    Pose2::new(7.5, 0.45, std::f64::consts::PI)
}

fn base(name: &str, border: VirtualBorder, strokes: Vec<ScriptedStroke>, probe: ReachabilityProbe) -> Scenario {
    Scenario {
        name: name.into(),
        bounds: [WIDTH, HEIGHT],
        resolution: 0.025,
        walls: lab_walls(),
        prior_map: None,
        cameras: lab_cameras(),
        robot_start: robot_start(),
        robot: RobotConfig::default(),
        ground_truth_border: border,
        strokes,
        stroke_speed: 0.4,
        params: ExtractionParams::default(),
        noise_sigma: NoiseModel::default(),
        switch_latency: 3.0,
        guide_lead: 1.3,
        guide_reach: 1.0,
        stroke_timeout: 300.0,
        confirm_pause: 4.0,
        probe,
    }
}

fn strokes(border: &[Point2], seed: Point2) -> Vec<ScriptedStroke> {
    vec![
        ScriptedStroke {
            purpose: StrokePurpose::Border,
            points: border.to_vec(),
            dwell: BORDER_DWELL,
        },
        ScriptedStroke {
            purpose: StrokePurpose::Seed,
            points: vec![seed],
            dwell: SEED_DWELL,
        },
    ]
}

/// Room exclusion: a 0.70 m line across the door of an 8 m² room.
pub fn room_exclusion() -> Scenario {
    let line = [p(DOOR_X, ROOM_WALL_Y), p(DOOR_X + DOOR_WIDTH, ROOM_WALL_Y)];
    let seed = p(DOOR_X + DOOR_WIDTH / 2.0, 3.3);
    let border = VirtualBorder::new(
        Polyline::new(line.to_vec()).expect("static geometry"),
        seed,
        BorderKind::SeparatingCurve,
    );
    base(
        "room-exclusion",
        border,
        strokes(&line, seed),
        ReachabilityProbe {
            start: robot_start().position,
            goal: p(1.8, 3.8),
        },
    )
}

/// Carpet exclusion: a polygon around a 2.00 m × 1.25 m carpet.
pub fn carpet_exclusion() -> Scenario {
    let (x0, x1, y0, y1) = (2.3, 4.3, 0.55, 1.8);
    let corners = vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)];
    let seed = p((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let border = VirtualBorder::new(
        Polyline::new(corners).expect("static geometry"),
        seed,
        BorderKind::Polygon,
    );
    let loop_stroke = [p(x1, y1), p(x0, y1), p(x0, y0), p(x1, y0), p(x1, y1)];
    base(
        "carpet-exclusion",
        border,
        strokes(&loop_stroke, seed),
        ReachabilityProbe {
            start: robot_start().position,
            goal: seed,
        },
    )
}

/// Spot cleaning: an L-shaped curve fencing off a corner; everything else is restricted.
pub fn spot_cleaning() -> Scenario {
    let curve = [p(5.9, HEIGHT - 0.1), p(5.9, 3.3), p(WIDTH - 0.1, 3.3)];
    let seed = p(5.2, 3.4);
    let border = VirtualBorder::new(
        Polyline::new(curve.to_vec()).expect("static geometry"),
        seed,
        BorderKind::SeparatingCurve,
    );
    base(
        "spot-cleaning",
        border,
        strokes(&curve, seed),
        ReachabilityProbe {
            start: p(6.9, 4.1),
            goal: robot_start().position,
        },
    )
}

/// The three evaluation scenarios, in order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![room_exclusion(), carpet_exclusion(), spot_cleaning()]
}

/// Resolves `builtin:N` (1-based) to a scenario.
pub fn builtin(name: &str) -> Option<Scenario> {
    let idx: usize = name.strip_prefix("builtin:")?.parse().ok()?;
    builtin_scenarios().into_iter().nth(idx.checked_sub(1)?)
}
