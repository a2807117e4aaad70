use serde::{Deserialize, Serialize};

use super::{Command, SessionState};
use crate::extraction::ExtractionDiagnostics;
use crate::geometry::Point2;
use crate::gridmap::BorderKind;

/// One entry of a session's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Gapless per-session sequence number starting at 0.
    pub seq: u64,
    /// Simulated seconds since session start.
    pub sim_time: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Which buffer received detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferKind {
    Border,
    Seed,
    /// Guide state: detections steer the robot but are not stored.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    StateChanged {
        from: SessionState,
        to: SessionState,
        command: Command,
    },
    SpotDetected {
        points: Vec<Point2>,
        /// Indices of the cameras that saw the spot (stationary first, robot last).
        sources: Vec<usize>,
        buffer: BufferKind,
        buffer_len: usize,
    },
    RobotDispatched {
        target: Point2,
        waypoints: Vec<Point2>,
        path_length: f64,
    },
    BorderSaved {
        kind: BorderKind,
        vertices: Vec<Point2>,
        seed: Point2,
        map_version: u64,
        diagnostics: ExtractionDiagnostics,
    },
    Cancelled {
        discarded_border_points: usize,
        discarded_seed_points: usize,
    },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::StateChanged { .. } => "StateChanged",
            EventBody::SpotDetected { .. } => "SpotDetected",
            EventBody::RobotDispatched { .. } => "RobotDispatched",
            EventBody::BorderSaved { .. } => "BorderSaved",
            EventBody::Cancelled { .. } => "Cancelled",
            EventBody::Error { .. } => "Error",
        }
    }
}

/// Writes events as one JSON object per line.
pub fn to_json_lines(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events always serialize"));
        out.push('\n');
    }
    out
}

pub fn from_json_lines(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
