//! Scenario definitions, scripted replays of the three evaluation scenarios, and
//! aggregate reporting.

mod batch;
mod builtin;
mod run;
mod scenario;

pub use batch::{batch_report, median, BatchResult, BatchRow};
pub use builtin::{builtin, builtin_scenarios, carpet_exclusion, room_exclusion, spot_cleaning};
pub use run::{run_scenario, PointCounts, RunArtifacts, RunOptions, RunReport, UserAction};
pub use scenario::{
    CameraPlacement, CameraSpec, ReachabilityProbe, Scenario, ScenarioError, ScriptedStroke, StrokePurpose, Wall,
};
