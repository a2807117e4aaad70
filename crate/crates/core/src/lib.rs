//! Virtual border workbench: extract user-drawn borders from laser-spot detections,
//! fold them into occupancy grids, and simulate the interaction that produces them.

pub mod extraction;
pub mod geometry;
pub mod gridmap;
pub mod harness;
pub mod interaction;
pub mod perception;
pub mod planner;

pub use geometry::{Point2, Polyline, Pose2, RigidTransform3, Segment};
pub use gridmap::{BorderKind, Cell, MapError, Occupancy, OccupancyGrid, VirtualBorder};
