//! 8-connected A* over an inflated occupancy grid.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::gridmap::{Cell, Occupancy, OccupancyGrid};

/// Clearance added around every non-free cell, roughly a small vacuum robot's radius.
pub const DEFAULT_INFLATION: f64 = 0.18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{which} ({x:.3}, {y:.3}) is outside the map")]
    OutOfBounds { which: &'static str, x: f64, y: f64 },
    #[error("start lies inside an inflated obstacle")]
    StartBlocked,
    #[error("goal lies inside an inflated obstacle")]
    GoalBlocked,
    #[error("inflation must be finite and non-negative, got {0}")]
    InvalidInflation(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Cell centers from start to goal.
    pub waypoints: Vec<Point2>,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // min-heap on f, then lowest index
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// A grid with obstacles inflated once, reusable for many queries.
#[derive(Debug, Clone)]
pub struct Planner {
    grid: OccupancyGrid,
    blocked: Vec<bool>,
    inflation: f64,
}

impl Planner {
    pub fn new(grid: &OccupancyGrid, inflation: f64) -> Result<Self, PlanError> {
        if !(inflation.is_finite() && inflation >= 0.0) {
            return Err(PlanError::InvalidInflation(inflation));
        }
        let (w, h) = (grid.width() as i64, grid.height() as i64);
        let r = inflation / grid.resolution();
        let reach = r.floor() as i64;
        let kernel: Vec<(i64, i64)> = (-reach..=reach)
            .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r * r + 1e-9)
            .collect();
        let mut blocked = vec![false; grid.len()];
        for (i, occ) in grid.cells().iter().enumerate() {
            if *occ == Occupancy::Free {
                continue;
            }
            let c = grid.cell_at(i);
            for &(dx, dy) in &kernel {
                let (x, y) = (c.col as i64 + dx, c.row as i64 + dy);
                if x >= 0 && y >= 0 && x < w && y < h {
                    blocked[(y * w + x) as usize] = true;
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            blocked,
            inflation,
        })
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn is_traversable(&self, cell: Cell) -> bool {
        !self.blocked[self.grid.index(cell)]
    }

    pub fn is_traversable_at(&self, p: Point2) -> bool {
        self.grid.try_world_to_cell(p).is_some_and(|c| self.is_traversable(c))
    }

    fn locate(&self, which: &'static str, p: Point2) -> Result<Cell, PlanError> {
        self.grid
            .try_world_to_cell(p)
            .ok_or(PlanError::OutOfBounds { which, x: p.x, y: p.y })
    }

    /// Traversable 8-neighbors with step cost in cells. Diagonal moves need both
    /// orthogonal cells traversable so paths never slip between diagonal obstacles.
    fn successors(&self, index: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let w = self.grid.width() as i64;
        let h = self.grid.height() as i64;
        let (x, y) = ((index as i64) % w, (index as i64) / w);
        let free = |cx: i64, cy: i64| cx >= 0 && cy >= 0 && cx < w && cy < h && !self.blocked[(cy * w + cx) as usize];
        for (dx, dy) in STEPS {
            let (nx, ny) = (x + dx, y + dy);
            if !free(nx, ny) {
                continue;
            }
            if dx != 0 && dy != 0 {
                if !free(x + dx, y) || !free(x, y + dy) {
                    continue;
                }
                out.push(((ny * w + nx) as usize, std::f64::consts::SQRT_2));
            } else {
                out.push(((ny * w + nx) as usize, 1.0));
            }
        }
    }

    fn octile(&self, a: usize, b: usize) -> f64 {
        let w = self.grid.width();
        let dx = (a % w).abs_diff(b % w) as f64;
        let dy = (a / w).abs_diff(b / w) as f64;
        dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
    }

    fn search(&self, start: usize, is_goal: impl Fn(usize) -> bool, heuristic: impl Fn(usize) -> f64) -> Option<Path> {
        let n = self.grid.len();
        let mut g = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        g[start] = 0.0;
        open.push(Open {
            f: heuristic(start),
            index: start,
        });
        let mut succ = Vec::with_capacity(8);
        while let Some(Open { index, .. }) = open.pop() {
            if closed[index] {
                continue;
            }
            closed[index] = true;
            if is_goal(index) {
                return Some(self.reconstruct(&parent, index, g[index]));
            }
            self.successors(index, &mut succ);
            for &(next, cost) in &succ {
                let cand = g[index] + cost;
                if !closed[next] && cand < g[next] - 1e-12 {
                    g[next] = cand;
                    parent[next] = index;
                    open.push(Open {
                        f: cand + heuristic(next),
                        index: next,
                    });
                }
            }
        }
        None
    }

    fn reconstruct(&self, parent: &[usize], goal: usize, cost: f64) -> Path {
        let mut chain = vec![goal];
        while parent[*chain.last().unwrap()] != usize::MAX {
            chain.push(parent[*chain.last().unwrap()]);
        }
        chain.reverse();
        Path {
            waypoints: chain
                .into_iter()
                .map(|i| self.grid.cell_to_world(self.grid.cell_at(i)))
                .collect(),
            length: cost * self.grid.resolution(),
        }
    }

    /// Shortest path between the cells containing `start` and `goal`; `Ok(None)` when
    /// no path exists.
    pub fn plan(&self, start: Point2, goal: Point2) -> Result<Option<Path>, PlanError> {
        let s = self.locate("start", start)?;
        let t = self.locate("goal", goal)?;
        if !self.is_traversable(s) {
            return Err(PlanError::StartBlocked);
        }
        if !self.is_traversable(t) {
            return Err(PlanError::GoalBlocked);
        }
        let (si, ti) = (self.grid.index(s), self.grid.index(t));
        Ok(self.search(si, |i| i == ti, |i| self.octile(i, ti)))
    }

    /// Shortest path to any cell whose center is within `radius` of `center`.
    pub fn plan_to_disk(&self, start: Point2, center: Point2, radius: f64) -> Result<Option<Path>, PlanError> {
        self.plan_to_ring(start, center, 0.0, radius)
    }

    /// Shortest path to any cell whose center lies between `inner` and `outer` from `center`.
    pub fn plan_to_ring(
        &self,
        start: Point2,
        center: Point2,
        inner: f64,
        outer: f64,
    ) -> Result<Option<Path>, PlanError> {
        self.plan_to_ring_where(start, center, inner, outer, |_| true)
    }

    /// Like [`Planner::plan_to_ring`], but a ring cell only counts as a goal when `accept` holds
    /// for its center.
    pub fn plan_to_ring_where(
        &self,
        start: Point2,
        center: Point2,
        inner: f64,
        outer: f64,
        accept: impl Fn(Point2) -> bool,
    ) -> Result<Option<Path>, PlanError> {
        let s = self.locate("start", start)?;
        if !self.is_traversable(s) {
            return Err(PlanError::StartBlocked);
        }
        let res = self.grid.resolution();
        let grid = &self.grid;
        let dist = |i: usize| grid.cell_to_world(grid.cell_at(i)).distance(&center);
        let within = |i: usize| (inner..=outer).contains(&dist(i)) && accept(grid.cell_to_world(grid.cell_at(i)));
        // straight-line distance to the disk never overestimates the remaining cost
        let h = |i: usize| ((dist(i) - outer) / res).max(0.0);
        Ok(self.search(self.grid.index(s), within, h))
    }

    /// Traversable cell reachable from `start` whose center is closest to `target`.
    pub fn nearest_reachable(&self, start: Point2, target: Point2) -> Result<Option<Point2>, PlanError> {
        let s = self.locate("start", start)?;
        if !self.is_traversable(s) {
            return Err(PlanError::StartBlocked);
        }
        let mut seen = vec![false; self.grid.len()];
        let si = self.grid.index(s);
        seen[si] = true;
        let mut queue = VecDeque::from([si]);
        let mut best: Option<(f64, usize)> = None;
        let mut succ = Vec::with_capacity(8);
        while let Some(i) = queue.pop_front() {
            let d = self.grid.cell_to_world(self.grid.cell_at(i)).distance(&target);
            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                best = Some((d, i));
            }
            self.successors(i, &mut succ);
            for &(j, _) in &succ {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        Ok(best.map(|(_, i)| self.grid.cell_to_world(self.grid.cell_at(i))))
    }

    /// Traversable cell center closest to `p`, anywhere on the map.
    pub fn nearest_traversable(&self, p: Point2) -> Option<Point2> {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..self.grid.len()).filter(|&i| !self.blocked[i]) {
            let d = self.grid.cell_to_world(self.grid.cell_at(i)).distance(&p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| self.grid.cell_to_world(self.grid.cell_at(i)))
    }
}

/// One-shot planning on a grid; see [`Planner::plan`].
pub fn plan(grid: &OccupancyGrid, start: Point2, goal: Point2, inflation: f64) -> Result<Option<Path>, PlanError> {
    Planner::new(grid, inflation)?.plan(start, goal)
}

/// Whether a path exists. A goal buried in an inflated obstacle counts as unreachable
/// rather than an error, since that is exactly what an integrated border produces.
pub fn reachable(grid: &OccupancyGrid, start: Point2, goal: Point2, inflation: f64) -> Result<bool, PlanError> {
    match plan(grid, start, goal, inflation) {
        Ok(p) => Ok(p.is_some()),
        Err(PlanError::GoalBlocked) => Ok(false),
        Err(e) => Err(e),
    }
}
