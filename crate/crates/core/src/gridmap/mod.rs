//! Trinary occupancy grid maps and the operations that write virtual borders into them.

mod integrate;
mod io;
mod metrics;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point2, Polyline, Pose2};

pub use integrate::{
    extend_to_physical_borders, integrate_border, integrate_border_with, BorderKind, IntegrationOptions, VirtualBorder,
};
pub use io::{decode_pgm, encode_pgm, load_map, parse_map_yaml, save_map, MapMetadata};
pub use metrics::{jsi, restriction_mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point ({x:.4}, {y:.4}) lies outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids differ in size, resolution or origin")]
    Mismatch,
    #[error("seed lies on the border line")]
    SeedOnBorder,
    #[error("seed lies in a {0:?} cell")]
    SeedNotFree(Occupancy),
    #[error("flood fill exceeded the budget of {budget} cells")]
    FillBudgetExceeded { budget: usize },
    #[error("border chain has a zero-length end segment")]
    ZeroLengthEndSegment,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed map data at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("map io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Occupied,
    Unknown,
}

/// Column/row address of a grid cell; (0, 0) sits at the map origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2, fill: Occupancy) -> Result<Self, MapError> {
        Self::from_cells(width, height, resolution, origin, vec![fill; width * height])
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2,
        cells: Vec<Occupancy>,
    ) -> Result<Self, MapError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::InvalidGrid(format!("resolution {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(MapError::InvalidGrid(format!("size {width}x{height}")));
        }
        if cells.len() != width * height {
            return Err(MapError::InvalidGrid(format!(
                "{} cells for {width}x{height}",
                cells.len()
            )));
        }
        if !origin.position.is_finite() {
            return Err(MapError::InvalidGrid("non-finite origin".into()));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2 {
        self.origin
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains_cell(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn get(&self, cell: Cell) -> Occupancy {
        self.cells[self.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, value: Occupancy) {
        let i = self.index(cell);
        self.cells[i] = value;
    }

    pub fn same_frame(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    pub fn count(&self, value: Occupancy) -> usize {
        self.cells.iter().filter(|c| **c == value).count()
    }

    /// Continuous grid coordinates (in cells) of a world point; no bounds check.
    pub fn world_to_grid(&self, p: Point2) -> (f64, f64) {
        let local = self.origin.inverse_transform(p);
        (local.x / self.resolution, local.y / self.resolution)
    }

    pub fn world_to_cell(&self, p: Point2) -> Result<Cell, MapError> {
        self.try_world_to_cell(p)
            .ok_or(MapError::OutOfBounds { x: p.x, y: p.y })
    }

    pub fn try_world_to_cell(&self, p: Point2) -> Option<Cell> {
        if !p.is_finite() {
            return None;
        }
        let (gx, gy) = self.world_to_grid(p);
        let (col, row) = (gx.floor(), gy.floor());
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(Cell::new(col as usize, row as usize))
    }

    /// Nearest point of the map area to `p` (itself when inside), kept half a cell off the edge.
    pub fn clamp_to_map(&self, p: Point2) -> Point2 {
        let (gx, gy) = self.world_to_grid(p);
        let gx = gx.clamp(0.5, self.width as f64 - 0.5);
        let gy = gy.clamp(0.5, self.height as f64 - 0.5);
        self.origin
            .transform(Point2::new(gx * self.resolution, gy * self.resolution))
    }

    /// World position of the cell center.
    pub fn cell_to_world(&self, cell: Cell) -> Point2 {
        self.origin.transform(Point2::new(
            (cell.col as f64 + 0.5) * self.resolution,
            (cell.row as f64 + 0.5) * self.resolution,
        ))
    }

    pub fn occupancy_at(&self, p: Point2) -> Option<Occupancy> {
        self.try_world_to_cell(p).map(|c| self.get(c))
    }

    /// Map extent in world units along the grid axes.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const D: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        D.iter().filter_map(move |(dc, dr)| {
            let (c, r) = (cell.col as i64 + dc, cell.row as i64 + dr);
            self.contains_cell(c, r).then(|| Cell::new(c as usize, r as usize))
        })
    }

    /// Cells crossed by the straight segment between two world points, in travel order.
    fn traverse_segment(&self, a: Point2, b: Point2) -> Result<Vec<Cell>, MapError> {
        let start = self.world_to_cell(a)?;
        let end = self.world_to_cell(b)?;
        let (ax, ay) = self.world_to_grid(a);
        let (bx, by) = self.world_to_grid(b);
        let (dx, dy) = (bx - ax, by - ay);

        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
        let mut col = start.col as i64;
        let mut row = start.row as i64;
        let mut t_max_x = if dx > 0.0 {
            ((col + 1) as f64 - ax) / dx
        } else if dx < 0.0 {
            (col as f64 - ax) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            ((row + 1) as f64 - ay) / dy
        } else if dy < 0.0 {
            (row as f64 - ay) / dy
        } else {
            f64::INFINITY
        };

        let mut out = vec![start];
        let budget = self.width + self.height + 4;
        while (col, row) != (end.col as i64, end.row as i64) && out.len() <= budget * 2 {
            const TIE: f64 = 1e-12;
            if t_max_x.min(t_max_y) > 1.0 + 1e-9 {
                break;
            }
            if (t_max_x - t_max_y).abs() <= TIE {
                col += step_x;
                row += step_y;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                col += step_x;
                t_max_x += t_delta_x;
            } else {
                row += step_y;
                t_max_y += t_delta_y;
            }
            if !self.contains_cell(col, row) {
                break;
            }
            out.push(Cell::new(col as usize, row as usize));
        }
        if out.last() != Some(&end) {
            out.push(end);
        }
        Ok(out)
    }

    /// Rasterizes every segment of the chain into a connected, duplicate-free cell list.
    pub fn rasterize_chain(&self, chain: &Polyline) -> Result<Vec<Cell>, MapError> {
        for v in chain.vertices() {
            self.world_to_cell(*v)?;
        }
        let mut seen = vec![false; self.cells.len()];
        let mut out = Vec::new();
        for (a, b) in chain.segments() {
            for cell in self.traverse_segment(a, b)? {
                let i = self.index(cell);
                if !seen[i] {
                    seen[i] = true;
                    out.push(cell);
                }
            }
        }
        Ok(out)
    }

    /// Cells reachable from `seed` through 4-neighbors whose value is `Free`.
    /// Returns `None` when more than `budget` cells would be filled.
    pub(crate) fn flood_fill_free(&self, seed: Cell, budget: Option<usize>) -> Option<Vec<Cell>> {
        let mut visited = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([seed]);
        visited[self.index(seed)] = true;
        let mut filled = Vec::new();
        while let Some(cell) = queue.pop_front() {
            filled.push(cell);
            if budget.is_some_and(|b| filled.len() > b) {
                return None;
            }
            for n in self.neighbors4(cell) {
                let i = self.index(n);
                if !visited[i] && self.cells[i] == Occupancy::Free {
                    visited[i] = true;
                    queue.push_back(n);
                }
            }
        }
        Some(filled)
    }

    /// Labels 4-connected components of free cells; returns labels (`usize::MAX` for non-free)
    /// and the component count.
    pub fn free_components(&self) -> (Vec<usize>, usize) {
        let mut labels = vec![usize::MAX; self.cells.len()];
        let mut count = 0;
        for i in 0..self.cells.len() {
            if self.cells[i] != Occupancy::Free || labels[i] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([self.cell_at(i)]);
            labels[i] = count;
            while let Some(cell) = queue.pop_front() {
                for n in self.neighbors4(cell) {
                    let j = self.index(n);
                    if labels[j] == usize::MAX && self.cells[j] == Occupancy::Free {
                        labels[j] = count;
                        queue.push_back(n);
                    }
                }
            }
            count += 1;
        }
        (labels, count)
    }
}
