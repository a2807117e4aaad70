use serde::{Deserialize, Serialize};

use super::{MapError, Occupancy, OccupancyGrid};
use crate::geometry::{distance, Point2, Polyline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BorderKind {
    /// Closed chain; the last vertex connects back to the first.
    Polygon,
    /// Open chain whose end segments are extended to the nearest physical obstacle.
    SeparatingCurve,
}

/// A user-defined restriction: a border chain, a seed marking the side to restrict,
/// and the occupancy written into the restricted area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualBorder {
    pub chain: Polyline,
    pub seed: Point2,
    #[serde(default = "full_occupancy")]
    pub occupancy: f64,
    pub kind: BorderKind,
}

fn full_occupancy() -> f64 {
    1.0
}

impl VirtualBorder {
    pub fn new(chain: Polyline, seed: Point2, kind: BorderKind) -> Self {
        Self {
            chain,
            seed,
            occupancy: 1.0,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationOptions {
    /// Upper bound on the number of flood-filled cells; `None` allows the whole map.
    pub fill_budget: Option<usize>,
}

fn march_to_obstacle(grid: &OccupancyGrid, from: Point2, dir: Point2) -> Point2 {
    if grid.occupancy_at(from) != Some(Occupancy::Free) {
        return from;
    }
    let step = grid.resolution() / 2.0;
    let (w, h) = grid.extent();
    let max_steps = (2.0 * (w + h) / step).ceil() as usize + 2;
    let mut last = from;
    for k in 1..=max_steps {
        let p = from.add(dir.scale(step * k as f64));
        match grid.occupancy_at(p) {
            Some(Occupancy::Free) => last = p,
            _ => break,
        }
    }
    last
}

/// Prepends and appends vertices so that the first and last segments of `chain` reach
/// the closest non-free cell (or the map edge) along their own direction.
pub fn extend_to_physical_borders(grid: &OccupancyGrid, chain: &Polyline) -> Result<Polyline, MapError> {
    let v = chain.vertices();
    let n = v.len();
    let head_dir = v[0].sub(v[1]);
    let tail_dir = v[n - 1].sub(v[n - 2]);
    if head_dir.norm() == 0.0 || tail_dir.norm() == 0.0 {
        return Err(MapError::ZeroLengthEndSegment);
    }
    for p in v {
        grid.world_to_cell(*p)?;
    }
    let head = march_to_obstacle(grid, v[0], head_dir.scale(1.0 / head_dir.norm()));
    let tail = march_to_obstacle(grid, v[n - 1], tail_dir.scale(1.0 / tail_dir.norm()));

    let mut out = Vec::with_capacity(n + 2);
    if distance(head, v[0]) > 1e-12 {
        out.push(head);
    }
    out.extend_from_slice(v);
    if distance(tail, v[n - 1]) > 1e-12 {
        out.push(tail);
    }
    Ok(Polyline::dedup(out)?)
}

pub fn integrate_border(prior: &OccupancyGrid, border: &VirtualBorder) -> Result<OccupancyGrid, MapError> {
    integrate_border_with(prior, border, IntegrationOptions::default())
}

/// Writes the border line and the seed-selected region into a copy of `prior`.
pub fn integrate_border_with(
    prior: &OccupancyGrid,
    border: &VirtualBorder,
    options: IntegrationOptions,
) -> Result<OccupancyGrid, MapError> {
    let chain = match border.kind {
        BorderKind::Polygon => border.chain.closed(),
        BorderKind::SeparatingCurve => extend_to_physical_borders(prior, &border.chain)?,
    };
    let line = prior.rasterize_chain(&chain)?;
    let seed = prior.world_to_cell(border.seed)?;
    if line.contains(&seed) {
        return Err(MapError::SeedOnBorder);
    }
    match prior.get(seed) {
        Occupancy::Free => {}
        other => return Err(MapError::SeedNotFree(other)),
    }

    let mut posterior = prior.clone();
    for cell in &line {
        posterior.set(*cell, Occupancy::Occupied);
    }
    let filled = posterior
        .flood_fill_free(seed, options.fill_budget)
        .ok_or(MapError::FillBudgetExceeded {
            budget: options.fill_budget.unwrap_or(usize::MAX),
        })?;
    for cell in filled {
        posterior.set(cell, Occupancy::Occupied);
    }
    Ok(posterior)
}
