use super::{MapError, Occupancy, OccupancyGrid};

/// Cells that are occupied in `posterior` but were not occupied in `prior`.
pub fn restriction_mask(prior: &OccupancyGrid, posterior: &OccupancyGrid) -> Result<Vec<bool>, MapError> {
    if !prior.same_frame(posterior) {
        return Err(MapError::Mismatch);
    }
    Ok(prior
        .cells()
        .iter()
        .zip(posterior.cells())
        .map(|(a, b)| *b == Occupancy::Occupied && *a != Occupancy::Occupied)
        .collect())
}

/// Jaccard similarity of the restriction areas that two posteriors add to a shared prior.
/// Two empty restriction areas are considered identical.
pub fn jsi(prior: &OccupancyGrid, ground_truth: &OccupancyGrid, user_defined: &OccupancyGrid) -> Result<f64, MapError> {
    let gt = restriction_mask(prior, ground_truth)?;
    let ud = restriction_mask(prior, user_defined)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in gt.iter().zip(&ud) {
        inter += (*a && *b) as usize;
        union += (*a || *b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
