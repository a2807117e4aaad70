use super::cluster::RadiusIndex;
use super::ExtractionError;
use crate::geometry::{centroid, Point2, Polyline};

/// Thinning output with the input indices behind every output point.
#[derive(Debug, Clone, PartialEq)]
pub struct Thinned {
    pub points: Vec<Point2>,
    /// For each output point, the input indices it stands for. Merged groups come first
    /// (in creation order), followed by single-index survivors in input order.
    pub groups: Vec<Vec<usize>>,
    pub merged: usize,
}

/// Replaces spatially redundant points by group means, see [`thin_with_groups`].
pub fn thin(points: &[Point2], thin_dist: f64) -> Vec<Point2> {
    thin_with_groups(points, thin_dist).points
}

/// Repeatedly takes the point with the most live neighbors within `thin_dist`
/// (lowest index on ties), replaces it and those neighbors by their mean, and stops
/// once no live point has a neighbor. Means are never re-processed.
pub fn thin_with_groups(points: &[Point2], thin_dist: f64) -> Thinned {
    let n = points.len();
    let index = RadiusIndex::new(points, thin_dist);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| index.neighbors(i)).collect();
    let mut count: Vec<usize> = neighbors.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];

    let mut out = Vec::new();
    let mut groups = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alive[i] && count[i] > 0 && best.is_none_or(|b| count[i] > count[b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        let mut group = vec![p];
        group.extend(neighbors[p].iter().copied().filter(|&j| alive[j]));
        for &g in &group {
            alive[g] = false;
        }
        for &g in &group {
            for &r in &neighbors[g] {
                if alive[r] {
                    count[r] -= 1;
                }
            }
        }
        let members: Vec<Point2> = group.iter().map(|&i| points[i]).collect();
        out.push(centroid(&members).expect("group is nonempty"));
        group.sort_unstable();
        groups.push(group);
    }
    let merged = groups.len();
    for i in (0..n).filter(|&i| alive[i]) {
        out.push(points[i]);
        groups.push(vec![i]);
    }
    Thinned {
        points: out,
        groups,
        merged,
    }
}

/// Chain built from a thinned point set plus the number of points left unreached.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedChain {
    pub chain: Polyline,
    /// Input indices of the chain vertices, in chain order.
    pub order: Vec<usize>,
    pub dropped: usize,
}

fn grow(points: &[Point2], marked: &mut [bool], start: usize, poly_dist: f64, out: &mut Vec<usize>) {
    let mut current = start;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (j, q) in points.iter().enumerate() {
            if marked[j] {
                continue;
            }
            let d = points[current].distance(q);
            if d <= poly_dist && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let Some((next, _)) = best else { return };
        marked[next] = true;
        out.push(next);
        current = next;
    }
}

/// Orders points into a chain by greedy nearest-neighbor growth from the first point,
/// first in one direction and then, from the same start, in the other.
pub fn generate_polygon(points: &[Point2], poly_dist: f64) -> Result<GeneratedChain, ExtractionError> {
    if points.is_empty() {
        return Err(ExtractionError::TooSparse { vertices: 0 });
    }
    let mut marked = vec![false; points.len()];
    marked[0] = true;
    let mut dir1 = vec![0];
    grow(points, &mut marked, 0, poly_dist, &mut dir1);
    let mut dir2 = Vec::new();
    grow(points, &mut marked, 0, poly_dist, &mut dir2);

    dir1.reverse();
    dir1.extend(dir2);
    let order = dir1;
    if order.len() < 2 {
        return Err(ExtractionError::TooSparse { vertices: order.len() });
    }
    let dropped = marked.iter().filter(|m| !**m).count();
    let chain = Polyline::dedup(order.iter().map(|&i| points[i]).collect())
        .map_err(|_| ExtractionError::TooSparse { vertices: 1 })?;
    Ok(GeneratedChain { chain, order, dropped })
}
