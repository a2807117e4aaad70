//! Shared fixtures for benchmarks.

use borderforge_core::geometry::{Point2, Polyline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `n` detections along a closed 2 m square outline with `sigma` jitter, the kind of
/// buffer a border stroke leaves behind.
pub fn square_stroke(n: usize, sigma: f64, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outline = Polyline::new(
        [(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0), (1.0, 1.0)]
            .map(|(x, y)| Point2::new(x, y))
            .to_vec(),
    )
    .expect("fixed outline");
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    (0..n)
        .map(|i| {
            let p = outline.point_at(outline.length() * i as f64 / n as f64);
            Point2::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))
        })
        .collect()
}

/// A stroke buffer with `outliers` uniform false detections mixed in.
pub fn with_outliers(mut points: Vec<Point2>, outliers: usize, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..outliers {
        let at = rng.random_range(0..=points.len());
        points.insert(at, Point2::new(rng.random_range(0.0..8.0), rng.random_range(0.0..5.0)));
    }
    points
}
