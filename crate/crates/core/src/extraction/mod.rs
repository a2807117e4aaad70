//! Turns a noisy, redundant cloud of laser-spot detections into a virtual border:
//! density clustering, thinning, chain ordering, and seed estimation.

mod chain;
mod cluster;

pub use chain::{generate_polygon, thin, thin_with_groups, GeneratedChain, Thinned};
pub use cluster::{dbscan, select_border_cluster, Cluster, DbscanResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, Point2, Polyline};
use crate::gridmap::{BorderKind, VirtualBorder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
    #[error("no border found: no cluster satisfies the size and expansion limits")]
    NoBorderFound,
    #[error("border too sparse: chain has {vertices} vertex(es)")]
    TooSparse { vertices: usize },
    #[error("no stable seed: every seed detection was classified as noise")]
    NoStableSeed,
}

impl ExtractionError {
    /// Name of the pipeline stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            ExtractionError::InvalidParams(_) => "parameters",
            ExtractionError::NoBorderFound => "clustering",
            ExtractionError::TooSparse { .. } => "polygon_generation",
            ExtractionError::NoStableSeed => "seed",
        }
    }
}

/// Tuning knobs for every extraction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionParams {
    /// Neighborhood radius for clustering.
    pub eps: f64,
    /// Minimum number of other points within `eps` for a core point.
    pub min_pts: usize,
    /// Lower bound on the cluster bounding-box diagonal (exclusive).
    pub min_exp: f64,
    /// Upper bound on the cluster bounding-box diagonal (exclusive); may be infinite.
    #[serde(with = "maybe_infinite")]
    pub max_exp: f64,
    pub min_size: usize,
    pub thin_dist: f64,
    pub poly_dist: f64,
    /// Chains whose endpoints are at most this far apart are treated as closed.
    pub closure_dist: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            min_pts: 1,
            min_exp: 0.3,
            max_exp: f64::INFINITY,
            min_size: 10,
            thin_dist: 0.1,
            poly_dist: 0.5,
            closure_dist: 0.5,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        let positive = [
            ("eps", self.eps),
            ("min_exp", self.min_exp),
            ("max_exp", self.max_exp),
            ("thin_dist", self.thin_dist),
            ("poly_dist", self.poly_dist),
            ("closure_dist", self.closure_dist),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(ExtractionError::InvalidParams(format!("{name} must be > 0")));
            }
        }
        if self.min_pts < 1 {
            return Err(ExtractionError::InvalidParams("min_pts must be >= 1".into()));
        }
        if self.min_exp >= self.max_exp {
            return Err(ExtractionError::InvalidParams("min_exp must be < max_exp".into()));
        }
        Ok(())
    }
}

/// Accepts either a number or the strings "inf"/"infinity"; writes infinity as "inf".
mod maybe_infinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(de::Error::custom(format!(
                    "expected a number or \"inf\", got {other:?}"
                ))),
            },
        }
    }
}

/// Per-stage counts from one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub input_points: usize,
    pub clusters: usize,
    pub noise_points: usize,
    pub selected_cluster_size: usize,
    pub thinned_points: usize,
    pub chain_vertices: usize,
    /// Thinned points the chain growth never reached.
    pub dropped_points: usize,
    pub seed_points: usize,
}

/// Centroid of the largest cluster among seed detections. Size limits do not apply.
pub fn extract_seed(points: &[Point2], params: &ExtractionParams) -> Result<Point2, ExtractionError> {
    let r = dbscan(points, params.eps, params.min_pts);
    let mut best: Option<&Cluster> = None;
    for c in &r.clusters {
        if best.is_none_or(|b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    best.and_then(|c| centroid(&c.points).ok())
        .ok_or(ExtractionError::NoStableSeed)
}

/// Runs the full pipeline on the border and seed detection buffers.
pub fn extract_border(
    border_pts: &[Point2],
    seed_pts: &[Point2],
    params: &ExtractionParams,
) -> Result<(VirtualBorder, ExtractionDiagnostics), ExtractionError> {
    let (chain, kind, mut diag) = extract_chain(border_pts, params)?;
    diag.seed_points = seed_pts.len();
    let seed = extract_seed(seed_pts, params)?;
    Ok((VirtualBorder::new(chain, seed, kind), diag))
}

/// Like [`extract_border`], for a seed location that is already known, e.g. given
/// directly instead of recorded with the laser.
pub fn extract_border_at(
    border_pts: &[Point2],
    seed: Point2,
    params: &ExtractionParams,
) -> Result<(VirtualBorder, ExtractionDiagnostics), ExtractionError> {
    let (chain, kind, diag) = extract_chain(border_pts, params)?;
    Ok((VirtualBorder::new(chain, seed, kind), diag))
}

fn extract_chain(
    border_pts: &[Point2],
    params: &ExtractionParams,
) -> Result<(Polyline, BorderKind, ExtractionDiagnostics), ExtractionError> {
    params.validate()?;
    let mut diag = ExtractionDiagnostics {
        input_points: border_pts.len(),
        ..Default::default()
    };

    let clustered = dbscan(border_pts, params.eps, params.min_pts);
    diag.clusters = clustered.clusters.len();
    diag.noise_points = clustered.noise.len();
    let selected = select_border_cluster(&clustered.clusters, params).ok_or(ExtractionError::NoBorderFound)?;
    let cluster = &clustered.clusters[selected];
    diag.selected_cluster_size = cluster.len();

    let thinned = thin(&cluster.points, params.thin_dist);
    diag.thinned_points = thinned.len();

    let generated = generate_polygon(&thinned, params.poly_dist)?;
    diag.chain_vertices = generated.chain.len();
    diag.dropped_points = generated.dropped;

    let closed =
        generated.chain.len() >= 3 && generated.chain.first().distance(&generated.chain.last()) <= params.closure_dist;
    let kind = if closed {
        BorderKind::Polygon
    } else {
        BorderKind::SeparatingCurve
    };
    Ok((generated.chain, kind, diag))
}
