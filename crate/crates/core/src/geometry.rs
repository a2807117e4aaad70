//! Planar and spatial primitives shared by the rest of the crate.
//!
//! All lengths are meters, all angles radians. Angles are kept in the
//! half-open interval (-π, π].

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point set is empty")]
    Empty,
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("consecutive vertices {index} and {} coincide", index + 1)]
    RepeatedVertex { index: usize },
    #[error("polygon is degenerate (zero area)")]
    DegeneratePolygon,
    #[error("rotation is not a proper orthonormal matrix (deviation {0:e})")]
    NotOrthonormal(f64),
}

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        distance(*self, *other)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(&self, other: Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(&self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(&self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(&self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Point at parameter `t` on the segment from `self` to `other`.
    pub fn lerp(&self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

pub fn distance(a: Point2, b: Point2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Arithmetic mean of a nonempty point set.
pub fn centroid(points: &[Point2]) -> Result<Point2, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Ok(Point2::new(sx / n, sy / n))
}

/// Length of the diagonal of the axis-aligned bounding box.
pub fn aabb_diagonal(points: &[Point2]) -> Result<f64, GeometryError> {
    let first = points.first().ok_or(GeometryError::Empty)?;
    let (mut min, mut max) = (*first, *first);
    for p in &points[1..] {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    Ok(distance(min, max))
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Point2,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            theta: normalize_angle(theta),
        }
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform(&self, local: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(
            self.position.x + c * local.x - s * local.y,
            self.position.y + s * local.x + c * local.y,
        )
    }

    /// Inverse of [`Pose2::transform`].
    pub fn inverse_transform(&self, world: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let d = world.sub(self.position);
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// A proper rigid motion in 3D: `p_parent = rotation * p_child + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max()
            .max((rotation.determinant() - 1.0).abs());
        if !deviation.is_finite() || deviation > ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::NotOrthonormal(deviation));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite {
                x: translation.x,
                y: translation.y,
            });
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform whose child axes are given as columns in the parent frame.
    pub fn from_axes(
        x_axis: Vector3<f64>,
        y_axis: Vector3<f64>,
        z_axis: Vector3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_columns(&[x_axis, y_axis, z_axis]), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RawTransform> for RigidTransform3 {
    type Error = GeometryError;

    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        let r = raw.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform3::new(m, Vector3::from(raw.translation))
    }
}

impl From<RigidTransform3> for RawTransform {
    fn from(t: RigidTransform3) -> Self {
        let m = t.rotation;
        RawTransform {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

/// An ordered chain of at least two points with no repeated consecutive vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    vertices: Vec<Point2>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite { x: p.x, y: p.y });
        }
        if let Some(index) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(GeometryError::RepeatedVertex { index });
        }
        Ok(Self { vertices })
    }

    /// Like [`Polyline::new`] but silently drops repeated consecutive vertices.
    pub fn dedup(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        vertices.dedup();
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.vertices[0]
    }

    pub fn last(&self) -> Point2 {
        self.vertices[self.vertices.len() - 1]
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        polyline_length(self)
    }

    /// The chain with the first vertex appended, unless it already ends there.
    pub fn closed(&self) -> Polyline {
        let mut v = self.vertices.clone();
        if self.first() != self.last() {
            v.push(self.first());
        }
        Polyline { vertices: v }
    }

    /// Point at arc length `s` from the first vertex, clamped to the chain.
    pub fn point_at(&self, s: f64) -> Point2 {
        let mut remaining = s.max(0.0);
        for (a, b) in self.segments() {
            let len = distance(a, b);
            if remaining <= len {
                return a.lerp(b, remaining / len);
            }
            remaining -= len;
        }
        self.last()
    }
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeometryError;

    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Polyline::new(v)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.vertices
    }
}

pub fn polyline_length(poly: &Polyline) -> f64 {
    poly.segments().map(|(a, b)| distance(a, b)).sum()
}

/// Signed shoelace area of the implicitly closed ring; positive when counterclockwise.
pub fn signed_area(ring: &[Point2]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let n = ring.len();
    (0..n).map(|i| ring[i].cross(ring[(i + 1) % n])).sum::<f64>() / 2.0
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let ab = b.sub(a);
    let ap = p.sub(a);
    let scale = ab.norm().max(1.0);
    if ab.cross(ap).abs() > 1e-12 * scale * scale {
        return false;
    }
    let t = ap.dot(ab);
    t >= 0.0 && t <= ab.dot(ab)
}

/// Even-odd containment test. The ring is implicitly closed; boundary points count as inside.
pub fn point_in_polygon(p: Point2, poly: &Polyline) -> Result<bool, GeometryError> {
    let mut ring = poly.vertices();
    if ring.len() > 1 && ring[0] == ring[ring.len() - 1] {
        ring = &ring[..ring.len() - 1];
    }
    if signed_area(ring).abs() <= f64::EPSILON {
        return Err(GeometryError::DegeneratePolygon);
    }
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return Ok(true);
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    Ok(inside)
}

/// A straight segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        distance(self.a, self.b)
    }

    /// True when the two segments cross at a single interior point of both.
    /// Touching at an endpoint or overlapping collinearly does not count.
    pub fn crosses(&self, other: &Segment) -> bool {
        let d1 = self.b.sub(self.a);
        let d2 = other.b.sub(other.a);
        let denom = d1.cross(d2);
        if denom.abs() < 1e-15 {
            return false;
        }
        let w = other.a.sub(self.a);
        let t = w.cross(d2) / denom;
        let u = w.cross(d1) / denom;
        const EPS: f64 = 1e-12;
        t > EPS && t < 1.0 - EPS && u > EPS && u < 1.0 - EPS
    }

    /// Distance from `p` to the closest point of the segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        let d = self.b.sub(self.a);
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return distance(p, self.a);
        }
        let t = (p.sub(self.a).dot(d) / len2).clamp(0.0, 1.0);
        distance(p, self.a.lerp(self.b, t))
    }
}
