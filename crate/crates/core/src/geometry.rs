//! Oriented grasp rectangles and the exact planar arithmetic around them.
//!
//! Coordinates are image pixels with the origin at the top-left corner and
//! `y` growing downward. A rectangle's angle is in degrees; its `w` extent
//! runs along the direction `(cos θ, sin θ)` and `h` runs perpendicular to it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative tolerance used when checking that a quad is a rectangle.
pub const DEFAULT_RECT_TOL: f64 = 0.02;

/// Intersection polygons smaller than this are treated as empty.
const SLIVER_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rectangle ({x}, {y}, {w}, {h}, {theta}): extents must be positive and all fields finite")]
    InvalidRect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        theta: f64,
    },
    #[error("invalid box [{x_min}, {y_min}, {x_max}, {y_max}]: min must be strictly below max")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("degenerate quadrilateral (zero area or non-finite vertex)")]
    DegenerateQuad,
    #[error("quadrilateral is not a rectangle: {0}")]
    NotARectangle(String),
}

/// Maps any finite angle in degrees into `(-90, 90]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(180.0);
    if r > 90.0 {
        r - 180.0
    } else {
        r
    }
}

/// Smallest absolute difference between two grasp angles, modulo 180 degrees.
///
/// The result is in `[0, 90]`.
pub fn angle_distance(theta_a: f64, theta_b: f64) -> f64 {
    let (lo, hi) = if theta_a <= theta_b { (theta_a, theta_b) } else { (theta_b, theta_a) };
    let d = (hi - lo) % 180.0;
    d.min(180.0 - d)
}

/// A 5-dimensional grasp rectangle `(x, y, w, h, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct OrientedRect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl OrientedRect {
    /// Builds a rectangle, normalizing `theta` into `(-90, 90]`.
    pub fn new(x: f64, y: f64, w: f64, h: f64, theta: f64) -> Result<Self, GeometryError> {
        let finite = [x, y, w, h, theta].iter().all(|v| v.is_finite());
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidRect { x, y, w, h, theta });
        }
        Ok(Self {
            x,
            y,
            w,
            h,
            theta: normalize_angle(theta),
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.w, self.h, self.theta]
    }

    /// The same rectangle described with `w` and `h` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.x,
            y: self.y,
            w: self.h,
            h: self.w,
            theta: normalize_angle(self.theta + 90.0),
        }
    }

    /// Compares two rectangles as point sets, accepting the `w`/`h`-swapped
    /// description of the same rectangle.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: &Self, b: &Self| {
            (a.x - b.x).abs() <= tol
                && (a.y - b.y).abs() <= tol
                && (a.w - b.w).abs() <= tol
                && (a.h - b.h).abs() <= tol
                && angle_distance(a.theta, b.theta) <= tol
        };
        close(self, other) || close(&self.swapped(), other)
    }

    /// The four corners, starting from local `(-w/2, -h/2)` and following
    /// local `(w/2, -h/2)`, `(w/2, h/2)`, `(-w/2, h/2)`.
    pub fn vertices(&self) -> QuadVertices {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        QuadVertices(local.map(|(lx, ly)| (self.x + lx * c - ly * s, self.y + lx * s + ly * c)))
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains_point(&self, p: (f64, f64)) -> bool {
        let (s, c) = self.theta.to_radians().sin_cos();
        let (dx, dy) = (p.0 - self.x, p.1 - self.y);
        let lx = dx * c + dy * s;
        let ly = -dx * s + dy * c;
        // Slack for rounding in the rotation so corner vertices count as inside.
        let eps = 1e-9 * (1.0 + self.w.max(self.h));
        lx.abs() <= self.w / 2.0 + eps && ly.abs() <= self.h / 2.0 + eps
    }

    /// Tight axis-aligned bounds of the rectangle.
    pub fn bounding_box(&self) -> AxisAlignedBox {
        let q = self.vertices();
        let xs = q.0.map(|v| v.0);
        let ys = q.0.map(|v| v.1);
        let fold = |v: [f64; 4], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
        AxisAlignedBox {
            x_min: fold(xs, f64::min, f64::INFINITY),
            y_min: fold(ys, f64::min, f64::INFINITY),
            x_max: fold(xs, f64::max, f64::NEG_INFINITY),
            y_max: fold(ys, f64::max, f64::NEG_INFINITY),
        }
    }

    fn is_axis_aligned(&self) -> bool {
        self.theta == 0.0 || self.theta == 90.0
    }
}

impl TryFrom<[f64; 5]> for OrientedRect {
    type Error = GeometryError;

    fn try_from(v: [f64; 5]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }
}

impl From<OrientedRect> for [f64; 5] {
    fn from(r: OrientedRect) -> Self {
        r.to_array()
    }
}

/// An axis-aligned box `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct AxisAlignedBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl AxisAlignedBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains_point(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x_min && p.0 <= self.x_max && p.1 >= self.y_min && p.1 <= self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for AxisAlignedBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<AxisAlignedBox> for [f64; 4] {
    fn from(b: AxisAlignedBox) -> Self {
        b.to_array()
    }
}

/// Four `(x, y)` corners in traversal order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadVertices(pub [(f64, f64); 4]);

impl QuadVertices {
    /// Signed shoelace area; positive when the traversal is counterclockwise
    /// in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.0)
    }

    pub fn flat(&self) -> [f64; 8] {
        let v = &self.0;
        [
            v[0].0, v[0].1, v[1].0, v[1].1, v[2].0, v[2].1, v[3].0, v[3].1,
        ]
    }

    pub fn from_flat(f: [f64; 8]) -> Self {
        Self([(f[0], f[1]), (f[2], f[3]), (f[4], f[5]), (f[6], f[7])])
    }
}

pub fn rect_to_vertices(r: &OrientedRect) -> QuadVertices {
    r.vertices()
}

/// Recovers `(x, y, w, h, θ)` from four corners.
///
/// `w` follows the first edge `v1→v2` and `θ` is that edge's direction, so
/// the vertex order of an annotation decides which side is the gripper axis.
pub fn vertices_to_rect(q: &QuadVertices, rect_tol: f64) -> Result<OrientedRect, GeometryError> {
    let v = &q.0;
    if v.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(GeometryError::DegenerateQuad);
    }
    let edges: [(f64, f64); 4] =
        std::array::from_fn(|i| (v[(i + 1) % 4].0 - v[i].0, v[(i + 1) % 4].1 - v[i].1));
    let len: [f64; 4] = edges.map(|e| e.0.hypot(e.1));
    let scale = len.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 || q.signed_area().abs() <= 1e-12 * scale * scale {
        return Err(GeometryError::DegenerateQuad);
    }

    for (a, b) in [(0, 2), (1, 3)] {
        let mismatch = (len[a] - len[b]).abs() / len[a].max(len[b]);
        if mismatch > rect_tol {
            return Err(GeometryError::NotARectangle(format!(
                "opposite edges {} and {} differ by {:.2}%",
                a + 1,
                b + 1,
                mismatch * 100.0
            )));
        }
    }
    for i in 0..4 {
        let (e, f) = (edges[i], edges[(i + 1) % 4]);
        let cos = (e.0 * f.0 + e.1 * f.1) / (len[i] * len[(i + 1) % 4]);
        if cos.abs() > rect_tol {
            return Err(GeometryError::NotARectangle(format!(
                "edges {} and {} are {:.3} degrees from perpendicular",
                i + 1,
                (i + 1) % 4 + 1,
                90.0 - cos.abs().acos().to_degrees()
            )));
        }
    }

    let cx = v.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = v.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let w = (len[0] + len[2]) / 2.0;
    let h = (len[1] + len[3]) / 2.0;
    let theta = edges[0].1.atan2(edges[0].0).to_degrees();
    OrientedRect::new(cx, cy, w, h, theta)
}

fn polygon_signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a.0 * b.1 - b.0 * a.1;
    }
    acc / 2.0
}

/// Sutherland–Hodgman clipping of `subject` by the convex polygon `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let orient = polygon_signed_area(clip).signum();
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        // Positive on the inner side of edge a→b.
        let side = |p: (f64, f64)| orient * ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0));
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Area of the intersection of two oriented rectangles.
pub fn intersection_area(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let poly = clip_convex(&a.vertices().0, &b.vertices().0);
    let area = polygon_signed_area(&poly).abs();
    if area < SLIVER_AREA {
        0.0
    } else {
        area
    }
}

/// Jaccard index of two oriented rectangles, computed on the exact rotated
/// intersection.
pub fn rotated_iou(a: &OrientedRect, b: &OrientedRect) -> f64 {
    if a == b {
        return 1.0;
    }
    if a.is_axis_aligned() && b.is_axis_aligned() {
        return box_iou(&a.bounding_box(), &b.bounding_box());
    }
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn box_iou(a: &AxisAlignedBox, b: &AxisAlignedBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

pub fn contains_point(r: &OrientedRect, p: (f64, f64)) -> bool {
    r.contains_point(p)
}
