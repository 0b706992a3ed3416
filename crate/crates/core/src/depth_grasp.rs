//! 3-D grasp point and approach vector from a grasp rectangle and a depth map.
//!
//! Camera frame is right-handed with `Z` pointing into the scene; a pixel
//! `(u, v)` with depth `Z` back-projects to `((u - cx)·Z/fx, (v - cy)·Z/fy, Z)`.
//! Integer pixel coordinates are pixel centers.

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::OrientedRect;

pub const DEFAULT_NORMAL_RADIUS: usize = 5;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("no valid depth inside the grasp rectangle")]
    NoValidDepth,
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),
    #[error("invalid depth map: {0}")]
    InvalidMap(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }

    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (p[0] * self.fx / p[2] + self.cx, p[1] * self.fy / p[2] + self.cy)
    }
}

/// Row-major depth in meters. Non-finite entries mark missing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    intrinsics: Intrinsics,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, intrinsics: Intrinsics) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::InvalidMap(format!("size {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(DepthError::InvalidMap(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        let i = intrinsics;
        if ![i.fx, i.fy, i.cx, i.cy].iter().all(|v| v.is_finite()) || i.fx == 0.0 || i.fy == 0.0 {
            return Err(DepthError::InvalidMap(format!("bad intrinsics {i:?}")));
        }
        Ok(Self {
            width,
            height,
            values,
            intrinsics,
        })
    }

    /// Builds a map by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        intrinsics: Intrinsics,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, DepthError> {
        let values = (0..height).flat_map(|v| (0..width).map(move |u| (u, v))).map(|(u, v)| f(u, v)).collect();
        Self::new(width, height, values, intrinsics)
    }

    /// Whitespace-separated millimeter matrix, one image row per line.
    /// Zero and `nan` mark missing depth.
    pub fn from_text_mm(text: &str, intrinsics: Intrinsics) -> Result<Self, DepthError> {
        let mut values = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| DepthError::Parse {
                        line: n + 1,
                        message: format!("bad depth value '{t}'"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(DepthError::Parse {
                    line: n + 1,
                    message: format!("row has {} values, expected {}", row.len(), width.unwrap_or(0)),
                });
            }
            values.extend(row.into_iter().map(mm_to_m));
            height += 1;
        }
        Self::new(width.unwrap_or(0), height, values, intrinsics)
    }

    /// Single-channel 16-bit millimeter raster; zero marks missing depth.
    pub fn from_png_mm(path: &Path, intrinsics: Intrinsics) -> Result<Self, DepthError> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let values = img.into_raw().into_iter().map(|v| mm_to_m(f64::from(v))).collect();
        Self::new(w as usize, h as usize, values, intrinsics)
    }

    /// Loads `.png` rasters or plain-text matrices by extension.
    pub fn load(path: &Path, intrinsics: Intrinsics) -> Result<Self, DepthError> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            Self::from_png_mm(path, intrinsics)
        } else {
            Self::from_text_mm(&std::fs::read_to_string(path)?, intrinsics)
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    /// Depth at `(u, v)` if present and finite.
    pub fn depth(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let d = self.values[v * self.width + u];
        d.is_finite().then_some(d)
    }

    /// Every depth multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|d| d * s).collect(),
            ..self.clone()
        }
    }
}

fn mm_to_m(v: f64) -> f64 {
    if v.is_finite() && v > 0.0 {
        v / 1000.0
    } else {
        f64::NAN
    }
}

/// Minimum-depth pixel among pixels whose centers lie in `rect`.
/// Ties go to the smallest `(v, u)`.
pub fn min_depth_point(rect: &OrientedRect, d: &DepthMap) -> Result<(usize, usize, f64), DepthError> {
    let b = rect.bounding_box();
    let u_max = (d.width - 1) as f64;
    let v_max = (d.height - 1) as f64;
    if b.x_max() < 0.0 || b.y_max() < 0.0 || b.x_min() > u_max || b.y_min() > v_max {
        return Err(DepthError::NoValidDepth);
    }
    let (u0, u1) = (b.x_min().max(0.0).ceil() as usize, b.x_max().min(u_max).floor() as usize);
    let (v0, v1) = (b.y_min().max(0.0).ceil() as usize, b.y_max().min(v_max).floor() as usize);
    let mut best: Option<(usize, usize, f64)> = None;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let Some(z) = d.depth(u, v) else { continue };
            if !rect.contains_point((u as f64, v as f64)) {
                continue;
            }
            if best.is_none_or(|(_, _, bz)| z < bz) {
                best = Some((u, v, z));
            }
        }
    }
    best.ok_or(DepthError::NoValidDepth)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    /// Unit normal facing the camera.
    pub normal: [f64; 3],
    pub centroid: [f64; 3],
    /// Largest absolute point-to-plane distance.
    pub max_residual: f64,
}

/// Total-least-squares plane through `points`.
pub fn fit_plane(points: &[[f64; 3]]) -> Result<PlaneFit, DepthError> {
    if points.len() < 3 {
        return Err(DepthError::DegenerateNeighborhood(format!(
            "{} valid points, need at least 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let c = points
        .iter()
        .fold(Vector3::zeros(), |acc: Vector3<f64>, p| acc + Vector3::from(*p))
        / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc: Matrix3<f64>, p| {
        let d = Vector3::from(*p) - c;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lo, mid, hi) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(DepthError::DegenerateNeighborhood(format!(
            "covariance rank deficient (eigenvalues {lo:e}, {mid:e}, {hi:e})"
        )));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    let toward_camera = if normal.z != 0.0 { normal.z < 0.0 } else { normal.dot(&c) <= 0.0 };
    if !toward_camera {
        normal = -normal;
    }
    let max_residual = points
        .iter()
        .map(|p| normal.dot(&(Vector3::from(*p) - c)).abs())
        .fold(0.0, f64::max);
    Ok(PlaneFit {
        normal: normal.into(),
        centroid: c.into(),
        max_residual,
    })
}

/// Back-projected valid pixels in the `(2r+1)²` window around `(u, v)`.
pub fn window_points(d: &DepthMap, u: usize, v: usize, radius: usize) -> Vec<[f64; 3]> {
    let (u0, u1) = (u.saturating_sub(radius), (u + radius).min(d.width - 1));
    let (v0, v1) = (v.saturating_sub(radius), (v + radius).min(d.height - 1));
    let mut pts = Vec::new();
    for vv in v0..=v1 {
        for uu in u0..=u1 {
            if let Some(z) = d.depth(uu, vv) {
                pts.push(d.intrinsics.back_project(uu as f64, vv as f64, z));
            }
        }
    }
    pts
}

/// Camera-facing unit normal of the plane fitted around `(u, v)`.
pub fn surface_normal(d: &DepthMap, u: usize, v: usize, radius: usize) -> Result<[f64; 3], DepthError> {
    Ok(fit_plane(&window_points(d, u, v, radius))?.normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    /// Camera-frame point in meters.
    pub point: [f64; 3],
    /// Unit approach vector facing the camera.
    pub normal: [f64; 3],
    pub pixel: (usize, usize),
}

pub fn grasp_pose(rect: &OrientedRect, d: &DepthMap, radius: usize) -> Result<GraspPose, DepthError> {
    let (u, v, z) = min_depth_point(rect, d)?;
    let normal = surface_normal(d, u, v, radius)?;
    Ok(GraspPose {
        point: d.intrinsics.back_project(u as f64, v as f64, z),
        normal,
        pixel: (u, v),
    })
}
