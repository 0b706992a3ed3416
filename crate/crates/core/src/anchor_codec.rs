//! Oriented anchor fields over an RoI and the offset coding of grasps
//! relative to those anchors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, AxisAlignedBox, OrientedRect};

/// Best-performing configuration: 12×12 anchors, four orientations.
pub const DEFAULT_ANCHOR_SIZE: f64 = 12.0;
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("invalid anchor spec: {0}")]
    InvalidSpec(String),
}

/// Grid size, orientations per cell and square anchor side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub grid_w: usize,
    pub grid_h: usize,
    pub k: usize,
    pub anchor_size: f64,
}

impl AnchorSpec {
    pub fn new(grid_w: usize, grid_h: usize, k: usize, anchor_size: f64) -> Result<Self, AnchorError> {
        let spec = Self {
            grid_w,
            grid_h,
            k,
            anchor_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.grid_w == 0 || self.grid_h == 0 || self.k == 0 {
            return Err(AnchorError::InvalidSpec(format!(
                "grid {}x{} with k={} must be at least 1x1x1",
                self.grid_w, self.grid_h, self.k
            )));
        }
        if !(self.anchor_size.is_finite() && self.anchor_size > 0.0) {
            return Err(AnchorError::InvalidSpec(format!(
                "anchor size {} must be positive",
                self.anchor_size
            )));
        }
        Ok(())
    }

    pub fn anchor_count(&self) -> usize {
        self.grid_w * self.grid_h * self.k
    }

    /// Angular step between neighbouring orientations, `180 / k`.
    pub fn angle_step(&self) -> f64 {
        180.0 / self.k as f64
    }
}

/// The canonical orientation set `-90 + (m + 0.5)·180/k` for `m` in `0..k`.
pub fn orientation_set(k: usize) -> Vec<f64> {
    let step = 180.0 / k as f64;
    (0..k).map(|m| -90.0 + (m as f64 + 0.5) * step).collect()
}

/// `W×H×k` anchors over an RoI, stored row-major by cell with orientation as
/// the fastest-varying index.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    roi: AxisAlignedBox,
    spec: AnchorSpec,
    anchors: Vec<OrientedRect>,
}

impl AnchorGrid {
    pub fn roi(&self) -> &AxisAlignedBox {
        &self.roi
    }

    pub fn spec(&self) -> &AnchorSpec {
        &self.spec
    }

    pub fn anchors(&self) -> &[OrientedRect] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Flat index of anchor `m` in cell column `i`, row `j`.
    pub fn flat_index(&self, i: usize, j: usize, m: usize) -> usize {
        (j * self.spec.grid_w + i) * self.spec.k + m
    }

    pub fn cell_width(&self) -> f64 {
        self.roi.width() / self.spec.grid_w as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.roi.height() / self.spec.grid_h as f64
    }

    /// Cell `(column, row)` containing `p`, or `None` outside the RoI.
    /// Points on the far RoI edge fall into the last cell.
    pub fn cell_of(&self, p: (f64, f64)) -> Option<(usize, usize)> {
        if !self.roi.contains_point(p) {
            return None;
        }
        let fx = (p.0 - self.roi.x_min()) / self.roi.width() * self.spec.grid_w as f64;
        let fy = (p.1 - self.roi.y_min()) / self.roi.height() * self.spec.grid_h as f64;
        let i = (fx.floor() as usize).min(self.spec.grid_w - 1);
        let j = (fy.floor() as usize).min(self.spec.grid_h - 1);
        Some((i, j))
    }
}

pub fn build_anchor_grid(roi: AxisAlignedBox, spec: AnchorSpec) -> Result<AnchorGrid, AnchorError> {
    spec.validate()?;
    let angles = orientation_set(spec.k);
    let cell_w = roi.width() / spec.grid_w as f64;
    let cell_h = roi.height() / spec.grid_h as f64;
    let mut anchors = Vec::with_capacity(spec.anchor_count());
    for j in 0..spec.grid_h {
        let cy = roi.y_min() + (j as f64 + 0.5) * cell_h;
        for i in 0..spec.grid_w {
            let cx = roi.x_min() + (i as f64 + 0.5) * cell_w;
            for &theta in &angles {
                let a = OrientedRect::new(cx, cy, spec.anchor_size, spec.anchor_size, theta)
                    .expect("validated spec yields valid anchors");
                anchors.push(a);
            }
        }
    }
    Ok(AnchorGrid { roi, spec, anchors })
}

/// Regression targets `(t_x, t_y, t_w, t_h, t_θ)` of a grasp against an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GraspOffsets {
    pub t_x: f64,
    pub t_y: f64,
    pub t_w: f64,
    pub t_h: f64,
    pub t_theta: f64,
}

impl GraspOffsets {
    pub fn to_array(&self) -> [f64; 5] {
        [self.t_x, self.t_y, self.t_w, self.t_h, self.t_theta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            t_x: a[0],
            t_y: a[1],
            t_w: a[2],
            t_h: a[3],
            t_theta: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn encode(grasp: &OrientedRect, anchor: &OrientedRect, k: usize) -> GraspOffsets {
    let divisor = 90.0 / k as f64;
    GraspOffsets {
        t_x: (grasp.x() - anchor.x()) / anchor.w(),
        t_y: (grasp.y() - anchor.y()) / anchor.h(),
        t_w: (grasp.w() / anchor.w()).ln(),
        t_h: (grasp.h() / anchor.h()).ln(),
        t_theta: normalize_angle(grasp.theta() - anchor.theta()) / divisor,
    }
}

/// Inverse of [`encode`]. Fails only if the offsets produce a non-finite or
/// zero-extent rectangle.
pub fn decode(
    offsets: &GraspOffsets,
    anchor: &OrientedRect,
    k: usize,
) -> Result<OrientedRect, crate::geometry::GeometryError> {
    let divisor = 90.0 / k as f64;
    OrientedRect::new(
        offsets.t_x * anchor.w() + anchor.x(),
        offsets.t_y * anchor.h() + anchor.y(),
        anchor.w() * offsets.t_w.exp(),
        anchor.h() * offsets.t_h.exp(),
        offsets.t_theta * divisor + anchor.theta(),
    )
}
