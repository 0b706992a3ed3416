#![allow(dead_code)]

use proptest::prelude::*;
use roigrasp::geometry::{AxisAlignedBox, OrientedRect};

pub fn rect() -> impl Strategy<Value = OrientedRect> {
    (-100.0..100.0f64, -100.0..100.0f64, 1.0..60.0f64, 1.0..60.0f64, -180.0..180.0f64)
        .prop_map(|(x, y, w, h, t)| OrientedRect::new(x, y, w, h, t).unwrap())
}

pub fn aabb() -> impl Strategy<Value = AxisAlignedBox> {
    (0.0..200.0f64, 0.0..200.0f64, 2.0..80.0f64, 2.0..80.0f64)
        .prop_map(|(x, y, w, h)| AxisAlignedBox::new(x, y, x + w, y + h).unwrap())
}

/// Rotates `r` by `phi` degrees about the origin, then translates it.
pub fn moved(r: &OrientedRect, phi: f64, dx: f64, dy: f64) -> OrientedRect {
    let (s, c) = phi.to_radians().sin_cos();
    let x = c * r.x() - s * r.y() + dx;
    let y = s * r.x() + c * r.y() + dy;
    OrientedRect::new(x, y, r.w(), r.h(), r.theta() + phi).unwrap()
}
