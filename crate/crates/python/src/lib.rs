//! Python bindings for the roigrasp library.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roigrasp::anchor_codec::{self, AnchorSpec, GraspOffsets};
use roigrasp::dataset_io::load_dataset;
use roigrasp::geometry::{self, AxisAlignedBox, OrientedRect};
use roigrasp::metrics::{self, parse_detection_file, ApMode, EvalConfig};
use roigrasp::suppression::{nms_box_indices, nms_grasp_indices, ScoredBox, ScoredGrasp};
use roigrasp::synth::{write_synthetic_dataset, SynthConfig, SynthError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Box4 = (f64, f64, f64, f64);

fn aabb(b: Box4) -> PyResult<AxisAlignedBox> {
    AxisAlignedBox::new(b.0, b.1, b.2, b.3).map_err(value_err)
}

/// Oriented rectangle `(x, y, w, h, theta)` with theta in degrees.
#[pyclass(name = "OrientedRect", module = "pyroigrasp", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyRect(OrientedRect);

#[pymethods]
impl PyRect {
    #[new]
    fn new(x: f64, y: f64, w: f64, h: f64, theta: f64) -> PyResult<Self> {
        OrientedRect::new(x, y, w, h, theta).map(Self).map_err(value_err)
    }

    /// Builds a rectangle from four corners in order.
    #[staticmethod]
    #[pyo3(signature = (corners, rect_tol = geometry::DEFAULT_RECT_TOL))]
    fn from_vertices(corners: [(f64, f64); 4], rect_tol: f64) -> PyResult<Self> {
        geometry::vertices_to_rect(&geometry::QuadVertices(corners), rect_tol)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn x(&self) -> f64 {
        self.0.x()
    }

    #[getter]
    fn y(&self) -> f64 {
        self.0.y()
    }

    #[getter]
    fn w(&self) -> f64 {
        self.0.w()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn vertices(&self) -> [(f64, f64); 4] {
        self.0.vertices().0
    }

    fn contains_point(&self, x: f64, y: f64) -> bool {
        self.0.contains_point((x, y))
    }

    /// `(x_min, y_min, x_max, y_max)` of the enclosing axis-aligned box.
    fn bounding_box(&self) -> Box4 {
        let b = self.0.bounding_box();
        (b.x_min(), b.y_min(), b.x_max(), b.y_max())
    }

    #[allow(clippy::wrong_self_convention)]
    fn to_tuple(&self) -> (f64, f64, f64, f64, f64) {
        let [x, y, w, h, t] = self.0.to_array();
        (x, y, w, h, t)
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        let [x, y, w, h, t] = self.0.to_array();
        format!("OrientedRect(x={x}, y={y}, w={w}, h={h}, theta={t})")
    }
}

#[pyfunction]
fn rotated_iou(a: PyRef<'_, PyRect>, b: PyRef<'_, PyRect>) -> f64 {
    geometry::rotated_iou(&a.0, &b.0)
}

#[pyfunction]
fn box_iou(a: Box4, b: Box4) -> PyResult<f64> {
    Ok(geometry::box_iou(&aabb(a)?, &aabb(b)?))
}

#[pyfunction]
fn angle_distance(a: f64, b: f64) -> f64 {
    geometry::angle_distance(a, b)
}

/// Regression offsets `(tx, ty, tw, th, ttheta)` of `grasp` relative to `anchor`.
#[pyfunction]
fn encode(grasp: PyRef<'_, PyRect>, anchor: PyRef<'_, PyRect>, k: usize) -> [f64; 5] {
    anchor_codec::encode(&grasp.0, &anchor.0, k).to_array()
}

#[pyfunction]
fn decode(offsets: [f64; 5], anchor: PyRef<'_, PyRect>, k: usize) -> PyResult<PyRect> {
    anchor_codec::decode(&GraspOffsets::from_array(offsets), &anchor.0, k)
        .map(PyRect)
        .map_err(value_err)
}

/// Oriented anchors of an RoI in flat order `(j * grid_w + i) * k + m`.
#[pyfunction]
#[pyo3(signature = (roi, grid_w = 7, grid_h = 7, k = anchor_codec::DEFAULT_K, anchor_size = anchor_codec::DEFAULT_ANCHOR_SIZE))]
fn anchor_grid(roi: Box4, grid_w: usize, grid_h: usize, k: usize, anchor_size: f64) -> PyResult<Vec<PyRect>> {
    let spec = AnchorSpec::new(grid_w, grid_h, k, anchor_size).map_err(value_err)?;
    let grid = anchor_codec::build_anchor_grid(aabb(roi)?, spec).map_err(value_err)?;
    Ok(grid.anchors().iter().copied().map(PyRect).collect())
}

/// Indices of the grasps kept by greedy NMS, best first.
#[pyfunction]
fn nms_grasps(rects: Vec<PyRef<'_, PyRect>>, scores: Vec<f64>, threshold: f64) -> PyResult<Vec<usize>> {
    if rects.len() != scores.len() {
        return Err(value_err(format!("{} rects but {} scores", rects.len(), scores.len())));
    }
    let c: Vec<ScoredGrasp> = rects
        .iter()
        .zip(scores)
        .map(|(r, score)| ScoredGrasp { rect: r.0, score })
        .collect();
    Ok(nms_grasp_indices(&c, threshold))
}

/// Indices of the boxes kept by per-category greedy NMS, best first.
#[pyfunction]
fn nms_boxes(boxes: Vec<Box4>, categories: Vec<String>, scores: Vec<f64>, threshold: f64) -> PyResult<Vec<usize>> {
    if boxes.len() != categories.len() || boxes.len() != scores.len() {
        return Err(value_err("boxes, categories and scores differ in length"));
    }
    let c = boxes
        .into_iter()
        .zip(categories)
        .zip(scores)
        .map(|((b, category), score)| {
            Ok(ScoredBox {
                bbox: aabb(b)?,
                category,
                score,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(nms_box_indices(&c, threshold))
}

/// `object_loss + (1 / n_roi) * sum(per_roi_grasp_losses)`.
#[pyfunction]
fn total_loss(object_loss: f64, per_roi_grasp_losses: Vec<f64>, n_roi: usize) -> PyResult<f64> {
    roigrasp::losses::total_loss(object_loss, &per_roi_grasp_losses, n_roi).map_err(value_err)
}

/// Scores a detection file (JSON lines text) against the dataset at `gt_root`.
#[pyfunction]
#[pyo3(signature = (
    detections,
    gt_root,
    jaccard_thresh = 0.25,
    angle_thresh = 30.0,
    box_iou_thresh = 0.5,
    ignore_hard = false,
    score_floor = None,
    eleven_point = false,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    detections: &str,
    gt_root: PathBuf,
    jaccard_thresh: f64,
    angle_thresh: f64,
    box_iou_thresh: f64,
    ignore_hard: bool,
    score_floor: Option<f64>,
    eleven_point: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let scenes = load_dataset(&gt_root).map_err(value_err)?;
    let dets = parse_detection_file(detections).map_err(value_err)?;
    let cfg = EvalConfig {
        box_iou_thresh,
        jaccard_thresh,
        angle_thresh,
        ignore_hard,
        score_floor,
        ap_mode: if eleven_point { ApMode::ElevenPoint } else { ApMode::AllPoint },
    };
    let r = py.detach(|| metrics::evaluate(&dets, &scenes, &cfg)).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("mr0", r.mr0)?;
    out.set_item("mr_minus1", r.mr_minus1)?;
    out.set_item("lamr", r.lamr)?;
    out.set_item("map", r.map)?;
    out.set_item("per_class_ap", r.per_class_ap)?;
    let curve: Vec<(f64, f64, f64, usize, usize)> = r
        .curve
        .points
        .iter()
        .map(|p| (p.threshold, p.fppi, p.miss_rate, p.tp, p.fp))
        .collect();
    out.set_item("curve", curve)?;
    out.set_item("n_images", r.curve.n_images)?;
    out.set_item("n_gt", r.curve.n_gt)?;
    Ok(out)
}

/// Writes a synthetic dataset with planted detections to `out`.
/// `config` is a JSON object; missing fields take their defaults.
#[pyfunction]
#[pyo3(signature = (out, config = None))]
fn synthesize(py: Python<'_>, out: PathBuf, config: Option<&str>) -> PyResult<()> {
    let cfg: SynthConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => SynthConfig::default(),
    };
    py.detach(|| write_synthetic_dataset(&out, &cfg)).map_err(|e| match e {
        SynthError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    })
}

#[pymodule]
fn pyroigrasp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRect>()?;
    m.add_function(wrap_pyfunction!(rotated_iou, m)?)?;
    m.add_function(wrap_pyfunction!(box_iou, m)?)?;
    m.add_function(wrap_pyfunction!(angle_distance, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(anchor_grid, m)?)?;
    m.add_function(wrap_pyfunction!(nms_grasps, m)?)?;
    m.add_function(wrap_pyfunction!(nms_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
