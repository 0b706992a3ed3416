//! Seeded generator of multi-object grasp scenes and perturbed detections.
//!
//! All randomness comes from ChaCha8 streams seeded with [`SynthConfig::seed`]
//! (stream 0 for scenes, stream 1 for detections), so a configuration
//! reproduces the same scenes on every platform. Scene coordinates are
//! quantized to 1/256 pixel and angles to 1/256 degree, which keeps the rigid
//! augmentations exact in floating point.

pub mod oracle;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{write_dataset, DatasetError, GraspAnnotation, ObjectAnnotation, SceneAnnotation};
use crate::geometry::{angle_distance, box_iou, rotated_iou, AxisAlignedBox, OrientedRect};
use crate::metrics::{write_detection_file, DetectionRecord, EvalConfig};
use crate::suppression::ScoredGrasp;

/// Object categories, one per VMRD class slot.
pub const CATEGORIES: [&str; 31] = [
    "apple", "banana", "book", "bottle", "box", "cable", "calculator", "can", "charger", "cup",
    "glasses", "headphones", "knife", "mobile_phone", "mouse", "notebook", "orange", "paper",
    "pen", "pliers", "remote_controller", "scissors", "screwdriver", "shaver", "stapler", "tape",
    "toothbrush", "toothpaste", "towel", "umbrella", "wallet",
];

const GRID: f64 = 256.0;

fn q(v: f64) -> f64 {
    (v * GRID).round() / GRID
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("scene {scene}: could not place object {object} without overlap")]
    PlacementFailed { scene: usize, object: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionModel {
    /// Probability that a ground-truth object is detected.
    pub detect_prob: f64,
    /// Standard deviation of box corner noise, pixels.
    pub box_jitter: f64,
    /// Standard deviation of grasp center and extent noise, pixels.
    pub grasp_jitter: f64,
    /// Standard deviation of grasp angle noise, degrees.
    pub angle_jitter: f64,
    /// Fixed displacement of the top-1 grasp along its own axis, in units of its width.
    pub grasp_shift: f64,
    /// Probability of one spurious detection per image.
    pub fp_rate: f64,
    /// Probability of a second, lower-scored detection of a detected object.
    pub duplicate_rate: f64,
    /// Number of low-scored distractor grasps attached to each detection.
    pub extra_grasps: usize,
    /// Score range for detections derived from ground-truth objects.
    pub score_true: [f64; 2],
    /// Score range for spurious and duplicate detections.
    pub score_false: [f64; 2],
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            detect_prob: 0.9,
            box_jitter: 3.0,
            grasp_jitter: 2.0,
            angle_jitter: 8.0,
            grasp_shift: 0.0,
            fp_rate: 0.3,
            duplicate_rate: 0.1,
            extra_grasps: 2,
            score_true: [0.4, 1.0],
            score_false: [0.0, 0.7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub objects_per_scene: [usize; 2],
    pub grasps_per_object: [usize; 2],
    /// Side-length range of object boxes, pixels.
    pub object_size: [f64; 2],
    /// Probability that an object (after the first) is placed overlapping a prior one.
    pub overlap_bias: f64,
    pub hard_rate: f64,
    /// Fraction of scenes listed in the `val` split file.
    pub val_fraction: f64,
    pub detection: DetectionModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenes: 20,
            image_width: 640.0,
            image_height: 480.0,
            objects_per_scene: [2, 5],
            grasps_per_object: [1, 4],
            object_size: [60.0, 160.0],
            overlap_bias: 0.3,
            hard_rate: 0.2,
            val_fraction: 0.1,
            detection: DetectionModel::default(),
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<(), SynthError> {
    if r[0] <= r[1] {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(format!("{name} range {r:?} is empty")))
    }
}

fn check_rate(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(format!("{name} = {v} must lie in [0, 1]")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        check_range("objects_per_scene", &self.objects_per_scene)?;
        check_range("grasps_per_object", &self.grasps_per_object)?;
        check_range("object_size", &self.object_size)?;
        check_range("score_true", &self.detection.score_true)?;
        check_range("score_false", &self.detection.score_false)?;
        for (n, v) in [
            ("overlap_bias", self.overlap_bias),
            ("hard_rate", self.hard_rate),
            ("val_fraction", self.val_fraction),
            ("detect_prob", self.detection.detect_prob),
            ("fp_rate", self.detection.fp_rate),
            ("duplicate_rate", self.detection.duplicate_rate),
            ("score_true lower bound", self.detection.score_true[0]),
            ("score_true upper bound", self.detection.score_true[1]),
            ("score_false lower bound", self.detection.score_false[0]),
            ("score_false upper bound", self.detection.score_false[1]),
        ] {
            check_rate(n, v)?;
        }
        if self.object_size[0] < 8.0 {
            return Err(SynthError::InvalidConfig("object_size must be at least 8 pixels".into()));
        }
        if self.object_size[1] > self.image_width.min(self.image_height) {
            return Err(SynthError::InvalidConfig("objects must fit inside the image".into()));
        }
        let d = &self.detection;
        if [d.box_jitter, d.grasp_jitter, d.angle_jitter, d.grasp_shift]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(SynthError::InvalidConfig("jitter and shift must be non-negative".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    }
}

fn place_box(rng: &mut ChaCha8Rng, cx: f64, cy: f64, w: f64, h: f64, cfg: &SynthConfig) -> AxisAlignedBox {
    let cx = cx.clamp(w / 2.0, cfg.image_width - w / 2.0);
    let cy = cy.clamp(h / 2.0, cfg.image_height - h / 2.0);
    let _ = rng;
    let x0 = q(cx - w / 2.0);
    let y0 = q(cy - h / 2.0);
    AxisAlignedBox::new(x0, y0, x0 + w, y0 + h).expect("positive box size")
}

fn overlapping_box(rng: &mut ChaCha8Rng, prior: &AxisAlignedBox, w: f64, h: f64, cfg: &SynthConfig) -> AxisAlignedBox {
    let (pcx, pcy) = prior.center();
    let reach_x = (prior.width() + w) / 2.0;
    let reach_y = (prior.height() + h) / 2.0;
    for _ in 0..100 {
        let cx = pcx + rng.random_range(-0.9..0.9) * reach_x;
        let cy = pcy + rng.random_range(-0.9..0.9) * reach_y;
        let b = place_box(rng, cx, cy, w, h, cfg);
        if box_iou(&b, prior) > 0.0 {
            return b;
        }
    }
    // A box centered on the prior's center keeps that center inside after clamping.
    place_box(rng, pcx, pcy, w, h, cfg)
}

fn free_box(
    rng: &mut ChaCha8Rng,
    placed: &[AxisAlignedBox],
    mut w: f64,
    mut h: f64,
    cfg: &SynthConfig,
) -> Option<AxisAlignedBox> {
    for _ in 0..12 {
        for _ in 0..200 {
            let x0 = q(rng.random_range(0.0..=(cfg.image_width - w)));
            let y0 = q(rng.random_range(0.0..=(cfg.image_height - h)));
            let Ok(b) = AxisAlignedBox::new(x0, y0, x0 + w, y0 + h) else { continue };
            if b.x_max() <= cfg.image_width
                && b.y_max() <= cfg.image_height
                && placed.iter().all(|p| box_iou(p, &b) == 0.0)
            {
                return Some(b);
            }
        }
        w = q(w * 0.75).max(4.0);
        h = q(h * 0.75).max(4.0);
    }
    None
}

fn random_grasp_in(rng: &mut ChaCha8Rng, b: &AxisAlignedBox) -> OrientedRect {
    let side = b.width().min(b.height());
    let w = q(side * rng.random_range(0.25..0.5));
    let h = q(w * rng.random_range(0.4..0.6));
    let x = q(b.x_min() + b.width() * rng.random_range(0.2..0.8));
    let y = q(b.y_min() + b.height() * rng.random_range(0.2..0.8));
    let theta = q(rng.random_range(-90.0..90.0));
    OrientedRect::new(x, y, w, h, theta).expect("positive grasp size")
}

/// Generates `cfg.n_scenes` validated scenes.
pub fn generate_scenes(cfg: &SynthConfig) -> Result<Vec<SceneAnnotation>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scenes = Vec::with_capacity(cfg.n_scenes);
    for s in 0..cfg.n_scenes {
        let n_obj = rng.random_range(cfg.objects_per_scene[0]..=cfg.objects_per_scene[1]);
        let mut objects: Vec<ObjectAnnotation> = Vec::with_capacity(n_obj);
        let mut grasps = Vec::new();
        for o in 0..n_obj {
            let w = q(uniform(&mut rng, cfg.object_size));
            let h = q(uniform(&mut rng, cfg.object_size));
            let overlap = o > 0 && rng.random_bool(cfg.overlap_bias);
            let bbox = if overlap {
                let prior = &objects[rng.random_range(0..objects.len())].bbox;
                overlapping_box(&mut rng, prior, w, h, cfg)
            } else {
                let placed: Vec<AxisAlignedBox> = objects.iter().map(|o| o.bbox).collect();
                free_box(&mut rng, &placed, w, h, cfg).ok_or(SynthError::PlacementFailed { scene: s, object: o })?
            };
            let index = o as u32 + 1;
            let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string();
            let n_grasps = rng.random_range(cfg.grasps_per_object[0]..=cfg.grasps_per_object[1]);
            for _ in 0..n_grasps {
                grasps.push(GraspAnnotation {
                    rect: random_grasp_in(&mut rng, &bbox),
                    hard: rng.random_bool(cfg.hard_rate),
                    owner_index: index,
                });
            }
            objects.push(ObjectAnnotation { index, category, bbox });
        }
        let scene = SceneAnnotation {
            image_id: format!("synth_{s:05}"),
            width: cfg.image_width,
            height: cfg.image_height,
            objects,
            grasps,
        };
        scene.validate()?;
        scenes.push(scene);
    }
    Ok(scenes)
}

/// A generated detection plus what the generator knows about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDetection {
    pub record: DetectionRecord,
    /// Whether the detection passes the class, box and grasp gates against
    /// some ground-truth object. Duplicate claims are not considered.
    pub planted_tp: bool,
    /// Index of the object this detection was derived from, if any.
    pub source_object: Option<u32>,
}

fn passes_gates(det: &DetectionRecord, scene: &SceneAnnotation, obj: &ObjectAnnotation) -> bool {
    let gates = EvalConfig::default();
    let Some(top1) = det.top1_grasp() else { return false };
    det.category == obj.category
        && box_iou(&det.bbox, &obj.bbox) > gates.box_iou_thresh
        && scene.grasps_of(obj.index).any(|g| {
            rotated_iou(&top1.rect, &g.rect) > gates.jaccard_thresh
                && angle_distance(top1.rect.theta(), g.rect.theta()) < gates.angle_thresh
        })
}

fn score(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    (uniform(rng, r) * 1000.0).round() / 1000.0
}

fn jittered_box(rng: &mut ChaCha8Rng, b: &AxisAlignedBox, sigma: f64, scene: &SceneAnnotation) -> AxisAlignedBox {
    let mut c = b.to_array().map(|v| v + gaussian(rng, sigma));
    c[0] = c[0].clamp(0.0, scene.width - 1.0);
    c[1] = c[1].clamp(0.0, scene.height - 1.0);
    c[2] = c[2].clamp(c[0] + 1.0, scene.width.max(c[0] + 1.0));
    c[3] = c[3].clamp(c[1] + 1.0, scene.height.max(c[1] + 1.0));
    AxisAlignedBox::new(c[0], c[1], c[2], c[3]).expect("clamped box is ordered")
}

fn jittered_grasp(rng: &mut ChaCha8Rng, g: &OrientedRect, m: &DetectionModel) -> OrientedRect {
    let (s, c) = g.theta().to_radians().sin_cos();
    let shift = m.grasp_shift * g.w();
    let x = g.x() + shift * c + gaussian(rng, m.grasp_jitter);
    let y = g.y() + shift * s + gaussian(rng, m.grasp_jitter);
    let w = (g.w() + gaussian(rng, m.grasp_jitter)).max(1.0);
    let h = (g.h() + gaussian(rng, m.grasp_jitter)).max(1.0);
    let theta = g.theta() + gaussian(rng, m.angle_jitter);
    OrientedRect::new(x, y, w, h, theta).expect("finite jittered grasp")
}

fn with_distractors(rng: &mut ChaCha8Rng, top1: OrientedRect, top_score: f64, bbox: &AxisAlignedBox, n: usize) -> Vec<ScoredGrasp> {
    let mut grasps = vec![ScoredGrasp {
        rect: top1,
        score: top_score,
    }];
    for _ in 0..n {
        let rect = random_grasp_in(rng, bbox);
        let s = score(rng, [0.0, top_score]);
        grasps.push(ScoredGrasp { rect, score: s });
    }
    grasps
}

fn object_detection(
    rng: &mut ChaCha8Rng,
    scene: &SceneAnnotation,
    obj: &ObjectAnnotation,
    score_range: [f64; 2],
    m: &DetectionModel,
) -> PlantedDetection {
    let bbox = jittered_box(rng, &obj.bbox, m.box_jitter, scene);
    let owned: Vec<&GraspAnnotation> = scene.grasps_of(obj.index).collect();
    let det_score = score(rng, score_range);
    let grasps = if owned.is_empty() {
        Vec::new()
    } else {
        let src = owned[rng.random_range(0..owned.len())];
        let top1 = jittered_grasp(rng, &src.rect, m);
        let top_score = score(rng, [0.5, 1.0]);
        with_distractors(rng, top1, top_score, &bbox, m.extra_grasps)
    };
    let record = DetectionRecord {
        image_id: scene.image_id.clone(),
        category: obj.category.clone(),
        score: det_score,
        bbox,
        grasps,
    };
    PlantedDetection {
        planted_tp: passes_gates(&record, scene, obj),
        record,
        source_object: Some(obj.index),
    }
}

/// Perturbs ground truth into a detection stream with planted labels.
pub fn generate_detections(scenes: &[SceneAnnotation], cfg: &SynthConfig) -> Result<Vec<PlantedDetection>, SynthError> {
    cfg.validate()?;
    let m = &cfg.detection;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut out = Vec::new();
    for scene in scenes {
        for obj in &scene.objects {
            if !rng.random_bool(m.detect_prob) {
                continue;
            }
            out.push(object_detection(&mut rng, scene, obj, m.score_true, m));
            if rng.random_bool(m.duplicate_rate) {
                out.push(object_detection(&mut rng, scene, obj, m.score_false, m));
            }
        }
        if rng.random_bool(m.fp_rate) {
            let side = uniform(&mut rng, cfg.object_size).min(scene.width.min(scene.height));
            let x0 = rng.random_range(0.0..=(scene.width - side));
            let y0 = rng.random_range(0.0..=(scene.height - side));
            let bbox = AxisAlignedBox::new(x0, y0, x0 + side, y0 + side).expect("positive side");
            let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string();
            let det_score = score(&mut rng, m.score_false);
            let top1 = random_grasp_in(&mut rng, &bbox);
            let top_score = score(&mut rng, [0.5, 1.0]);
            let grasps = with_distractors(&mut rng, top1, top_score, &bbox, m.extra_grasps);
            let record = DetectionRecord {
                image_id: scene.image_id.clone(),
                category,
                score: det_score,
                bbox,
                grasps,
            };
            let planted_tp = scene.objects.iter().any(|o| passes_gates(&record, scene, o));
            out.push(PlantedDetection {
                record,
                planted_tp,
                source_object: None,
            });
        }
    }
    Ok(out)
}

/// Splits scene ids into `(train, val)`; every `round(1/val_fraction)`-th
/// scene goes to validation.
pub fn split_ids(scenes: &[SceneAnnotation], val_fraction: f64) -> (Vec<String>, Vec<String>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let stride = if val_fraction > 0.0 {
        (1.0 / val_fraction).round().max(1.0) as usize
    } else {
        usize::MAX
    };
    for (n, s) in scenes.iter().enumerate() {
        if stride != usize::MAX && n % stride == stride - 1 {
            val.push(s.image_id.clone());
        } else {
            train.push(s.image_id.clone());
        }
    }
    (train, val)
}

/// Writes a full synthetic dataset: annotations, `index`, `train`/`val`
/// splits, `detections.jsonl` and `labels.jsonl`.
pub fn write_synthetic_dataset(out: &Path, cfg: &SynthConfig) -> Result<(), SynthError> {
    let scenes = generate_scenes(cfg)?;
    let dets = generate_detections(&scenes, cfg)?;
    write_dataset(out, &scenes)?;
    let (train, val) = split_ids(&scenes, cfg.val_fraction);
    let lines = |ids: &[String]| ids.iter().map(|i| format!("{i}\n")).collect::<String>();
    std::fs::write(out.join("train"), lines(&train))?;
    std::fs::write(out.join("val"), lines(&val))?;
    let records: Vec<DetectionRecord> = dets.iter().map(|d| d.record.clone()).collect();
    std::fs::write(out.join("detections.jsonl"), write_detection_file(&records))?;
    let mut labels = String::new();
    for d in &dets {
        labels.push_str(
            &serde_json::json!({
                "image_id": d.record.image_id,
                "planted_tp": d.planted_tp,
                "source_object": d.source_object,
            })
            .to_string(),
        );
        labels.push('\n');
    }
    std::fs::write(out.join("labels.jsonl"), labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::write_scene;

    #[test]
    fn same_seed_same_files() {
        let cfg = SynthConfig {
            n_scenes: 5,
            seed: 11,
            ..Default::default()
        };
        let a: Vec<_> = generate_scenes(&cfg).unwrap().iter().map(write_scene).collect();
        let b: Vec<_> = generate_scenes(&cfg).unwrap().iter().map(write_scene).collect();
        assert_eq!(a, b);
        let other = generate_scenes(&SynthConfig { seed: 12, ..cfg.clone() }).unwrap();
        assert_ne!(a, other.iter().map(write_scene).collect::<Vec<_>>());
    }

    #[test]
    fn zero_overlap_bias_keeps_boxes_apart() {
        let cfg = SynthConfig {
            n_scenes: 50,
            overlap_bias: 0.0,
            objects_per_scene: [3, 6],
            object_size: [40.0, 120.0],
            ..Default::default()
        };
        for s in generate_scenes(&cfg).unwrap() {
            for (i, a) in s.objects.iter().enumerate() {
                for b in &s.objects[i + 1..] {
                    assert_eq!(box_iou(&a.bbox, &b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn object_counts_in_range() {
        let cfg = SynthConfig {
            n_scenes: 100,
            objects_per_scene: [2, 5],
            ..Default::default()
        };
        let scenes = generate_scenes(&cfg).unwrap();
        assert!(scenes.iter().all(|s| (2..=5).contains(&s.objects.len())));
    }

    #[test]
    fn invalid_configs() {
        let bad = SynthConfig {
            objects_per_scene: [5, 2],
            ..Default::default()
        };
        assert!(matches!(generate_scenes(&bad), Err(SynthError::InvalidConfig(_))));
        let bad = SynthConfig {
            overlap_bias: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad: Result<SynthConfig, _> = serde_json::from_str(r#"{"sed": 1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn perfect_detector_plants_only_true_positives() {
        let cfg = SynthConfig {
            n_scenes: 10,
            detection: DetectionModel {
                detect_prob: 1.0,
                box_jitter: 0.0,
                grasp_jitter: 0.0,
                angle_jitter: 0.0,
                fp_rate: 0.0,
                duplicate_rate: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let scenes = generate_scenes(&cfg).unwrap();
        let dets = generate_detections(&scenes, &cfg).unwrap();
        assert_eq!(dets.len(), scenes.iter().map(|s| s.objects.len()).sum::<usize>());
        assert!(dets.iter().all(|d| d.planted_tp));
    }

    #[test]
    fn split_every_tenth() {
        let cfg = SynthConfig {
            n_scenes: 20,
            ..Default::default()
        };
        let scenes = generate_scenes(&cfg).unwrap();
        let (train, val) = split_ids(&scenes, 0.1);
        assert_eq!((train.len(), val.len()), (18, 2));
        assert_eq!(val[0], "synth_00009");
    }
}
