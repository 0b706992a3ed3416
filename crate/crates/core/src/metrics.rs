//! Grasp-aware detection evaluation.
//!
//! A detection is a true positive only when its class is right, its box
//! overlaps an unmatched ground-truth object with IoU above 0.5, and its
//! top-scoring grasp has Jaccard index above 0.25 and angle difference below
//! 30 degrees against at least one grasp owned by that object. On top of that
//! rule this module builds the FPPI–miss-rate curve, MR₀, MR₋₁, the
//! log-average miss rate and per-class average precision.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::SceneAnnotation;
use crate::geometry::{angle_distance, box_iou, rotated_iou, AxisAlignedBox};
use crate::suppression::{rank_by_score, ScoredGrasp};

/// FPPI reference points `10^(-2 + i/4)`, `i = 0..=8`, used for LAMR.
pub const LAMR_REFERENCE_FPPI: [f64; 9] = [
    0.01,
    0.01778279410038923,
    0.03162277660168379,
    0.05623413251903491,
    0.1,
    0.1778279410038923,
    0.31622776601683794,
    0.5623413251903491,
    1.0,
];

/// Miss rates are floored here before taking logarithms.
pub const MISS_RATE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("detection has no grasp candidates")]
    MissingGrasp,
    #[error("detection references unknown image '{0}'")]
    UnknownImage(String),
    #[error("image '{0}' appears twice in the ground truth")]
    DuplicateImage(String),
    #[error("category '{0}' has no ground-truth instances")]
    UnknownCategory(String),
    #[error("curve has no points")]
    EmptyCurve,
    #[error("ground truth contains no objects")]
    NoGroundTruth,
    #[error("detection file line {line}: {message}")]
    DetectionFile { line: usize, message: String },
}

/// One detected object with its grasp candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub category: String,
    pub score: f64,
    pub bbox: AxisAlignedBox,
    pub grasps: Vec<ScoredGrasp>,
}

impl DetectionRecord {
    /// Highest-scoring grasp candidate; the earliest wins ties.
    pub fn top1_grasp(&self) -> Option<&ScoredGrasp> {
        rank_by_score(self.grasps.iter().map(|g| g.score))
            .first()
            .map(|&i| &self.grasps[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Area under the all-point interpolated precision envelope.
    #[default]
    AllPoint,
    /// Mean interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub box_iou_thresh: f64,
    pub jaccard_thresh: f64,
    pub angle_thresh: f64,
    pub ignore_hard: bool,
    pub score_floor: Option<f64>,
    pub ap_mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            box_iou_thresh: 0.5,
            jaccard_thresh: 0.25,
            angle_thresh: 30.0,
            ignore_hard: false,
            score_floor: None,
            ap_mode: ApMode::AllPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Matched the ground-truth object at this position in the scene.
    TruePositive(usize),
    FalsePositive,
}

impl Verdict {
    pub fn is_tp(&self) -> bool {
        matches!(self, Verdict::TruePositive(_))
    }
}

/// Ground-truth objects of one scene already claimed by a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet(Vec<bool>);

impl MatchedSet {
    pub fn new(scene: &SceneAnnotation) -> Self {
        Self(vec![false; scene.objects.len()])
    }

    pub fn is_used(&self, object: usize) -> bool {
        self.0[object]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|u| **u).count()
    }
}

fn grasp_matches(top1: &ScoredGrasp, scene: &SceneAnnotation, object: usize, cfg: &EvalConfig) -> bool {
    let owner = scene.objects[object].index;
    scene
        .grasps_of(owner)
        .filter(|g| !(cfg.ignore_hard && g.hard))
        .any(|g| {
            rotated_iou(&top1.rect, &g.rect) > cfg.jaccard_thresh
                && angle_distance(top1.rect.theta(), g.rect.theta()) < cfg.angle_thresh
        })
}

/// Judges one detection against a scene, claiming the matched object in `used`.
///
/// Among unmatched objects of the same category whose box IoU exceeds the
/// threshold and whose grasps accept the detection's top-1 grasp, the one with
/// the largest box IoU is matched (earliest on ties). Detections of a scene
/// must be presented in descending score order.
pub fn adjudicate(
    det: &DetectionRecord,
    scene: &SceneAnnotation,
    used: &mut MatchedSet,
    cfg: &EvalConfig,
) -> Result<Verdict, MetricsError> {
    let top1 = det.top1_grasp().ok_or(MetricsError::MissingGrasp)?;
    let mut best: Option<(usize, f64)> = None;
    for (n, obj) in scene.objects.iter().enumerate() {
        if used.0[n] || obj.category != det.category {
            continue;
        }
        let iou = box_iou(&det.bbox, &obj.bbox);
        if iou <= cfg.box_iou_thresh || best.is_some_and(|(_, b)| iou <= b) {
            continue;
        }
        if grasp_matches(top1, scene, n, cfg) {
            best = Some((n, iou));
        }
    }
    Ok(match best {
        Some((n, _)) => {
            used.0[n] = true;
            Verdict::TruePositive(n)
        }
        None => Verdict::FalsePositive,
    })
}

/// Adjudication that treats a missing grasp as a false positive.
fn judge(det: &DetectionRecord, scene: &SceneAnnotation, used: &mut MatchedSet, cfg: &EvalConfig) -> bool {
    adjudicate(det, scene, used, cfg).is_ok_and(|v| v.is_tp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Operating points sorted by ascending threshold. The last point has an
/// infinite threshold and represents keeping no detections.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub points: Vec<CurvePoint>,
    pub n_images: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub curve: EvalCurve,
    pub mr0: f64,
    pub mr_minus1: f64,
    pub lamr: f64,
    pub per_class_ap: BTreeMap<String, f64>,
    pub map: f64,
}

struct Indexed<'a> {
    scenes: &'a [SceneAnnotation],
    by_id: HashMap<&'a str, usize>,
}

impl<'a> Indexed<'a> {
    fn new(scenes: &'a [SceneAnnotation]) -> Result<Self, MetricsError> {
        let mut by_id = HashMap::with_capacity(scenes.len());
        for (n, s) in scenes.iter().enumerate() {
            if by_id.insert(s.image_id.as_str(), n).is_some() {
                return Err(MetricsError::DuplicateImage(s.image_id.clone()));
            }
        }
        Ok(Self { scenes, by_id })
    }

    fn scene_of(&self, det: &DetectionRecord) -> Result<usize, MetricsError> {
        self.by_id
            .get(det.image_id.as_str())
            .copied()
            .ok_or_else(|| MetricsError::UnknownImage(det.image_id.clone()))
    }
}

fn above_floor<'a>(detections: &'a [DetectionRecord], cfg: &EvalConfig) -> Vec<&'a DetectionRecord> {
    detections
        .iter()
        .filter(|d| cfg.score_floor.is_none_or(|f| d.score >= f))
        .collect()
}

/// Greedily adjudicates detections in descending score order (input order on
/// ties) and returns `(score, is_tp)` in that order.
fn ranked_verdicts(
    dets: &[&DetectionRecord],
    idx: &Indexed<'_>,
    cfg: &EvalConfig,
) -> Result<Vec<(f64, bool)>, MetricsError> {
    let scene_of: Vec<usize> = dets.iter().map(|d| idx.scene_of(d)).collect::<Result<_, _>>()?;
    let mut used: Vec<MatchedSet> = idx.scenes.iter().map(MatchedSet::new).collect();
    Ok(rank_by_score(dets.iter().map(|d| d.score))
        .into_iter()
        .map(|i| {
            let s = scene_of[i];
            (dets[i].score, judge(dets[i], &idx.scenes[s], &mut used[s], cfg))
        })
        .collect())
}

/// Sweeps the score threshold over every distinct detection score.
///
/// Greedy matching in score order means the verdicts at a threshold are the
/// verdicts of the full ranking restricted to detections above it, so one
/// pass yields every operating point.
pub fn fppi_missrate_curve(
    detections: &[DetectionRecord],
    scenes: &[SceneAnnotation],
    cfg: &EvalConfig,
) -> Result<EvalCurve, MetricsError> {
    let idx = Indexed::new(scenes)?;
    let n_gt: usize = scenes.iter().map(|s| s.objects.len()).sum();
    if n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let n_images = scenes.len();
    let ranked = ranked_verdicts(&above_floor(detections, cfg), &idx, cfg)?;

    let point = |threshold: f64, tp: usize, fp: usize| CurvePoint {
        threshold,
        fppi: fp as f64 / n_images as f64,
        miss_rate: 1.0 - tp as f64 / n_gt as f64,
        tp,
        fp,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    for (k, &(score, is_tp)) in ranked.iter().enumerate() {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = ranked.get(k + 1).is_none_or(|next| next.0 != score);
        if group_ends {
            points.push(point(score, tp, fp));
        }
    }
    points.reverse();
    Ok(EvalCurve { points, n_images, n_gt })
}

/// Miss rate at the largest curve FPPI not exceeding `fppi_target`.
///
/// Miss rate only falls as FPPI grows, so this is the smallest miss rate among
/// points with `fppi <= fppi_target`. Returns 1 when no point qualifies.
pub fn mr_at(curve: &EvalCurve, fppi_target: f64) -> Result<f64, MetricsError> {
    if curve.points.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    Ok(curve
        .points
        .iter()
        .filter(|p| p.fppi <= fppi_target)
        .map(|p| p.miss_rate)
        .fold(1.0, f64::min))
}

/// Log-average miss rate over [`LAMR_REFERENCE_FPPI`].
pub fn lamr(curve: &EvalCurve) -> Result<f64, MetricsError> {
    let mut acc = 0.0;
    for r in LAMR_REFERENCE_FPPI {
        acc += mr_at(curve, r)?.max(MISS_RATE_FLOOR).ln();
    }
    Ok((acc / LAMR_REFERENCE_FPPI.len() as f64).exp())
}

/// Average precision from ranked TP flags against `n_gt` ground-truth objects.
pub fn average_precision(tp_flags: &[bool], n_gt: usize, mode: ApMode) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    // (tp count, precision) after each ranked detection
    let mut prefix = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        tp += usize::from(is_tp);
        prefix.push((tp, tp as f64 / (k + 1) as f64));
    }
    // best[j] = max precision over prefixes with tp >= j
    let mut best = vec![0.0f64; n_gt + 2];
    for &(tp, p) in &prefix {
        best[tp] = best[tp].max(p);
    }
    for j in (0..=n_gt).rev() {
        best[j] = best[j].max(best[j + 1]);
    }
    match mode {
        ApMode::AllPoint => (1..=n_gt).map(|j| best[j]).sum::<f64>() / n_gt as f64,
        ApMode::ElevenPoint => {
            // Smallest tp count whose recall reaches i/10.
            let sum: f64 = (0..=10usize).map(|i| best[(i * n_gt).div_ceil(10)]).sum();
            sum / 11.0
        }
    }
}

pub fn ap_with_grasp(
    detections: &[DetectionRecord],
    scenes: &[SceneAnnotation],
    category: &str,
    cfg: &EvalConfig,
) -> Result<f64, MetricsError> {
    let idx = Indexed::new(scenes)?;
    class_ap(detections, &idx, category, cfg)
}

fn class_ap(
    detections: &[DetectionRecord],
    idx: &Indexed<'_>,
    category: &str,
    cfg: &EvalConfig,
) -> Result<f64, MetricsError> {
    let n_gt = idx
        .scenes
        .iter()
        .flat_map(|s| &s.objects)
        .filter(|o| o.category == category)
        .count();
    if n_gt == 0 {
        return Err(MetricsError::UnknownCategory(category.to_string()));
    }
    let dets: Vec<&DetectionRecord> = above_floor(detections, cfg)
        .into_iter()
        .filter(|d| d.category == category)
        .collect();
    let flags: Vec<bool> = ranked_verdicts(&dets, idx, cfg)?.into_iter().map(|(_, t)| t).collect();
    Ok(average_precision(&flags, n_gt, cfg.ap_mode))
}

/// Per-class AP for every category with ground truth, and their mean.
pub fn map_with_grasp(
    detections: &[DetectionRecord],
    scenes: &[SceneAnnotation],
    cfg: &EvalConfig,
) -> Result<(BTreeMap<String, f64>, f64), MetricsError> {
    let idx = Indexed::new(scenes)?;
    let categories: Vec<&str> = {
        let mut c: Vec<&str> = scenes
            .iter()
            .flat_map(|s| &s.objects)
            .map(|o| o.category.as_str())
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if categories.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let aps: Vec<(String, f64)> = categories
        .par_iter()
        .map(|c| class_ap(detections, &idx, c, cfg).map(|ap| (c.to_string(), ap)))
        .collect::<Result<_, _>>()?;
    let per_class: BTreeMap<String, f64> = aps.into_iter().collect();
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((per_class, map))
}

/// Runs the whole protocol.
pub fn evaluate(
    detections: &[DetectionRecord],
    scenes: &[SceneAnnotation],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    let curve = fppi_missrate_curve(detections, scenes, cfg)?;
    let (per_class_ap, map) = map_with_grasp(detections, scenes, cfg)?;
    Ok(EvalReport {
        mr0: mr_at(&curve, 0.0)?,
        mr_minus1: mr_at(&curve, 0.1)?,
        lamr: lamr(&curve)?,
        curve,
        per_class_ap,
        map,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionEntry {
    category: String,
    score: f64,
    bbox: AxisAlignedBox,
    grasps: Vec<ScoredGrasp>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    image_id: String,
    detections: Vec<DetectionEntry>,
}

fn check_score(s: f64, what: &str) -> Result<(), String> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(format!("{what} score {s} outside [0, 1]"))
    }
}

/// Parses a line-delimited detection file, one image per JSON line.
pub fn parse_detection_file(text: &str) -> Result<Vec<DetectionRecord>, MetricsError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MetricsError::DetectionFile { line: n + 1, message };
        let rec: DetectionLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        for d in rec.detections {
            check_score(d.score, "detection").map_err(err)?;
            for g in &d.grasps {
                check_score(g.score, "grasp").map_err(err)?;
            }
            out.push(DetectionRecord {
                image_id: rec.image_id.clone(),
                category: d.category,
                score: d.score,
                bbox: d.bbox,
                grasps: d.grasps,
            });
        }
    }
    Ok(out)
}

/// Writes detections grouped by image id, images in order of first
/// appearance, detections in input order.
pub fn write_detection_file(records: &[DetectionRecord]) -> String {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<DetectionEntry>> = HashMap::new();
    for r in records {
        let entry = DetectionEntry {
            category: r.category.clone(),
            score: r.score,
            bbox: r.bbox,
            grasps: r.grasps.clone(),
        };
        groups
            .entry(r.image_id.as_str())
            .or_insert_with(|| {
                order.push(r.image_id.as_str());
                Vec::new()
            })
            .push(entry);
    }
    let mut out = String::new();
    for id in order {
        let line = DetectionLine {
            image_id: id.to_string(),
            detections: groups.remove(id).unwrap_or_default(),
        };
        out.push_str(&serde_json::to_string(&line).expect("detections serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{GraspAnnotation, ObjectAnnotation};
    use crate::geometry::OrientedRect;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> AxisAlignedBox {
        AxisAlignedBox::new(a, b, c, d).unwrap()
    }

    fn rect(x: f64, y: f64, w: f64, h: f64, t: f64) -> OrientedRect {
        OrientedRect::new(x, y, w, h, t).unwrap()
    }

    fn scene(id: &str) -> SceneAnnotation {
        SceneAnnotation {
            image_id: id.into(),
            width: 200.0,
            height: 200.0,
            objects: vec![ObjectAnnotation {
                index: 1,
                category: "mug".into(),
                bbox: bx(0.0, 0.0, 100.0, 100.0),
            }],
            grasps: vec![GraspAnnotation {
                rect: rect(50.0, 50.0, 20.0, 10.0, 0.0),
                hard: false,
                owner_index: 1,
            }],
        }
    }

    fn det(id: &str, score: f64, b: AxisAlignedBox, g: OrientedRect) -> DetectionRecord {
        DetectionRecord {
            image_id: id.into(),
            category: "mug".into(),
            score,
            bbox: b,
            grasps: vec![ScoredGrasp { rect: g, score: 0.9 }],
        }
    }

    // Box [0,0,100,75] against [0,0,100,100] has IoU 0.75.
    fn good_box() -> AxisAlignedBox {
        bx(0.0, 0.0, 100.0, 75.0)
    }

    #[test]
    fn thresholds_decide_verdict() {
        let s = scene("a");
        let cfg = EvalConfig::default();
        // Shifted 8 px along the long side and rotated 20 degrees.
        let ok = det("a", 0.9, good_box(), rect(58.0, 50.0, 20.0, 10.0, 20.0));
        assert!(rotated_iou(&ok.grasps[0].rect, &s.grasps[0].rect) > 0.25);
        let mut used = MatchedSet::new(&s);
        assert_eq!(adjudicate(&ok, &s, &mut used, &cfg), Ok(Verdict::TruePositive(0)));

        // A second detection on the claimed object is a duplicate.
        assert_eq!(adjudicate(&ok, &s, &mut used, &cfg), Ok(Verdict::FalsePositive));

        // Jaccard 0.2: shifted 13.33 px gives overlap 6.67 of union 33.3.
        let far = det("a", 0.9, good_box(), rect(50.0 + 40.0 / 3.0, 50.0, 20.0, 10.0, 0.0));
        let j = rotated_iou(&far.grasps[0].rect, &s.grasps[0].rect);
        assert!((j - 0.2).abs() < 1e-12);
        assert_eq!(adjudicate(&far, &s, &mut MatchedSet::new(&s), &cfg), Ok(Verdict::FalsePositive));

        let tilted = det("a", 0.9, good_box(), rect(50.0, 50.0, 20.0, 10.0, 30.0));
        assert_eq!(adjudicate(&tilted, &s, &mut MatchedSet::new(&s), &cfg), Ok(Verdict::FalsePositive));

        let mut wrong_class = ok.clone();
        wrong_class.category = "pen".into();
        assert_eq!(adjudicate(&wrong_class, &s, &mut MatchedSet::new(&s), &cfg), Ok(Verdict::FalsePositive));

        let mut bare = ok.clone();
        bare.grasps.clear();
        assert_eq!(adjudicate(&bare, &s, &mut MatchedSet::new(&s), &cfg), Err(MetricsError::MissingGrasp));
    }

    #[test]
    fn ignore_hard_excludes_targets() {
        let mut s = scene("a");
        s.grasps[0].hard = true;
        let d = det("a", 0.9, good_box(), rect(50.0, 50.0, 20.0, 10.0, 0.0));
        let cfg = EvalConfig::default();
        assert!(adjudicate(&d, &s, &mut MatchedSet::new(&s), &cfg).unwrap().is_tp());
        let cfg = EvalConfig {
            ignore_hard: true,
            ..cfg
        };
        assert!(!adjudicate(&d, &s, &mut MatchedSet::new(&s), &cfg).unwrap().is_tp());
    }

    #[test]
    fn top1_is_max_score() {
        let mut d = det("a", 0.9, good_box(), rect(0.0, 0.0, 2.0, 1.0, 0.0));
        d.grasps.push(ScoredGrasp {
            rect: rect(1.0, 1.0, 2.0, 1.0, 0.0),
            score: 0.95,
        });
        d.grasps.push(ScoredGrasp {
            rect: rect(2.0, 2.0, 2.0, 1.0, 0.0),
            score: 0.95,
        });
        assert_eq!(d.top1_grasp().unwrap().rect.x(), 1.0);
    }

    #[test]
    fn perfect_detector_curve() {
        let scenes = [scene("a"), scene("b")];
        let g = rect(50.0, 50.0, 20.0, 10.0, 0.0);
        let dets = [det("a", 0.9, good_box(), g), det("b", 0.8, good_box(), g)];
        let curve = fppi_missrate_curve(&dets, &scenes, &EvalConfig::default()).unwrap();
        let last = curve.points[0];
        assert_eq!((last.threshold, last.fppi, last.miss_rate), (0.8, 0.0, 0.0));
        assert_eq!(curve.points.last().unwrap().threshold, f64::INFINITY);
        assert_eq!(mr_at(&curve, 0.0).unwrap(), 0.0);
        assert!((lamr(&curve).unwrap() - MISS_RATE_FLOOR).abs() < 1e-20);
    }

    #[test]
    fn false_positives_only() {
        let scenes = [scene("a")];
        let g = rect(150.0, 150.0, 20.0, 10.0, 0.0);
        let dets = [det("a", 0.9, bx(120.0, 120.0, 190.0, 190.0), g), det("a", 0.4, bx(110.0, 110.0, 180.0, 180.0), g)];
        let curve = fppi_missrate_curve(&dets, &scenes, &EvalConfig::default()).unwrap();
        assert!(curve.points.iter().all(|p| p.miss_rate == 1.0));
        assert_eq!(curve.points[0].fppi, 2.0);
        let (aps, map) = map_with_grasp(&dets, &scenes, &EvalConfig::default()).unwrap();
        assert_eq!(aps["mug"], 0.0);
        assert_eq!(map, 0.0);
    }

    #[test]
    fn tied_scores_form_one_point() {
        let scenes = [scene("a")];
        let g = rect(50.0, 50.0, 20.0, 10.0, 0.0);
        let dets = [det("a", 0.5, good_box(), g), det("a", 0.5, good_box(), g)];
        let curve = fppi_missrate_curve(&dets, &scenes, &EvalConfig::default()).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!((curve.points[0].tp, curve.points[0].fp), (1, 1));
    }

    #[test]
    fn unknown_image_and_category() {
        let scenes = [scene("a")];
        let g = rect(50.0, 50.0, 20.0, 10.0, 0.0);
        let dets = [det("zzz", 0.5, good_box(), g)];
        assert_eq!(
            fppi_missrate_curve(&dets, &scenes, &EvalConfig::default()),
            Err(MetricsError::UnknownImage("zzz".into()))
        );
        assert_eq!(
            ap_with_grasp(&[], &scenes, "pen", &EvalConfig::default()),
            Err(MetricsError::UnknownCategory("pen".into()))
        );
        let dup = [scene("a"), scene("a")];
        assert!(matches!(
            fppi_missrate_curve(&[], &dup, &EvalConfig::default()),
            Err(MetricsError::DuplicateImage(_))
        ));
    }

    #[test]
    fn lamr_of_constant_curve() {
        let curve = EvalCurve {
            points: vec![
                CurvePoint {
                    threshold: 0.1,
                    fppi: 5.0,
                    miss_rate: 0.37,
                    tp: 0,
                    fp: 0,
                },
                CurvePoint {
                    threshold: 0.9,
                    fppi: 0.0,
                    miss_rate: 0.37,
                    tp: 0,
                    fp: 0,
                },
            ],
            n_images: 1,
            n_gt: 1,
        };
        assert!((lamr(&curve).unwrap() - 0.37).abs() < 1e-12);
        let single = EvalCurve {
            points: vec![CurvePoint {
                threshold: 0.5,
                fppi: 0.0,
                miss_rate: 0.5,
                tp: 0,
                fp: 0,
            }],
            n_images: 1,
            n_gt: 1,
        };
        assert_eq!(mr_at(&single, 0.0).unwrap(), 0.5);
        let empty = EvalCurve {
            points: vec![],
            n_images: 0,
            n_gt: 0,
        };
        assert_eq!(lamr(&empty), Err(MetricsError::EmptyCurve));
    }

    #[test]
    fn ap_envelope_by_hand() {
        // TP,FP,TP,TP,FP over 4 ground truths: precision 1, 1/2, 2/3, 3/4, 3/5 at
        // recall 1/4, 1/4, 1/2, 3/4, 3/4; envelope 1, 3/4, 3/4, 0.
        let ap = average_precision(&[true, false, true, true, false], 4, ApMode::AllPoint);
        assert_eq!(ap, 0.625);
        // Eleven-point: recall 0..0.2 → 1; 0.3..0.7 → 0.75; 0.8..1 → 0.
        let ap11 = average_precision(&[true, false, true, true, false], 4, ApMode::ElevenPoint);
        assert!((ap11 - (3.0 + 5.0 * 0.75) / 11.0).abs() < 1e-15);
        assert_eq!(average_precision(&[true, true], 2, ApMode::AllPoint), 1.0);
        assert_eq!(average_precision(&[false, false], 2, ApMode::AllPoint), 0.0);
        assert_eq!(average_precision(&[], 2, ApMode::AllPoint), 0.0);
    }

    #[test]
    fn detection_file_round_trip() {
        let g = rect(50.0, 50.0, 20.0, 10.0, 0.0);
        let dets = vec![det("a", 0.9, good_box(), g), det("b", 0.5, good_box(), g), det("a", 0.3, good_box(), g)];
        let text = write_detection_file(&dets);
        assert_eq!(text.lines().count(), 2);
        let back = parse_detection_file(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].score, 0.3);
        let bad = r#"{"image_id":"a","detections":[{"category":"x","score":1.5,"bbox":[0,0,1,1],"grasps":[]}]}"#;
        assert!(matches!(
            parse_detection_file(&format!("\n{bad}\n")),
            Err(MetricsError::DetectionFile { line: 2, .. })
        ));
        let bad_rect = r#"{"image_id":"a","detections":[{"category":"x","score":0.5,"bbox":[0,0,1,1],"grasps":[{"rect":[0,0,-1,1,0],"score":0.5}]}]}"#;
        assert!(parse_detection_file(bad_rect).is_err());
    }
}
