//! Slow reference implementations used to cross-check the library.
//!
//! Each function recomputes its answer by exhaustive search and shares no
//! control flow with the code it checks.

use std::collections::BTreeMap;

use rand::Rng;

use crate::anchor_codec::{encode, AnchorGrid};
use crate::assignment::{AnchorLabel, AnchorTarget};
use crate::dataset_io::{GraspAnnotation, ObjectAnnotation, SceneAnnotation};
use crate::geometry::{angle_distance, box_iou, rotated_iou, AxisAlignedBox, OrientedRect};
use crate::metrics::{ApMode, CurvePoint, DetectionRecord, EvalConfig, EvalCurve, EvalReport, LAMR_REFERENCE_FPPI, MISS_RATE_FLOOR};
use crate::suppression::{ScoredBox, ScoredGrasp};

/// Rectangle in its own frame, for repeated point tests.
struct Frame {
    x: f64,
    y: f64,
    s: f64,
    c: f64,
    hw: f64,
    hh: f64,
}

impl Frame {
    fn new(r: &OrientedRect) -> Self {
        let (s, c) = r.theta().to_radians().sin_cos();
        Self {
            x: r.x(),
            y: r.y(),
            s,
            c,
            hw: r.w() / 2.0,
            hh: r.h() / 2.0,
        }
    }

    fn inside(&self, p: (f64, f64)) -> bool {
        let dx = p.0 - self.x;
        let dy = p.1 - self.y;
        (dx * self.c + dy * self.s).abs() <= self.hw && (-dx * self.s + dy * self.c).abs() <= self.hh
    }
}

/// Rotated IoU by stratified point sampling over the joint bounding square
/// with `n * n` strata.
pub fn monte_carlo_iou<R: Rng>(a: &OrientedRect, b: &OrientedRect, n: usize, rng: &mut R) -> f64 {
    let reach = |r: &OrientedRect| r.w().hypot(r.h()) / 2.0;
    let x0 = (a.x() - reach(a)).min(b.x() - reach(b));
    let x1 = (a.x() + reach(a)).max(b.x() + reach(b));
    let y0 = (a.y() - reach(a)).min(b.y() - reach(b));
    let y1 = (a.y() + reach(a)).max(b.y() + reach(b));
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (fa, fb) = (Frame::new(a), Frame::new(b));
    let (mut in_a, mut in_b, mut both) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            let p = (
                x0 + (i as f64 + rng.random::<f64>()) * dx,
                y0 + (j as f64 + rng.random::<f64>()) * dy,
            );
            let (ia, ib) = (fa.inside(p), fb.inside(p));
            in_a += u64::from(ia);
            in_b += u64::from(ib);
            both += u64::from(ia && ib);
        }
    }
    let union = in_a + in_b - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

/// Picks the best remaining candidate, drops everything overlapping it, repeats.
fn exhaustive_nms<F>(scores: &[f64], threshold: f64, iou: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> f64,
{
    let mut alive: Vec<usize> = (0..scores.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut top = alive[0];
        for &i in &alive {
            if scores[i] > scores[top] {
                top = i;
            }
        }
        kept.push(top);
        alive.retain(|&i| i != top && iou(top, i) <= threshold);
    }
    kept
}

pub fn nms_grasps_reference(c: &[ScoredGrasp], threshold: f64) -> Vec<usize> {
    let scores: Vec<f64> = c.iter().map(|g| g.score).collect();
    exhaustive_nms(&scores, threshold, |i, j| rotated_iou(&c[i].rect, &c[j].rect))
}

pub fn nms_boxes_reference(c: &[ScoredBox], threshold: f64) -> Vec<usize> {
    let scores: Vec<f64> = c.iter().map(|b| b.score).collect();
    exhaustive_nms(&scores, threshold, |i, j| {
        if c[i].category == c[j].category {
            box_iou(&c[i].bbox, &c[j].bbox)
        } else {
            0.0
        }
    })
}

pub fn match_rois_reference(rois: &[AxisAlignedBox], objects: &[ObjectAnnotation]) -> Vec<Option<usize>> {
    rois.iter()
        .map(|r| {
            let ious: Vec<f64> = objects.iter().map(|o| box_iou(r, &o.bbox)).collect();
            let top = ious.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top > 0.5 {
                ious.iter().position(|&v| v == top)
            } else {
                None
            }
        })
        .collect()
}

/// Anchor-centric recomputation of the training labels: each anchor collects
/// the grasps that would pick it and keeps the closest one in angle.
pub fn anchor_targets_reference(grid: &AnchorGrid, gt: &[GraspAnnotation], k: usize, exclude_hard: bool) -> Vec<AnchorTarget> {
    let spec = grid.spec();
    let roi = grid.roi();
    let cell = |x: f64, y: f64| -> (usize, usize) {
        let i = ((x - roi.x_min()) / roi.width() * spec.grid_w as f64).floor() as usize;
        let j = ((y - roi.y_min()) / roi.height() * spec.grid_h as f64).floor() as usize;
        (i.min(spec.grid_w - 1), j.min(spec.grid_h - 1))
    };
    let anchors = grid.anchors();
    let active: Vec<(usize, &GraspAnnotation)> =
        gt.iter().enumerate().filter(|(_, g)| !(exclude_hard && g.hard)).collect();
    let home = |g: &GraspAnnotation| -> usize {
        let (i, j) = cell(g.rect.x(), g.rect.y());
        let base = (j * spec.grid_w + i) * spec.k;
        let d: Vec<f64> = (0..spec.k).map(|m| angle_distance(g.rect.theta(), anchors[base + m].theta())).collect();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        base + d.iter().position(|&v| v == lo).unwrap()
    };
    let homes: Vec<(usize, usize)> = active.iter().map(|(n, g)| (*n, home(g))).collect();
    (0..anchors.len())
        .map(|a| {
            let cell_of_a = a / spec.k;
            let claimants: Vec<usize> = homes.iter().filter(|(_, h)| *h == a).map(|(n, _)| *n).collect();
            let dist = |n: usize| angle_distance(gt[n].rect.theta(), anchors[a].theta());
            let winner = claimants.iter().copied().reduce(|w, n| if dist(n) < dist(w) { n } else { w });
            match winner {
                Some(n) => AnchorTarget {
                    anchor: a,
                    label: AnchorLabel::Graspable,
                    offsets: Some(encode(&gt[n].rect, &anchors[a], k)),
                    gt: Some(n),
                },
                None => AnchorTarget {
                    anchor: a,
                    label: if homes.iter().any(|(_, h)| h / spec.k == cell_of_a) {
                        AnchorLabel::Ignore
                    } else {
                        AnchorLabel::Ungraspable
                    },
                    offsets: None,
                    gt: None,
                },
            }
        })
        .collect()
}

fn accepts(det: &DetectionRecord, scene: &SceneAnnotation, obj: &ObjectAnnotation, cfg: &EvalConfig) -> bool {
    if det.category != obj.category || box_iou(&det.bbox, &obj.bbox) <= cfg.box_iou_thresh {
        return false;
    }
    let Some(top) = det.grasps.iter().reduce(|a, b| if b.score > a.score { b } else { a }) else {
        return false;
    };
    scene
        .grasps
        .iter()
        .filter(|g| g.owner_index == obj.index && !(cfg.ignore_hard && g.hard))
        .any(|g| rotated_iou(&top.rect, &g.rect) > cfg.jaccard_thresh && angle_distance(top.rect.theta(), g.rect.theta()) < cfg.angle_thresh)
}

/// Greedy matching of `dets` from scratch; returns the TP flag of each
/// detection in processing order.
fn greedy(dets: &[&DetectionRecord], scenes: &[SceneAnnotation], cfg: &EvalConfig) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Insertion sort keeps earlier detections first among equal scores.
    for a in 1..order.len() {
        let mut b = a;
        while b > 0 && dets[order[b - 1]].score < dets[order[b]].score {
            order.swap(b - 1, b);
            b -= 1;
        }
    }
    let mut claimed: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    order
        .iter()
        .map(|&i| {
            let d = dets[i];
            let s = scenes.iter().position(|s| s.image_id == d.image_id).expect("known image");
            let scene = &scenes[s];
            let mut pick: Option<usize> = None;
            for (n, o) in scene.objects.iter().enumerate() {
                if claimed.contains_key(&(s, n)) || !accepts(d, scene, o, cfg) {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(p) => box_iou(&d.bbox, &o.bbox) > box_iou(&d.bbox, &scene.objects[p].bbox),
                };
                if better {
                    pick = Some(n);
                }
            }
            if let Some(n) = pick {
                claimed.insert((s, n), ());
            }
            pick.is_some()
        })
        .collect()
}

fn kept<'a>(dets: &'a [DetectionRecord], cfg: &EvalConfig) -> Vec<&'a DetectionRecord> {
    dets.iter()
        .filter(|d| match cfg.score_floor {
            Some(f) => d.score >= f,
            None => true,
        })
        .collect()
}

/// Reruns the whole matching at every candidate threshold.
pub fn curve_reference(dets: &[DetectionRecord], scenes: &[SceneAnnotation], cfg: &EvalConfig) -> EvalCurve {
    let pool = kept(dets, cfg);
    let n_gt: usize = scenes.iter().map(|s| s.objects.len()).sum();
    let n_images = scenes.len();
    let mut thresholds: Vec<f64> = pool.iter().map(|d| d.score).collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let points = thresholds
        .into_iter()
        .map(|t| {
            let above: Vec<&DetectionRecord> = pool.iter().copied().filter(|d| d.score >= t).collect();
            let flags = greedy(&above, scenes, cfg);
            let tp = flags.iter().filter(|&&f| f).count();
            let fp = flags.len() - tp;
            CurvePoint {
                threshold: t,
                fppi: fp as f64 / n_images as f64,
                miss_rate: 1.0 - tp as f64 / n_gt as f64,
                tp,
                fp,
            }
        })
        .collect();
    EvalCurve { points, n_images, n_gt }
}

fn mr_reference(curve: &EvalCurve, target: f64) -> f64 {
    let mut best = 1.0f64;
    for p in &curve.points {
        if p.fppi <= target && p.miss_rate < best {
            best = p.miss_rate;
        }
    }
    best
}

/// AP for one class by rerunning the matching on every rank prefix.
pub fn ap_reference(dets: &[DetectionRecord], scenes: &[SceneAnnotation], category: &str, cfg: &EvalConfig) -> f64 {
    let n_gt = scenes.iter().flat_map(|s| &s.objects).filter(|o| o.category == category).count();
    let mut pool: Vec<&DetectionRecord> = kept(dets, cfg).into_iter().filter(|d| d.category == category).collect();
    // Stable descending order fixes which detections form each prefix.
    pool.sort_by(|a, b| b.score.total_cmp(&a.score));
    let prefixes: Vec<(usize, f64)> = (1..=pool.len())
        .map(|len| {
            let tp = greedy(&pool[..len], scenes, cfg).iter().filter(|&&f| f).count();
            (tp, tp as f64 / len as f64)
        })
        .collect();
    let best_from = |j: usize| prefixes.iter().filter(|(tp, _)| *tp >= j).map(|(_, p)| *p).fold(0.0, f64::max);
    match cfg.ap_mode {
        ApMode::AllPoint => {
            let mut sum = 0.0;
            for j in 1..=n_gt {
                sum += best_from(j);
            }
            sum / n_gt as f64
        }
        ApMode::ElevenPoint => {
            let mut sum = 0.0;
            for i in 0..=10usize {
                let p = prefixes
                    .iter()
                    .filter(|(tp, _)| 10 * tp >= i * n_gt)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max);
                sum += p;
            }
            sum / 11.0
        }
    }
}

/// Full protocol by exhaustive recomputation.
pub fn evaluate_reference(dets: &[DetectionRecord], scenes: &[SceneAnnotation], cfg: &EvalConfig) -> EvalReport {
    let curve = curve_reference(dets, scenes, cfg);
    let mut acc = 0.0;
    for r in LAMR_REFERENCE_FPPI {
        acc += mr_reference(&curve, r).max(MISS_RATE_FLOOR).ln();
    }
    let lamr = (acc / LAMR_REFERENCE_FPPI.len() as f64).exp();
    let mut per_class_ap = BTreeMap::new();
    for s in scenes {
        for o in &s.objects {
            if !per_class_ap.contains_key(&o.category) {
                per_class_ap.insert(o.category.clone(), ap_reference(dets, scenes, &o.category, cfg));
            }
        }
    }
    let map = per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64;
    EvalReport {
        mr0: mr_reference(&curve, 0.0),
        mr_minus1: mr_reference(&curve, 0.1),
        lamr,
        curve,
        per_class_ap,
        map,
    }
}
