//! Ground-truth and detection matching rules.
//!
//! RoIs are matched to ground-truth objects by box IoU, each matched RoI
//! inherits only the grasps its object owns, and anchor targets are built
//! from those grasps. The nearest-center rules used by the cascaded baseline
//! and by execution-time grasp selection also live here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor_codec::{encode, AnchorGrid, GraspOffsets};
use crate::dataset_io::{GraspAnnotation, ObjectAnnotation, SceneAnnotation};
use crate::geometry::{angle_distance, box_iou, AxisAlignedBox, OrientedRect};
use crate::metrics::DetectionRecord;
use crate::suppression::ScoredGrasp;

/// Minimum box IoU (exclusive) for an RoI to match an object.
pub const ROI_MATCH_IOU: f64 = 0.5;
/// Score gate (exclusive) of the cascaded baseline's grasp-to-object rule.
pub const BASELINE_SCORE_THRESH: f64 = 0.25;
/// Score gate (exclusive) when picking the grasp to execute.
pub const EXECUTION_SCORE_THRESH: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("ground-truth grasp {grasp} has its center ({x}, {y}) outside the RoI")]
    GraspOutsideRoi { grasp: usize, x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiMatch {
    pub roi_index: usize,
    /// Position of the matched object in the object list.
    pub matched: Option<usize>,
    /// IoU with the matched object, or the best IoU seen when unmatched.
    pub iou: f64,
}

/// Matches each RoI to the object with the largest box IoU above 0.5.
pub fn match_rois(rois: &[AxisAlignedBox], objects: &[ObjectAnnotation]) -> Vec<RoiMatch> {
    rois.iter()
        .enumerate()
        .map(|(roi_index, roi)| {
            let mut best: Option<(usize, f64)> = None;
            let mut best_any = 0.0f64;
            for (n, o) in objects.iter().enumerate() {
                let iou = box_iou(roi, &o.bbox);
                best_any = best_any.max(iou);
                if iou > ROI_MATCH_IOU && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((n, iou));
                }
            }
            RoiMatch {
                roi_index,
                matched: best.map(|(n, _)| n),
                iou: best.map_or(best_any, |(_, iou)| iou),
            }
        })
        .collect()
}

/// Grasps owned by the object an RoI matched; empty when unmatched.
pub fn roi_ground_truth(roi_match: &RoiMatch, scene: &SceneAnnotation) -> Vec<GraspAnnotation> {
    let Some(obj) = roi_match.matched.and_then(|n| scene.objects.get(n)) else {
        return Vec::new();
    };
    scene.grasps_of(obj.index).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorLabel {
    Graspable,
    Ungraspable,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorTarget {
    pub anchor: usize,
    pub label: AnchorLabel,
    /// Present exactly when `label` is graspable.
    pub offsets: Option<GraspOffsets>,
    /// Position in the ground-truth list of the grasp this anchor regresses to.
    pub gt: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnchorTargetOptions {
    pub exclude_hard: bool,
}

/// Training labels for every anchor of a grid.
///
/// Each grasp claims the anchor of closest orientation in the cell holding
/// its center. When two grasps claim the same anchor the one closer in angle
/// wins, ties going to the earlier grasp. Other anchors in occupied cells are
/// ignored; anchors in empty cells are ungraspable.
pub fn anchor_targets(
    grid: &AnchorGrid,
    gt: &[GraspAnnotation],
    k: usize,
    opts: AnchorTargetOptions,
) -> Result<Vec<AnchorTarget>, AssignmentError> {
    let spec = grid.spec();
    let anchors = grid.anchors();
    let mut occupied = vec![false; spec.grid_w * spec.grid_h];
    // (gt position, angle distance) of the current claimant per anchor.
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; anchors.len()];

    for (n, g) in gt.iter().enumerate() {
        if opts.exclude_hard && g.hard {
            continue;
        }
        let (x, y) = g.rect.center();
        let (i, j) = grid
            .cell_of((x, y))
            .ok_or(AssignmentError::GraspOutsideRoi { grasp: n, x, y })?;
        occupied[j * spec.grid_w + i] = true;

        let mut best = (grid.flat_index(i, j, 0), f64::INFINITY);
        for m in 0..spec.k {
            let idx = grid.flat_index(i, j, m);
            let d = angle_distance(g.rect.theta(), anchors[idx].theta());
            if d < best.1 {
                best = (idx, d);
            }
        }
        let (idx, d) = best;
        if claims[idx].is_none_or(|(_, cur)| d < cur) {
            claims[idx] = Some((n, d));
        }
    }

    Ok(anchors
        .iter()
        .enumerate()
        .map(|(idx, anchor)| {
            let cell = idx / spec.k;
            match claims[idx] {
                Some((n, _)) => AnchorTarget {
                    anchor: idx,
                    label: AnchorLabel::Graspable,
                    offsets: Some(encode(&gt[n].rect, anchor, k)),
                    gt: Some(n),
                },
                None => AnchorTarget {
                    anchor: idx,
                    label: if occupied[cell] {
                        AnchorLabel::Ignore
                    } else {
                        AnchorLabel::Ungraspable
                    },
                    offsets: None,
                    gt: None,
                },
            }
        })
        .collect())
}

fn center_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn nearest_above(center: (f64, f64), grasps: &[ScoredGrasp], min_score: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (n, g) in grasps.iter().enumerate() {
        if g.score <= min_score {
            continue;
        }
        let d = center_distance(center, g.rect.center());
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((n, d));
        }
    }
    best.map(|(n, _)| n)
}

/// For each object box, the position of the nearest grasp whose score
/// exceeds `min_score`. A grasp may serve several objects.
pub fn baseline_assign(objects: &[AxisAlignedBox], grasps: &[ScoredGrasp], min_score: f64) -> Vec<Option<usize>> {
    objects
        .iter()
        .map(|b| nearest_above(b.center(), grasps, min_score))
        .collect()
}

/// The candidate nearest the detection's box center among those scoring
/// above `min_score`.
pub fn select_execution_grasp(target: &DetectionRecord, min_score: f64) -> Option<OrientedRect> {
    nearest_above(target.bbox.center(), &target.grasps, min_score).map(|n| target.grasps[n].rect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor_codec::{build_anchor_grid, AnchorSpec};

    fn bx(a: f64, b: f64, c: f64, d: f64) -> AxisAlignedBox {
        AxisAlignedBox::new(a, b, c, d).unwrap()
    }

    fn rect(x: f64, y: f64, w: f64, h: f64, t: f64) -> OrientedRect {
        OrientedRect::new(x, y, w, h, t).unwrap()
    }

    fn obj(index: u32, b: AxisAlignedBox) -> ObjectAnnotation {
        ObjectAnnotation {
            index,
            category: "thing".into(),
            bbox: b,
        }
    }

    fn sg(x: f64, y: f64, score: f64) -> ScoredGrasp {
        ScoredGrasp {
            rect: rect(x, y, 10.0, 5.0, 0.0),
            score,
        }
    }

    #[test]
    fn roi_matching() {
        let objects = vec![obj(1, bx(0.0, 0.0, 10.0, 10.0)), obj(2, bx(100.0, 0.0, 110.0, 10.0))];
        let m = match_rois(&[bx(0.0, 0.0, 10.0, 10.0)], &objects);
        assert_eq!(m[0].matched, Some(0));
        assert_eq!(m[0].iou, 1.0);

        // IoU 0.4 with the only nearby object.
        let m = match_rois(&[bx(0.0, 0.0, 10.0, 4.0)], &objects);
        assert_eq!(m[0].matched, None);
        assert!((m[0].iou - 0.4).abs() < 1e-12);
    }

    #[test]
    fn roi_takes_largest_iou() {
        // RoI overlaps A by 75 (union 120, IoU 0.625) and B by 95 (union 100, IoU 0.95).
        let objects = vec![obj(1, bx(0.0, 0.0, 10.0, 10.0)), obj(2, bx(2.0, 0.0, 12.0, 10.0))];
        let m = match_rois(&[bx(2.5, 0.0, 12.0, 10.0)], &objects);
        assert_eq!(m[0].matched, Some(1));
        assert!((m[0].iou - 0.95).abs() < 1e-12);
    }

    #[test]
    fn ownership_filters_contained_grasps() {
        let scene = SceneAnnotation {
            image_id: "fig3".into(),
            width: 200.0,
            height: 200.0,
            objects: vec![obj(1, bx(10.0, 10.0, 110.0, 110.0)), obj(2, bx(40.0, 40.0, 80.0, 80.0))],
            grasps: vec![
                GraspAnnotation {
                    rect: rect(30.0, 30.0, 20.0, 10.0, 0.0),
                    hard: false,
                    owner_index: 1,
                },
                GraspAnnotation {
                    rect: rect(60.0, 60.0, 20.0, 10.0, 45.0),
                    hard: false,
                    owner_index: 2,
                },
            ],
        };
        let m = match_rois(&[bx(10.0, 10.0, 110.0, 110.0)], &scene.objects);
        let gt = roi_ground_truth(&m[0], &scene);
        assert_eq!(gt, vec![scene.grasps[0].clone()]);

        let none = RoiMatch {
            roi_index: 0,
            matched: None,
            iou: 0.0,
        };
        assert!(roi_ground_truth(&none, &scene).is_empty());
        let mut bare = scene.clone();
        bare.grasps.clear();
        assert!(roi_ground_truth(&m[0], &bare).is_empty());
    }

    fn grid_7x7() -> AnchorGrid {
        build_anchor_grid(bx(0.0, 0.0, 70.0, 70.0), AnchorSpec::new(7, 7, 4, 12.0).unwrap()).unwrap()
    }

    #[test]
    fn empty_ground_truth_is_all_negative() {
        let t = anchor_targets(&grid_7x7(), &[], 4, Default::default()).unwrap();
        assert_eq!(t.len(), 196);
        assert!(t.iter().all(|a| a.label == AnchorLabel::Ungraspable && a.offsets.is_none()));
    }

    #[test]
    fn exact_anchor_hit_has_zero_offsets() {
        let grid = grid_7x7();
        let g = GraspAnnotation {
            rect: rect(25.0, 35.0, 12.0, 12.0, 22.5),
            hard: false,
            owner_index: 1,
        };
        let t = anchor_targets(&grid, &[g], 4, Default::default()).unwrap();
        let idx = grid.flat_index(2, 3, 2);
        assert_eq!(t[idx].label, AnchorLabel::Graspable);
        assert_eq!(t[idx].offsets, Some(GraspOffsets::default()));
        for m in [0, 1, 3] {
            assert_eq!(t[grid.flat_index(2, 3, m)].label, AnchorLabel::Ignore);
        }
        assert_eq!(t.iter().filter(|a| a.label == AnchorLabel::Ungraspable).count(), 192);
    }

    #[test]
    fn orientation_tie_goes_to_lower_index() {
        let grid = grid_7x7();
        let g = GraspAnnotation {
            rect: rect(5.0, 5.0, 10.0, 5.0, 0.0),
            hard: false,
            owner_index: 1,
        };
        let t = anchor_targets(&grid, &[g], 4, Default::default()).unwrap();
        assert_eq!(t[grid.flat_index(0, 0, 1)].label, AnchorLabel::Graspable);
        assert_eq!(t[grid.flat_index(0, 0, 2)].label, AnchorLabel::Ignore);
    }

    #[test]
    fn grasp_outside_roi() {
        let g = GraspAnnotation {
            rect: rect(75.0, 5.0, 10.0, 5.0, 0.0),
            hard: false,
            owner_index: 1,
        };
        assert!(matches!(
            anchor_targets(&grid_7x7(), &[g], 4, Default::default()),
            Err(AssignmentError::GraspOutsideRoi { grasp: 0, .. })
        ));
    }

    #[test]
    fn hard_grasps_can_be_excluded() {
        let g = GraspAnnotation {
            rect: rect(5.0, 5.0, 10.0, 5.0, 0.0),
            hard: true,
            owner_index: 1,
        };
        let grid = grid_7x7();
        let with = anchor_targets(&grid, std::slice::from_ref(&g), 4, Default::default()).unwrap();
        assert_eq!(with.iter().filter(|a| a.label == AnchorLabel::Graspable).count(), 1);
        let without = anchor_targets(&grid, &[g], 4, AnchorTargetOptions { exclude_hard: true }).unwrap();
        assert!(without.iter().all(|a| a.label == AnchorLabel::Ungraspable));
    }

    #[test]
    fn baseline_rules() {
        let objects = [bx(0.0, 0.0, 10.0, 10.0)];
        assert_eq!(baseline_assign(&objects, &[sg(500.0, 500.0, 0.3)], BASELINE_SCORE_THRESH), vec![Some(0)]);
        assert_eq!(
            baseline_assign(&objects, &[sg(5.0, 5.0, 0.25), sg(6.0, 5.0, 0.1)], BASELINE_SCORE_THRESH),
            vec![None]
        );
        let near_far = [sg(5.0, 25.0, 0.9), sg(15.0, 5.0, 0.9)];
        assert_eq!(baseline_assign(&objects, &near_far, BASELINE_SCORE_THRESH), vec![Some(1)]);
        // Two objects may share one grasp.
        let two = [bx(0.0, 0.0, 10.0, 10.0), bx(2.0, 0.0, 12.0, 10.0)];
        assert_eq!(baseline_assign(&two, &[sg(6.0, 5.0, 0.5)], BASELINE_SCORE_THRESH), vec![Some(0), Some(0)]);
    }

    fn det(grasps: Vec<ScoredGrasp>) -> DetectionRecord {
        DetectionRecord {
            image_id: "i".into(),
            category: "c".into(),
            score: 0.9,
            bbox: bx(0.0, 0.0, 10.0, 10.0),
            grasps,
        }
    }

    #[test]
    fn execution_grasp_selection() {
        let one = det(vec![sg(8.0, 5.0, 0.6)]);
        assert_eq!(select_execution_grasp(&one, EXECUTION_SCORE_THRESH), Some(one.grasps[0].rect));
        assert_eq!(select_execution_grasp(&det(vec![sg(5.0, 5.0, 0.5)]), EXECUTION_SCORE_THRESH), None);
        let d = det(vec![sg(10.0, 5.0, 0.51), sg(7.0, 5.0, 0.49)]);
        assert_eq!(select_execution_grasp(&d, EXECUTION_SCORE_THRESH), Some(d.grasps[0].rect));
        assert_eq!(select_execution_grasp(&det(vec![]), EXECUTION_SCORE_THRESH), None);
    }
}
