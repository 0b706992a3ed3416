//! Greedy non-maximum suppression for oriented grasps and class-labelled boxes.

use serde::{Deserialize, Serialize};

use crate::geometry::{box_iou, rotated_iou, AxisAlignedBox, OrientedRect};

pub const DEFAULT_GRASP_NMS: f64 = 0.3;
pub const DEFAULT_BOX_NMS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredGrasp {
    pub rect: OrientedRect,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: AxisAlignedBox,
    pub category: String,
    pub score: f64,
}

/// Indices of `scores` sorted by descending score; equal scores keep input order.
pub fn rank_by_score(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Generic greedy NMS: returns kept indices in descending-score order.
fn greedy_keep<F>(scores: impl Iterator<Item = f64>, iou_threshold: f64, overlaps: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> Option<f64>,
{
    let mut kept: Vec<usize> = Vec::new();
    for i in rank_by_score(scores) {
        let suppressed = kept
            .iter()
            .any(|&j| overlaps(i, j).is_some_and(|iou| iou > iou_threshold));
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Indices kept by grasp NMS, highest score first.
pub fn nms_grasp_indices(candidates: &[ScoredGrasp], iou_threshold: f64) -> Vec<usize> {
    greedy_keep(candidates.iter().map(|c| c.score), iou_threshold, |i, j| {
        Some(rotated_iou(&candidates[i].rect, &candidates[j].rect))
    })
}

pub fn nms_grasps(candidates: &[ScoredGrasp], iou_threshold: f64) -> Vec<ScoredGrasp> {
    nms_grasp_indices(candidates, iou_threshold)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// Indices kept by per-class box NMS, highest score first.
pub fn nms_box_indices(candidates: &[ScoredBox], iou_threshold: f64) -> Vec<usize> {
    greedy_keep(candidates.iter().map(|c| c.score), iou_threshold, |i, j| {
        let (a, b) = (&candidates[i], &candidates[j]);
        (a.category == b.category).then(|| box_iou(&a.bbox, &b.bbox))
    })
}

pub fn nms_boxes(candidates: &[ScoredBox], iou_threshold: f64) -> Vec<ScoredBox> {
    nms_box_indices(candidates, iou_threshold)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(x: f64, theta: f64, score: f64) -> ScoredGrasp {
        ScoredGrasp {
            rect: OrientedRect::new(x, 0.0, 20.0, 10.0, theta).unwrap(),
            score,
        }
    }

    fn b(x: f64, cat: &str, score: f64) -> ScoredBox {
        ScoredBox {
            bbox: AxisAlignedBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
            category: cat.into(),
            score,
        }
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(nms_grasps(&[], 0.3).is_empty());
        assert!(nms_boxes(&[], 0.3).is_empty());
    }

    #[test]
    fn duplicate_grasp_is_suppressed() {
        let kept = nms_grasps(&[g(0.0, 10.0, 0.8), g(0.0, 10.0, 0.9)], 0.5);
        assert_eq!(kept, vec![g(0.0, 10.0, 0.9)]);
    }

    #[test]
    fn output_sorted_and_threshold_one_keeps_all() {
        let c = [g(0.0, 0.0, 0.2), g(1.0, 0.0, 0.7), g(50.0, 0.0, 0.5)];
        let kept = nms_grasps(&c, 1.0);
        assert_eq!(kept.iter().map(|k| k.score).collect::<Vec<_>>(), vec![0.7, 0.5, 0.2]);
        let kept = nms_grasps(&c, 0.3);
        assert_eq!(kept.iter().map(|k| k.score).collect::<Vec<_>>(), vec![0.7, 0.5]);
    }

    #[test]
    fn equal_scores_keep_input_order() {
        let c = [g(0.0, 0.0, 0.5), g(1.0, 0.0, 0.5)];
        assert_eq!(nms_grasp_indices(&c, 0.3), vec![0]);
        let c = [g(1.0, 0.0, 0.5), g(0.0, 0.0, 0.5)];
        assert_eq!(nms_grasp_indices(&c, 0.3), vec![0]);
    }

    #[test]
    fn boxes_are_suppressed_per_class() {
        assert_eq!(nms_boxes(&[b(0.0, "cup", 0.9), b(0.0, "pen", 0.8)], 0.3).len(), 2);
        assert_eq!(nms_boxes(&[b(0.0, "cup", 0.9), b(0.0, "cup", 0.8)], 0.3), vec![b(0.0, "cup", 0.9)]);
    }
}
