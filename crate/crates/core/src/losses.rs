//! Grasp-head losses with hand-derived gradients, and the multi-task
//! aggregation over RoIs.
//!
//! Regression uses smooth-L1 summed over the five offset components and
//! averaged over graspable anchors. Classification is softmax cross-entropy
//! over `[ungraspable, graspable]` logits, averaged over non-ignored anchors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor_codec::GraspOffsets;
use crate::assignment::{AnchorLabel, AnchorTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("RoI count {n_roi} does not match {len} per-RoI losses")]
    InvalidCount { n_roi: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Per-anchor predictions of the grasp head for one RoI.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraspHeadOutput {
    pub offsets: Vec<GraspOffsets>,
    /// `[ungraspable, graspable]` logits per anchor.
    pub logits: Vec<[f64; 2]>,
}

impl GraspHeadOutput {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraspLossConfig {
    /// When set, the classification loss weights the positive-anchor mean by
    /// this fraction and the negative-anchor mean by the remainder.
    pub positive_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GraspLoss {
    pub reg: f64,
    pub cls: f64,
}

impl GraspLoss {
    pub fn total(&self) -> f64 {
        self.reg + self.cls
    }
}

/// Gradients of the two loss terms with respect to the head outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraspLossGrad {
    pub d_reg_d_offsets: Vec<[f64; 5]>,
    pub d_cls_d_logits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub grasp_reg: f64,
    pub grasp_cls: f64,
    pub object_loss: f64,
    pub total: f64,
}

pub fn smooth_l1(e: f64) -> f64 {
    if e.abs() < 1.0 {
        0.5 * e * e
    } else {
        e.abs() - 0.5
    }
}

pub fn smooth_l1_grad(e: f64) -> f64 {
    if e.abs() < 1.0 {
        e
    } else {
        e.signum()
    }
}

fn log_sum_exp(l: [f64; 2]) -> f64 {
    let m = l[0].max(l[1]);
    m + ((l[0] - m).exp() + (l[1] - m).exp()).ln()
}

fn class_slot(label: AnchorLabel) -> Option<usize> {
    match label {
        AnchorLabel::Graspable => Some(1),
        AnchorLabel::Ungraspable => Some(0),
        AnchorLabel::Ignore => None,
    }
}

struct Checked<'a> {
    pos: Vec<(usize, &'a GraspOffsets)>,
    labeled: Vec<(usize, usize)>,
}

fn check<'a>(pred: &GraspHeadOutput, targets: &'a [AnchorTarget]) -> Result<Checked<'a>, LossError> {
    let n = pred.offsets.len();
    if pred.logits.len() != n {
        return Err(LossError::ShapeMismatch(format!(
            "{} offset rows but {} logit rows",
            n,
            pred.logits.len()
        )));
    }
    if targets.len() != n {
        return Err(LossError::ShapeMismatch(format!("{} targets for {} anchors", targets.len(), n)));
    }
    if pred.logits.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite("logits"));
    }
    if pred.offsets.iter().any(|o| !o.is_finite()) {
        return Err(LossError::NonFinite("predicted offsets"));
    }
    let mut seen = vec![false; n];
    let mut pos = Vec::new();
    let mut labeled = Vec::new();
    for t in targets {
        if t.anchor >= n || std::mem::replace(&mut seen[t.anchor], true) {
            return Err(LossError::ShapeMismatch(format!("anchor index {} repeated or out of range", t.anchor)));
        }
        if t.label == AnchorLabel::Graspable {
            let off = t
                .offsets
                .as_ref()
                .ok_or_else(|| LossError::ShapeMismatch(format!("graspable anchor {} lacks offsets", t.anchor)))?;
            if !off.is_finite() {
                return Err(LossError::NonFinite("target offsets"));
            }
            pos.push((t.anchor, off));
        }
        if let Some(slot) = class_slot(t.label) {
            labeled.push((t.anchor, slot));
        }
    }
    Ok(Checked { pos, labeled })
}

/// Per-anchor weights of the classification mean.
fn class_weights(labeled: &[(usize, usize)], cfg: &GraspLossConfig) -> Vec<f64> {
    let n_pos = labeled.iter().filter(|(_, s)| *s == 1).count();
    let n_neg = labeled.len() - n_pos;
    match cfg.positive_fraction {
        Some(f) if n_pos > 0 && n_neg > 0 => labeled
            .iter()
            .map(|(_, s)| if *s == 1 { f / n_pos as f64 } else { (1.0 - f) / n_neg as f64 })
            .collect(),
        _ => vec![1.0 / labeled.len() as f64; labeled.len()],
    }
}

pub fn grasp_loss(pred: &GraspHeadOutput, targets: &[AnchorTarget]) -> Result<GraspLoss, LossError> {
    grasp_loss_with(pred, targets, &GraspLossConfig::default())
}

pub fn grasp_loss_with(
    pred: &GraspHeadOutput,
    targets: &[AnchorTarget],
    cfg: &GraspLossConfig,
) -> Result<GraspLoss, LossError> {
    let c = check(pred, targets)?;
    let reg = if c.pos.is_empty() {
        0.0
    } else {
        let sum: f64 = c
            .pos
            .iter()
            .map(|(a, t)| {
                let p = pred.offsets[*a].to_array();
                let t = t.to_array();
                (0..5).map(|i| smooth_l1(p[i] - t[i])).sum::<f64>()
            })
            .sum();
        sum / c.pos.len() as f64
    };
    let cls = if c.labeled.is_empty() {
        0.0
    } else {
        let w = class_weights(&c.labeled, cfg);
        c.labeled
            .iter()
            .zip(&w)
            .map(|((a, slot), w)| {
                let l = pred.logits[*a];
                w * (log_sum_exp(l) - l[*slot])
            })
            .sum()
    };
    Ok(GraspLoss { reg, cls })
}

/// Analytic gradients matching [`grasp_loss_with`].
pub fn grasp_loss_grad(
    pred: &GraspHeadOutput,
    targets: &[AnchorTarget],
    cfg: &GraspLossConfig,
) -> Result<GraspLossGrad, LossError> {
    let c = check(pred, targets)?;
    let n = pred.len();
    let mut grad = GraspLossGrad {
        d_reg_d_offsets: vec![[0.0; 5]; n],
        d_cls_d_logits: vec![[0.0; 2]; n],
    };
    let n_pos = c.pos.len() as f64;
    for (a, t) in &c.pos {
        let p = pred.offsets[*a].to_array();
        let t = t.to_array();
        for i in 0..5 {
            grad.d_reg_d_offsets[*a][i] = smooth_l1_grad(p[i] - t[i]) / n_pos;
        }
    }
    if !c.labeled.is_empty() {
        let w = class_weights(&c.labeled, cfg);
        for ((a, slot), w) in c.labeled.iter().zip(&w) {
            let l = pred.logits[*a];
            let lse = log_sum_exp(l);
            for k in 0..2 {
                let p = (l[k] - lse).exp();
                grad.d_cls_d_logits[*a][k] = w * (p - if k == *slot { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(grad)
}

/// Image-level loss: `object_loss + (1/n_roi)·Σ per-RoI grasp losses`.
pub fn total_loss(object_loss: f64, per_roi_grasp_losses: &[f64], n_roi: usize) -> Result<f64, LossError> {
    if per_roi_grasp_losses.is_empty() {
        return Ok(object_loss);
    }
    if n_roi != per_roi_grasp_losses.len() {
        return Err(LossError::InvalidCount {
            n_roi,
            len: per_roi_grasp_losses.len(),
        });
    }
    let lambda = 1.0 / n_roi as f64;
    Ok(object_loss + lambda * per_roi_grasp_losses.iter().sum::<f64>())
}

impl LossBreakdown {
    /// Combines an externally computed object-detection loss with the grasp
    /// losses of every RoI used for grasp training.
    pub fn combine(object_loss: f64, per_roi: &[GraspLoss]) -> Result<Self, LossError> {
        if !object_loss.is_finite() || object_loss < 0.0 {
            return Err(LossError::NonFinite("object loss"));
        }
        let n = per_roi.len();
        let mean = |f: fn(&GraspLoss) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_roi.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let totals: Vec<f64> = per_roi.iter().map(GraspLoss::total).collect();
        Ok(Self {
            grasp_reg: mean(|l| l.reg),
            grasp_cls: mean(|l| l.cls),
            object_loss,
            total: total_loss(object_loss, &totals, n)?,
        })
    }
}
