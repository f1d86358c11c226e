//! Supervision targets and losses for attention-guided training: IoU-based
//! per-step attention targets over region proposals, a KL attention loss and
//! a cross-entropy operation loss (both with analytic gradients), the cosine
//! weight schedule, and the combined objective
//! `total = l_ans + theta * sum(l_att) + phi * sum(l_op)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::OpKind;
use crate::roi::RoiSet;
use crate::scene::{BoundingBox, ObjectId, SceneGraph};

#[derive(Debug, Error)]
pub enum SupervisionError {
    #[error("proposal list is empty")]
    NoProposals,
    #[error("step {step} references object {id:?} missing from the scene graph")]
    UnknownObject { step: usize, id: ObjectId },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("schedule needs C > 0")]
    BadC,
    #[error("iteration {iter} is past the schedule end C={c}")]
    IterPastEnd { iter: u64, c: u64 },
    #[error("{name} must be finite and nonnegative, got {value}")]
    BadLoss { name: &'static str, value: f64 },
    #[error("logit {index} is not finite")]
    NonFiniteLogit { index: usize },
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Ground-truth attention distribution over proposals for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAttention {
    pub step: usize,
    pub weights: Vec<f64>,
    /// Set when every proposal missed every ROI and the target fell back to
    /// the uniform distribution.
    pub uniform_fallback: bool,
}

/// Weight each proposal by its summed IoU with the step's ROI boxes (union
/// over groups, each object counted once), then normalize to sum 1.
pub fn derive_target_attention(
    rois: &RoiSet,
    proposals: &[BoundingBox],
    g: &SceneGraph,
) -> Result<TargetAttention, SupervisionError> {
    if proposals.is_empty() {
        return Err(SupervisionError::NoProposals);
    }
    let mut union: std::collections::BTreeSet<&ObjectId> = std::collections::BTreeSet::new();
    for group in &rois.groups {
        union.extend(group.iter());
    }
    let mut roi_boxes = Vec::with_capacity(union.len());
    for id in union {
        let obj = g.object(id).ok_or_else(|| SupervisionError::UnknownObject {
            step: rois.step,
            id: id.clone(),
        })?;
        roi_boxes.push(&obj.bbox);
    }

    let mut weights: Vec<f64> = proposals
        .iter()
        .map(|p| roi_boxes.iter().map(|r| iou(p, r)).sum())
        .collect();
    let total: f64 = weights.iter().sum();
    let uniform_fallback = total == 0.0;
    if uniform_fallback {
        let u = 1.0 / proposals.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
    } else {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(TargetAttention {
        step: rois.step,
        weights,
        uniform_fallback,
    })
}

/// One-hot operation target for a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationLabel {
    pub step: usize,
    pub kind: OpKind,
}

pub const KL_EPSILON: f64 = 1e-8;
pub const DEFAULT_PHI: f64 = 0.5;
pub const DEFAULT_SCHEDULE_C: u64 = 300_000;

fn softmax(logits: &[f64]) -> Result<Vec<f64>, SupervisionError> {
    for (index, z) in logits.iter().enumerate() {
        if !z.is_finite() {
            return Err(SupervisionError::NonFiniteLogit { index });
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// KL(target || softmax(logits)) with the predicted probability clamped at
/// `epsilon` inside the log; terms with a zero target contribute nothing.
/// The gradient with respect to the logits is `softmax - target`.
pub fn kl_attention_loss(
    target: &TargetAttention,
    predicted_logits: &[f64],
) -> Result<(f64, Vec<f64>), SupervisionError> {
    kl_attention_loss_eps(target, predicted_logits, KL_EPSILON)
}

pub fn kl_attention_loss_eps(
    target: &TargetAttention,
    predicted_logits: &[f64],
    epsilon: f64,
) -> Result<(f64, Vec<f64>), SupervisionError> {
    if predicted_logits.len() != target.weights.len() {
        return Err(SupervisionError::LengthMismatch {
            expected: target.weights.len(),
            got: predicted_logits.len(),
        });
    }
    let p = softmax(predicted_logits)?;
    let mut loss = 0.0;
    for (t, pi) in target.weights.iter().zip(&p) {
        if *t > 0.0 {
            loss += t * (t / pi.max(epsilon)).ln();
        }
    }
    let grad = p
        .iter()
        .zip(&target.weights)
        .map(|(pi, ti)| pi - ti)
        .collect();
    Ok((loss, grad))
}

/// Cross-entropy over the eight operation kinds; the class index is the
/// kind's position in `OpKind::ALL`. Gradient is `softmax - onehot`.
pub fn ce_operation_loss(
    label: &OperationLabel,
    predicted_logits: &[f64],
) -> Result<(f64, Vec<f64>), SupervisionError> {
    if predicted_logits.len() != OpKind::ALL.len() {
        return Err(SupervisionError::LengthMismatch {
            expected: OpKind::ALL.len(),
            got: predicted_logits.len(),
        });
    }
    let p = softmax(predicted_logits)?;
    let idx = label.kind.index();
    // -ln softmax via log-sum-exp keeps precision for large margins
    let max = predicted_logits
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = predicted_logits
        .iter()
        .map(|z| (z - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    let loss = lse - predicted_logits[idx];
    let mut grad = p;
    grad[idx] -= 1.0;
    Ok((loss, grad))
}

/// Cosine annealing weight: `0.5 * (1 + cos(pi * iter / c))`, from 1 at
/// iteration 0 down to 0 at iteration `c`.
pub fn theta_schedule(iter: u64, c: u64) -> Result<f64, SupervisionError> {
    if c == 0 {
        return Err(SupervisionError::BadC);
    }
    if iter > c {
        return Err(SupervisionError::IterPastEnd { iter, c });
    }
    Ok(0.5 * (1.0 + (std::f64::consts::PI * iter as f64 / c as f64).cos()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ans: f64,
    pub l_att: Vec<f64>,
    pub l_op: Vec<f64>,
    pub theta: f64,
    pub phi: f64,
    pub total: f64,
}

/// Weighted sum of the answer loss, the per-step attention losses (scaled
/// by the scheduled theta), and the per-step operation losses (scaled by
/// phi).
pub fn combined_loss(
    l_ans: f64,
    att_losses: &[f64],
    op_losses: &[f64],
    iter: u64,
    c: u64,
    phi: f64,
) -> Result<LossBreakdown, SupervisionError> {
    if att_losses.len() != op_losses.len() {
        return Err(SupervisionError::LengthMismatch {
            expected: att_losses.len(),
            got: op_losses.len(),
        });
    }
    if att_losses.is_empty() {
        return Err(SupervisionError::LengthMismatch {
            expected: 1,
            got: 0,
        });
    }
    let check = |name: &'static str, value: f64| -> Result<(), SupervisionError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(SupervisionError::BadLoss { name, value });
        }
        Ok(())
    };
    check("l_ans", l_ans)?;
    check("phi", phi)?;
    for v in att_losses {
        check("att loss", *v)?;
    }
    for v in op_losses {
        check("op loss", *v)?;
    }
    let theta = theta_schedule(iter, c)?;
    let total = l_ans
        + theta * att_losses.iter().sum::<f64>()
        + phi * op_losses.iter().sum::<f64>();
    Ok(LossBreakdown {
        l_ans,
        l_att: att_losses.to_vec(),
        l_op: op_losses.to_vec(),
        theta,
        phi,
        total,
    })
}
