//! Semi-supervised detection loss arithmetic.
//!
//! Losses are evaluated as numbers only: per frame, positives contribute
//! classification, regression and IoU terms against their matched target,
//! negatives contribute classification against background, and the frame
//! losses are averaged over the labeled and unlabeled parts of a batch before
//! being combined with the unlabeled weight.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::asa::{asa_assign, bce, build_cost_matrix, AsaConfig, AsaResult, AsaWeights, PairTerms};
use crate::error::{Error, Result};
use crate::geometry::{iou, Prediction, PseudoBox};

pub const DEFAULT_PSEUDO_THRESHOLD: f64 = 0.7;
pub const PSEUDO_NMS_IOU: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_iou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cls: 1.0, lambda_reg: 1.0, lambda_iou: 3.0 }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        if [self.lambda_cls, self.lambda_reg, self.lambda_iou].iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("loss weights must be finite and non-negative".into()))
        }
    }
}

/// Labeled (`N`) and unlabeled (`M`) frame counts of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchComposition {
    n_labeled: usize,
    m_unlabeled: usize,
}

impl BatchComposition {
    pub fn new(n_labeled: usize, m_unlabeled: usize) -> Result<Self> {
        if n_labeled == 0 {
            return Err(Error::EmptyBatch("batch needs at least one labeled frame"));
        }
        Ok(Self { n_labeled, m_unlabeled })
    }

    pub fn n_labeled(&self) -> usize {
        self.n_labeled
    }

    pub fn m_unlabeled(&self) -> usize {
        self.m_unlabeled
    }
}

/// How the unlabeled weight follows from the batch composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnlabeledWeight {
    /// `M / N`
    #[default]
    Ratio,
    /// `M / (M + N)`
    Fraction,
}

impl UnlabeledWeight {
    pub fn lambda(&self, batch: &BatchComposition) -> f64 {
        let m = batch.m_unlabeled as f64;
        let n = batch.n_labeled as f64;
        match self {
            UnlabeledWeight::Ratio => m / n,
            UnlabeledWeight::Fraction => m / (m + n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_reg: f64,
    pub l_iou: f64,
    pub total: f64,
    /// Set when no prediction contributed (no positives and no negatives).
    pub empty: bool,
}

/// One frame's predictions, targets and their assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub preds: Vec<Prediction>,
    pub targets: Vec<PseudoBox>,
    pub assignment: AsaResult,
}

impl FrameBatch {
    /// Assigns `preds` to `targets` with the cost-based rule.
    pub fn assigned(
        preds: Vec<Prediction>,
        targets: Vec<PseudoBox>,
        w: &AsaWeights,
        cfg: &AsaConfig,
        image_diag: f64,
    ) -> Result<Self> {
        let cost = build_cost_matrix(&preds, &targets, w, cfg, image_diag)?;
        let assignment = asa_assign(&cost, cfg);
        Ok(Self { preds, targets, assignment })
    }
}

/// Bracketed loss of one frame.
///
/// Classification is averaged over positives and negatives; regression and
/// IoU over positives only.
pub fn frame_loss(
    preds: &[Prediction],
    targets: &[PseudoBox],
    assignment: &AsaResult,
    w: &LossWeights,
    image_diag: f64,
) -> Result<LossBreakdown> {
    w.validate()?;
    if !(image_diag > 0.0) {
        return Err(Error::InvalidConfig("image diagonal must be positive".into()));
    }
    let mut cls = 0.0;
    let mut reg = 0.0;
    let mut iou_sum = 0.0;
    for &(n, k) in &assignment.positives {
        let (p, y) = match (preds.get(n), targets.get(k)) {
            (Some(p), Some(y)) => (p, y),
            _ => return Err(Error::ShapeMismatch { expected: (preds.len(), targets.len()), found: (n, k) }),
        };
        let t = PairTerms::compute(p, y, image_diag, crate::asa::ClassTarget::Hard);
        cls += t.cls;
        reg += t.reg;
        iou_sum += t.iou;
    }
    for &n in &assignment.negatives {
        let p = preds
            .get(n)
            .ok_or(Error::ShapeMismatch { expected: (preds.len(), targets.len()), found: (n, 0) })?;
        cls += bce(p.score(), 0.0);
    }
    let n_pos = assignment.positives.len();
    let n_cls = n_pos + assignment.negatives.len();
    if n_cls == 0 {
        return Ok(LossBreakdown { empty: true, ..Default::default() });
    }
    let l_cls = cls / n_cls as f64;
    let (l_reg, l_iou) = if n_pos == 0 { (0.0, 0.0) } else { (reg / n_pos as f64, iou_sum / n_pos as f64) };
    Ok(LossBreakdown {
        l_cls,
        l_reg,
        l_iou,
        total: w.lambda_cls * l_cls + w.lambda_reg * l_reg + w.lambda_iou * l_iou,
        empty: false,
    })
}

fn mean_frame_loss(frames: &[FrameBatch], w: &LossWeights, image_diag: f64, what: &'static str) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyBatch(what));
    }
    let mut sum = 0.0;
    for f in frames {
        sum += frame_loss(&f.preds, &f.targets, &f.assignment, w, image_diag)?.total;
    }
    Ok(sum / frames.len() as f64)
}

/// Mean frame loss over student-view predictions against teacher pseudo-boxes.
pub fn unlabeled_loss(frames: &[FrameBatch], w: &LossWeights, image_diag: f64) -> Result<f64> {
    mean_frame_loss(frames, w, image_diag, "no unlabeled frames")
}

/// Mean frame loss over predictions against ground truth.
pub fn labeled_loss(frames: &[FrameBatch], w: &LossWeights, image_diag: f64) -> Result<f64> {
    mean_frame_loss(frames, w, image_diag, "no labeled frames")
}

/// `lambda_u * l_u + l_l`.
pub fn total_loss(l_u: f64, l_l: f64, batch: &BatchComposition, weight: UnlabeledWeight) -> f64 {
    if batch.m_unlabeled == 0 {
        return l_l;
    }
    weight.lambda(batch) * l_u + l_l
}

/// Teacher predictions kept as pseudo ground truth: greedy NMS at
/// [`PSEUDO_NMS_IOU`], then a confidence floor on `class_prob * objectness`.
pub fn pseudo_filter(teacher_preds: &[Prediction], confidence_threshold: f64) -> Result<Vec<PseudoBox>> {
    if !(0.0..=1.0).contains(&confidence_threshold) {
        return Err(Error::InvalidScore(confidence_threshold));
    }
    let mut order: Vec<usize> = (0..teacher_preds.len()).collect();
    order.sort_by(|&a, &b| {
        teacher_preds[b].score().partial_cmp(&teacher_preds[a].score()).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let b = &teacher_preds[i].bbox;
        if kept.iter().all(|&j| iou(&teacher_preds[j].bbox, b) <= PSEUDO_NMS_IOU) {
            kept.push(i);
        }
    }
    kept.into_iter()
        .filter(|&i| teacher_preds[i].score() >= confidence_threshold)
        .map(|i| PseudoBox::new(teacher_preds[i].bbox, teacher_preds[i].score()))
        .collect()
}
