//! Consistent adaptive sampling assignment.
//!
//! Every (prediction, pseudo-box) pair gets a matching cost
//!
//! ```text
//! C = l_cls * L_cls + l_reg * L_reg + l_iou * L_IoU + l_dis * C_dis
//! ```
//!
//! Each pseudo-box takes its `k` cheapest candidate predictions as positives;
//! predictions whose cheapest pair is above the negative threshold become
//! negatives and the rest are ignored.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{center_distance, iou, Prediction, PseudoBox};
use crate::lap::CostMatrix;

/// Probabilities are clamped away from 0 and 1 before taking logs.
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsaWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_iou: f64,
    pub lambda_dis: f64,
}

impl Default for AsaWeights {
    fn default() -> Self {
        Self { lambda_cls: 1.0, lambda_reg: 1.0, lambda_iou: 3.0, lambda_dis: 2.0 }
    }
}

impl AsaWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cls, self.lambda_reg, self.lambda_iou, self.lambda_dis];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("ASA weights must be finite and non-negative".into()))
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_cls: self.lambda_cls * c,
            lambda_reg: self.lambda_reg * c,
            lambda_iou: self.lambda_iou * c,
            lambda_dis: self.lambda_dis * c,
        }
    }
}

/// Target used by the classification term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassTarget {
    /// Every pseudo-box is a hard positive (target 1).
    #[default]
    Hard,
    /// The pseudo-box confidence is the soft target.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsaConfig {
    pub k: usize,
    pub negative_cost_threshold: f64,
    /// Candidate region radius, in multiples of `sqrt(area)` of the pseudo-box.
    pub candidate_radius_scale: f64,
    pub class_target: ClassTarget,
}

impl Default for AsaConfig {
    fn default() -> Self {
        Self { k: 10, negative_cost_threshold: 6.0, candidate_radius_scale: 2.5, class_target: ClassTarget::Hard }
    }
}

impl AsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.negative_cost_threshold > 0.0 && self.negative_cost_threshold.is_finite()) {
            return Err(Error::InvalidConfig("negative_cost_threshold must be positive".into()));
        }
        if !(self.candidate_radius_scale >= 0.0 && self.candidate_radius_scale.is_finite()) {
            return Err(Error::InvalidConfig("candidate_radius_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Binary cross-entropy of probability `p` against target `t`.
pub fn bce(p: f64, t: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mut loss = 0.0;
    if t > 0.0 {
        loss -= t * libm::log(p);
    }
    if t < 1.0 {
        loss -= (1.0 - t) * libm::log(1.0 - p);
    }
    if (t == 1.0 && p >= 1.0 - PROB_EPS) || (t == 0.0 && p <= PROB_EPS) {
        0.0
    } else {
        loss
    }
}

/// Unweighted loss terms between one prediction and one target box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerms {
    pub cls: f64,
    pub reg: f64,
    pub iou: f64,
    pub dis: f64,
}

impl PairTerms {
    pub fn compute(p: &Prediction, y: &PseudoBox, image_diag: f64, target: ClassTarget) -> Self {
        let t = match target {
            ClassTarget::Hard => 1.0,
            ClassTarget::Soft => y.confidence(),
        };
        let (pcx, pcy) = p.bbox.center();
        let (ycx, ycy) = y.bbox.center();
        let reg = ((pcx - ycx).abs() / image_diag
            + (pcy - ycy).abs() / image_diag
            + (libm::log(p.bbox.width()) - libm::log(y.bbox.width())).abs()
            + (libm::log(p.bbox.height()) - libm::log(y.bbox.height())).abs())
            / 4.0;
        Self {
            cls: bce(p.score(), t),
            reg,
            iou: 1.0 - iou(&p.bbox, &y.bbox),
            dis: center_distance(&p.bbox, &y.bbox) / image_diag,
        }
    }

    pub fn weighted(&self, w: &AsaWeights) -> f64 {
        w.lambda_cls * self.cls + w.lambda_reg * self.reg + w.lambda_iou * self.iou + w.lambda_dis * self.dis
    }
}

/// Matching cost with a hard classification target.
pub fn pair_cost(p: &Prediction, y: &PseudoBox, w: &AsaWeights, image_diag: f64) -> f64 {
    PairTerms::compute(p, y, image_diag, ClassTarget::Hard).weighted(w)
}

/// Prediction x pseudo-box costs plus the per-prediction candidate mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AsaCostMatrix {
    pub costs: CostMatrix,
    pub candidate: Vec<bool>,
}

impl AsaCostMatrix {
    pub fn predictions(&self) -> usize {
        self.costs.rows()
    }

    pub fn pseudos(&self) -> usize {
        self.costs.cols()
    }
}

fn in_candidate_region(p: &Prediction, y: &PseudoBox, radius_scale: f64) -> bool {
    let (px, py) = p.bbox.center();
    y.bbox.contains_point(px, py)
        || center_distance(&p.bbox, &y.bbox) <= radius_scale * libm::sqrt(y.bbox.area())
}

pub fn build_cost_matrix(
    preds: &[Prediction],
    pseudos: &[PseudoBox],
    w: &AsaWeights,
    cfg: &AsaConfig,
    image_diag: f64,
) -> Result<AsaCostMatrix> {
    w.validate()?;
    cfg.validate()?;
    if !(image_diag > 0.0 && image_diag.is_finite()) {
        return Err(Error::InvalidConfig("image diagonal must be positive".into()));
    }
    let mut data = Vec::with_capacity(preds.len() * pseudos.len());
    let mut candidate = vec![false; preds.len()];
    for (n, p) in preds.iter().enumerate() {
        for y in pseudos {
            data.push(PairTerms::compute(p, y, image_diag, cfg.class_target).weighted(w));
            candidate[n] |= in_candidate_region(p, y, cfg.candidate_radius_scale);
        }
    }
    Ok(AsaCostMatrix { costs: CostMatrix::new(preds.len(), pseudos.len(), data)?, candidate })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsaResult {
    /// `(prediction, pseudo)` pairs, sorted by prediction index.
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<usize>,
    pub ignored: Vec<usize>,
}

impl AsaResult {
    pub fn positive_of(&self, pred: usize) -> Option<usize> {
        self.positives.iter().find(|&&(n, _)| n == pred).map(|&(_, k)| k)
    }
}

fn by_cost_then_index(costs: &CostMatrix, k: usize) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| costs.get(a, k).total_cmp(&costs.get(b, k)).then(a.cmp(&b))
}

/// Top-k positive assignment with threshold negatives.
///
/// Non-candidate predictions (outside every candidate region, or all of them
/// when there are no pseudo-boxes) are background and land in `negatives`.
pub fn asa_assign(cost: &AsaCostMatrix, cfg: &AsaConfig) -> AsaResult {
    let n_pred = cost.predictions();
    let n_pseudo = cost.pseudos();
    let thr = cfg.negative_cost_threshold;
    let candidates: Vec<usize> = (0..n_pred).filter(|&n| cost.candidate[n]).collect();

    // Best claiming pseudo per prediction: (cost, pseudo).
    let mut claim: Vec<Option<(f64, usize)>> = vec![None; n_pred];
    for k in 0..n_pseudo {
        let mut ranked = candidates.clone();
        ranked.sort_by(by_cost_then_index(&cost.costs, k));
        for &n in ranked.iter().take(cfg.k) {
            let c = cost.costs.get(n, k);
            if c > thr {
                break;
            }
            match claim[n] {
                Some((best, _)) if best <= c => {}
                _ => claim[n] = Some((c, k)),
            }
        }
    }

    let mut out = AsaResult::default();
    for n in 0..n_pred {
        if let Some((_, k)) = claim[n] {
            out.positives.push((n, k));
        } else if !cost.candidate[n] {
            out.negatives.push(n);
        } else {
            let min = (0..n_pseudo).map(|k| cost.costs.get(n, k)).fold(f64::INFINITY, f64::min);
            if min > thr {
                out.negatives.push(n);
            } else {
                out.ignored.push(n);
            }
        }
    }
    out
}

/// Baseline that keeps every prediction above a fixed confidence as a
/// positive for its highest-IoU pseudo-box, ignoring matching cost.
pub fn static_threshold_assign(preds: &[Prediction], pseudos: &[PseudoBox], confidence: f64) -> AsaResult {
    let mut out = AsaResult::default();
    for (n, p) in preds.iter().enumerate() {
        let best = pseudos
            .iter()
            .enumerate()
            .map(|(k, y)| (iou(&p.bbox, &y.bbox), k))
            .fold(None::<(f64, usize)>, |acc, cur| match acc {
                Some(a) if a.0 >= cur.0 => Some(a),
                _ => Some(cur),
            });
        match best {
            Some((_, k)) if p.score() > confidence => out.positives.push((n, k)),
            _ => out.negatives.push(n),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Positive prediction lies outside every candidate region.
    NotCandidate { pred: usize, pseudo: usize },
    /// Positive pair is not among the `k` cheapest candidates of its pseudo-box.
    RankExceeded { pred: usize, pseudo: usize, rank: usize },
    /// Positive pair costs more than the negative threshold.
    AboveThreshold { pred: usize, pseudo: usize, cost: f64 },
    /// A candidate that was not made positive anywhere is cheaper for this
    /// pseudo-box than one of its positives.
    CheaperUnassigned { pred: usize, pseudo: usize, cheaper: usize },
    /// A prediction appears more than once among the positives.
    DuplicatePositive { pred: usize },
}

/// Checks that an assignment only promotes loss-minimizing pairs.
///
/// Reports at most one violation per positive pair; an [`asa_assign`] result on the same inputs
/// always yields an empty list.
pub fn pseudo_consistency_check(
    preds: &[Prediction],
    pseudos: &[PseudoBox],
    w: &AsaWeights,
    cfg: &AsaConfig,
    image_diag: f64,
    result: &AsaResult,
) -> Result<Vec<Violation>> {
    let cost = build_cost_matrix(preds, pseudos, w, cfg, image_diag)?;
    let costs = &cost.costs;
    let mut violations = Vec::new();
    let mut is_positive = vec![false; preds.len()];
    for &(n, _) in &result.positives {
        if is_positive[n] {
            violations.push(Violation::DuplicatePositive { pred: n });
        }
        is_positive[n] = true;
    }
    for &(n, k) in &result.positives {
        if !cost.candidate[n] {
            violations.push(Violation::NotCandidate { pred: n, pseudo: k });
            continue;
        }
        let c = costs.get(n, k);
        let rank = (0..preds.len())
            .filter(|&m| cost.candidate[m] && by_cost_then_index(costs, k)(&m, &n) == Ordering::Less)
            .count();
        let cheaper = (0..preds.len()).find(|&m| cost.candidate[m] && !is_positive[m] && costs.get(m, k) < c);
        if c > cfg.negative_cost_threshold {
            violations.push(Violation::AboveThreshold { pred: n, pseudo: k, cost: c });
        } else if rank >= cfg.k {
            violations.push(Violation::RankExceeded { pred: n, pseudo: k, rank });
        } else if let Some(m) = cheaper {
            violations.push(Violation::CheaperUnassigned { pred: n, pseudo: k, cheaper: m });
        }
    }
    Ok(violations)
}
