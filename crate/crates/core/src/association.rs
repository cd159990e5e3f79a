//! Per-frame association: motion cost, gated appearance similarity, optimal
//! assignment and track lifecycle.
//!
//! Matrices here are laid out with detections as rows and tracks as columns.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Detection, EmbeddingVec};
use crate::lap::{self, CostMatrix};
use crate::motion::{unit, KalmanTrack, MotionConfig};

/// Keep rate for the pooled embedding used by [`SimilarityMode::PlainProduct`].
const POOLED_KEEP_RATE: f64 = 0.9;

/// Bounded memory of the most recent embeddings observed for one track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackBank {
    capacity: usize,
    embeddings: VecDeque<EmbeddingVec>,
    pooled: Option<Vec<f64>>,
}

impl TrackBank {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), embeddings: VecDeque::new(), pooled: None }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.embeddings.front().map(EmbeddingVec::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingVec> {
        self.embeddings.iter()
    }

    /// Appends an embedding, evicting the oldest one when full.
    pub fn push(&mut self, emb: EmbeddingVec) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != emb.dim() {
                return Err(Error::DimensionMismatch { expected: d, found: emb.dim() });
            }
        }
        self.pooled = Some(match self.pooled.take() {
            None => emb.values().to_vec(),
            Some(p) => p
                .iter()
                .zip(emb.values())
                .map(|(a, b)| POOLED_KEEP_RATE * a + (1.0 - POOLED_KEEP_RATE) * b)
                .collect(),
        });
        if self.embeddings.len() == self.capacity {
            self.embeddings.pop_front();
        }
        self.embeddings.push_back(emb);
        Ok(())
    }

    /// Exponentially pooled single embedding.
    pub fn pooled(&self) -> Option<&[f64]> {
        self.pooled.as_deref()
    }
}

/// Detection x track similarity table with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Split cosine similarity.
///
/// Entry `(i, j)` is the largest cosine similarity between detection `i` and
/// any member of bank `j`, with negatives clamped to 0 and anything below
/// `tau` zeroed. Detections without an embedding and empty banks give 0.
pub fn split_cosine_similarity(
    dets: &[Option<&EmbeddingVec>],
    banks: &[&TrackBank],
    tau: f64,
) -> Result<SimilarityMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("similarity threshold {tau} outside [0, 1]")));
    }
    let mut out = SimilarityMatrix::zeros(dets.len(), banks.len());
    for (i, det) in dets.iter().enumerate() {
        let Some(det) = det else { continue };
        if det.norm() == 0.0 {
            return Err(Error::InvalidEmbedding("zero-norm detection embedding"));
        }
        for (j, bank) in banks.iter().enumerate() {
            let mut best = 0.0f64;
            for member in bank.iter() {
                best = best.max(det.cosine(member)?);
            }
            if best >= tau {
                out.set(i, j, best.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Single matrix product against each track's pooled embedding, clamped to
/// `[0, 1]` and not thresholded.
pub fn plain_product_similarity(dets: &[Option<&EmbeddingVec>], banks: &[&TrackBank]) -> Result<SimilarityMatrix> {
    let mut out = SimilarityMatrix::zeros(dets.len(), banks.len());
    for (i, det) in dets.iter().enumerate() {
        let Some(det) = det else { continue };
        for (j, bank) in banks.iter().enumerate() {
            let Some(pooled) = bank.pooled() else { continue };
            if pooled.len() != det.dim() {
                return Err(Error::DimensionMismatch { expected: pooled.len(), found: det.dim() });
            }
            let dot: f64 = pooled.iter().zip(det.values()).map(|(a, b)| a * b).sum();
            out.set(i, j, dot.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    /// Per-member cosine, max-pooled per pair, thresholded.
    SplitCosine,
    /// One dot product against a pooled track embedding.
    PlainProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig {
    pub iou_gate: f64,
    pub appearance_weight: f64,
    pub similarity_threshold: f64,
    pub ocm_weight: f64,
    pub min_hits: u32,
    pub max_age: u32,
    pub second_stage_enabled: bool,
    pub oru_enabled: bool,
    pub similarity_mode: SimilarityMode,
    pub bank_capacity: usize,
    /// History span used for the velocity direction.
    pub direction_span: usize,
    pub motion: MotionConfig,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.3,
            appearance_weight: 0.25,
            similarity_threshold: 0.25,
            ocm_weight: 0.2,
            min_hits: 3,
            max_age: 30,
            second_stage_enabled: true,
            oru_enabled: true,
            similarity_mode: SimilarityMode::SplitCosine,
            bank_capacity: 10,
            direction_span: 3,
            motion: MotionConfig::default(),
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} out of range")));
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return bad("iou_gate");
        }
        if !(self.appearance_weight.is_finite() && self.appearance_weight >= 0.0) {
            return bad("appearance_weight");
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return bad("similarity_threshold");
        }
        if !(self.ocm_weight.is_finite() && self.ocm_weight >= 0.0) {
            return bad("ocm_weight");
        }
        if self.bank_capacity == 0 {
            return bad("bank_capacity");
        }
        if self.direction_span == 0 {
            return bad("direction_span");
        }
        Ok(())
    }

    fn appearance_active(&self) -> bool {
        self.appearance_weight > 0.0
    }
}

/// Normalized angle between each track's motion direction and the direction
/// from its last observation to each detection, in `[0, 1]`. Pairs without a
/// defined direction cost 0.
pub fn direction_cost(dets: &[BoundingBox], tracks: &[&KalmanTrack], span: usize) -> Vec<f64> {
    let mut out = vec![0.0; dets.len() * tracks.len()];
    for (j, track) in tracks.iter().enumerate() {
        let Some((tx, ty)) = track.velocity_direction(span) else { continue };
        let Some(&(_, last)) = track.last_observation() else { continue };
        let (lx, ly) = last.center();
        for (i, det) in dets.iter().enumerate() {
            let (dx, dy) = det.center();
            let Some((ux, uy)) = unit(dx - lx, dy - ly) else { continue };
            let cos = (tx * ux + ty * uy).clamp(-1.0, 1.0);
            out[i * tracks.len() + j] = libm::acos(cos) / core::f64::consts::PI;
        }
    }
    out
}

/// Fused motion + appearance cost.
///
/// `cost = (1 - iou) - w_app * sim + w_ocm * angle`. A pair is forbidden when
/// its IoU is below the gate and appearance contributes nothing for it.
pub fn combined_cost(
    iou: &[f64],
    sim: &SimilarityMatrix,
    direction: &[f64],
    cfg: &AssociationConfig,
) -> Result<CostMatrix> {
    let (rows, cols) = sim.shape();
    for len in [iou.len(), direction.len()] {
        if len != rows * cols {
            return Err(Error::ShapeMismatch { expected: (rows, cols), found: (len, 1) });
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let s = if cfg.appearance_active() { sim.get(i, j) } else { 0.0 };
            if iou[k] < cfg.iou_gate && s == 0.0 {
                data.push(f64::INFINITY);
            } else {
                data.push((1.0 - iou[k]) - cfg.appearance_weight * s + cfg.ocm_weight * direction[k]);
            }
        }
    }
    CostMatrix::new(rows, cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub track_id: u64,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct LiveTrack {
    kf: KalmanTrack,
    bank: TrackBank,
    score: f64,
}

/// Online tracker for one sequence. Frames must be fed in increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AssociationConfig,
    tracks: Vec<LiveTrack>,
    next_id: u64,
    frames_seen: u32,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: AssociationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, tracks: Vec::new(), next_id: 1, frames_seen: 0, last_frame: None })
    }

    pub fn config(&self) -> &AssociationConfig {
        &self.cfg
    }

    /// Number of live (tentative or confirmed) tracks.
    pub fn live_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn tracks(&self) -> impl Iterator<Item = &KalmanTrack> {
        self.tracks.iter().map(|t| &t.kf)
    }

    fn similarity(&self, dets: &[Detection], track_idx: &[usize]) -> Result<SimilarityMatrix> {
        let embs: Vec<Option<&EmbeddingVec>> = dets.iter().map(|d| d.embedding.as_ref()).collect();
        let banks: Vec<&TrackBank> = track_idx.iter().map(|&t| &self.tracks[t].bank).collect();
        match self.cfg.similarity_mode {
            SimilarityMode::SplitCosine => split_cosine_similarity(&embs, &banks, self.cfg.similarity_threshold),
            SimilarityMode::PlainProduct => plain_product_similarity(&embs, &banks),
        }
    }

    /// Processes one frame and returns the confirmed tracks seen in it.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackOutput>> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(Error::NonMonotonicFrame { previous: prev, current: frame });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::NonMonotonicFrame { previous: frame, current: d.frame });
        }
        self.last_frame = Some(frame);
        self.frames_seen += 1;

        for t in &mut self.tracks {
            t.kf.predict();
        }
        self.tracks.retain(|t| t.kf.current_box().is_some());

        let det_boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let predicted: Vec<BoundingBox> =
            self.tracks.iter().map(|t| t.kf.current_box().expect("retained above")).collect();

        // First stage: fused cost between all live tracks and all detections.
        let ious = crate::geometry::iou_matrix(&det_boxes, &predicted);
        let sim = if self.cfg.appearance_active() {
            self.similarity(detections, &all_tracks)?
        } else {
            SimilarityMatrix::zeros(detections.len(), self.tracks.len())
        };
        let kfs: Vec<&KalmanTrack> = self.tracks.iter().map(|t| &t.kf).collect();
        let dir = direction_cost(&det_boxes, &kfs, self.cfg.direction_span);
        let cost = combined_cost(&ious, &sim, &dir, &self.cfg)?;
        let first = lap::solve(&cost);
        let mut matches = first.matches;
        let mut free_dets = first.unmatched_rows;
        let free_tracks = first.unmatched_cols;

        // Second stage: last observations of leftover tracks, IoU only.
        if self.cfg.second_stage_enabled && !free_dets.is_empty() && !free_tracks.is_empty() {
            let mut c = CostMatrix::filled(free_dets.len(), free_tracks.len(), f64::INFINITY);
            for (a, &d) in free_dets.iter().enumerate() {
                for (b, &t) in free_tracks.iter().enumerate() {
                    let (_, last) = *self.tracks[t].kf.last_observation().expect("tracks start observed");
                    let v = iou(&det_boxes[d], &last);
                    if v >= self.cfg.iou_gate {
                        c.set(a, b, 1.0 - v);
                    }
                }
            }
            let second = lap::solve(&c);
            for &(a, b) in &second.matches {
                matches.push((free_dets[a], free_tracks[b]));
            }
            free_dets = second.unmatched_rows.iter().map(|&a| free_dets[a]).collect();
        }

        for &(d, t) in &matches {
            let det = &detections[d];
            let track = &mut self.tracks[t];
            let gap = track.kf.time_since_update;
            if self.cfg.oru_enabled && gap > 1 {
                track.kf.reupdate(frame, &det.bbox, gap)?;
            } else {
                track.kf.update(frame, &det.bbox);
            }
            track.score = det.score;
            if let Some(e) = &det.embedding {
                track.bank.push(e.clone())?;
            }
        }

        free_dets.sort_unstable();
        for d in free_dets {
            let det = &detections[d];
            let mut bank = TrackBank::new(self.cfg.bank_capacity);
            if let Some(e) = &det.embedding {
                bank.push(e.clone())?;
            }
            let kf = KalmanTrack::with_config(&det.bbox, self.next_id, frame, self.cfg.motion);
            self.next_id += 1;
            self.tracks.push(LiveTrack { kf, bank, score: det.score });
        }

        let mut out = Vec::new();
        for t in &self.tracks {
            let confirmed = t.kf.hits >= self.cfg.min_hits || self.frames_seen <= self.cfg.min_hits;
            if t.kf.time_since_update == 0 && confirmed {
                if let Some(bbox) = t.kf.current_box() {
                    out.push(TrackOutput { track_id: t.kf.track_id, bbox, score: t.score });
                }
            }
        }
        let max_age = self.cfg.max_age;
        self.tracks.retain(|t| t.kf.time_since_update <= max_age);
        out.sort_by_key(|o| o.track_id);
        Ok(out)
    }
}

/// Runs a fresh tracker over frames `1..=last_frame`, feeding empty frames
/// where there are no detections. `detections` may be in any order.
pub fn track_sequence(
    cfg: &AssociationConfig,
    detections: &[Detection],
    last_frame: u32,
) -> Result<Vec<(u32, TrackOutput)>> {
    let mut tracker = Tracker::new(*cfg)?;
    let mut by_frame: alloc::collections::BTreeMap<u32, Vec<Detection>> = Default::default();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let last_frame = last_frame.max(by_frame.keys().next_back().copied().unwrap_or(0));
    let mut out = Vec::new();
    for f in 1..=last_frame {
        let dets = by_frame.remove(&f).unwrap_or_default();
        out.extend(tracker.step(f, &dets)?.into_iter().map(|o| (f, o)));
    }
    Ok(out)
}
