//! Tracking and detection evaluation: CLEAR (MOTA, FP, FN, IDSW), IDF1,
//! HOTA with its DetA / AssA decomposition, and AP / AR.
//!
//! Every metric is computed from an accumulator so that several sequences
//! can be combined by summing counts first.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::lap::{solve, CostMatrix};

pub const PEDESTRIAN_CLASS: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRecord {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    /// 0 marks a box to ignore.
    pub conf: f64,
    /// `-1` means unspecified.
    pub class: i32,
    /// Negative means unspecified.
    pub visibility: f64,
}

impl GtRecord {
    pub fn simple(frame: u32, id: u64, bbox: BoundingBox) -> Self {
        Self { frame, id, bbox, conf: 1.0, class: PEDESTRIAN_CLASS, visibility: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResRecord {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl ResRecord {
    pub fn new(frame: u32, id: u64, bbox: BoundingBox) -> Self {
        Self { frame, id, bbox, score: 1.0 }
    }
}

fn check_unique(keys: impl Iterator<Item = (u32, u64)>, what: &str) -> Result<()> {
    let mut seen = BTreeMap::new();
    for k in keys {
        if seen.insert(k, ()).is_some() {
            return Err(Error::InvalidConfig(alloc::format!(
                "duplicate {what} entry for frame {} id {}",
                k.0,
                k.1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GtSequence {
    records: Vec<GtRecord>,
}

impl GtSequence {
    pub fn new(records: Vec<GtRecord>) -> Result<Self> {
        check_unique(records.iter().map(|r| (r.frame, r.id)), "ground-truth")?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[GtRecord] {
        &self.records
    }

    /// Drops ignored, low-visibility and non-target-class boxes.
    pub fn filtered(&self, filter: &GtFilter) -> GtSequence {
        GtSequence { records: self.records.iter().filter(|r| filter.keeps(r)).copied().collect() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultSequence {
    records: Vec<ResRecord>,
}

impl ResultSequence {
    pub fn new(records: Vec<ResRecord>) -> Result<Self> {
        check_unique(records.iter().map(|r| (r.frame, r.id)), "result")?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ResRecord] {
        &self.records
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFilter {
    pub min_visibility: f64,
    pub classes: Vec<i32>,
}

impl Default for GtFilter {
    fn default() -> Self {
        Self { min_visibility: 0.1, classes: vec![PEDESTRIAN_CLASS] }
    }
}

impl GtFilter {
    pub fn keeps(&self, r: &GtRecord) -> bool {
        let vis_ok = r.visibility < 0.0 || r.visibility >= self.min_visibility;
        let class_ok = r.class == -1 || self.classes.contains(&r.class);
        r.conf != 0.0 && vis_ok && class_ok
    }
}

/// One frame's boxes, sorted by id so results never depend on listing order.
#[derive(Debug, Clone, Default)]
struct FrameBoxes {
    gt_ids: Vec<u64>,
    gt: Vec<BoundingBox>,
    res_ids: Vec<u64>,
    res: Vec<BoundingBox>,
}

impl FrameBoxes {
    fn iou(&self, g: usize, r: usize) -> f64 {
        iou(&self.gt[g], &self.res[r])
    }
}

fn frames(gt: &GtSequence, res: &ResultSequence) -> Vec<FrameBoxes> {
    let mut map: BTreeMap<u32, (Vec<(u64, BoundingBox)>, Vec<(u64, BoundingBox)>)> = BTreeMap::new();
    for r in &gt.records {
        map.entry(r.frame).or_default().0.push((r.id, r.bbox));
    }
    for r in &res.records {
        map.entry(r.frame).or_default().1.push((r.id, r.bbox));
    }
    map.into_values()
        .map(|(mut g, mut r)| {
            g.sort_by_key(|x| x.0);
            r.sort_by_key(|x| x.0);
            FrameBoxes {
                gt_ids: g.iter().map(|x| x.0).collect(),
                gt: g.iter().map(|x| x.1).collect(),
                res_ids: r.iter().map(|x| x.0).collect(),
                res: r.iter().map(|x| x.1).collect(),
            }
        })
        .collect()
}

fn nonempty(gt: &GtSequence) -> Result<()> {
    if gt.records.is_empty() {
        Err(Error::EmptyGroundTruth)
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------- CLEAR

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClearCounts {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub iou_sum: f64,
}

impl ClearCounts {
    pub fn merge(&mut self, o: &ClearCounts) {
        self.gt += o.gt;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
        self.iou_sum += o.iou_sum;
    }

    pub fn mota(&self) -> Result<f64> {
        if self.gt == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        Ok(1.0 - (self.fp + self.fn_ + self.idsw) as f64 / self.gt as f64)
    }

    /// Mean IoU of matched pairs; 0 when nothing matched.
    pub fn motp(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.iou_sum / self.tp as f64
        }
    }
}

/// Per-frame matching: previous identities are kept first when they still
/// overlap enough, then the remainder is matched by Hungarian on `1 - IoU`.
pub fn clear_counts(gt: &GtSequence, res: &ResultSequence, iou_threshold: f64) -> Result<ClearCounts> {
    nonempty(gt)?;
    let mut c = ClearCounts::default();
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    for f in frames(gt, res) {
        let (ng, nr) = (f.gt.len(), f.res.len());
        let mut gt_match: Vec<Option<usize>> = vec![None; ng];
        let mut res_taken = vec![false; nr];

        let mut carry = CostMatrix::filled(ng, nr, f64::INFINITY);
        for g in 0..ng {
            if let Some(prev) = last.get(&f.gt_ids[g]) {
                if let Ok(r) = f.res_ids.binary_search(prev) {
                    let v = f.iou(g, r);
                    if v >= iou_threshold {
                        carry.set(g, r, 1.0 - v);
                    }
                }
            }
        }
        for (g, r) in solve(&carry).matches {
            gt_match[g] = Some(r);
            res_taken[r] = true;
        }

        let free_g: Vec<usize> = (0..ng).filter(|&g| gt_match[g].is_none()).collect();
        let free_r: Vec<usize> = (0..nr).filter(|&r| !res_taken[r]).collect();
        let mut rest = CostMatrix::filled(free_g.len(), free_r.len(), f64::INFINITY);
        for (i, &g) in free_g.iter().enumerate() {
            for (j, &r) in free_r.iter().enumerate() {
                let v = f.iou(g, r);
                if v >= iou_threshold {
                    rest.set(i, j, 1.0 - v);
                }
            }
        }
        for (i, j) in solve(&rest).matches {
            gt_match[free_g[i]] = Some(free_r[j]);
            res_taken[free_r[j]] = true;
        }

        c.gt += ng;
        for g in 0..ng {
            match gt_match[g] {
                Some(r) => {
                    c.tp += 1;
                    c.iou_sum += f.iou(g, r);
                    let rid = f.res_ids[r];
                    if let Some(old) = last.insert(f.gt_ids[g], rid) {
                        if old != rid {
                            c.idsw += 1;
                        }
                    }
                }
                None => c.fn_ += 1,
            }
        }
        c.fp += res_taken.iter().filter(|t| !**t).count();
    }
    Ok(c)
}

/// `(mota, fp, fn, idsw)`.
pub fn clear_metrics(gt: &GtSequence, res: &ResultSequence, iou_threshold: f64) -> Result<(f64, usize, usize, usize)> {
    let c = clear_counts(gt, res, iou_threshold)?;
    Ok((c.mota()?, c.fp, c.fn_, c.idsw))
}

// ----------------------------------------------------------------- IDF1

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdCounts {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdCounts {
    pub fn merge(&mut self, o: &IdCounts) {
        self.idtp += o.idtp;
        self.idfp += o.idfp;
        self.idfn += o.idfn;
    }

    pub fn idf1(&self) -> f64 {
        let d = 2 * self.idtp + self.idfp + self.idfn;
        if d == 0 {
            0.0
        } else {
            2.0 * self.idtp as f64 / d as f64
        }
    }
}

/// Number of frames each (gt id, result id) pair overlaps at `>= iou_threshold`,
/// with the id lists in ascending order.
pub fn id_overlap_table(
    gt: &GtSequence,
    res: &ResultSequence,
    iou_threshold: f64,
) -> (Vec<u64>, Vec<u64>, Vec<Vec<usize>>) {
    let mut gids: Vec<u64> = gt.records.iter().map(|r| r.id).collect();
    let mut rids: Vec<u64> = res.records.iter().map(|r| r.id).collect();
    gids.sort_unstable();
    gids.dedup();
    rids.sort_unstable();
    rids.dedup();
    let mut table = vec![vec![0usize; rids.len()]; gids.len()];
    for f in frames(gt, res) {
        for g in 0..f.gt.len() {
            let gi = gids.binary_search(&f.gt_ids[g]).unwrap();
            for r in 0..f.res.len() {
                if f.iou(g, r) >= iou_threshold {
                    let ri = rids.binary_search(&f.res_ids[r]).unwrap();
                    table[gi][ri] += 1;
                }
            }
        }
    }
    (gids, rids, table)
}

pub fn id_counts(gt: &GtSequence, res: &ResultSequence, iou_threshold: f64) -> Result<IdCounts> {
    nonempty(gt)?;
    let (gids, rids, table) = id_overlap_table(gt, res, iou_threshold);
    let mut cost = CostMatrix::filled(gids.len(), rids.len(), 0.0);
    for (g, row) in table.iter().enumerate() {
        for (r, &n) in row.iter().enumerate() {
            cost.set(g, r, -(n as f64));
        }
    }
    let idtp: usize = solve(&cost).matches.iter().map(|&(g, r)| table[g][r]).sum();
    Ok(IdCounts { idtp, idfp: res.records.len() - idtp, idfn: gt.records.len() - idtp })
}

pub fn idf1(gt: &GtSequence, res: &ResultSequence, iou_threshold: f64) -> Result<f64> {
    Ok(id_counts(gt, res, iou_threshold)?.idf1())
}

// ----------------------------------------------------------------- HOTA

pub const HOTA_ALPHAS: usize = 19;

/// `0.05, 0.10, ..., 0.95`.
pub fn hota_alphas() -> [f64; HOTA_ALPHAS] {
    core::array::from_fn(|i| 0.05 * (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotaCounts {
    pub tp: [usize; HOTA_ALPHAS],
    pub fn_: [usize; HOTA_ALPHAS],
    pub fp: [usize; HOTA_ALPHAS],
    /// Sum over true positives of their association score.
    pub ass_sum: [f64; HOTA_ALPHAS],
}

impl Default for HotaCounts {
    fn default() -> Self {
        Self { tp: [0; HOTA_ALPHAS], fn_: [0; HOTA_ALPHAS], fp: [0; HOTA_ALPHAS], ass_sum: [0.0; HOTA_ALPHAS] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotaScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha_hota: [f64; HOTA_ALPHAS],
    pub per_alpha_deta: [f64; HOTA_ALPHAS],
    pub per_alpha_assa: [f64; HOTA_ALPHAS],
}

impl HotaCounts {
    pub fn merge(&mut self, o: &HotaCounts) {
        for a in 0..HOTA_ALPHAS {
            self.tp[a] += o.tp[a];
            self.fn_[a] += o.fn_[a];
            self.fp[a] += o.fp[a];
            self.ass_sum[a] += o.ass_sum[a];
        }
    }

    pub fn scores(&self) -> HotaScores {
        let mut s = HotaScores {
            hota: 0.0,
            deta: 0.0,
            assa: 0.0,
            per_alpha_hota: [0.0; HOTA_ALPHAS],
            per_alpha_deta: [0.0; HOTA_ALPHAS],
            per_alpha_assa: [0.0; HOTA_ALPHAS],
        };
        for a in 0..HOTA_ALPHAS {
            let den = self.tp[a] + self.fn_[a] + self.fp[a];
            let deta = if den == 0 { 0.0 } else { self.tp[a] as f64 / den as f64 };
            let assa = if self.tp[a] == 0 { 0.0 } else { self.ass_sum[a] / self.tp[a] as f64 };
            s.per_alpha_deta[a] = deta;
            s.per_alpha_assa[a] = assa;
            s.per_alpha_hota[a] = libm::sqrt(deta * assa);
        }
        let n = HOTA_ALPHAS as f64;
        s.hota = s.per_alpha_hota.iter().sum::<f64>() / n;
        s.deta = s.per_alpha_deta.iter().sum::<f64>() / n;
        s.assa = s.per_alpha_assa.iter().sum::<f64>() / n;
        s
    }
}

/// Soft identity alignment between every gt id and result id, used to
/// weight the per-frame matching.
fn global_alignment(fr: &[FrameBoxes], gids: &[u64], rids: &[u64]) -> Vec<Vec<f64>> {
    let mut gcount = vec![0.0; gids.len()];
    let mut rcount = vec![0.0; rids.len()];
    let mut potential = vec![vec![0.0; rids.len()]; gids.len()];
    for f in fr {
        let gi: Vec<usize> = f.gt_ids.iter().map(|i| gids.binary_search(i).unwrap()).collect();
        let ri: Vec<usize> = f.res_ids.iter().map(|i| rids.binary_search(i).unwrap()).collect();
        for &g in &gi {
            gcount[g] += 1.0;
        }
        for &r in &ri {
            rcount[r] += 1.0;
        }
        let sim: Vec<Vec<f64>> = (0..f.gt.len()).map(|g| (0..f.res.len()).map(|r| f.iou(g, r)).collect()).collect();
        let row_sum: Vec<f64> = sim.iter().map(|row| row.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..f.res.len()).map(|r| sim.iter().map(|row| row[r]).sum()).collect();
        for g in 0..f.gt.len() {
            for r in 0..f.res.len() {
                let den = row_sum[g] + col_sum[r] - sim[g][r];
                if den > 0.0 {
                    potential[gi[g]][ri[r]] += sim[g][r] / den;
                }
            }
        }
    }
    for g in 0..gids.len() {
        for r in 0..rids.len() {
            let den = gcount[g] + rcount[r] - potential[g][r];
            potential[g][r] = if den > 0.0 { potential[g][r] / den } else { 0.0 };
        }
    }
    potential
}

pub fn hota_counts(gt: &GtSequence, res: &ResultSequence) -> Result<HotaCounts> {
    nonempty(gt)?;
    let fr = frames(gt, res);
    let (gids, rids, _) = id_overlap_table(gt, res, f64::INFINITY);
    let align = global_alignment(&fr, &gids, &rids);
    let alphas = hota_alphas();

    let mut counts = HotaCounts::default();
    let mut pair_matches = vec![vec![vec![0usize; rids.len()]; gids.len()]; HOTA_ALPHAS];
    let mut gcount = vec![0usize; gids.len()];
    let mut rcount = vec![0usize; rids.len()];
    for f in &fr {
        let gi: Vec<usize> = f.gt_ids.iter().map(|i| gids.binary_search(i).unwrap()).collect();
        let ri: Vec<usize> = f.res_ids.iter().map(|i| rids.binary_search(i).unwrap()).collect();
        for &g in &gi {
            gcount[g] += 1;
        }
        for &r in &ri {
            rcount[r] += 1;
        }
        let mut cost = CostMatrix::filled(f.gt.len(), f.res.len(), 0.0);
        for g in 0..f.gt.len() {
            for r in 0..f.res.len() {
                cost.set(g, r, -(align[gi[g]][ri[r]] * f.iou(g, r)));
            }
        }
        let matches = solve(&cost).matches;
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut tp = 0;
            for &(g, r) in &matches {
                if f.iou(g, r) >= alpha - 1e-10 {
                    tp += 1;
                    pair_matches[a][gi[g]][ri[r]] += 1;
                }
            }
            counts.tp[a] += tp;
            counts.fn_[a] += f.gt.len() - tp;
            counts.fp[a] += f.res.len() - tp;
        }
    }
    for a in 0..HOTA_ALPHAS {
        for g in 0..gids.len() {
            for r in 0..rids.len() {
                let m = pair_matches[a][g][r];
                if m > 0 {
                    let score = m as f64 / (gcount[g] + rcount[r] - m) as f64;
                    counts.ass_sum[a] += m as f64 * score;
                }
            }
        }
    }
    Ok(counts)
}

/// `(hota, deta, assa)`.
pub fn hota(gt: &GtSequence, res: &ResultSequence) -> Result<(f64, f64, f64)> {
    let s = hota_counts(gt, res)?.scores();
    Ok((s.hota, s.deta, s.assa))
}

// ----------------------------------------------------------- detection AP

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApInterpolation {
    /// Precision envelope sampled at recall 0, 0.01, ..., 1.
    #[default]
    Points101,
    /// Exact area under the precision envelope.
    Continuous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ApScores {
    pub ap50: f64,
    pub ap50_95: f64,
    pub ar: f64,
}

/// Precision envelope area for a score-sorted list of hit flags.
fn average_precision(hits: &[bool], n_gt: usize, mode: ApInterpolation) -> (f64, f64) {
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        if h {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let max_recall = recall.last().copied().unwrap_or(0.0);
    let ap = match mode {
        ApInterpolation::Points101 => {
            let mut sum = 0.0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                let idx = recall.partition_point(|&x| x < r - 1e-12);
                if idx < precision.len() {
                    sum += precision[idx];
                }
            }
            sum / 101.0
        }
        ApInterpolation::Continuous => {
            let mut area = 0.0;
            let mut prev_r = 0.0;
            for i in 0..recall.len() {
                area += (recall[i] - prev_r) * precision[i];
                prev_r = recall[i];
            }
            area
        }
    };
    (ap, max_recall)
}

/// Score-descending greedy matching per IoU threshold, each prediction
/// taking the best-overlapping free gt box in its frame.
pub fn detection_ap_with(
    gt: &[(u32, BoundingBox)],
    preds: &[(u32, BoundingBox, f64)],
    mode: ApInterpolation,
) -> Result<ApScores> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(&p.2)) {
        return Err(Error::InvalidScore(p.2));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].2.total_cmp(&preds[a].2).then(a.cmp(&b)));
    let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, g) in gt.iter().enumerate() {
        by_frame.entry(g.0).or_default().push(i);
    }

    let mut aps = Vec::new();
    let mut recalls = Vec::new();
    for t in 0..10 {
        let thr = 0.5 + 0.05 * t as f64;
        let mut taken = vec![false; gt.len()];
        let mut hits = Vec::with_capacity(order.len());
        for &p in &order {
            let (frame, pb, _) = preds[p];
            let mut best: Option<(usize, f64)> = None;
            for &g in by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]) {
                if taken[g] {
                    continue;
                }
                let v = iou(&pb, &gt[g].1);
                if v >= thr - 1e-10 && best.map_or(true, |(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            hits.push(best.is_some());
        }
        let (ap, r) = average_precision(&hits, gt.len(), mode);
        aps.push(ap);
        recalls.push(r);
    }
    Ok(ApScores {
        ap50: aps[0],
        ap50_95: aps.iter().sum::<f64>() / aps.len() as f64,
        ar: recalls.iter().sum::<f64>() / recalls.len() as f64,
    })
}

pub fn detection_ap(gt: &[(u32, BoundingBox)], preds: &[(u32, BoundingBox, f64)]) -> Result<ApScores> {
    detection_ap_with(gt, preds, ApInterpolation::default())
}

// --------------------------------------------------------------- report

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricReport {
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt_count: usize,
    pub ap50: f64,
    pub ap50_95: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub filter: GtFilter,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, filter: GtFilter::default() }
    }
}

/// Counts for one or more sequences; [`MetricAccumulator::report`] turns
/// them into scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    pub clear: ClearCounts,
    pub id: IdCounts,
    pub hota: HotaCounts,
    ap_gt: Vec<(u32, BoundingBox)>,
    ap_preds: Vec<(u32, BoundingBox, f64)>,
    frame_offset: u32,
}

impl MetricAccumulator {
    pub fn add_sequence(&mut self, gt: &GtSequence, res: &ResultSequence, cfg: &EvalConfig) -> Result<()> {
        let gt = gt.filtered(&cfg.filter);
        self.clear.merge(&clear_counts(&gt, res, cfg.iou_threshold)?);
        self.id.merge(&id_counts(&gt, res, cfg.iou_threshold)?);
        self.hota.merge(&hota_counts(&gt, res)?);
        let last = gt
            .records
            .iter()
            .map(|r| r.frame)
            .chain(res.records.iter().map(|r| r.frame))
            .max()
            .unwrap_or(0);
        let off = self.frame_offset;
        self.ap_gt.extend(gt.records.iter().map(|r| (r.frame + off, r.bbox)));
        self.ap_preds.extend(res.records.iter().map(|r| (r.frame + off, r.bbox, r.score.clamp(0.0, 1.0))));
        self.frame_offset = off + last + 1;
        Ok(())
    }

    pub fn report(&self) -> Result<MetricReport> {
        let h = self.hota.scores();
        let ap = detection_ap(&self.ap_gt, &self.ap_preds)?;
        Ok(MetricReport {
            mota: self.clear.mota()?,
            motp: self.clear.motp(),
            idf1: self.id.idf1(),
            hota: h.hota,
            deta: h.deta,
            assa: h.assa,
            fp: self.clear.fp,
            fn_: self.clear.fn_,
            idsw: self.clear.idsw,
            gt_count: self.clear.gt,
            ap50: ap.ap50,
            ap50_95: ap.ap50_95,
            ar: ap.ar,
        })
    }
}

pub fn evaluate(gt: &GtSequence, res: &ResultSequence, cfg: &EvalConfig) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::default();
    acc.add_sequence(gt, res, cfg)?;
    acc.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, 10.0, 20.0).unwrap()
    }

    fn gt_of(rows: &[(u32, u64, f64)]) -> GtSequence {
        GtSequence::new(rows.iter().map(|&(f, i, x)| GtRecord::simple(f, i, bb(x))).collect()).unwrap()
    }

    fn res_of(rows: &[(u32, u64, f64)]) -> ResultSequence {
        ResultSequence::new(rows.iter().map(|&(f, i, x)| ResRecord::new(f, i, bb(x))).collect()).unwrap()
    }

    #[test]
    fn perfect_tracking() {
        let rows: Vec<(u32, u64, f64)> = (1..=5).flat_map(|f| [(f, 1, 0.0), (f, 2, 100.0)]).collect();
        let (g, r) = (gt_of(&rows), res_of(&rows));
        assert_eq!(clear_metrics(&g, &r, 0.5).unwrap(), (1.0, 0, 0, 0));
        assert_eq!(idf1(&g, &r, 0.5).unwrap(), 1.0);
        assert_eq!(hota(&g, &r).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mota_hand_case() {
        // 5 frames x 2 objects = 10 gt boxes. Frames 1 and 2 miss object 2,
        // frame 3 has a spurious box, and object 1 switches id at frame 4.
        let g: Vec<_> = (1..=5).flat_map(|f| [(f, 1, 0.0), (f, 2, 100.0)]).collect();
        let mut r = vec![(1, 10, 0.0), (2, 10, 0.0), (3, 10, 0.0), (3, 20, 100.0), (3, 99, 300.0)];
        r.extend([(4, 11, 0.0), (4, 20, 100.0), (5, 11, 0.0), (5, 20, 100.0)]);
        let (mota, fp, fn_, idsw) = clear_metrics(&gt_of(&g), &res_of(&r), 0.5).unwrap();
        assert_eq!((fp, fn_, idsw), (1, 2, 1));
        assert!((mota - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_results_are_all_misses() {
        let g = gt_of(&[(1, 1, 0.0), (2, 1, 0.0)]);
        assert_eq!(clear_metrics(&g, &ResultSequence::default(), 0.5).unwrap(), (0.0, 0, 2, 0));
        assert_eq!(clear_metrics(&GtSequence::default(), &res_of(&[]), 0.5), Err(Error::EmptyGroundTruth));
    }

    #[test]
    fn idsw_across_gap() {
        let g = gt_of(&[(1, 1, 0.0), (2, 1, 0.0), (3, 1, 0.0)]);
        let r = res_of(&[(1, 5, 0.0), (3, 6, 0.0)]);
        let (_, _, fn_, idsw) = clear_metrics(&g, &r, 0.5).unwrap();
        assert_eq!((fn_, idsw), (1, 1));
    }

    #[test]
    fn idf1_hand_case() {
        let g: Vec<_> = (1..=10).map(|f| (f, 1, 0.0)).collect();
        let r: Vec<_> = (1..=5).map(|f| (f, 7, 0.0)).collect();
        let v = idf1(&gt_of(&g), &res_of(&r), 0.5).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hota_split_track() {
        let g: Vec<_> = (1..=10).map(|f| (f, 1, 0.0)).collect();
        let r: Vec<_> = (1..=10).map(|f| (f, if f <= 5 { 1 } else { 2 }, 0.0)).collect();
        let (h, d, a) = hota(&gt_of(&g), &res_of(&r)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((a - 0.5).abs() < 1e-12);
        assert!((h - libm::sqrt(0.5)).abs() < 1e-12);
    }

    #[test]
    fn relabel_invariance() {
        let g: Vec<_> = (1..=6).flat_map(|f| [(f, 1, 0.0), (f, 2, 8.0 + f as f64)]).collect();
        let r: Vec<_> = (1..=6).flat_map(|f| [(f, 3, 1.0), (f, if f < 4 { 4 } else { 5 }, 9.0 + f as f64)]).collect();
        let r2: Vec<_> = r.iter().map(|&(f, i, x)| (f, 100 - i, x)).collect();
        let cfg = EvalConfig::default();
        assert_eq!(evaluate(&gt_of(&g), &res_of(&r), &cfg).unwrap(), evaluate(&gt_of(&g), &res_of(&r2), &cfg).unwrap());
    }

    #[test]
    fn filter_drops_ignored_boxes() {
        let mut recs: Vec<GtRecord> = (1..=3).map(|f| GtRecord::simple(f, 1, bb(0.0))).collect();
        recs.push(GtRecord { visibility: 0.05, ..GtRecord::simple(1, 2, bb(50.0)) });
        recs.push(GtRecord { class: 7, ..GtRecord::simple(1, 3, bb(80.0)) });
        recs.push(GtRecord { conf: 0.0, ..GtRecord::simple(1, 4, bb(120.0)) });
        let g = GtSequence::new(recs).unwrap().filtered(&GtFilter::default());
        assert_eq!(g.records().len(), 3);
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(GtSequence::new(vec![GtRecord::simple(1, 1, bb(0.0)), GtRecord::simple(1, 1, bb(5.0))]).is_err());
    }

    #[test]
    fn ap_examples() {
        let gt = [(1, bb(0.0)), (1, bb(100.0))];
        let perfect = [(1, bb(0.0), 1.0), (1, bb(100.0), 1.0)];
        let s = detection_ap(&gt, &perfect).unwrap();
        assert_eq!((s.ap50, s.ap50_95, s.ar), (1.0, 1.0, 1.0));
        assert_eq!(detection_ap(&gt, &[]).unwrap(), ApScores::default());
        assert!(detection_ap(&[], &perfect).is_err());

        let mixed = [(1, bb(0.0), 0.9), (1, bb(300.0), 0.4)];
        let c = detection_ap_with(&gt, &mixed, ApInterpolation::Continuous).unwrap();
        assert!((c.ap50 - 0.5).abs() < 1e-12);
        let p = detection_ap(&gt, &mixed).unwrap();
        assert!((p.ap50 - 51.0 / 101.0).abs() < 1e-12);
        assert!((p.ar - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sequences_combine_by_counts() {
        let g1 = gt_of(&[(1, 1, 0.0), (2, 1, 0.0)]);
        let g2 = gt_of(&[(1, 1, 0.0), (2, 1, 0.0)]);
        let r1 = res_of(&[(1, 1, 0.0), (2, 1, 0.0)]);
        let r2 = res_of(&[(1, 1, 0.0)]);
        let cfg = EvalConfig::default();
        let mut acc = MetricAccumulator::default();
        acc.add_sequence(&g1, &r1, &cfg).unwrap();
        acc.add_sequence(&g2, &r2, &cfg).unwrap();
        let rep = acc.report().unwrap();
        assert_eq!((rep.fn_, rep.gt_count), (1, 4));
        assert!((rep.mota - 0.75).abs() < 1e-12);
    }
}
