//! Synthetic benchmark scenarios: constant-velocity pedestrian boxes with
//! scripted crossings, and a detector-corruption model whose miss rate,
//! jitter, false positives and embedding noise grow with a low-light
//! severity knob.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Detection, EmbeddingVec};
use crate::metrics::{GtRecord, GtSequence};

pub const PEDESTRIAN_ASPECT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crossing {
    pub frame: u32,
    /// 0-based object indices; ids on output are index + 1.
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub arena_width: f64,
    pub arena_height: f64,
    pub n_objects: usize,
    pub duration: u32,
    pub crossings: Vec<Crossing>,
    pub seed: u64,
    pub height_range: (f64, f64),
    /// Pixels per frame.
    pub speed_range: (f64, f64),
    /// Range of the heading difference between two crossing objects, radians.
    pub crossing_angle: (f64, f64),
}

impl ScenarioSpec {
    pub fn new(n_objects: usize, duration: u32, seed: u64) -> Self {
        Self {
            arena_width: 1280.0,
            arena_height: 720.0,
            n_objects,
            duration,
            crossings: Vec::new(),
            seed,
            height_range: (80.0, 140.0),
            speed_range: (2.0, 6.0),
            crossing_angle: (core::f64::consts::FRAC_PI_6, 5.0 * core::f64::consts::FRAC_PI_6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleScenario(m.into()));
        if !(self.arena_width > 0.0 && self.arena_height > 0.0) || self.n_objects == 0 || self.duration == 0 {
            return bad("arena, object count and duration must be positive");
        }
        let (h0, h1) = self.height_range;
        if !(h0 > 0.0 && h0 <= h1 && h1 < self.arena_height && h1 * PEDESTRIAN_ASPECT < self.arena_width) {
            return bad("box heights must be positive and fit in the arena");
        }
        if !(self.speed_range.0 >= 0.0 && self.speed_range.0 <= self.speed_range.1) {
            return bad("speed range must be ordered and non-negative");
        }
        let mut used = vec![false; self.n_objects];
        for c in &self.crossings {
            if c.frame == 0 || c.frame > self.duration {
                return Err(Error::InfeasibleScenario(format!("crossing frame {} outside 1..={}", c.frame, self.duration)));
            }
            if c.a == c.b || c.a >= self.n_objects || c.b >= self.n_objects {
                return Err(Error::InfeasibleScenario(format!("crossing pair ({}, {}) is invalid", c.a, c.b)));
            }
            for o in [c.a, c.b] {
                if used[o] {
                    return Err(Error::InfeasibleScenario(format!("object {o} is in more than one crossing")));
                }
                used[o] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub width: f64,
    pub height: f64,
    /// Center at frame 1.
    pub start: (f64, f64),
    pub velocity: (f64, f64),
}

impl Trajectory {
    pub fn center(&self, frame: u32) -> (f64, f64) {
        let t = f64::from(frame) - 1.0;
        (self.start.0 + t * self.velocity.0, self.start.1 + t * self.velocity.1)
    }

    pub fn bbox(&self, frame: u32) -> BoundingBox {
        let (cx, cy) = self.center(frame);
        BoundingBox::from_center(cx, cy, self.width, self.height).expect("positive size")
    }
}

struct Arena {
    w: f64,
    h: f64,
}

impl Arena {
    fn inside(&self, c: (f64, f64), bw: f64, bh: f64) -> bool {
        c.0 - bw / 2.0 >= 0.0 && c.0 + bw / 2.0 <= self.w && c.1 - bh / 2.0 >= 0.0 && c.1 + bh / 2.0 <= self.h
    }

    fn random_center(&self, rng: &mut ChaCha8Rng, bw: f64, bh: f64) -> (f64, f64) {
        (rng.random_range(bw / 2.0..=self.w - bw / 2.0), rng.random_range(bh / 2.0..=self.h - bh / 2.0))
    }
}

/// Velocity through `anchor` at `frame` whose whole path stays in the arena;
/// falls back to slower speeds, and to standing still, when needed.
fn fit_velocity(
    rng: &mut ChaCha8Rng,
    arena: &Arena,
    duration: u32,
    anchor: (f64, f64),
    frame: u32,
    size: (f64, f64),
    speed_range: (f64, f64),
    heading: impl Fn(&mut ChaCha8Rng) -> f64,
) -> (f64, f64) {
    let mut scale = 1.0;
    for attempt in 0..400 {
        if attempt > 0 && attempt % 50 == 0 {
            scale *= 0.5;
        }
        let speed = scale * rng.random_range(speed_range.0..=speed_range.1);
        let th = heading(rng);
        let v = (speed * libm::cos(th), speed * libm::sin(th));
        let at = |f: u32| {
            let dt = f64::from(f) - f64::from(frame);
            (anchor.0 + dt * v.0, anchor.1 + dt * v.1)
        };
        if arena.inside(at(1), size.0, size.1) && arena.inside(at(duration), size.0, size.1) {
            return v;
        }
    }
    (0.0, 0.0)
}

pub fn generate_trajectories(spec: &ScenarioSpec) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arena = Arena { w: spec.arena_width, h: spec.arena_height };
    let mut heights: Vec<f64> =
        (0..spec.n_objects).map(|_| rng.random_range(spec.height_range.0..=spec.height_range.1)).collect();
    for c in &spec.crossings {
        let ratio = rng.random_range(0.9..=1.1);
        heights[c.b] = (heights[c.a] * ratio).clamp(spec.height_range.0, spec.height_range.1);
    }
    let size = |i: usize| (heights[i] * PEDESTRIAN_ASPECT, heights[i]);
    let mut out: Vec<Option<Trajectory>> = vec![None; spec.n_objects];
    let build = |i: usize, anchor: (f64, f64), frame: u32, v: (f64, f64)| {
        let dt = 1.0 - f64::from(frame);
        Trajectory {
            id: i as u64 + 1,
            width: size(i).0,
            height: size(i).1,
            start: (anchor.0 + dt * v.0, anchor.1 + dt * v.1),
            velocity: v,
        }
    };

    for c in &spec.crossings {
        let (sa, sb) = (size(c.a), size(c.b));
        let meet = arena.random_center(&mut rng, sa.0.max(sb.0), sa.1.max(sb.1));
        let base = rng.random_range(0.0..core::f64::consts::TAU);
        let va = fit_velocity(&mut rng, &arena, spec.duration, meet, c.frame, sa, spec.speed_range, |_| base);
        let (lo, hi) = spec.crossing_angle;
        let heading_a = libm::atan2(va.1, va.0);
        let vb = fit_velocity(&mut rng, &arena, spec.duration, meet, c.frame, sb, spec.speed_range, |r| {
            let d = r.random_range(lo..=hi);
            if r.random_bool(0.5) {
                heading_a + d
            } else {
                heading_a - d
            }
        });
        out[c.a] = Some(build(c.a, meet, c.frame, va));
        out[c.b] = Some(build(c.b, meet, c.frame, vb));
    }
    for i in 0..spec.n_objects {
        if out[i].is_none() {
            let s = size(i);
            let anchor = arena.random_center(&mut rng, s.0, s.1);
            let v = fit_velocity(&mut rng, &arena, spec.duration, anchor, 1, s, spec.speed_range, |r| {
                r.random_range(0.0..core::f64::consts::TAU)
            });
            out[i] = Some(build(i, anchor, 1, v));
        }
    }
    Ok(out.into_iter().map(|t| t.expect("every object placed")).collect())
}

pub fn trajectories_to_gt(trajectories: &[Trajectory], duration: u32) -> Result<GtSequence> {
    let mut recs = Vec::with_capacity(trajectories.len() * duration as usize);
    for f in 1..=duration {
        for t in trajectories {
            recs.push(GtRecord::simple(f, t.id, t.bbox(f)));
        }
    }
    GtSequence::new(recs)
}

pub fn generate_gt(spec: &ScenarioSpec) -> Result<GtSequence> {
    trajectories_to_gt(&generate_trajectories(spec)?, spec.duration)
}

/// `n_pairs` crossing pairs plus `extra` free objects; crossings are spread
/// over the middle half of the sequence.
pub fn crossing_scenario(n_pairs: usize, extra: usize, duration: u32, seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::new(2 * n_pairs + extra, duration, seed);
    let (lo, hi) = (duration / 4 + 1, (3 * duration / 4).max(duration / 4 + 1));
    spec.crossings = (0..n_pairs)
        .map(|k| {
            let frame = if n_pairs == 1 { (lo + hi) / 2 } else { lo + (hi - lo) * k as u32 / (n_pairs as u32 - 1) };
            Crossing { frame, a: 2 * k, b: 2 * k + 1 }
        })
        .collect();
    spec
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionModel {
    pub p_miss: f64,
    pub fp_per_frame: f64,
    pub box_jitter_sigma: f64,
    pub embedding_noise_sigma: f64,
    /// Extra miss probability for a box mostly hidden behind a nearer one.
    pub occlusion_miss_boost: f64,
    pub severity: f64,
    pub seed: u64,
}

impl CorruptionModel {
    pub fn clean(seed: u64) -> Self {
        Self {
            p_miss: 0.0,
            fp_per_frame: 0.0,
            box_jitter_sigma: 0.0,
            embedding_noise_sigma: 0.0,
            occlusion_miss_boost: 0.0,
            severity: 0.0,
            seed,
        }
    }

    /// Base rates of a moderately noisy detector, scaled by `severity`.
    pub fn low_light(severity: f64, seed: u64) -> Self {
        Self {
            p_miss: 0.05,
            fp_per_frame: 0.5,
            box_jitter_sigma: 1.5,
            embedding_noise_sigma: 0.1,
            occlusion_miss_boost: 0.25,
            severity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_miss)
            && (0.0..=1.0).contains(&self.severity)
            && (0.0..=1.0).contains(&self.occlusion_miss_boost)
            && self.fp_per_frame >= 0.0
            && self.box_jitter_sigma >= 0.0
            && self.embedding_noise_sigma >= 0.0
            && self.fp_per_frame.is_finite()
            && self.box_jitter_sigma.is_finite()
            && self.embedding_noise_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("corruption model parameters out of range".into()))
        }
    }

    /// Multiplier applied to every base rate: `1 + 3 * severity`.
    pub fn factor(&self) -> f64 {
        1.0 + 3.0 * self.severity
    }

    pub fn effective_miss(&self) -> f64 {
        (self.p_miss * self.factor()).min(1.0)
    }

    pub fn effective_fp(&self) -> f64 {
        self.fp_per_frame * self.factor()
    }

    pub fn effective_jitter(&self) -> f64 {
        self.box_jitter_sigma * self.factor()
    }

    pub fn effective_embedding_noise(&self) -> f64 {
        self.embedding_noise_sigma * self.factor()
    }

    pub fn effective_occlusion_boost(&self) -> f64 {
        (self.occlusion_miss_boost * self.factor()).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDetection {
    pub detection: Detection,
    /// Ground-truth id for true detections, `None` for false positives.
    pub source: Option<u64>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn noisy_embedding(rng: &mut ChaCha8Rng, proto: &[f64], sigma: f64) -> EmbeddingVec {
    let per = sigma / libm::sqrt(proto.len() as f64);
    let mut v: Vec<f64> = proto.to_vec();
    if per > 0.0 {
        let n = Normal::new(0.0, per).expect("positive sigma");
        for x in &mut v {
            *x += n.sample(rng);
        }
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 1e-12 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v = proto.to_vec();
    }
    EmbeddingVec::new(v).expect("finite embedding")
}

/// Fraction of `b`'s area covered by `a`.
fn coverage(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.intersection_area(b) / b.area()
}

/// Detections and embeddings for every frame of `gt`, listed frame by frame
/// in a seeded random order within each frame.
pub fn corrupt(
    gt: &GtSequence,
    model: &CorruptionModel,
    emb_dim: usize,
    arena: (f64, f64),
) -> Result<Vec<SynthDetection>> {
    model.validate()?;
    if emb_dim == 0 {
        return Err(Error::InvalidEmbedding("zero dimension"));
    }
    let mut proto_rng = ChaCha8Rng::seed_from_u64(model.seed);
    proto_rng.set_stream(1);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);

    let mut ids: Vec<u64> = gt.records().iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let protos: Vec<Vec<f64>> = ids.iter().map(|_| random_unit(&mut proto_rng, emb_dim)).collect();

    let mut by_frame: alloc::collections::BTreeMap<u32, Vec<&GtRecord>> = alloc::collections::BTreeMap::new();
    for r in gt.records() {
        by_frame.entry(r.frame).or_default().push(r);
    }

    let jitter = model.effective_jitter();
    let jit = (jitter > 0.0).then(|| Normal::new(0.0, jitter).expect("positive sigma"));
    let fp_rate = model.effective_fp();
    let poisson = (fp_rate > 0.0).then(|| Poisson::new(fp_rate).expect("positive rate"));
    let (p_miss, boost) = (model.effective_miss(), model.effective_occlusion_boost());
    let score_spread = 0.3 * model.severity;

    let mut out = Vec::new();
    for (&frame, recs) in &by_frame {
        let mut recs = recs.clone();
        recs.sort_by_key(|r| r.id);
        let mut dets = Vec::new();
        for r in &recs {
            let occluded = recs.iter().any(|o| {
                o.id != r.id && o.bbox.y_bottom() > r.bbox.y_bottom() && coverage(&o.bbox, &r.bbox) > 0.5
            });
            let p = if occluded { (p_miss + boost).min(1.0) } else { p_miss };
            if p > 0.0 && rng.random_bool(p) {
                continue;
            }
            let b = match &jit {
                None => r.bbox,
                Some(n) => {
                    let (cx, cy) = r.bbox.center();
                    let w = (r.bbox.width() + n.sample(&mut rng)).max(2.0);
                    let h = (r.bbox.height() + n.sample(&mut rng)).max(2.0);
                    BoundingBox::from_center(cx + n.sample(&mut rng), cy + n.sample(&mut rng), w, h)?
                }
            };
            let score = 1.0 - score_spread * rng.random::<f64>();
            let k = ids.binary_search(&r.id).expect("id collected");
            let emb = noisy_embedding(&mut rng, &protos[k], model.effective_embedding_noise());
            dets.push(SynthDetection {
                detection: Detection::new(frame, b, score)?.with_embedding(emb),
                source: Some(r.id),
            });
        }
        let n_fp = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_fp {
            let h = rng.random_range(60.0..=140.0f64).min(arena.1 * 0.9);
            let w = h * PEDESTRIAN_ASPECT;
            let cx = rng.random_range(w / 2.0..=(arena.0 - w / 2.0).max(w / 2.0));
            let cy = rng.random_range(h / 2.0..=(arena.1 - h / 2.0).max(h / 2.0));
            let score = rng.random_range(0.3..=0.7);
            let emb = EmbeddingVec::new(random_unit(&mut rng, emb_dim))?;
            dets.push(SynthDetection {
                detection: Detection::new(frame, BoundingBox::from_center(cx, cy, w, h)?, score)?.with_embedding(emb),
                source: None,
            });
        }
        dets.shuffle(&mut rng);
        out.extend(dets);
    }
    Ok(out)
}

/// Mean IoU between each true detection and its source box; a jitter proxy.
pub fn mean_true_iou(gt: &GtSequence, dets: &[SynthDetection]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for d in dets {
        if let Some(id) = d.source {
            if let Some(g) = gt.records().iter().find(|g| g.frame == d.detection.frame && g.id == id) {
                sum += iou(&g.bbox, &d.detection.bbox);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
