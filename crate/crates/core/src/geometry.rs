//! Boxes, detections and the primitive measures shared by every stage.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_left: f64,
    y_top: f64,
    width: f64,
    height: f64,
}

impl BoundingBox {
    pub fn new(x_left: f64, y_top: f64, width: f64, height: f64) -> Result<Self> {
        if !(x_left.is_finite() && y_top.is_finite() && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidBox { reason: "non-finite coordinate" });
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidBox { reason: "non-positive size" });
        }
        Ok(Self { x_left, y_top, width, height })
    }

    /// Box with the given center and size.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    /// Inverse of [`BoundingBox::to_state`]: center, area and aspect (w / h).
    pub fn from_state(cx: f64, cy: f64, area: f64, aspect: f64) -> Result<Self> {
        if !(area > 0.0) {
            return Err(Error::InvalidBox { reason: "non-positive area" });
        }
        if !(aspect > 0.0) {
            return Err(Error::InvalidBox { reason: "non-positive aspect" });
        }
        let width = libm::sqrt(area * aspect);
        let height = area / width;
        Self::from_center(cx, cy, width, height)
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn y_top(&self) -> f64 {
        self.y_top
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn x_right(&self) -> f64 {
        self.x_left + self.width
    }

    pub fn y_bottom(&self) -> f64 {
        self.y_top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x_left + self.width / 2.0, self.y_top + self.height / 2.0)
    }

    /// `(cx, cy, area, aspect)` with aspect = width / height.
    pub fn to_state(&self) -> (f64, f64, f64, f64) {
        let (cx, cy) = self.center();
        (cx, cy, self.area(), self.width / self.height)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_left && x <= self.x_right() && y >= self.y_top && y <= self.y_bottom()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_right().min(other.x_right()) - self.x_left.max(other.x_left);
        let h = self.y_bottom().min(other.y_bottom()) - self.y_top.max(other.y_top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    // Side lengths recomputed from the edges so iou(a, a) is exactly 1.
    let span = |x: &BoundingBox| (x.x_right() - x.x_left) * (x.y_bottom() - x.y_top);
    let union = span(a) + span(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    libm::hypot(ax - bx, ay - by)
}

/// Row-major `a.len() x b.len()` IoU table.
pub fn iou_matrix(a: &[BoundingBox], b: &[BoundingBox]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(iou(x, y));
        }
    }
    out
}

fn check_unit(v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidScore(v))
    }
}

/// Appearance feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVec(Vec<f64>);

impl EmbeddingVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("zero dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("non-finite component"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }

    pub fn dot(&self, other: &EmbeddingVec) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Cosine similarity in [-1, 1]; fails on zero-norm inputs.
    pub fn cosine(&self, other: &EmbeddingVec) -> Result<f64> {
        let dot = self.dot(other)?;
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::InvalidEmbedding("zero-norm vector"));
        }
        Ok((dot / (na * nb)).clamp(-1.0, 1.0))
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidEmbedding("zero-norm vector"));
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }
}

/// A detector output for one frame (frames are 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub score: f64,
    pub embedding: Option<EmbeddingVec>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, score: f64) -> Result<Self> {
        if frame == 0 {
            return Err(Error::InvalidConfig("detection frame must be >= 1".into()));
        }
        Ok(Self { frame, bbox, score: check_unit(score)?, embedding: None })
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVec) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// Student or teacher head output for one anchor point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BoundingBox,
    class_prob: f64,
    objectness: f64,
}

impl Prediction {
    pub fn new(bbox: BoundingBox, class_prob: f64, objectness: f64) -> Result<Self> {
        Ok(Self { bbox, class_prob: check_unit(class_prob)?, objectness: check_unit(objectness)? })
    }

    pub fn class_prob(&self) -> f64 {
        self.class_prob
    }

    pub fn objectness(&self) -> f64 {
        self.objectness
    }

    /// Combined detection confidence `class_prob * objectness`.
    pub fn score(&self) -> f64 {
        self.class_prob * self.objectness
    }
}

/// Teacher-derived (or ground-truth) target box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoBox {
    pub bbox: BoundingBox,
    confidence: f64,
}

impl PseudoBox {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self> {
        Ok(Self { bbox, confidence: check_unit(confidence)? })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}
