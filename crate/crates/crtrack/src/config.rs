//! Plain `key = value` configuration covering every tunable default.
//!
//! Lines starting with `#` are comments. Keys are applied in file order, so
//! a later key overrides an earlier one (including fields set by the
//! `corruption` preset). [`Settings::to_text`] writes the full effective
//! configuration back out in a form [`Settings::parse`] accepts.

use std::fmt::Display;
use std::str::FromStr;

use crtrack_core::anu::EmaConfig;
use crtrack_core::asa::{AsaConfig, AsaWeights, ClassTarget};
use crtrack_core::association::{AssociationConfig, SimilarityMode};
use crtrack_core::augment::AugmentRanges;
use crtrack_core::metrics::EvalConfig;
use crtrack_core::ssl_loss::{LossWeights, UnlabeledWeight, DEFAULT_PSEUDO_THRESHOLD};
use crtrack_core::synth::{CorruptionModel, Crossing, ScenarioSpec};

use crate::error::{IoError, LineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Random,
    Crossing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub kind: ScenarioKind,
    pub arena_width: f64,
    pub arena_height: f64,
    pub n_objects: usize,
    pub duration: u32,
    /// Number of scripted crossing pairs for [`ScenarioKind::Crossing`].
    pub crossing_pairs: usize,
    /// Explicit crossings; overrides `crossing_pairs` when non-empty.
    pub crossings: Vec<Crossing>,
    pub sequences: usize,
    pub emb_dim: usize,
    pub height_range: (f64, f64),
    pub speed_range: (f64, f64),
    pub corruption: CorruptionModel,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let spec = ScenarioSpec::new(5, 100, 0);
        Self {
            kind: ScenarioKind::Random,
            arena_width: spec.arena_width,
            arena_height: spec.arena_height,
            n_objects: 5,
            duration: 100,
            crossing_pairs: 2,
            crossings: Vec::new(),
            sequences: 1,
            emb_dim: 128,
            height_range: spec.height_range,
            speed_range: spec.speed_range,
            corruption: CorruptionModel::low_light(0.0, 0),
        }
    }
}

impl SynthSettings {
    /// Scenario for sequence `index` under the run seed.
    pub fn scenario(&self, seed: u64) -> Result<ScenarioSpec> {
        let pairs = match self.kind {
            ScenarioKind::Random => 0,
            ScenarioKind::Crossing => self.crossing_pairs,
        };
        if 2 * pairs > self.n_objects {
            return Err(IoError::Format(format!(
                "{} crossing pairs need at least {} objects",
                pairs,
                2 * pairs
            )));
        }
        let mut spec = crtrack_core::synth::crossing_scenario(pairs, self.n_objects - 2 * pairs, self.duration, seed);
        if !self.crossings.is_empty() {
            spec.crossings = self.crossings.clone();
        }
        spec.arena_width = self.arena_width;
        spec.arena_height = self.arena_height;
        spec.height_range = self.height_range;
        spec.speed_range = self.speed_range;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tracker: AssociationConfig,
    pub eval: EvalConfig,
    pub asa_weights: AsaWeights,
    pub asa: AsaConfig,
    pub loss: LossWeights,
    pub unlabeled_weight: UnlabeledWeight,
    pub pseudo_threshold: f64,
    pub image_diag: f64,
    pub ema: EmaConfig,
    pub augment: AugmentRanges,
    pub synth: SynthSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tracker: AssociationConfig::default(),
            eval: EvalConfig::default(),
            asa_weights: AsaWeights::default(),
            asa: AsaConfig::default(),
            loss: LossWeights::default(),
            unlabeled_weight: UnlabeledWeight::default(),
            pseudo_threshold: DEFAULT_PSEUDO_THRESHOLD,
            image_diag: (1920.0f64 * 1920.0 + 1080.0 * 1080.0).sqrt(),
            ema: EmaConfig::default(),
            augment: AugmentRanges::default(),
            synth: SynthSettings::default(),
        }
    }
}

type Getter = fn(&Settings) -> String;
type Setter = fn(&mut Settings, &str) -> std::result::Result<(), String>;

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn show<T: Display>(v: T) -> String {
    v.to_string()
}

macro_rules! field {
    ($key:literal, $($path:tt).+) => {
        (
            $key,
            (|s: &Settings| show(s.$($path).+)) as Getter,
            (|s: &mut Settings, v: &str| {
                s.$($path).+ = parse(v)?;
                Ok(())
            }) as Setter,
        )
    };
}

fn parse_crossings(v: &str) -> std::result::Result<Vec<Crossing>, String> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|item| {
            let (frame, pair) = item.trim().split_once(':').ok_or_else(|| format!("crossing {item:?} is not frame:a-b"))?;
            let (a, b) = pair.split_once('-').ok_or_else(|| format!("crossing {item:?} is not frame:a-b"))?;
            Ok(Crossing { frame: parse(frame.trim())?, a: parse(a.trim())?, b: parse(b.trim())? })
        })
        .collect()
}

fn show_crossings(c: &[Crossing]) -> String {
    if c.is_empty() {
        return "none".into();
    }
    c.iter().map(|c| format!("{}:{}-{}", c.frame, c.a, c.b)).collect::<Vec<_>>().join(";")
}

fn keys() -> Vec<(&'static str, Getter, Setter)> {
    vec![
        field!("iou_gate", tracker.iou_gate),
        field!("appearance_weight", tracker.appearance_weight),
        field!("similarity_threshold", tracker.similarity_threshold),
        (
            "similarity_mode",
            |s| match s.tracker.similarity_mode {
                SimilarityMode::SplitCosine => "split_cosine".into(),
                SimilarityMode::PlainProduct => "plain_product".into(),
            },
            |s, v| {
                s.tracker.similarity_mode = match v {
                    "split_cosine" => SimilarityMode::SplitCosine,
                    "plain_product" => SimilarityMode::PlainProduct,
                    _ => return Err(format!("similarity_mode must be split_cosine or plain_product, got {v:?}")),
                };
                Ok(())
            },
        ),
        field!("ocm_weight", tracker.ocm_weight),
        field!("min_hits", tracker.min_hits),
        field!("max_age", tracker.max_age),
        field!("second_stage", tracker.second_stage_enabled),
        field!("oru", tracker.oru_enabled),
        field!("bank_capacity", tracker.bank_capacity),
        field!("direction_span", tracker.direction_span),
        field!("kf_init_position_var", tracker.motion.init_position_var),
        field!("kf_init_velocity_var", tracker.motion.init_velocity_var),
        field!("kf_process_position_var", tracker.motion.process_position_var),
        field!("kf_process_velocity_var", tracker.motion.process_velocity_var),
        field!("kf_measurement_position_var", tracker.motion.measurement_position_var),
        field!("kf_measurement_area_var", tracker.motion.measurement_area_var),
        field!("eval_iou_threshold", eval.iou_threshold),
        field!("eval_min_visibility", eval.filter.min_visibility),
        (
            "eval_classes",
            |s| s.eval.filter.classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
            |s, v| {
                s.eval.filter.classes = v.split(';').map(|c| parse(c.trim())).collect::<std::result::Result<_, _>>()?;
                Ok(())
            },
        ),
        field!("asa_k", asa.k),
        field!("asa_negative_threshold", asa.negative_cost_threshold),
        field!("asa_radius_scale", asa.candidate_radius_scale),
        (
            "asa_class_target",
            |s| match s.asa.class_target {
                ClassTarget::Hard => "hard".into(),
                ClassTarget::Soft => "soft".into(),
            },
            |s, v| {
                s.asa.class_target = match v {
                    "hard" => ClassTarget::Hard,
                    "soft" => ClassTarget::Soft,
                    _ => return Err(format!("asa_class_target must be hard or soft, got {v:?}")),
                };
                Ok(())
            },
        ),
        field!("asa_lambda_cls", asa_weights.lambda_cls),
        field!("asa_lambda_reg", asa_weights.lambda_reg),
        field!("asa_lambda_iou", asa_weights.lambda_iou),
        field!("asa_lambda_dis", asa_weights.lambda_dis),
        field!("loss_lambda_cls", loss.lambda_cls),
        field!("loss_lambda_reg", loss.lambda_reg),
        field!("loss_lambda_iou", loss.lambda_iou),
        (
            "unlabeled_weight",
            |s| match s.unlabeled_weight {
                UnlabeledWeight::Ratio => "ratio".into(),
                UnlabeledWeight::Fraction => "fraction".into(),
            },
            |s, v| {
                s.unlabeled_weight = match v {
                    "ratio" => UnlabeledWeight::Ratio,
                    "fraction" => UnlabeledWeight::Fraction,
                    _ => return Err(format!("unlabeled_weight must be ratio or fraction, got {v:?}")),
                };
                Ok(())
            },
        ),
        field!("pseudo_threshold", pseudo_threshold),
        field!("image_diag", image_diag),
        field!("ema_keep_rate", ema.keep_rate),
        field!("ema_steps_per_epoch", ema.steps_per_epoch),
        field!("augment_contrast", augment.contrast),
        field!("augment_gamma", augment.gamma),
        field!("augment_brightness_min", augment.brightness.0),
        field!("augment_brightness_max", augment.brightness.1),
        field!("augment_blur_sigma_min", augment.blur_sigma.0),
        field!("augment_blur_sigma_max", augment.blur_sigma.1),
        field!("augment_noise_sigma_min", augment.noise_sigma.0),
        field!("augment_noise_sigma_max", augment.noise_sigma.1),
        (
            "synth_scenario",
            |s| match s.synth.kind {
                ScenarioKind::Random => "random".into(),
                ScenarioKind::Crossing => "crossing".into(),
            },
            |s, v| {
                s.synth.kind = match v {
                    "random" => ScenarioKind::Random,
                    "crossing" => ScenarioKind::Crossing,
                    _ => return Err(format!("synth_scenario must be random or crossing, got {v:?}")),
                };
                Ok(())
            },
        ),
        field!("synth_arena_width", synth.arena_width),
        field!("synth_arena_height", synth.arena_height),
        field!("synth_objects", synth.n_objects),
        field!("synth_duration", synth.duration),
        field!("synth_crossing_pairs", synth.crossing_pairs),
        ("synth_crossings", |s| show_crossings(&s.synth.crossings), |s, v| {
            s.synth.crossings = parse_crossings(v)?;
            Ok(())
        }),
        field!("synth_sequences", synth.sequences),
        field!("synth_emb_dim", synth.emb_dim),
        field!("synth_height_min", synth.height_range.0),
        field!("synth_height_max", synth.height_range.1),
        field!("synth_speed_min", synth.speed_range.0),
        field!("synth_speed_max", synth.speed_range.1),
        (
            "corruption",
            |_| "custom".into(),
            |s, v| {
                let sev = s.synth.corruption.severity;
                s.synth.corruption = match v {
                    "clean" => CorruptionModel::clean(0),
                    "low_light" => CorruptionModel::low_light(sev, 0),
                    "custom" => return Ok(()),
                    _ => return Err(format!("corruption must be clean, low_light or custom, got {v:?}")),
                };
                s.synth.corruption.severity = sev;
                Ok(())
            },
        ),
        field!("severity", synth.corruption.severity),
        field!("p_miss", synth.corruption.p_miss),
        field!("fp_per_frame", synth.corruption.fp_per_frame),
        field!("box_jitter_sigma", synth.corruption.box_jitter_sigma),
        field!("embedding_noise_sigma", synth.corruption.embedding_noise_sigma),
        field!("occlusion_miss_boost", synth.corruption.occlusion_miss_boost),
    ]
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let table = keys();
        let (_, _, setter) = table.iter().find(|(k, _, _)| *k == key).ok_or_else(|| format!("unknown key {key:?}"))?;
        setter(self, value)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        keys().iter().find(|(k, _, _)| *k == key).map(|(_, g, _)| g(self))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let res = match line.split_once('=') {
                Some((k, v)) => self.set(k.trim(), v.trim()),
                None => Err("expected key = value".to_string()),
            };
            if let Err(message) = res {
                errors.push(LineError { line: i + 1, message });
            }
        }
        if errors.is_empty() {
            self.validate()
        } else {
            Err(IoError::Parse(errors))
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        s.apply_text(text)?;
        Ok(s)
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| IoError::Format(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim()).map_err(|e| IoError::Format(format!("override {o:?}: {e}")))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.asa.validate()?;
        self.asa_weights.validate()?;
        self.augment.validate()?;
        self.synth.corruption.validate()?;
        if !(self.image_diag > 0.0 && self.image_diag.is_finite()) {
            return Err(IoError::Format("image_diag must be positive".into()));
        }
        if !(self.ema.keep_rate > 0.0 && self.ema.keep_rate < 1.0) {
            return Err(IoError::Format("ema_keep_rate must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.pseudo_threshold) {
            return Err(IoError::Format("pseudo_threshold must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.iou_threshold) {
            return Err(IoError::Format("eval_iou_threshold must lie in [0, 1]".into()));
        }
        if self.synth.emb_dim == 0 || self.synth.sequences == 0 {
            return Err(IoError::Format("synth_emb_dim and synth_sequences must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, g, _) in keys() {
            if k == "corruption" {
                continue;
            }
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&g(self));
            s.push('\n');
        }
        s
    }
}
