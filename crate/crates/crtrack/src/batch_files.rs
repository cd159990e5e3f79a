//! Line-oriented inputs for the `asa`, `ssl-loss` and `anu-sim` commands.
//!
//! All three use comma-separated records tagged by their first field:
//!
//! ```text
//! pred,x_left,y_top,width,height,class_prob,objectness
//! pseudo,x_left,y_top,width,height,confidence      # also accepted as `target`
//! teacher,x_left,y_top,width,height,class_prob,objectness
//! frame,labeled|unlabeled                          # ssl-loss only
//! initial,eval                                     # anu-sim only
//! epoch,teacher_eval,student_eval                  # anu-sim only
//! ```

use std::fmt::Write as _;

use crtrack_core::anu::EpochRecord;
use crtrack_core::asa::{AsaCostMatrix, AsaResult, Violation};
use crtrack_core::ssl_loss::LossBreakdown;
use crtrack_core::{BoundingBox, Prediction, PseudoBox};

use crate::error::{IoError, LineError, Result};

type LineResult<T> = std::result::Result<T, String>;

fn numbers(fields: &[&str], n: usize) -> LineResult<Vec<f64>> {
    if fields.len() != n + 1 {
        return Err(format!("{} expects {} values, found {}", fields[0], n, fields.len() - 1));
    }
    fields[1..]
        .iter()
        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("{f:?} is not a finite number")))
        .collect()
}

fn bbox(v: &[f64]) -> LineResult<BoundingBox> {
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn prediction(fields: &[&str]) -> LineResult<Prediction> {
    let v = numbers(fields, 6)?;
    Prediction::new(bbox(&v)?, v[4], v[5]).map_err(|e| e.to_string())
}

fn pseudo(fields: &[&str]) -> LineResult<PseudoBox> {
    let v = numbers(fields, 5)?;
    PseudoBox::new(bbox(&v)?, v[4]).map_err(|e| e.to_string())
}

/// Runs `f` over every non-blank, non-comment line and gathers failures.
fn each_line(text: &str, mut f: impl FnMut(&[&str]) -> LineResult<()>) -> Result<()> {
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let Err(message) = f(&fields) {
            errors.push(LineError { line: i + 1, message });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(IoError::Parse(errors))
    }
}

pub fn parse_asa_input(text: &str) -> Result<(Vec<Prediction>, Vec<PseudoBox>)> {
    let mut preds = Vec::new();
    let mut pseudos = Vec::new();
    each_line(text, |f| {
        match f[0] {
            "pred" => preds.push(prediction(f)?),
            "pseudo" | "target" => pseudos.push(pseudo(f)?),
            other => return Err(format!("unknown record kind {other:?}")),
        }
        Ok(())
    })?;
    Ok((preds, pseudos))
}

/// One row per prediction: `pred,role,pseudo,cost`, where `cost` is the
/// pair cost for positives and the cheapest candidate cost otherwise.
pub fn format_asa_result(cost: &AsaCostMatrix, result: &AsaResult, violations: &[Violation]) -> String {
    let mut s = String::from("pred,role,pseudo,cost\n");
    for n in 0..cost.predictions() {
        let cheapest = (0..cost.pseudos()).map(|k| cost.costs.get(n, k)).fold(f64::INFINITY, f64::min);
        if let Some(k) = result.positive_of(n) {
            writeln!(s, "{n},positive,{k},{}", cost.costs.get(n, k)).unwrap();
        } else {
            let role = if result.negatives.contains(&n) { "negative" } else { "ignored" };
            if cheapest.is_finite() {
                writeln!(s, "{n},{role},,{cheapest}").unwrap();
            } else {
                writeln!(s, "{n},{role},,").unwrap();
            }
        }
    }
    writeln!(
        s,
        "# positives={} negatives={} ignored={} violations={}",
        result.positives.len(),
        result.negatives.len(),
        result.ignored.len(),
        violations.len()
    )
    .unwrap();
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossFrame {
    pub labeled: bool,
    pub preds: Vec<Prediction>,
    /// Ground truth for labeled frames, explicit pseudo-boxes otherwise.
    pub targets: Vec<PseudoBox>,
    /// Teacher outputs that become pseudo-boxes after filtering.
    pub teacher: Vec<Prediction>,
}

pub fn parse_loss_batch(text: &str) -> Result<Vec<LossFrame>> {
    let mut frames: Vec<LossFrame> = Vec::new();
    each_line(text, |f| {
        if f[0] == "frame" {
            let labeled = match f.get(1).copied() {
                Some("labeled") if f.len() == 2 => true,
                Some("unlabeled") if f.len() == 2 => false,
                _ => return Err("expected frame,labeled or frame,unlabeled".into()),
            };
            frames.push(LossFrame { labeled, preds: Vec::new(), targets: Vec::new(), teacher: Vec::new() });
            return Ok(());
        }
        let frame = frames.last_mut().ok_or("record before the first frame line")?;
        match f[0] {
            "pred" => frame.preds.push(prediction(f)?),
            "pseudo" | "target" => frame.targets.push(pseudo(f)?),
            "teacher" if !frame.labeled => frame.teacher.push(prediction(f)?),
            "teacher" => return Err("teacher records belong to unlabeled frames".into()),
            other => return Err(format!("unknown record kind {other:?}")),
        }
        Ok(())
    })?;
    if !frames.iter().any(|f| f.labeled) {
        return Err(IoError::Format("batch needs at least one labeled frame".into()));
    }
    Ok(frames)
}

pub fn format_loss_rows(rows: &[(bool, LossBreakdown)]) -> String {
    let mut s = String::from("frame,kind,l_cls,l_reg,l_iou,total\n");
    for (i, (labeled, l)) in rows.iter().enumerate() {
        let kind = if *labeled { "labeled" } else { "unlabeled" };
        writeln!(s, "{},{kind},{},{},{},{}", i + 1, l.l_cls, l.l_reg, l.l_iou, l.total).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnuTrace {
    pub initial: f64,
    /// `(teacher_eval, student_eval)` per epoch.
    pub epochs: Vec<(f64, f64)>,
}

pub fn parse_anu_trace(text: &str) -> Result<AnuTrace> {
    let mut initial = None;
    let mut epochs = Vec::new();
    each_line(text, |f| {
        match f[0] {
            "initial" if initial.is_none() => initial = Some(numbers(f, 1)?[0]),
            "initial" => return Err("duplicate initial record".into()),
            "epoch" => {
                let v = numbers(f, 2)?;
                epochs.push((v[0], v[1]));
            }
            other => return Err(format!("unknown record kind {other:?}")),
        }
        Ok(())
    })?;
    let initial = initial.ok_or_else(|| IoError::Format("trace has no initial record".into()))?;
    if epochs.is_empty() {
        return Err(IoError::Format("trace has no epoch records".into()));
    }
    Ok(AnuTrace { initial, epochs })
}

pub fn format_anu_history(initial: f64, history: &[EpochRecord]) -> String {
    let mut s = format!("# initial_eval={initial}\nepoch,teacher_eval,student_eval,best_eval,teacher_improved,student_improved\n");
    for r in history {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            r.teacher_eval,
            r.student_eval,
            r.best_eval,
            u8::from(r.action.teacher_improved),
            u8::from(r.action.student_improved)
        )
        .unwrap();
    }
    s
}
