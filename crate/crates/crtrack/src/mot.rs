//! MOT Challenge text files (`gt.txt`, `det.txt`, tracker results).
//!
//! One comma-separated record per line:
//! `frame,id,x_left,y_top,width,height,conf[,class,visibility[,z]]`.
//! Files with 10 columns (detections and results) carry `-1` placeholders in
//! the trailing fields; ground truth uses the 9-column form.

use std::fmt::Write as _;
use std::path::Path;

use crtrack_core::metrics::{GtRecord, GtSequence, ResRecord, ResultSequence};
use crtrack_core::{BoundingBox, Detection};

use crate::error::{read_to_string, write_string, IoError, LineError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    pub frame: u32,
    /// `-1` for detections.
    pub id: i64,
    pub x_left: f64,
    pub y_top: f64,
    pub width: f64,
    pub height: f64,
    pub conf: f64,
    pub class: i32,
    pub visibility: f64,
    /// Trailing field of the 10-column form.
    pub z: f64,
    /// Column count the record was read with (7 to 10); used when writing.
    pub columns: u8,
}

impl MotRecord {
    pub fn detection(frame: u32, bbox: &BoundingBox, conf: f64) -> Self {
        Self::result(frame, -1, bbox, conf)
    }

    pub fn result(frame: u32, id: i64, bbox: &BoundingBox, conf: f64) -> Self {
        Self {
            frame,
            id,
            x_left: bbox.x_left(),
            y_top: bbox.y_top(),
            width: bbox.width(),
            height: bbox.height(),
            conf,
            class: -1,
            visibility: -1.0,
            z: -1.0,
            columns: 10,
        }
    }

    pub fn ground_truth(frame: u32, id: i64, bbox: &BoundingBox, class: i32, visibility: f64) -> Self {
        Self { class, visibility, columns: 9, conf: 1.0, ..Self::result(frame, id, bbox, 1.0) }
    }

    pub fn bbox(&self) -> crtrack_core::Result<BoundingBox> {
        BoundingBox::new(self.x_left, self.y_top, self.width, self.height)
    }
}

fn parse_line(line: &str) -> std::result::Result<MotRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(7..=10).contains(&fields.len()) {
        return Err(format!("expected 7 to 10 comma-separated fields, found {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = fields[i].parse().map_err(|_| format!("field {} ({:?}) is not a number", i + 1, fields[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("field {} is not finite", i + 1))
        }
    };
    let int = |i: usize| -> std::result::Result<i64, String> {
        let v = num(i)?;
        if v.fract() != 0.0 {
            return Err(format!("field {} ({:?}) is not an integer", i + 1, fields[i]));
        }
        Ok(v as i64)
    };
    let frame = int(0)?;
    if frame < 1 || frame > i64::from(u32::MAX) {
        return Err(format!("frame {frame} must be >= 1"));
    }
    let (width, height) = (num(4)?, num(5)?);
    if width <= 0.0 || height <= 0.0 {
        return Err(format!("non-positive box size {width}x{height}"));
    }
    Ok(MotRecord {
        frame: frame as u32,
        id: int(1)?,
        x_left: num(2)?,
        y_top: num(3)?,
        width,
        height,
        conf: num(6)?,
        class: if fields.len() > 7 { int(7)? as i32 } else { -1 },
        visibility: if fields.len() > 8 { num(8)? } else { -1.0 },
        z: if fields.len() > 9 { num(9)? } else { -1.0 },
        columns: fields.len() as u8,
    })
}

/// Parses every line, collecting all malformed ones. Blank lines are skipped.
pub fn parse_mot(text: &str) -> Result<Vec<MotRecord>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(r) => out.push(r),
            Err(message) => errors.push(LineError { line: i + 1, message }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IoError::Parse(errors))
    }
}

pub fn format_mot(records: &[MotRecord]) -> String {
    let mut s = String::new();
    for r in records {
        write!(s, "{},{},{},{},{},{},{}", r.frame, r.id, r.x_left, r.y_top, r.width, r.height, r.conf).unwrap();
        if r.columns > 7 {
            write!(s, ",{}", r.class).unwrap();
        }
        if r.columns > 8 {
            write!(s, ",{}", r.visibility).unwrap();
        }
        if r.columns > 9 {
            write!(s, ",{}", r.z).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRecord>> {
    parse_mot(&read_to_string(path)?).map_err(|e| match e {
        IoError::Parse(v) => IoError::Format(format!("{}: {}", path.display(), IoError::Parse(v))),
        other => other,
    })
}

pub fn write_mot(path: &Path, records: &[MotRecord]) -> Result<()> {
    write_string(path, &format_mot(records))
}

fn non_negative_id(r: &MotRecord) -> Result<u64> {
    u64::try_from(r.id).map_err(|_| IoError::Format(format!("frame {}: negative track id {}", r.frame, r.id)))
}

pub fn to_gt_sequence(records: &[MotRecord]) -> Result<GtSequence> {
    let mut v = Vec::with_capacity(records.len());
    for r in records {
        v.push(GtRecord {
            frame: r.frame,
            id: non_negative_id(r)?,
            bbox: r.bbox()?,
            conf: r.conf,
            class: r.class,
            visibility: r.visibility,
        });
    }
    Ok(GtSequence::new(v)?)
}

pub fn to_result_sequence(records: &[MotRecord]) -> Result<ResultSequence> {
    let mut v = Vec::with_capacity(records.len());
    for r in records {
        v.push(ResRecord { frame: r.frame, id: non_negative_id(r)?, bbox: r.bbox()?, score: r.conf.clamp(0.0, 1.0) });
    }
    Ok(ResultSequence::new(v)?)
}

/// Detections in file order; the detection score is the conf column
/// clamped to `[0, 1]`.
pub fn to_detections(records: &[MotRecord]) -> Result<Vec<Detection>> {
    records.iter().map(|r| Ok(Detection::new(r.frame, r.bbox()?, r.conf.clamp(0.0, 1.0))?)).collect()
}
