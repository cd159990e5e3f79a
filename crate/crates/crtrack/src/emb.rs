//! Embedding sidecar (`.emb.csv`): a header `frame,det,d0,...,d{D-1}`
//! followed by one row per detection, `det` being its 0-based index among
//! that frame's lines of the detection file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crtrack_core::{Detection, EmbeddingVec};

use crate::error::{read_to_string, write_string, IoError, LineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub frame: u32,
    pub det: usize,
    pub values: Vec<f64>,
}

fn header_dim(line: &str) -> Option<usize> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "frame" || cols[1] != "det" {
        return None;
    }
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("d{i}") {
            return None;
        }
    }
    Some(cols.len() - 2)
}

/// Parses a sidecar; rows come back sorted by `(frame, det)`.
pub fn parse_embeddings(text: &str) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, head)) = lines.next() else {
        return Err(IoError::Format("embedding file is empty".into()));
    };
    let dim = header_dim(head).ok_or_else(|| {
        IoError::Parse(vec![LineError { line: 1, message: "header must be frame,det,d0,...,d{D-1}".into() }])
    })?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let row = (|| -> std::result::Result<EmbeddingRecord, String> {
            if cols.len() != dim + 2 {
                return Err(format!("expected {} values, found {}", dim, cols.len().saturating_sub(2)));
            }
            let frame: u32 = cols[0].parse().map_err(|_| format!("bad frame {:?}", cols[0]))?;
            if frame == 0 {
                return Err("frame must be >= 1".into());
            }
            let det: usize = cols[1].parse().map_err(|_| format!("bad detection index {:?}", cols[1]))?;
            let values = cols[2..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("bad value {c:?}")))
                .collect::<std::result::Result<Vec<f64>, String>>()?;
            Ok(EmbeddingRecord { frame, det, values })
        })();
        match row {
            Ok(r) => out.push(r),
            Err(message) => errors.push(LineError { line: i + 1, message }),
        }
    }
    if !errors.is_empty() {
        return Err(IoError::Parse(errors));
    }
    out.sort_by_key(|r| (r.frame, r.det));
    if let Some(w) = out.windows(2).find(|w| (w[0].frame, w[0].det) == (w[1].frame, w[1].det)) {
        return Err(IoError::Format(format!("duplicate embedding for frame {} det {}", w[0].frame, w[0].det)));
    }
    Ok((dim, out))
}

pub fn format_embeddings(dim: usize, records: &[EmbeddingRecord]) -> String {
    let mut s = String::from("frame,det");
    for i in 0..dim {
        write!(s, ",d{i}").unwrap();
    }
    s.push('\n');
    for r in records {
        write!(s, "{},{}", r.frame, r.det).unwrap();
        for v in &r.values {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_embeddings(path: &Path) -> Result<(usize, Vec<EmbeddingRecord>)> {
    parse_embeddings(&read_to_string(path)?)
        .map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
}

pub fn write_embeddings(path: &Path, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.values.len() != dim) {
        return Err(IoError::Format(format!("embedding for frame {} det {} has the wrong dimension", r.frame, r.det)));
    }
    write_string(path, &format_embeddings(dim, records))
}

/// Attaches embeddings to detections listed in file order. Detections
/// without a row stay motion-only; rows without a detection are an error.
pub fn attach(detections: &mut [Detection], records: &[EmbeddingRecord]) -> Result<()> {
    let mut index: BTreeMap<(u32, usize), usize> = BTreeMap::new();
    let mut per_frame: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        let k = per_frame.entry(d.frame).or_insert(0);
        index.insert((d.frame, *k), i);
        *k += 1;
    }
    for r in records {
        let i = *index
            .get(&(r.frame, r.det))
            .ok_or_else(|| IoError::Format(format!("embedding for frame {} det {} has no detection", r.frame, r.det)))?;
        detections[i].embedding = Some(EmbeddingVec::new(r.values.clone())?);
    }
    Ok(())
}

/// Sidecar rows for the detections that carry an embedding.
pub fn records_of(detections: &[Detection]) -> Vec<EmbeddingRecord> {
    let mut per_frame: BTreeMap<u32, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for d in detections {
        let k = per_frame.entry(d.frame).or_insert(0);
        if let Some(e) = &d.embedding {
            out.push(EmbeddingRecord { frame: d.frame, det: *k, values: e.values().to_vec() });
        }
        *k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crtrack_core::BoundingBox;

    #[test]
    fn reads_single_row() {
        let (dim, rows) = parse_embeddings("frame,det,d0,d1\n1,0,1.0,0.0\n").unwrap();
        assert_eq!(dim, 2);
        assert_eq!(rows, vec![EmbeddingRecord { frame: 1, det: 0, values: vec![1.0, 0.0] }]);
    }

    #[test]
    fn mixed_dims_are_rejected() {
        let err = parse_embeddings("frame,det,d0,d1\n1,0,1,0\n1,1,1,0,3\n").unwrap_err();
        assert_eq!(err.lines(), vec![3]);
    }

    #[test]
    fn round_trips() {
        let text = "frame,det,d0,d1,d2\n1,0,0.5,-1,2\n2,1,0,0,0.0000001\n";
        let (dim, rows) = parse_embeddings(text).unwrap();
        assert_eq!(format_embeddings(dim, &rows), text);
    }

    #[test]
    fn missing_rows_leave_detections_motion_only() {
        let b = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
        let mut dets = vec![Detection::new(1, b, 1.0).unwrap(), Detection::new(1, b, 1.0).unwrap()];
        let (_, rows) = parse_embeddings("frame,det,d0,d1\n1,1,0,1\n").unwrap();
        attach(&mut dets, &rows).unwrap();
        assert!(dets[0].embedding.is_none());
        assert!(dets[1].embedding.is_some());
        assert_eq!(records_of(&dets), rows);
    }

    #[test]
    fn orphan_rows_are_rejected() {
        let (_, rows) = parse_embeddings("frame,det,d0\n3,0,1\n").unwrap();
        assert!(attach(&mut [], &rows).is_err());
    }
}
