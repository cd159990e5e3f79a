//! Rectangular linear assignment (Hungarian / shortest augmenting path).
//!
//! Forbidden entries are stored as non-finite costs. The solver first
//! maximizes the number of allowed pairs and then minimizes their total
//! cost; forbidden cells never appear in the returned matches.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major cost table; `f64::INFINITY` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: (rows, cols), found: (data.len(), 1) });
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("cost matrix contains NaN".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch { expected: (rows.len(), cols), found: (rows.len(), bad.len()) });
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn forbid(&mut self, r: usize, c: usize) {
        self.set(r, c, f64::INFINITY);
    }

    pub fn is_forbidden(&self, r: usize, c: usize) -> bool {
        !self.get(r, c).is_finite()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }
}

/// Optimal one-to-one assignment over the allowed entries of `cost`.
pub fn solve(cost: &CostMatrix) -> Assignment {
    let (rows, cols) = cost.shape();
    let mut row_to_col: Vec<Option<usize>> = vec![None; rows];
    if rows > 0 && cols > 0 {
        if rows <= cols {
            for (r, c) in hungarian(&with_penalty(cost)).into_iter().enumerate() {
                row_to_col[r] = Some(c);
            }
        } else {
            let t = cost.transposed();
            for (c, r) in hungarian(&with_penalty(&t)).into_iter().enumerate() {
                row_to_col[r] = Some(c);
            }
        }
    }
    let mut col_used = vec![false; cols];
    let mut out = Assignment::default();
    for (r, slot) in row_to_col.iter().enumerate() {
        match *slot {
            Some(c) if !cost.is_forbidden(r, c) => {
                col_used[c] = true;
                out.matches.push((r, c));
            }
            _ => out.unmatched_rows.push(r),
        }
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    out
}

/// Replace forbidden cells with a penalty large enough that using one fewer
/// forbidden cell always beats any rearrangement of allowed costs.
fn with_penalty(cost: &CostMatrix) -> CostMatrix {
    let finite = cost.data.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let k = cost.rows.min(cost.cols) as f64;
    let big = hi + (k + 1.0) * (hi - lo + 1.0);
    CostMatrix {
        rows: cost.rows,
        cols: cost.cols,
        data: cost.data.iter().map(|&v| if v.is_finite() { v } else { big }).collect(),
    }
}

/// Shortest augmenting path Hungarian method for `rows <= cols` with finite
/// costs. Returns the column assigned to each row.
fn hungarian(cost: &CostMatrix) -> Vec<usize> {
    let n = cost.rows;
    let m = cost.cols;
    debug_assert!(n <= m);
    // 1-based potentials; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}
