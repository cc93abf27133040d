//! Weighted DTW between two feature sequences.
//!
//! Indices in [`AlignmentPath`] are 1-based. The accumulated cost obeys
//! `D(1,1) = C(1,1)` and, for every other cell, the three-way minimum over
//! the diagonal, vertical and horizontal predecessors with the step weight
//! applied to the local cost of the entered cell. Cells on the first row or
//! column only have one predecessor, which yields the usual cumulative
//! boundary sums. Ties prefer the diagonal, then the vertical step.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{check_compatible, local_cost_unchecked, CostConfig, FeatureSequence, StepWeights};

/// Step between consecutive path elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Diagonal,
    /// `(1, 0)`: advance in the first sequence only.
    Vertical,
    /// `(0, 1)`: advance in the second sequence only.
    Horizontal,
}

impl Step {
    pub fn between(a: (usize, usize), b: (usize, usize)) -> Option<Step> {
        match (b.0.checked_sub(a.0)?, b.1.checked_sub(a.1)?) {
            (1, 1) => Some(Step::Diagonal),
            (1, 0) => Some(Step::Vertical),
            (0, 1) => Some(Step::Horizontal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pairs: Vec<(usize, usize)>,
    total_cost: f64,
}

impl AlignmentPath {
    /// Builds a path, checking the boundary and step-size conditions
    /// against an `n × m` grid.
    pub fn new(pairs: Vec<(usize, usize)>, total_cost: f64, n: usize, m: usize) -> Result<Self> {
        let path = AlignmentPath { pairs, total_cost };
        path.validate(n, m)?;
        Ok(path)
    }

    pub(crate) fn from_parts(pairs: Vec<(usize, usize)>, total_cost: f64) -> Self {
        AlignmentPath { pairs, total_cost }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Endpoint, i.e. the grid shape `(N, M)`.
    pub fn shape(&self) -> (usize, usize) {
        self.pairs.last().copied().unwrap_or((0, 0))
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        self.pairs
            .windows(2)
            .map(|w| Step::between(w[0], w[1]).expect("validated path"))
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.total_cost >= 0.0) {
            return bad(format!("negative total cost {}", self.total_cost));
        }
        match (self.pairs.first(), self.pairs.last()) {
            (Some(&(1, 1)), Some(&last)) if last == (n, m) => {}
            (first, last) => {
                return bad(format!(
                    "path must run from (1, 1) to ({n}, {m}), got {first:?} .. {last:?}"
                ))
            }
        }
        for (l, w) in self.pairs.windows(2).enumerate() {
            if Step::between(w[0], w[1]).is_none() {
                return bad(format!("invalid step {:?} -> {:?} at position {}", w[0], w[1], l + 1));
            }
        }
        Ok(())
    }

    /// Same path with the roles of the two sequences swapped.
    pub fn transposed(&self) -> AlignmentPath {
        AlignmentPath {
            pairs: self.pairs.iter().map(|&(n, m)| (m, n)).collect(),
            total_cost: self.total_cost,
        }
    }

    /// Total cost divided by the path length.
    pub fn average_cost(&self) -> f64 {
        average_cost(self)
    }

    /// The `(1,1)`-step matches: the first pair plus every pair entered by a
    /// diagonal step.
    pub fn diagonal_matches(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if let Some(&first) = self.pairs.first() {
            out.push(first);
        }
        out.extend(
            self.pairs
                .windows(2)
                .filter(|w| Step::between(w[0], w[1]) == Some(Step::Diagonal))
                .map(|w| w[1]),
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            for &(n, m) in &self.pairs {
                writeln!(out, "{n},{m}")?;
            }
            writeln!(out, "# total_cost={}", self.total_cost)?;
            out.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`AlignmentPath::write_csv`] and checks it
    /// structurally against its own endpoint.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut total = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("total_cost=") {
                    total = Some(v.parse::<f64>().map_err(|e| err(e.to_string()))?);
                }
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| err("expected `n,m`".into()))?;
            let n = a.trim().parse().map_err(|_| err(format!("bad index {a:?}")))?;
            let m = b.trim().parse().map_err(|_| err(format!("bad index {b:?}")))?;
            pairs.push((n, m));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            });
        }
        let total = total.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: "missing `# total_cost=` line".into(),
        })?;
        let (n, m) = *pairs.last().unwrap();
        AlignmentPath::new(pairs, total, n, m)
    }
}

/// Dense `N × M` matrix of local costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pub row_label: String,
    pub col_label: String,
}

impl CostMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "cost matrix of shape {rows}x{cols} cannot hold {} entries",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Invalid(format!("cost matrix entry {v} is negative")));
        }
        Ok(CostMatrix {
            rows,
            cols,
            data,
            row_label: String::new(),
            col_label: String::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at 0-based `(n, m)`.
    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.data[n * self.cols + m]
    }

    pub fn transposed(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for m in 0..self.cols {
            for n in 0..self.rows {
                data.push(self.get(n, m));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
            row_label: self.col_label.clone(),
            col_label: self.row_label.clone(),
        }
    }
}

pub fn cost_matrix(x: &FeatureSequence, y: &FeatureSequence, cfg: &CostConfig) -> Result<CostMatrix> {
    check_compatible(cfg, x, y)?;
    let (rows, cols) = (x.len(), y.len());
    let mut data = Vec::with_capacity(rows * cols);
    for n in 0..rows {
        let a = x.bundle(n);
        for m in 0..cols {
            data.push(local_cost_unchecked(cfg.measure, a, y.bundle(m)));
        }
    }
    Ok(CostMatrix {
        rows,
        cols,
        data,
        row_label: x.label().to_string(),
        col_label: y.label().to_string(),
    })
}

const FROM_DIAG: u8 = 0;
const FROM_UP: u8 = 1;
const FROM_LEFT: u8 = 2;
const ORIGIN: u8 = 3;

/// Picks the minimizing predecessor with the diagonal > vertical >
/// horizontal tie order. Returns the accumulated cost and the choice.
#[inline]
pub(crate) fn choose(diag: f64, up: f64, left: f64, c: f64, w: &StepWeights) -> (f64, u8) {
    let mut best = diag + w.diagonal * c;
    let mut from = FROM_DIAG;
    let v = up + w.vertical * c;
    if v < best {
        best = v;
        from = FROM_UP;
    }
    let h = left + w.horizontal * c;
    if h < best {
        best = h;
        from = FROM_LEFT;
    }
    (best, from)
}

/// Dense DTW over an `n × m` grid whose local cost is `cost(n, m)` (0-based).
pub fn dtw_by<F>(n: usize, m: usize, weights: &StepWeights, mut cost: F) -> Result<AlignmentPath>
where
    F: FnMut(usize, usize) -> f64,
{
    if n == 0 || m == 0 {
        return Err(Error::Invalid("DTW needs a non-empty grid".into()));
    }
    weights.validate()?;
    let mut acc = vec![0.0f64; n * m];
    let mut dir = vec![ORIGIN; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            let idx = i * m + j;
            if i == 0 && j == 0 {
                acc[idx] = c;
                continue;
            }
            let diag = if i > 0 && j > 0 { acc[idx - m - 1] } else { f64::INFINITY };
            let up = if i > 0 { acc[idx - m] } else { f64::INFINITY };
            let left = if j > 0 { acc[idx - 1] } else { f64::INFINITY };
            let (best, from) = choose(diag, up, left, c, weights);
            acc[idx] = best;
            dir[idx] = from;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut pairs = vec![(n, m)];
    while (i, j) != (0, 0) {
        match dir[i * m + j] {
            FROM_DIAG => {
                i -= 1;
                j -= 1;
            }
            FROM_UP => i -= 1,
            FROM_LEFT => j -= 1,
            _ => unreachable!("only the origin lacks a predecessor"),
        }
        pairs.push((i + 1, j + 1));
    }
    pairs.reverse();
    Ok(AlignmentPath::from_parts(pairs, acc[n * m - 1]))
}

pub fn dtw(c: &CostMatrix, weights: &StepWeights) -> Result<AlignmentPath> {
    dtw_by(c.rows, c.cols, weights, |n, m| c.get(n, m))
}

/// Full DTW between two sequences without materializing the cost matrix.
pub fn align_pair(x: &FeatureSequence, y: &FeatureSequence, cfg: &CostConfig) -> Result<AlignmentPath> {
    check_compatible(cfg, x, y)?;
    dtw_by(x.len(), y.len(), &cfg.weights, |n, m| {
        local_cost_unchecked(cfg.measure, x.bundle(n), y.bundle(m))
    })
}

pub fn average_cost(path: &AlignmentPath) -> f64 {
    if path.pairs.is_empty() {
        return 0.0;
    }
    path.total_cost / path.pairs.len() as f64
}

/// Lower median of the second coordinates matched to first coordinate `n`
/// (both 1-based).
pub fn map_position(path: &AlignmentPath, n: usize) -> Result<usize> {
    let len = path.shape().0;
    if n == 0 || n > len {
        return Err(Error::OutOfRange { index: n, len });
    }
    let start = path.pairs.partition_point(|&(a, _)| a < n);
    let end = path.pairs.partition_point(|&(a, _)| a <= n);
    let run = &path.pairs[start..end];
    Ok(run[(run.len() - 1) / 2].1)
}
