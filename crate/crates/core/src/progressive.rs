//! Progressive multi-version alignment.
//!
//! A [`Template`] stacks `k` already-aligned versions as rows over `L`
//! shared columns. Each entry either references a frame of its row's source
//! sequence or is a gap. A new version is aligned against all rows at once
//! with the template-aware cost (local cost for real entries, the gap penalty
//! for gaps, summed over rows) and then merged in along the resulting path.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    check_compatible, local_cost, local_cost_unchecked, normalize_in_place, CostConfig, FeatureSequence,
    FrameRef, Frames, GapMode, DEFAULT_SILENCE_THRESHOLD,
};
use crate::multiscale::{downsample, multiscale_by, CostGrid, MultiscaleConfig};
use crate::pairwise::{AlignmentPath, Step};

/// Value every entry of the gap pseudo-frame takes in serialized templates.
pub const GAP_VALUE: f64 = -1.0;

pub const TEMPLATE_SCHEMA_VERSION: u32 = 1;

/// One template entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    /// 0-based frame index into the row's source sequence.
    Frame(usize),
    Gap,
}

impl Cell {
    #[inline]
    pub fn is_gap(self) -> bool {
        matches!(self, Cell::Gap)
    }

    #[inline]
    pub fn frame(self) -> Option<usize> {
        match self {
            Cell::Frame(i) => Some(i),
            Cell::Gap => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    rows: Vec<Arc<FeatureSequence>>,
    /// Column-major: entry `(col, row)` lives at `col * k + row`.
    cells: Vec<Cell>,
}

impl Template {
    /// Number of rows.
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// Number of columns.
    pub fn len(&self) -> usize {
        self.cells.len() / self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn column(&self, col: usize) -> &[Cell] {
        let k = self.k();
        &self.cells[col * k..(col + 1) * k]
    }

    pub fn cell(&self, col: usize, row: usize) -> Cell {
        self.cells[col * self.k() + row]
    }

    pub fn row_labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label()).collect()
    }

    pub fn row_of_label(&self, label: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.label() == label)
    }

    /// Source sequence of row `r`.
    pub fn source(&self, r: usize) -> &FeatureSequence {
        &self.rows[r]
    }

    pub fn hop_duration(&self) -> f64 {
        self.rows[0].hop_duration()
    }

    pub fn row_cells(&self, r: usize) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |c| self.cell(c, r))
    }

    pub fn gap_count(&self, r: usize) -> usize {
        self.row_cells(r).filter(|c| c.is_gap()).count()
    }

    /// Frame indices of the non-gap entries of row `r`, left to right.
    pub fn row_frames(&self, r: usize) -> Vec<usize> {
        self.row_cells(r).filter_map(Cell::frame).collect()
    }

    /// Sequence assembled from the non-gap entries of row `r`.
    pub fn reconstruct_row(&self, r: usize) -> FeatureSequence {
        let src = &self.rows[r];
        let idx = self.row_frames(r);
        let gather = |f: &Frames| {
            let mut data = Vec::with_capacity(idx.len() * f.dim());
            for &i in &idx {
                data.extend_from_slice(f.frame(i));
            }
            Frames::new(f.dim(), data).expect("gathered whole frames")
        };
        FeatureSequence::from_parts_unchecked(
            src.label().to_string(),
            src.hop_duration(),
            gather(src.chroma()),
            src.onset().map(gather),
        )
    }

    /// Structural checks valid for every template: each column holds a real
    /// entry and each row walks its source in order, front to back. With
    /// `exact`, rows must reference every source frame exactly once (the
    /// insert-gaps invariant); otherwise consecutive repeats are allowed.
    pub fn check_invariants(&self, exact: bool) -> Result<()> {
        for c in 0..self.len() {
            if self.column(c).iter().all(|e| e.is_gap()) {
                return Err(Error::Invalid(format!("template column {} holds only gaps", c + 1)));
            }
        }
        let first = &self.rows[0];
        for (r, src) in self.rows.iter().enumerate() {
            if src.chroma().dim() != first.chroma().dim()
                || src.onset().map(|o| o.dim()) != first.onset().map(|o| o.dim())
            {
                return Err(Error::Invalid(format!("row {} has inconsistent feature dimensions", r + 1)));
            }
            let mut frames = self.row_frames(r);
            if !exact {
                frames.dedup();
            }
            if frames.len() != src.len() || frames.iter().enumerate().any(|(i, &f)| i != f) {
                return Err(Error::Invalid(format!(
                    "row {} ({}) does not reproduce its source sequence",
                    r + 1,
                    src.label()
                )));
            }
        }
        Ok(())
    }

    /// Template-aware cost of column `col` against frame bundle `x`.
    pub fn column_cost(&self, col: usize, x: FrameRef<'_>, cfg: &CostConfig) -> Result<f64> {
        let mut sum = 0.0;
        for (cell, src) in self.column(col).iter().zip(&self.rows) {
            sum += match *cell {
                Cell::Frame(i) => local_cost(cfg.measure, src.bundle(i), x)?,
                Cell::Gap => cfg.gap_penalty,
            };
        }
        Ok(sum)
    }

    #[inline]
    fn column_cost_unchecked(&self, col: usize, x: FrameRef<'_>, cfg: &CostConfig) -> f64 {
        let mut sum = 0.0;
        for (cell, src) in self.column(col).iter().zip(&self.rows) {
            sum += match *cell {
                Cell::Frame(i) => local_cost_unchecked(cfg.measure, src.bundle(i), x),
                Cell::Gap => cfg.gap_penalty,
            };
        }
        sum
    }

    /// Coarser template: groups of `factor` columns collapse into one, each
    /// row averaging its real entries in the group (a row with none gets a
    /// gap).
    pub fn downsample(&self, factor: usize) -> Result<Template> {
        if factor == 0 {
            return Err(Error::Config("downsample factor must be at least 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (k, len) = (self.k(), self.len());
        let groups = len.div_ceil(factor);
        let mut cells = vec![Cell::Gap; groups * k];
        let mut rows = Vec::with_capacity(k);
        for (r, src) in self.rows.iter().enumerate() {
            let cd = src.chroma().dim();
            let od = src.onset().map(|o| o.dim());
            let mut chroma = Vec::new();
            let mut onset = Vec::new();
            let mut count = 0;
            for g in 0..groups {
                let members: Vec<usize> = (g * factor..((g + 1) * factor).min(len))
                    .filter_map(|c| self.cell(c, r).frame())
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let w = members.len() as f64;
                let mut cm = vec![0.0; cd];
                for &i in &members {
                    cm.iter_mut().zip(src.chroma().frame(i)).for_each(|(a, b)| *a += b);
                }
                cm.iter_mut().for_each(|v| *v /= w);
                normalize_in_place(&mut cm, DEFAULT_SILENCE_THRESHOLD);
                chroma.extend(cm);
                if let (Some(od), Some(of)) = (od, src.onset()) {
                    let mut om = vec![0.0; od];
                    for &i in &members {
                        om.iter_mut().zip(of.frame(i)).for_each(|(a, b)| *a += b);
                    }
                    om.iter_mut().for_each(|v| *v /= w);
                    onset.extend(om);
                }
                cells[g * k + r] = Cell::Frame(count);
                count += 1;
            }
            let seq = FeatureSequence::from_parts_unchecked(
                src.label().to_string(),
                src.hop_duration() * factor as f64,
                Frames::new(cd, chroma)?,
                od.map(|d| Frames::new(d, onset)).transpose()?,
            );
            rows.push(Arc::new(seq));
        }
        Ok(Template { rows, cells })
    }

    /// Writes the template as CSV (one line per column, `k · D` values, gaps
    /// as −1) plus a JSON sidecar describing the layout.
    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut out = BufWriter::new(file);
        let chroma_dim = self.rows[0].chroma().dim();
        let onset_dim = self.rows[0].onset().map(|o| o.dim()).unwrap_or(0);
        let res: std::io::Result<()> = (|| {
            for c in 0..self.len() {
                let mut first = true;
                for (cell, src) in self.column(c).iter().zip(&self.rows) {
                    let values: Vec<f64> = match *cell {
                        Cell::Frame(i) => {
                            let mut v = src.chroma().frame(i).to_vec();
                            if let Some(o) = src.onset() {
                                v.extend_from_slice(o.frame(i));
                            }
                            v
                        }
                        Cell::Gap => vec![GAP_VALUE; chroma_dim + onset_dim],
                    };
                    for v in values {
                        if !first {
                            out.write_all(b",")?;
                        }
                        first = false;
                        write!(out, "{v}")?;
                    }
                }
                out.write_all(b"\n")?;
            }
            out.flush()
        })();
        res.map_err(|e| Error::io(csv_path, e))?;

        let sidecar = TemplateSidecar {
            schema_version: TEMPLATE_SCHEMA_VERSION,
            row_labels: self.row_labels().into_iter().map(String::from).collect(),
            chroma_dim,
            onset_dim,
            dim: chroma_dim + onset_dim,
            hop_duration: self.hop_duration(),
            columns: self.len(),
            gap_runs: (0..self.k()).map(|r| gap_runs(self.row_cells(r))).collect(),
        };
        let json_path = json_path.as_ref();
        let file = File::create(json_path).map_err(|e| Error::io(json_path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
        Ok(())
    }
}

/// JSON description written next to a serialized template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSidecar {
    pub schema_version: u32,
    pub row_labels: Vec<String>,
    pub chroma_dim: usize,
    pub onset_dim: usize,
    /// Values per row per line: `chroma_dim + onset_dim`.
    pub dim: usize,
    pub hop_duration: f64,
    pub columns: usize,
    /// Per row, `[first_column, run_length]` of each gap run (1-based).
    pub gap_runs: Vec<Vec<[usize; 2]>>,
}

fn gap_runs(cells: impl Iterator<Item = Cell>) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    let mut prev_gap = false;
    for (c, cell) in cells.enumerate() {
        if cell.is_gap() {
            if prev_gap {
                runs.last_mut().unwrap()[1] += 1;
            } else {
                runs.push([c + 1, 1]);
            }
        }
        prev_gap = cell.is_gap();
    }
    runs
}

pub fn template_init(x: &FeatureSequence) -> Template {
    Template {
        rows: vec![Arc::new(x.clone())],
        cells: (0..x.len()).map(Cell::Frame).collect(),
    }
}

/// Template-aware cost of column `col` of `z` against `x`.
pub fn template_cost(z: &Template, col: usize, x: FrameRef<'_>, cfg: &CostConfig) -> Result<f64> {
    z.column_cost(col, x, cfg)
}

fn check_template_compatible(z: &Template, x: &FeatureSequence, cfg: &CostConfig) -> Result<()> {
    cfg.validate()?;
    for src in &z.rows {
        check_compatible(cfg, src, x)?;
    }
    Ok(())
}

struct TemplateGrid<'a> {
    z: Cow<'a, Template>,
    x: Cow<'a, FeatureSequence>,
    cfg: &'a CostConfig,
}

impl CostGrid for TemplateGrid<'_> {
    fn rows(&self) -> usize {
        self.z.len()
    }

    fn cols(&self) -> usize {
        self.x.len()
    }

    #[inline]
    fn cost(&self, n: usize, m: usize) -> f64 {
        self.z.column_cost_unchecked(n, self.x.bundle(m), self.cfg)
    }
}

/// DTW between the template columns and the frames of `x`.
pub fn align_to_template(
    z: &Template,
    x: &FeatureSequence,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<AlignmentPath> {
    check_template_compatible(z, x, cfg)?;
    let result = multiscale_by(z.len(), x.len(), &cfg.weights, ms, |f| {
        Ok(if f == 1 {
            TemplateGrid {
                z: Cow::Borrowed(z),
                x: Cow::Borrowed(x),
                cfg,
            }
        } else {
            TemplateGrid {
                z: Cow::Owned(z.downsample(f)?),
                x: Cow::Owned(downsample(x, f)?),
                cfg,
            }
        })
    })?;
    Ok(result.path)
}

/// Adds `x` as a new last row, stretching the template along `path`.
pub fn template_extend(z: &Template, x: &FeatureSequence, path: &AlignmentPath, mode: GapMode) -> Result<Template> {
    path.validate(z.len(), x.len()).map_err(|e| {
        Error::Invalid(format!(
            "path does not fit a {}-column template and {} frames: {e}",
            z.len(),
            x.len()
        ))
    })?;
    let k = z.k();
    let pairs = path.pairs();
    let mut cells = Vec::with_capacity(pairs.len() * (k + 1));
    for (l, &(n, m)) in pairs.iter().enumerate() {
        let step = (l > 0).then(|| Step::between(pairs[l - 1], pairs[l]).expect("validated path"));
        match (mode, step) {
            (GapMode::InsertGaps, Some(Step::Vertical)) => {
                cells.extend_from_slice(z.column(n - 1));
                cells.push(Cell::Gap);
            }
            (GapMode::InsertGaps, Some(Step::Horizontal)) => {
                cells.extend(std::iter::repeat_n(Cell::Gap, k));
                cells.push(Cell::Frame(m - 1));
            }
            _ => {
                cells.extend_from_slice(z.column(n - 1));
                cells.push(Cell::Frame(m - 1));
            }
        }
    }
    let mut rows = z.rows.clone();
    rows.push(Arc::new(x.clone()));
    Ok(Template { rows, cells })
}

/// Removes row `r`, dropping columns left with only gaps. Returns the
/// shrunk template and the removed version's sequence.
pub fn remove_from_template(z: &Template, r: usize) -> Result<(Template, FeatureSequence)> {
    let k = z.k();
    if k < 2 {
        return Err(Error::Invalid("cannot remove the only row of a template".into()));
    }
    if r >= k {
        return Err(Error::OutOfRange { index: r + 1, len: k });
    }
    let mut cells = Vec::with_capacity(z.len() * (k - 1));
    for c in 0..z.len() {
        let col = z.column(c);
        if col.iter().enumerate().any(|(i, e)| i != r && !e.is_gap()) {
            cells.extend(col.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, e)| *e));
        }
    }
    let mut rows = z.rows.clone();
    let removed = rows.remove(r);
    Ok((Template { rows, cells }, (*removed).clone()))
}

/// Record of one alignment against the template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub label: String,
    pub iteration: usize,
    pub template_rows: usize,
    pub path_length: usize,
    pub total_cost: f64,
    pub average_cost: f64,
    /// For realignments, the average cost of this version's previous
    /// alignment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub previous_average_cost: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProgressiveOutcome {
    pub template: Template,
    pub steps: Vec<StepRecord>,
}

pub(crate) fn check_unique_labels(versions: &[FeatureSequence]) -> Result<()> {
    let mut seen = HashSet::new();
    for v in versions {
        if !seen.insert(v.label()) {
            return Err(Error::Invalid(format!("duplicate version label {:?}", v.label())));
        }
    }
    Ok(())
}

fn check_order(order: &[usize], count: usize) -> Result<()> {
    let mut seen = vec![false; count];
    for &i in order {
        if i >= count || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Invalid(format!("order {order:?} is not a permutation of 0..{count}")));
        }
    }
    if order.len() != count {
        return Err(Error::Invalid(format!("order {order:?} is not a permutation of 0..{count}")));
    }
    Ok(())
}

fn align_and_extend(
    z: &Template,
    x: &FeatureSequence,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
    iteration: usize,
    previous: Option<f64>,
) -> Result<(Template, StepRecord)> {
    let path = align_to_template(z, x, cfg, ms)?;
    let record = StepRecord {
        label: x.label().to_string(),
        iteration,
        template_rows: z.k(),
        path_length: path.len(),
        total_cost: path.total_cost(),
        average_cost: path.average_cost(),
        previous_average_cost: previous,
    };
    Ok((template_extend(z, x, &path, cfg.gap_mode)?, record))
}

/// Builds the template by adding versions one at a time in `order`.
pub fn progressive_align_traced(
    versions: &[FeatureSequence],
    order: &[usize],
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<ProgressiveOutcome> {
    if versions.len() < 2 {
        return Err(Error::Invalid("progressive alignment needs at least two versions".into()));
    }
    check_order(order, versions.len())?;
    check_unique_labels(versions)?;
    let mut z = template_init(&versions[order[0]]);
    let mut steps = Vec::with_capacity(order.len() - 1);
    for &v in &order[1..] {
        let (next, record) = align_and_extend(&z, &versions[v], cfg, ms, 1, None)?;
        z = next;
        steps.push(record);
    }
    Ok(ProgressiveOutcome { template: z, steps })
}

pub fn progressive_align(
    versions: &[FeatureSequence],
    order: &[usize],
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<Template> {
    progressive_align_traced(versions, order, cfg, ms).map(|o| o.template)
}

/// Progressive alignment followed by `iterations - 1` passes in which every
/// version, in the original order, is removed and realigned. Realigned rows
/// are appended at the end.
pub fn iterative_align_traced(
    versions: &[FeatureSequence],
    order: &[usize],
    iterations: usize,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<ProgressiveOutcome> {
    iterative_align_observed(versions, order, iterations, cfg, ms, |_| Ok(()))
}

/// As [`iterative_align_traced`], calling `observe` on every intermediate
/// template (after each extension and each removal).
pub fn iterative_align_observed<F>(
    versions: &[FeatureSequence],
    order: &[usize],
    iterations: usize,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
    mut observe: F,
) -> Result<ProgressiveOutcome>
where
    F: FnMut(&Template) -> Result<()>,
{
    if iterations < 1 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if versions.len() < 2 {
        return Err(Error::Invalid("progressive alignment needs at least two versions".into()));
    }
    check_order(order, versions.len())?;
    check_unique_labels(versions)?;

    let mut z = template_init(&versions[order[0]]);
    observe(&z)?;
    let mut steps = Vec::new();
    let mut last_cost: Vec<Option<f64>> = vec![None; versions.len()];
    for &v in &order[1..] {
        let (next, record) = align_and_extend(&z, &versions[v], cfg, ms, 1, None)?;
        last_cost[v] = Some(record.average_cost);
        z = next;
        observe(&z)?;
        steps.push(record);
    }
    for iteration in 2..=iterations {
        for &v in order {
            let row = z
                .row_of_label(versions[v].label())
                .expect("every version stays in the template");
            let (rest, seq) = remove_from_template(&z, row)?;
            observe(&rest)?;
            let (next, record) = align_and_extend(&rest, &seq, cfg, ms, iteration, last_cost[v])?;
            last_cost[v] = Some(record.average_cost);
            z = next;
            observe(&z)?;
            steps.push(record);
        }
    }
    Ok(ProgressiveOutcome { template: z, steps })
}

pub fn iterative_align(
    versions: &[FeatureSequence],
    order: &[usize],
    iterations: usize,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<Template> {
    iterative_align_traced(versions, order, iterations, cfg, ms).map(|o| o.template)
}

/// Monotone frame correspondences between two versions, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    pub len_a: usize,
    pub len_b: usize,
}

impl Correspondence {
    /// Position in version b of frame `n` of version a. Frames with matches
    /// take the lower median of their matches; others interpolate linearly
    /// between the nearest matched frames (rounding half up) and clamp past
    /// the ends.
    pub fn map(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.len_a {
            return Err(Error::OutOfRange {
                index: n,
                len: self.len_a,
            });
        }
        if self.pairs.is_empty() {
            // No co-occurring frames at all: fall back to proportional mapping.
            let t = if self.len_a > 1 {
                (n - 1) as f64 / (self.len_a - 1) as f64
            } else {
                0.0
            };
            return Ok(1 + (t * (self.len_b - 1) as f64 + 0.5).floor() as usize);
        }
        let start = self.pairs.partition_point(|&(a, _)| a < n);
        let end = self.pairs.partition_point(|&(a, _)| a <= n);
        if start < end {
            let run = &self.pairs[start..end];
            return Ok(run[(run.len() - 1) / 2].1);
        }
        if start == 0 {
            return Ok(self.pairs[0].1);
        }
        if start == self.pairs.len() {
            return Ok(self.pairs[start - 1].1);
        }
        let (a0, b0) = self.pairs[start - 1];
        let (a1, b1) = self.pairs[start];
        let t = (n - a0) as f64 / (a1 - a0) as f64;
        let y = b0 as f64 + t * (b1 as f64 - b0 as f64);
        Ok(((y + 0.5).floor() as usize).clamp(1, self.len_b))
    }
}

/// Frame pairs of rows `i` and `j` that share a column with neither entry a
/// gap. Consecutive repeats (from copied features) are collapsed.
pub fn pairwise_from_template(z: &Template, i: usize, j: usize) -> Result<Correspondence> {
    let k = z.k();
    for r in [i, j] {
        if r >= k {
            return Err(Error::OutOfRange { index: r + 1, len: k });
        }
    }
    if i == j {
        return Err(Error::Invalid("correspondences need two distinct rows".into()));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for c in 0..z.len() {
        if let (Cell::Frame(a), Cell::Frame(b)) = (z.cell(c, i), z.cell(c, j)) {
            let p = (a + 1, b + 1);
            if pairs.last() != Some(&p) {
                pairs.push(p);
            }
        }
    }
    Ok(Correspondence {
        pairs,
        len_a: z.source(i).len(),
        len_b: z.source(j).len(),
    })
}
