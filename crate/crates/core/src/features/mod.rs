//! Feature sequences, local cost measures and synthetic test corpora.
//!
//! A [`FeatureSequence`] holds unit-norm chroma frames and, optionally, a
//! parallel stream of onset-indicator frames at the same hop. Frames are
//! stored row-major in one flat buffer per stream.

mod io;
mod synthetic;

pub use io::{load_feature_sequence, save_feature_sequence, write_frames_csv};
pub use synthetic::{generate_synthetic_corpus, SyntheticCorpus, SyntheticCorpusSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of pitch classes in a chroma frame.
pub const CHROMA_DIM: usize = 12;

/// Default norm below which a chroma frame counts as silence.
pub const DEFAULT_SILENCE_THRESHOLD: f64 = 1e-6;

/// Default upper bound assumed for the onset distance when deriving the gap
/// penalty of the combined measure (distance between two orthogonal unit
/// vectors).
pub const DEFAULT_ONSET_COST_CAP: f64 = std::f64::consts::SQRT_2;

/// A dense block of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    dim: usize,
    data: Vec<f64>,
}

impl Frames {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("frame dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Invalid(format!(
                "buffer of {} values is not a whole number of {dim}-dimensional frames",
                data.len()
            )));
        }
        Ok(Frames { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::Invalid("no frames".into()))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Frames::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Frame `i`, 0-based.
    #[inline]
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn check_non_negative(&self) -> Result<()> {
        for (frame, row) in self.iter().enumerate() {
            if let Some((dim, &value)) = row.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::NegativeFeature { frame, dim, value });
            }
        }
        Ok(())
    }
}

/// One version of a piece as a time-ordered list of feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    label: String,
    hop_duration: f64,
    chroma: Frames,
    onset: Option<Frames>,
}

impl FeatureSequence {
    pub fn new(
        label: impl Into<String>,
        hop_duration: f64,
        chroma: Frames,
        onset: Option<Frames>,
    ) -> Result<Self> {
        if chroma.is_empty() {
            return Err(Error::Invalid("feature sequence must contain at least one frame".into()));
        }
        if !(hop_duration > 0.0 && hop_duration.is_finite()) {
            return Err(Error::Invalid(format!(
                "hop duration must be positive, got {hop_duration}"
            )));
        }
        chroma.check_non_negative()?;
        if let Some(on) = &onset {
            if on.len() != chroma.len() {
                return Err(Error::Invalid(format!(
                    "onset stream has {} frames but chroma has {}",
                    on.len(),
                    chroma.len()
                )));
            }
            on.check_non_negative()?;
        }
        Ok(FeatureSequence {
            label: label.into(),
            hop_duration,
            chroma,
            onset,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hop_duration(&self) -> f64 {
        self.hop_duration
    }

    pub fn len(&self) -> usize {
        self.chroma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chroma.is_empty()
    }

    pub fn chroma(&self) -> &Frames {
        &self.chroma
    }

    pub fn onset(&self) -> Option<&Frames> {
        self.onset.as_ref()
    }

    pub fn has_onset(&self) -> bool {
        self.onset.is_some()
    }

    /// Frame bundle at 0-based index `i`.
    #[inline]
    pub fn bundle(&self, i: usize) -> FrameRef<'_> {
        FrameRef {
            chroma: self.chroma.frame(i),
            onset: self.onset.as_ref().map(|o| o.frame(i)),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Drops the onset stream.
    pub fn without_onset(mut self) -> Self {
        self.onset = None;
        self
    }

    pub(crate) fn from_parts_unchecked(
        label: String,
        hop_duration: f64,
        chroma: Frames,
        onset: Option<Frames>,
    ) -> Self {
        FeatureSequence {
            label,
            hop_duration,
            chroma,
            onset,
        }
    }
}

/// Borrowed view of one frame: chroma plus the optional onset part.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub chroma: &'a [f64],
    pub onset: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMeasure {
    ChromaCosine,
    ChromaCosinePlusOnsetEuclidean,
}

impl CostMeasure {
    pub fn uses_onset(self) -> bool {
        matches!(self, CostMeasure::ChromaCosinePlusOnsetEuclidean)
    }

    /// Largest value the measure can take on valid frames, given a cap on
    /// the onset distance.
    pub fn max_cost(self, onset_cost_cap: f64) -> f64 {
        match self {
            CostMeasure::ChromaCosine => 1.0,
            CostMeasure::ChromaCosinePlusOnsetEuclidean => 1.0 + onset_cost_cap,
        }
    }
}

impl std::str::FromStr for CostMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chroma-cosine" | "chroma" => Ok(CostMeasure::ChromaCosine),
            "chroma-cosine-plus-onset-euclidean" | "combined" => {
                Ok(CostMeasure::ChromaCosinePlusOnsetEuclidean)
            }
            other => Err(Error::Config(format!("unknown cost measure {other:?}"))),
        }
    }
}

/// DTW step weights for the diagonal, vertical and horizontal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWeights {
    pub diagonal: f64,
    pub vertical: f64,
    pub horizontal: f64,
}

impl StepWeights {
    pub fn new(diagonal: f64, vertical: f64, horizontal: f64) -> Result<Self> {
        let w = StepWeights {
            diagonal,
            vertical,
            horizontal,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("diagonal", self.diagonal),
            ("vertical", self.vertical),
            ("horizontal", self.horizontal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} step weight must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Weights for the transposed problem.
    pub fn transposed(self) -> Self {
        StepWeights {
            diagonal: self.diagonal,
            vertical: self.horizontal,
            horizontal: self.vertical,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        StepWeights {
            diagonal: self.diagonal * factor,
            vertical: self.vertical * factor,
            horizontal: self.horizontal * factor,
        }
    }
}

impl Default for StepWeights {
    fn default() -> Self {
        StepWeights {
            diagonal: 2.0,
            vertical: 1.5,
            horizontal: 1.5,
        }
    }
}

/// How a new version is merged into the template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    #[default]
    InsertGaps,
    CopyFeatures,
}

impl std::str::FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "insert-gaps" | "gaps" => Ok(GapMode::InsertGaps),
            "copy-features" | "copy" => Ok(GapMode::CopyFeatures),
            other => Err(Error::Config(format!("unknown gap mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub measure: CostMeasure,
    pub weights: StepWeights,
    pub gap_penalty: f64,
    pub gap_mode: GapMode,
}

impl CostConfig {
    /// Configuration with default weights and the gap penalty set to the
    /// largest value `measure` can take.
    pub fn for_measure(measure: CostMeasure) -> Self {
        CostConfig {
            measure,
            weights: StepWeights::default(),
            gap_penalty: measure.max_cost(DEFAULT_ONSET_COST_CAP),
            gap_mode: GapMode::InsertGaps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.gap_penalty > 0.0 && self.gap_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "gap penalty must be positive, got {}",
                self.gap_penalty
            )));
        }
        Ok(())
    }

    /// Checks that `seq` carries every stream the measure needs.
    pub fn check_sequence(&self, seq: &FeatureSequence) -> Result<()> {
        if self.measure.uses_onset() && !seq.has_onset() {
            return Err(Error::MissingOnset {
                label: seq.label().to_string(),
            });
        }
        Ok(())
    }
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig::for_measure(CostMeasure::ChromaCosine)
    }
}

/// Scales every frame with norm at least `silence_threshold` to unit length
/// and replaces quieter frames by the uniform unit vector.
pub fn normalize_chroma(seq: &FeatureSequence, silence_threshold: f64) -> Result<FeatureSequence> {
    seq.chroma.check_non_negative()?;
    let chroma = normalize_frames(&seq.chroma, silence_threshold);
    Ok(FeatureSequence::from_parts_unchecked(
        seq.label.clone(),
        seq.hop_duration,
        chroma,
        seq.onset.clone(),
    ))
}

pub(crate) fn normalize_frames(frames: &Frames, silence_threshold: f64) -> Frames {
    let mut data = frames.data.clone();
    for frame in data.chunks_exact_mut(frames.dim) {
        normalize_in_place(frame, silence_threshold);
    }
    Frames {
        dim: frames.dim,
        data,
    }
}

pub(crate) fn normalize_in_place(frame: &mut [f64], silence_threshold: f64) {
    let norm = frame.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm >= silence_threshold && norm > 0.0 {
        frame.iter_mut().for_each(|v| *v /= norm);
    } else {
        let uniform = 1.0 / (frame.len() as f64).sqrt();
        frame.iter_mut().for_each(|v| *v = uniform);
    }
}

/// `1 - <x, y>` for unit-norm frames, clamped at zero against rounding.
pub fn cosine_cost(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(cosine_unchecked(x, y))
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(euclidean_unchecked(x, y))
}

/// Cosine distance of the chroma parts plus Euclidean distance of the
/// onset parts.
pub fn combined_cost(x: FrameRef<'_>, y: FrameRef<'_>) -> Result<f64> {
    let (Some(xo), Some(yo)) = (x.onset, y.onset) else {
        return Err(Error::MissingOnset {
            label: String::new(),
        });
    };
    Ok(cosine_cost(x.chroma, y.chroma)? + euclidean_distance(xo, yo)?)
}

/// Local cost of two frame bundles under `measure`.
pub fn local_cost(measure: CostMeasure, x: FrameRef<'_>, y: FrameRef<'_>) -> Result<f64> {
    match measure {
        CostMeasure::ChromaCosine => cosine_cost(x.chroma, y.chroma),
        CostMeasure::ChromaCosinePlusOnsetEuclidean => combined_cost(x, y),
    }
}

/// Hot-loop variant of [`local_cost`]; callers validate dimensions and
/// stream presence up front.
#[inline]
pub(crate) fn local_cost_unchecked(measure: CostMeasure, x: FrameRef<'_>, y: FrameRef<'_>) -> f64 {
    let chroma = cosine_unchecked(x.chroma, y.chroma);
    match measure {
        CostMeasure::ChromaCosine => chroma,
        CostMeasure::ChromaCosinePlusOnsetEuclidean => match (x.onset, y.onset) {
            (Some(a), Some(b)) => chroma + euclidean_unchecked(a, b),
            _ => f64::NAN,
        },
    }
}

#[inline]
fn cosine_unchecked(x: &[f64], y: &[f64]) -> f64 {
    // Exact zero for identical frames; the dot product of a normalized
    // frame with itself is only 1 up to rounding.
    if x == y {
        return 0.0;
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (1.0 - dot).max(0.0)
}

#[inline]
fn euclidean_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Checks that two sequences can be compared under `cfg`.
pub(crate) fn check_compatible(cfg: &CostConfig, x: &FeatureSequence, y: &FeatureSequence) -> Result<()> {
    cfg.check_sequence(x)?;
    cfg.check_sequence(y)?;
    if x.chroma.dim() != y.chroma.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.chroma.dim(),
            found: y.chroma.dim(),
        });
    }
    if cfg.measure.uses_onset() {
        let (a, b) = (x.onset.as_ref().unwrap().dim(), y.onset.as_ref().unwrap().dim());
        if a != b {
            return Err(Error::DimensionMismatch {
                expected: a,
                found: b,
            });
        }
    }
    Ok(())
}
