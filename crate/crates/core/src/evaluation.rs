//! Average beat deviation (ABD) and the experiment matrix over variants A–G.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CostConfig, CostMeasure, FeatureSequence, GapMode, StepWeights};
use crate::multiscale::{msdtw, MultiscaleConfig};
use crate::ordering::{order_versions, OrderPlan, OrderStrategy};
use crate::pairwise::{map_position, AlignmentPath};
use crate::progressive::{iterative_align_traced, pairwise_from_template, Correspondence, StepRecord, Template};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Ground-truth beat times of one version, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    label: String,
    times: Vec<f64>,
}

impl BeatAnnotation {
    pub fn new(label: impl Into<String>, times: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if times.is_empty() {
            return Err(Error::Invalid(format!("beat annotation {label:?} is empty")));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Invalid(format!("beat {} of {label:?} is not a valid time: {t}", i + 1)));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::Invalid(format!(
                    "beat times of {label:?} must increase strictly (beat {} at {t} s)",
                    i + 1
                )));
            }
        }
        Ok(BeatAnnotation { label, times })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reads one beat time per line (first column; `#` starts a comment).
    pub fn load(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut times = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = rec.get(0).unwrap_or("");
            if field.is_empty() {
                continue;
            }
            let t: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("not a number: {field:?}"),
            })?;
            times.push(t);
        }
        if times.is_empty() {
            return Err(Error::EmptyFile { path: path.to_path_buf() });
        }
        BeatAnnotation::new(label, times).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let res: std::io::Result<()> = (|| {
            let mut out = BufWriter::new(File::create(path)?);
            for t in &self.times {
                writeln!(out, "{t}")?;
            }
            out.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

/// A monotone map from frames of one version to frames of another (1-based).
pub trait FrameMapping {
    fn source_len(&self) -> usize;
    fn target_len(&self) -> usize;
    fn map_frame(&self, n: usize) -> Result<usize>;
}

impl FrameMapping for AlignmentPath {
    fn source_len(&self) -> usize {
        self.shape().0
    }

    fn target_len(&self) -> usize {
        self.shape().1
    }

    fn map_frame(&self, n: usize) -> Result<usize> {
        map_position(self, n)
    }
}

impl FrameMapping for Correspondence {
    fn source_len(&self) -> usize {
        self.len_a
    }

    fn target_len(&self) -> usize {
        self.len_b
    }

    fn map_frame(&self, n: usize) -> Result<usize> {
        self.map(n)
    }
}

/// Frame `f` (1-based) starts at `(f - 1) · hop` seconds.
fn time_to_frame(t: f64, hop: f64, len: usize) -> usize {
    ((t / hop).round() as usize + 1).clamp(1, len)
}

fn frame_to_time(f: usize, hop: f64) -> f64 {
    (f - 1) as f64 * hop
}

/// Mean absolute deviation in milliseconds between the beats of A mapped
/// through `map` and the annotated beats of B.
pub fn abd<M: FrameMapping + ?Sized>(map: &M, beats_a: &BeatAnnotation, beats_b: &BeatAnnotation, hop: f64) -> Result<f64> {
    if beats_a.is_empty() || beats_b.is_empty() {
        return Err(Error::Invalid("beat annotations must not be empty".into()));
    }
    if beats_a.len() != beats_b.len() {
        return Err(Error::Invalid(format!(
            "beat count mismatch: {} has {}, {} has {}",
            beats_a.label(),
            beats_a.len(),
            beats_b.label(),
            beats_b.len()
        )));
    }
    if !(hop > 0.0 && hop.is_finite()) {
        return Err(Error::Config(format!("hop duration must be positive, got {hop}")));
    }
    let mut sum = 0.0;
    for (&ta, &tb) in beats_a.times().iter().zip(beats_b.times()) {
        let n = time_to_frame(ta, hop, map.source_len());
        let m = map.map_frame(n)?;
        sum += (frame_to_time(m, hop) - tb).abs();
    }
    Ok(sum / beats_a.len() as f64 * 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbdStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boxplot {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbdSummary {
    pub stats: AbdStats,
    pub boxplot: Boxplot,
}

/// Percentile of sorted data by linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn corpus_stats(values: &[f64]) -> Result<AbdSummary> {
    if values.is_empty() {
        return Err(Error::Invalid("no ABD values to summarize".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("non-finite ABD value {v}")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (p25, p75) = (percentile(&sorted, 25.0), percentile(&sorted, 75.0));
    let iqr = p75 - p25;
    let (whisker_low, whisker_high) = (p25 - 1.5 * iqr, p75 + 1.5 * iqr);
    Ok(AbdSummary {
        stats: AbdStats {
            min: sorted[0],
            // Rounding can push the mean a hair outside [min, max] for
            // near-constant data.
            mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
            max: sorted[sorted.len() - 1],
            std: var.sqrt(),
        },
        boxplot: Boxplot {
            median: percentile(&sorted, 50.0),
            p25,
            p75,
            whisker_low,
            whisker_high,
            outliers: sorted
                .iter()
                .copied()
                .filter(|&v| v < whisker_low || v > whisker_high)
                .collect(),
        },
    })
}

/// ABD of one unordered version pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAbd {
    pub label_a: String,
    pub label_b: String,
    pub a_to_b: f64,
    pub b_to_a: f64,
    /// Mean of both directions.
    pub abd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbdReport {
    /// Keyed by `"<label_a>|<label_b>"` with `label_a < label_b`.
    pub per_pair: BTreeMap<String, PairAbd>,
    pub stats: AbdStats,
    pub boxplot: Boxplot,
}

pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

impl AbdReport {
    pub fn from_pairs(pairs: Vec<PairAbd>) -> Result<Self> {
        let values: Vec<f64> = pairs.iter().map(|p| p.abd).collect();
        let summary = corpus_stats(&values)?;
        let mut per_pair = BTreeMap::new();
        for p in pairs {
            let key = pair_key(&p.label_a, &p.label_b);
            if per_pair.insert(key.clone(), p).is_some() {
                return Err(Error::Invalid(format!("pair {key} evaluated twice")));
            }
        }
        Ok(AbdReport {
            per_pair,
            stats: summary.stats,
            boxplot: summary.boxplot,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_pair.values().map(|p| p.abd).collect()
    }
}

/// Versions together with their beat annotations, matched by label.
#[derive(Debug, Clone)]
pub struct EvalCorpus {
    versions: Vec<FeatureSequence>,
    beats: Vec<BeatAnnotation>,
}

impl EvalCorpus {
    /// Pairs each version with the annotation of the same label. Every
    /// version needs exactly one annotation and vice versa; all versions
    /// share one hop duration and all annotations one beat count.
    pub fn new(versions: Vec<FeatureSequence>, beats: Vec<BeatAnnotation>) -> Result<Self> {
        if versions.len() < 2 {
            return Err(Error::Invalid("evaluation needs at least two versions".into()));
        }
        crate::progressive::check_unique_labels(&versions)?;
        let mut by_label: BTreeMap<String, BeatAnnotation> = BTreeMap::new();
        for b in beats {
            let label = b.label().to_string();
            if by_label.insert(label.clone(), b).is_some() {
                return Err(Error::Invalid(format!("duplicate beat annotation for {label:?}")));
            }
        }
        let missing: Vec<&str> = versions
            .iter()
            .map(|v| v.label())
            .filter(|l| !by_label.contains_key(*l))
            .collect();
        let extra: Vec<&str> = by_label
            .keys()
            .map(String::as_str)
            .filter(|l| !versions.iter().any(|v| v.label() == *l))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::Invalid(format!(
                "unmatched labels: features without beats {missing:?}, beats without features {extra:?}"
            )));
        }
        let hop = versions[0].hop_duration();
        if let Some(v) = versions.iter().find(|v| v.hop_duration() != hop) {
            return Err(Error::Invalid(format!(
                "{} has hop {} s but {} has {} s",
                v.label(),
                v.hop_duration(),
                versions[0].label(),
                hop
            )));
        }
        let beats: Vec<BeatAnnotation> = versions.iter().map(|v| by_label.remove(v.label()).unwrap()).collect();
        if let Some(b) = beats.iter().find(|b| b.len() != beats[0].len()) {
            return Err(Error::Invalid(format!(
                "beat count mismatch: {} has {}, {} has {}",
                b.label(),
                b.len(),
                beats[0].label(),
                beats[0].len()
            )));
        }
        Ok(EvalCorpus { versions, beats })
    }

    pub fn versions(&self) -> &[FeatureSequence] {
        &self.versions
    }

    pub fn beats(&self) -> &[BeatAnnotation] {
        &self.beats
    }

    pub fn hop_duration(&self) -> f64 {
        self.versions[0].hop_duration()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let k = self.versions.len();
        (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl Variant {
    pub const ALL: [Variant; 7] = [Variant::A, Variant::B, Variant::C, Variant::D, Variant::E, Variant::F, Variant::G];

    pub fn settings(self) -> VariantSettings {
        let progressive = VariantSettings {
            method: Method::Progressive,
            measure: CostMeasure::ChromaCosinePlusOnsetEuclidean,
            gap_mode: GapMode::InsertGaps,
            order: OrderStrategy::LengthAscending,
            iterations: 1,
        };
        let pairwise = VariantSettings {
            method: Method::Pairwise,
            ..progressive
        };
        match self {
            Variant::A => pairwise,
            Variant::B => progressive,
            Variant::C => VariantSettings {
                gap_mode: GapMode::CopyFeatures,
                ..progressive
            },
            Variant::D => VariantSettings {
                order: OrderStrategy::DtwCost,
                ..progressive
            },
            Variant::E => VariantSettings {
                iterations: 2,
                ..progressive
            },
            Variant::F => VariantSettings {
                measure: CostMeasure::ChromaCosine,
                ..progressive
            },
            Variant::G => VariantSettings {
                measure: CostMeasure::ChromaCosine,
                ..pairwise
            },
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::A => "pairwise alignment",
            Variant::B => "progressive alignment",
            Variant::C => "progressive without gap symbols",
            Variant::D => "progressive with dtw-cost order",
            Variant::E => "progressive with iterative realignment",
            Variant::F => "progressive without onset features",
            Variant::G => "pairwise without onset features",
        }
    }

    /// Parses a comma-separated list such as `A,B,F` (`all` for A–G).
    pub fn parse_list(s: &str) -> Result<Vec<Variant>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Variant::ALL.to_vec());
        }
        let mut out: Vec<Variant> = s
            .split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(Variant::from_str)
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no variants given".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Variant::A),
            "B" => Ok(Variant::B),
            "C" => Ok(Variant::C),
            "D" => Ok(Variant::D),
            "E" => Ok(Variant::E),
            "F" => Ok(Variant::F),
            "G" => Ok(Variant::G),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected A-G)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pairwise,
    Progressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSettings {
    pub method: Method,
    pub measure: CostMeasure,
    pub gap_mode: GapMode,
    pub order: OrderStrategy,
    pub iterations: usize,
}

/// Settings shared by all variants of an experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub weights: StepWeights,
    /// Overrides the per-measure default gap penalty.
    pub gap_penalty: Option<f64>,
    /// Used by the alignments that are evaluated.
    pub multiscale: MultiscaleConfig,
    /// Used by the pairwise phase of dtw-cost ordering.
    pub ordering_multiscale: MultiscaleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            weights: StepWeights::default(),
            gap_penalty: None,
            multiscale: MultiscaleConfig::disabled(),
            ordering_multiscale: MultiscaleConfig::standard(),
        }
    }
}

impl ExperimentConfig {
    pub fn cost_config(&self, measure: CostMeasure, gap_mode: GapMode) -> CostConfig {
        let mut cfg = CostConfig::for_measure(measure);
        cfg.weights = self.weights;
        if let Some(g) = self.gap_penalty {
            cfg.gap_penalty = g;
        }
        cfg.gap_mode = gap_mode;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub description: String,
    pub settings: VariantSettings,
    pub cost: CostConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderPlan>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub steps: Vec<StepRecord>,
    pub abd: AbdReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub hop_duration: f64,
    pub std_convention: String,
    pub config: ExperimentConfig,
    pub variants: BTreeMap<Variant, VariantReport>,
}

fn pair_abd<M: FrameMapping>(corpus: &EvalCorpus, i: usize, j: usize, ab: &M, ba: &M) -> Result<PairAbd> {
    let hop = corpus.hop_duration();
    let (bi, bj) = (&corpus.beats[i], &corpus.beats[j]);
    let a_to_b = abd(ab, bi, bj, hop)?;
    let b_to_a = abd(ba, bj, bi, hop)?;
    let (vi, vj) = (corpus.versions[i].label(), corpus.versions[j].label());
    let (label_a, label_b, a_to_b, b_to_a) = if vi <= vj {
        (vi, vj, a_to_b, b_to_a)
    } else {
        (vj, vi, b_to_a, a_to_b)
    };
    Ok(PairAbd {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        a_to_b,
        b_to_a,
        abd: (a_to_b + b_to_a) / 2.0,
    })
}

/// Pairwise ABDs read off a finished template.
pub fn template_abd(corpus: &EvalCorpus, template: &Template) -> Result<Vec<PairAbd>> {
    let rows: Vec<usize> = corpus
        .versions
        .iter()
        .map(|v| {
            template
                .row_of_label(v.label())
                .ok_or_else(|| Error::Invalid(format!("{} is missing from the template", v.label())))
        })
        .collect::<Result<_>>()?;
    corpus
        .pairs()
        .par_iter()
        .map(|&(i, j)| {
            let ab = pairwise_from_template(template, rows[i], rows[j])?;
            let ba = pairwise_from_template(template, rows[j], rows[i])?;
            pair_abd(corpus, i, j, &ab, &ba)
        })
        .collect()
}

/// Runs one variant.
pub fn run_variant(corpus: &EvalCorpus, variant: Variant, config: &ExperimentConfig) -> Result<VariantReport> {
    let settings = variant.settings();
    let cost = config.cost_config(settings.measure, settings.gap_mode);
    cost.validate()?;
    let versions = corpus.versions();
    let (order, steps, pairs) = match settings.method {
        Method::Pairwise => {
            let pairs = corpus
                .pairs()
                .par_iter()
                .map(|&(i, j)| {
                    let path = msdtw(&versions[i], &versions[j], &cost, &config.multiscale)?;
                    pair_abd(corpus, i, j, &path, &path.transposed())
                })
                .collect::<Result<Vec<_>>>()?;
            (None, Vec::new(), pairs)
        }
        Method::Progressive => {
            let plan = order_versions(versions, settings.order, &cost, &config.ordering_multiscale)?;
            let out = iterative_align_traced(versions, &plan.permutation, settings.iterations, &cost, &config.multiscale)?;
            let pairs = template_abd(corpus, &out.template)?;
            (Some(plan), out.steps, pairs)
        }
    };
    Ok(VariantReport {
        variant,
        description: variant.description().to_string(),
        settings,
        cost,
        order,
        steps,
        abd: AbdReport::from_pairs(pairs)?,
    })
}

/// Runs every requested variant. Variants run one after another; the
/// per-pair work inside each uses the current rayon pool.
pub fn run_experiment_matrix(
    corpus: &EvalCorpus,
    variants: &[Variant],
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if variants.is_empty() {
        return Err(Error::Config("no variants requested".into()));
    }
    let mut reports = BTreeMap::new();
    for &v in variants {
        if let std::collections::btree_map::Entry::Vacant(e) = reports.entry(v) {
            e.insert(run_variant(corpus, v, config)?);
        }
    }
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        labels: corpus.versions.iter().map(|v| v.label().to_string()).collect(),
        hop_duration: corpus.hop_duration(),
        std_convention: "population".into(),
        config: config.clone(),
        variants: reports,
    })
}

impl ExperimentReport {
    /// One line per variant and pair, with a header.
    pub fn write_pairs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let res: std::io::Result<()> = (|| {
            let mut out = BufWriter::new(File::create(path)?);
            writeln!(out, "variant,label_a,label_b,abd_a_to_b_ms,abd_b_to_a_ms,abd_ms")?;
            for (v, r) in &self.variants {
                for p in r.abd.per_pair.values() {
                    writeln!(out, "{v},{},{},{},{},{}", p.label_a, p.label_b, p.a_to_b, p.b_to_a, p.abd)?;
                }
            }
            out.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }
}
