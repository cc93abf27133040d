//! Multiscale DTW: align at a coarse resolution, project the path to the
//! next finer level and re-run the recursion only inside a band around it.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    check_compatible, local_cost_unchecked, normalize_in_place, CostConfig, CostMeasure, FeatureSequence,
    Frames, StepWeights, DEFAULT_SILENCE_THRESHOLD,
};
use crate::pairwise::{choose, dtw_by, AlignmentPath};

/// Levels whose downsampled sequences would fall below this many frames are
/// skipped.
pub const MIN_LEVEL_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiscaleConfig {
    /// Coarse-to-fine downsampling factors, ending in 1.
    pub downsample_factors: Vec<usize>,
    /// Column-direction dilation of the projected path, in frames of the
    /// finer level.
    pub band_radius: usize,
    pub enabled: bool,
}

impl MultiscaleConfig {
    /// Factors (8, 4, 2, 1) with a radius of 25 frames.
    pub fn standard() -> Self {
        MultiscaleConfig {
            downsample_factors: vec![8, 4, 2, 1],
            band_radius: 25,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        MultiscaleConfig {
            enabled: false,
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.downsample_factors;
        if f.last() != Some(&1) {
            return Err(Error::Config("downsample factors must end with 1".into()));
        }
        for w in f.windows(2) {
            if w[1] >= w[0] || w[0] % w[1] != 0 {
                return Err(Error::Config(format!(
                    "downsample factors must strictly decrease and each must divide its predecessor, got {f:?}"
                )));
            }
        }
        Ok(())
    }

    /// Factors actually used for an `n × m` problem.
    pub fn levels_for(&self, n: usize, m: usize) -> Vec<usize> {
        if !self.enabled {
            return vec![1];
        }
        self.downsample_factors
            .iter()
            .copied()
            .filter(|&f| f == 1 || (n.div_ceil(f) >= MIN_LEVEL_FRAMES && m.div_ceil(f) >= MIN_LEVEL_FRAMES))
            .collect()
    }
}

impl Default for MultiscaleConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Per-row admissible column interval over an `N × M` grid, 1-based and
/// inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandMask {
    cols: usize,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl BandMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        BandMask {
            cols,
            lo: vec![1; rows],
            hi: vec![cols; rows],
        }
    }

    pub fn from_intervals(cols: usize, intervals: &[(usize, usize)]) -> Result<Self> {
        let band = BandMask {
            cols,
            lo: intervals.iter().map(|i| i.0).collect(),
            hi: intervals.iter().map(|i| i.1).collect(),
        };
        band.check_connected()?;
        Ok(band)
    }

    pub fn rows(&self) -> usize {
        self.lo.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Admissible columns of row `n` (1-based).
    pub fn interval(&self, n: usize) -> (usize, usize) {
        (self.lo[n - 1], self.hi[n - 1])
    }

    pub fn contains(&self, n: usize, m: usize) -> bool {
        n >= 1 && n <= self.rows() && m >= self.lo[n - 1] && m <= self.hi[n - 1]
    }

    pub fn cell_count(&self) -> usize {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l + 1).sum()
    }

    pub fn is_full(&self) -> bool {
        self.lo.iter().all(|&l| l == 1) && self.hi.iter().all(|&h| h == self.cols)
    }

    /// Checks corner admissibility, monotone bounds and overlap between
    /// consecutive rows, which together guarantee a connected path.
    pub fn check_connected(&self) -> Result<()> {
        let n = self.rows();
        if n == 0 || self.cols == 0 {
            return Err(Error::DegenerateBand);
        }
        let ok_rows = self.lo.iter().zip(&self.hi).all(|(&l, &h)| 1 <= l && l <= h && h <= self.cols);
        let corners = self.lo[0] == 1 && self.hi[n - 1] == self.cols;
        let linked = (1..n).all(|r| {
            self.lo[r] >= self.lo[r - 1] && self.hi[r] >= self.hi[r - 1] && self.lo[r] <= self.hi[r - 1] + 1
        });
        if ok_rows && corners && linked {
            Ok(())
        } else {
            Err(Error::DegenerateBand)
        }
    }
}

/// Averages consecutive groups of `factor` frames. Chroma is renormalized,
/// onsets are not; the hop grows by `factor`.
pub fn downsample(seq: &FeatureSequence, factor: usize) -> Result<FeatureSequence> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(seq.clone());
    }
    let mut chroma = average_groups(seq.chroma(), factor);
    let dim = chroma.dim();
    let mut data = chroma.as_slice().to_vec();
    for frame in data.chunks_exact_mut(dim) {
        normalize_in_place(frame, DEFAULT_SILENCE_THRESHOLD);
    }
    chroma = Frames::new(dim, data)?;
    let onset = seq.onset().map(|o| average_groups(o, factor));
    Ok(FeatureSequence::from_parts_unchecked(
        seq.label().to_string(),
        seq.hop_duration() * factor as f64,
        chroma,
        onset,
    ))
}

fn average_groups(frames: &Frames, factor: usize) -> Frames {
    let dim = frames.dim();
    let groups = frames.len().div_ceil(factor);
    let mut data = vec![0.0; groups * dim];
    for g in 0..groups {
        let (start, end) = (g * factor, ((g + 1) * factor).min(frames.len()));
        let out = &mut data[g * dim..(g + 1) * dim];
        for i in start..end {
            for (o, v) in out.iter_mut().zip(frames.frame(i)) {
                *o += v;
            }
        }
        let count = (end - start) as f64;
        out.iter_mut().for_each(|v| *v /= count);
    }
    Frames::new(dim, data).expect("non-empty groups")
}

/// Projects a coarse path onto a grid `factor` times finer and dilates it by
/// `radius` columns.
pub fn project_path(
    path: &AlignmentPath,
    factor: usize,
    n_fine: usize,
    m_fine: usize,
    radius: usize,
) -> Result<BandMask> {
    if factor == 0 {
        return Err(Error::Config("projection factor must be at least 1".into()));
    }
    let (nc, mc) = path.shape();
    if nc != n_fine.div_ceil(factor) || mc != m_fine.div_ceil(factor) {
        return Err(Error::Invalid(format!(
            "coarse path of shape {nc}x{mc} does not match a {n_fine}x{m_fine} grid at factor {factor}"
        )));
    }
    let mut lo = vec![usize::MAX; n_fine];
    let mut hi = vec![0; n_fine];
    for &(n, m) in path.pairs() {
        let c0 = (m - 1) * factor + 1;
        let c1 = (m * factor).min(m_fine);
        for r in (n - 1) * factor..(n * factor).min(n_fine) {
            lo[r] = lo[r].min(c0);
            hi[r] = hi[r].max(c1);
        }
    }
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        *l = l.saturating_sub(radius).max(1);
        *h = (*h + radius).min(m_fine);
    }
    let band = BandMask { cols: m_fine, lo, hi };
    band.check_connected()?;
    Ok(band)
}

/// DTW restricted to `band`; cells outside it count as unreachable. Only
/// band cells are stored. Returns the path and the number of cells
/// evaluated.
pub fn dtw_banded_by<F>(band: &BandMask, weights: &StepWeights, mut cost: F) -> Result<(AlignmentPath, usize)>
where
    F: FnMut(usize, usize) -> f64,
{
    band.check_connected()?;
    weights.validate()?;
    let rows = band.rows();
    let mut offsets = Vec::with_capacity(rows + 1);
    offsets.push(0usize);
    for r in 0..rows {
        offsets.push(offsets[r] + band.hi[r] - band.lo[r] + 1);
    }
    let cells = offsets[rows];
    let mut acc = vec![f64::INFINITY; cells];
    let mut dir = vec![u8::MAX; cells];
    // Accumulated cost at 0-based (i, j), infinite outside the band.
    let at = |acc: &[f64], i: usize, j: usize| -> f64 {
        let (l, h) = (band.lo[i] - 1, band.hi[i] - 1);
        if j < l || j > h {
            f64::INFINITY
        } else {
            acc[offsets[i] + j - l]
        }
    };

    let mut evaluated = 0;
    for i in 0..rows {
        let (l, h) = (band.lo[i] - 1, band.hi[i] - 1);
        for j in l..=h {
            let c = cost(i, j);
            evaluated += 1;
            let idx = offsets[i] + j - l;
            if i == 0 && j == 0 {
                acc[idx] = c;
                continue;
            }
            let diag = if i > 0 && j > 0 { at(&acc, i - 1, j - 1) } else { f64::INFINITY };
            let up = if i > 0 { at(&acc, i - 1, j) } else { f64::INFINITY };
            let left = if j > l { acc[idx - 1] } else { f64::INFINITY };
            let (best, from) = choose(diag, up, left, c, weights);
            acc[idx] = best;
            dir[idx] = from;
        }
    }
    let total = at(&acc, rows - 1, band.cols - 1);
    if !total.is_finite() {
        return Err(Error::DegenerateBand);
    }
    let (mut i, mut j) = (rows - 1, band.cols - 1);
    let mut pairs = vec![(rows, band.cols)];
    while (i, j) != (0, 0) {
        match dir[offsets[i] + j - (band.lo[i] - 1)] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            2 => j -= 1,
            _ => return Err(Error::DegenerateBand),
        }
        pairs.push((i + 1, j + 1));
    }
    pairs.reverse();
    Ok((AlignmentPath::from_parts(pairs, total), evaluated))
}

/// A local-cost grid at one resolution level.
pub(crate) trait CostGrid {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn cost(&self, n: usize, m: usize) -> f64;
}

#[derive(Debug, Clone)]
pub struct MultiscaleResult {
    pub path: AlignmentPath,
    /// Band used at the finest level; `None` when the finest level ran dense.
    pub band: Option<BandMask>,
    /// Local-cost evaluations at the finest level.
    pub evaluated_cells: usize,
    pub levels: Vec<usize>,
}

/// Runs the coarse-to-fine scheme. `level(f)` builds the grid downsampled
/// by `f`.
pub(crate) fn multiscale_by<G, F>(
    n: usize,
    m: usize,
    weights: &StepWeights,
    ms: &MultiscaleConfig,
    mut level: F,
) -> Result<MultiscaleResult>
where
    G: CostGrid,
    F: FnMut(usize) -> Result<G>,
{
    ms.validate()?;
    let levels = ms.levels_for(n, m);
    let coarsest = level(levels[0])?;
    let mut path = dtw_by(coarsest.rows(), coarsest.cols(), weights, |a, b| coarsest.cost(a, b))?;
    let mut evaluated = coarsest.rows() * coarsest.cols();
    let mut band = None;
    for w in levels.windows(2) {
        let grid = level(w[1])?;
        let mask = project_path(&path, w[0] / w[1], grid.rows(), grid.cols(), ms.band_radius)?;
        let (p, count) = dtw_banded_by(&mask, weights, |a, b| grid.cost(a, b))?;
        path = p;
        evaluated = count;
        band = Some(mask);
    }
    Ok(MultiscaleResult {
        path,
        band,
        evaluated_cells: evaluated,
        levels,
    })
}

struct SequencePair<'a> {
    x: Cow<'a, FeatureSequence>,
    y: Cow<'a, FeatureSequence>,
    measure: CostMeasure,
}

impl CostGrid for SequencePair<'_> {
    fn rows(&self) -> usize {
        self.x.len()
    }

    fn cols(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn cost(&self, n: usize, m: usize) -> f64 {
        local_cost_unchecked(self.measure, self.x.bundle(n), self.y.bundle(m))
    }
}

pub fn msdtw_detailed(
    x: &FeatureSequence,
    y: &FeatureSequence,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<MultiscaleResult> {
    check_compatible(cfg, x, y)?;
    multiscale_by(x.len(), y.len(), &cfg.weights, ms, |f| {
        let (x, y) = if f == 1 {
            (Cow::Borrowed(x), Cow::Borrowed(y))
        } else {
            (Cow::Owned(downsample(x, f)?), Cow::Owned(downsample(y, f)?))
        };
        Ok(SequencePair {
            x,
            y,
            measure: cfg.measure,
        })
    })
}

/// Multiscale DTW between two sequences; plain DTW when `ms` is disabled.
pub fn msdtw(
    x: &FeatureSequence,
    y: &FeatureSequence,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<AlignmentPath> {
    msdtw_detailed(x, y, cfg, ms).map(|r| r.path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic_corpus, SyntheticCorpusSpec, CHROMA_DIM};
    use crate::pairwise::align_pair;
    use proptest::prelude::*;

    fn seq_from(rows: &[Vec<f64>]) -> FeatureSequence {
        FeatureSequence::new("s", 0.02, Frames::from_rows(rows).unwrap(), None).unwrap()
    }

    fn corpus(seed: u64, len: usize) -> Vec<FeatureSequence> {
        generate_synthetic_corpus(&SyntheticCorpusSpec {
            base_length: len,
            num_versions: 2,
            seed,
            ..Default::default()
        })
        .unwrap()
        .versions
    }

    #[test]
    fn config_validation() {
        assert!(MultiscaleConfig::standard().validate().is_ok());
        let mut c = MultiscaleConfig::standard();
        c.downsample_factors = vec![4, 2];
        assert!(c.validate().is_err());
        c.downsample_factors = vec![6, 4, 1];
        assert!(c.validate().is_err());
        c.downsample_factors = vec![2, 2, 1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn level_guard_skips_tiny_levels() {
        let c = MultiscaleConfig::standard();
        assert_eq!(c.levels_for(50, 200), vec![4, 2, 1]);
        assert_eq!(c.levels_for(9, 9), vec![1]);
        assert_eq!(MultiscaleConfig::disabled().levels_for(1000, 1000), vec![1]);
    }

    #[test]
    fn downsample_factor_one_is_identity() {
        let s = &corpus(1, 30)[0];
        assert_eq!(&downsample(s, 1).unwrap(), s);
    }

    #[test]
    fn downsample_pairs_by_hand() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..CHROMA_DIM).map(|d| ((i * 7 + d * 3) % 5) as f64 + 0.5).collect())
            .collect();
        let s = seq_from(&rows);
        let d = downsample(&s, 2).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.hop_duration() - 0.04).abs() < 1e-15);
        for g in 0..2 {
            let mut mean = [0.0; CHROMA_DIM];
            for k in 0..CHROMA_DIM {
                mean[k] = (rows[2 * g][k] + rows[2 * g + 1][k]) / 2.0;
            }
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            for k in 0..CHROMA_DIM {
                assert!((d.chroma().frame(g)[k] - mean[k] / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downsample_large_factor_collapses() {
        let s = &corpus(2, 30)[0];
        assert_eq!(downsample(s, s.len()).unwrap().len(), 1);
        assert_eq!(downsample(s, s.len() + 10).unwrap().len(), 1);
        // Trailing partial group is averaged over its own size.
        let d = downsample(s, 4).unwrap();
        assert_eq!(d.len(), s.len().div_ceil(4));
        assert_eq!(d.onset().unwrap().len(), d.len());
    }

    #[test]
    fn project_diagonal_by_hand() {
        let coarse = AlignmentPath::new(vec![(1, 1), (2, 2)], 0.0, 2, 2).unwrap();
        let band = project_path(&coarse, 2, 4, 4, 0).unwrap();
        let expected = [(1, 2), (1, 2), (3, 4), (3, 4)];
        for (r, e) in expected.iter().enumerate() {
            assert_eq!(band.interval(r + 1), *e);
        }
        assert_eq!(band.cell_count(), 8);
    }

    #[test]
    fn project_saturates_and_keeps_corners() {
        let coarse = AlignmentPath::new(vec![(1, 1), (2, 1), (3, 2), (3, 3)], 0.0, 3, 3).unwrap();
        let band = project_path(&coarse, 3, 8, 9, 100).unwrap();
        assert!(band.is_full());
        let band = project_path(&coarse, 3, 8, 9, 0).unwrap();
        assert!(band.contains(1, 1) && band.contains(8, 9));
        assert!(project_path(&coarse, 2, 8, 9, 0).is_err());
    }

    #[test]
    fn banded_rejects_disconnected_band() {
        let bad = BandMask {
            cols: 4,
            lo: vec![1, 4],
            hi: vec![1, 4],
        };
        assert!(matches!(
            dtw_banded_by(&bad, &StepWeights::default(), |_, _| 0.0),
            Err(Error::DegenerateBand)
        ));
    }

    #[test]
    fn saturated_band_equals_dense() {
        for seed in 0..10 {
            let v = corpus(seed, 60);
            let cfg = CostConfig::default();
            let ms = MultiscaleConfig {
                band_radius: 10_000,
                ..MultiscaleConfig::standard()
            };
            let full = align_pair(&v[0], &v[1], &cfg).unwrap();
            let r = msdtw_detailed(&v[0], &v[1], &cfg, &ms).unwrap();
            assert!(r.band.as_ref().unwrap().is_full());
            assert_eq!(r.path, full);
        }
    }

    #[test]
    fn self_alignment_stays_diagonal() {
        let v = corpus(4, 150);
        let r = msdtw_detailed(&v[0], &v[0], &CostConfig::default(), &MultiscaleConfig::standard()).unwrap();
        assert_eq!(r.levels, vec![8, 4, 2, 1]);
        assert_eq!(r.path.total_cost(), 0.0);
        assert!(r.path.pairs().iter().all(|&(a, b)| a == b));
    }

    #[test]
    fn close_to_full_dtw_and_inside_band() {
        for seed in 0..10 {
            let v = corpus(seed, 180);
            let cfg = CostConfig::default();
            let ms = MultiscaleConfig {
                downsample_factors: vec![4, 2, 1],
                band_radius: 25,
                enabled: true,
            };
            let full = align_pair(&v[0], &v[1], &cfg).unwrap();
            let r = msdtw_detailed(&v[0], &v[1], &cfg, &ms).unwrap();
            let band = r.band.as_ref().unwrap();
            assert!(r.path.pairs().iter().all(|&(n, m)| band.contains(n, m)));
            assert!(r.path.total_cost() >= full.total_cost() - 1e-9);
            assert!(r.path.total_cost() <= 1.02 * full.total_cost());
            assert!(r.evaluated_cells <= band.cell_count());
            // Path deviation, measured through the median mapping.
            for n in 1..=v[0].len() {
                let a = crate::pairwise::map_position(&full, n).unwrap() as i64;
                let b = crate::pairwise::map_position(&r.path, n).unwrap() as i64;
                assert!((a - b).abs() <= 25);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn full_band_matches_dense(n in 1usize..12, m in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n * m).map(|_| rng.random()).collect();
            let w = StepWeights::default();
            let dense = dtw_by(n, m, &w, |a, b| data[a * m + b]).unwrap();
            let (banded, count) = dtw_banded_by(&BandMask::full(n, m), &w, |a, b| data[a * m + b]).unwrap();
            prop_assert_eq!(dense, banded);
            prop_assert_eq!(count, n * m);
        }
    }
}
