//! Synthetic multi-version corpora with known ground-truth time warps.
//!
//! A base timeline of pseudo-chroma is built from note segments. Each
//! version re-renders the base through its own strictly monotone warp,
//! blends every segment toward an alternative voicing according to a
//! per-version playing style, rescales pitch-class balance, adds noise and
//! optionally inserts pauses (rendered as silence). Beats are placed on the
//! base timeline and pushed through each warp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{normalize_frames, normalize_in_place, FeatureSequence, Frames, CHROMA_DIM, DEFAULT_SILENCE_THRESHOLD};
use crate::error::{Error, Result};

const MIN_SEGMENT: usize = 5;
const MAX_SEGMENT: usize = 40;
const MIN_STEP: f64 = 0.1;
const ONSET_DECAY: f64 = 0.6;
const ONSET_SPAN: usize = 6;

fn default_hop() -> f64 {
    0.020
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub base_length: usize,
    pub num_versions: usize,
    /// Local tempo spread: step durations are drawn from `[1-s, 1+s]`.
    pub warp_strength: f64,
    pub noise_level: f64,
    /// Strength of the per-version voicing and balance changes.
    pub articulation_perturbation: f64,
    pub beat_every: usize,
    pub seed: u64,
    #[serde(default = "default_hop")]
    pub hop_duration: f64,
    #[serde(default = "default_true")]
    pub with_onsets: bool,
    /// Probability that a version pauses before a note segment.
    #[serde(default)]
    pub pause_rate: f64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            base_length: 300,
            num_versions: 5,
            warp_strength: 0.3,
            noise_level: 0.05,
            articulation_perturbation: 0.3,
            beat_every: 10,
            seed: 0,
            hop_duration: default_hop(),
            with_onsets: true,
            pause_rate: 0.0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.base_length < 2 {
            return bad("base_length must be at least 2");
        }
        if self.num_versions < 2 {
            return bad("num_versions must be at least 2");
        }
        if self.beat_every < 1 {
            return bad("beat_every must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.warp_strength) {
            return bad("warp_strength must lie in [0, 1]");
        }
        if !(self.noise_level >= 0.0 && self.articulation_perturbation >= 0.0) {
            return bad("noise_level and articulation_perturbation must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.pause_rate) {
            return bad("pause_rate must lie in [0, 1]");
        }
        if !(self.hop_duration > 0.0) {
            return bad("hop_duration must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// The unwarped, unperturbed timeline (normalized chroma only).
    pub base: FeatureSequence,
    pub versions: Vec<FeatureSequence>,
    /// Beat times in seconds per version.
    pub beats: Vec<Vec<f64>>,
    /// For each version, the (0-based, fractional) version frame position of
    /// every base frame.
    pub warps: Vec<Vec<f64>>,
}

impl SyntheticCorpus {
    /// Version-`b` position of version-`a` position `pos` (both 0-based
    /// frame units) under the ground-truth warps.
    pub fn true_map(&self, a: usize, b: usize, pos: f64) -> f64 {
        let base = invert_piecewise_linear(&self.warps[a], pos);
        eval_piecewise_linear(&self.warps[b], base)
    }
}

struct Segment {
    start: usize,
    len: usize,
    main: [f64; CHROMA_DIM],
    alt: [f64; CHROMA_DIM],
}

fn voicing(rng: &mut ChaCha8Rng, root: usize) -> [f64; CHROMA_DIM] {
    let mut v = [0.0; CHROMA_DIM];
    for x in v.iter_mut() {
        *x = 0.02 + 0.04 * rng.random::<f64>();
    }
    v[root] += 1.0;
    let third = if rng.random::<bool>() { 3 } else { 4 };
    v[(root + third) % CHROMA_DIM] += 0.2 + 0.4 * rng.random::<f64>();
    v[(root + 7) % CHROMA_DIM] += 0.2 + 0.4 * rng.random::<f64>();
    v
}

fn build_segments(rng: &mut ChaCha8Rng, length: usize) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start = 0;
    let mut prev_root = usize::MAX;
    while start < length {
        let len = rng.random_range(MIN_SEGMENT..=MAX_SEGMENT).min(length - start);
        let mut root = rng.random_range(0..CHROMA_DIM);
        if root == prev_root {
            root = (root + 1 + rng.random_range(0..CHROMA_DIM - 1)) % CHROMA_DIM;
        }
        prev_root = root;
        let main = voicing(rng, root);
        // Alternative voicing: a different pitch class carries the weight.
        let shift = rng.random_range(1..CHROMA_DIM);
        let alt = voicing(rng, (root + shift) % CHROMA_DIM);
        segments.push(Segment {
            start,
            len,
            main,
            alt,
        });
        start += len;
    }
    segments
}

/// Raw (unnormalized) base frames for the main and the alternative voicing.
fn render_base(rng: &mut ChaCha8Rng, segments: &[Segment], length: usize) -> (Vec<f64>, Vec<f64>) {
    let mut phase = [0.0; CHROMA_DIM];
    for p in phase.iter_mut() {
        *p = rng.random::<f64>() * std::f64::consts::TAU;
    }
    let period = 20.0 + 30.0 * rng.random::<f64>();
    let mut main = vec![0.0; length * CHROMA_DIM];
    let mut alt = vec![0.0; length * CHROMA_DIM];
    for seg in segments {
        for t in seg.start..seg.start + seg.len {
            for d in 0..CHROMA_DIM {
                let m = 1.0 + 0.1 * (std::f64::consts::TAU * t as f64 / period + phase[d]).sin();
                main[t * CHROMA_DIM + d] = seg.main[d] * m;
                alt[t * CHROMA_DIM + d] = seg.alt[d] * m;
            }
        }
    }
    (main, alt)
}

/// Warped positions of the base frames in one version plus the pause
/// intervals (in version frame units) that render as silence.
struct Warp {
    positions: Vec<f64>,
    pauses: Vec<(f64, f64)>,
    length: usize,
}

fn draw_warp(rng: &mut ChaCha8Rng, spec: &SyntheticCorpusSpec, segments: &[Segment]) -> Warp {
    let n = spec.base_length;
    let mut steps = vec![1.0; n - 1];
    let mut pause_before = vec![0.0; n];
    // Piecewise-constant local tempo over spans of 10..60 base frames.
    let mut j = 0;
    while j < n - 1 {
        let span = rng.random_range(10..=60).min(n - 1 - j);
        let u: f64 = rng.random();
        let d = (1.0 + spec.warp_strength * (2.0 * u - 1.0)).max(MIN_STEP);
        steps[j..j + span].iter_mut().for_each(|s| *s = d);
        j += span;
    }
    for seg in segments.iter().skip(1) {
        let u: f64 = rng.random();
        let len = 5.0 + 15.0 * rng.random::<f64>();
        if u < spec.pause_rate {
            pause_before[seg.start] = len;
        }
    }

    let mut positions = Vec::with_capacity(n);
    let mut pauses = Vec::new();
    let mut pos = 0.0;
    positions.push(pos);
    for j in 1..n {
        let sound_end = pos + steps[j - 1];
        pos = sound_end + pause_before[j];
        if pause_before[j] > 0.0 {
            pauses.push((sound_end, pos));
        }
        positions.push(pos);
    }
    let last = positions[n - 1];
    let length = ((last.round() as usize) + 1).max(2);
    let scale = (length - 1) as f64 / last;
    if scale != 1.0 {
        positions.iter_mut().for_each(|p| *p *= scale);
        pauses.iter_mut().for_each(|(a, b)| {
            *a *= scale;
            *b *= scale;
        });
    }
    Warp {
        positions,
        pauses,
        length,
    }
}

fn eval_piecewise_linear(knots: &[f64], x: f64) -> f64 {
    let last = knots.len() - 1;
    if x <= 0.0 {
        return knots[0];
    }
    if x >= last as f64 {
        return knots[last];
    }
    let j = x.floor() as usize;
    let frac = x - j as f64;
    knots[j] + frac * (knots[j + 1] - knots[j])
}

/// Inverse of the increasing piecewise-linear map `j -> knots[j]`.
fn invert_piecewise_linear(knots: &[f64], y: f64) -> f64 {
    let last = knots.len() - 1;
    if y <= knots[0] {
        return 0.0;
    }
    if y >= knots[last] {
        return last as f64;
    }
    let j = knots.partition_point(|&k| k <= y) - 1;
    j as f64 + (y - knots[j]) / (knots[j + 1] - knots[j])
}

fn render_version(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticCorpusSpec,
    segments: &[Segment],
    main: &[f64],
    alt: &[f64],
    warp: &Warp,
) -> (Frames, Option<Frames>) {
    // Each segment moves toward its alternative voicing by a version- and
    // segment-specific amount, so differences stay local to some pairs.
    let style: f64 = rng.random();
    let blends: Vec<f64> = segments
        .iter()
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            (spec.articulation_perturbation * style * e).min(1.0)
        })
        .collect();
    let mut gain = [1.0; CHROMA_DIM];
    for g in gain.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *g = (0.5 * spec.articulation_perturbation * z).exp();
    }

    let n = spec.base_length;
    let mut seg_of = vec![0; n];
    for (s, seg) in segments.iter().enumerate() {
        seg_of[seg.start..seg.start + seg.len].iter_mut().for_each(|x| *x = s);
    }
    let mut data = vec![0.0; warp.length * CHROMA_DIM];
    for i in 0..warp.length {
        let x = i as f64;
        let frame = &mut data[i * CHROMA_DIM..(i + 1) * CHROMA_DIM];
        let silent = warp.pauses.iter().any(|&(a, b)| x > a && x < b);
        if !silent {
            let u = invert_piecewise_linear(&warp.positions, x);
            let j = (u.floor() as usize).min(n - 1);
            let frac = u - j as f64;
            let k = (j + 1).min(n - 1);
            let (bj, bk) = (blends[seg_of[j]], blends[seg_of[k]]);
            for d in 0..CHROMA_DIM {
                let m = (1.0 - bj) * main[j * CHROMA_DIM + d] + bj * alt[j * CHROMA_DIM + d];
                let a = (1.0 - bk) * main[k * CHROMA_DIM + d] + bk * alt[k * CHROMA_DIM + d];
                frame[d] = ((1.0 - frac) * m + frac * a) * gain[d];
            }
        }
        for v in frame.iter_mut() {
            *v += spec.noise_level * rng.random::<f64>();
        }
    }
    let mut chroma = Frames {
        dim: CHROMA_DIM,
        data,
    };
    chroma = normalize_frames(&chroma, DEFAULT_SILENCE_THRESHOLD);

    let onset = spec.with_onsets.then(|| {
        let mut on = vec![0.0; warp.length * CHROMA_DIM];
        for (seg, &blend) in segments.iter().zip(&blends) {
            let at = warp.positions[seg.start].round() as usize;
            let voice: Vec<f64> = (0..CHROMA_DIM)
                .map(|d| (1.0 - blend) * seg.main[d] + blend * seg.alt[d])
                .collect();
            for (step, t) in (at..warp.length.min(at + ONSET_SPAN)).enumerate() {
                let decay = ONSET_DECAY.powi(step as i32);
                for d in 0..CHROMA_DIM {
                    if voice[d] > 0.15 {
                        on[t * CHROMA_DIM + d] += voice[d] * decay;
                    }
                }
            }
        }
        Frames {
            dim: CHROMA_DIM,
            data: on,
        }
    });
    (chroma, onset)
}

/// Deterministic in `spec.seed`.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.base_length;
    let segments = build_segments(&mut rng, n);
    let (main, alt) = render_base(&mut rng, &segments, n);

    let mut base_data = main.clone();
    for frame in base_data.chunks_exact_mut(CHROMA_DIM) {
        normalize_in_place(frame, DEFAULT_SILENCE_THRESHOLD);
    }
    let base = FeatureSequence::new(
        "base",
        spec.hop_duration,
        Frames {
            dim: CHROMA_DIM,
            data: base_data,
        },
        None,
    )?;

    let beat_frames: Vec<usize> = (0..n).step_by(spec.beat_every).collect();
    let width = (spec.num_versions - 1).to_string().len().max(2);
    let mut versions = Vec::with_capacity(spec.num_versions);
    let mut beats = Vec::with_capacity(spec.num_versions);
    let mut warps = Vec::with_capacity(spec.num_versions);
    for v in 0..spec.num_versions {
        let warp = draw_warp(&mut rng, spec, &segments);
        let (chroma, onset) = render_version(&mut rng, spec, &segments, &main, &alt, &warp);
        let label = format!("v{v:0width$}");
        versions.push(FeatureSequence::new(label, spec.hop_duration, chroma, onset)?);
        beats.push(
            beat_frames
                .iter()
                .map(|&j| warp.positions[j] * spec.hop_duration)
                .collect(),
        );
        warps.push(warp.positions);
    }
    Ok(SyntheticCorpus {
        base,
        versions,
        beats,
        warps,
    })
}
