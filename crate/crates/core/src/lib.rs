//! Joint alignment of multiple versions of a piece of music.
//!
//! Pairwise weighted DTW serves as the baseline. Progressive alignment grows
//! a multi-row template with gap symbols and aligns each further version
//! against all rows at once.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evaluation;
pub mod features;
pub mod multiscale;
pub mod ordering;
pub mod pairwise;
pub mod progressive;

pub use error::{Error, Result};
pub use evaluation::{
    abd, corpus_stats, run_experiment_matrix, AbdReport, BeatAnnotation, EvalCorpus, ExperimentConfig,
    ExperimentReport, FrameMapping, Variant,
};
pub use features::{
    generate_synthetic_corpus, load_feature_sequence, CostConfig, CostMeasure, FeatureSequence, Frames, GapMode,
    StepWeights, SyntheticCorpus, SyntheticCorpusSpec,
};
pub use multiscale::{msdtw, BandMask, MultiscaleConfig};
pub use ordering::{dtw_cost_order, length_order, OrderPlan, OrderStrategy};
pub use pairwise::{align_pair, dtw, AlignmentPath, CostMatrix};
pub use progressive::{
    align_to_template, iterative_align, pairwise_from_template, progressive_align, remove_from_template,
    template_extend, template_init, Correspondence, Template,
};
