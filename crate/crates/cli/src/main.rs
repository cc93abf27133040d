use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "multisync", version, about = "Pairwise and progressive alignment of music feature sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align two versions with weighted DTW.
    AlignPair(AlignPairArgs),
    /// Jointly align several versions with a progressive template.
    AlignMulti(AlignMultiArgs),
    /// Evaluate alignment variants against beat annotations.
    Evaluate(EvaluateArgs),
    /// Write a synthetic corpus with ground-truth beats.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// Seconds per feature frame.
    #[arg(long, default_value_t = 0.02)]
    pub hop: f64,
    /// Step weights for diagonal, vertical and horizontal steps.
    #[arg(long, default_value = "2,1.5,1.5")]
    pub weights: String,
    /// chroma-cosine or chroma-cosine-plus-onset-euclidean (default: the
    /// latter when every input has an onset file).
    #[arg(long)]
    pub measure: Option<String>,
    /// Gap penalty (default: the largest value the measure can take).
    #[arg(long)]
    pub gap_penalty: Option<f64>,
    /// insert-gaps or copy-features.
    #[arg(long, default_value = "insert-gaps")]
    pub gap_mode: String,
}

#[derive(Debug, Clone, Args)]
pub struct MultiscaleArgs {
    /// Use multiscale DTW for the alignments.
    #[arg(long)]
    pub multiscale: bool,
    /// Coarse-to-fine downsampling factors.
    #[arg(long, default_value = "8,4,2,1")]
    pub factors: String,
    /// Band radius in frames.
    #[arg(long, default_value_t = 25)]
    pub radius: usize,
}

#[derive(Debug, Args)]
pub struct AlignPairArgs {
    /// Two chroma files (`<label>.chroma.csv`).
    #[arg(num_args = 2, required = true)]
    pub inputs: Vec<PathBuf>,
    /// Alignment CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub ms: MultiscaleArgs,
}

#[derive(Debug, Args)]
pub struct AlignMultiArgs {
    /// Chroma files or directories containing `*.chroma.csv`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for template.csv, template.json and report.json.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// length-ascending, length-descending, dtw-cost or as-given.
    #[arg(long, default_value = "length-ascending")]
    pub order: String,
    /// 1 for plain progressive alignment; more for iterative realignment.
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Use full DTW in the pairwise phase of dtw-cost ordering.
    #[arg(long)]
    pub full_dtw_ordering: bool,
    /// Include pairwise correspondences read off the template in the report.
    #[arg(long)]
    pub emit_pairs: bool,
    /// Worker threads for per-pair work (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub ms: MultiscaleArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Chroma files or directories containing `*.chroma.csv`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory holding `<label>.beats.csv` (default: next to each chroma file).
    #[arg(long)]
    pub beats_dir: Option<PathBuf>,
    /// Comma-separated variants from A to G, or `all`.
    #[arg(long, default_value = "all")]
    pub variants: String,
    /// Directory for report.json and pairs.csv.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    pub hop: f64,
    #[arg(long, default_value = "2,1.5,1.5")]
    pub weights: String,
    /// Overrides the per-measure default gap penalty.
    #[arg(long)]
    pub gap_penalty: Option<f64>,
    /// Use full DTW in the pairwise phase of dtw-cost ordering.
    #[arg(long)]
    pub full_dtw_ordering: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub ms: MultiscaleArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub versions: usize,
    /// Frames in the unwarped base timeline.
    #[arg(long, default_value_t = 300)]
    pub length: usize,
    #[arg(long, default_value_t = 0.3)]
    pub warp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.3)]
    pub articulation: f64,
    /// Base frames between beats.
    #[arg(long, default_value_t = 10)]
    pub beat_every: usize,
    #[arg(long, default_value_t = 0.0)]
    pub pause_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub hop: f64,
    /// Do not write onset files.
    #[arg(long)]
    pub no_onsets: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::AlignPair(a) => commands::align_pair(a),
        Command::AlignMulti(a) => commands::align_multi(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
