use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use multisync::evaluation::{BeatAnnotation, EvalCorpus, ExperimentConfig, ExperimentReport, Variant};
use multisync::features::{load_feature_sequence, save_feature_sequence, CostConfig, CostMeasure, GapMode};
use multisync::ordering::{order_versions, OrderPlan, OrderStrategy};
use multisync::progressive::{iterative_align_traced, pairwise_from_template, Correspondence, StepRecord};
use multisync::{generate_synthetic_corpus, msdtw, FeatureSequence, MultiscaleConfig, StepWeights, SyntheticCorpusSpec};

use crate::{AlignMultiArgs, AlignPairArgs, CostArgs, EvaluateArgs, MultiscaleArgs, SynthArgs};

pub const SCHEMA_VERSION: u32 = 1;
const CHROMA_SUFFIX: &str = ".chroma.csv";
const BEATS_SUFFIX: &str = ".beats.csv";

#[derive(Debug, Serialize)]
struct RunInfo {
    timestamp_unix: u64,
    elapsed_seconds: f64,
    jobs: usize,
}

impl RunInfo {
    fn new(start: Instant, jobs: usize) -> Self {
        RunInfo {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: start.elapsed().as_secs_f64(),
            jobs,
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, flag: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| anyhow::anyhow!("--{flag}: cannot parse {p:?}")))
        .collect()
}

fn parse_weights(s: &str) -> Result<StepWeights> {
    let w: Vec<f64> = parse_list(s, "weights")?;
    ensure!(w.len() == 3, "--weights needs three values, got {}", w.len());
    StepWeights::new(w[0], w[1], w[2]).context("--weights")
}

fn multiscale_config(args: &MultiscaleArgs) -> Result<MultiscaleConfig> {
    let cfg = MultiscaleConfig {
        downsample_factors: parse_list(&args.factors, "factors")?,
        band_radius: args.radius,
        enabled: args.multiscale,
    };
    cfg.validate().context("--factors")?;
    Ok(cfg)
}

/// Files are taken as given; directories contribute their `*.chroma.csv`
/// files in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot read directory {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(CHROMA_SUFFIX))
                .collect();
            found.sort();
            ensure!(!found.is_empty(), "{}: no *{CHROMA_SUFFIX} files", p.display());
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("{}: no such file or directory", p.display());
        }
    }
    Ok(out)
}

fn load_versions(paths: &[PathBuf], hop: f64) -> Result<Vec<FeatureSequence>> {
    ensure!(hop > 0.0 && hop.is_finite(), "--hop must be positive, got {hop}");
    paths
        .iter()
        .map(|p| load_feature_sequence(p, hop).with_context(|| format!("cannot load {}", p.display())))
        .collect()
}

fn cost_config(args: &CostArgs, versions: &[FeatureSequence]) -> Result<CostConfig> {
    let measure = match &args.measure {
        Some(m) => m.parse::<CostMeasure>().context("--measure")?,
        None if versions.iter().all(|v| v.has_onset()) => CostMeasure::ChromaCosinePlusOnsetEuclidean,
        None => CostMeasure::ChromaCosine,
    };
    if measure.uses_onset() {
        let missing: Vec<&str> = versions.iter().filter(|v| !v.has_onset()).map(|v| v.label()).collect();
        ensure!(
            missing.is_empty(),
            "--measure {measure:?} needs onset files, missing for {missing:?}"
        );
    }
    let mut cfg = CostConfig::for_measure(measure);
    cfg.weights = parse_weights(&args.weights)?;
    if let Some(g) = args.gap_penalty {
        cfg.gap_penalty = g;
    }
    cfg.gap_mode = args.gap_mode.parse::<GapMode>().context("--gap-mode")?;
    cfg.validate().context("cost settings")?;
    Ok(cfg)
}

fn thread_count(jobs: Option<usize>) -> Result<usize> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")?;
    pool.install(f)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn align_pair(args: AlignPairArgs) -> Result<()> {
    let versions = load_versions(&args.inputs, args.cost.hop)?;
    let cfg = cost_config(&args.cost, &versions)?;
    let ms = multiscale_config(&args.ms)?;
    let path = msdtw(&versions[0], &versions[1], &cfg, &ms)?;
    path.write_csv(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    println!("total_cost: {}", path.total_cost());
    println!("average_cost: {}", path.average_cost());
    println!("path_length: {}", path.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct MultiConfig {
    hop_duration: f64,
    cost: CostConfig,
    order: OrderStrategy,
    iterations: usize,
    multiscale: MultiscaleConfig,
    ordering_multiscale: MultiscaleConfig,
}

#[derive(Debug, Serialize)]
struct TemplateSummary {
    columns: usize,
    rows: Vec<String>,
    gap_counts: BTreeMap<String, usize>,
    csv: String,
    sidecar: String,
}

#[derive(Debug, Serialize)]
struct MultiReport {
    schema_version: u32,
    command: &'static str,
    inputs: Vec<String>,
    labels: Vec<String>,
    config: MultiConfig,
    order: OrderPlan,
    order_labels: Vec<String>,
    steps: Vec<StepRecord>,
    template: TemplateSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<BTreeMap<String, Correspondence>>,
    run_info: RunInfo,
}

pub fn align_multi(args: AlignMultiArgs) -> Result<()> {
    let start = Instant::now();
    let jobs = thread_count(args.jobs)?;
    let paths = expand_inputs(&args.inputs)?;
    ensure!(paths.len() >= 2, "align-multi needs at least two versions, got {}", paths.len());
    ensure!(args.iterations >= 1, "--iterations must be at least 1");
    let versions = load_versions(&paths, args.cost.hop)?;
    let cfg = cost_config(&args.cost, &versions)?;
    let ms = multiscale_config(&args.ms)?;
    let strategy: OrderStrategy = args.order.parse().context("--order")?;
    let ordering_ms = MultiscaleConfig {
        enabled: !args.full_dtw_ordering,
        ..ms.clone()
    };
    create_dir(&args.out_dir)?;

    let (plan, outcome) = with_pool(jobs, || {
        let plan = order_versions(&versions, strategy, &cfg, &ordering_ms)?;
        let outcome = iterative_align_traced(&versions, &plan.permutation, args.iterations, &cfg, &ms)?;
        Ok((plan, outcome))
    })?;
    let template = &outcome.template;

    let csv_path = args.out_dir.join("template.csv");
    let json_path = args.out_dir.join("template.json");
    template
        .write(&csv_path, &json_path)
        .with_context(|| format!("cannot write template to {}", args.out_dir.display()))?;

    let pairs = args.emit_pairs.then(|| -> Result<_> {
        let mut out = BTreeMap::new();
        for (i, a) in versions.iter().enumerate() {
            for b in &versions[i + 1..] {
                let ra = template.row_of_label(a.label()).expect("aligned version");
                let rb = template.row_of_label(b.label()).expect("aligned version");
                out.insert(format!("{}|{}", a.label(), b.label()), pairwise_from_template(template, ra, rb)?);
            }
        }
        Ok(out)
    });
    let report = MultiReport {
        schema_version: SCHEMA_VERSION,
        command: "align-multi",
        inputs: paths.iter().map(|p| p.display().to_string()).collect(),
        labels: versions.iter().map(|v| v.label().to_string()).collect(),
        config: MultiConfig {
            hop_duration: args.cost.hop,
            cost: cfg,
            order: strategy,
            iterations: args.iterations,
            multiscale: ms,
            ordering_multiscale: ordering_ms,
        },
        order_labels: plan.labels(&versions).into_iter().map(String::from).collect(),
        order: plan,
        steps: outcome.steps.clone(),
        template: TemplateSummary {
            columns: template.len(),
            rows: template.row_labels().into_iter().map(String::from).collect(),
            gap_counts: (0..template.k())
                .map(|r| (template.source(r).label().to_string(), template.gap_count(r)))
                .collect(),
            csv: "template.csv".into(),
            sidecar: "template.json".into(),
        },
        pairs: pairs.transpose()?,
        run_info: RunInfo::new(start, jobs),
    };
    write_json(&args.out_dir.join("report.json"), &report)?;
    eprintln!(
        "aligned {} versions into {} template columns; report in {}",
        versions.len(),
        template.len(),
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    command: &'static str,
    inputs: Vec<String>,
    #[serde(flatten)]
    report: ExperimentReport,
    run_info: RunInfo,
}

fn load_beats(paths: &[PathBuf], versions: &[FeatureSequence], beats_dir: Option<&Path>) -> Result<Vec<BeatAnnotation>> {
    let mut beats = Vec::new();
    let mut missing = Vec::new();
    for (p, v) in paths.iter().zip(versions) {
        let dir = beats_dir.unwrap_or_else(|| p.parent().unwrap_or(Path::new(".")));
        let file = dir.join(format!("{}{BEATS_SUFFIX}", v.label()));
        if file.is_file() {
            beats.push(BeatAnnotation::load(&file, v.label()).with_context(|| format!("cannot load {}", file.display()))?);
        } else {
            missing.push(v.label().to_string());
        }
    }
    ensure!(missing.is_empty(), "no beat annotations (*{BEATS_SUFFIX}) for labels {missing:?}");
    Ok(beats)
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let start = Instant::now();
    let jobs = thread_count(args.jobs)?;
    let paths = expand_inputs(&args.inputs)?;
    ensure!(paths.len() >= 2, "evaluate needs at least two versions, got {}", paths.len());
    let variants = Variant::parse_list(&args.variants).context("--variants")?;
    let versions = load_versions(&paths, args.hop)?;
    let beats = load_beats(&paths, &versions, args.beats_dir.as_deref())?;
    let ms = multiscale_config(&args.ms)?;
    let config = ExperimentConfig {
        weights: parse_weights(&args.weights)?,
        gap_penalty: args.gap_penalty,
        ordering_multiscale: MultiscaleConfig {
            enabled: !args.full_dtw_ordering,
            ..ms.clone()
        },
        multiscale: ms,
    };
    let needs_onsets = variants.iter().any(|v| v.settings().measure.uses_onset());
    if needs_onsets {
        let missing: Vec<&str> = versions.iter().filter(|v| !v.has_onset()).map(|v| v.label()).collect();
        ensure!(
            missing.is_empty(),
            "variants {} use onset features, missing for {missing:?}",
            args.variants
        );
    }
    create_dir(&args.out_dir)?;
    let corpus = EvalCorpus::new(versions, beats)?;
    let report = with_pool(jobs, || Ok(multisync::run_experiment_matrix(&corpus, &variants, &config)?))?;
    report
        .write_pairs_csv(args.out_dir.join("pairs.csv"))
        .context("cannot write pairs.csv")?;
    for (v, r) in &report.variants {
        eprintln!(
            "{v}: mean {:.2} ms, std {:.2} ms, min {:.2} ms, max {:.2} ms",
            r.abd.stats.mean, r.abd.stats.std, r.abd.stats.min, r.abd.stats.max
        );
    }
    let out = EvaluateReport {
        command: "evaluate",
        inputs: paths.iter().map(|p| p.display().to_string()).collect(),
        report,
        run_info: RunInfo::new(start, jobs),
    };
    write_json(&args.out_dir.join("report.json"), &out)
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    label: String,
    frames: usize,
    beats: usize,
    chroma: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    onset: Option<String>,
    beats_file: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    spec: SyntheticCorpusSpec,
    versions: Vec<ManifestEntry>,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticCorpusSpec {
        base_length: args.length,
        num_versions: args.versions,
        warp_strength: args.warp,
        noise_level: args.noise,
        articulation_perturbation: args.articulation,
        beat_every: args.beat_every,
        seed: args.seed,
        hop_duration: args.hop,
        with_onsets: !args.no_onsets,
        pause_rate: args.pause_rate,
    };
    let corpus = generate_synthetic_corpus(&spec).context("invalid synthetic corpus settings")?;
    create_dir(&args.out_dir)?;
    let mut entries = Vec::new();
    for (v, times) in corpus.versions.iter().zip(&corpus.beats) {
        let chroma = save_feature_sequence(&args.out_dir, v)
            .with_context(|| format!("cannot write features to {}", args.out_dir.display()))?;
        let beats_name = format!("{}{BEATS_SUFFIX}", v.label());
        BeatAnnotation::new(v.label(), times.clone())?
            .save(args.out_dir.join(&beats_name))
            .with_context(|| format!("cannot write beats to {}", args.out_dir.display()))?;
        entries.push(ManifestEntry {
            label: v.label().to_string(),
            frames: v.len(),
            beats: times.len(),
            chroma: chroma.file_name().unwrap().to_string_lossy().into_owned(),
            onset: v.has_onset().then(|| format!("{}.onset.csv", v.label())),
            beats_file: beats_name,
        });
    }
    write_json(
        &args.out_dir.join("manifest.json"),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            spec,
            versions: entries,
        },
    )?;
    eprintln!("wrote {} versions to {}", corpus.versions.len(), args.out_dir.display());
    Ok(())
}
