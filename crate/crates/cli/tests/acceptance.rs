//! Acceptance suite. Every test prints one `PASS`/`FAIL` line for its
//! criterion (written straight to stdout so it shows without
//! `--nocapture`) and then asserts.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use multisync::evaluation::{abd, corpus_stats, BeatAnnotation, EvalCorpus, ExperimentConfig, Variant};
use multisync::features::{normalize_chroma, Frames, StepWeights};
use multisync::ordering::{dtw_cost_order, length_order};
use multisync::pairwise::Step;
use multisync::progressive::{iterative_align_observed, Cell};
use multisync::{
    align_pair, align_to_template, dtw, generate_synthetic_corpus, msdtw, pairwise_from_template, progressive_align,
    remove_from_template, run_experiment_matrix, template_extend, template_init, AlignmentPath, CostConfig,
    CostMatrix, CostMeasure, Correspondence, FeatureSequence, GapMode, MultiscaleConfig, SyntheticCorpusSpec,
    Template,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, result: &Result<String, String>) {
    let line = match result {
        Ok(detail) => format!("PASS criterion {id} ({name}): {detail}\n"),
        Err(detail) => format!("FAIL criterion {id} ({name}): {detail}\n"),
    };
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn check(id: u32, name: &str, f: impl FnOnce() -> Result<String, String>) {
    let result = f();
    report(id, name, &result);
    if let Err(e) = result {
        panic!("criterion {id} failed: {e}");
    }
}

/// Minimum over every monotone path from (0,0) to (n-1,m-1) of the weighted
/// step cost, by exhaustive recursion.
fn brute_force(n: usize, m: usize, w: &StepWeights, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn walk(i: usize, j: usize, n: usize, m: usize, w: &StepWeights, cost: &dyn Fn(usize, usize) -> f64, acc: f64) -> f64 {
        if i == n - 1 && j == m - 1 {
            return acc;
        }
        let mut best = f64::INFINITY;
        if i + 1 < n && j + 1 < m {
            best = best.min(walk(i + 1, j + 1, n, m, w, cost, acc + w.diagonal * cost(i + 1, j + 1)));
        }
        if i + 1 < n {
            best = best.min(walk(i + 1, j, n, m, w, cost, acc + w.vertical * cost(i + 1, j)));
        }
        if j + 1 < m {
            best = best.min(walk(i, j + 1, n, m, w, cost, acc + w.horizontal * cost(i, j + 1)));
        }
        best
    }
    walk(0, 0, n, m, w, cost, cost(0, 0))
}

fn path_cost(path: &AlignmentPath, w: &StepWeights, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    let p = path.pairs();
    let mut total = cost(p[0].0 - 1, p[0].1 - 1);
    for k in 1..p.len() {
        let c = cost(p[k].0 - 1, p[k].1 - 1);
        total += c * match Step::between(p[k - 1], p[k]).unwrap() {
            Step::Diagonal => w.diagonal,
            Step::Vertical => w.vertical,
            Step::Horizontal => w.horizontal,
        };
    }
    total
}

fn random_chroma(rng: &mut ChaCha8Rng, label: &str, len: usize) -> FeatureSequence {
    let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..12).map(|_| rng.random::<f64>()).collect()).collect();
    let raw = FeatureSequence::new(label, 0.02, Frames::from_rows(&rows).unwrap(), None).unwrap();
    normalize_chroma(&raw, 1e-6).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    for d in 0..a.len() {
        dot += a[d] * b[d];
    }
    if a == b {
        0.0
    } else {
        (1.0 - dot).max(0.0)
    }
}

fn corpus_spec(seed: u64, k: usize, len: usize) -> SyntheticCorpusSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    SyntheticCorpusSpec {
        base_length: len,
        num_versions: k,
        warp_strength: rng.random_range(0.1..0.5),
        noise_level: rng.random_range(0.0..0.1),
        articulation_perturbation: rng.random_range(0.0..1.0),
        pause_rate: rng.random_range(0.0..0.3),
        seed,
        ..Default::default()
    }
}

#[test]
fn criterion_1_dtw_oracle() {
    check(1, "DTW oracle equivalence", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for case in 0..500 {
            let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..2.0)).collect();
            let w = StepWeights::new(
                rng.random_range(0.1..3.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.1..3.0),
            )
            .unwrap();
            let c = CostMatrix::from_vec(n, m, data.clone()).unwrap();
            let path = dtw(&c, &w).map_err(|e| e.to_string())?;
            path.validate(n, m).map_err(|e| format!("case {case}: {e}"))?;
            let cost = |i: usize, j: usize| data[i * m + j];
            let oracle = brute_force(n, m, &w, &cost);
            let diff = (path.total_cost() - oracle).abs().max((path_cost(&path, &w, &cost) - oracle).abs());
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!("case {case} ({n}x{m}): dtw {} vs oracle {oracle}", path.total_cost()));
            }
        }
        let elapsed = start.elapsed();
        if elapsed > Duration::from_secs(10) {
            return Err(format!("took {elapsed:?}"));
        }
        Ok(format!("500 matrices, max |diff| {worst:.1e}, {elapsed:.2?}"))
    });
}

#[test]
fn criterion_2_two_version_reduction() {
    check(2, "two-version reduction", || {
        for seed in 0..100 {
            let len = 60 + (seed as usize * 7) % 140;
            let c = generate_synthetic_corpus(&corpus_spec(seed, 2, len)).unwrap();
            let cfg = CostConfig::for_measure(if seed % 2 == 0 {
                CostMeasure::ChromaCosinePlusOnsetEuclidean
            } else {
                CostMeasure::ChromaCosine
            });
            let z = progressive_align(&c.versions, &[0, 1], &cfg, &MultiscaleConfig::disabled()).map_err(|e| e.to_string())?;
            let corr = pairwise_from_template(&z, 0, 1).map_err(|e| e.to_string())?;
            let path = align_pair(&c.versions[0], &c.versions[1], &cfg).map_err(|e| e.to_string())?;
            if corr.pairs != path.diagonal_matches() {
                return Err(format!("seed {seed}: correspondences differ from the (1,1) matches"));
            }
        }
        Ok("100 pairs, exact match".into())
    });
}

/// Independent structural checks on a template.
fn structure(z: &Template, versions: &[&FeatureSequence]) -> Result<(), String> {
    for c in 0..z.len() {
        if z.column(c).iter().all(|e| matches!(e, Cell::Gap)) {
            return Err(format!("column {c} holds only gaps"));
        }
    }
    for (r, v) in versions.iter().enumerate() {
        if z.source(r).label() != v.label() {
            return Err(format!("row {r} is {} not {}", z.source(r).label(), v.label()));
        }
        let rebuilt = z.reconstruct_row(r);
        if rebuilt.chroma().as_slice() != v.chroma().as_slice() || rebuilt.onset() != v.onset() {
            return Err(format!("row {r} ({}) does not reconstruct its version", v.label()));
        }
    }
    Ok(())
}

#[test]
fn criterion_3_template_structure() {
    check(3, "template structural suite", || {
        let ms = MultiscaleConfig::disabled();
        let mut mutations = 0;
        for seed in 0..50u64 {
            let k = 3 + (seed as usize % 6);
            let c = generate_synthetic_corpus(&corpus_spec(100 + seed, k, 80)).unwrap();
            let cfg = CostConfig::for_measure(CostMeasure::ChromaCosinePlusOnsetEuclidean);
            let v = &c.versions;
            let mut rows: Vec<&FeatureSequence> = vec![&v[0]];
            let mut z = template_init(&v[0]);
            structure(&z, &rows)?;
            let extend = |z: &Template, x: &FeatureSequence| -> Result<Template, String> {
                let p = align_to_template(z, x, &cfg, &ms).map_err(|e| e.to_string())?;
                let t = template_extend(z, x, &p, GapMode::InsertGaps).map_err(|e| e.to_string())?;
                let vertical = p.steps().filter(|s| *s == Step::Vertical).count();
                let horizontal = p.steps().filter(|s| *s == Step::Horizontal).count();
                let new_gaps = (0..t.len()).filter(|&col| t.cell(col, t.k() - 1) == Cell::Gap).count();
                let gap_cols = (0..t.len())
                    .filter(|&col| t.column(col)[..t.k() - 1].iter().all(|e| *e == Cell::Gap))
                    .count();
                if new_gaps != vertical || gap_cols != horizontal {
                    return Err(format!(
                        "gap accounting: {new_gaps} gaps vs {vertical} vertical steps, {gap_cols} gap columns vs {horizontal} horizontal steps"
                    ));
                }
                for r in 0..z.k() {
                    if t.gap_count(r) != z.gap_count(r) + horizontal {
                        return Err(format!("row {r} gained {} gaps", t.gap_count(r) - z.gap_count(r)));
                    }
                }
                Ok(t)
            };
            for x in &v[1..] {
                z = extend(&z, x)?;
                rows.push(x);
                structure(&z, &rows)?;
                mutations += 1;
            }
            // One iteration by hand: remove each version and append it again.
            for x in v {
                let r = z.row_of_label(x.label()).unwrap();
                let (rest, removed) = remove_from_template(&z, r).map_err(|e| e.to_string())?;
                if &removed != x {
                    return Err(format!("removed row is not {}", x.label()));
                }
                rows.remove(r);
                structure(&rest, &rows)?;
                z = extend(&rest, x)?;
                rows.push(x);
                structure(&z, &rows)?;
                mutations += 2;
            }
            // The library's iterative driver, checked after every step.
            let order: Vec<usize> = (0..k).collect();
            iterative_align_observed(v, &order, 2, &cfg, &ms, |t| {
                let labels = t.row_labels();
                let rows: Vec<&FeatureSequence> =
                    labels.iter().map(|l| v.iter().find(|x| x.label() == *l).unwrap()).collect();
                mutations += 1;
                structure(t, &rows).map_err(multisync::Error::Invalid)
            })
            .map_err(|e| format!("seed {seed}: {e}"))?;
        }
        Ok(format!("50 corpora, {mutations} template states checked"))
    });
}

#[test]
fn criterion_4_template_cost_oracle() {
    check(4, "template-cost oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = CostConfig::default();
        let mut cases = 0;
        while cases < 300 {
            let (la, lb, lx) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=8));
            let a = random_chroma(&mut rng, "a", la);
            let b = random_chroma(&mut rng, "b", lb);
            let x = random_chroma(&mut rng, "x", lx);
            let p = align_pair(&a, &b, &cfg).unwrap();
            let z = template_extend(&template_init(&a), &b, &p, GapMode::InsertGaps).unwrap();
            if z.len() > 8 {
                continue;
            }
            // Merged grid: one row of cost matrices per template row, summed.
            let rows = [&a, &b];
            let merged = |n: usize, m: usize| -> f64 {
                let mut s = 0.0;
                for (r, seq) in rows.iter().enumerate() {
                    s += match z.cell(n, r) {
                        Cell::Frame(i) => cosine(seq.chroma().frame(i), x.chroma().frame(m)),
                        Cell::Gap => cfg.gap_penalty,
                    };
                }
                s
            };
            let got = align_to_template(&z, &x, &cfg, &MultiscaleConfig::disabled()).unwrap();
            let oracle = brute_force(z.len(), x.len(), &cfg.weights, &merged);
            if (got.total_cost() - oracle).abs() > 1e-9 {
                return Err(format!("case {cases}: {} vs oracle {oracle}", got.total_cost()));
            }
            cases += 1;
        }
        Ok(format!("{cases} two-row templates"))
    });
}

#[test]
fn criterion_5_multiscale() {
    check(5, "multiscale saturation and accuracy", || {
        let cfg = CostConfig::for_measure(CostMeasure::ChromaCosinePlusOnsetEuclidean);
        let saturated = MultiscaleConfig {
            downsample_factors: vec![4, 2, 1],
            band_radius: 10_000,
            enabled: true,
        };
        for seed in 0..100 {
            let c = generate_synthetic_corpus(&corpus_spec(200 + seed, 2, 40 + (seed as usize % 5) * 30)).unwrap();
            let (x, y) = (&c.versions[0], &c.versions[1]);
            let dense = align_pair(x, y, &cfg).unwrap();
            let ms = msdtw(x, y, &cfg, &saturated).unwrap();
            if ms != dense {
                return Err(format!("seed {seed}: saturated band differs from full DTW"));
            }
        }
        let banded = MultiscaleConfig {
            downsample_factors: vec![4, 2, 1],
            band_radius: 25,
            enabled: true,
        };
        let mut worst: f64 = 0.0;
        for seed in 0..30 {
            let len = 150 + (seed as usize * 37) % 300;
            let c = generate_synthetic_corpus(&corpus_spec(300 + seed, 2, len)).unwrap();
            let (x, y) = (&c.versions[0], &c.versions[1]);
            if x.len() > 500 || y.len() > 500 {
                continue;
            }
            let dense = align_pair(x, y, &cfg).unwrap().total_cost();
            let ms = msdtw(x, y, &cfg, &banded).unwrap().total_cost();
            let rel = (ms - dense) / dense;
            worst = worst.max(rel);
            if !(-1e-12..=0.02).contains(&rel) {
                return Err(format!("seed {seed}: msdtw {ms} vs dtw {dense} ({:.2}%)", rel * 100.0));
            }
        }
        Ok(format!("100 saturated pairs identical; banded worst excess {:.3}%", worst * 100.0))
    });
}

#[test]
fn criterion_6_abd_quantization() {
    check(6, "ABD quantization bound", || {
        let mut worst: f64 = 0.0;
        let mut pairs = 0;
        for seed in 0..20 {
            let spec = SyntheticCorpusSpec {
                base_length: 300,
                num_versions: 3,
                warp_strength: 0.3,
                seed: 600 + seed,
                ..Default::default()
            };
            let c = generate_synthetic_corpus(&spec).unwrap();
            let hop = spec.hop_duration;
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let (la, lb) = (c.versions[a].len(), c.versions[b].len());
                    let truth = Correspondence {
                        pairs: (1..=la)
                            .map(|n| (n, ((c.true_map(a, b, (n - 1) as f64) + 0.5).floor() as usize + 1).min(lb)))
                            .collect(),
                        len_a: la,
                        len_b: lb,
                    };
                    let ba = BeatAnnotation::new("a", c.beats[a].clone()).unwrap();
                    let bb = BeatAnnotation::new("b", c.beats[b].clone()).unwrap();
                    let v = abd(&truth, &ba, &bb, hop).map_err(|e| e.to_string())?;
                    worst = worst.max(v);
                    pairs += 1;
                }
            }
        }
        // An exact linear 2x warp.
        let n = 250;
        let linear = Correspondence {
            pairs: (1..=n).map(|i| (i, 2 * i - 1)).collect(),
            len_a: n,
            len_b: 2 * n,
        };
        let ta: Vec<f64> = (0..40).map(|i| 0.011 + i as f64 * 0.117).collect();
        let tb: Vec<f64> = ta.iter().map(|t| 2.0 * t).collect();
        let v = abd(
            &linear,
            &BeatAnnotation::new("a", ta).unwrap(),
            &BeatAnnotation::new("b", tb).unwrap(),
            0.02,
        )
        .unwrap();
        worst = worst.max(v);
        if worst > 20.0 {
            return Err(format!("worst ABD {worst:.3} ms exceeds 20 ms"));
        }
        Ok(format!("{} directed pairs, worst ABD {worst:.3} ms", pairs + 1))
    });
}

/// The fixed benchmark: 10 seeds of 10 versions each.
fn benchmark_spec(seed: u64) -> SyntheticCorpusSpec {
    SyntheticCorpusSpec {
        base_length: 300,
        num_versions: 10,
        warp_strength: 0.4,
        noise_level: 0.05,
        articulation_perturbation: 1.2,
        pause_rate: 0.0,
        seed,
        ..Default::default()
    }
}

#[test]
fn criterion_7_pairwise_vs_progressive() {
    check(7, "qualitative pairwise vs progressive claims", || {
        let start = Instant::now();
        let mut values: std::collections::BTreeMap<Variant, Vec<f64>> = Default::default();
        for seed in 0..10 {
            let c = generate_synthetic_corpus(&benchmark_spec(seed)).unwrap();
            let beats = c
                .versions
                .iter()
                .zip(&c.beats)
                .map(|(v, b)| BeatAnnotation::new(v.label(), b.clone()).unwrap())
                .collect();
            let corpus = EvalCorpus::new(c.versions.clone(), beats).unwrap();
            let r = run_experiment_matrix(&corpus, &[Variant::A, Variant::B, Variant::F], &ExperimentConfig::default())
                .map_err(|e| e.to_string())?;
            for (v, rep) in r.variants {
                values.entry(v).or_default().extend(rep.abd.values());
            }
        }
        let stats = |v: Variant| corpus_stats(&values[&v]).unwrap();
        let (a, b, f) = (stats(Variant::A), stats(Variant::B), stats(Variant::F));
        let median = a.boxplot.median;
        let tail = values[&Variant::A].iter().filter(|&&x| x > 2.0 * median).count() as f64
            / values[&Variant::A].len() as f64;
        let elapsed = start.elapsed();
        let summary = format!(
            "A mean {:.1} std {:.1} (tail {:.0}%), B mean {:.1} std {:.1}, F mean {:.1}, {elapsed:.1?}",
            a.stats.mean,
            a.stats.std,
            tail * 100.0,
            b.stats.mean,
            b.stats.std,
            f.stats.mean
        );
        let mut failed = Vec::new();
        if tail < 0.2 {
            failed.push("benchmark tail below 20%");
        }
        if b.stats.mean > a.stats.mean {
            failed.push("(a) B mean > A mean");
        }
        if b.stats.std > 0.8 * a.stats.std {
            failed.push("(b) B std > 0.8 A std");
        }
        if f.stats.mean < b.stats.mean {
            failed.push("(c) F mean < B mean");
        }
        if elapsed > Duration::from_secs(300) {
            failed.push("runtime above 5 min");
        }
        if failed.is_empty() {
            Ok(summary)
        } else {
            Err(format!("{}; {summary}", failed.join(", ")))
        }
    });
}

/// Average costs recomputed pair by pair, followed by an exhaustive scan of
/// the greedy criterion at every position of the plan.
fn rescan_plan(versions: &[FeatureSequence], perm: &[usize], cfg: &CostConfig, ms: &MultiscaleConfig) -> Result<(), String> {
    let k = versions.len();
    let mut cost = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            cost[i][j] = msdtw(&versions[i], &versions[j], cfg, ms).unwrap().average_cost();
            cost[j][i] = cost[i][j];
        }
    }
    let label = |i: usize| versions[i].label();
    let mut best = (f64::INFINITY, String::new(), String::new(), 0, 0);
    for i in 0..k {
        for j in 0..k {
            if i == j || label(i) > label(j) {
                continue;
            }
            let key = (cost[i][j], label(i).to_string(), label(j).to_string(), i, j);
            if key.0 < best.0 || (key.0 == best.0 && (key.1.as_str(), key.2.as_str()) < (best.1.as_str(), best.2.as_str())) {
                best = key;
            }
        }
    }
    if perm[..2] != [best.3, best.4] {
        return Err(format!("first pair {:?}, exhaustive scan gives {:?}", &perm[..2], [best.3, best.4]));
    }
    for t in 2..k {
        let chosen = &perm[..t];
        let mut pick: Option<(f64, usize)> = None;
        for c in (0..k).filter(|c| !chosen.contains(c)) {
            let s: f64 = chosen.iter().map(|&o| cost[c][o]).sum();
            pick = match pick {
                Some((ps, p)) if ps < s - 1e-12 || ((ps - s).abs() <= 1e-12 && label(p) < label(c)) => Some((ps, p)),
                _ => Some((s, c)),
            };
        }
        if pick.unwrap().1 != perm[t] {
            return Err(format!("position {t}: plan has {}, scan gives {}", label(perm[t]), label(pick.unwrap().1)));
        }
    }
    Ok(())
}

#[test]
fn criterion_8_ordering() {
    check(8, "ordering determinism and correctness", || {
        let cfg = CostConfig::for_measure(CostMeasure::ChromaCosinePlusOnsetEuclidean);
        let ms = MultiscaleConfig::standard();
        for seed in 0..20 {
            let c = generate_synthetic_corpus(&corpus_spec(800 + seed, 5, 120)).unwrap();
            let plan = dtw_cost_order(&c.versions, &cfg, &ms).map_err(|e| e.to_string())?;
            let matrix = plan.pairwise_avg_costs.as_ref().unwrap();
            for i in 0..matrix.len() {
                for j in 0..matrix.len() {
                    if (matrix[i][j] - matrix[j][i]).abs() > 1e-9 {
                        return Err(format!("seed {seed}: cost matrix not symmetric at ({i},{j})"));
                    }
                }
            }
            let again = dtw_cost_order(&c.versions, &cfg, &ms).map_err(|e| e.to_string())?;
            if plan != again {
                return Err(format!("seed {seed}: plans differ between runs"));
            }
            rescan_plan(&c.versions, &plan.permutation, &cfg, &ms).map_err(|e| format!("seed {seed}: {e}"))?;

            let lengths = length_order(&c.versions).map_err(|e| e.to_string())?;
            let mut reference: Vec<(usize, String, usize)> =
                c.versions.iter().enumerate().map(|(i, v)| (v.len(), v.label().to_string(), i)).collect();
            reference.sort();
            if lengths.permutation != reference.iter().map(|r| r.2).collect::<Vec<_>>() {
                return Err(format!("seed {seed}: length order differs from reference sort"));
            }
        }
        Ok("20 corpora, greedy choice matches exhaustive re-scan at every step".into())
    });
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_multisync"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn report_json(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("run_info");
    v
}

#[test]
fn criterion_9_cli_determinism() {
    check(9, "end-to-end determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
        cli(&["synth", "-o", &d("corpus"), "--versions", "6", "--seed", "42", "--articulation", "0.8"])?;
        cli(&["synth", "-o", &d("corpus2"), "--versions", "6", "--seed", "42", "--articulation", "0.8"])?;
        for name in ["v00.chroma.csv", "v03.onset.csv", "v05.beats.csv", "manifest.json"] {
            if fs::read(dir.path().join("corpus").join(name)).unwrap() != fs::read(dir.path().join("corpus2").join(name)).unwrap() {
                return Err(format!("synth output {name} differs"));
            }
        }
        for jobs in ["1", "4"] {
            cli(&["evaluate", &d("corpus"), "-o", &d(&format!("eval{jobs}")), "--variants", "all", "--jobs", jobs])?;
            cli(&[
                "align-multi",
                &d("corpus"),
                "-o",
                &d(&format!("multi{jobs}")),
                "--order",
                "dtw-cost",
                "--iterations",
                "2",
                "--emit-pairs",
                "--jobs",
                jobs,
            ])?;
        }
        for (a, b) in [("eval1", "eval4"), ("multi1", "multi4")] {
            let (ra, rb) = (
                report_json(&dir.path().join(a).join("report.json")),
                report_json(&dir.path().join(b).join("report.json")),
            );
            if ra != rb {
                return Err(format!("{a} and {b} reports differ"));
            }
        }
        for (a, b, f) in [("eval1", "eval4", "pairs.csv"), ("multi1", "multi4", "template.csv")] {
            if fs::read(dir.path().join(a).join(f)).unwrap() != fs::read(dir.path().join(b).join(f)).unwrap() {
                return Err(format!("{f} differs between --jobs 1 and --jobs 4"));
            }
        }
        Ok("evaluate (A-G) and align-multi reports identical for --jobs 1 and 4".into())
    });
}
