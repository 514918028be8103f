//! Acceptance gate. Every criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails.
//!
//! Training budgets are sized for a single desktop core. Criteria 8 and 9 use
//! a narrow window (4) and a weaker header/body correlation (0.5) so that the
//! header signal is mostly outside the local window; see README.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};
use structmask::analysis::{compare_reports, header_keyword_attention, LayerSelector};
use structmask::cli;
use structmask::corpus::{build_vocab, generate_synthetic_corpus, tokenize_tree, Role, SyntheticConfig, TokenizedDoc};
use structmask::encoder::{forward, pair_count, sparse_attention, AttentionPattern, ModelConfig, Parameters};
use structmask::latex::{corpus_stats, decode_document, encode_document, extract_document, Format};
use structmask::train::{evaluate, train, Checkpoint, TrainConfig};

// Pinned tolerances.
const ROUND_TRIP_TREES: usize = 1000;
const PARSER_BUDGET: Duration = Duration::from_secs(10);
const STATS_SD_TOL: f64 = 1e-12;
const DENSE_TOL: f64 = 1e-10;
const LINEAR_TOL: f64 = 0.05;
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(300);
const DETERMINISM_STEPS: u64 = 200;
const EFFICACY_RATIO: f64 = 0.5;
const EFFICACY_STEPS: u64 = 2000;
const EFFICACY_BUDGET: Duration = Duration::from_secs(1800);
const TWIN_SEEDS: u64 = 5;
const TWIN_WINS: usize = 4;
const TWIN_STEPS: u64 = 400;
const ROW_SUM_TOL: f64 = 1e-12;
const EVAL_SEED: u64 = 99;

type Outcome = Result<String, String>;

/// A trained checkpoint and held-out documents from its own vocabulary.
type Probe = (Checkpoint, Vec<TokenizedDoc>);

struct Gate {
    failures: usize,
}

impl Gate {
    fn run(&mut self, id: u32, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {id:>2} [{name}] ({secs:.1}s): {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL criterion {id:>2} [{name}] ({secs:.1}s): {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parser_golden() -> Outcome {
    let start = Instant::now();
    let dir = common::data_dir();
    let mut sources: Vec<_> = std::fs::read_dir(dir.join("mini_corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    sources.sort();
    ensure(sources.len() == 20, || format!("expected 20 bundled documents, found {}", sources.len()))?;
    for src in &sources {
        let stem = src.file_stem().unwrap().to_str().unwrap();
        let tree = extract_document(&std::fs::read_to_string(src).unwrap(), stem).map_err(|e| e.to_string())?;
        let golden = std::fs::read(dir.join("mini_corpus_golden").join(format!("{stem}.json"))).unwrap();
        let golden = decode_document(&golden, Format::Tree).map_err(|e| e.to_string())?;
        ensure(tree == golden, || format!("{stem} differs from its golden tree"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..ROUND_TRIP_TREES {
        let tree = common::random_tree(&mut rng, i);
        for format in [Format::Text, Format::Tree] {
            let bytes = encode_document(&tree, format);
            let back = decode_document(&bytes, format).map_err(|e| format!("tree {i} {format:?}: {e}"))?;
            ensure(back == tree, || format!("tree {i} changed in {format:?} round trip"))?;
            ensure(encode_document(&back, format) == bytes, || format!("tree {i} re-encodes differently"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PARSER_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("20 goldens equal, {ROUND_TRIP_TREES} random trees round-trip in both formats"))
}

fn mini_corpus_stats() -> Outcome {
    let dir = common::data_dir().join("mini_corpus");
    let mut trees = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        trees.push(extract_document(&std::fs::read_to_string(&path).unwrap(), &stem).unwrap());
    }
    let stats = corpus_stats(&trees).map_err(|e| e.to_string())?;
    // Tallied by hand from the golden trees: words per document
    // [23 24 15 17 14 18 10 12 10 16 12 18 11 14 16 10 6 16 14 15] and
    // headed nodes per document [3 3 2 2 5 3 2 2 2 3 1 3 2 5 2 2 2 4 3 4].
    let t = stats.tokens_per_document;
    let h = stats.headers_per_document;
    let r = stats.tokens_per_header.ok_or("no header ratio")?;
    ensure(stats.documents == 20, || format!("{} documents", stats.documents))?;
    ensure((t.min, t.max, t.mean) == (6.0, 24.0, 291.0 / 20.0), || format!("tokens {t:?}"))?;
    ensure((h.min, h.max, h.mean) == (1.0, 5.0, 11.0 / 4.0), || format!("headers {h:?}"))?;
    ensure((t.sd - 7179f64.sqrt() / 20.0).abs() < STATS_SD_TOL, || format!("tokens sd {}", t.sd))?;
    ensure((h.sd - (87.0f64 / 80.0).sqrt()).abs() < STATS_SD_TOL, || format!("headers sd {}", h.sd))?;
    ensure((r.min, r.max) == (2.8, 12.0), || format!("ratio {r:?}"))?;
    ensure((r.mean - 6991.0 / 1200.0).abs() < STATS_SD_TOL, || format!("ratio mean {}", r.mean))?;
    ensure((r.sd - 7105379f64.sqrt() / 1200.0).abs() < STATS_SD_TOL, || format!("ratio sd {}", r.sd))?;
    Ok(format!(
        "tokens/doc {}..{} mean {} sd {:.12}; headers/doc {}..{} mean {} sd {:.12}",
        t.min, t.max, t.mean, t.sd, h.min, h.max, h.mean, h.sd
    ))
}

/// Plain softmax attention over every pair.
fn naive_dense(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scale = 1.0 / (q[0].len() as f64).sqrt();
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k.iter().map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            (0..v[0].len()).map(|c| exps.iter().zip(v).map(|(e, vj)| e / z * vj[c]).sum()).collect()
        })
        .collect()
}

fn dense_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=32);
        let d = rng.gen_range(1..=8);
        let mut mat = || -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect() };
        let (q, k, v) = (mat(), mat(), mat());
        let to_arr = |m: &Vec<Vec<f64>>| ndarray::Array2::from_shape_fn((n, d), |(i, j)| m[i][j]);
        let window = 2 * (n - 1) + 2 * rng.gen_range(0..3);
        let pattern = AttentionPattern::new(window, &vec![false; n]);
        let (out, _) = sparse_attention(to_arr(&q).view(), to_arr(&k).view(), to_arr(&v).view(), &pattern);
        let expected = naive_dense(&q, &k, &v);
        for i in 0..n {
            for c in 0..d {
                worst = worst.max((out[[i, c]] - expected[i][c]).abs());
            }
        }
    }
    ensure(worst < DENSE_TOL, || format!("max abs difference {worst:e}"))?;
    Ok(format!("100 inputs, max abs difference {worst:.2e}"))
}

fn brute_force_pairs(n: usize, window: usize, globals: &[usize]) -> u64 {
    let half = window / 2;
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) <= half || globals.contains(&i) || globals.contains(&j) {
                count += 1;
            }
        }
    }
    count
}

fn linear_cost() -> Outcome {
    let mut checked = 0;
    for n in 1..=64usize {
        for window in [0, 2, 4, 8] {
            let sets: Vec<Vec<usize>> = vec![vec![], vec![0], vec![n / 2], vec![n - 1], vec![0, n - 1], vec![n / 3, n / 2]];
            for g in sets {
                let mut g = g;
                g.sort_unstable();
                g.dedup();
                let expected = brute_force_pairs(n, window, &g);
                let got = pair_count(n, window, &g);
                let mut mask = vec![false; n];
                for &p in &g {
                    mask[p] = true;
                }
                let from_pattern = AttentionPattern::new(window, &mask).pair_count();
                ensure(got == expected && from_pattern == expected, || {
                    format!("n={n} w={window} G={g:?}: {got} / {from_pattern} vs brute force {expected}")
                })?;
                checked += 1;
            }
        }
    }
    let per_token = |n: usize| pair_count(n, 16, &[0, n / 4, n / 2, 3 * n / 4]) as f64 / n as f64;
    let reference = per_token(2048);
    let mut worst = 0.0f64;
    for n in [256, 512, 1024, 2048] {
        worst = worst.max((per_token(n) - reference).abs() / reference);
    }
    ensure(worst < LINEAR_TOL, || format!("pairs per token deviates by {:.2}%", worst * 100.0))?;
    Ok(format!("{checked} configurations exact; pairs/token {reference:.3} at n=2048, max deviation {:.2}%", worst * 100.0))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let errors = common::gradient_errors(&common::fd_config(true, false), 42);
    let (name, worst) = errors.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ensure(worst < GRAD_TOL, || format!("{name}: relative error {worst:e}"))?;
    ensure(start.elapsed() < GRAD_BUDGET, || format!("took {:?}", start.elapsed()))?;
    Ok(format!("{} tensors, worst relative error {worst:.2e} ({name})", errors.len()))
}

fn run_cli(args: &[&str]) -> Result<cli::CommandResult, String> {
    let result = cli::run(std::iter::once("structmask").chain(args.iter().copied()));
    if result.exit_code != 0 {
        return Err(format!("{args:?} exited {}: {}", result.exit_code, result.summary));
    }
    Ok(result)
}

fn determinism(trained: &mut Vec<Probe>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    run_cli(&["synth-corpus", "--out", &p("synth"), "--docs", "120", "--seed", "5"])?;
    run_cli(&["build-corpus", "--in", &p("synth/trees"), "--out", &p("corpus")])?;
    let steps = DETERMINISM_STEPS.to_string();
    for run in ["a", "b"] {
        run_cli(&["pretrain", "--corpus", &p("corpus"), "--out", &p(run), "--steps", &steps, "--seed", "11"])?;
    }
    let a = std::fs::read(Path::new(&p("a")).join("checkpoint.bin")).unwrap();
    let b = std::fs::read(Path::new(&p("b")).join("checkpoint.bin")).unwrap();
    ensure(a == b, || "checkpoints differ".into())?;
    let heldout = structmask::store::read_tokenized(Path::new(&p("corpus/heldout.jsonl"))).map_err(|e| e.to_string())?;
    let checkpoint = Checkpoint::from_bytes(&a).map_err(|e| e.to_string())?;
    trained.push((checkpoint, heldout.into_iter().take(4).collect()));
    Ok(format!("two {DETERMINISM_STEPS}-step runs, {} identical checkpoint bytes", a.len()))
}

struct SynthSplit {
    train: Vec<TokenizedDoc>,
    heldout: Vec<TokenizedDoc>,
    annotations: Vec<structmask::corpus::KeywordAnnotation>,
    vocab_size: usize,
}

/// 1,000 documents of 64 tokens (2 one-word headings, 62 body words) over
/// 80 topics, giving exactly 500 vocabulary entries; the last 100 are held out.
fn synth_split(correlation: f64) -> SynthSplit {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(1000, 80, 62, correlation, 7)).unwrap();
    let vocab = build_vocab(&corpus.trees[..900], 500).unwrap();
    let docs: Vec<TokenizedDoc> = corpus.trees.iter().map(|t| tokenize_tree(t, &vocab)).collect();
    let heldout = docs[900..].to_vec();
    let held: HashSet<&str> = heldout.iter().map(|d| d.doc_id.as_str()).collect();
    let annotations = corpus.annotations.iter().filter(|a| held.contains(a.doc_id.as_str())).cloned().collect();
    SynthSplit {
        train: docs[..900].to_vec(),
        heldout,
        annotations,
        vocab_size: vocab.len(),
    }
}

fn training_efficacy(trained: &mut Vec<Probe>) -> Outcome {
    let start = Instant::now();
    let split = synth_split(0.8);
    ensure(split.vocab_size == 500, || format!("vocabulary has {} entries", split.vocab_size))?;
    let model = ModelConfig { vocab_size: 500, ..ModelConfig::default() };
    let config = TrainConfig { steps: EFFICACY_STEPS, seed: 1, ..TrainConfig::default() };
    let init = Checkpoint {
        params: Parameters::init(&model, config.seed).unwrap(),
        seed: config.seed,
        step: 0,
        global_attention: true,
    };
    let before = evaluate(&init, &split.heldout, EVAL_SEED).map_err(|e| e.to_string())?;
    let outcome = train(&split.train, &config, &model, None).map_err(|e| e.to_string())?;
    ensure(outcome.loss_curve.iter().all(|(_, l)| l.is_finite()), || "non-finite loss".into())?;
    let after = evaluate(&outcome.checkpoint, &split.heldout, EVAL_SEED).map_err(|e| e.to_string())?;
    trained.push((outcome.checkpoint, split.heldout[..4].to_vec()));
    let ratio = after.masked_ce_nats / before.masked_ce_nats;
    ensure(ratio <= EFFICACY_RATIO, || format!("CE {:.4} -> {:.4} (ratio {ratio:.3})", before.masked_ce_nats, after.masked_ce_nats))?;
    ensure(start.elapsed() < EFFICACY_BUDGET, || format!("took {:?}", start.elapsed()))?;
    Ok(format!(
        "held-out masked CE {:.4} -> {:.4} nats after {EFFICACY_STEPS} steps (ratio {ratio:.3})",
        before.masked_ce_nats, after.masked_ce_nats
    ))
}

struct TwinResult {
    seed: u64,
    ce: [f64; 2],
    bpc: [f64; 2],
    keyword_to_header: [f64; 2],
    relative_increase: f64,
}

fn twin_model(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        d_model: 32,
        d_ff: 64,
        window: 4,
        vocab_size,
        ..ModelConfig::default()
    }
}

fn train_twins(trained: &mut Vec<Probe>) -> Result<Vec<TwinResult>, String> {
    let split = synth_split(0.5);
    let model = twin_model(split.vocab_size);
    let mut results = Vec::new();
    for seed in 0..TWIN_SEEDS {
        let mut ce = [0.0; 2];
        let mut bpc = [0.0; 2];
        let mut reports = Vec::new();
        for (slot, global) in [true, false].into_iter().enumerate() {
            let config = TrainConfig {
                steps: TWIN_STEPS,
                seed,
                global_attention_enabled: global,
                ..TrainConfig::default()
            };
            let out = train(&split.train, &config, &model, None).map_err(|e| e.to_string())?;
            let report = evaluate(&out.checkpoint, &split.heldout, EVAL_SEED).map_err(|e| e.to_string())?;
            ce[slot] = report.masked_ce_nats;
            bpc[slot] = report.bpc;
            let id = if global { "structure-aware" } else { "vanilla" };
            reports.push(
                header_keyword_attention(&out.checkpoint, id, &split.heldout, &split.annotations, LayerSelector::Last)
                    .map_err(|e| e.to_string())?,
            );
            trained.push((out.checkpoint, split.heldout[..4].to_vec()));
        }
        let change = compare_reports(&reports[0], &reports[1]).map_err(|e| e.to_string())?;
        results.push(TwinResult {
            seed,
            ce,
            bpc,
            keyword_to_header: [reports[0].keyword_to_header, reports[1].keyword_to_header],
            relative_increase: change.keyword_to_header,
        });
    }
    Ok(results)
}

fn twin_perplexity(twins: &Result<Vec<TwinResult>, String>) -> Outcome {
    let twins = twins.as_ref().map_err(Clone::clone)?;
    let wins = twins.iter().filter(|t| t.ce[0] < t.ce[1] && t.bpc[0] < t.bpc[1]).count();
    let detail: Vec<String> = twins
        .iter()
        .map(|t| format!("seed {}: BPC {:.4} vs {:.4}", t.seed, t.bpc[0], t.bpc[1]))
        .collect();
    ensure(wins >= TWIN_WINS, || format!("{wins}/{TWIN_SEEDS} wins; {}", detail.join("; ")))?;
    Ok(format!(
        "structure-aware lower CE and BPC in {wins}/{TWIN_SEEDS} seeds ({}); reference values 2.2136 vs 2.3051 BPC not reproduced at this scale",
        detail.join("; ")
    ))
}

fn twin_attention(twins: &Result<Vec<TwinResult>, String>) -> Outcome {
    let twins = twins.as_ref().map_err(Clone::clone)?;
    let wins = twins.iter().filter(|t| t.keyword_to_header[0] > t.keyword_to_header[1]).count();
    let mean_increase = twins.iter().map(|t| t.relative_increase).sum::<f64>() / twins.len() as f64;
    let detail: Vec<String> = twins
        .iter()
        .map(|t| format!("seed {}: {:.4} vs {:.4}", t.seed, t.keyword_to_header[0], t.keyword_to_header[1]))
        .collect();
    ensure(wins >= TWIN_WINS, || format!("{wins}/{TWIN_SEEDS} wins; {}", detail.join("; ")))?;
    Ok(format!(
        "keyword->header attention higher in {wins}/{TWIN_SEEDS} seeds ({}); mean relative increase {:+.1}% (reference: more than +20%)",
        detail.join("; "),
        mean_increase * 100.0
    ))
}

fn check_rows(checkpoint: &Checkpoint, doc: &TokenizedDoc) -> Result<usize, String> {
    let mask = if checkpoint.global_attention { doc.header_mask() } else { vec![false; doc.len()] };
    let (_, trace) = forward(&checkpoint.params, &doc.ids, &mask).map_err(|e| e.to_string())?;
    let n = doc.len();
    let mut rows = 0;
    for layer in 0..trace.layer_count() {
        for head in 0..trace.head_count() {
            let dense = trace.head(layer, head).to_dense();
            for i in 0..n {
                let mut sum = 0.0;
                for j in 0..n {
                    if trace.pattern.allows(i, j) {
                        sum += dense[[i, j]];
                    } else if dense[[i, j]] != 0.0 {
                        return Err(format!("layer {layer} head {head}: ({i}, {j}) is {:e}", dense[[i, j]]));
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(format!("layer {layer} head {head} row {i} sums to {sum}"));
                }
                rows += 1;
            }
        }
    }
    Ok(rows)
}

fn flip_roles(docs: &[TokenizedDoc]) -> Vec<TokenizedDoc> {
    docs.iter()
        .map(|d| TokenizedDoc {
            roles: d
                .roles
                .iter()
                .map(|r| match r {
                    Role::Header => Role::Body,
                    Role::Body => Role::Header,
                })
                .collect(),
            ..d.clone()
        })
        .collect()
}

fn structural_zeros(trained: &[Probe]) -> Outcome {
    let split = synth_split(0.5);
    let mut rows = 0;
    for (checkpoint, probe) in trained {
        for doc in probe {
            rows += check_rows(checkpoint, doc)?;
        }
    }
    let model = twin_model(split.vocab_size);
    let docs = &split.train[..200];
    let config = TrainConfig { steps: 30, seed: 4, global_attention_enabled: false, ..TrainConfig::default() };
    let plain = train(docs, &config, &model, None).map_err(|e| e.to_string())?;
    let flipped = train(&flip_roles(docs), &config, &model, None).map_err(|e| e.to_string())?;
    ensure(plain.checkpoint.to_bytes() == flipped.checkpoint.to_bytes(), || {
        "vanilla training depends on token roles".into()
    })?;
    Ok(format!(
        "{} checkpoints, {rows} attention rows stochastic with exact structural zeros; vanilla run invariant to role flips",
        trained.len()
    ))
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: 0 };
    let mut trained = Vec::new();
    gate.run(1, "parser golden suite", parser_golden);
    gate.run(2, "mini-corpus statistics", mini_corpus_stats);
    gate.run(3, "dense equivalence", dense_equivalence);
    gate.run(4, "linear pair count", linear_cost);
    gate.run(5, "gradient check", gradient_check);
    gate.run(6, "determinism", || determinism(&mut trained));
    gate.run(7, "training efficacy", || training_efficacy(&mut trained));
    let twins = catch_unwind(AssertUnwindSafe(|| train_twins(&mut trained)))
        .unwrap_or_else(|_| Err("twin training panicked".into()));
    gate.run(8, "structure-aware vs vanilla perplexity", || twin_perplexity(&twins));
    gate.run(9, "keyword to header attention", || twin_attention(&twins));
    gate.run(10, "structural zeros", || structural_zeros(&trained));
    assert_eq!(gate.failures, 0, "{} acceptance criteria failed", gate.failures);
}
