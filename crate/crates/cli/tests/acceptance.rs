//! Acceptance checks, one PASS/FAIL line each. Exits nonzero if any check fails.
//!
//! The dataset checks read the released corpus (JSONL, one commit record per line) from
//! `CMG_RELEASED_CORPUS`.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cmgeval_core::corpus::canonical_line;
use cmgeval_core::corpus::{
    save_corpus, CommitRecord, Corpus, DerivationEdge, DerivationMethod, MessageNode, NodeSource,
};
use cmgeval_core::distcheck::{
    filter_zero, ks_statistic, mean_generated_length, scale_factor, TelemetryLog, TelemetryRecord,
};
use cmgeval_core::stats::{spearman, t_approx_p_value};
use cmgeval_core::synthgen::{
    added_fraction, extend, generate, removed_fraction, Direction, ExtendConfig, GenerationJob,
    LlmRequest, MockClient, ReplayClient,
};
use cmgeval_core::textmetrics::{
    bleu, chrf, edit_distance, edit_similarity, meteor, rouge_l, rouge_n, tokenize,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn cmgeval(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cmgeval"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "cmgeval {} failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn released_corpus() -> Result<PathBuf, String> {
    match std::env::var_os("CMG_RELEASED_CORPUS") {
        Some(p) if Path::new(&p).is_file() => Ok(PathBuf::from(p)),
        Some(p) => Err(format!(
            "released dataset not found at {}",
            Path::new(&p).display()
        )),
        None => Err("released dataset not found (set CMG_RELEASED_CORPUS)".into()),
    }
}

// ---------------------------------------------------------------------------
// Edit distance against an exhaustive shortest-edit-script search

const MAX_LEN: usize = 7;

fn all_strings() -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..MAX_LEN {
        let mut next = Vec::new();
        for s in &frontier {
            for c in ['a', 'b', 'c'] {
                next.push(format!("{s}{c}"));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every string reachable from each string by one insertion, deletion or substitution,
/// without leaving the set.
fn one_edit_neighbours(strings: &[String]) -> Vec<Vec<u16>> {
    let index: HashMap<&str, u16> = strings
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u16))
        .collect();
    strings
        .iter()
        .map(|s| {
            let chars: Vec<char> = s.chars().collect();
            let mut out = Vec::new();
            let mut push = |v: Vec<char>| {
                let t: String = v.into_iter().collect();
                if let Some(&j) = index.get(t.as_str()) {
                    out.push(j);
                }
            };
            for i in 0..=chars.len() {
                for c in ['a', 'b', 'c'] {
                    let mut v = chars.clone();
                    v.insert(i, c);
                    push(v);
                }
            }
            for i in 0..chars.len() {
                let mut v = chars.clone();
                v.remove(i);
                push(v);
                for c in ['a', 'b', 'c'] {
                    if c != chars[i] {
                        let mut v = chars.clone();
                        v[i] = c;
                        push(v);
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Shortest edit scripts are searched breadth first. A shortest script between strings of
/// length <= 7 can always run its deletions and substitutions before its insertions, so it
/// never passes through a longer string and the search space is closed.
fn check_edit_distance_oracle() -> Outcome {
    let start = Instant::now();
    let strings = all_strings();
    let graph = one_edit_neighbours(&strings);
    let n = strings.len();
    let mismatches = AtomicUsize::new(0);
    let first = std::sync::Mutex::new(None::<(usize, usize, usize, usize)>);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::thread::scope(|scope| {
        for w in 0..workers {
            let (graph, strings, mismatches, first) = (&graph, &strings, &mismatches, &first);
            scope.spawn(move || {
                let mut dist = vec![u8::MAX; n];
                let mut queue = VecDeque::with_capacity(n);
                for src in (w..n).step_by(workers) {
                    dist.fill(u8::MAX);
                    dist[src] = 0;
                    queue.push_back(src as u16);
                    while let Some(u) = queue.pop_front() {
                        let d = dist[u as usize] + 1;
                        for &v in &graph[u as usize] {
                            if dist[v as usize] == u8::MAX {
                                dist[v as usize] = d;
                                queue.push_back(v);
                            }
                        }
                    }
                    for (dst, &expected) in dist.iter().enumerate() {
                        let got = edit_distance(&strings[src], &strings[dst]);
                        if got != expected as usize {
                            mismatches.fetch_add(1, Ordering::Relaxed);
                            first
                                .lock()
                                .unwrap()
                                .get_or_insert((src, dst, got, expected as usize));
                        }
                    }
                }
            });
        }
    });
    let elapsed = start.elapsed();
    let bad = mismatches.load(Ordering::Relaxed);
    if let Some((a, b, got, want)) = *first.lock().unwrap() {
        return Err(format!(
            "{bad} mismatches, first ED({:?}, {:?}) = {got}, oracle {want}",
            strings[a], strings[b]
        ));
    }
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:.1?}, limit 60s")
    })?;
    Ok(format!("{} pairs exact in {elapsed:.1?}", n * n))
}

// ---------------------------------------------------------------------------
// Metric properties on random messages

const WORDS: [&str; 24] = [
    "add", "fix", "update", "remove", "refactor", "test", "parser", "config", "file", "module",
    "bug", "in", "the", "for", "to", "of", "handler", "cache", "docs", "readme", "version", "bump",
    "api", "error",
];

fn random_message(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=12);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Unigram F1 over whitespace tokens, computed from multiset counts.
fn unigram_f1(pred: &str, reference: &str) -> f64 {
    fn count(s: &str) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for t in s.split_whitespace() {
            *m.entry(t).or_default() += 1;
        }
        m
    }
    let (p, r) = (count(pred), count(reference));
    let np: usize = p.values().sum();
    let nr: usize = r.values().sum();
    let overlap: usize = p
        .iter()
        .map(|(t, c)| (*c).min(r.get(t).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let (prec, rec) = (overlap as f64 / np as f64, overlap as f64 / nr as f64);
    2.0 * prec * rec / (prec + rec)
}

fn check_metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let pairs: Vec<(String, String)> = (0..1000)
        .map(|_| (random_message(&mut rng), random_message(&mut rng)))
        .collect();
    let mut violations = Vec::new();
    let mut note = |msg: String| {
        if violations.len() < 5 {
            violations.push(msg);
        }
    };
    for (i, (a, b)) in pairs.iter().enumerate() {
        let bounded = [
            ("edit-similarity", edit_similarity(a, b)),
            ("bleu", bleu(a, b, 4, true)),
            ("rouge-1", rouge_n(a, b, 1, true)),
            ("rouge-2", rouge_n(a, b, 2, true)),
            ("rouge-l", rouge_l(a, b, true)),
            ("meteor", meteor(a, b, true)),
            ("chrf", chrf(a, b, 6, 2.0)),
        ];
        for (name, v) in bounded {
            if !(0.0..=1.0).contains(&v) {
                note(format!("{name}({a:?}, {b:?}) = {v}"));
            }
        }
        if edit_distance(a, b) != edit_distance(b, a) {
            note(format!("ED not symmetric on pair {i}"));
        }
        let c = &pairs[(i + 1) % pairs.len()].0;
        if edit_distance(a, c) > edit_distance(a, b) + edit_distance(b, c) {
            note(format!("triangle inequality fails on pair {i}"));
        }
        for (name, v) in [
            ("bleu", bleu(a, a, 4, true)),
            ("rouge-1", rouge_n(a, a, 1, true)),
            ("rouge-l", rouge_l(a, a, true)),
            ("chrf", chrf(a, a, 6, 2.0)),
            ("edit-similarity", edit_similarity(a, a)),
        ] {
            if (v - 1.0).abs() > 1e-12 {
                note(format!("{name}(x, x) = {v} for {a:?}"));
            }
        }
        let m = tokenize(a, true).len() as f64;
        if m >= 2.0 && (rouge_n(a, a, 2, true) - 1.0).abs() > 1e-12 {
            note(format!("rouge-2(x, x) != 1 for {a:?}"));
        }
        let expected = 1.0 - 0.5 * (1.0 / m).powi(3);
        if (meteor(a, a, true) - expected).abs() > 1e-12 {
            note(format!(
                "meteor(x, x) = {} for {a:?}, expected {expected}",
                meteor(a, a, true)
            ));
        }
        let oracle = unigram_f1(a, b);
        if (rouge_n(a, b, 1, true) - oracle).abs() > 1e-12 {
            note(format!(
                "rouge-1({a:?}, {b:?}) = {}, oracle {oracle}",
                rouge_n(a, b, 1, true)
            ));
        }
    }
    if violations.is_empty() {
        Ok("1000 pairs, zero violations".into())
    } else {
        Err(violations.join("; "))
    }
}

// ---------------------------------------------------------------------------
// Spearman

/// Rank = number of smaller values + (number of equal values + 1) / 2.
fn hand_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn hand_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (hand_ranks(x), hand_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn check_spearman() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst = 0.0f64;
    let mut at_n30 = Vec::new();
    let mut done = 0;
    while done < 50 {
        let n = if done % 2 == 0 {
            30
        } else {
            rng.gen_range(5..60)
        };
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (x[i] * rng.gen_range(-1.0..2.0)).round())
            .collect();
        let has_ties = hand_ranks(&x).iter().any(|r| r.fract() != 0.0);
        let Ok(result) = spearman(&x, &y) else {
            continue;
        };
        if !has_ties {
            continue;
        }
        let delta = (result.coefficient - hand_rho(&x, &y)).abs();
        worst = worst.max(delta);
        if n == 30 {
            at_n30.push((result.coefficient.abs(), result.p_value));
        }
        done += 1;
    }
    ensure(worst < 1e-12, || format!("max |delta rho| = {worst:e}"))?;
    at_n30.sort_by(|a, b| a.0.total_cmp(&b.0));
    ensure(at_n30.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15), || {
        "p-value not monotone in |rho| on samples".into()
    })?;
    let grid: Vec<f64> = (0..=1000)
        .map(|k| t_approx_p_value(k as f64 / 1000.0, 30))
        .collect();
    ensure(grid.windows(2).all(|w| w[1] <= w[0]), || {
        "p-value not monotone on grid".into()
    })?;
    Ok(format!(
        "50 tie-bearing samples, max |delta rho| = {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Released dataset

fn check_dataset_summary() -> Outcome {
    let corpus = released_corpus()?;
    let dir = tmp();
    let start = Instant::now();
    cmgeval(&[
        "summarize",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ])?;
    let summary = read_json(&dir.path().join("summary.json"))?;
    let rows = summary["summary"]["rows"].as_array().ok_or("no rows")?;
    let row = |source: &str| {
        rows.iter()
            .find(|r| r["source"] == source)
            .cloned()
            .unwrap_or(Value::Null)
    };
    let (expert, full) = (row("expert-labeling"), row("full"));
    let got = (
        expert["related"].as_u64(),
        full["related"].as_u64(),
        full["independent"].as_u64(),
    );
    ensure(got == (Some(57), Some(656), Some(5140)), || {
        format!("expert related / related / independent = {got:?}, expected 57 / 656 / 5140")
    })?;
    Ok(format!("57 / 656 / 5140 in {:.1?}", start.elapsed()))
}

fn check_metric_correlations() -> Outcome {
    let corpus = released_corpus()?;
    let dir = tmp();
    let start = Instant::now();
    cmgeval(&[
        "select",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ])?;
    let elapsed = start.elapsed();
    let report = read_json(&dir.path().join("report.json"))?;
    let rows = report["report"]["rows"].as_array().ok_or("no rows")?;
    let q = |m: &str| {
        rows.iter()
            .find(|r| r["metric"] == m)
            .and_then(|r| r["q"].as_f64())
            .ok_or_else(|| format!("no Q for {m}"))
    };
    let group = |m: &str| {
        rows.iter()
            .find(|r| r["metric"] == m)
            .map(|r| r["group"].clone())
    };
    let mut failures = Vec::new();
    for (m, target, tol) in [
        ("edit-distance", 0.74, 0.05),
        ("edit-similarity", -0.36, 0.05),
        ("rouge-1", -0.19, 0.08),
        ("rouge-2", -0.20, 0.08),
        ("rouge-l", -0.26, 0.08),
    ] {
        let v = q(m)?;
        if (v - target).abs() > tol {
            failures.push(format!("Q({m}) = {v:.3}, expected {target} +/- {tol}"));
        }
    }
    for m in ["bleu", "chrf", "meteor"] {
        let v = q(m)?;
        if v.abs() >= 0.3 {
            failures.push(format!("|Q({m})| = {:.3}, expected Low", v.abs()));
        }
    }
    if group("edit-distance") != Some(Value::from("high")) {
        failures.push("edit-distance not in the High group".into());
    }
    if group("edit-similarity") != Some(Value::from("moderate")) {
        failures.push("edit-similarity not in the Moderate group".into());
    }
    if elapsed > Duration::from_secs(300) {
        failures.push(format!("took {elapsed:.1?}"));
    }
    if failures.is_empty() {
        Ok(format!("all targets met in {elapsed:.1?}"))
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------------------
// Synthetic pipeline

fn job(direction: Direction, threshold: f64, attempts: u32) -> GenerationJob {
    GenerationJob {
        direction,
        commit_id: "c".into(),
        input_node: "n".into(),
        output_node: "n~x1".into(),
        icl_examples: vec![],
        max_attempts: attempts,
        threshold,
    }
}

fn synthetic_corpus(commits: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..commits)
        .map(|i| {
            let g = random_message(&mut rng);
            let e = format!("{} {}", g, random_message(&mut rng));
            let mut nodes = vec![
                MessageNode::new("g", NodeSource::Model, g),
                MessageNode::new("e1", NodeSource::Expert, e),
            ];
            let mut edges = vec![DerivationEdge::new("g", "e1", DerivationMethod::HumanEdit)];
            if i % 3 == 0 {
                nodes.push(MessageNode::new(
                    "e2",
                    NodeSource::Expert,
                    random_message(&mut rng),
                ));
                edges.push(DerivationEdge::new("g", "e2", DerivationMethod::HumanEdit));
            }
            CommitRecord {
                commit_id: format!("c{i:03}"),
                diff: format!("--- a/f{i}\n+++ b/f{i}\n@@ -1 +1 @@\n-{i}\n+{}\n", i + 1),
                original_message: random_message(&mut rng),
                summary: None,
                nodes,
                edges,
            }
        })
        .collect();
    Corpus::new(records).expect("valid synthetic corpus")
}

/// Accepts or rejects depending on the prompt hash, so replays must reproduce the choice.
fn coin_client() -> MockClient {
    MockClient::new(|req: &LlmRequest| {
        let flip = u8::from_str_radix(&req.prompt_hash[..2], 16).unwrap() as u32 + req.attempt;
        Ok(if flip.is_multiple_of(3) {
            format!("{} {}", req.target, "padding ".repeat(req.target.len()))
        } else {
            req.target
                .split_whitespace()
                .rev()
                .collect::<Vec<_>>()
                .join(" ")
        })
    })
}

fn check_synthetic_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (a, b) = (random_message(&mut rng), random_message(&mut rng));
        let (x, y) = (
            added_fraction(&a, &b).map_err(|e| e.to_string())?,
            removed_fraction(&b, &a).map_err(|e| e.to_string())?,
        );
        ensure(x == y, || {
            format!("added({a:?}, {b:?}) = {x} but removed = {y}")
        })?;
    }

    let thresholds = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
    for _ in 0..200 {
        let (input, output) = (random_message(&mut rng), random_message(&mut rng));
        for direction in [Direction::Backward, Direction::Forward] {
            let client = MockClient::new({
                let output = output.clone();
                move |_| Ok(output.clone())
            });
            let accepted: Vec<bool> = thresholds
                .iter()
                .map(|t| {
                    generate(&client, &job(direction, *t, 1), &input, None).map(|r| r.is_accepted())
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            ensure(accepted.windows(2).all(|w| !w[0] || w[1]), || {
                format!("acceptance not monotone in the threshold for {input:?} -> {output:?}")
            })?;
        }
    }

    let corpus = synthetic_corpus(20, 3);
    let config = ExtendConfig {
        max_attempts: 3,
        icl_count: 4,
        seed: 11,
        ..ExtendConfig::default()
    };
    let never = MockClient::new(|req: &LlmRequest| {
        Ok(format!(
            "{} {}",
            req.target,
            "x".repeat(10 * req.target.len() + 10)
        ))
    });
    let outcome = extend(
        &corpus,
        &never,
        &[Direction::Backward, Direction::Forward],
        &config,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        outcome.results.iter().all(|r| r.attempts.len() <= 3),
        || "attempt budget exceeded".into(),
    )?;
    ensure(never.calls() <= outcome.results.len() * 3, || {
        format!("{} calls for {} jobs", never.calls(), outcome.results.len())
    })?;

    let live = coin_client();
    let recorded = extend(
        &corpus,
        &live,
        &[Direction::Backward, Direction::Forward],
        &config,
    )
    .map_err(|e| e.to_string())?;
    let accepted = recorded.results.iter().filter(|r| r.is_accepted()).count();
    ensure(accepted > 0 && accepted < recorded.results.len(), || {
        "coin client should mix outcomes".into()
    })?;
    let replay = ReplayClient::new(recorded.transcript()).map_err(|e| e.to_string())?;
    let replayed = extend(
        &corpus,
        &replay,
        &[Direction::Backward, Direction::Forward],
        &config,
    )
    .map_err(|e| e.to_string())?;
    let lines = |c: &Corpus| c.records().iter().map(canonical_line).collect::<Vec<_>>();
    ensure(lines(&recorded.corpus) == lines(&replayed.corpus), || {
        "replayed corpus differs".into()
    })?;
    ensure(recorded.results == replayed.results, || {
        "replayed provenance differs".into()
    })?;
    Ok(format!(
        "duality on 1000 pairs; budget held over {} jobs; replay of {accepted} accepted nodes exact",
        outcome.results.len()
    ))
}

// ---------------------------------------------------------------------------
// Distribution validation

fn check_distribution_fixtures() -> Outcome {
    let records: Vec<TelemetryRecord> = (0..100)
        .map(|i| TelemetryRecord {
            ed_value: if i % 50 < 39 { 0 } else { 5 + i },
            gen_length: 360,
        })
        .collect();
    let log = TelemetryLog::new(records, u64::MAX).map_err(|e| e.to_string())?;
    let (kept, report) = filter_zero(&log);
    ensure(report.removed_fraction == 0.78, || {
        format!("removed_fraction = {}", report.removed_fraction)
    })?;
    ensure(kept.len() == 22, || format!("{} rows kept", kept.len()))?;

    let corpus = Corpus::new(
        [600usize, 672]
            .iter()
            .enumerate()
            .map(|(i, len)| CommitRecord {
                commit_id: format!("c{i}"),
                diff: String::new(),
                original_message: "o".into(),
                summary: None,
                nodes: vec![MessageNode::new("g", NodeSource::Model, "m".repeat(*len))],
                edges: vec![],
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let corpus_mean = mean_generated_length(&corpus).map_err(|e| e.to_string())?;
    let telemetry = TelemetryLog::new(
        [300u64, 420]
            .iter()
            .map(|l| TelemetryRecord {
                ed_value: 1,
                gen_length: *l,
            })
            .collect(),
        u64::MAX,
    )
    .map_err(|e| e.to_string())?;
    let r = scale_factor(corpus_mean, &telemetry).map_err(|e| e.to_string())?;
    ensure((r - 636.0 / 360.0).abs() < 1e-9, || format!("R = {r}"))?;

    let x: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64).collect();
    let ks = ks_statistic(&x, &x).map_err(|e| e.to_string())?;
    ensure(ks == 0.0, || format!("KS(x, x) = {ks}"))?;
    Ok(format!("removed 0.78, R = {r:.9}, KS(x, x) = 0"))
}

// ---------------------------------------------------------------------------
// End-to-end determinism through the binary

fn same_files(a: &Path, b: &Path, files: &[&str]) -> Result<(), String> {
    for f in files {
        let (x, y) = (
            fs::read(a.join(f)).map_err(|e| e.to_string())?,
            fs::read(b.join(f)).map_err(|e| e.to_string())?,
        );
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(())
}

fn check_determinism() -> Outcome {
    let dir = tmp();
    let root = dir.path();
    let corpus = root.join("corpus.jsonl");
    save_corpus(&synthetic_corpus(40, 5), &corpus).map_err(|e| e.to_string())?;
    let c = corpus.to_str().unwrap();
    let path = |n: &str| root.join(n).to_str().unwrap().to_string();

    for run in ["s1", "s2"] {
        cmgeval(&[
            "select",
            "--corpus",
            c,
            "--seed",
            "42",
            "--matrix",
            "--out",
            &path(run),
        ])?;
    }
    same_files(
        &root.join("s1"),
        &root.join("s2"),
        &["report.json", "report.txt"],
    )?;

    cmgeval(&[
        "extend",
        "--corpus",
        c,
        "--echo",
        "--seed",
        "42",
        "--icl",
        "5",
        "--out",
        &path("rec"),
    ])?;
    let transcript = path("rec/transcript.jsonl");
    for run in ["x1", "x2"] {
        cmgeval(&[
            "extend",
            "--corpus",
            c,
            "--transcript",
            &transcript,
            "--seed",
            "42",
            "--icl",
            "5",
            "--out",
            &path(run),
        ])?;
    }
    same_files(
        &root.join("x1"),
        &root.join("x2"),
        &[
            "corpus.jsonl",
            "provenance.jsonl",
            "transcript.jsonl",
            "extend.json",
        ],
    )?;
    Ok("select and transcript-mode extend artifacts byte-identical".into())
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 8] = [
        (
            "edit-distance oracle equivalence",
            check_edit_distance_oracle,
        ),
        ("metric property suite", check_metric_properties),
        ("spearman correctness", check_spearman),
        ("dataset summary reproduction", check_dataset_summary),
        ("metric correlation reproduction", check_metric_correlations),
        ("synthetic pipeline properties", check_synthetic_pipeline),
        (
            "distribution validation fixtures",
            check_distribution_fixtures,
        ),
        ("end-to-end determinism", check_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
