use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use cmgeval_annotsvc::Store;
use cmgeval_core::corpus::{
    dataset_summary, import_pair_table, load_corpus, save_corpus, Corpus, PairPolicy,
};
use cmgeval_core::distcheck::{
    compare, corpus_ed_by_subset, filter_zero, load_telemetry, mean_generated_length, scale_factor,
    scaled_ed_values, DistributionReport, FilterReport, Sample,
};
use cmgeval_core::par::ExecMode;
use cmgeval_core::selection::{
    correlate, offline_scores, online_scores, pair_sets, q_matrix, report, QMatrix, QResult,
    SelectionConfig, SelectionError, SelectionReport,
};
use cmgeval_core::synthgen::{
    extend as run_extend, write_transcript, Direction, ExtendConfig, LlmClient, MockClient,
    ReplayClient,
};
use cmgeval_core::textmetrics::{
    EmbeddingProvider, Metric, MetricConfig, MetricDescriptor, MetricKind, PairMetric,
};

use crate::exit::usage;
use crate::{
    DirectionArg, ExtendArgs, Format, ImportArgs, SelectArgs, ServeArgs, SummarizeArgs,
    ValidateArgs,
};

fn existing(path: &Path) -> Result<PathBuf> {
    path.canonicalize()
        .with_context(|| format!("cannot resolve {}", path.display()))
}

fn out_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))?;
    existing(path)
}

/// The file name only, so artifacts do not depend on where the inputs live.
fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryArtifact<'a> {
    seed: u64,
    corpus: String,
    pairing: PairPolicy,
    sources: Vec<&'static str>,
    commits: usize,
    summary: &'a cmgeval_core::corpus::DatasetSummary,
}

pub fn summarize(args: SummarizeArgs) -> Result<()> {
    let corpus_path = existing(&args.input.corpus)?;
    let out = args.out.as_deref().map(out_dir).transpose()?;
    let mut corpus = load_corpus(&corpus_path)?;
    if !args.sources.is_empty() {
        corpus = corpus.restrict_sources(&args.sources)?;
    }
    let summary = dataset_summary(&corpus, args.input.pairing);
    let artifact = SummaryArtifact {
        seed: args.input.seed,
        corpus: file_label(&corpus_path),
        pairing: args.input.pairing,
        sources: args.sources.iter().map(|s| s.as_str()).collect(),
        commits: corpus.len(),
        summary: &summary,
    };
    let table = summary.to_table();
    match args.format {
        Format::Table => print!("{table}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&artifact)?),
    }
    if let Some(dir) = out {
        write_json(&dir.join("summary.json"), &artifact)?;
        write_text(&dir.join("summary.txt"), &table)?;
    }
    Ok(())
}

fn metric_configs(path: &Path) -> Result<BTreeMap<MetricKind, MetricConfig>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    } else {
        toml::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.with_context(|| format!("invalid metric config {}", path.display()))
}

#[cfg(feature = "http")]
fn embedding_provider(url: &str) -> Result<Arc<dyn EmbeddingProvider>> {
    use cmgeval_core::textmetrics::{CachedProvider, HttpEmbeddingProvider};
    Ok(Arc::new(CachedProvider::new(HttpEmbeddingProvider::new(
        url,
    )?)))
}

#[cfg(not(feature = "http"))]
fn embedding_provider(_url: &str) -> Result<Arc<dyn EmbeddingProvider>> {
    Err(usage(
        "this build has no HTTP support; rebuild with the http feature",
    ))
}

#[derive(Serialize)]
struct SelectRunConfig {
    corpus: String,
    pairing: PairPolicy,
    include_original: bool,
    online_metric: MetricKind,
    metrics: Vec<MetricDescriptor>,
    embedding_url: Option<String>,
}

#[derive(Serialize)]
struct SelectArtifact<'a> {
    seed: u64,
    config: SelectRunConfig,
    report: &'a SelectionReport,
    results: &'a [QResult],
    /// Metrics whose correlation is undefined, with the reason.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    undefined: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<&'a QMatrix>,
}

pub fn select(args: SelectArgs, exec: ExecMode) -> Result<()> {
    let corpus_path = existing(&args.input.corpus)?;
    let config_path = args.metric_config.as_deref().map(existing).transpose()?;
    let out = out_dir(&args.out)?;

    let mut kinds = args.metrics.clone();
    if kinds.is_empty() {
        kinds = MetricKind::ALL
            .into_iter()
            .filter(|k| *k != MetricKind::EmbeddingScore || args.embedding_url.is_some())
            .collect();
    }
    let mut seen = std::collections::BTreeSet::new();
    kinds.retain(|k| seen.insert(*k));
    let needs_embedding = kinds.contains(&MetricKind::EmbeddingScore)
        || args.online_metric == MetricKind::EmbeddingScore;
    let provider = match (&args.embedding_url, needs_embedding) {
        (Some(url), true) => Some(embedding_provider(url)?),
        (None, true) => return Err(usage("embedding-score needs --embedding-url")),
        _ => None,
    };
    let configs = config_path
        .as_deref()
        .map(metric_configs)
        .transpose()?
        .unwrap_or_default();
    let build = |kind: MetricKind| {
        let descriptor = MetricDescriptor {
            name: kind,
            config: configs.get(&kind).cloned().unwrap_or_default(),
        };
        match (&provider, kind) {
            (Some(p), MetricKind::EmbeddingScore) => Metric::with_provider(descriptor, p.clone()),
            _ => Metric::new(descriptor),
        }
    };
    let offline: Vec<Metric> = kinds.iter().map(|k| build(*k)).collect();
    let online = build(args.online_metric);

    let corpus = load_corpus(&corpus_path)?;
    let config = SelectionConfig {
        policy: args.input.pairing,
        include_original: !args.no_original,
        exec,
    };
    let pairs = pair_sets(&corpus, &config);
    let on = online_scores(&corpus, &pairs, &online, exec)?;
    let mut results = Vec::with_capacity(offline.len());
    let mut undefined = Vec::new();
    for metric in &offline {
        let off = offline_scores(&corpus, &pairs, metric, exec)?;
        match correlate(&metric.name(), &online.name(), &on, &off) {
            Ok(q) => results.push(q),
            Err(e @ SelectionError::Stats { .. }) => undefined.push(e),
            Err(e) => return Err(e.into()),
        }
    }
    let summary = report(&online.name(), &results);
    let matrix = if args.matrix {
        let mut all: Vec<&dyn PairMetric> = offline.iter().map(|m| m as &dyn PairMetric).collect();
        if !kinds.contains(&args.online_metric) {
            all.push(&online);
        }
        Some(q_matrix(&corpus, &pairs, &all, exec)?)
    } else {
        None
    };

    let artifact = SelectArtifact {
        seed: args.input.seed,
        config: SelectRunConfig {
            corpus: file_label(&corpus_path),
            pairing: config.policy,
            include_original: config.include_original,
            online_metric: args.online_metric,
            metrics: offline.iter().map(|m| m.descriptor().clone()).collect(),
            embedding_url: args.embedding_url.clone(),
        },
        report: &summary,
        results: &results,
        undefined: undefined
            .iter()
            .filter_map(|e| match e {
                SelectionError::Stats {
                    offline, source, ..
                } => Some((offline.clone(), source.to_string())),
                _ => None,
            })
            .collect(),
        matrix: matrix.as_ref(),
    };
    let table = summary.to_table();
    print!("{table}");
    write_json(&out.join("report.json"), &artifact)?;
    write_text(&out.join("report.txt"), &table)?;
    // artifacts are written first so the defined rows are not lost
    match undefined.into_iter().next() {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct RejectedJob<'a> {
    job: &'a str,
    attempts: usize,
}

#[derive(Serialize)]
struct ExtendArtifact<'a> {
    seed: u64,
    corpus: String,
    client: String,
    directions: Vec<Direction>,
    config: &'a ExtendConfig,
    jobs: usize,
    accepted_backward: usize,
    accepted_forward: usize,
    rejected: Vec<RejectedJob<'a>>,
}

fn llm_client(args: &ExtendArgs) -> Result<(Box<dyn LlmClient>, String)> {
    if let Some(path) = &args.transcript {
        let path = existing(path)?;
        return Ok((
            Box::new(ReplayClient::load(&path)?),
            format!("replay:{}", file_label(&path)),
        ));
    }
    if args.echo {
        return Ok((Box::new(MockClient::echo()), "echo".to_string()));
    }
    let endpoint = args.llm_endpoint.clone().expect("clap enforces a client");
    let model = args.llm_model.clone().expect("clap enforces the model");
    http_client(endpoint, model, args.temperature, &args.llm_key_env)
}

#[cfg(feature = "http")]
fn http_client(
    endpoint: String,
    model: String,
    temperature: f64,
    key_var: &str,
) -> Result<(Box<dyn LlmClient>, String)> {
    use cmgeval_core::synthgen::HttpChatClient;
    let label = format!("http:{model}");
    let client = HttpChatClient::from_env(endpoint, model, temperature, key_var)?;
    Ok((Box::new(client), label))
}

#[cfg(not(feature = "http"))]
fn http_client(_: String, _: String, _: f64, _: &str) -> Result<(Box<dyn LlmClient>, String)> {
    Err(usage(
        "this build has no HTTP support; use --transcript or --echo",
    ))
}

pub fn extend(args: ExtendArgs, exec: ExecMode) -> Result<()> {
    let corpus_path = existing(&args.input.corpus)?;
    let out = out_dir(&args.out)?;
    let config = ExtendConfig {
        backward_threshold: args.tb,
        forward_threshold: args.tf,
        max_attempts: args.attempts,
        icl_count: args.icl,
        samples_per_input: args.samples,
        seed: args.input.seed,
        parallelism: args.parallelism.max(1),
        include_diff: !args.no_diff,
        exec,
    };
    config.validate()?;
    let directions = match args.direction {
        DirectionArg::Backward => vec![Direction::Backward],
        DirectionArg::Forward => vec![Direction::Forward],
        DirectionArg::Both => vec![Direction::Backward, Direction::Forward],
    };
    let (client, client_label) = llm_client(&args)?;
    let corpus = load_corpus(&corpus_path)?;

    let outcome = run_extend(&corpus, client.as_ref(), &directions, &config)?;
    for r in outcome.rejected() {
        log::warn!("{}: rejected after {} attempts", r.job, r.attempts.len());
    }
    let artifact = ExtendArtifact {
        seed: config.seed,
        corpus: file_label(&corpus_path),
        client: client_label,
        directions: directions.clone(),
        config: &config,
        jobs: outcome.results.len(),
        accepted_backward: outcome.accepted(Direction::Backward),
        accepted_forward: outcome.accepted(Direction::Forward),
        rejected: outcome
            .rejected()
            .map(|r| RejectedJob {
                job: &r.job,
                attempts: r.attempts.len(),
            })
            .collect(),
    };
    save_corpus(&outcome.corpus, out.join("corpus.jsonl"))?;
    write_jsonl(&out.join("provenance.jsonl"), &outcome.results)?;
    let transcript_path = out.join("transcript.jsonl");
    let file = File::create(&transcript_path)
        .with_context(|| format!("cannot write {}", transcript_path.display()))?;
    write_transcript(&outcome.transcript(), BufWriter::new(file))?;
    write_json(&out.join("extend.json"), &artifact)?;
    println!(
        "{} jobs: {} backward and {} forward accepted, {} rejected",
        artifact.jobs,
        artifact.accepted_backward,
        artifact.accepted_forward,
        artifact.rejected.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ValidateArtifact<'a> {
    seed: u64,
    corpus: String,
    telemetry: String,
    pairing: PairPolicy,
    ed_cap: u64,
    filter: &'a FilterReport,
    corpus_mean_length: f64,
    telemetry_mean_gen_length: f64,
    scale_factor: f64,
    report: &'a DistributionReport,
}

pub const TELEMETRY_LABEL: &str = "telemetry (scaled)";

pub fn validate(args: ValidateArgs) -> Result<()> {
    let corpus_path = existing(&args.input.corpus)?;
    let telemetry_path = existing(&args.telemetry)?;
    let out = out_dir(&args.out)?;
    if !(args.bucket_width.is_finite() && args.bucket_width > 0.0) {
        return Err(usage("--bucket-width must be positive"));
    }
    let corpus = load_corpus(&corpus_path)?;
    let log = load_telemetry(&telemetry_path, args.ed_cap)?;
    let (kept, filter) = filter_zero(&log);
    let corpus_mean = mean_generated_length(&corpus)?;
    let r = scale_factor(corpus_mean, &kept)?;
    let mut samples: Vec<Sample> = corpus_ed_by_subset(&corpus, args.input.pairing);
    samples.push(Sample::new(TELEMETRY_LABEL, scaled_ed_values(&kept, r)));
    let report = compare(&samples, args.bucket_width)?;
    let artifact = ValidateArtifact {
        seed: args.input.seed,
        corpus: file_label(&corpus_path),
        telemetry: file_label(&telemetry_path),
        pairing: args.input.pairing,
        ed_cap: args.ed_cap,
        filter: &filter,
        corpus_mean_length: corpus_mean,
        telemetry_mean_gen_length: kept.mean_gen_length()?,
        scale_factor: r,
        report: &report,
    };
    println!(
        "removed {} of {} zero-ED rows ({:.4}); R = {r:.6}",
        filter.removed, filter.total, filter.removed_fraction
    );
    for s in &report.samples {
        println!(
            "{:<32} n={:<6} mean={:<10.2} median={:<10.2} peak=[{}, {})",
            s.label, s.n, s.mean, s.median, s.peak.lower, s.peak.upper
        );
    }
    write_json(&out.join("distribution.json"), &artifact)?;
    write_text(&out.join("histogram.csv"), &report.to_csv())?;
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let corpus_path = existing(&args.corpus)?;
    let data_dir = out_dir(&args.data_dir)?;
    let corpus: Corpus = load_corpus(&corpus_path)?;
    let store = Store::open(corpus, &data_dir, args.seed)?;
    cmgeval_annotsvc::serve_blocking(Arc::new(store), args.bind)
        .with_context(|| format!("cannot serve on {}", args.bind))
}

pub fn import(args: ImportArgs) -> Result<()> {
    let input = existing(&args.input)?;
    let file = File::open(&input).with_context(|| format!("cannot read {}", input.display()))?;
    let corpus = import_pair_table(BufReader::new(file))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    save_corpus(&corpus, &args.out)?;
    println!("imported {} commits", corpus.len());
    Ok(())
}
