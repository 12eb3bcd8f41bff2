mod commands;
mod exit;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmgeval_core::corpus::{NodeSource, PairPolicy};
use cmgeval_core::distcheck::{DEFAULT_BUCKET_WIDTH, DEFAULT_ED_CAP};
use cmgeval_core::par::ExecMode;
use cmgeval_core::textmetrics::MetricKind;

#[derive(Debug, Parser)]
#[command(
    name = "cmgeval",
    version,
    about = "Commit message metric selection toolkit"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-source pair counts of a corpus.
    Summarize(SummarizeArgs),
    /// Correlate offline metrics with the online metric.
    Select(SelectArgs),
    /// Grow the corpus with synthetic messages.
    Extend(ExtendArgs),
    /// Compare corpus edit distances with production telemetry.
    Validate(ValidateArgs),
    /// Run the labeling service.
    Serve(ServeArgs),
    /// Convert a tabular dataset release into corpus JSONL.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus JSONL, one commit record per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = PairPolicy::Direct)]
    pairing: PairPolicy,
    /// Root seed, recorded in every artifact.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[command(flatten)]
    input: CorpusArgs,
    /// Keep only nodes of these sources.
    #[arg(long, value_delimiter = ',', value_parser = parse_source)]
    sources: Vec<NodeSource>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    input: CorpusArgs,
    /// Offline metrics; defaults to every metric that needs no external service.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<MetricKind>,
    #[arg(long, default_value_t = MetricKind::EditDistance)]
    online_metric: MetricKind,
    /// Leave the original VCS message out of the independent references.
    #[arg(long)]
    no_original: bool,
    /// Also correlate every ordered pair of metrics.
    #[arg(long)]
    matrix: bool,
    /// Embedding endpoint; enables embedding-score.
    #[arg(long)]
    embedding_url: Option<String>,
    /// TOML or JSON table of per-metric parameters keyed by metric name.
    #[arg(long)]
    metric_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Backward,
    Forward,
    Both,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("client").required(true).args(["transcript", "echo", "llm_endpoint"]))]
struct ExtendArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[arg(long, value_enum, default_value = "both")]
    direction: DirectionArg,
    /// Replay responses from a recorded transcript.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Answer every prompt with its target message.
    #[arg(long)]
    echo: bool,
    /// Chat-completion endpoint.
    #[arg(long, requires = "llm_model")]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "CMG_LLM_API_KEY")]
    llm_key_env: String,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = 0.5)]
    tb: f64,
    #[arg(long, default_value_t = 0.75)]
    tf: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    attempts: u32,
    #[arg(long, default_value_t = 15)]
    icl: usize,
    /// Generation jobs per input message.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Leave the diff out of the prompt.
    #[arg(long)]
    no_diff: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: CorpusArgs,
    /// Telemetry as CSV or JSONL with ed_value and gen_length.
    #[arg(long)]
    telemetry: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BUCKET_WIDTH)]
    bucket_width: f64,
    /// Drop telemetry rows with ed_value above this.
    #[arg(long, default_value_t = DEFAULT_ED_CAP)]
    ed_cap: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "CMG_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "CMG_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Session logs live here.
    #[arg(long, env = "CMG_DATA_DIR", default_value = "annotations")]
    data_dir: PathBuf,
    /// Root seed for session shuffles.
    #[arg(long, env = "CMG_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_source(s: &str) -> Result<NodeSource, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown source {s:?} (model, expert, synthetic-backward, synthetic-forward)")
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            });
        }
    };
    let exec = if cli.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    };
    let result = match cli.command {
        Command::Summarize(a) => commands::summarize(a),
        Command::Select(a) => commands::select(a, exec),
        Command::Extend(a) => commands::extend(a, exec),
        Command::Validate(a) => commands::validate(a),
        Command::Serve(a) => commands::serve(a),
        Command::Import(a) => commands::import(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {}", exit::render(&e));
            ExitCode::from(exit::code_for(&e))
        }
    }
}
