use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    CommitRecord, Corpus, DerivationEdge, DerivationMethod, MessageNode, NodeKind, NodeSource,
};
use crate::par::ExecMode;

use super::client::{LlmClient, LlmRequest, TranscriptEntry, TranscriptRequest};
use super::filter::{added_fraction, removed_fraction};
use super::prompt::{build_prompt, prompt_hash, IclExample};
use super::{Direction, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub direction: Direction,
    pub commit_id: String,
    pub input_node: String,
    /// Id the accepted node will get.
    pub output_node: String,
    pub icl_examples: Vec<IclExample>,
    pub max_attempts: u32,
    pub threshold: f64,
}

impl GenerationJob {
    pub fn key(&self) -> String {
        format!("{}/{}", self.commit_id, self.output_node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

/// Enough to replay an acceptance decision: the prompt is identified by its hash and the
/// decision is recomputed from the raw response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_hash: String,
    pub attempt: u32,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Accepted {
        text: String,
        fraction: f64,
        provenance: Provenance,
    },
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub job: String,
    pub direction: Direction,
    pub commit_id: String,
    pub input_node: String,
    pub output_node: String,
    pub threshold: f64,
    pub max_attempts: u32,
    pub icl_commits: Vec<String>,
    pub prompt_hash: String,
    pub attempts: Vec<AttemptRecord>,
    pub outcome: Outcome,
    #[serde(skip)]
    pub prompt: String,
}

impl GenerationResult {
    pub fn is_accepted(&self) -> bool {
        matches!(self.outcome, Outcome::Accepted { .. })
    }

    pub fn transcript(&self) -> impl Iterator<Item = TranscriptEntry> + '_ {
        self.attempts.iter().map(|a| TranscriptEntry {
            job: self.job.clone(),
            attempt: a.attempt,
            prompt_hash: self.prompt_hash.clone(),
            request: TranscriptRequest {
                prompt: self.prompt.clone(),
            },
            response: a.response.clone(),
            error: if a.response.is_none() {
                a.error.clone()
            } else {
                None
            },
        })
    }
}

fn change_fraction(direction: Direction, input: &str, candidate: &str) -> Result<f64, SynthError> {
    match direction {
        Direction::Backward => added_fraction(input, candidate),
        Direction::Forward => removed_fraction(input, candidate),
    }
}

/// Runs one job: up to `max_attempts` queries, accepting the first candidate whose change
/// fraction is within the threshold. Exhausting the budget on bad candidates yields
/// [`Outcome::Rejected`]; exhausting it on transport errors is an error.
pub fn generate(
    client: &dyn LlmClient,
    job: &GenerationJob,
    input_text: &str,
    diff: Option<&str>,
) -> Result<GenerationResult, SynthError> {
    if job.max_attempts == 0 {
        return Err(SynthError::Config("max_attempts must be at least 1".into()));
    }
    let prompt = build_prompt(job.direction, &job.icl_examples, input_text, diff);
    let hash = prompt_hash(&prompt);
    let mut result = GenerationResult {
        job: job.key(),
        direction: job.direction,
        commit_id: job.commit_id.clone(),
        input_node: job.input_node.clone(),
        output_node: job.output_node.clone(),
        threshold: job.threshold,
        max_attempts: job.max_attempts,
        icl_commits: job
            .icl_examples
            .iter()
            .map(|e| e.commit_id.clone())
            .collect(),
        prompt_hash: hash.clone(),
        attempts: Vec::new(),
        outcome: Outcome::Rejected,
        prompt,
    };
    let mut last_error = None;
    for attempt in 1..=job.max_attempts {
        let request = LlmRequest {
            job: result.job.clone(),
            attempt,
            direction: job.direction,
            prompt: result.prompt.clone(),
            prompt_hash: hash.clone(),
            target: input_text.to_string(),
        };
        match client.complete(&request) {
            Ok(raw) => {
                let candidate = raw.trim();
                let fraction = if candidate.is_empty() {
                    None
                } else {
                    Some(change_fraction(job.direction, input_text, candidate)?)
                };
                result.attempts.push(AttemptRecord {
                    attempt,
                    response: Some(raw.clone()),
                    error: fraction.is_none().then(|| "empty response".to_string()),
                    fraction,
                });
                if let Some(f) = fraction.filter(|f| *f <= job.threshold) {
                    result.outcome = Outcome::Accepted {
                        text: candidate.to_string(),
                        fraction: f,
                        provenance: Provenance {
                            prompt_hash: hash,
                            attempt,
                            raw_response: raw,
                        },
                    };
                    return Ok(result);
                }
            }
            Err(e) if e.is_retryable() => {
                log::warn!("{} attempt {attempt}: {e}", result.job);
                result.attempts.push(AttemptRecord {
                    attempt,
                    response: None,
                    error: Some(e.to_string()),
                    fraction: None,
                });
                last_error = Some(e);
            }
            Err(source) => {
                return Err(SynthError::Upstream {
                    job: result.job,
                    source,
                })
            }
        }
    }
    if result.attempts.iter().all(|a| a.response.is_none()) {
        if let Some(source) = last_error {
            return Err(SynthError::Upstream {
                job: result.job,
                source,
            });
        }
    }
    Ok(result)
}

fn next_output_id(
    record: &CommitRecord,
    input: &str,
    direction: Direction,
    taken: &[String],
) -> String {
    let prefix = format!("{input}~{}", direction.suffix());
    let mut variant = record
        .nodes
        .iter()
        .map(|n| n.node_id.as_str())
        .chain(taken.iter().map(String::as_str))
        .filter_map(|id| id.strip_prefix(&prefix)?.parse::<u32>().ok())
        .max()
        .unwrap_or(0)
        + 1;
    loop {
        let id = format!("{prefix}{variant}");
        if record.node(&id).is_none() && !taken.contains(&id) {
            return id;
        }
        variant += 1;
    }
}

fn single_job<'a>(
    record: &'a CommitRecord,
    node_id: &str,
    direction: Direction,
    icl: Vec<IclExample>,
    threshold: f64,
    attempts: u32,
) -> Result<(GenerationJob, &'a str), SynthError> {
    let node = record
        .node(node_id)
        .ok_or_else(|| SynthError::UnknownNode {
            commit_id: record.commit_id.clone(),
            node_id: node_id.to_string(),
        })?;
    let want = match direction {
        Direction::Backward => NodeKind::Edited,
        Direction::Forward => NodeKind::Generated,
    };
    if node.kind != want {
        return Err(SynthError::Config(format!(
            "{direction} generation needs a {want:?} input, {node_id} is {:?}",
            node.kind
        )));
    }
    let job = GenerationJob {
        direction,
        commit_id: record.commit_id.clone(),
        input_node: node_id.to_string(),
        output_node: next_output_id(record, node_id, direction, &[]),
        icl_examples: icl,
        max_attempts: attempts,
        threshold,
    };
    Ok((job, &node.text))
}

/// Backward generation for one edited node.
pub fn generate_backward(
    client: &dyn LlmClient,
    record: &CommitRecord,
    edited_node: &str,
    icl: Vec<IclExample>,
    threshold: f64,
    attempts: u32,
) -> Result<GenerationResult, SynthError> {
    let (job, text) = single_job(
        record,
        edited_node,
        Direction::Backward,
        icl,
        threshold,
        attempts,
    )?;
    generate(client, &job, text, Some(&record.diff))
}

/// Forward generation for one generated node.
pub fn generate_forward(
    client: &dyn LlmClient,
    record: &CommitRecord,
    generated_node: &str,
    icl: Vec<IclExample>,
    threshold: f64,
    attempts: u32,
) -> Result<GenerationResult, SynthError> {
    let (job, text) = single_job(
        record,
        generated_node,
        Direction::Forward,
        icl,
        threshold,
        attempts,
    )?;
    generate(client, &job, text, Some(&record.diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendConfig {
    pub backward_threshold: f64,
    pub forward_threshold: f64,
    pub max_attempts: u32,
    pub icl_count: usize,
    /// Independent jobs (each with its own example draw) per input message.
    pub samples_per_input: u32,
    pub seed: u64,
    pub parallelism: usize,
    pub include_diff: bool,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        ExtendConfig {
            backward_threshold: 0.5,
            forward_threshold: 0.75,
            max_attempts: 3,
            icl_count: 15,
            samples_per_input: 1,
            seed: 0,
            parallelism: 4,
            include_diff: true,
            exec: ExecMode::default(),
        }
    }
}

impl ExtendConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        for t in [self.backward_threshold, self.forward_threshold] {
            if !(0.0..=1.0).contains(&t) {
                return bad("thresholds must lie in [0, 1]");
            }
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.samples_per_input == 0 {
            return bad("samples_per_input must be at least 1");
        }
        Ok(())
    }

    pub fn threshold(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Backward => self.backward_threshold,
            Direction::Forward => self.forward_threshold,
        }
    }
}

/// Human edits of the corpus, in corpus order, as example candidates.
pub fn icl_pool(corpus: &Corpus) -> Vec<IclExample> {
    let mut pool = Vec::new();
    for record in corpus.records() {
        for edge in &record.edges {
            if edge.method != DerivationMethod::HumanEdit {
                continue;
            }
            if let (Some(g), Some(e)) = (record.node(&edge.from_node), record.node(&edge.to_node)) {
                pool.push(IclExample {
                    commit_id: record.commit_id.clone(),
                    generated: g.text.clone(),
                    edited: e.text.clone(),
                });
            }
        }
    }
    pool
}

fn job_rng(seed: u64, job_key: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(job_key.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn is_input(node: &MessageNode, direction: Direction) -> bool {
    match direction {
        Direction::Backward => node.source == NodeSource::Expert,
        Direction::Forward => node.kind == NodeKind::Generated,
    }
}

/// One job per (input node, sample). Backward inputs are expert edits, forward inputs are
/// all generated messages, real or synthetic. Examples come from other commits only.
pub fn plan_jobs(
    corpus: &Corpus,
    direction: Direction,
    config: &ExtendConfig,
) -> Result<Vec<GenerationJob>, SynthError> {
    config.validate()?;
    let pool = icl_pool(corpus);
    let mut jobs = Vec::new();
    for record in corpus.records() {
        let candidates: Vec<&IclExample> = pool
            .iter()
            .filter(|e| e.commit_id != record.commit_id)
            .collect();
        let mut taken: Vec<String> = Vec::new();
        for node in record.nodes.iter().filter(|n| is_input(n, direction)) {
            for _ in 0..config.samples_per_input {
                let output_node = next_output_id(record, &node.node_id, direction, &taken);
                taken.push(output_node.clone());
                let mut job = GenerationJob {
                    direction,
                    commit_id: record.commit_id.clone(),
                    input_node: node.node_id.clone(),
                    output_node,
                    icl_examples: Vec::new(),
                    max_attempts: config.max_attempts,
                    threshold: config.threshold(direction),
                };
                let mut rng = job_rng(config.seed, &job.key());
                let k = config.icl_count.min(candidates.len());
                job.icl_examples = rand::seq::index::sample(&mut rng, candidates.len(), k)
                    .into_iter()
                    .map(|i| candidates[i].clone())
                    .collect();
                jobs.push(job);
            }
        }
    }
    Ok(jobs)
}

/// Adds every accepted node and its derivation edge, in result order.
pub fn apply_results(corpus: &Corpus, results: &[GenerationResult]) -> Result<Corpus, SynthError> {
    let mut records = corpus.records().to_vec();
    for result in results {
        let Outcome::Accepted { text, .. } = &result.outcome else {
            continue;
        };
        let record = records
            .iter_mut()
            .find(|r| r.commit_id == result.commit_id)
            .ok_or_else(|| SynthError::UnknownNode {
                commit_id: result.commit_id.clone(),
                node_id: result.input_node.clone(),
            })?;
        let (source, edge) = match result.direction {
            Direction::Backward => (
                NodeSource::SyntheticBackward,
                DerivationEdge::new(
                    &result.input_node,
                    &result.output_node,
                    DerivationMethod::LlmBackward,
                ),
            ),
            Direction::Forward => (
                NodeSource::SyntheticForward,
                DerivationEdge::new(
                    &result.input_node,
                    &result.output_node,
                    DerivationMethod::LlmForward,
                ),
            ),
        };
        record
            .nodes
            .push(MessageNode::new(&result.output_node, source, text.clone()));
        record.edges.push(edge);
    }
    Ok(Corpus::new(records)?)
}

#[derive(Debug, Clone)]
pub struct ExtendOutcome {
    pub corpus: Corpus,
    pub results: Vec<GenerationResult>,
}

impl ExtendOutcome {
    pub fn accepted(&self, direction: Direction) -> usize {
        self.results
            .iter()
            .filter(|r| r.direction == direction && r.is_accepted())
            .count()
    }

    pub fn rejected(&self) -> impl Iterator<Item = &GenerationResult> {
        self.results.iter().filter(|r| !r.is_accepted())
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.results.iter().flat_map(|r| r.transcript()).collect()
    }
}

/// Runs the given directions in order, each over the corpus produced by the previous one,
/// so `[Backward, Forward]` also rewrites the new synthetic generated messages.
pub fn extend(
    corpus: &Corpus,
    client: &dyn LlmClient,
    directions: &[Direction],
    config: &ExtendConfig,
) -> Result<ExtendOutcome, SynthError> {
    config.validate()?;
    let mut current = corpus.clone();
    let mut all = Vec::new();
    for &direction in directions {
        let jobs = plan_jobs(&current, direction, config)?;
        let snapshot = &current;
        let results = config.exec.with_width(config.parallelism, || {
            config.exec.try_map(&jobs, |job| {
                let record = snapshot
                    .get(&job.commit_id)
                    .expect("planned from this corpus");
                let input = record
                    .node(&job.input_node)
                    .expect("planned from this corpus");
                let diff = config.include_diff.then_some(record.diff.as_str());
                generate(client, job, &input.text, diff)
            })
        })?;
        current = apply_results(&current, &results)?;
        all.extend(results);
    }
    Ok(ExtendOutcome {
        corpus: current,
        results: all,
    })
}
