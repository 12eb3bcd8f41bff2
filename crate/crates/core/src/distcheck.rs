//! Checks whether the ED(G, E) distribution of a corpus resembles production telemetry.
//!
//! Telemetry edit distances are filtered (exact zeros dropped) and rescaled by the ratio of
//! mean generated-message lengths before the distributions are compared with shared-edge
//! histograms and a two-sample Kolmogorov-Smirnov statistic.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{derive_pairs, Corpus, PairPolicy};
use crate::stats::{histogram, Bucket, StatsError};
use crate::textmetrics::edit_distance;

pub const DEFAULT_BUCKET_WIDTH: f64 = 50.0;
pub const DEFAULT_ED_CAP: u64 = 100_000;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("telemetry record {record}: {message}")]
    Invalid { record: usize, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub ed_value: u64,
    pub gen_length: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryLog {
    records: Vec<TelemetryRecord>,
}

impl TelemetryLog {
    /// Rejects zero generation lengths and edit distances above `ed_cap`.
    pub fn new(records: Vec<TelemetryRecord>, ed_cap: u64) -> Result<Self, DistError> {
        for (i, r) in records.iter().enumerate() {
            if r.gen_length == 0 {
                return Err(DistError::Invalid {
                    record: i + 1,
                    message: "gen_length must be positive".into(),
                });
            }
            if r.ed_value > ed_cap {
                return Err(DistError::Invalid {
                    record: i + 1,
                    message: format!("ed_value {} exceeds cap {ed_cap}", r.ed_value),
                });
            }
        }
        Ok(TelemetryLog { records })
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean_gen_length(&self) -> Result<f64, DistError> {
        if self.records.is_empty() {
            return Err(DistError::Empty("telemetry log"));
        }
        Ok(self
            .records
            .iter()
            .map(|r| r.gen_length as f64)
            .sum::<f64>()
            / self.records.len() as f64)
    }

    pub fn ed_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ed_value as f64).collect()
    }
}

/// CSV with header `ed_value,gen_length`.
pub fn read_telemetry_csv(
    reader: impl std::io::Read,
    ed_cap: u64,
) -> Result<TelemetryLog, DistError> {
    let mut records = Vec::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
        records.push(row.map_err(|e: csv::Error| DistError::Invalid {
            record: i + 1,
            message: e.to_string(),
        })?);
    }
    TelemetryLog::new(records, ed_cap)
}

/// One `{"ed_value": .., "gen_length": ..}` object per line.
pub fn read_telemetry_jsonl(reader: impl BufRead, ed_cap: u64) -> Result<TelemetryLog, DistError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let invalid = |message: String| DistError::Invalid {
            record: i + 1,
            message,
        };
        let line = line.map_err(|e| invalid(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?);
    }
    TelemetryLog::new(records, ed_cap)
}

/// Picks the reader by extension: `.csv`, anything else is treated as JSONL.
pub fn load_telemetry(path: impl AsRef<Path>, ed_cap: u64) -> Result<TelemetryLog, DistError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_telemetry_csv(reader, ed_cap)
    } else {
        read_telemetry_jsonl(reader, ed_cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub removed: usize,
    pub removed_fraction: f64,
}

/// Drops records with a zero edit distance.
pub fn filter_zero(log: &TelemetryLog) -> (TelemetryLog, FilterReport) {
    let kept: Vec<TelemetryRecord> = log
        .records
        .iter()
        .copied()
        .filter(|r| r.ed_value != 0)
        .collect();
    let total = log.len();
    let removed = total - kept.len();
    let report = FilterReport {
        total,
        removed,
        removed_fraction: if total == 0 {
            0.0
        } else {
            removed as f64 / total as f64
        },
    };
    (TelemetryLog { records: kept }, report)
}

/// Mean character length of the corpus's generated messages.
pub fn mean_generated_length(corpus: &Corpus) -> Result<f64, DistError> {
    let lengths: Vec<usize> = corpus
        .records()
        .iter()
        .flat_map(|r| r.generated().map(|n| n.text.chars().count()))
        .collect();
    if lengths.is_empty() {
        return Err(DistError::Empty("corpus"));
    }
    Ok(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64)
}

/// R = mean generated length in the corpus / mean generated length in the log.
pub fn scale_factor(corpus_mean_length: f64, log: &TelemetryLog) -> Result<f64, DistError> {
    if !(corpus_mean_length.is_finite() && corpus_mean_length > 0.0) {
        return Err(DistError::Empty("corpus"));
    }
    Ok(corpus_mean_length / log.mean_gen_length()?)
}

pub fn scaled_ed_values(log: &TelemetryLog, r: f64) -> Vec<f64> {
    log.records.iter().map(|x| x.ed_value as f64 * r).collect()
}

/// ED(G, E) over every related pair of the corpus.
pub fn corpus_ed_values(corpus: &Corpus, policy: PairPolicy) -> Vec<f64> {
    let mut out = Vec::new();
    for record in corpus.records() {
        let pairs = derive_pairs(record, policy, false);
        for (g, e) in &pairs.related {
            let (Some(g), Some(e)) = (record.node(g), record.node(e)) else {
                continue;
            };
            out.push(edit_distance(&g.text, &e.text) as f64);
        }
    }
    out
}

/// ED(G, E) per related-pair subset, classified by the sources of G and E, followed by
/// the full set. Empty subsets are left out.
pub fn corpus_ed_by_subset(corpus: &Corpus, policy: PairPolicy) -> Vec<Sample> {
    use crate::corpus::NodeSource::*;
    let labels = [
        "expert-labeled",
        "synthetic-backward",
        "forward-from-expert-labeled",
        "forward-from-backward",
    ];
    let mut subsets: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut full = Vec::new();
    for record in corpus.records() {
        for (g, e) in &derive_pairs(record, policy, false).related {
            let (Some(g), Some(e)) = (record.node(g), record.node(e)) else {
                continue;
            };
            let ed = edit_distance(&g.text, &e.text) as f64;
            full.push(ed);
            let slot = match (g.source, e.source) {
                (Model, Expert) => 0,
                (SyntheticBackward, Expert) => 1,
                (Model, SyntheticForward) => 2,
                (SyntheticBackward, SyntheticForward) => 3,
                _ => continue,
            };
            subsets[slot].push(ed);
        }
    }
    let mut out: Vec<Sample> = labels
        .iter()
        .zip(subsets)
        .filter(|(_, v)| !v.is_empty())
        .map(|(l, v)| Sample::new(*l, v))
        .collect();
    if !full.is_empty() {
        out.push(Sample::new("full", full));
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, DistError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistError::Empty("sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite.into());
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Sample {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Modal bucket; the lowest one on ties.
    pub peak: Bucket,
    pub peak_index: usize,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub a: String,
    pub b: String,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub bucket_width: f64,
    /// Lower edges of the shared buckets.
    pub edges: Vec<f64>,
    pub samples: Vec<SampleStats>,
    pub ks: Vec<KsEntry>,
}

impl DistributionReport {
    pub fn sample(&self, label: &str) -> Option<&SampleStats> {
        self.samples.iter().find(|s| s.label == label)
    }

    pub fn ks_between(&self, a: &str, b: &str) -> Option<f64> {
        self.ks
            .iter()
            .find(|k| (k.a == a && k.b == b) || (k.a == b && k.b == a))
            .map(|k| k.statistic)
    }

    /// One row per bucket: `lower,upper,<count per sample>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper");
        for s in &self.samples {
            out.push(',');
            out.push_str(&csv_field(&s.label));
        }
        out.push('\n');
        for (k, lower) in self.edges.iter().enumerate() {
            let _ = write!(out, "{lower},{}", lower + self.bucket_width);
            for s in &self.samples {
                let _ = write!(out, ",{}", s.counts[k]);
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Histograms over shared bucket edges, modal buckets, and KS for every pair of samples.
pub fn compare(samples: &[Sample], bucket_width: f64) -> Result<DistributionReport, DistError> {
    if samples.is_empty() {
        return Err(DistError::Empty("sample list"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples {
        if s.values.is_empty() {
            return Err(DistError::Empty("sample"));
        }
        for &v in &s.values {
            if !v.is_finite() {
                return Err(StatsError::NonFinite.into());
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut stats = Vec::with_capacity(samples.len());
    let mut edges = Vec::new();
    for s in samples {
        let buckets = histogram(&s.values, bucket_width, lo, hi)?;
        edges = buckets.iter().map(|b| b.lower).collect();
        let peak_index = buckets.iter().enumerate().fold(0, |best, (k, b)| {
            if b.count > buckets[best].count {
                k
            } else {
                best
            }
        });
        let mut sorted = s.values.clone();
        sorted.sort_by(f64::total_cmp);
        stats.push(SampleStats {
            label: s.label.clone(),
            n: s.values.len(),
            mean: s.values.iter().sum::<f64>() / s.values.len() as f64,
            median: median(&sorted),
            peak: buckets[peak_index].clone(),
            peak_index,
            counts: buckets.iter().map(|b| b.count).collect(),
        });
    }
    let mut ks = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            ks.push(KsEntry {
                a: samples[i].label.clone(),
                b: samples[j].label.clone(),
                statistic: ks_statistic(&samples[i].values, &samples[j].values)?,
            });
        }
    }
    Ok(DistributionReport {
        bucket_width,
        edges,
        samples: stats,
        ks,
    })
}
