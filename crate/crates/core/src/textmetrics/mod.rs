//! Candidate similarity metrics over (prediction, reference) message pairs.

mod bleu;
mod chrf;
mod edit;
mod embedding;
mod meteor;
mod ngram;
pub mod porter;
mod rouge;
mod tokenize;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, ZERO_PRECISION_FLOOR};
pub use chrf::chrf;
pub use edit::{edit_distance, edit_similarity, lcs_chars, lcs_len, levenshtein};
#[cfg(feature = "http")]
pub use embedding::HttpEmbeddingProvider;
pub use embedding::{embedding_score, greedy_match_f1, CachedProvider, EmbeddingProvider};
pub use meteor::{align, meteor, Alignment};
pub use rouge::{rouge_l, rouge_n};
pub use tokenize::{tokenize, TokenSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric unavailable: {0}")]
    Unavailable(String),
    #[error("embedding provider error: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

impl Polarity {
    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::HigherBetter => Polarity::LowerBetter,
            Polarity::LowerBetter => Polarity::HigherBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    EditDistance,
    EditSimilarity,
    Bleu,
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-2")]
    Rouge2,
    #[serde(rename = "rouge-l")]
    RougeL,
    Meteor,
    Chrf,
    EmbeddingScore,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::EditDistance,
        MetricKind::EditSimilarity,
        MetricKind::Bleu,
        MetricKind::Rouge1,
        MetricKind::Rouge2,
        MetricKind::RougeL,
        MetricKind::Meteor,
        MetricKind::Chrf,
        MetricKind::EmbeddingScore,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::EditDistance => "edit-distance",
            MetricKind::EditSimilarity => "edit-similarity",
            MetricKind::Bleu => "bleu",
            MetricKind::Rouge1 => "rouge-1",
            MetricKind::Rouge2 => "rouge-2",
            MetricKind::RougeL => "rouge-l",
            MetricKind::Meteor => "meteor",
            MetricKind::Chrf => "chrf",
            MetricKind::EmbeddingScore => "embedding-score",
        }
    }

    pub fn polarity(&self) -> Polarity {
        match self {
            MetricKind::EditDistance => Polarity::LowerBetter,
            _ => Polarity::HigherBetter,
        }
    }

    /// Token-based metrics compare lowercased text unless configured otherwise.
    pub fn lowercase_by_default(&self) -> bool {
        matches!(
            self,
            MetricKind::Bleu
                | MetricKind::Rouge1
                | MetricKind::Rouge2
                | MetricKind::RougeL
                | MetricKind::Meteor
        )
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = MetricKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown metric {s:?}; expected one of {}", known.join(", "))
            })
    }
}

fn default_bleu_order() -> usize {
    4
}
fn default_chrf_order() -> usize {
    6
}
fn default_chrf_beta() -> f64 {
    2.0
}

/// Metric parameters. `lowercase: None` means the per-metric default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowercase: Option<bool>,
    #[serde(default = "default_bleu_order")]
    pub bleu_max_order: usize,
    #[serde(default = "default_chrf_order")]
    pub chrf_order: usize,
    #[serde(default = "default_chrf_beta")]
    pub chrf_beta: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            lowercase: None,
            bleu_max_order: default_bleu_order(),
            chrf_order: default_chrf_order(),
            chrf_beta: default_chrf_beta(),
        }
    }
}

/// A metric that scores a prediction against one reference.
pub trait PairMetric: Send + Sync {
    fn name(&self) -> String;
    fn polarity(&self) -> Polarity;
    fn score(&self, prediction: &str, reference: &str) -> Result<f64, MetricError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub name: MetricKind,
    #[serde(default)]
    pub config: MetricConfig,
}

impl MetricDescriptor {
    pub fn new(name: MetricKind) -> Self {
        MetricDescriptor {
            name,
            config: MetricConfig::default(),
        }
    }

    pub fn polarity(&self) -> Polarity {
        self.name.polarity()
    }

    pub fn lowercase(&self) -> bool {
        self.config
            .lowercase
            .unwrap_or_else(|| self.name.lowercase_by_default())
    }

    /// Scores every metric except `embedding-score`, which needs a provider
    /// (see [`Metric::with_provider`]).
    pub fn score(&self, prediction: &str, reference: &str) -> Result<f64, MetricError> {
        let lc = self.lowercase();
        let fold = |s: &str| if lc { s.to_lowercase() } else { s.to_string() };
        Ok(match self.name {
            MetricKind::EditDistance => edit_distance(&fold(prediction), &fold(reference)) as f64,
            MetricKind::EditSimilarity => edit_similarity(&fold(prediction), &fold(reference)),
            MetricKind::Bleu => bleu(prediction, reference, self.config.bleu_max_order, lc),
            MetricKind::Rouge1 => rouge_n(prediction, reference, 1, lc),
            MetricKind::Rouge2 => rouge_n(prediction, reference, 2, lc),
            MetricKind::RougeL => rouge_l(prediction, reference, lc),
            MetricKind::Meteor => meteor(prediction, reference, lc),
            MetricKind::Chrf => chrf(
                &fold(prediction),
                &fold(reference),
                self.config.chrf_order,
                self.config.chrf_beta,
            ),
            MetricKind::EmbeddingScore => {
                return Err(MetricError::Unavailable(
                    "embedding-score needs an embedding provider".into(),
                ))
            }
        })
    }
}

/// A descriptor bound to whatever external resources it needs.
#[derive(Clone)]
pub struct Metric {
    descriptor: MetricDescriptor,
    provider: Option<Arc<dyn EmbeddingProvider>>,
}

impl Metric {
    pub fn new(descriptor: MetricDescriptor) -> Self {
        Metric {
            descriptor,
            provider: None,
        }
    }

    pub fn with_provider(
        descriptor: MetricDescriptor,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Self {
        Metric {
            descriptor,
            provider: Some(provider),
        }
    }

    pub fn descriptor(&self) -> &MetricDescriptor {
        &self.descriptor
    }
}

impl From<MetricKind> for Metric {
    fn from(kind: MetricKind) -> Self {
        Metric::new(MetricDescriptor::new(kind))
    }
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric")
            .field("descriptor", &self.descriptor)
            .field("provider", &self.provider.is_some())
            .finish()
    }
}

impl PairMetric for Metric {
    fn name(&self) -> String {
        self.descriptor.name.to_string()
    }

    fn polarity(&self) -> Polarity {
        self.descriptor.polarity()
    }

    fn score(&self, prediction: &str, reference: &str) -> Result<f64, MetricError> {
        match (&self.descriptor.name, &self.provider) {
            (MetricKind::EmbeddingScore, Some(provider)) => embedding_score(
                prediction,
                reference,
                provider.as_ref(),
                self.descriptor.lowercase(),
            ),
            _ => self.descriptor.score(prediction, reference),
        }
    }
}
