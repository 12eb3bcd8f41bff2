use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::tokenize::tokenize;
use super::MetricError;

/// Supplies one vector per token, possibly contextual (the whole sequence is sent at once).
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, MetricError>;
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Greedy-matching F1 over token embeddings: each token takes its best cosine match on the
/// other side; precision averages over prediction tokens, recall over reference tokens.
pub fn greedy_match_f1(pred: &[Vec<f32>], refs: &[Vec<f32>]) -> f64 {
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let sim: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| refs.iter().map(|r| cosine(p, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / pred.len() as f64;
    let recall = (0..refs.len())
        .map(|j| {
            sim.iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / refs.len() as f64;
    if precision + recall <= 0.0 {
        return 0.0;
    }
    (2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0)
}

pub fn embedding_score(
    prediction: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
    lowercase: bool,
) -> Result<f64, MetricError> {
    let pred = tokenize(prediction, lowercase);
    let refs = tokenize(reference, lowercase);
    if pred.is_empty() || refs.is_empty() {
        return Ok(0.0);
    }
    let pv = checked_embed(provider, &pred)?;
    let rv = checked_embed(provider, &refs)?;
    Ok(greedy_match_f1(&pv, &rv))
}

fn checked_embed(
    provider: &dyn EmbeddingProvider,
    tokens: &[String],
) -> Result<Vec<Vec<f32>>, MetricError> {
    let vectors = provider.embed(tokens)?;
    if vectors.len() != tokens.len() {
        return Err(MetricError::Provider(format!(
            "expected {} vectors, got {}",
            tokens.len(),
            vectors.len()
        )));
    }
    Ok(vectors)
}

type Vectors = Arc<Vec<Vec<f32>>>;

/// Memoises provider output per token sequence.
pub struct CachedProvider<P> {
    inner: P,
    cache: Mutex<HashMap<Vec<String>, Vectors>>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        CachedProvider {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(tokens) {
            return Ok(hit.as_ref().clone());
        }
        let vectors = self.inner.embed(tokens)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(tokens.to_vec(), Arc::new(vectors.clone()));
        Ok(vectors)
    }
}

/// Client for an HTTP embedding endpoint: `POST {"tokens": [...]}` answered by
/// `{"vectors": [[...], ...]}`.
#[cfg(feature = "http")]
pub struct HttpEmbeddingProvider {
    url: String,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpEmbeddingProvider {
    pub fn new(url: impl Into<String>) -> Result<Self, MetricError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| MetricError::Unavailable(e.to_string()))?;
        Ok(HttpEmbeddingProvider {
            url: url.into(),
            client,
        })
    }
}

#[cfg(feature = "http")]
impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
        #[derive(serde::Serialize)]
        struct Request<'a> {
            tokens: &'a [String],
        }
        #[derive(serde::Deserialize)]
        struct Response {
            vectors: Vec<Vec<f32>>,
        }
        let unavailable = |e: reqwest::Error| {
            MetricError::Unavailable(format!("embedding provider {}: {e}", self.url))
        };
        let response = self
            .client
            .post(&self.url)
            .json(&Request { tokens })
            .send()
            .map_err(unavailable)?
            .error_for_status()
            .map_err(unavailable)?;
        let body: Response = response
            .json()
            .map_err(|e| MetricError::Provider(format!("bad embedding response: {e}")))?;
        Ok(body.vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl EmbeddingProvider for Constant {
        fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
            Ok(vec![vec![0.3, 0.4]; tokens.len()])
        }
    }

    struct Down;
    impl EmbeddingProvider for Down {
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
            Err(MetricError::Unavailable("connection refused".into()))
        }
    }

    struct Short;
    impl EmbeddingProvider for Short {
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, MetricError> {
            Ok(vec![vec![1.0]])
        }
    }

    #[test]
    fn degenerate_provider_scores_one() {
        let s = embedding_score("add tests", "remove everything now", &Constant, false).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unavailable_is_an_error_not_zero() {
        let err = embedding_score("a", "b", &Down, false).unwrap_err();
        assert!(matches!(err, MetricError::Unavailable(_)));
    }

    #[test]
    fn vector_count_mismatch_rejected() {
        assert!(matches!(
            embedding_score("a b", "c d", &Short, false),
            Err(MetricError::Provider(_))
        ));
    }
}
