//! Example embeddings, cosine similarity and the similarity-gated
//! distribution over prompts.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExampleKey;
use crate::prompt::Prompt;
use crate::rng::hash_str;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding endpoint failed: {0}")]
    Remote(String),
    #[error("no embedding for demonstration {0}")]
    MissingEmbedding(ExampleKey),
    #[error("cannot gate an empty prompt set")]
    NoPrompts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either norm is 0.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Feature-hashed bag of lowercased alphanumeric words, L2-normalized.
///
/// Word `w` increments bucket `1 + fnv1a(w) mod (dim - 1)`. Bucket 0 is
/// reserved: text without words embeds to the unit vector on it.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 1024 }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "need at least one bucket besides the reserved one");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn bag_of_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0; self.dim];
        let mut any = false;
        for word in bag_of_words(text) {
            let bucket = 1 + (hash_str(&word) % (self.dim as u64 - 1)) as usize;
            values[bucket] += 1.0;
            any = true;
        }
        if !any {
            values[0] = 1.0;
        }
        let raw = EmbeddingVector::new(values);
        let norm = raw.norm;
        Ok(EmbeddingVector::new(raw.values.into_iter().map(|v| v / norm).collect()))
    }
}

/// Client for a remote embedding endpoint: `POST {"texts": [...]}` answered
/// by `{"vectors": [[...], ...]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        v.pop().ok_or_else(|| EmbedError::Remote("empty vector list".into()))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp: EmbedResponse = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbedError::Remote(e.to_string()))?
            .into_json()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::Remote(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        Ok(resp.vectors.into_iter().map(EmbeddingVector::new).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateCombine {
    /// Sum of demonstration similarities.
    #[default]
    Sum,
    /// Product of demonstration similarities.
    Product,
}

impl GateCombine {
    pub fn score(self, sims: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            GateCombine::Sum => sims.into_iter().sum(),
            GateCombine::Product => sims.into_iter().product(),
        }
    }
}

/// Normalized weights `P(z|x)` keyed by prompt id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GatingDistribution {
    pub weights: BTreeMap<usize, f64>,
}

impl GatingDistribution {
    pub fn uniform(prompt_ids: impl IntoIterator<Item = usize>) -> Self {
        let ids: Vec<usize> = prompt_ids.into_iter().collect();
        let w = 1.0 / ids.len() as f64;
        Self {
            weights: ids.into_iter().map(|id| (id, w)).collect(),
        }
    }

    /// Softmax over `(prompt_id, score)` pairs, shifted by the max score.
    pub fn softmax(scores: &[(usize, f64)]) -> Result<Self, EmbedError> {
        let max = scores
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        if scores.is_empty() {
            return Err(EmbedError::NoPrompts);
        }
        let exps: Vec<(usize, f64)> = scores.iter().map(|&(id, s)| (id, (s - max).exp())).collect();
        let z: f64 = exps.iter().map(|(_, e)| e).sum();
        Ok(Self {
            weights: exps.into_iter().map(|(id, e)| (id, e / z)).collect(),
        })
    }

    pub fn weight(&self, prompt_id: usize) -> f64 {
        self.weights.get(&prompt_id).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `P(z|x) ∝ exp(Σ_i s(x, u_i))` over the prompt set (or the product of the
/// similarities under [`GateCombine::Product`]). Repeated demonstrations
/// contribute once per occurrence.
pub fn gate(
    test_embedding: &EmbeddingVector,
    prompts: &[Prompt],
    demo_embeddings: &HashMap<ExampleKey, EmbeddingVector>,
    combine: GateCombine,
) -> Result<GatingDistribution, EmbedError> {
    if prompts.is_empty() {
        return Err(EmbedError::NoPrompts);
    }
    let mut scores = Vec::with_capacity(prompts.len());
    for p in prompts {
        let mut sims = Vec::with_capacity(p.demonstrations.len());
        for demo in &p.demonstrations {
            let key = demo.key();
            let emb = demo_embeddings
                .get(&key)
                .ok_or(EmbedError::MissingEmbedding(key))?;
            sims.push(cosine(test_embedding, emb)?);
        }
        scores.push((p.prompt_id, combine.score(sims)));
    }
    GatingDistribution::softmax(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identities() {
        let v = EmbeddingVector::new(vec![0.3, -1.2, 2.0]);
        let neg = EmbeddingVector::new(v.values.iter().map(|x| -x).collect());
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        let e0 = EmbeddingVector::new(vec![1.0, 0.0]);
        let e1 = EmbeddingVector::new(vec![0.0, 1.0]);
        assert_eq!(cosine(&e0, &e1).unwrap(), 0.0);
        let zero = EmbeddingVector::new(vec![0.0, 0.0]);
        assert_eq!(cosine(&e0, &zero).unwrap(), 0.0);
        assert!(matches!(cosine(&e0, &v), Err(EmbedError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn empty_text_uses_reserved_bucket() {
        let e = HashingEmbedder::default().embed("").unwrap();
        assert_eq!(e.values[0], 1.0);
        assert!((e.norm - 1.0).abs() < 1e-12);
        assert_eq!(e.values.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn embedding_is_deterministic_and_normalized() {
        let h = HashingEmbedder::default();
        let a = h.embed("The Mixture was stirred, then filtered.").unwrap();
        assert_eq!(a, h.embed("The Mixture was stirred, then filtered.").unwrap());
        assert!((a.norm - 1.0).abs() < 1e-12);
        assert_eq!(a, h.embed("the mixture WAS stirred then filtered").unwrap());
    }

    #[test]
    fn softmax_examples() {
        let g = GatingDistribution::softmax(&[(0, 0.7), (1, 0.7)]).unwrap();
        assert_eq!(g.weight(0), 0.5);
        assert_eq!(g.weight(1), 0.5);
        let g = GatingDistribution::softmax(&[(3, -4.0)]).unwrap();
        assert_eq!(g.weight(3), 1.0);
        let g = GatingDistribution::softmax(&[(0, 0.9), (1, 0.4)]).unwrap();
        let (a, b) = (0.9f64.exp(), 0.4f64.exp());
        assert!((g.weight(0) - a / (a + b)).abs() < 1e-15);
        assert!((g.weight(1) - b / (a + b)).abs() < 1e-15);
        assert!(matches!(GatingDistribution::softmax(&[]), Err(EmbedError::NoPrompts)));
    }

    #[test]
    fn combine_modes() {
        assert_eq!(GateCombine::Sum.score([0.5, 0.25]), 0.75);
        assert_eq!(GateCombine::Product.score([0.5, 0.25]), 0.125);
    }
}
