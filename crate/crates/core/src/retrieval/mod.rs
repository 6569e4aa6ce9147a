//! Few-shot example selection: KNN over TF-IDF or dense embeddings, plus a
//! seeded random baseline.

mod embedding;
mod tfidf;

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Corpus;

pub use embedding::{
    text_key, DenseIndex, DenseVector, Embedder, EmbeddingProvider, HttpEmbeddingClient,
    PrecomputedEmbeddings,
};
pub use tfidf::{SparseVector, TfidfIndex};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("requested {k} examples from a corpus of {available}")]
    TooManyRequested { k: usize, available: usize },
    #[error("no embedding for text with key {key}")]
    MissingEmbedding { key: String },
    #[error("embedding endpoint error: {0}")]
    Endpoint(String),
    #[error("embedding file {path}: {reason}")]
    EmbeddingFile { path: String, reason: String },
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// One selected training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub example_id: String,
    /// Position of the example in the training corpus.
    pub index: usize,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
}

/// A training set that can score every member against a query text.
pub trait SimilarityIndex {
    fn ids(&self) -> &[String];

    /// Cosine similarity of the query against each training example, in
    /// training order.
    fn similarities(&self, query: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Returns the `k` most similar training examples, most similar first.
/// Equal similarities keep training order. `k` larger than the corpus
/// returns every example.
pub fn select_knn<I: SimilarityIndex + ?Sized>(
    query: &str,
    index: &I,
    k: usize,
) -> Result<Vec<Neighbor>, RetrievalError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let sims = index.similarities(query)?;
    Ok(top_k(index.ids(), &sims, k))
}

/// Ranks `(id, similarity)` pairs by similarity descending, then index ascending.
pub fn top_k(ids: &[String], sims: &[f64], k: usize) -> Vec<Neighbor> {
    debug_assert_eq!(ids.len(), sims.len());
    let mut order: Vec<usize> = (0..sims.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    let k = k.min(order.len());
    if k < order.len() {
        order.select_nth_unstable_by(k, by_rank);
        order.truncate(k);
    }
    order.sort_by(by_rank);
    order
        .into_iter()
        .enumerate()
        .map(|(rank, index)| Neighbor {
            example_id: ids[index].clone(),
            index,
            similarity: sims[index],
            rank: rank + 1,
        })
        .collect()
}

/// Draws `k` distinct positions out of `n`, uniformly and reproducibly.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, RetrievalError> {
    if k > n {
        return Err(RetrievalError::TooManyRequested { k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, k).into_vec())
}

/// Random few-shot baseline: `k` distinct example ids drawn without replacement.
pub fn select_random(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<String>, RetrievalError> {
    let examples = corpus.examples();
    Ok(sample_indices(examples.len(), k, seed)?
        .into_iter()
        .map(|i| examples[i].id.clone())
        .collect())
}
