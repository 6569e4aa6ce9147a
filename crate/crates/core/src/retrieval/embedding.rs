use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RetrievalError, SimilarityIndex};
use crate::dataset::Corpus;
use crate::parser::normalize_text;

/// Fixed-length embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(RetrievalError::NonFinite)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cosine similarity; 0 when either vector is zero.
    pub fn cosine(&self, other: &DenseVector) -> Result<f64, RetrievalError> {
        if self.len() != other.len() {
            return Err(RetrievalError::DimensionMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = norm(&self.0) * norm(&other.0);
        Ok(if denom == 0.0 { 0.0 } else { dot / denom })
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = RetrievalError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

/// Hex SHA-256 of the normalized text; the lookup key for stored embeddings.
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_text(text).as_bytes()))
}

/// Source of sentence embeddings. Implementations must return the same
/// vector for the same text on every call.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, RetrievalError>;

    fn embed(&self, text: &str) -> Result<DenseVector, RetrievalError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| RetrievalError::Endpoint("empty response".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredEmbedding {
    key: String,
    vector: DenseVector,
}

/// Embeddings computed ahead of time, stored as JSONL
/// `{"key": <sha256 of normalized text>, "vector": [...]}`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    vectors: HashMap<String, DenseVector>,
    dim: Option<usize>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let file_err = |reason: String| RetrievalError::EmbeddingFile {
            path: path.display().to_string(),
            reason,
        };
        let content = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let mut store = Self::default();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: StoredEmbedding =
                serde_json::from_str(line).map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
            store
                .insert_key(entry.key, entry.vector)
                .map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, text: &str, vector: DenseVector) -> Result<(), RetrievalError> {
        self.insert_key(text_key(text), vector)
    }

    fn insert_key(&mut self, key: String, vector: DenseVector) -> Result<(), RetrievalError> {
        match self.dim {
            Some(d) if d != vector.len() => {
                return Err(RetrievalError::DimensionMismatch {
                    left: d,
                    right: vector.len(),
                })
            }
            _ => self.dim = Some(vector.len()),
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut out = String::new();
        for key in keys {
            let line = serde_json::to_string(&StoredEmbedding {
                key: key.clone(),
                vector: self.vectors[key].clone(),
            })
            .expect("finite vectors serialize");
            out.push_str(&line);
            out.push('\n');
        }
        fs::write(path, out)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, text: &str) -> Option<&DenseVector> {
        self.vectors.get(&text_key(text))
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, RetrievalError> {
        texts
            .iter()
            .map(|t| {
                self.lookup(t)
                    .cloned()
                    .ok_or_else(|| RetrievalError::MissingEmbedding { key: text_key(t) })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<DenseVector>,
}

/// Client for an embedding service: `POST {"texts": [...]}` answers
/// `{"vectors": [[...], ...]}` in request order.
pub struct HttpEmbeddingClient {
    url: String,
    agent: ureq::Agent,
}

impl HttpEmbeddingClient {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingClient {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, RetrievalError> {
        let endpoint = |e: String| RetrievalError::Endpoint(e);
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| endpoint(format!("{} unreachable: {e}", self.url)))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(endpoint(format!("{} returned status {status}", self.url)));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| endpoint(format!("bad response body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(endpoint(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        Ok(body.vectors)
    }
}

/// Precomputed store with an optional endpoint fallback. Endpoint results are
/// memoized so repeated calls return identical vectors.
pub struct Embedder {
    store: PrecomputedEmbeddings,
    endpoint: Option<Box<dyn EmbeddingProvider>>,
    fetched: Mutex<HashMap<String, DenseVector>>,
}

impl Embedder {
    pub fn new(store: PrecomputedEmbeddings, endpoint: Option<Box<dyn EmbeddingProvider>>) -> Self {
        Self {
            store,
            endpoint,
            fetched: Mutex::new(HashMap::new()),
        }
    }
}

impl EmbeddingProvider for Embedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, RetrievalError> {
        let mut out: Vec<Option<DenseVector>> = Vec::with_capacity(texts.len());
        let mut missing: Vec<usize> = Vec::new();
        {
            let fetched = self.fetched.lock().expect("embedding memo poisoned");
            for (i, text) in texts.iter().enumerate() {
                let hit = self
                    .store
                    .lookup(text)
                    .or_else(|| fetched.get(&text_key(text)))
                    .cloned();
                if hit.is_none() {
                    missing.push(i);
                }
                out.push(hit);
            }
        }
        if !missing.is_empty() {
            let Some(endpoint) = &self.endpoint else {
                return Err(RetrievalError::MissingEmbedding {
                    key: text_key(texts[missing[0]]),
                });
            };
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let vectors = endpoint.embed_batch(&batch)?;
            let mut fetched = self.fetched.lock().expect("embedding memo poisoned");
            for (&i, v) in missing.iter().zip(vectors) {
                let v = fetched.entry(text_key(texts[i])).or_insert(v).clone();
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

/// Training examples embedded once; queries are embedded on demand.
pub struct DenseIndex {
    ids: Vec<String>,
    vectors: Vec<DenseVector>,
    provider: Arc<dyn EmbeddingProvider>,
}

impl DenseIndex {
    pub fn build(corpus: &Corpus, provider: Arc<dyn EmbeddingProvider>) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let texts: Vec<&str> = corpus.examples().iter().map(|e| e.text.as_str()).collect();
        let vectors = provider.embed_batch(&texts)?;
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(RetrievalError::DimensionMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        Ok(Self {
            ids: corpus.examples().iter().map(|e| e.id.clone()).collect(),
            vectors,
            provider,
        })
    }
}

impl SimilarityIndex for DenseIndex {
    fn ids(&self) -> &[String] {
        &self.ids
    }

    fn similarities(&self, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let q = self.provider.embed(query)?;
        self.vectors.iter().map(|v| q.cosine(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dense_cosine() {
        let u = dv(&[1.0, 1.0, 0.0]);
        let v = dv(&[1.0, 0.0, 1.0]);
        assert!((u.cosine(&v).unwrap() - 0.5).abs() < 1e-12);
        assert!((u.cosine(&u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(u.cosine(&dv(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            u.cosine(&dv(&[1.0])),
            Err(RetrievalError::DimensionMismatch { left: 3, right: 1 })
        ));
        assert!(matches!(
            DenseVector::new(vec![f64::NAN]),
            Err(RetrievalError::NonFinite)
        ));
    }

    #[test]
    fn key_ignores_case_and_spacing() {
        assert_eq!(text_key("Great  sushi "), text_key("great sushi"));
        assert_ne!(text_key("great sushi"), text_key("great sushi!"));
    }

    #[test]
    fn precomputed_lookup_and_misses() {
        let mut store = PrecomputedEmbeddings::default();
        store.insert("good pizza", dv(&[0.5, 0.25])).unwrap();
        store.insert("bad pizza", dv(&[0.5, 0.25])).unwrap();
        assert_eq!(store.embed("good pizza").unwrap(), dv(&[0.5, 0.25]));
        let a = store.embed("good pizza").unwrap();
        let b = store.embed("bad pizza").unwrap();
        assert!((a.cosine(&b).unwrap() - 1.0).abs() < 1e-12);
        match store.embed("unseen") {
            Err(RetrievalError::MissingEmbedding { key }) => assert_eq!(key, text_key("unseen")),
            other => panic!("expected miss, got {other:?}"),
        }
        assert!(store.insert("x", dv(&[1.0])).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let mut store = PrecomputedEmbeddings::default();
        store.insert("a", dv(&[1.0, 2.0])).unwrap();
        store.insert("b", dv(&[3.0, -4.5])).unwrap();
        store.write_jsonl(&path).unwrap();
        let loaded = PrecomputedEmbeddings::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.lookup("b"), Some(&dv(&[3.0, -4.5])));
    }

    struct Counting {
        calls: Mutex<usize>,
    }

    impl EmbeddingProvider for Counting {
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<DenseVector>, RetrievalError> {
            *self.calls.lock().unwrap() += 1;
            Ok(texts.iter().map(|t| dv(&[t.len() as f64, 1.0])).collect())
        }
    }

    #[test]
    fn embedder_falls_back_and_memoizes() {
        let mut store = PrecomputedEmbeddings::default();
        store.insert("known", dv(&[9.0, 9.0])).unwrap();
        let endpoint = Counting { calls: Mutex::new(0) };
        let embedder = Embedder::new(store.clone(), Some(Box::new(endpoint)));
        let got = embedder.embed_batch(&["known", "abc"]).unwrap();
        assert_eq!(got, vec![dv(&[9.0, 9.0]), dv(&[3.0, 1.0])]);
        assert_eq!(embedder.embed("abc").unwrap(), dv(&[3.0, 1.0]));

        let offline = Embedder::new(store, None);
        assert!(matches!(
            offline.embed("abc"),
            Err(RetrievalError::MissingEmbedding { .. })
        ));
    }
}
