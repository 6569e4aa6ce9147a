use std::collections::HashMap;

use super::{tokenize, RetrievalError, SimilarityIndex};
use crate::dataset::Corpus;

/// Sparse weight vector with entries sorted by column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary `(column, weight)` pairs; repeated
    /// columns are summed and zero weights dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut entries: Vec<(u32, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (col, w) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == col => *acc += w,
                _ => merged.push((col, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, column: u32) -> f64 {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity; 0 when either vector is zero.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for (_, w) in &mut self.entries {
                *w /= norm;
            }
        }
        self
    }
}

/// TF-IDF model fitted on a training corpus.
///
/// `weight(t, d) = count(t, d) * (ln((1 + N) / (1 + df(t))) + 1)`, then each
/// document vector is scaled to unit L2 norm. Query terms absent from the
/// training vocabulary carry no weight.
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    vocabulary: HashMap<String, u32>,
    doc_freq: Vec<usize>,
    idf: Vec<f64>,
    num_docs: usize,
    ids: Vec<String>,
    vectors: Vec<SparseVector>,
}

impl TfidfIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, RetrievalError> {
        Self::from_documents(
            corpus
                .examples()
                .iter()
                .map(|ex| (ex.id.as_str(), ex.text.as_str())),
        )
    }

    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, RetrievalError> {
        let mut vocabulary: HashMap<String, u32> = HashMap::new();
        let mut doc_freq: Vec<usize> = Vec::new();
        let mut ids = Vec::new();
        let mut counts: Vec<Vec<(u32, f64)>> = Vec::new();

        for (id, text) in docs {
            let mut tf: HashMap<u32, f64> = HashMap::new();
            for token in tokenize(text) {
                let next = vocabulary.len() as u32;
                let col = *vocabulary.entry(token).or_insert(next);
                if col as usize == doc_freq.len() {
                    doc_freq.push(0);
                }
                *tf.entry(col).or_default() += 1.0;
            }
            for &col in tf.keys() {
                doc_freq[col as usize] += 1;
            }
            ids.push(id.to_string());
            counts.push(tf.into_iter().collect());
        }
        if ids.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }

        let num_docs = ids.len();
        let idf: Vec<f64> = doc_freq
            .iter()
            .map(|&df| ((1.0 + num_docs as f64) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        let vectors = counts
            .into_iter()
            .map(|tf| {
                SparseVector::from_pairs(tf.into_iter().map(|(c, n)| (c, n * idf[c as usize]))).normalized()
            })
            .collect();
        Ok(Self {
            vocabulary,
            doc_freq,
            idf,
            num_docs,
            ids,
            vectors,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.column(term).map_or(0, |c| self.doc_freq[c as usize])
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c as usize])
    }

    pub fn vector(&self, doc: usize) -> &SparseVector {
        &self.vectors[doc]
    }

    /// Normalized weight of `term` in training document `doc`.
    pub fn weight(&self, doc: usize, term: &str) -> f64 {
        self.column(term).map_or(0.0, |c| self.vectors[doc].get(c))
    }

    /// Projects arbitrary text into the fitted space (unit norm or zero).
    pub fn transform(&self, text: &str) -> SparseVector {
        let pairs = tokenize(text).into_iter().filter_map(|t| {
            let c = *self.vocabulary.get(&t)?;
            Some((c, self.idf[c as usize]))
        });
        SparseVector::from_pairs(pairs).normalized()
    }
}

impl SimilarityIndex for TfidfIndex {
    fn ids(&self) -> &[String] {
        &self.ids
    }

    fn similarities(&self, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let q = self.transform(query);
        Ok(self.vectors.iter().map(|v| q.cosine(v)).collect())
    }
}
