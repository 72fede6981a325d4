//! Tokenization, TF-IDF vectors and cosine similarity.
//!
//! TF-IDF is only used to describe data (clustering for exemplar selection
//! and dataset similarity for the adaptive penalty). The classifier itself
//! reads fixed-width hashed features, see [`crate::model`].

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Splits on non-alphanumeric characters, then on camelCase boundaries, and
/// lowercases. `"getUserName_fast"` becomes `[get, user, name, fast]` and
/// `"HTTPServer2"` becomes `[http, server2]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let boundary = cur.is_uppercase()
                && (prev.is_lowercase()
                    || prev.is_numeric()
                    || (prev.is_uppercase()
                        && chars.get(i + 1).is_some_and(|n| n.is_lowercase())));
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    tokens
}

/// Sparse non-negative vector with a cached L2 norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<usize, f64>,
    norm: f64,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero weights are dropped.
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let entries: BTreeMap<usize, f64> = entries.into_iter().filter(|(_, w)| *w != 0.0).collect();
        let norm = entries.values().map(|w| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&i, &w)| (i, w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .filter_map(|(i, a)| large.entries.get(i).map(|b| a * b))
            .sum()
    }

    /// Unit-L2 copy; the zero vector stays zero.
    pub fn normalized(&self) -> SparseVector {
        if self.norm == 0.0 {
            return SparseVector::new();
        }
        SparseVector::from_entries(self.iter().map(|(i, w)| (i, w / self.norm)))
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, w) in self.iter() {
            if i < dim {
                out[i] = w;
            }
        }
        out
    }
}

/// Fitted vocabulary and document frequencies.
#[derive(Debug, Clone)]
pub struct TfidfModel {
    vocabulary: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    corpus_size: usize,
}

impl TfidfModel {
    pub fn vocabulary_size(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    pub fn doc_freq(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.doc_freq[i])
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.corpus_size as f64;
        ((1.0 + n) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }

    /// L2-normalized TF-IDF vector of a token list. Out-of-vocabulary tokens
    /// are ignored.
    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in doc {
            if let Some(&i) = self.vocabulary.get(token.as_ref()) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        SparseVector::from_entries(counts.into_iter().map(|(i, c)| (i, c * self.idf(i)))).normalized()
    }

    pub fn transform_text(&self, text: &str) -> SparseVector {
        self.transform(&tokenize(text))
    }
}

/// Vocabulary indices are assigned in order of first appearance.
pub fn fit_tfidf<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<TfidfModel> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("cannot fit TF-IDF on an empty corpus".into()));
    }
    let mut vocabulary = HashMap::new();
    let mut doc_freq = Vec::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for token in doc {
            let token = token.as_ref();
            let next = vocabulary.len();
            let index = *vocabulary.entry(token.to_string()).or_insert(next);
            if index == doc_freq.len() {
                doc_freq.push(0);
            }
            if seen.insert(index) {
                doc_freq[index] += 1;
            }
        }
    }
    Ok(TfidfModel {
        vocabulary,
        doc_freq,
        corpus_size: docs.len(),
    })
}

/// Fits on the tokenized texts of `samples`.
pub fn fit_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<TfidfModel> {
    let docs: Vec<Vec<String>> = samples.into_iter().map(|s| tokenize(&s.text)).collect();
    fit_tfidf(&docs)
}

/// Mean of the samples' normalized TF-IDF vectors, re-normalized.
pub fn dataset_vector<'a>(
    model: &TfidfModel,
    samples: impl IntoIterator<Item = &'a Sample>,
) -> Result<SparseVector> {
    let mut sum: BTreeMap<usize, f64> = BTreeMap::new();
    let mut count = 0usize;
    for sample in samples {
        count += 1;
        for (i, w) in model.transform_text(&sample.text).iter() {
            *sum.entry(i).or_insert(0.0) += w;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("dataset vector of an empty sample list".into()));
    }
    let n = count as f64;
    Ok(SparseVector::from_entries(sum.into_iter().map(|(i, w)| (i, w / n))).normalized())
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}
