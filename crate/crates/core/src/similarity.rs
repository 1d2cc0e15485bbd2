//! TF-IDF vectors and cosine similarity for the divergence and novelty
//! rewards.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("cannot fit a TF-IDF model on an empty corpus")]
    EmptyCorpus,
}

/// Lowercases, splits on non-alphanumeric characters and drops tokens shorter
/// than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Fitted vocabulary and smoothed inverse document frequencies.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`. Vocabulary indices follow the
/// lexicographic order of the tokens, so two fits on the same corpus are
/// identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    tokens: Vec<String>,
    idf: Vec<f64>,
    document_count: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Result<Self, SimilarityError> {
        if corpus.is_empty() {
            return Err(SimilarityError::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let unique: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let (tokens, idf): (Vec<_>, Vec<_>) = df
            .into_iter()
            .map(|(t, d)| {
                let idf = ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0;
                (t, idf)
            })
            .unzip();
        Ok(Self::from_parts(tokens, idf, corpus.len()))
    }

    fn from_parts(tokens: Vec<String>, idf: Vec<f64>, document_count: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, idf, document_count, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(mut self) -> Self {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        self
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn vocabulary_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    /// L2-normalized `tf × idf` vector; out-of-vocabulary tokens are ignored.
    pub fn vectorize(&self, doc: &str) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(doc) {
            if let Some(i) = self.index_of(&t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let entries: Vec<(usize, f64)> =
            tf.into_iter().map(|(i, count)| (i, count * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector::default();
        }
        SparseVector { entries: entries.into_iter().map(|(i, w)| (i, w / norm)).collect() }
    }

    /// Cosine similarity of two documents under this model.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&self.vectorize(a), &self.vectorize(b))
    }
}

/// `(index, weight)` pairs sorted by index with no duplicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary non-negative pairs and L2-normalizes it.
    /// Duplicate indices are summed.
    pub fn normalized(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in pairs {
            *merged.entry(i).or_default() += w;
        }
        let norm = merged.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self::default();
        }
        Self { entries: merged.into_iter().filter(|(_, w)| *w != 0.0).map(|(i, w)| (i, w / norm)).collect() }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Dot product of two normalized vectors, clamped to `[0, 1]`. A zero vector
/// has similarity 0 with everything.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.entries.len() && j < b.entries.len() {
        let (ia, wa) = a.entries[i];
        let (ib, wb) = b.entries[j];
        match ia.cmp(&ib) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    dot.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, a World-42 x_y"), vec!["hello", "world", "42"]);
    }

    #[test]
    fn fit_two_documents() {
        // Documents need two-character tokens to survive tokenization.
        let m = TfidfModel::fit(&["aa bb", "aa cc"]).unwrap();
        assert_eq!(m.document_count(), 2);
        assert_eq!(m.idf("aa"), Some(1.0));
        let expected_rare = (3.0f64 / 2.0).ln() + 1.0;
        assert!((m.idf("bb").unwrap() - expected_rare).abs() < 1e-15);
        assert!((m.idf("cc").unwrap() - expected_rare).abs() < 1e-15);
        assert_eq!(m.vocabulary_len(), 3);
    }

    #[test]
    fn single_document_idf_is_one() {
        let m = TfidfModel::fit(&["alpha beta gamma alpha"]).unwrap();
        for t in ["alpha", "beta", "gamma"] {
            assert_eq!(m.idf(t), Some(1.0));
        }
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(TfidfModel::fit::<&str>(&[]).unwrap_err(), SimilarityError::EmptyCorpus);
    }

    #[test]
    fn vectorize_cases() {
        let m = TfidfModel::fit(&["aa bb", "aa cc"]).unwrap();
        assert!(m.vectorize("zz yy").is_zero());
        assert!((m.vectorize("aa bb").norm() - 1.0).abs() < 1e-12);

        // "aa aa bb": raw weights (2 * 1.0, 1 * idf(bb)) before normalization.
        let idf_b = 1.5f64.ln() + 1.0;
        let norm = (4.0 + idf_b * idf_b).sqrt();
        let v = m.vectorize("aa aa bb");
        let ia = m.index_of("aa").unwrap();
        let ib = m.index_of("bb").unwrap();
        assert_eq!(v.entries().len(), 2);
        for &(i, w) in v.entries() {
            let expected = if i == ia { 2.0 / norm } else if i == ib { idf_b / norm } else { unreachable!() };
            assert!((w - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_cases() {
        let a = SparseVector::normalized([(0, 1.0)]);
        let b = SparseVector::normalized([(0, 1.0), (1, 1.0)]);
        assert!((cosine(&a, &b) - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(cosine(&a, &a), 1.0);
        let c = SparseVector::normalized([(5, 2.0)]);
        assert_eq!(cosine(&a, &c), 0.0);
        assert_eq!(cosine(&a, &SparseVector::default()), 0.0);
    }

    fn weights() -> impl Strategy<Value = Vec<(usize, f64)>> {
        proptest::collection::vec((0usize..16, 0.0f64..10.0), 0..12)
    }

    proptest! {
        #[test]
        fn cosine_properties(a in weights(), b in weights()) {
            let a = SparseVector::normalized(a);
            let b = SparseVector::normalized(b);
            let ab = cosine(&a, &b);
            prop_assert_eq!(ab, cosine(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((0.0..=1.0).contains(&(1.0 - ab)));
            if !a.is_zero() {
                prop_assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn idf_is_finite_and_positive(docs in proptest::collection::vec("[a-d ]{0,20}", 1..6)) {
            let m = TfidfModel::fit(&docs).unwrap();
            for t in &m.tokens {
                let idf = m.idf(t).unwrap();
                prop_assert!(idf.is_finite() && idf >= 0.0);
            }
        }
    }
}
