use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse row: `(feature index, value)` pairs in increasing index order.
pub type SparseVec = Vec<(usize, f64)>;

/// Unigram vocabulary with document frequencies, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocab {
    pub terms: Vec<String>,
    pub df: Vec<usize>,
    pub n_docs: usize,
    pub idf: Vec<f64>,
}

impl TfidfVocab {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn df_of(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }
}

/// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
pub fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Counts document frequencies over `docs`, one document per session.
pub fn fit_tfidf<D: AsRef<[S]>, S: AsRef<str>>(docs: &[D]) -> Result<TfidfVocab> {
    if docs.is_empty() {
        return Err(Error::Degenerate("tf-idf needs at least one document".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.as_ref().iter().map(|t| t.as_ref()).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n_docs = docs.len();
    let (terms, df): (Vec<String>, Vec<usize>) = df.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    let idf = df.iter().map(|&c| smooth_idf(n_docs, c)).collect();
    Ok(TfidfVocab {
        terms,
        df,
        n_docs,
        idf,
    })
}

/// Raw counts times idf, L2-normalized. Unknown tokens are ignored and an
/// empty document maps to the zero vector.
pub fn tfidf_transform<S: AsRef<str>>(doc: &[S], vocab: &TfidfVocab) -> SparseVec {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in doc {
        if let Some(i) = vocab.index_of(tok.as_ref()) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut out: SparseVec = counts.into_iter().map(|(i, c)| (i, c * vocab.idf[i])).collect();
    let norm = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|(_, v)| *v /= norm);
    }
    out
}
