//! Bag-of-words features: a frozen vocabulary and sparse count vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textprep::TokenDoc;

/// Vocabulary pruning and feature scaling options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabParams {
    /// Minimum number of training documents a token must occur in.
    pub min_df: usize,
    pub max_size: usize,
    /// Scale each vector to unit L2 norm before training and scoring.
    /// Off by default: the classifier works on raw counts.
    #[serde(default)]
    pub l2_normalize: bool,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            min_df: 2,
            max_size: 50_000,
            l2_normalize: false,
        }
    }
}

impl VocabParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_df == 0 {
            return Err(Error::Config("min_df must be at least 1".into()));
        }
        if self.max_size == 0 {
            return Err(Error::Config("max_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Token → index map with indices assigned in lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its tokens, which must be strictly
    /// increasing.
    pub fn from_sorted_tokens(tokens: Vec<String>) -> Result<Self> {
        if let Some(pair) = tokens.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "vocabulary tokens out of order or duplicated at {:?} / {:?}",
                pair[0], pair[1]
            )));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the newline-terminated tokens in index order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Builds the vocabulary of tokens found in at least `min_df` documents,
/// keeping the `max_size` most frequent (ties broken lexicographically).
pub fn build_vocabulary(docs: &[TokenDoc], min_df: usize, max_size: usize) -> Result<Vocabulary> {
    VocabParams {
        min_df,
        max_size,
        l2_normalize: false,
    }
    .validate()?;

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<&str> = doc.tokens().iter().map(String::as_str).collect();
        for token in unique {
            *df.entry(token).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df).collect();
    if kept.len() > max_size {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        kept.truncate(max_size);
    }
    let mut tokens: Vec<String> = kept.into_iter().map(|(t, _)| t.to_string()).collect();
    tokens.sort();
    Vocabulary::from_sorted_tokens(tokens)
}

/// Word counts: `(index, count)` pairs strictly ascending by index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, u32)>,
    dim: usize,
}

impl SparseVector {
    /// Validates the sparse-vector invariants.
    pub fn new(entries: Vec<(u32, u32)>, dim: usize) -> Result<Self> {
        for (i, &(index, count)) in entries.iter().enumerate() {
            if index as usize >= dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: index as usize + 1,
                });
            }
            if count == 0 {
                return Err(Error::Config(format!("zero count at index {index}")));
            }
            if i > 0 && entries[i - 1].0 >= index {
                return Err(Error::Config("indices must be strictly ascending".into()));
            }
        }
        Ok(SparseVector { entries, dim })
    }

    /// Dense counts → sparse vector.
    pub fn from_dense(counts: &[u32]) -> Self {
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
            .collect();
        SparseVector {
            entries,
            dim: counts.len(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, c)| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Counts the in-vocabulary tokens of `doc`.
pub fn vectorize(doc: &TokenDoc, vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for token in doc.tokens() {
        if let Some(i) = vocab.index_of(token) {
            *counts.entry(i as u32).or_default() += 1;
        }
    }
    SparseVector {
        entries: counts.into_iter().collect(),
        dim: vocab.len(),
    }
}
