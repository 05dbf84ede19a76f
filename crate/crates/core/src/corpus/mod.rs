//! Commit datasets: extraction, content-based deduplication, per-repository
//! negative sampling, mechanical outlier filtering and persistence.

mod extract;
mod io;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use extract::{extract_commits, import_dump, parse_log, repo_name, Extraction, GIT_LOG_FORMAT};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_FORMAT_VERSION};

/// One revision: identity, log message and unified-diff patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub id: String,
    pub repo: String,
    pub message: String,
    pub patch: String,
}

impl Commit {
    pub fn new(
        id: impl Into<String>,
        repo: impl Into<String>,
        message: impl Into<String>,
        patch: impl Into<String>,
    ) -> Result<Self> {
        let commit = Commit {
            id: id.into(),
            repo: repo.into(),
            message: message.into(),
            patch: patch.into(),
        };
        commit.validate()?;
        Ok(commit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidCommit("empty revision id".into()));
        }
        if self.repo.is_empty() {
            return Err(Error::InvalidCommit(format!(
                "commit {} has an empty repository identifier",
                self.id
            )));
        }
        Ok(())
    }

    /// Size of message plus patch in bytes.
    pub fn byte_size(&self) -> usize {
        self.message.len() + self.patch.len()
    }

    pub fn content_key(&self) -> ContentKey {
        ContentKey::of(&self.message, &self.patch)
    }
}

/// SHA-256 over `message || 0x00 || patch`, hex encoded.
///
/// The id and repository are not part of the digest, so mirrored commits
/// collapse onto one key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContentKey(String);

impl ContentKey {
    pub fn of(message: &str, patch: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(message.as_bytes());
        hasher.update([0u8]);
        hasher.update(patch.as_bytes());
        ContentKey(hex::encode(hasher.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// +1 for positive, -1 for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Curated,
    Sampled,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCommit {
    pub commit: Commit,
    pub label: Label,
    pub provenance: Provenance,
}

impl LabeledCommit {
    pub fn new(commit: Commit, label: Label, provenance: Provenance) -> Self {
        LabeledCommit {
            commit,
            label,
            provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Negatives drawn per positive.
    pub k: usize,
    pub seed: u64,
    pub min_bytes: usize,
    pub max_bytes: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            k: 5,
            seed: 0,
            min_bytes: 1,
            max_bytes: 1 << 20,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.min_bytes > self.max_bytes {
            return Err(Error::Config(format!(
                "min_bytes ({}) exceeds max_bytes ({})",
                self.min_bytes, self.max_bytes
            )));
        }
        Ok(())
    }
}

/// An ordered set of labeled commits with unique content keys.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub items: Vec<LabeledCommit>,
    pub meta: Map<String, Value>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate content keys.
    pub fn new(items: Vec<LabeledCommit>, meta: Map<String, Value>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            item.commit.validate()?;
            if !seen.insert(item.commit.content_key()) {
                return Err(Error::InvalidCommit(format!(
                    "commit {} duplicates the content of an earlier item",
                    item.commit.id
                )));
            }
        }
        Ok(Dataset { items, meta })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.items.iter().map(|item| item.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|item| item.label == label).count()
    }

    pub fn commits(&self) -> impl Iterator<Item = &Commit> {
        self.items.iter().map(|item| &item.commit)
    }
}

/// Keeps the first item per content key; `meta.dedup_removed` records how
/// many were dropped.
pub fn dedup(commits: Vec<LabeledCommit>) -> Dataset {
    let total = commits.len();
    let mut seen = HashSet::with_capacity(total);
    let items: Vec<LabeledCommit> = commits
        .into_iter()
        .filter(|item| seen.insert(item.commit.content_key()))
        .collect();
    let mut meta = Map::new();
    meta.insert("dedup_removed".into(), json!(total - items.len()));
    Dataset { items, meta }
}

/// Draws up to `cfg.k` negatives per positive from the positive's own
/// repository, uniformly and without replacement.
///
/// Pool commits whose content matches a positive (or an earlier pool commit)
/// are ineligible. Draws are also without replacement across positives that
/// share a repository, so the output never contains a content key twice.
/// The returned dataset lists the positives first, then the negatives in
/// the order they were drawn.
pub fn sample_negatives(positives: &Dataset, pool: &[Commit], cfg: &SamplingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut taken: HashSet<ContentKey> = positives.items.iter().map(|item| item.commit.content_key()).collect();

    // Eligible pool per repository, in pool order.
    let mut by_repo: HashMap<&str, Vec<&Commit>> = HashMap::new();
    for commit in pool {
        if taken.insert(commit.content_key()) {
            by_repo.entry(commit.repo.as_str()).or_default().push(commit);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut negatives = Vec::new();
    let mut shortfalls = Vec::new();
    for positive in &positives.items {
        let repo = positive.commit.repo.as_str();
        let remaining = by_repo.entry(repo).or_default();
        let draws = cfg.k.min(remaining.len());
        for _ in 0..draws {
            let pick = rng.random_range(0..remaining.len());
            // Order-preserving removal keeps the draw sequence independent
            // of how earlier removals shuffled the tail.
            let commit = remaining.remove(pick);
            negatives.push(LabeledCommit::new(commit.clone(), Label::Negative, Provenance::Sampled));
        }
        if draws < cfg.k {
            shortfalls.push(json!({
                "positive": positive.commit.id,
                "repo": repo,
                "drawn": draws,
            }));
        }
    }

    let mut meta = positives.meta.clone();
    meta.insert(
        "sampling".into(),
        json!({
            "k": cfg.k,
            "seed": cfg.seed,
            "negatives": negatives.len(),
            "shortfalls": shortfalls,
        }),
    );
    let mut items = positives.items.clone();
    items.extend(negatives);
    Ok(Dataset { items, meta })
}

/// Why [`filter_outliers`] dropped an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RemovalReason {
    Empty,
    Undersize,
    Oversize,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::Empty => "empty",
            RemovalReason::Undersize => "undersize",
            RemovalReason::Oversize => "oversize",
        }
    }

    pub fn of(commit: &Commit, cfg: &SamplingConfig) -> Option<Self> {
        let size = commit.byte_size();
        if commit.message.is_empty() && commit.patch.is_empty() {
            Some(RemovalReason::Empty)
        } else if size < cfg.min_bytes {
            Some(RemovalReason::Undersize)
        } else if size > cfg.max_bytes {
            Some(RemovalReason::Oversize)
        } else {
            None
        }
    }
}

/// Drops empty commits and commits outside `[min_bytes, max_bytes]`.
pub fn filter_outliers(ds: Dataset, cfg: &SamplingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut removed: BTreeMap<&'static str, usize> =
        [RemovalReason::Empty, RemovalReason::Undersize, RemovalReason::Oversize]
            .into_iter()
            .map(|reason| (reason.as_str(), 0))
            .collect();

    let Dataset { items, mut meta } = ds;
    let items = items
        .into_iter()
        .filter(|item| match RemovalReason::of(&item.commit, cfg) {
            Some(reason) => {
                *removed.get_mut(reason.as_str()).unwrap() += 1;
                false
            }
            None => true,
        })
        .collect();
    meta.insert(
        "filtered".into(),
        json!({
            "min_bytes": cfg.min_bytes,
            "max_bytes": cfg.max_bytes,
            "removed": removed,
        }),
    );
    Ok(Dataset { items, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commit(id: &str, repo: &str, message: &str, patch: &str) -> Commit {
        Commit::new(id, repo, message, patch).unwrap()
    }

    fn positive(c: Commit) -> LabeledCommit {
        LabeledCommit::new(c, Label::Positive, Provenance::Curated)
    }

    fn pool(repo: &str, n: usize) -> Vec<Commit> {
        (0..n)
            .map(|i| commit(&format!("{repo}-n{i}"), repo, &format!("change {i}"), ""))
            .collect()
    }

    #[test]
    fn commit_invariants() {
        assert!(Commit::new("", "r", "m", "p").is_err());
        assert!(Commit::new("a", "", "m", "p").is_err());
        let c = commit("a", "r", "héllo", "+x\n");
        assert_eq!(c.byte_size(), "héllo".len() + 3);
    }

    #[test]
    fn content_key_ignores_identity() {
        let a = commit("A", "r1", "fix", "+x");
        let b = commit("B", "r2", "fix", "+x");
        assert_eq!(a.content_key(), b.content_key());
        assert_eq!(a.content_key().as_str().len(), 64);
        // The separator keeps the message/patch boundary significant.
        assert_ne!(ContentKey::of("ab", "c"), ContentKey::of("a", "bc"));
    }

    #[test]
    fn dedup_first_occurrence_wins() {
        let ds = dedup(vec![
            positive(commit("A", "r", "m", "p")),
            positive(commit("B", "r", "m", "p")),
        ]);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.items[0].commit.id, "A");
        assert_eq!(ds.meta["dedup_removed"], json!(1));
    }

    #[test]
    fn dedup_keeps_same_message_different_patch() {
        let ds = dedup(vec![
            positive(commit("A", "r", "m", "p1")),
            positive(commit("B", "r", "m", "p2")),
        ]);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.meta["dedup_removed"], json!(0));
    }

    #[test]
    fn sampling_draws_k_from_own_repo() {
        let positives = dedup(vec![positive(commit("p", "R", "fix cve", "+a"))]);
        let mut pool = pool("R", 10);
        pool.extend(self::pool("S", 10));
        // The positive itself sits in the pool and must never be drawn.
        pool.push(commit("p", "R", "fix cve", "+a"));
        let cfg = SamplingConfig {
            k: 5,
            seed: 7,
            ..Default::default()
        };
        let ds = sample_negatives(&positives, &pool, &cfg).unwrap();
        assert_eq!(ds.count(Label::Positive), 1);
        assert_eq!(ds.count(Label::Negative), 5);
        for item in ds.items.iter().filter(|i| i.label == Label::Negative) {
            assert_eq!(item.commit.repo, "R");
            assert_eq!(item.provenance, Provenance::Sampled);
            assert_ne!(item.commit.id, "p");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let positives = dedup(vec![
            positive(commit("p1", "R", "a", "")),
            positive(commit("p2", "R", "b", "")),
        ]);
        let pool = pool("R", 30);
        let cfg = SamplingConfig {
            seed: 42,
            ..Default::default()
        };
        let a = sample_negatives(&positives, &pool, &cfg).unwrap();
        let b = sample_negatives(&positives, &pool, &cfg).unwrap();
        assert_eq!(a, b);
        let other = sample_negatives(&positives, &pool, &SamplingConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.items, other.items);
    }

    #[test]
    fn sampling_shortfall_is_recorded_not_fatal() {
        let positives = dedup(vec![positive(commit("p", "lonely", "a", ""))]);
        let ds = sample_negatives(&positives, &pool("R", 10), &SamplingConfig::default()).unwrap();
        assert_eq!(ds.len(), 1);
        let shortfalls = ds.meta["sampling"]["shortfalls"].as_array().unwrap();
        assert_eq!(shortfalls.len(), 1);
        assert_eq!(shortfalls[0]["drawn"], json!(0));
    }

    #[test]
    fn sampling_rejects_bad_config() {
        let positives = Dataset::default();
        let cfg = SamplingConfig {
            k: 0,
            ..Default::default()
        };
        assert!(sample_negatives(&positives, &[], &cfg).is_err());
        let cfg = SamplingConfig {
            min_bytes: 10,
            max_bytes: 5,
            ..Default::default()
        };
        assert!(sample_negatives(&positives, &[], &cfg).is_err());
    }

    #[test]
    fn filter_removes_empty_and_oversize() {
        let items = vec![
            positive(commit("empty", "r", "", "")),
            positive(commit("big", "r", &"x".repeat(100), "")),
            positive(commit("ok", "r", "fine", "")),
        ];
        let ds = Dataset::new(items, Map::new()).unwrap();
        let cfg = SamplingConfig {
            max_bytes: 50,
            ..Default::default()
        };
        let out = filter_outliers(ds, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.items[0].commit.id, "ok");
        let removed = &out.meta["filtered"]["removed"];
        assert_eq!(removed["empty"], json!(1));
        assert_eq!(removed["oversize"], json!(1));
        assert_eq!(removed["undersize"], json!(0));
    }

    #[test]
    fn filter_identity_when_nothing_matches() {
        let items = vec![
            positive(commit("a", "r", "one", "")),
            positive(commit("b", "r", "two", "")),
        ];
        let ds = Dataset::new(items.clone(), Map::new()).unwrap();
        let out = filter_outliers(ds, &SamplingConfig::default()).unwrap();
        assert_eq!(out.items, items);
        let removed = out.meta["filtered"]["removed"].as_object().unwrap();
        assert!(removed.values().all(|v| v == &json!(0)));
    }

    #[test]
    fn dataset_rejects_duplicate_content() {
        let items = vec![positive(commit("a", "r", "m", "")), positive(commit("b", "s", "m", ""))];
        assert!(Dataset::new(items, Map::new()).is_err());
    }
}
