//! Property tests for the invariants of each module.

use std::collections::HashSet;

use proptest::prelude::*;
use serde_json::Map;

use commitsift::corpus::{dedup, sample_negatives, ContentKey};
use commitsift::eval::{precision_recall, stratified_folds};
use commitsift::features::{build_vocabulary, vectorize, SparseVector};
use commitsift::svm::{train_with_history, TrainConfig};
use commitsift::textprep::{split_composite, tokenize_patch, Channel, PrepConfig, TokenDoc};
use commitsift::{Commit, Dataset, Label, LabeledCommit, Provenance, SamplingConfig};

fn commit(id: usize, repo: &str, message: &str, patch: &str) -> Commit {
    Commit::new(format!("c{id}"), repo, message, patch).unwrap()
}

fn labeled_commits() -> impl Strategy<Value = Vec<LabeledCommit>> {
    prop::collection::vec(("[ab]{0,2}", "[xy]{0,2}", any::<bool>()), 0..30).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (m, p, pos))| {
                let label = if pos { Label::Positive } else { Label::Negative };
                LabeledCommit::new(commit(i, "r", &m, &p), label, Provenance::Curated)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn dedup_is_idempotent(items in labeled_commits()) {
        let once = dedup(items);
        let twice = dedup(once.items.clone());
        prop_assert_eq!(&once.items, &twice.items);
        let keys: HashSet<_> = once.items.iter().map(|i| i.commit.content_key()).collect();
        prop_assert_eq!(keys.len(), once.len());
    }

    #[test]
    fn content_key_ignores_identity(m in ".{0,20}", p in ".{0,40}", a in 0usize..100, b in 0usize..100) {
        prop_assert_eq!(commit(a, "r1", &m, &p).content_key(), commit(b, "r2", &m, &p).content_key());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// A one-byte change anywhere in the patch changes the key.
    #[test]
    fn content_key_detects_single_byte_mutations(
        message in "[ -~]{0,30}",
        patch in "[ -~\n]{1,200}",
        pos in any::<prop::sample::Index>(),
        delta in 1u8..95,
    ) {
        let mut bytes = patch.clone().into_bytes();
        let i = pos.index(bytes.len());
        // Map printable ASCII and newline onto 0..96, shift, map back.
        let code = |b: u8| if b == b'\n' { 95 } else { b - b' ' };
        let shifted = (code(bytes[i]) + delta) % 96;
        bytes[i] = if shifted == 95 { b'\n' } else { shifted + b' ' };
        let mutated = String::from_utf8(bytes).unwrap();
        prop_assert_ne!(&mutated, &patch);
        prop_assert_ne!(ContentKey::of(&message, &patch), ContentKey::of(&message, &mutated));
    }
}

fn sampling_case() -> impl Strategy<Value = (Vec<(usize, usize)>, usize, u64)> {
    // Per repo: (positives, pool size); k; seed.
    (
        prop::collection::vec((0usize..4, 0usize..25), 1..5),
        1usize..6,
        any::<u64>(),
    )
}

fn build_sampling(repos: &[(usize, usize)]) -> (Dataset, Vec<Commit>) {
    let mut positives = Vec::new();
    let mut pool = Vec::new();
    let mut n = 0;
    for (r, &(n_pos, n_pool)) in repos.iter().enumerate() {
        let repo = format!("repo{r}");
        for i in 0..n_pos {
            let c = commit(n, &repo, &format!("fix {r} {i}"), "");
            n += 1;
            // Positives also sit in the pool, as they do in a mined history.
            pool.push(c.clone());
            positives.push(LabeledCommit::new(c, Label::Positive, Provenance::Curated));
        }
        for i in 0..n_pool {
            pool.push(commit(n, &repo, &format!("change {r} {i}"), ""));
            n += 1;
        }
    }
    (Dataset::new(positives, Map::new()).unwrap(), pool)
}

proptest! {
    #[test]
    fn sampling_accounting_locality_and_determinism((repos, k, seed) in sampling_case()) {
        let (positives, pool) = build_sampling(&repos);
        let cfg = SamplingConfig { k, seed, ..SamplingConfig::default() };
        let out = sample_negatives(&positives, &pool, &cfg).unwrap();
        let negatives: Vec<&LabeledCommit> = out.items.iter().filter(|i| i.label == Label::Negative).collect();

        prop_assert!(negatives.len() <= k * positives.len());
        let ample = repos.iter().all(|&(p, pool)| pool >= k * p);
        if ample {
            prop_assert_eq!(negatives.len(), k * positives.len());
        }
        let positive_repos: HashSet<&str> = positives.items.iter().map(|i| i.commit.repo.as_str()).collect();
        for n in &negatives {
            prop_assert!(positive_repos.contains(n.commit.repo.as_str()));
            prop_assert_eq!(n.provenance, Provenance::Sampled);
        }
        let keys: HashSet<_> = out.items.iter().map(|i| i.commit.content_key()).collect();
        prop_assert_eq!(keys.len(), out.len());
        prop_assert_eq!(&out, &sample_negatives(&positives, &pool, &cfg).unwrap());
    }
}

proptest! {
    #[test]
    fn composite_parts_are_fixed_points(token in "[A-Za-z0-9_]{1,30}") {
        for part in split_composite(&token) {
            prop_assert!(!part.is_empty());
            prop_assert_eq!(split_composite(&part), vec![part.clone()]);
        }
    }

    /// Words that only occur on context lines never reach the tokens.
    #[test]
    fn context_lines_are_excluded(
        context in prop::collection::vec("q[a-z]{3,8}", 1..6),
        changed in prop::collection::vec("z[a-z]{3,8}", 1..6),
    ) {
        let mut patch = format!("@@ -1,{} +1,{} @@\n", context.len() + changed.len(), context.len());
        for word in &context {
            patch.push_str(&format!(" {word}\n"));
        }
        for word in &changed {
            patch.push_str(&format!("-{word}\n"));
        }
        let cfg = PrepConfig { stem: false, ..PrepConfig::default() };
        let doc = tokenize_patch(&patch, &cfg);
        prop_assert_eq!(doc.tokens(), changed.as_slice());
    }
}

fn token_docs() -> impl Strategy<Value = Vec<TokenDoc>> {
    prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 0..8), 0..12).prop_map(|docs| {
        docs.into_iter()
            .map(|t| TokenDoc::new(Channel::Msg, t).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn vocabulary_ignores_document_order(docs in token_docs(), min_df in 1usize..3, max_size in 1usize..20, seed in any::<u64>()) {
        let mut shuffled = docs.clone();
        let n = shuffled.len();
        if n > 1 {
            for i in 0..n {
                let j = (seed as usize).wrapping_add(i * 7919) % n;
                shuffled.swap(i, j);
            }
        }
        let a = build_vocabulary(&docs, min_df, max_size).unwrap();
        let b = build_vocabulary(&shuffled, min_df, max_size).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.len() <= max_size);
        for doc in &docs {
            let x = vectorize(doc, &a);
            let in_vocab = doc.tokens().iter().filter(|t| a.index_of(t).is_some()).count() as u64;
            prop_assert_eq!(x.total(), in_vocab);
        }
    }
}

fn training_set() -> impl Strategy<Value = (Vec<SparseVector>, Vec<Label>)> {
    prop::collection::vec((prop::collection::vec(0u32..4, 3), any::<bool>()), 4..25)
        .prop_filter("both classes", |rows| {
            rows.iter().any(|r| r.1) && rows.iter().any(|r| !r.1)
        })
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(x, pos)| {
                    (
                        SparseVector::from_dense(&x),
                        if pos { Label::Positive } else { Label::Negative },
                    )
                })
                .unzip()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_never_increases((x, y) in training_set(), w_p in 0.05f64..0.95, c in 0.1f64..5.0, seed in any::<u64>()) {
        let cfg = TrainConfig { w_p, c, seed, ..TrainConfig::default() };
        let (_, history) = train_with_history(&x, &y, &cfg).unwrap();
        prop_assert!(history.len() >= 2);
        for pair in history.windows(2) {
            prop_assert!(pair[1] <= pair[0], "{:?}", history);
        }
    }

    #[test]
    fn folds_partition_and_stratify(n_pos in 3usize..30, n_neg in 3usize..60, n_folds in 2usize..4, seed in any::<u64>()) {
        let items = (0..n_pos + n_neg)
            .map(|i| {
                let label = if i < n_pos { Label::Positive } else { Label::Negative };
                LabeledCommit::new(commit(i, "r", &format!("m{i}"), ""), label, Provenance::Curated)
            })
            .collect();
        let ds = Dataset::new(items, Map::new()).unwrap();
        let folds = stratified_folds(&ds, n_folds, seed).unwrap();
        let mut seen = vec![0; ds.len()];
        for f in 0..n_folds {
            for i in folds.test_indices(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let per_fold: Vec<usize> = (0..n_folds)
            .map(|f| folds.test_indices(f).into_iter().filter(|&i| i < n_pos).count())
            .collect();
        prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
    }

    #[test]
    fn union_recall_dominates(rows in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..60)) {
        let label = |b: bool| if b { Label::Positive } else { Label::Negative };
        let truth: Vec<Label> = rows.iter().map(|r| label(r.0)).collect();
        let msg: Vec<Label> = rows.iter().map(|r| label(r.1)).collect();
        let patch: Vec<Label> = rows.iter().map(|r| label(r.2)).collect();
        let joint: Vec<Label> = rows.iter().map(|r| label(r.1 || r.2)).collect();
        let (m, p, j) = (
            precision_recall(&msg, &truth).unwrap(),
            precision_recall(&patch, &truth).unwrap(),
            precision_recall(&joint, &truth).unwrap(),
        );
        prop_assert_eq!(j.total(), rows.len());
        if let (Some(rm), Some(rp), Some(rj)) = (m.recall, p.recall, j.recall) {
            prop_assert!(rj >= rm.max(rp));
        }
    }
}
