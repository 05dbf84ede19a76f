//! Seeded synthetic commit corpora with a known security signal.
//!
//! Positive commits draw a fixed share of their words from a security
//! lexicon; the rest, and every word of a negative commit, come from a
//! common lexicon. A slice of the security lexicon (the overlap
//! vocabulary) also shows up in negatives, so those words carry no label
//! information on their own. Labels are never flipped.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map};

use crate::corpus::{Commit, Dataset, Label, LabeledCommit, Provenance};
use crate::error::Result;

#[rustfmt::skip]
const SECURITY_LEXICON: &[&str] = &[
    "vulnerability", "injection", "overflow", "sanitize", "escape", "xss", "csrf", "exploit",
    "cve", "authentication", "authorization", "privilege", "traversal", "deserialization",
    "malicious", "attacker", "bypass", "unsafe", "leak", "credential", "password", "encrypt",
    "cipher", "hmac", "nonce", "forgery", "clickjacking", "redirect", "whitelist", "blacklist",
    "taint", "untrusted", "spoof", "hijack", "secret", "certificate", "tls", "sandbox",
    "permission", "denial",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub positives: usize,
    pub negatives: usize,
    /// Share of a positive commit's words drawn from the security lexicon.
    pub security_share: f64,
    /// Fraction of the security lexicon that negatives use too.
    pub overlap_fraction: f64,
    /// Share of a negative commit's words drawn from the overlap vocabulary.
    pub negative_overlap_share: f64,
    pub common_words: usize,
    pub repos: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            positives: 200,
            negatives: 1000,
            security_share: 0.30,
            overlap_fraction: 0.15,
            negative_overlap_share: 0.05,
            common_words: 600,
            repos: 8,
            seed: 0,
        }
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const ONSETS: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "pl", "gr",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    let syllables = rng.random_range(2..=3);
    let mut word = String::new();
    for _ in 0..syllables {
        word.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        word.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    word.push_str(["k", "m", "p", "t", "x"][rng.random_range(0..5)]);
    word
}

struct Lexicons {
    security: Vec<&'static str>,
    overlap: Vec<&'static str>,
    common: Vec<String>,
}

impl Lexicons {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let n_overlap = ((SECURITY_LEXICON.len() as f64) * cfg.overlap_fraction).round() as usize;
        let mut seen = HashSet::new();
        let mut common = Vec::with_capacity(cfg.common_words);
        while common.len() < cfg.common_words {
            let word = pseudo_word(rng);
            if seen.insert(word.clone()) {
                common.push(word);
            }
        }
        Lexicons {
            security: SECURITY_LEXICON.to_vec(),
            overlap: SECURITY_LEXICON[..n_overlap].to_vec(),
            common,
        }
    }

    fn word(&self, rng: &mut ChaCha8Rng, label: Label, cfg: &SynthConfig) -> String {
        let u: f64 = rng.random();
        let pick = |rng: &mut ChaCha8Rng, list: &[&str]| list[rng.random_range(0..list.len())].to_string();
        match label {
            Label::Positive if u < cfg.security_share => pick(rng, &self.security),
            Label::Negative if u < cfg.negative_overlap_share && !self.overlap.is_empty() => pick(rng, &self.overlap),
            _ => self.common[rng.random_range(0..self.common.len())].clone(),
        }
    }

    fn words(&self, rng: &mut ChaCha8Rng, n: usize, label: Label, cfg: &SynthConfig) -> Vec<String> {
        (0..n).map(|_| self.word(rng, label, cfg)).collect()
    }
}

fn message(lex: &Lexicons, rng: &mut ChaCha8Rng, label: Label, cfg: &SynthConfig) -> String {
    let n = rng.random_range(5..=12);
    let mut words = lex.words(rng, n, label, cfg);
    if let Some(first) = words.first_mut() {
        let mut chars = first.chars();
        if let Some(c) = chars.next() {
            *first = c.to_ascii_uppercase().to_string() + chars.as_str();
        }
    }
    words.join(" ") + "."
}

/// A code-like line; identifiers are camelCase joins of two words.
fn code_line(words: &[String]) -> String {
    let mut parts = Vec::new();
    for chunk in words.chunks(2) {
        if chunk.len() == 2 {
            let mut second = chunk[1].clone();
            second[..1].make_ascii_uppercase();
            parts.push(format!("{}{}", chunk[0], second));
        } else {
            parts.push(chunk[0].clone());
        }
    }
    format!("    {}({});", parts[0], parts[1..].join(", "))
}

fn patch(lex: &Lexicons, rng: &mut ChaCha8Rng, label: Label, cfg: &SynthConfig) -> String {
    let file = format!("src/{}.c", lex.common[rng.random_range(0..lex.common.len())]);
    let mut out = format!("diff --git a/{file} b/{file}\n--- a/{file}\n+++ b/{file}\n");
    let hunks = rng.random_range(1..=2);
    let mut start = rng.random_range(1..200);
    for _ in 0..hunks {
        let removed = rng.random_range(0..=2);
        let added = rng.random_range(1..=3);
        out.push_str(&format!("@@ -{start},{} +{start},{} @@\n", removed + 2, added + 2));
        // Context lines only ever use common words.
        let context = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(2..=4);
            code_line(&lex.words(
                rng,
                n,
                Label::Negative,
                &SynthConfig {
                    negative_overlap_share: 0.0,
                    ..cfg.clone()
                },
            ))
        };
        out.push_str(&format!(" {}\n", context(rng)));
        for _ in 0..removed {
            let n = rng.random_range(2..=5);
            out.push_str(&format!("-{}\n", code_line(&lex.words(rng, n, label, cfg))));
        }
        for _ in 0..added {
            let n = rng.random_range(2..=5);
            out.push_str(&format!("+{}\n", code_line(&lex.words(rng, n, label, cfg))));
        }
        out.push_str(&format!(" {}\n", context(rng)));
        start += rng.random_range(20..80);
    }
    out
}

/// Generates `cfg.positives` positives followed by `cfg.negatives`
/// negatives, all with distinct content.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lex = Lexicons::new(cfg, &mut rng);
    let mut items = Vec::with_capacity(cfg.positives + cfg.negatives);
    let mut keys = HashSet::new();
    let plan =
        std::iter::repeat_n(Label::Positive, cfg.positives).chain(std::iter::repeat_n(Label::Negative, cfg.negatives));
    for (n, label) in plan.enumerate() {
        let commit = loop {
            let id = format!("{:040x}", rng.random::<u128>() ^ n as u128);
            let repo = format!("synth{}", rng.random_range(0..cfg.repos.max(1)));
            let msg = message(&lex, &mut rng, label, cfg);
            let diff = patch(&lex, &mut rng, label, cfg);
            let commit = Commit::new(id, repo, msg, diff)?;
            if keys.insert(commit.content_key()) {
                break commit;
            }
        };
        items.push(LabeledCommit::new(commit, label, Provenance::Imported));
    }
    let mut meta = Map::new();
    meta.insert(
        "synthetic".into(),
        json!({
            "positives": cfg.positives,
            "negatives": cfg.negatives,
            "security_share": cfg.security_share,
            "overlap_fraction": cfg.overlap_fraction,
            "negative_overlap_share": cfg.negative_overlap_share,
            "common_words": cfg.common_words,
            "repos": cfg.repos,
            "seed": cfg.seed,
        }),
    );
    Dataset::new(items, meta)
}
