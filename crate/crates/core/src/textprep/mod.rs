//! Reduction of log messages and patches to token documents.
//!
//! Both channels share one pipeline:
//!
//! 1. split on every character that is not ASCII alphanumeric,
//! 2. split composite identifiers (camelCase, snake_case, letter/digit runs),
//! 3. lowercase,
//! 4. drop tokens shorter than `min_token_len`,
//! 5. drop stopwords,
//! 6. Porter-stem,
//! 7. truncate to `max_tokens_per_doc`.
//!
//! Composite splitting runs before lowercasing because it needs the case
//! boundaries; with splitting disabled the result equals lowercasing first.
//! The patch channel first keeps only changed lines.

mod porter;
mod split;
pub mod stopwords;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem as porter_stem;
pub use split::split_composite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Msg,
    Patch,
}

/// Lowercase `[a-z0-9]+` tokens from one channel of a commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDoc {
    channel: Channel,
    tokens: Vec<String>,
}

impl TokenDoc {
    /// Fails if any token is empty or outside `[a-z0-9]`.
    pub fn new(channel: Channel, tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || !t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
        {
            return Err(Error::Config(format!("invalid token {bad:?}")));
        }
        Ok(TokenDoc { channel, tokens })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub stopwords: BTreeSet<String>,
    pub stem: bool,
    pub split_composites: bool,
    pub min_token_len: usize,
    pub max_tokens_per_doc: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            stopwords: stopwords::english(),
            stem: true,
            split_composites: true,
            min_token_len: 2,
            max_tokens_per_doc: 50_000,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_len == 0 {
            return Err(Error::Config("min_token_len must be at least 1".into()));
        }
        if self.max_tokens_per_doc == 0 {
            return Err(Error::Config("max_tokens_per_doc must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stems alphabetic tokens with the Porter algorithm; tokens containing
/// digits pass through.
pub fn stem(token: &str) -> String {
    if token.bytes().all(|b| b.is_ascii_lowercase()) {
        porter::stem(token)
    } else {
        token.to_string()
    }
}

fn run_pipeline(text: &str, cfg: &PrepConfig) -> Vec<String> {
    let mut out = Vec::new();
    let pieces = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|p| !p.is_empty());
    for piece in pieces {
        let parts = if cfg.split_composites {
            split_composite(piece)
        } else {
            vec![piece.to_ascii_lowercase()]
        };
        for part in parts {
            if part.len() < cfg.min_token_len || cfg.stopwords.contains(&part) {
                continue;
            }
            let token = if cfg.stem { stem(&part) } else { part };
            if token.is_empty() {
                continue;
            }
            out.push(token);
            if out.len() >= cfg.max_tokens_per_doc {
                return out;
            }
        }
    }
    out
}

pub fn tokenize_message(message: &str, cfg: &PrepConfig) -> TokenDoc {
    TokenDoc {
        channel: Channel::Msg,
        tokens: run_pipeline(message, cfg),
    }
}

static MALFORMED_DIFFS: AtomicU64 = AtomicU64::new(0);

/// Number of non-empty patches [`tokenize_patch`] has rejected as not being
/// a unified diff, process-wide.
pub fn malformed_diff_count() -> u64 {
    MALFORMED_DIFFS.load(Ordering::Relaxed)
}

/// Output of [`changed_lines`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChangedLines<'a> {
    pub lines: Vec<&'a str>,
    /// Non-empty text without any diff header (`diff `, `--- `, `+++ `,
    /// `@@`). Such text contributes no lines.
    pub malformed: bool,
}

fn is_header(line: &str) -> bool {
    line.starts_with("@@") || line.starts_with("diff ") || line.starts_with("--- ") || line.starts_with("+++ ")
}

/// Old and new line counts of a hunk header `@@ -a[,b] +c[,d] @@`.
fn hunk_counts(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.strip_prefix("@@ ")?.split(' ');
    let count = |field: Option<&str>, sign: char| -> Option<usize> {
        let range = field?.strip_prefix(sign)?;
        match range.split_once(',') {
            Some((start, n)) => {
                start.parse::<usize>().ok()?;
                n.parse().ok()
            }
            None => range.parse::<usize>().ok().map(|_| 1),
        }
    };
    Some((count(fields.next(), '-')?, count(fields.next(), '+')?))
}

/// Changed lines of a unified diff with their `+`/`-` marker stripped.
///
/// Hunk bodies are delimited by the line counts in their `@@` headers, so a
/// removed line reading `-- comment` is kept while the `---`/`+++` file
/// headers between hunks are not. Context lines, `\ No newline` markers and
/// everything outside hunks are dropped.
pub fn changed_lines(patch: &str) -> ChangedLines<'_> {
    if patch.trim().is_empty() {
        return ChangedLines::default();
    }
    if !patch.lines().any(is_header) {
        return ChangedLines {
            lines: Vec::new(),
            malformed: true,
        };
    }
    let mut lines = Vec::new();
    let (mut old_left, mut new_left) = (0usize, 0usize);
    for line in patch.lines() {
        if old_left > 0 || new_left > 0 {
            match line.as_bytes().first() {
                Some(b'+') => {
                    new_left = new_left.saturating_sub(1);
                    lines.push(&line[1..]);
                    continue;
                }
                Some(b'-') => {
                    old_left = old_left.saturating_sub(1);
                    lines.push(&line[1..]);
                    continue;
                }
                Some(b' ') | None => {
                    old_left = old_left.saturating_sub(1);
                    new_left = new_left.saturating_sub(1);
                    continue;
                }
                Some(b'\\') => continue,
                // A hunk shorter than its header claims.
                _ => (old_left, new_left) = (0, 0),
            }
        }
        if line.starts_with("@@") {
            // Unparseable counts: treat the hunk as running to the next
            // line that cannot belong to one.
            (old_left, new_left) = hunk_counts(line).unwrap_or((usize::MAX, usize::MAX));
        }
    }
    ChangedLines {
        lines,
        malformed: false,
    }
}

pub fn tokenize_patch(patch: &str, cfg: &PrepConfig) -> TokenDoc {
    let changed = changed_lines(patch);
    if changed.malformed {
        MALFORMED_DIFFS.fetch_add(1, Ordering::Relaxed);
    }
    TokenDoc {
        channel: Channel::Patch,
        tokens: run_pipeline(&changed.lines.join("\n"), cfg),
    }
}

pub fn tokenize(channel: Channel, text: &str, cfg: &PrepConfig) -> TokenDoc {
    match channel {
        Channel::Msg => tokenize_message(text, cfg),
        Channel::Patch => tokenize_patch(text, cfg),
    }
}
