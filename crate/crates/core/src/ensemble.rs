//! The commit classifier: independent message and patch models combined by
//! a union vote (a commit is flagged when either channel flags it).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{Commit, Dataset, Label};
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, vectorize, SparseVector, VocabParams, Vocabulary};
use crate::svm::{self, LinearModel, Normalized, TrainConfig};
use crate::textprep::{tokenize, Channel, PrepConfig, TokenDoc};

pub const MODEL_FORMAT_VERSION: u64 = 1;

/// Everything that determines a trained classifier besides the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub prep: PrepConfig,
    pub vocab: VocabParams,
    pub train: TrainConfig,
    /// Per-channel overrides of `train.w_p`.
    #[serde(default)]
    pub msg_w_p: Option<f64>,
    #[serde(default)]
    pub patch_w_p: Option<f64>,
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        self.prep.validate()?;
        self.vocab.validate()?;
        self.channel_config(Channel::Msg).validate()?;
        self.channel_config(Channel::Patch).validate()
    }

    pub fn channel_config(&self, channel: Channel) -> TrainConfig {
        let w_p = match channel {
            Channel::Msg => self.msg_w_p,
            Channel::Patch => self.patch_w_p,
        };
        self.train.with_w_p(w_p.unwrap_or(self.train.w_p))
    }

    /// Same parameters, shared weight moved to `w_p` (overrides cleared).
    pub fn at_weight(&self, w_p: f64) -> Self {
        ClassifierParams {
            train: self.train.with_w_p(w_p),
            msg_w_p: None,
            patch_w_p: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let encoded = serde_json::to_vec(self).expect("params serialize");
        hex::encode(Sha256::digest(&encoded))
    }
}

/// One channel's frozen vocabulary and linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub vocab: Vocabulary,
    pub model: LinearModel,
}

pub(crate) fn fit_rows(
    rows: &[SparseVector],
    labels: &[Label],
    l2_normalize: bool,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    if l2_normalize {
        let scaled: Vec<Normalized> = rows.iter().map(Normalized).collect();
        svm::train(&scaled, labels, cfg)
    } else {
        svm::train(rows, labels, cfg)
    }
}

pub(crate) fn score_row(model: &LinearModel, row: &SparseVector, l2_normalize: bool) -> f64 {
    let score = if l2_normalize {
        svm::decision(model, &Normalized(row))
    } else {
        svm::decision(model, row)
    };
    score.expect("row vectorized against the model's own vocabulary")
}

impl ChannelModel {
    /// Builds the vocabulary from `docs` and trains on their count vectors.
    pub fn fit(docs: &[TokenDoc], labels: &[Label], vocab: &VocabParams, cfg: &TrainConfig) -> Result<Self> {
        let vocabulary = build_vocabulary(docs, vocab.min_df, vocab.max_size)?;
        let rows: Vec<SparseVector> = docs.iter().map(|d| vectorize(d, &vocabulary)).collect();
        let model = fit_rows(&rows, labels, vocab.l2_normalize, cfg)?.with_vocab_fingerprint(vocabulary.fingerprint());
        Ok(ChannelModel {
            vocab: vocabulary,
            model,
        })
    }

    pub fn score(&self, doc: &TokenDoc, l2_normalize: bool) -> f64 {
        score_row(&self.model, &vectorize(doc, &self.vocab), l2_normalize)
    }
}

/// Channel scores and labels for one commit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub msg_score: f64,
    pub patch_score: f64,
    pub msg_label: Label,
    pub patch_label: Label,
    pub joint_label: Label,
}

impl Prediction {
    pub fn from_scores(msg_score: f64, patch_score: f64) -> Self {
        let msg_label = svm::label_of_score(msg_score);
        let patch_label = svm::label_of_score(patch_score);
        Prediction {
            msg_score,
            patch_score,
            msg_label,
            patch_label,
            joint_label: union_vote(msg_label, patch_label),
        }
    }
}

pub fn union_vote(msg: Label, patch: Label) -> Label {
    if msg.is_positive() || patch.is_positive() {
        Label::Positive
    } else {
        Label::Negative
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommitClassifier {
    pub msg: ChannelModel,
    pub patch: ChannelModel,
    pub params: ClassifierParams,
    pub warnings: Vec<String>,
    /// Free-form provenance stored with the model (`meta.run`).
    pub run: Map<String, Value>,
}

fn channel_text(commit: &Commit, channel: Channel) -> &str {
    match channel {
        Channel::Msg => &commit.message,
        Channel::Patch => &commit.patch,
    }
}

/// Tokenizes one channel of every commit.
pub fn tokenize_channel<'a>(
    commits: impl IntoIterator<Item = &'a Commit>,
    channel: Channel,
    prep: &PrepConfig,
) -> Vec<TokenDoc> {
    commits
        .into_iter()
        .map(|c| tokenize(channel, channel_text(c, channel), prep))
        .collect()
}

/// Trains the message and patch models on `ds`. The channels share the
/// parameters but nothing else.
pub fn train_commit_classifier(ds: &Dataset, params: &ClassifierParams) -> Result<CommitClassifier> {
    params.validate()?;
    let labels = ds.labels();
    let mut warnings = Vec::new();
    let mut fit = |channel: Channel| -> Result<ChannelModel> {
        let docs = tokenize_channel(ds.commits(), channel, &params.prep);
        let fitted = ChannelModel::fit(&docs, &labels, &params.vocab, &params.channel_config(channel))?;
        if fitted.vocab.is_empty() {
            let name = channel_name(channel);
            warn!("{name} vocabulary is empty; the {name} model scores every commit with its bias");
            warnings.push(format!("{name}: empty vocabulary, degenerate model"));
        }
        Ok(fitted)
    };
    let msg = fit(Channel::Msg)?;
    let patch = fit(Channel::Patch)?;
    Ok(CommitClassifier {
        msg,
        patch,
        params: params.clone(),
        warnings,
        run: Map::new(),
    })
}

fn channel_name(channel: Channel) -> &'static str {
    match channel {
        Channel::Msg => "msg",
        Channel::Patch => "patch",
    }
}

impl CommitClassifier {
    pub fn classify(&self, commit: &Commit) -> Prediction {
        let l2 = self.params.vocab.l2_normalize;
        let prep = &self.params.prep;
        let msg_doc = tokenize(Channel::Msg, &commit.message, prep);
        let patch_doc = tokenize(Channel::Patch, &commit.patch, prep);
        Prediction::from_scores(self.msg.score(&msg_doc, l2), self.patch.score(&patch_doc, l2))
    }

    pub fn to_json(&self) -> Value {
        let channel = |c: &ChannelModel| {
            json!({
                "vocab": c.vocab.tokens(),
                "vocab_fingerprint": c.vocab.fingerprint(),
                "weights": c.model.weights(),
                "bias": c.model.bias(),
            })
        };
        json!({
            "format_version": MODEL_FORMAT_VERSION,
            "prep": self.params.prep,
            "msg": channel(&self.msg),
            "patch": channel(&self.patch),
            "meta": {
                "vocab_params": self.params.vocab,
                "train": self.params.train,
                "msg_w_p": self.params.msg_w_p,
                "patch_w_p": self.params.patch_w_p,
                "params_fingerprint": self.params.fingerprint(),
                "warnings": self.warnings,
                "run": self.run,
            },
        })
    }

    pub fn from_json(doc: &Value) -> Result<Self> {
        let section_err = |section: &str, reason: String| Error::Model {
            section: section.to_string(),
            reason,
        };
        let field = |section: &str| -> Result<&Value> {
            doc.get(section).ok_or_else(|| section_err(section, "missing".into()))
        };

        let version = field("format_version")?
            .as_u64()
            .ok_or_else(|| section_err("format_version", "not an integer".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }

        fn parse<T: serde::de::DeserializeOwned>(value: &Value, section: &str) -> Result<T> {
            serde_json::from_value(value.clone()).map_err(|e| Error::Model {
                section: section.to_string(),
                reason: e.to_string(),
            })
        }

        let prep: PrepConfig = parse(field("prep")?, "prep")?;
        let meta = field("meta")?;
        let sub = |key: &str| -> Result<&Value> {
            meta.get(key)
                .ok_or_else(|| section_err(&format!("meta.{key}"), "missing".into()))
        };
        let vocab_params: VocabParams = parse(sub("vocab_params")?, "meta.vocab_params")?;
        let train: TrainConfig = parse(sub("train")?, "meta.train")?;
        let msg_w_p: Option<f64> = parse(sub("msg_w_p")?, "meta.msg_w_p")?;
        let patch_w_p: Option<f64> = parse(sub("patch_w_p")?, "meta.patch_w_p")?;
        let warnings: Vec<String> = match meta.get("warnings") {
            Some(v) => parse(v, "meta.warnings")?,
            None => Vec::new(),
        };
        let run: Map<String, Value> = match meta.get("run") {
            Some(v) => parse(v, "meta.run")?,
            None => Map::new(),
        };
        let params = ClassifierParams {
            prep,
            vocab: vocab_params,
            train,
            msg_w_p,
            patch_w_p,
        };
        params.validate().map_err(|e| section_err("meta", e.to_string()))?;

        let load_channel = |channel: Channel| -> Result<ChannelModel> {
            let name = channel_name(channel);
            let section = field(name)?;
            let part = |key: &str| -> Result<&Value> {
                section
                    .get(key)
                    .ok_or_else(|| section_err(&format!("{name}.{key}"), "missing".into()))
            };
            let vocab_section = format!("{name}.vocab");
            let tokens: Vec<String> = parse(part("vocab")?, &vocab_section)?;
            let vocab =
                Vocabulary::from_sorted_tokens(tokens).map_err(|e| section_err(&vocab_section, e.to_string()))?;
            let expected: String = parse(part("vocab_fingerprint")?, &format!("{name}.vocab_fingerprint"))?;
            if vocab.fingerprint() != expected {
                return Err(section_err(
                    &vocab_section,
                    "fingerprint mismatch: vocabulary does not match the one the model was trained with".into(),
                ));
            }
            let weights: Vec<f64> = parse(part("weights")?, &format!("{name}.weights"))?;
            if weights.len() != vocab.len() {
                return Err(section_err(
                    &format!("{name}.weights"),
                    format!("{} weights for a vocabulary of {}", weights.len(), vocab.len()),
                ));
            }
            let bias: f64 = parse(part("bias")?, &format!("{name}.bias"))?;
            let model = LinearModel::new(weights, bias, params.channel_config(channel), expected)
                .map_err(|e| section_err(name, e.to_string()))?;
            Ok(ChannelModel { vocab, model })
        };

        Ok(CommitClassifier {
            msg: load_channel(Channel::Msg)?,
            patch: load_channel(Channel::Patch)?,
            params,
            warnings,
            run,
        })
    }
}

pub fn save_classifier(classifier: &CommitClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &classifier.to_json()).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<CommitClassifier> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    CommitClassifier::from_json(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledCommit, Provenance};

    fn ds(rows: &[(&str, &str, Label)]) -> Dataset {
        let items = rows
            .iter()
            .enumerate()
            .map(|(i, (m, p, l))| {
                LabeledCommit::new(
                    Commit::new(format!("c{i}"), "r", *m, *p).unwrap(),
                    *l,
                    Provenance::Curated,
                )
            })
            .collect();
        Dataset::new(items, Default::default()).unwrap()
    }

    fn params() -> ClassifierParams {
        ClassifierParams {
            vocab: VocabParams {
                min_df: 1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn union_rule() {
        use Label::*;
        assert_eq!(union_vote(Positive, Negative), Positive);
        assert_eq!(union_vote(Negative, Positive), Positive);
        assert_eq!(union_vote(Positive, Positive), Positive);
        assert_eq!(union_vote(Negative, Negative), Negative);
        let p = Prediction::from_scores(0.0, 2.0);
        assert_eq!(
            (p.msg_label, p.patch_label, p.joint_label),
            (Negative, Positive, Positive)
        );
    }

    #[test]
    fn per_channel_weight_overrides() {
        let p = ClassifierParams {
            msg_w_p: Some(0.9),
            ..Default::default()
        };
        assert_eq!(p.channel_config(Channel::Msg).w_p, 0.9);
        assert_eq!(p.channel_config(Channel::Patch).w_p, 0.5);
        assert!(ClassifierParams {
            patch_w_p: Some(1.2),
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn empty_patch_channel_is_degenerate_with_warning() {
        use Label::*;
        let data = ds(&[
            ("fix vuln in auth", "", Positive),
            ("vuln escape html", "", Positive),
            ("update readme docs", "", Negative),
            ("bump version number", "", Negative),
            ("refactor build script", "", Negative),
        ]);
        let clf = train_commit_classifier(&data, &params()).unwrap();
        assert!(clf.patch.vocab.is_empty());
        assert_eq!(clf.warnings.len(), 1);
        for item in &data.items {
            let p = clf.classify(&item.commit);
            assert_eq!(p.patch_score, clf.patch.model.bias());
        }
    }

    #[test]
    fn corrupted_vocab_names_section() {
        use Label::*;
        let data = ds(&[
            ("fix vuln", "@@ -1 +1 @@\n+sanitize input\n", Positive),
            ("docs update", "@@ -1 +1 @@\n+readme text\n", Negative),
        ]);
        let clf = train_commit_classifier(&data, &params()).unwrap();
        let mut doc = clf.to_json();
        doc["patch"]["vocab"][0] = json!("aaaa");
        match CommitClassifier::from_json(&doc) {
            Err(Error::Model { section, .. }) => assert_eq!(section, "patch.vocab"),
            other => panic!("unexpected {other:?}"),
        }
        let mut doc = clf.to_json();
        doc["format_version"] = json!(2);
        assert!(matches!(CommitClassifier::from_json(&doc), Err(Error::Version { .. })));
        let mut doc = clf.to_json();
        doc["msg"]["weights"].as_array_mut().unwrap().pop();
        assert!(matches!(CommitClassifier::from_json(&doc), Err(Error::Model { .. })));
        let back = CommitClassifier::from_json(&clf.to_json()).unwrap();
        assert_eq!(back, clf);
    }
}
