//! Stratified cross-validation, precision/recall, weight sweeps and report
//! files.
//!
//! Cross-validated metrics are pooled: predictions from every test fold are
//! collected and a single confusion matrix is computed per model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Label};
use crate::ensemble::{fit_rows, score_row, tokenize_channel, train_commit_classifier, ClassifierParams, Prediction};
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, vectorize, SparseVector, Vocabulary};
use crate::textprep::{Channel, TokenDoc};

/// Test-fold number of every dataset index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    n_folds: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// SHA-256 over the fold count and the fold of every index.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_folds as u64).to_le_bytes());
        for &f in &self.fold_of {
            hasher.update((f as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Shuffles each class with a generator seeded by `seed`, then deals
/// positives round-robin from fold 0 and negatives round-robin starting
/// where the positives stopped, which also balances total fold sizes.
pub fn stratified_folds(ds: &Dataset, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::Folds(format!("need at least 2 folds, got {n_folds}")));
    }
    let labels = ds.labels();
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    for (name, class) in [("positive", &positives), ("negative", &negatives)] {
        if class.len() < n_folds {
            return Err(Error::Folds(format!(
                "{} {name} items cannot fill {n_folds} folds",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut fold_of = vec![0; labels.len()];
    for (k, &i) in positives.iter().enumerate() {
        fold_of[i] = k % n_folds;
    }
    let offset = positives.len() % n_folds;
    for (k, &i) in negatives.iter().enumerate() {
        fold_of[i] = (offset + k) % n_folds;
    }
    Ok(FoldAssignment { fold_of, n_folds, seed })
}

/// Confusion counts of one model plus the derived rates. A rate whose
/// denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl ModelMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        ModelMetrics {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn precision_recall(predictions: &[Label], truth: &[Label]) -> Result<ModelMetrics> {
    if predictions.len() != truth.len() {
        return Err(Error::Length {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in predictions.iter().zip(truth) {
        match (p.is_positive(), t.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ModelMetrics::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub w_p: f64,
    pub config_fingerprint: String,
    /// Absent for train/test evaluations.
    pub fold_digest: Option<String>,
    pub seed: u64,
    pub msg: ModelMetrics,
    pub patch: ModelMetrics,
    pub joint: ModelMetrics,
}

impl MetricsReport {
    fn from_predictions(
        predictions: &[Prediction],
        truth: &[Label],
        w_p: f64,
        config_fingerprint: String,
        fold_digest: Option<String>,
        seed: u64,
    ) -> Result<Self> {
        let column = |f: fn(&Prediction) -> Label| predictions.iter().map(f).collect::<Vec<_>>();
        Ok(MetricsReport {
            w_p,
            config_fingerprint,
            fold_digest,
            seed,
            msg: precision_recall(&column(|p| p.msg_label), truth)?,
            patch: precision_recall(&column(|p| p.patch_label), truth)?,
            joint: precision_recall(&column(|p| p.joint_label), truth)?,
        })
    }

    pub fn models(&self) -> [(&'static str, &ModelMetrics); 3] {
        [("msg", &self.msg), ("patch", &self.patch), ("joint", &self.joint)]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<MetricsReport>,
}

/// Everything a cross-validation run produced, for callers that need more
/// than the metrics.
#[derive(Debug, Clone)]
pub struct CvDetails {
    pub folds: FoldAssignment,
    /// Pooled out-of-fold predictions per parameter set, in dataset order.
    pub predictions: Vec<Vec<Prediction>>,
    /// Message and patch vocabularies of each fold's training split.
    pub vocabularies: Vec<(Vocabulary, Vocabulary)>,
}

struct ChannelData {
    docs: Vec<TokenDoc>,
}

fn subset<T: Clone>(items: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| items[i].clone()).collect()
}

/// Runs every fold once, training one classifier per entry of `settings`
/// on the fold's shared tokenization and vectorization.
fn run_folds(ds: &Dataset, folds: &FoldAssignment, settings: &[ClassifierParams]) -> Result<CvDetails> {
    let base = &settings[0];
    for params in settings {
        params.validate()?;
        if params.prep != base.prep || params.vocab != base.vocab {
            return Err(Error::Config(
                "parameter sets in one run must share preprocessing and vocabulary options".into(),
            ));
        }
    }
    let labels = ds.labels();
    let channels = [Channel::Msg, Channel::Patch].map(|channel| ChannelData {
        docs: tokenize_channel(ds.commits(), channel, &base.prep),
    });
    let l2 = base.vocab.l2_normalize;

    let mut scores = vec![vec![(0.0, 0.0); ds.len()]; settings.len()];
    let mut vocabularies = Vec::with_capacity(folds.n_folds());
    for fold in 0..folds.n_folds() {
        let in_fold = |source: Error| Error::InFold {
            fold,
            source: Box::new(source),
        };
        let train_idx = folds.train_indices(fold);
        let test_idx = folds.test_indices(fold);
        let train_labels = subset(&labels, &train_idx);

        let mut fold_vocabs = Vec::with_capacity(2);
        for (c, data) in channels.iter().enumerate() {
            let train_docs = subset(&data.docs, &train_idx);
            let vocab = build_vocabulary(&train_docs, base.vocab.min_df, base.vocab.max_size).map_err(in_fold)?;
            let rows: Vec<SparseVector> = train_docs.iter().map(|d| vectorize(d, &vocab)).collect();
            let test_rows: Vec<SparseVector> = test_idx.iter().map(|&i| vectorize(&data.docs[i], &vocab)).collect();
            let channel = if c == 0 { Channel::Msg } else { Channel::Patch };
            for (s, params) in settings.iter().enumerate() {
                let model = fit_rows(&rows, &train_labels, l2, &params.channel_config(channel)).map_err(in_fold)?;
                for (row, &i) in test_rows.iter().zip(&test_idx) {
                    let score = score_row(&model, row, l2);
                    if c == 0 {
                        scores[s][i].0 = score;
                    } else {
                        scores[s][i].1 = score;
                    }
                }
            }
            fold_vocabs.push(vocab);
        }
        let patch_vocab = fold_vocabs.pop().expect("two channels");
        let msg_vocab = fold_vocabs.pop().expect("two channels");
        vocabularies.push((msg_vocab, patch_vocab));
    }

    let predictions = scores
        .into_iter()
        .map(|per_item| {
            per_item
                .into_iter()
                .map(|(m, p)| Prediction::from_scores(m, p))
                .collect()
        })
        .collect();
    Ok(CvDetails {
        folds: folds.clone(),
        predictions,
        vocabularies,
    })
}

/// `n_folds`-fold stratified cross-validation with pooled metrics.
pub fn cross_validate(ds: &Dataset, params: &ClassifierParams, n_folds: usize, seed: u64) -> Result<MetricsReport> {
    cross_validate_detailed(ds, params, n_folds, seed).map(|(report, _)| report)
}

pub fn cross_validate_detailed(
    ds: &Dataset,
    params: &ClassifierParams,
    n_folds: usize,
    seed: u64,
) -> Result<(MetricsReport, CvDetails)> {
    let folds = stratified_folds(ds, n_folds, seed)?;
    let details = run_folds(ds, &folds, std::slice::from_ref(params))?;
    let report = MetricsReport::from_predictions(
        &details.predictions[0],
        &ds.labels(),
        params.train.w_p,
        params.fingerprint(),
        Some(folds.digest()),
        seed,
    )?;
    Ok((report, details))
}

/// Validates a sweep grid: values in (0, 1), strictly increasing.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if let Some(w) = grid.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
        return Err(Error::Config(format!("grid value {w} outside (0, 1)")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Parses `lo:hi:step` into the inclusive grid `lo, lo+step, …, ≤ hi`,
/// rounding every value to 9 decimals.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Config(format!("grid {text:?} is not lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    let round = |v: f64| (v * 1e9).round() / 1e9;
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| round(lo + k as f64 * step)).collect();
    check_grid(&grid)?;
    Ok(grid)
}

/// Cross-validates `params` at every shared weight in `grid`. All points use
/// the same folds.
pub fn sweep_weights(
    ds: &Dataset,
    grid: &[f64],
    params: &ClassifierParams,
    n_folds: usize,
    seed: u64,
) -> Result<SweepResult> {
    sweep_weights_detailed(ds, grid, params, n_folds, seed).map(|(sweep, _)| sweep)
}

pub fn sweep_weights_detailed(
    ds: &Dataset,
    grid: &[f64],
    params: &ClassifierParams,
    n_folds: usize,
    seed: u64,
) -> Result<(SweepResult, Option<CvDetails>)> {
    check_grid(grid)?;
    let folds = stratified_folds(ds, n_folds, seed)?;
    if grid.is_empty() {
        return Ok((SweepResult::default(), None));
    }
    let settings: Vec<ClassifierParams> = grid.iter().map(|&w| params.at_weight(w)).collect();
    let details = run_folds(ds, &folds, &settings)?;
    let truth = ds.labels();
    let digest = folds.digest();
    let points = grid
        .iter()
        .zip(&settings)
        .zip(&details.predictions)
        .map(|((&w, point), predictions)| {
            MetricsReport::from_predictions(predictions, &truth, w, point.fingerprint(), Some(digest.clone()), seed)
        })
        .collect::<Result<_>>()?;
    Ok((SweepResult { points }, Some(details)))
}

/// The point with the highest joint recall among those with joint precision
/// at least `min_precision`. Ties go to higher precision, then to the lower
/// weight.
pub fn select_operating_point(sweep: &SweepResult, min_precision: f64) -> Result<&MetricsReport> {
    let mut best: Option<&MetricsReport> = None;
    for point in &sweep.points {
        let (Some(p), Some(r)) = (point.joint.precision, point.joint.recall) else {
            continue;
        };
        if p < min_precision {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let (bp, br) = (b.joint.precision.unwrap_or(0.0), b.joint.recall.unwrap_or(0.0));
                r > br || (r == br && p > bp)
            }
        };
        if better {
            best = Some(point);
        }
    }
    best.ok_or(Error::NoOperatingPoint(min_precision))
}

/// The point whose joint recall is closest to `target` (ties to the lower
/// weight), ignoring points with undefined recall.
pub fn nearest_recall_point(sweep: &SweepResult, target: f64) -> Option<&MetricsReport> {
    let mut best: Option<(&MetricsReport, f64)> = None;
    for point in &sweep.points {
        if let Some(r) = point.joint.recall {
            let d = (r - target).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((point, d));
            }
        }
    }
    best.map(|(p, _)| p)
}

/// Trains on `train` and evaluates on `test`.
pub fn cross_corpus_evaluate(train: &Dataset, test: &Dataset, params: &ClassifierParams) -> Result<MetricsReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("both datasets must be non-empty".into()));
    }
    let classifier = train_commit_classifier(train, params)?;
    let predictions: Vec<Prediction> = test.commits().map(|c| classifier.classify(c)).collect();
    MetricsReport::from_predictions(
        &predictions,
        &test.labels(),
        params.train.w_p,
        params.fingerprint(),
        None,
        params.train.seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: &str = "w_p,model,precision,recall,tp,fp,fn,tn";

fn csv_rate(rate: Option<f64>) -> String {
    rate.map(|r| r.to_string()).unwrap_or_default()
}

/// Writes the sweep as JSON (`{"meta": …, "points": […]}`) or as CSV with
/// one row per point and model. Undefined rates are `null` in JSON and an
/// empty field in CSV.
pub fn write_report<W: Write>(
    sweep: &SweepResult,
    meta: &Map<String, Value>,
    format: ReportFormat,
    mut out: W,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Json => {
            let doc = json!({ "meta": meta, "points": sweep.points });
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for point in &sweep.points {
                for (name, m) in point.models() {
                    writeln!(
                        out,
                        "{},{name},{},{},{},{},{},{}",
                        point.w_p,
                        csv_rate(m.precision),
                        csv_rate(m.recall),
                        m.tp,
                        m.fp,
                        m.fn_,
                        m.tn
                    )?;
                }
            }
        }
    }
    out.flush()
}

pub fn emit_report(
    sweep: &SweepResult,
    meta: &Map<String, Value>,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(sweep, meta, format, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Commit, LabeledCommit, Provenance};
    use Label::{Negative as N, Positive as P};

    fn labeled(n_pos: usize, n_neg: usize) -> Dataset {
        let items = (0..n_pos + n_neg)
            .map(|i| {
                let label = if i < n_pos { P } else { N };
                let commit = Commit::new(format!("c{i}"), "r", format!("message {i}"), "").unwrap();
                LabeledCommit::new(commit, label, Provenance::Curated)
            })
            .collect();
        Dataset::new(items, Map::new()).unwrap()
    }

    fn per_fold(folds: &FoldAssignment, ds: &Dataset, label: Label) -> Vec<usize> {
        let mut counts = vec![0; folds.n_folds()];
        for (i, item) in ds.items.iter().enumerate() {
            if item.label == label {
                counts[folds.fold_of()[i]] += 1;
            }
        }
        counts
    }

    #[test]
    fn divisible_folds() {
        let ds = labeled(10, 20);
        let folds = stratified_folds(&ds, 10, 7).unwrap();
        assert_eq!(per_fold(&folds, &ds, P), vec![1; 10]);
        assert_eq!(per_fold(&folds, &ds, N), vec![2; 10]);
    }

    #[test]
    fn remainder_folds() {
        let ds = labeled(11, 20);
        let folds = stratified_folds(&ds, 10, 7).unwrap();
        let mut counts = per_fold(&folds, &ds, P);
        counts.sort();
        assert_eq!(counts, [1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
        let sizes: Vec<usize> = (0..10).map(|f| folds.test_indices(f).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn folds_are_deterministic_and_checked() {
        let ds = labeled(10, 20);
        assert_eq!(
            stratified_folds(&ds, 10, 3).unwrap(),
            stratified_folds(&ds, 10, 3).unwrap()
        );
        assert_ne!(
            stratified_folds(&ds, 10, 3).unwrap().digest(),
            stratified_folds(&ds, 10, 4).unwrap().digest()
        );
        assert!(stratified_folds(&ds, 1, 0).is_err());
        assert!(stratified_folds(&labeled(9, 20), 10, 0).is_err());
        assert!(stratified_folds(&labeled(10, 9), 10, 0).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let pred = [P, P, P, P, N, N, N, N, N, N];
        let truth = [P, P, P, N, P, P, N, N, N, N];
        let m = precision_recall(&pred, &truth).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 2, 4));
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.6));

        let m = precision_recall(&[N, N], &[P, N]).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));

        let m = precision_recall(&[P, N], &[P, N]).unwrap();
        assert_eq!((m.precision, m.recall), (Some(1.0), Some(1.0)));

        assert!(matches!(precision_recall(&[P], &[P, N]), Err(Error::Length { .. })));
    }

    fn point(w_p: f64, precision: Option<f64>, recall: Option<f64>) -> MetricsReport {
        let mut joint = ModelMetrics::from_counts(0, 0, 0, 0);
        joint.precision = precision;
        joint.recall = recall;
        MetricsReport {
            w_p,
            config_fingerprint: String::new(),
            fold_digest: None,
            seed: 0,
            msg: joint,
            patch: joint,
            joint,
        }
    }

    #[test]
    fn operating_point_selection() {
        let sweep = SweepResult {
            points: vec![
                point(0.1, Some(0.9), Some(0.2)),
                point(0.2, Some(0.85), Some(0.4)),
                point(0.3, Some(0.7), Some(0.6)),
                point(0.4, None, Some(0.0)),
            ],
        };
        assert_eq!(select_operating_point(&sweep, 0.8).unwrap().w_p, 0.2);
        assert_eq!(select_operating_point(&sweep, 0.86).unwrap().w_p, 0.1);
        assert!(matches!(
            select_operating_point(&sweep, 0.95),
            Err(Error::NoOperatingPoint(_))
        ));
        assert!(select_operating_point(&SweepResult::default(), 0.5).is_err());
        assert_eq!(nearest_recall_point(&sweep, 0.5).unwrap().w_p, 0.2);
    }

    #[test]
    fn grid_parsing() {
        let grid = parse_grid("0.05:0.95:0.05").unwrap();
        assert_eq!(grid.len(), 19);
        assert_eq!(grid[0], 0.05);
        assert_eq!(grid[18], 0.95);
        assert_eq!(grid[2], 0.15);
        assert_eq!(parse_grid("0.1:0.9:0.1").unwrap().len(), 9);
        assert!(parse_grid("0:0.9:0.1").is_err());
        assert!(parse_grid("0.1:0.9").is_err());
        assert!(parse_grid("0.5:0.1:0.1").is_err());
        assert!(check_grid(&[0.2, 0.2]).is_err());
    }

    #[test]
    fn csv_cardinality_and_undefined_fields() {
        let sweep = SweepResult {
            points: (1..=9).map(|k| point(k as f64 / 10.0, None, Some(0.5))).collect(),
        };
        let mut buf = Vec::new();
        write_report(&sweep, &Map::new(), ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 28);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0.1,msg,,0.5,0,0,0,0");

        let mut buf = Vec::new();
        write_report(&SweepResult::default(), &Map::new(), ReportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }
}
