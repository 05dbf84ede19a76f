//! `commitsift`: mine commits, build labeled datasets, train and evaluate
//! the two-channel classifier, and classify new commits.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod config;

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Map, Value};

use commitsift::corpus::{
    dedup, extract_commits, filter_outliers, import_dump, load_dataset, repo_name, sample_negatives, save_dataset,
    Extraction,
};
use commitsift::ensemble::{load_classifier, save_classifier, train_commit_classifier, ClassifierParams};
use commitsift::eval::{
    cross_corpus_evaluate, emit_report, nearest_recall_point, parse_grid, select_operating_point, stratified_folds,
    sweep_weights, ReportFormat, SweepResult,
};
use commitsift::features::VocabParams;
use commitsift::svm::TrainConfig;
use commitsift::synth::{generate, SynthConfig};
use commitsift::textprep::{stopwords, PrepConfig};
use commitsift::{Commit, Dataset, Label, LabeledCommit, Provenance, SamplingConfig};

use config::{FileConfig, Resolver};

/// Recall levels reported in the evaluation table.
const RECALL_TARGETS: [f64; 3] = [0.50, 0.72, 0.76];

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<commitsift::Error> for Failure {
    fn from(e: commitsift::Error) -> Self {
        match e {
            commitsift::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(
    name = "commitsift",
    version,
    about = "Flag security-relevant commits from their message and patch"
)]
struct Cli {
    /// Seed for every random choice (sampling, folds, solver order).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract a repository's commits into a dataset file.
    Ingest(IngestArgs),
    /// Label positives, sample negatives, dedup and filter.
    Build(BuildArgs),
    /// Train a classifier on a labeled dataset.
    Train(TrainArgs),
    /// Cross-validate over a weight grid and write report files.
    Evaluate(EvaluateArgs),
    /// Score commits with a trained classifier.
    Classify(ClassifyArgs),
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false)]
struct Source {
    /// Repository path or URL.
    #[arg(long, group = "source")]
    repo: Option<String>,
    /// Saved `git log` dump (see README).
    #[arg(long = "import", group = "source", value_name = "DUMP")]
    import: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    source: Source,
    /// Repository name recorded for an imported dump (default: file stem).
    #[arg(long)]
    repo_name: Option<String>,
    /// Revision range passed to `git log`.
    #[arg(long)]
    range: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// File listing positive commit ids, one per line.
    #[arg(long, value_name = "IDS")]
    positives: PathBuf,
    /// Dataset file(s) to take positives and negatives from.
    #[arg(long, required = true)]
    pool: Vec<PathBuf>,
    /// Negatives per positive.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[arg(long)]
    min_bytes: Option<usize>,
    #[arg(long)]
    max_bytes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_weight(s: &str) -> Result<f64, String> {
    let w: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if w > 0.0 && w < 1.0 {
        Ok(w)
    } else {
        Err(format!("{w} is outside (0, 1)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

/// Preprocessing, vocabulary and solver options shared by train and
/// evaluate.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Misclassification cost C.
    #[arg(long = "C", value_parser = parse_positive)]
    c: Option<f64>,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Scale feature vectors to unit length.
    #[arg(long)]
    l2_normalize: bool,
    #[arg(long)]
    no_stem: bool,
    #[arg(long)]
    no_split: bool,
    /// Extra stopwords, one per line.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    min_token_len: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Weight of positive-class errors, in (0, 1).
    #[arg(long, value_parser = parse_weight)]
    wp: Option<f64>,
    #[arg(long, value_parser = parse_weight)]
    msg_wp: Option<f64>,
    #[arg(long, value_parser = parse_weight)]
    patch_wp: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Train on --dataset and test on this file instead of cross-validating.
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    folds: Option<u64>,
    /// Weight grid `lo:hi:step`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    min_precision: Option<f64>,
    /// JSON report path; the CSV goes next to it.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
#[group(id = "input", required = true, multiple = false)]
struct ClassifyInput {
    #[arg(long, group = "input")]
    repo: Option<String>,
    #[arg(long, group = "input")]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: ClassifyInput,
    #[arg(long)]
    range: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    positives: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli)).unwrap_or_else(|panic| {
        let text = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::Internal(text))
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let file = FileConfig::load(cli.config.as_deref())?;
    let mut settings = Resolver::new(&file);
    let level = settings.pick("log_level", cli.log_level.clone(), "warn".to_string())?;
    let filter: log::LevelFilter = level
        .parse()
        .map_err(|_| Failure::Usage(format!("unknown log level `{level}`")))?;
    let _ = env_logger::Builder::new().filter_level(filter).try_init();
    settings.resolved.remove("log_level");
    let seed = settings.pick("seed", cli.seed, 0u64)?;

    let outcome = match cli.command {
        Command::Ingest(args) => ingest(args, settings),
        Command::Build(args) => build(args, seed, settings),
        Command::Train(args) => train(args, seed, settings),
        Command::Evaluate(args) => evaluate(args, seed, settings),
        Command::Classify(args) => classify(args),
        Command::Synth(args) => synth(args, seed, settings),
    };
    let malformed = commitsift::textprep::malformed_diff_count();
    if malformed > 0 {
        warn!("{malformed} patch(es) were not well-formed diffs and contributed no tokens");
    }
    outcome
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn ingest(args: IngestArgs, mut settings: Resolver) -> Outcome {
    settings.resolved.remove("seed");
    let (extraction, name, source) = match (&args.source.repo, &args.source.import) {
        (Some(location), _) => {
            let extraction = extract_commits(location, args.range.as_deref())?;
            (
                extraction,
                repo_name(location),
                json!({"repo": location, "range": args.range}),
            )
        }
        (None, Some(dump)) => {
            let name = match &args.repo_name {
                Some(name) => name.clone(),
                None => dump
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Failure::Usage("cannot derive a repository name; pass --repo-name".into()))?,
            };
            (import_dump(dump, &name)?, name, json!({"import": path_str(dump)}))
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    let Extraction {
        commits,
        skipped,
        binary_only,
    } = extraction;
    let total = commits.len();
    let items = commits
        .into_iter()
        .map(|c| LabeledCommit::new(c, Label::Negative, Provenance::Imported))
        .collect();
    let mut ds = dedup(items);
    ds.meta.insert("source".into(), source);
    ds.meta.insert("repo".into(), json!(name));
    ds.meta.insert("skipped".into(), json!(skipped));
    ds.meta.insert("binary_only".into(), json!(binary_only));
    save_dataset(&ds, &args.out)?;
    println!(
        "{total} commits extracted, {} written to {}",
        ds.len(),
        path_str(&args.out)
    );
    if skipped > 0 {
        warn!("{skipped} revisions could not be parsed");
    }
    Ok(())
}

fn read_ids(path: &Path) -> Outcome<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut seen = HashSet::new();
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty() && seen.insert(l.to_string()))
        .map(str::to_string)
        .collect())
}

fn build(args: BuildArgs, seed: u64, mut settings: Resolver) -> Outcome {
    let defaults = SamplingConfig::default();
    let cfg = SamplingConfig {
        k: settings.pick("k", args.k, defaults.k as u64)? as usize,
        seed,
        min_bytes: settings.pick("min_bytes", args.min_bytes, defaults.min_bytes)?,
        max_bytes: settings.pick("max_bytes", args.max_bytes, defaults.max_bytes)?,
    };
    cfg.validate()?;
    settings.record("positives", &path_str(&args.positives));
    settings.record("pool", &args.pool.iter().map(|p| path_str(p)).collect::<Vec<_>>());

    let mut pool: Vec<Commit> = Vec::new();
    for path in &args.pool {
        pool.extend(load_dataset(path)?.items.into_iter().map(|item| item.commit));
    }
    let ids = read_ids(&args.positives)?;
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut positives = Vec::new();
    let mut found = HashSet::new();
    for commit in &pool {
        if wanted.contains(commit.id.as_str()) && found.insert(commit.id.clone()) {
            positives.push(LabeledCommit::new(commit.clone(), Label::Positive, Provenance::Curated));
        }
    }
    let missing: Vec<&str> = ids
        .iter()
        .map(String::as_str)
        .filter(|id| !found.contains(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Failure::Data(format!(
            "{} positive id(s) not found in the pool: {}",
            missing.len(),
            missing.join(", ")
        )));
    }

    let positives = dedup(positives);
    let positive_dedup = positives.meta.get("dedup_removed").cloned();
    let sampled = sample_negatives(&positives, &pool, &cfg)?;
    let Dataset { items, meta } = sampled;
    let mut ds = dedup(items);
    for (key, value) in meta {
        ds.meta.insert(key, value);
    }
    ds.meta
        .insert("positive_dedup_removed".into(), positive_dedup.unwrap_or(json!(0)));
    let mut ds = filter_outliers(ds, &cfg)?;
    ds.meta.insert("config".into(), Value::Object(settings.resolved));

    save_dataset(&ds, &args.out)?;
    println!(
        "positives: {}, negatives: {}",
        ds.count(Label::Positive),
        ds.count(Label::Negative)
    );
    Ok(())
}

fn model_params(model: &ModelArgs, seed: u64, settings: &mut Resolver) -> Outcome<ClassifierParams> {
    let prep_defaults = PrepConfig::default();
    let vocab_defaults = VocabParams::default();
    let train_defaults = TrainConfig::default();

    let mut stopword_set = stopwords::english();
    if let Some(path) = settings.pick_opt("stopwords", model.stopwords.as_ref().map(|p| path_str(p)))? {
        stopword_set.extend(stopwords::load_stopwords(&path)?);
    }
    let prep = PrepConfig {
        stopwords: stopword_set,
        stem: !settings.switch("no_stem", model.no_stem)?,
        split_composites: !settings.switch("no_split", model.no_split)?,
        min_token_len: settings.pick("min_token_len", model.min_token_len, prep_defaults.min_token_len)?,
        max_tokens_per_doc: settings.pick("max_tokens", model.max_tokens, prep_defaults.max_tokens_per_doc)?,
    };
    let vocab = VocabParams {
        min_df: settings.pick("min_df", model.min_df, vocab_defaults.min_df)?,
        max_size: settings.pick("max_vocab", model.max_vocab, vocab_defaults.max_size)?,
        l2_normalize: settings.switch("l2_normalize", model.l2_normalize)?,
    };
    let train = TrainConfig {
        w_p: train_defaults.w_p,
        c: settings.pick("C", model.c, train_defaults.c)?,
        tol: settings.pick("tol", model.tol, train_defaults.tol)?,
        max_epochs: settings.pick("epochs", model.epochs, train_defaults.max_epochs)?,
        seed,
    };
    Ok(ClassifierParams {
        prep,
        vocab,
        train,
        msg_w_p: None,
        patch_w_p: None,
    })
}

fn train(args: TrainArgs, seed: u64, mut settings: Resolver) -> Outcome {
    settings.record("dataset", &path_str(&args.dataset));
    let mut params = model_params(&args.model, seed, &mut settings)?;
    params.train.w_p = settings.pick("wp", args.wp, 0.6)?;
    params.msg_w_p = settings.pick_opt("msg_wp", args.msg_wp)?;
    params.patch_w_p = settings.pick_opt("patch_wp", args.patch_wp)?;
    params.validate()?;

    let ds = load_dataset(&args.dataset)?;
    let mut classifier = train_commit_classifier(&ds, &params)?;
    classifier.run = settings.resolved;
    save_classifier(&classifier, &args.out)?;
    println!(
        "trained on {} commits ({} positive); vocabulary msg {} / patch {}",
        ds.len(),
        ds.count(Label::Positive),
        classifier.msg.vocab.len(),
        classifier.patch.vocab.len()
    );
    for warning in &classifier.warnings {
        warn!("{warning}");
    }
    Ok(())
}

fn report_paths(report: &Path) -> (PathBuf, PathBuf) {
    if report.extension().is_some_and(|e| e == "csv") {
        (report.with_extension("json"), report.to_path_buf())
    } else {
        (report.to_path_buf(), report.with_extension("csv"))
    }
}

fn evaluate(args: EvaluateArgs, seed: u64, mut settings: Resolver) -> Outcome {
    settings.record("dataset", &path_str(&args.dataset));
    settings.record("test_dataset", &args.test_dataset.as_ref().map(|p| path_str(p)));
    let params = model_params(&args.model, seed, &mut settings)?;
    let folds = settings.pick("folds", args.folds, 10)?;
    if folds < 2 {
        return Err(Failure::Usage("folds must be at least 2".into()));
    }
    let grid_spec = settings.pick("sweep", args.sweep.clone(), "0.05:0.95:0.05".to_string())?;
    let grid = parse_grid(&grid_spec)?;
    let min_precision = settings.pick("min_precision", args.min_precision, 0.80)?;
    if !(0.0..=1.0).contains(&min_precision) {
        return Err(Failure::Usage(format!(
            "min-precision {min_precision} is outside [0, 1]"
        )));
    }
    params.validate()?;

    let ds = load_dataset(&args.dataset)?;
    let mut meta = Map::new();
    let sweep = match &args.test_dataset {
        None => {
            let assignment = stratified_folds(&ds, folds as usize, seed)?;
            meta.insert("mode".into(), json!("cross_validation"));
            meta.insert("fold_digest".into(), json!(assignment.digest()));
            sweep_weights(&ds, &grid, &params, folds as usize, seed)?
        }
        Some(test_path) => {
            let test = load_dataset(test_path)?;
            meta.insert("mode".into(), json!("cross_corpus"));
            meta.insert("test_items".into(), json!(test.len()));
            let points = grid
                .iter()
                .map(|&w| cross_corpus_evaluate(&ds, &test, &params.at_weight(w)))
                .collect::<Result<_, _>>()?;
            SweepResult { points }
        }
    };

    meta.insert("items".into(), json!(ds.len()));
    meta.insert("seed".into(), json!(seed));
    meta.insert("config".into(), Value::Object(settings.resolved));
    let selected = match select_operating_point(&sweep, min_precision) {
        Ok(point) => {
            println!(
                "operating point: w_p {} precision {:.3} recall {:.3}",
                point.w_p,
                point.joint.precision.unwrap_or(f64::NAN),
                point.joint.recall.unwrap_or(f64::NAN)
            );
            serde_json::to_value(point).map_err(|e| Failure::Internal(e.to_string()))?
        }
        Err(e) => {
            println!("{e}");
            Value::Null
        }
    };
    meta.insert(
        "operating_point".into(),
        json!({"min_precision": min_precision, "selected": selected}),
    );
    let table: Vec<Value> = RECALL_TARGETS
        .iter()
        .map(|&target| {
            let point = nearest_recall_point(&sweep, target);
            json!({
                "target_recall": target,
                "w_p": point.map(|p| p.w_p),
                "recall": point.and_then(|p| p.joint.recall),
                "precision": point.map(|p| json!({
                    "msg": p.msg.precision,
                    "patch": p.patch.precision,
                    "joint": p.joint.precision,
                })),
            })
        })
        .collect();
    meta.insert("recall_table".into(), Value::Array(table));

    let (json_path, csv_path) = report_paths(&args.report);
    emit_report(&sweep, &meta, &json_path, ReportFormat::Json)?;
    emit_report(&sweep, &meta, &csv_path, ReportFormat::Csv)?;
    info!("reports written to {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    repo: &'a str,
    msg_score: f64,
    patch_score: f64,
    joint_label: Label,
}

fn classify(args: ClassifyArgs) -> Outcome {
    let classifier = load_classifier(&args.model)?;
    let commits: Vec<Commit> = match (&args.input.repo, &args.input.dataset) {
        (Some(location), _) => extract_commits(location, args.range.as_deref())?.commits,
        (None, Some(path)) => load_dataset(path)?.items.into_iter().map(|i| i.commit).collect(),
        (None, None) => unreachable!("clap enforces one input"),
    };
    let write_err = |e: std::io::Error| Failure::Data(format!("cannot write {}: {e}", args.out.display()));
    let mut out = BufWriter::new(File::create(&args.out).map_err(write_err)?);
    let mut flagged = 0;
    for commit in &commits {
        let p = classifier.classify(commit);
        if p.joint_label.is_positive() {
            flagged += 1;
        }
        let record = PredictionRecord {
            id: &commit.id,
            repo: &commit.repo,
            msg_score: p.msg_score,
            patch_score: p.patch_score,
            joint_label: p.joint_label,
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Failure::Internal(e.to_string()))?;
        out.write_all(b"\n").map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    println!("{} commits classified, {flagged} flagged", commits.len());
    Ok(())
}

fn synth(args: SynthArgs, seed: u64, mut settings: Resolver) -> Outcome {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        positives: settings.pick("positives", args.positives, defaults.positives)?,
        negatives: settings.pick("negatives", args.negatives, defaults.negatives)?,
        seed,
        ..defaults
    };
    let mut ds = generate(&cfg)?;
    ds.meta.insert("config".into(), Value::Object(settings.resolved));
    save_dataset(&ds, &args.out)?;
    println!(
        "positives: {}, negatives: {}",
        ds.count(Label::Positive),
        ds.count(Label::Negative)
    );
    Ok(())
}
