//! Python bindings for commitsift.
//!
//! Build with `maturin develop` from this directory; the module imports as
//! `commitsift`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use commitsift::corpus::{self, load_dataset, save_dataset};
use commitsift::eval::{self, parse_grid};
use commitsift::synth::{self, SynthConfig};
use commitsift::textprep::{self, PrepConfig};
use commitsift::{ClassifierParams, Error, Label, LabeledCommit, Provenance};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serializes through JSON so Python gets plain dicts and lists.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_label(label: &str) -> PyResult<Label> {
    match label {
        "positive" => Ok(Label::Positive),
        "negative" => Ok(Label::Negative),
        other => Err(PyValueError::new_err(format!(
            "label must be 'positive' or 'negative', got {other:?}"
        ))),
    }
}

fn label_name(label: Label) -> &'static str {
    match label {
        Label::Positive => "positive",
        Label::Negative => "negative",
    }
}

fn prep_config(stem: bool, split: bool) -> PrepConfig {
    PrepConfig {
        stem,
        split_composites: split,
        ..PrepConfig::default()
    }
}

#[pyfunction]
fn stem(word: &str) -> String {
    textprep::stem(word)
}

#[pyfunction]
fn split_composite(token: &str) -> Vec<String> {
    textprep::split_composite(token)
}

#[pyfunction]
#[pyo3(signature = (message, stem = true, split = true))]
fn tokenize_message(message: &str, stem: bool, split: bool) -> Vec<String> {
    textprep::tokenize_message(message, &prep_config(stem, split))
        .tokens()
        .to_vec()
}

#[pyfunction]
#[pyo3(signature = (patch, stem = true, split = true))]
fn tokenize_patch(patch: &str, stem: bool, split: bool) -> Vec<String> {
    textprep::tokenize_patch(patch, &prep_config(stem, split))
        .tokens()
        .to_vec()
}

/// The added and removed lines of a unified diff.
#[pyfunction]
fn changed_lines(patch: &str) -> Vec<String> {
    textprep::changed_lines(patch)
        .lines
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[pyclass(name = "Commit", module = "commitsift", frozen, from_py_object)]
#[derive(Clone)]
struct PyCommit {
    inner: commitsift::Commit,
}

#[pymethods]
impl PyCommit {
    #[new]
    fn new(id: String, repo: String, message: String, patch: String) -> PyResult<Self> {
        let inner = commitsift::Commit::new(id, repo, message, patch).map_err(to_py_err)?;
        Ok(PyCommit { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn repo(&self) -> &str {
        &self.inner.repo
    }

    #[getter]
    fn message(&self) -> &str {
        &self.inner.message
    }

    #[getter]
    fn patch(&self) -> &str {
        &self.inner.patch
    }

    fn content_key(&self) -> String {
        self.inner.content_key().as_str().to_string()
    }

    fn __repr__(&self) -> String {
        format!("Commit(id={:?}, repo={:?})", self.inner.id, self.inner.repo)
    }
}

#[pyclass(name = "Dataset", module = "commitsift", frozen)]
struct PyDataset {
    inner: commitsift::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Builds a curated dataset from `(commit, label)` pairs. Duplicate
    /// content is an error.
    #[new]
    fn new(items: Vec<(PyCommit, String)>) -> PyResult<Self> {
        let items = items
            .into_iter()
            .map(|(c, label)| Ok(LabeledCommit::new(c.inner, parse_label(&label)?, Provenance::Curated)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = commitsift::Dataset::new(items, Default::default()).map_err(to_py_err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_dataset(path).map(|inner| PyDataset { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (positives = 200, negatives = 1000, seed = 0))]
    fn synthetic(positives: usize, negatives: usize, seed: u64) -> PyResult<Self> {
        let cfg = SynthConfig {
            positives,
            negatives,
            seed,
            ..SynthConfig::default()
        };
        synth::generate(&cfg)
            .map(|inner| PyDataset { inner })
            .map_err(to_py_err)
    }

    /// Commits of a git repository, all labeled negative.
    #[staticmethod]
    #[pyo3(signature = (repo, range = None))]
    fn from_repo(repo: &str, range: Option<&str>) -> PyResult<Self> {
        let extraction = corpus::extract_commits(repo, range).map_err(to_py_err)?;
        let items = extraction
            .commits
            .into_iter()
            .map(|c| LabeledCommit::new(c, Label::Negative, Provenance::Imported))
            .collect();
        Ok(PyDataset {
            inner: corpus::dedup(items),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_dataset(&self.inner, path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn count(&self, label: &str) -> PyResult<usize> {
        Ok(self.inner.count(parse_label(label)?))
    }

    fn items(&self) -> Vec<(PyCommit, &'static str)> {
        self.inner
            .items
            .iter()
            .map(|i| {
                (
                    PyCommit {
                        inner: i.commit.clone(),
                    },
                    label_name(i.label),
                )
            })
            .collect()
    }

    fn commits(&self) -> Vec<PyCommit> {
        self.inner.commits().map(|c| PyCommit { inner: c.clone() }).collect()
    }

    #[getter]
    fn meta(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.meta)
    }
}

#[pyclass(name = "Prediction", module = "commitsift", frozen, get_all)]
struct PyPrediction {
    msg_score: f64,
    patch_score: f64,
    msg_label: &'static str,
    patch_label: &'static str,
    joint_label: &'static str,
}

impl From<commitsift::Prediction> for PyPrediction {
    fn from(p: commitsift::Prediction) -> Self {
        PyPrediction {
            msg_score: p.msg_score,
            patch_score: p.patch_score,
            msg_label: label_name(p.msg_label),
            patch_label: label_name(p.patch_label),
            joint_label: label_name(p.joint_label),
        }
    }
}

#[pymethods]
impl PyPrediction {
    fn __repr__(&self) -> String {
        format!(
            "Prediction(msg_score={}, patch_score={}, joint_label={:?})",
            self.msg_score, self.patch_score, self.joint_label
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn params(
    w_p: f64,
    c: f64,
    min_df: usize,
    max_vocab: usize,
    l2_normalize: bool,
    stem: bool,
    split: bool,
    msg_w_p: Option<f64>,
    patch_w_p: Option<f64>,
    seed: u64,
) -> PyResult<ClassifierParams> {
    let mut p = ClassifierParams {
        prep: prep_config(stem, split),
        msg_w_p,
        patch_w_p,
        ..ClassifierParams::default()
    };
    p.vocab.min_df = min_df;
    p.vocab.max_size = max_vocab;
    p.vocab.l2_normalize = l2_normalize;
    p.train.w_p = w_p;
    p.train.c = c;
    p.train.seed = seed;
    p.validate().map_err(to_py_err)?;
    Ok(p)
}

#[pyclass(name = "CommitClassifier", module = "commitsift", frozen)]
struct PyClassifier {
    inner: commitsift::CommitClassifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (
        dataset, w_p = 0.5, c = 1.0, min_df = 2, max_vocab = 50_000, l2_normalize = false,
        stem = true, split = true, msg_w_p = None, patch_w_p = None, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        dataset: &PyDataset,
        w_p: f64,
        c: f64,
        min_df: usize,
        max_vocab: usize,
        l2_normalize: bool,
        stem: bool,
        split: bool,
        msg_w_p: Option<f64>,
        patch_w_p: Option<f64>,
        seed: u64,
    ) -> PyResult<Self> {
        let p = params(
            w_p,
            c,
            min_df,
            max_vocab,
            l2_normalize,
            stem,
            split,
            msg_w_p,
            patch_w_p,
            seed,
        )?;
        commitsift::train_commit_classifier(&dataset.inner, &p)
            .map(|inner| PyClassifier { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        commitsift::load_classifier(path)
            .map(|inner| PyClassifier { inner })
            .map_err(to_py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        commitsift::save_classifier(&self.inner, path).map_err(to_py_err)
    }

    fn classify(&self, commit: &PyCommit) -> PyPrediction {
        self.inner.classify(&commit.inner).into()
    }

    fn classify_dataset(&self, dataset: &PyDataset) -> Vec<PyPrediction> {
        dataset.inner.commits().map(|c| self.inner.classify(c).into()).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_python(py, &self.inner.params)
    }
}

/// Stratified cross-validation at one weight; returns the metrics report.
#[pyfunction]
#[pyo3(signature = (dataset, w_p = 0.5, folds = 10, seed = 0, min_df = 2))]
fn cross_validate(
    py: Python<'_>,
    dataset: &PyDataset,
    w_p: f64,
    folds: usize,
    seed: u64,
    min_df: usize,
) -> PyResult<Py<PyAny>> {
    let p = params(w_p, 1.0, min_df, 50_000, false, true, true, None, None, seed)?;
    let report = eval::cross_validate(&dataset.inner, &p, folds, seed).map_err(to_py_err)?;
    to_python(py, &report)
}

/// Cross-validates every weight of `grid` ("lo:hi:step" or a list) on the
/// same folds. Returns the sweep points and the selected operating point
/// (None when no point reaches `min_precision`).
#[pyfunction]
#[pyo3(signature = (dataset, grid = None, folds = 10, seed = 0, min_df = 2, min_precision = 0.8))]
fn sweep_weights(
    py: Python<'_>,
    dataset: &PyDataset,
    grid: Option<Bound<'_, PyAny>>,
    folds: usize,
    seed: u64,
    min_df: usize,
    min_precision: f64,
) -> PyResult<(Py<PyAny>, Option<Py<PyAny>>)> {
    let grid = match grid {
        None => parse_grid("0.05:0.95:0.05").map_err(to_py_err)?,
        Some(g) => match g.extract::<String>() {
            Ok(text) => parse_grid(&text).map_err(to_py_err)?,
            Err(_) => g.extract::<Vec<f64>>()?,
        },
    };
    let p = params(0.5, 1.0, min_df, 50_000, false, true, true, None, None, seed)?;
    let sweep = eval::sweep_weights(&dataset.inner, &grid, &p, folds, seed).map_err(to_py_err)?;
    let selected = match eval::select_operating_point(&sweep, min_precision) {
        Ok(point) => Some(to_python(py, point)?),
        Err(_) => None,
    };
    Ok((to_python(py, &sweep.points)?, selected))
}

#[pymodule(name = "commitsift")]
fn commitsift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(stem, m)?)?;
    m.add_function(wrap_pyfunction!(split_composite, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize_message, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize_patch, m)?)?;
    m.add_function(wrap_pyfunction!(changed_lines, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_weights, m)?)?;
    m.add_class::<PyCommit>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PyClassifier>()?;
    Ok(())
}
