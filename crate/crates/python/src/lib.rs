//! Python bindings for the `unida` toolkit.
//!
//! Matrices cross the boundary as lists of rows; reports come back as
//! dictionaries keyed by metric name.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use unida::calibration::CalibrationConfig;
use unida::metrics::{self, EvalInputs};
use unida::scoring::{self, ScoreKind};
use unida::{data, UnidaError};

fn py_err(e: UnidaError) -> PyErr {
    match e.root() {
        UnidaError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
}

fn score_kind(name: &str) -> PyResult<ScoreKind> {
    match name {
        "neg_entropy" => Ok(ScoreKind::NegEntropy),
        "max_logit" => Ok(ScoreKind::MaxLogit),
        other => Err(PyValueError::new_err(format!("unknown score kind {other:?}"))),
    }
}

/// Labelled embedding matrix with class names and a provenance tag.
#[pyclass(name = "FeatureSet", module = "unida_py")]
struct PyFeatureSet {
    inner: data::FeatureSet,
}

#[pymethods]
impl PyFeatureSet {
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>, source_tag: &str) -> PyResult<Self> {
        let x = to_array(&features)?.mapv(|v| v as f32);
        let inner = data::FeatureSet::new(x, labels, class_names, source_tag).map_err(py_err)?;
        Ok(PyFeatureSet { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = data::load_feature_set(&path).map_err(py_err)?;
        Ok(PyFeatureSet { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save_feature_set(&self.inner, &path).map_err(py_err)
    }

    fn l2_normalized(&self) -> Self {
        PyFeatureSet {
            inner: self.inner.l2_normalized(),
        }
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features().mapv(f64::from))
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn source_tag(&self) -> String {
        self.inner.source_tag().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureSet(n={}, dim={}, classes={}, source_tag={:?})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.class_names().len(),
            self.inner.source_tag()
        )
    }
}

/// Partition of the class ids into shared, source-private and target-private.
#[pyclass(name = "LabelSplit", module = "unida_py", get_all)]
struct PyLabelSplit {
    shared: Vec<usize>,
    source_private: Vec<usize>,
    target_private: Vec<usize>,
    setting_name: String,
}

#[pymethods]
impl PyLabelSplit {
    fn __repr__(&self) -> String {
        format!(
            "LabelSplit({}: shared={:?}, source_private={:?}, target_private={:?})",
            self.setting_name, self.shared, self.source_private, self.target_private
        )
    }
}

#[pyfunction]
#[pyo3(signature = (total_classes, n_shared, n_source_private, setting_name=None))]
fn make_label_split(
    total_classes: usize,
    n_shared: usize,
    n_source_private: usize,
    setting_name: Option<String>,
) -> PyResult<PyLabelSplit> {
    let name = setting_name
        .unwrap_or_else(|| data::setting_name(total_classes, n_shared, n_source_private));
    let s = data::make_label_split(total_classes, n_shared, n_source_private, &name).map_err(py_err)?;
    Ok(PyLabelSplit {
        shared: s.shared.clone(),
        source_private: s.source_private.clone(),
        target_private: s.target_private.clone(),
        setting_name: s.setting_name.clone(),
    })
}

/// Row-wise softmax of `logits / tau`.
#[pyfunction]
#[pyo3(signature = (logits, tau=1.0))]
fn softmax(logits: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    let p = scoring::softmax_rows(&to_array(&logits)?, tau).map_err(py_err)?;
    Ok(to_rows(&p))
}

/// Per-row confidence scores (`neg_entropy` or `max_logit`).
#[pyfunction]
#[pyo3(signature = (logits, tau=1.0, kind="neg_entropy"))]
fn scores(logits: Vec<Vec<f64>>, tau: f64, kind: &str) -> PyResult<Vec<f64>> {
    let s = scoring::scores(&to_array(&logits)?, tau, score_kind(kind)?).map_err(py_err)?;
    Ok(s.to_vec())
}

/// Labels after rejection (OUT is `K`), plus argmax and scores.
#[pyfunction]
#[pyo3(signature = (logits, tau=1.0, kind="neg_entropy", threshold=None))]
fn predict(
    logits: Vec<Vec<f64>>,
    tau: f64,
    kind: &str,
    threshold: Option<f64>,
) -> PyResult<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    let z = to_array(&logits)?;
    let kind = score_kind(kind)?;
    let threshold = match threshold {
        Some(t) => Some(t),
        None => scoring::default_threshold(kind, z.ncols()).map_err(py_err)?,
    };
    let rule = scoring::ScoreRule { kind, threshold };
    let p = scoring::predict_with_reject(&z, tau, &rule).map_err(py_err)?;
    Ok((p.labels, p.argmax, p.scores.to_vec()))
}

#[pyfunction]
fn h_score(acc_in: f64, acc_out: f64) -> f64 {
    metrics::h_score(acc_in, acc_out)
}

#[pyfunction]
fn h3_score(acc_in: f64, acc_out: f64, nmi: f64) -> f64 {
    metrics::h3_score(acc_in, acc_out, nmi)
}

/// Arithmetic-mean normalized mutual information of two labelings.
#[pyfunction]
fn nmi(truth: Vec<usize>, predicted: Vec<usize>) -> PyResult<f64> {
    metrics::nmi(&truth, &predicted).map_err(py_err)
}

fn eval_inputs(
    predicted: Vec<usize>,
    argmax: Vec<usize>,
    scores: Vec<f64>,
    truth: Vec<usize>,
    truth_class: Option<Vec<usize>>,
    n_shared: usize,
    out_label: usize,
) -> PyResult<EvalInputs> {
    let truth_class = truth_class.unwrap_or_else(|| truth.clone());
    EvalInputs::new(predicted, argmax, scores, truth, truth_class, n_shared, out_label).map_err(py_err)
}

/// Area under the CCR/FPR curve. Truth labels equal to `out_label` are OUT.
#[pyfunction]
fn ucr(argmax: Vec<usize>, scores: Vec<f64>, truth: Vec<usize>, n_shared: usize, out_label: usize) -> PyResult<f64> {
    let inputs = eval_inputs(argmax.clone(), argmax, scores, truth, None, n_shared, out_label)?;
    metrics::ucr(&inputs).map_err(py_err)
}

/// Every metric for one set of predictions. Undefined metrics map to `None`.
#[pyfunction]
#[pyo3(signature = (predicted, argmax, scores, truth, n_shared, out_label, truth_class=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    predicted: Vec<usize>,
    argmax: Vec<usize>,
    scores: Vec<f64>,
    truth: Vec<usize>,
    n_shared: usize,
    out_label: usize,
    truth_class: Option<Vec<usize>>,
) -> PyResult<BTreeMap<String, Option<f64>>> {
    let inputs = eval_inputs(predicted, argmax, scores, truth, truth_class, n_shared, out_label)?;
    let report = metrics::evaluate(&inputs).map_err(py_err)?;
    Ok(report
        .metric_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect())
}

/// Fits the teacher temperature on labelled source-class logits. The first
/// half of the classes is in-class, the rest plays the out-class role.
#[pyfunction]
#[pyo3(signature = (logits, labels, n_bins=15))]
fn fit_temperature(logits: Vec<Vec<f64>>, labels: Vec<usize>, n_bins: usize) -> PyResult<BTreeMap<String, f64>> {
    let z = to_array(&logits)?;
    let k = z.ncols();
    let placeholder = Array2::<f32>::zeros((labels.len(), 1));
    let names = (0..k).map(|c| c.to_string()).collect();
    let fs = data::FeatureSet::new(placeholder, labels, names, "python").map_err(py_err)?;
    let split = data::make_label_split(k, k, 0, "closed").map_err(py_err)?;
    let view = data::project_domain(Arc::new(fs), &split, data::Role::Source);
    let cal_split = data::split_source_by_class(&view).map_err(py_err)?;
    let config = CalibrationConfig {
        n_bins,
        ..CalibrationConfig::default()
    };
    let r = unida::fit_temperature(&z, view.labels(), &cal_split, &config).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("tau_opt".to_string(), r.tau_opt),
        ("objective".to_string(), r.objective),
        ("objective_at_one".to_string(), r.objective_at_one),
        ("ece_in".to_string(), r.ece_in),
        ("ece_out".to_string(), r.ece_out),
        ("nll_in".to_string(), r.nll_in),
    ]))
}

/// Aggregated result of one experiment config.
#[pyclass(name = "ExperimentReport", module = "unida_py", get_all)]
struct PyExperimentReport {
    name: String,
    method: String,
    split: String,
    tau: Option<f64>,
    seeds: Vec<u64>,
    mean: BTreeMap<String, Option<f64>>,
    std: BTreeMap<String, Option<f64>>,
    runs: Vec<BTreeMap<String, Option<f64>>>,
    table: String,
}

#[pymethods]
impl PyExperimentReport {
    fn __repr__(&self) -> String {
        format!(
            "ExperimentReport(name={:?}, method={}, split={}, tau={:?})",
            self.name, self.method, self.split, self.tau
        )
    }
}

/// Runs the experiment described by a config file.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: PathBuf) -> PyResult<PyExperimentReport> {
    let report = py
        .detach(|| {
            let cfg = unida::ExperimentConfig::from_file(&config_path)?;
            unida::run_experiment(&cfg)
        })
        .map_err(py_err)?;
    let names = metrics::METRIC_NAMES;
    Ok(PyExperimentReport {
        name: report.name.clone(),
        method: report.method.name().to_string(),
        split: report.split.clone(),
        tau: report.tau,
        seeds: report.runs.iter().map(|r| r.seed).collect(),
        mean: names.iter().map(|&n| (n.to_string(), report.mean(n))).collect(),
        std: names.iter().map(|&n| (n.to_string(), report.std(n))).collect(),
        runs: report
            .runs
            .iter()
            .map(|r| {
                r.report
                    .metric_values()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect()
            })
            .collect(),
        table: unida::emit_tables(std::slice::from_ref(&report), unida::runner::TableFormat::Markdown),
    })
}

#[pymodule]
fn unida_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureSet>()?;
    m.add_class::<PyLabelSplit>()?;
    m.add_class::<PyExperimentReport>()?;
    m.add_function(wrap_pyfunction!(make_label_split, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(scores, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(h_score, m)?)?;
    m.add_function(wrap_pyfunction!(h3_score, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ucr, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
