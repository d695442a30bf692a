//! Classifier forward passes, scoring functions and the reject rule.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Result, UnidaError};

/// Default inverse temperature for prototype logits (CLIP convention).
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

/// Anything that maps an `n × d` feature matrix to `n × K` logits.
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>>;
}

/// Linear head `W x + b` over the source classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearHead {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(UnidaError::Shape(format!(
                "weights have {} rows, bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(UnidaError::Domain("non-finite head parameter".into()));
        }
        Ok(LinearHead { weights, bias })
    }

    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        LinearHead {
            weights: Array2::zeros((n_classes, dim)),
            bias: Array1::zeros(n_classes),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }
}

impl Classifier for LinearHead {
    fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        head_logits(self, features)
    }
}

/// Row `i` of the result is `W x_i + b`.
pub fn head_logits(head: &LinearHead, features: &Array2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != head.dim() {
        return Err(UnidaError::Shape(format!(
            "features have dimension {}, head expects {}",
            features.ncols(),
            head.dim()
        )));
    }
    Ok(features.dot(&head.weights.t()) + &head.bias)
}

/// Unit-norm class prototypes for nearest-neighbour zero-shot classification.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    prototypes: Array2<f64>,
    logit_scale: f64,
}

impl PrototypeBank {
    /// Rows are normalized here; a zero row is rejected.
    pub fn new(prototypes: Array2<f64>, logit_scale: f64) -> Result<Self> {
        if !(logit_scale > 0.0 && logit_scale.is_finite()) {
            return Err(UnidaError::Domain(format!(
                "logit_scale must be positive, got {logit_scale}"
            )));
        }
        let prototypes = normalize_rows(&prototypes, "prototype")?;
        Ok(PrototypeBank {
            prototypes,
            logit_scale,
        })
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    pub fn logit_scale(&self) -> f64 {
        self.logit_scale
    }

    pub fn with_logit_scale(&self, logit_scale: f64) -> Result<Self> {
        PrototypeBank::new(self.prototypes.clone(), logit_scale)
    }
}

impl Classifier for PrototypeBank {
    fn n_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        prototype_logits(self, features)
    }
}

fn normalize_rows(m: &Array2<f64>, what: &str) -> Result<Array2<f64>> {
    let mut out = m.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(UnidaError::Domain(format!("{what} row {i} has zero norm")));
        }
        row /= norm;
    }
    Ok(out)
}

/// `logit_scale · cos(x_i, prototype_k)`. Feature rows are normalized here.
pub fn prototype_logits(bank: &PrototypeBank, features: &Array2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != bank.prototypes.ncols() {
        return Err(UnidaError::Shape(format!(
            "features have dimension {}, prototypes {}",
            features.ncols(),
            bank.prototypes.ncols()
        )));
    }
    let x = normalize_rows(features, "feature")?;
    Ok(x.dot(&bank.prototypes.t()) * bank.logit_scale)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(UnidaError::Domain(format!("temperature must be positive, got {tau}")))
    }
}

/// `softmax(logits / tau)`, computed with max subtraction.
pub fn softmax(logits: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    check_tau(tau)?;
    let mut out = logits.to_owned();
    softmax_in_place(&mut out.view_mut(), tau);
    Ok(out)
}

fn softmax_in_place(row: &mut ndarray::ArrayViewMut1<f64>, tau: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    row.mapv_inplace(|v| ((v - max) / tau).exp());
    let sum = row.sum();
    *row /= sum;
}

/// Row-wise softmax of `logits / tau`.
pub fn softmax_rows(logits: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    check_tau(tau)?;
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        softmax_in_place(&mut row, tau);
    }
    Ok(out)
}

/// `Σ p log p` with `0 log 0 = 0`; lies in `[-log K, 0]`.
pub fn neg_entropy_score(probs: ArrayView1<f64>) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum()
}

pub fn max_logit_score(logits: ArrayView1<f64>) -> f64 {
    logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

/// Index of the largest entry; lowest index wins ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    NegEntropy,
    MaxLogit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRule {
    pub kind: ScoreKind,
    pub threshold: Option<f64>,
}

impl ScoreRule {
    /// Negative-entropy rule with the `-log(K)/2` threshold.
    pub fn neg_entropy(n_source_classes: usize) -> Result<Self> {
        Ok(ScoreRule {
            kind: ScoreKind::NegEntropy,
            threshold: default_threshold(ScoreKind::NegEntropy, n_source_classes)?,
        })
    }

    pub fn max_logit() -> Self {
        ScoreRule {
            kind: ScoreKind::MaxLogit,
            threshold: None,
        }
    }
}

/// `-log(K)/2` for negative entropy; max-logit scoring has no threshold.
pub fn default_threshold(kind: ScoreKind, n_source_classes: usize) -> Result<Option<f64>> {
    match kind {
        ScoreKind::NegEntropy => {
            if n_source_classes < 2 {
                return Err(UnidaError::Config(format!(
                    "negative-entropy threshold needs at least 2 classes, got {n_source_classes}"
                )));
            }
            Ok(Some(-(n_source_classes as f64).ln() / 2.0))
        }
        ScoreKind::MaxLogit => Ok(None),
    }
}

/// Per-sample scores under `rule.kind`, from `logits / tau`.
pub fn scores(logits: &Array2<f64>, tau: f64, kind: ScoreKind) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(match kind {
        ScoreKind::NegEntropy => softmax_rows(logits, tau)?
            .axis_iter(Axis(0))
            .map(neg_entropy_score)
            .collect(),
        ScoreKind::MaxLogit => logits
            .axis_iter(Axis(0))
            .map(|r| max_logit_score(r) / tau)
            .collect(),
    })
}

/// Output of the reject rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Argmax class, or the OUT sentinel (`K`) for rejected samples.
    pub labels: Vec<usize>,
    /// Closed-set argmax for every sample, rejected or not.
    pub argmax: Vec<usize>,
    pub scores: Vec<f64>,
    pub out_label: usize,
}

/// Predicted class if `score > threshold`, else OUT.
pub fn predict_with_reject(logits: &Array2<f64>, tau: f64, rule: &ScoreRule) -> Result<Predictions> {
    let threshold = rule
        .threshold
        .ok_or_else(|| UnidaError::Config("score rule has no threshold".into()))?;
    let mut p = predict_closed_set(logits, tau, rule.kind)?;
    for (label, &s) in p.labels.iter_mut().zip(&p.scores) {
        if s <= threshold {
            *label = p.out_label;
        }
    }
    Ok(p)
}

/// Argmax predictions with no rejection, plus scores for curve metrics.
pub fn predict_closed_set(logits: &Array2<f64>, tau: f64, kind: ScoreKind) -> Result<Predictions> {
    let scores = scores(logits, tau, kind)?;
    let argmax: Vec<usize> = logits.axis_iter(Axis(0)).map(argmax).collect();
    Ok(Predictions {
        labels: argmax.clone(),
        argmax,
        scores,
        out_label: logits.ncols(),
    })
}
