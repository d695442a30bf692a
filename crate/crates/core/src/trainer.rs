//! Linear-head training on frozen features: source-only cross-entropy and
//! distillation toward temperature-scaled teacher probabilities.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DomainView, UnlabeledView};
use crate::error::{Result, UnidaError};
use crate::scoring::{prototype_logits, softmax_rows, Classifier, LinearHead, PrototypeBank};

/// Iteration budget used when no per-task budget is given, sized for quick runs.
pub const DESK_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
            iterations: DESK_ITERATIONS,
            warmup_iters: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(UnidaError::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(UnidaError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(UnidaError::Config("batch_size must be at least 1".into()));
        }
        if self.warmup_iters > self.iterations {
            return Err(UnidaError::Config(format!(
                "warmup_iters {} exceeds iterations {}",
                self.warmup_iters, self.iterations
            )));
        }
        Ok(())
    }
}

/// Linear warmup from 0, then cosine decay to 0.
pub fn lr_schedule(iter: usize, config: &TrainConfig) -> f64 {
    let warmup = config.warmup_iters;
    if iter < warmup {
        return config.lr * iter as f64 / warmup as f64;
    }
    let span = (config.iterations - warmup).max(1) as f64;
    let progress = (iter - warmup) as f64 / span;
    config.lr * 0.5 * (1.0 + (PI * progress).cos())
}

/// Per-iteration batch losses and the final head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub head: LinearHead,
}

fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn check_distributions(q: &Array2<f64>) -> Result<()> {
    for (i, row) in q.axis_iter(Axis(0)).enumerate() {
        let sum = row.sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(UnidaError::Domain(format!(
                "target row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn loss_and_grad_unchecked(head: &LinearHead, x: &Array2<f64>, q: &Array2<f64>) -> (f64, LinearHead) {
    let n = x.nrows() as f64;
    let logits = x.dot(&head.weights.t()) + &head.bias;
    let log_p = log_softmax_rows(&logits);
    let loss = -q
        .iter()
        .zip(log_p.iter())
        .filter(|(&qk, _)| qk > 0.0)
        .map(|(&qk, &lp)| qk * lp)
        .sum::<f64>()
        / n;
    let residual = (log_p.mapv(f64::exp) - q) / n;
    let grad = LinearHead {
        weights: residual.t().dot(x),
        bias: residual.sum_axis(Axis(0)),
    };
    (loss, grad)
}

/// Mean cross-entropy `H(q, softmax(W x + b))` over the batch and its exact
/// gradient with respect to the head.
pub fn ce_loss_and_grad(head: &LinearHead, x: &Array2<f64>, q: &Array2<f64>) -> Result<(f64, LinearHead)> {
    if x.ncols() != head.dim() || q.ncols() != head.n_classes() || x.nrows() != q.nrows() {
        return Err(UnidaError::Shape(format!(
            "batch {:?} / targets {:?} incompatible with head {}x{}",
            x.dim(),
            q.dim(),
            head.n_classes(),
            head.dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(UnidaError::Domain("empty batch".into()));
    }
    check_distributions(q)?;
    Ok(loss_and_grad_unchecked(head, x, q))
}

fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

/// Momentum SGD over epoch-wise shuffled minibatches, starting from a zero head.
fn sgd(x: &Array2<f64>, q: &Array2<f64>, config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(UnidaError::Config("no training samples".into()));
    }
    check_distributions(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = LinearHead::zeros(q.ncols(), x.ncols());
    let mut velocity = LinearHead::zeros(q.ncols(), x.ncols());
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut losses = Vec::with_capacity(config.iterations);
    for iter in 0..config.iterations {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(n);
        let batch = &order[cursor..end];
        cursor = end;
        let (loss, grad) =
            loss_and_grad_unchecked(&head, &select_rows(x, batch), &select_rows(q, batch));
        losses.push(loss);
        let lr = lr_schedule(iter, config);
        velocity.weights = &velocity.weights * config.momentum + &grad.weights;
        velocity.bias = &velocity.bias * config.momentum + &grad.bias;
        head.weights.scaled_add(-lr, &velocity.weights);
        head.bias.scaled_add(-lr, &velocity.bias);
    }
    Ok(TrainTrace { losses, head })
}

/// Cross-entropy training on labeled source rows.
pub fn train_source_only(source: &DomainView, config: &TrainConfig) -> Result<TrainTrace> {
    if source.is_empty() {
        return Err(UnidaError::Config("source view is empty".into()));
    }
    let k = source.n_source();
    let mut q = Array2::zeros((source.len(), k));
    for (i, &l) in source.labels().iter().enumerate() {
        if l >= k {
            return Err(UnidaError::Config(format!("source row {i} has OUT label")));
        }
        q[[i, l]] = 1.0;
    }
    sgd(&source.features(), &q, config)
}

/// Trains a head on unlabeled target features toward `softmax(teacher / tau)`.
pub fn distill(
    target: &UnlabeledView,
    teacher_logits: &Array2<f64>,
    tau: f64,
    config: &TrainConfig,
) -> Result<TrainTrace> {
    if teacher_logits.nrows() != target.len() {
        return Err(UnidaError::Shape(format!(
            "{} teacher rows for {} target rows",
            teacher_logits.nrows(),
            target.len()
        )));
    }
    let q = softmax_rows(teacher_logits, tau)?;
    sgd(target.features(), &q, config)
}

/// The untrained variant: teacher prototypes divided by the temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedModelHead {
    bank: PrototypeBank,
    tau: f64,
}

impl FixedModelHead {
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Classifier for FixedModelHead {
    fn n_classes(&self) -> usize {
        self.bank.n_classes()
    }

    fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(prototype_logits(&self.bank, features)? / self.tau)
    }
}

pub fn fixed_model_head(bank: &PrototypeBank, tau: f64) -> Result<FixedModelHead> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(UnidaError::Domain(format!("temperature must be positive, got {tau}")));
    }
    Ok(FixedModelHead {
        bank: bank.clone(),
        tau,
    })
}

/// Mean `KL(p || q)` between row distributions.
pub fn mean_kl(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let total: f64 = p
        .iter()
        .zip(q.iter())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a.ln() - b.max(1e-300).ln()))
        .sum();
    total / p.nrows() as f64
}

/// Stores `[Wᵀ; b]`, a `(d + 1) × K` matrix, so a head fits the embedding container.
pub fn head_to_matrix(head: &LinearHead) -> Array2<f32> {
    let (k, d) = head.weights.dim();
    Array2::from_shape_fn((d + 1, k), |(r, c)| {
        if r < d {
            head.weights[[c, r]] as f32
        } else {
            head.bias[c] as f32
        }
    })
}

pub fn head_from_matrix(m: &Array2<f32>) -> Result<LinearHead> {
    let (rows, k) = m.dim();
    if rows < 2 || k == 0 {
        return Err(UnidaError::Format(format!("head matrix {rows}x{k} too small")));
    }
    let d = rows - 1;
    let weights = Array2::from_shape_fn((k, d), |(c, r)| f64::from(m[[r, c]]));
    let bias = Array1::from_shape_fn(k, |c| f64::from(m[[d, c]]));
    LinearHead::new(weights, bias)
}
