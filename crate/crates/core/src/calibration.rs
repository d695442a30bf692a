//! Temperature scaling fitted on source data.
//!
//! The source view is split by class into an in-class half and an out-class
//! half. The temperature minimizes the sum of in-class binned ECE,
//! out-class distance-to-uniform, and in-class mean NLL.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array2, Axis};

use crate::data::CalibrationSplit;
use crate::error::{Result, UnidaError};
use crate::scoring::{argmax, softmax_rows};

pub const DEFAULT_BINS: usize = 15;
const PROB_FLOOR: f64 = 1e-12;

/// Equal-width confidence bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean max-probability per bin (0 for empty bins).
    pub confidence: Vec<f64>,
    /// Fraction of correct argmax predictions per bin (0 for empty bins).
    pub accuracy: Vec<f64>,
}

impl ReliabilityBins {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count-weighted mean gap between accuracy and confidence.
    pub fn ece(&self) -> f64 {
        let n = self.total() as f64;
        self.counts
            .iter()
            .zip(self.accuracy.iter().zip(&self.confidence))
            .map(|(&c, (a, f))| c as f64 / n * (a - f).abs())
            .sum()
    }

    /// `bin_lo,bin_hi,count,conf,acc` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count,conf,acc\n");
        for k in 0..self.n_bins() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.edges[k],
                self.edges[k + 1],
                self.counts[k],
                self.confidence[k],
                self.accuracy[k]
            );
        }
        s
    }
}

fn check_nonempty(probs: &Array2<f64>, what: &str) -> Result<()> {
    if probs.nrows() == 0 {
        Err(UnidaError::Domain(format!("{what}: no samples")))
    } else {
        Ok(())
    }
}

fn check_labels(probs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != probs.nrows() {
        return Err(UnidaError::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            probs.nrows()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= probs.ncols()) {
        return Err(UnidaError::Domain(format!(
            "label {l} outside {} columns",
            probs.ncols()
        )));
    }
    Ok(())
}

/// Bins samples by max probability. A confidence on an interior edge falls
/// in the upper bin; confidence 1 falls in the last bin.
pub fn reliability_bins(probs: &Array2<f64>, labels: &[usize], n_bins: usize) -> Result<ReliabilityBins> {
    if n_bins == 0 {
        return Err(UnidaError::Config("n_bins must be at least 1".into()));
    }
    check_labels(probs, labels)?;
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    let mut counts = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    for (row, &label) in probs.axis_iter(Axis(0)).zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let bin = edges[1..n_bins].partition_point(|&e| e <= conf);
        counts[bin] += 1;
        conf_sum[bin] += conf;
        if pred == label {
            correct[bin] += 1;
        }
    }
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    Ok(ReliabilityBins {
        confidence: conf_sum.iter().zip(&counts).map(|(&s, &c)| mean(s, c)).collect(),
        accuracy: correct
            .iter()
            .zip(&counts)
            .map(|(&k, &c)| mean(k as f64, c))
            .collect(),
        edges,
        counts,
    })
}

/// Binned expected calibration error of in-class samples.
pub fn ece_in(probs: &Array2<f64>, labels: &[usize], n_bins: usize) -> Result<f64> {
    check_nonempty(probs, "ece_in")?;
    Ok(reliability_bins(probs, labels, n_bins)?.ece())
}

/// Mean distance between max probability and `1/N` over out-class samples.
pub fn ece_out(probs: &Array2<f64>, n_inclass_categories: usize) -> Result<f64> {
    check_nonempty(probs, "ece_out")?;
    if n_inclass_categories != probs.ncols() {
        return Err(UnidaError::Shape(format!(
            "{} probability columns for {n_inclass_categories} in-class categories",
            probs.ncols()
        )));
    }
    let uniform = 1.0 / n_inclass_categories as f64;
    let total: f64 = probs
        .axis_iter(Axis(0))
        .map(|row| (row[argmax(row)] - uniform).abs())
        .sum();
    Ok(total / probs.nrows() as f64)
}

/// Mean negative log-likelihood of the labels, probabilities floored at 1e-12.
pub fn nll_in(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_nonempty(probs, "nll_in")?;
    check_labels(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// The three calibration terms at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub ece_in: f64,
    pub ece_out: f64,
    pub nll_in: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.ece_in + self.ece_out + self.nll_in
    }
}

pub fn objective_terms(
    tau: f64,
    logits_in: &Array2<f64>,
    labels_in: &[usize],
    logits_out: &Array2<f64>,
    n_bins: usize,
) -> Result<ObjectiveTerms> {
    let p_in = softmax_rows(logits_in, tau)?;
    let p_out = softmax_rows(logits_out, tau)?;
    Ok(ObjectiveTerms {
        ece_in: ece_in(&p_in, labels_in, n_bins)?,
        ece_out: ece_out(&p_out, logits_out.ncols())?,
        nll_in: nll_in(&p_in, labels_in)?,
    })
}

/// `ECE_in + ECE_out + NLL_in` of `softmax(logits / tau)`.
pub fn calibration_objective(
    tau: f64,
    logits_in: &Array2<f64>,
    labels_in: &[usize],
    logits_out: &Array2<f64>,
    n_bins: usize,
) -> Result<f64> {
    Ok(objective_terms(tau, logits_in, labels_in, logits_out, n_bins)?.total())
}

/// Which teacher columns the out-class half is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutColumns {
    /// Only the in-class columns (the out-class half must look uniform over them).
    Restricted,
    /// Every source column.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub n_bins: usize,
    pub grid_points: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Relative tolerance on `tau` for the golden-section refinement.
    pub rel_tol: f64,
    pub out_columns: OutColumns,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            n_bins: DEFAULT_BINS,
            grid_points: 200,
            tau_min: 1e-3,
            tau_max: 1e2,
            rel_tol: 1e-4,
            out_columns: OutColumns::Restricted,
        }
    }
}

impl CalibrationConfig {
    /// The log-spaced search grid.
    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.tau_min, self.tau_max, self.grid_points)
    }

    fn validate(&self) -> Result<()> {
        if self.n_bins == 0 || self.grid_points < 2 {
            return Err(UnidaError::Config("need n_bins >= 1 and grid_points >= 2".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max && self.tau_max.is_finite()) {
            return Err(UnidaError::Config(format!(
                "bad temperature range [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(UnidaError::Config("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// `points` values log-uniformly spaced over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub tau_opt: f64,
    pub ece_in: f64,
    pub ece_out: f64,
    pub nll_in: f64,
    pub objective: f64,
    pub bins_in: ReliabilityBins,
    /// Objective at `tau = 1`, for reference.
    pub objective_at_one: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub in_classes: Vec<usize>,
    pub out_classes: Vec<usize>,
}

impl CalibrationResult {
    /// Key-value text report.
    pub fn to_report(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "tau_opt={}", self.tau_opt);
        let _ = writeln!(s, "objective={}", self.objective);
        let _ = writeln!(s, "ece_in={}", self.ece_in);
        let _ = writeln!(s, "ece_out={}", self.ece_out);
        let _ = writeln!(s, "nll_in={}", self.nll_in);
        let _ = writeln!(s, "objective_at_tau_1={}", self.objective_at_one);
        let _ = writeln!(s, "nll_reduction=mean");
        let _ = writeln!(s, "n_bins={}", self.bins_in.n_bins());
        let _ = writeln!(s, "n_in={}", self.n_in);
        let _ = writeln!(s, "n_out={}", self.n_out);
        let _ = writeln!(s, "in_classes={}", join(&self.in_classes));
        let _ = writeln!(s, "out_classes={}", join(&self.out_classes));
        s
    }
}

/// Calibration data restricted to the columns the objective scores against.
#[derive(Debug, Clone)]
pub struct CalibrationData {
    pub logits_in: Array2<f64>,
    pub labels_in: Vec<usize>,
    pub logits_out: Array2<f64>,
}

impl CalibrationData {
    /// Partitions teacher rows by class and relabels the in-class half into
    /// the restricted column space.
    pub fn from_split(
        teacher_logits: &Array2<f64>,
        labels: &[usize],
        split: &CalibrationSplit,
        out_columns: OutColumns,
    ) -> Result<Self> {
        if teacher_logits.nrows() != labels.len() {
            return Err(UnidaError::Shape(format!(
                "{} teacher rows for {} labels",
                teacher_logits.nrows(),
                labels.len()
            )));
        }
        let k = teacher_logits.ncols();
        let in_set: BTreeSet<usize> = split.in_classes.iter().copied().collect();
        let out_set: BTreeSet<usize> = split.out_classes.iter().copied().collect();
        if in_set.is_empty() || out_set.is_empty() || !in_set.is_disjoint(&out_set) {
            return Err(UnidaError::Config(
                "calibration split needs disjoint, nonempty halves".into(),
            ));
        }
        if let Some(&c) = in_set.iter().chain(&out_set).find(|&&c| c >= k) {
            return Err(UnidaError::Config(format!(
                "class {c} has no teacher column ({k} columns)"
            )));
        }
        let columns: Vec<usize> = split.in_classes.clone();
        let column_of = |c: usize| columns.iter().position(|&x| x == c);
        let out_cols: Vec<usize> = match out_columns {
            OutColumns::Restricted => columns.clone(),
            OutColumns::All => (0..k).collect(),
        };
        let mut in_rows = Vec::new();
        let mut labels_in = Vec::new();
        let mut out_rows = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            if in_set.contains(&l) {
                in_rows.push(i);
                labels_in.push(column_of(l).expect("in-class label has a column"));
            } else if out_set.contains(&l) {
                out_rows.push(i);
            }
        }
        if in_rows.is_empty() || out_rows.is_empty() {
            return Err(UnidaError::Config(
                "calibration split has an empty half".into(),
            ));
        }
        let pick = |rows: &[usize], cols: &[usize]| {
            Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
                teacher_logits[[rows[i], cols[j]]]
            })
        };
        Ok(CalibrationData {
            logits_in: pick(&in_rows, &columns),
            labels_in,
            logits_out: pick(&out_rows, &out_cols),
        })
    }

    pub fn objective(&self, tau: f64, n_bins: usize) -> Result<f64> {
        calibration_objective(tau, &self.logits_in, &self.labels_in, &self.logits_out, n_bins)
    }

    pub fn terms(&self, tau: f64, n_bins: usize) -> Result<ObjectiveTerms> {
        objective_terms(tau, &self.logits_in, &self.labels_in, &self.logits_out, n_bins)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]`, returning the best point evaluated.
fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fd < fc { (d, fd) } else { (c, fc) };
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

/// Fits the temperature on the source calibration split.
///
/// A log-spaced grid is scanned first; ties go to the grid point nearest
/// `tau = 1`. Golden-section search in log-temperature then refines between
/// the best point's grid neighbours, and `tau = 1` itself is kept if it does
/// strictly better. A candidate replaces the incumbent only when it strictly
/// lowers the objective.
pub fn fit_temperature(
    teacher_logits: &Array2<f64>,
    labels: &[usize],
    split: &CalibrationSplit,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    config.validate()?;
    let data = CalibrationData::from_split(teacher_logits, labels, split, config.out_columns)?;
    let n_bins = config.n_bins;
    let grid = config.grid();
    let values = grid
        .iter()
        .map(|&t| data.objective(t, n_bins))
        .collect::<Result<Vec<f64>>>()?;

    let mut best_idx = 0;
    for i in 1..grid.len() {
        let better = values[i] < values[best_idx]
            || (values[i] == values[best_idx] && grid[i].ln().abs() < grid[best_idx].ln().abs());
        if better {
            best_idx = i;
        }
    }
    let mut best = (grid[best_idx], values[best_idx]);

    let lo = grid[best_idx.saturating_sub(1)].ln();
    let hi = grid[(best_idx + 1).min(grid.len() - 1)].ln();
    let (log_tau, refined) = golden_section(
        |lt| data.objective(lt.exp(), n_bins),
        lo,
        hi,
        config.rel_tol,
    )?;
    if refined < best.1 {
        best = (log_tau.exp(), refined);
    }
    let objective_at_one = data.objective(1.0, n_bins)?;
    if objective_at_one < best.1 {
        best = (1.0, objective_at_one);
    }

    let tau_opt = best.0;
    let terms = data.terms(tau_opt, n_bins)?;
    let p_in = softmax_rows(&data.logits_in, tau_opt)?;
    Ok(CalibrationResult {
        tau_opt,
        ece_in: terms.ece_in,
        ece_out: terms.ece_out,
        nll_in: terms.nll_in,
        objective: terms.total(),
        bins_in: reliability_bins(&p_in, &data.labels_in, n_bins)?,
        objective_at_one,
        n_in: data.labels_in.len(),
        n_out: data.logits_out.nrows(),
        in_classes: split.in_classes.clone(),
        out_classes: split.out_classes.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn ece_in_extremes() {
        let probs = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert_eq!(ece_in(&probs, &[0, 1, 0], 15).unwrap(), 0.0);
        assert_eq!(ece_in(&probs, &[1, 0, 1], 15).unwrap(), 1.0);
        assert!(matches!(
            ece_in(&Array2::zeros((0, 2)), &[], 15),
            Err(UnidaError::Domain(_))
        ));
    }

    #[test]
    fn ece_in_hand_binned() {
        // two bins, edges 0, 0.5, 1
        // bin 1 (conf >= 0.5): rows a (0.9, correct), b (0.6, wrong), c (0.7, correct)
        // bin 0: row d conf 0.4 (three classes), correct
        let probs = array![
            [0.9, 0.1, 0.0],
            [0.6, 0.4, 0.0],
            [0.3, 0.7, 0.0],
            [0.4, 0.3, 0.3]
        ];
        let labels = [0, 1, 1, 0];
        // bin 1: acc 2/3, conf (0.9+0.6+0.7)/3 = 2.2/3, gap 0.2/3, weight 3/4
        // bin 0: acc 1, conf 0.4, gap 0.6, weight 1/4
        let expected = 0.75 * (0.2 / 3.0) + 0.25 * 0.6;
        let got = ece_in(&probs, &labels, 2).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn single_bin_is_global_average() {
        let probs = array![[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]];
        let b = reliability_bins(&probs, &[0, 0, 0], 1).unwrap();
        assert_eq!(b.counts, vec![3]);
        assert!((b.confidence[0] - (0.9 + 0.7 + 0.6) / 3.0).abs() < 1e-15);
        assert!((b.accuracy[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn edge_confidence_goes_up() {
        let probs = array![[0.5, 0.5], [0.25, 0.75], [1.0, 0.0]];
        let b = reliability_bins(&probs, &[0, 1, 0], 4).unwrap();
        assert_eq!(b.counts, vec![0, 0, 1, 2]);
    }

    #[test]
    fn ece_out_examples() {
        let u = Array2::from_elem((3, 4), 0.25);
        assert_eq!(ece_out(&u, 4).unwrap(), 0.0);
        let oh = array![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        assert_eq!(ece_out(&oh, 4).unwrap(), 0.75);
        let mixed = array![[0.5, 0.3, 0.2], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.1, 0.1, 0.8]];
        let oracle: f64 = [0.5, 1.0 / 3.0, 0.8]
            .iter()
            .map(|c| (c - 1.0 / 3.0f64).abs())
            .sum::<f64>()
            / 3.0;
        assert!((ece_out(&mixed, 3).unwrap() - oracle).abs() < 1e-15);
        assert!(ece_out(&mixed, 4).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll_in(&array![[1.0, 0.0], [0.0, 1.0]], &[0, 1]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((nll_in(&array![[1.0 / e, 1.0 - 1.0 / e]], &[0]).unwrap() - 1.0).abs() < 1e-15);
        let probs = array![[0.5, 0.5], [0.25, 0.75], [0.875, 0.125]];
        let got = nll_in(&probs, &[0, 0, 1]).unwrap();
        assert!((got - 1.386_294_361_119_890_6).abs() < 1e-12);
        // floor keeps zero probabilities finite
        let got = nll_in(&array![[0.0, 1.0]], &[0]).unwrap();
        assert!((got - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn objective_is_sum_of_terms_and_limits() {
        let li = array![[3.0, 0.0, -1.0], [0.5, 2.0, 0.0], [0.0, 0.0, 4.0]];
        let lo = array![[1.0, 0.8, 0.9], [2.0, -1.0, 0.0]];
        let labels = [0, 1, 0];
        for &t in &[0.01, 0.3, 1.0, 7.0] {
            let total = calibration_objective(t, &li, &labels, &lo, 15).unwrap();
            let pi = softmax_rows(&li, t).unwrap();
            let po = softmax_rows(&lo, t).unwrap();
            let parts = ece_in(&pi, &labels, 15).unwrap()
                + ece_out(&po, 3).unwrap()
                + nll_in(&pi, &labels).unwrap();
            assert!((total - parts).abs() < 1e-12);
            assert!(total >= 0.0);
        }
        let hot = objective_terms(1e8, &li, &labels, &lo, 15).unwrap();
        assert!(hot.ece_out < 1e-6);
        assert!((hot.nll_in - 3f64.ln()).abs() < 1e-6);
        assert!(matches!(
            calibration_objective(0.0, &li, &labels, &lo, 15),
            Err(UnidaError::Domain(_))
        ));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| Ok((x - 0.3) * (x - 0.3) + 1.0), -1.0, 2.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_spans_range() {
        let g = CalibrationConfig::default().grid();
        assert_eq!(g.len(), 200);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert_eq!(g[199], 1e2);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn ece_invariant_under_permutation(rows in prop::collection::vec((prop::collection::vec(0.01f64..1.0, 3), 0usize..3), 1..30), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = rows.len();
            let mut probs = Array2::zeros((n, 3));
            let mut labels = Vec::new();
            for (i, (r, l)) in rows.iter().enumerate() {
                let s: f64 = r.iter().sum();
                for j in 0..3 { probs[[i, j]] = r[j] / s; }
                labels.push(*l);
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pp = Array2::from_shape_fn((n, 3), |(i, j)| probs[[perm[i], j]]);
            let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let a = ece_in(&probs, &labels, 15).unwrap();
            let b = ece_in(&pp, &pl, 15).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((ece_out(&probs, 3).unwrap() - ece_out(&pp, 3).unwrap()).abs() < 1e-12);
            let bins = reliability_bins(&probs, &labels, 15).unwrap();
            prop_assert_eq!(bins.total(), n);
            prop_assert!((bins.ece() - a).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn objective_terms_nonnegative(v in prop::collection::vec(-20.0f64..20.0, 12), tau in 0.001f64..100.0) {
            let li = Array2::from_shape_vec((2, 3), v[..6].to_vec()).unwrap();
            let lo = Array2::from_shape_vec((2, 3), v[6..].to_vec()).unwrap();
            let t = objective_terms(tau, &li, &[0, 2], &lo, 15).unwrap();
            prop_assert!(t.ece_in >= 0.0 && t.ece_out >= 0.0 && t.nll_in >= 0.0);
        }
    }
}
