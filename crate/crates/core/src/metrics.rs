//! UniDA evaluation: per-class accuracies, H-score, H³-score with NMI, and
//! the threshold-free universal classification rate (UCR).

use std::collections::BTreeMap;

use crate::data::DomainView;
use crate::error::{Result, UnidaError};
use crate::scoring::Predictions;

/// Everything the metrics need about one target run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInputs {
    /// Predicted source class or `out_label` for rejected samples.
    pub predicted: Vec<usize>,
    /// Closed-set argmax, used by the CCR curve.
    pub argmax: Vec<usize>,
    pub scores: Vec<f64>,
    /// Ground truth in source-index space, `out_label` for target-private rows.
    pub truth: Vec<usize>,
    /// Original class ids, used to cluster target-private rows for NMI.
    pub truth_class: Vec<usize>,
    pub n_shared: usize,
    pub out_label: usize,
}

impl EvalInputs {
    pub fn new(
        predicted: Vec<usize>,
        argmax: Vec<usize>,
        scores: Vec<f64>,
        truth: Vec<usize>,
        truth_class: Vec<usize>,
        n_shared: usize,
        out_label: usize,
    ) -> Result<Self> {
        let n = truth.len();
        if [predicted.len(), argmax.len(), scores.len(), truth_class.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(UnidaError::Shape("evaluation inputs differ in length".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(UnidaError::Domain("non-finite score".into()));
        }
        Ok(EvalInputs {
            predicted,
            argmax,
            scores,
            truth,
            truth_class,
            n_shared,
            out_label,
        })
    }

    /// Pairs predictions with the target view they were made on.
    pub fn from_predictions(p: &Predictions, target: &DomainView) -> Result<Self> {
        if p.labels.len() != target.len() {
            return Err(UnidaError::Shape(format!(
                "{} predictions for {} target rows",
                p.labels.len(),
                target.len()
            )));
        }
        if p.out_label != target.out_label() {
            return Err(UnidaError::Shape(format!(
                "classifier has {} classes, task has {}",
                p.out_label,
                target.out_label()
            )));
        }
        EvalInputs::new(
            p.labels.clone(),
            p.argmax.clone(),
            p.scores.clone(),
            target.labels().to_vec(),
            target.original_labels(),
            target.n_shared(),
            target.out_label(),
        )
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    fn is_out(&self, i: usize) -> bool {
        self.truth[i] == self.out_label
    }

    pub fn n_out(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_out(i)).count()
    }

    pub fn n_in(&self) -> usize {
        self.len() - self.n_out()
    }
}

/// Per-class accuracy for each shared class that has target samples.
fn shared_class_accuracies(inputs: &EvalInputs) -> Vec<f64> {
    let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in inputs.truth.iter().zip(&inputs.predicted) {
        if t != inputs.out_label && t < inputs.n_shared {
            let e = per_class.entry(t).or_default();
            e.0 += 1;
            if p == t {
                e.1 += 1;
            }
        }
    }
    per_class
        .values()
        .map(|&(n, c)| c as f64 / n as f64)
        .collect()
}

/// Macro accuracy over the shared classes.
pub fn acc_in(inputs: &EvalInputs) -> Result<f64> {
    let accs = shared_class_accuracies(inputs);
    if accs.is_empty() {
        return Err(UnidaError::Domain("no in-class target samples".into()));
    }
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

/// Fraction of target-private samples rejected as OUT; `None` if there are none.
pub fn acc_out(inputs: &EvalInputs) -> Option<f64> {
    let n_out = inputs.n_out();
    if n_out == 0 {
        return None;
    }
    let rejected = (0..inputs.len())
        .filter(|&i| inputs.is_out(i) && inputs.predicted[i] == inputs.out_label)
        .count();
    Some(rejected as f64 / n_out as f64)
}

/// Mean over the shared classes plus the OUT superclass (when present).
pub fn avg_class_accuracy(inputs: &EvalInputs) -> Result<f64> {
    let mut accs = shared_class_accuracies(inputs);
    if accs.is_empty() {
        return Err(UnidaError::Domain("no in-class target samples".into()));
    }
    accs.extend(acc_out(inputs));
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

/// Harmonic mean of `acc_in` and `acc_out`.
pub fn h_score(acc_in: f64, acc_out: f64) -> f64 {
    if acc_in + acc_out == 0.0 {
        0.0
    } else {
        2.0 * acc_in * acc_out / (acc_in + acc_out)
    }
}

/// Harmonic mean of the three components; 0 if any is 0.
pub fn h3_score(acc_in: f64, acc_out: f64, nmi: f64) -> f64 {
    if acc_in <= 0.0 || acc_out <= 0.0 || nmi <= 0.0 {
        0.0
    } else {
        3.0 / (1.0 / acc_in + 1.0 / acc_out + 1.0 / nmi)
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(A;B) / ((H(A) + H(B)) / 2)`.
///
/// Two single-cluster partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(UnidaError::Shape(format!(
            "nmi needs equal, nonempty inputs ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = ca[&x] as f64 / n;
            let py = cb[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// NMI between predictions (OUT as one cluster) and true private classes,
/// over target-private samples only.
pub fn private_nmi(inputs: &EvalInputs) -> Result<Option<f64>> {
    let (pred, truth): (Vec<usize>, Vec<usize>) = (0..inputs.len())
        .filter(|&i| inputs.is_out(i))
        .map(|i| (inputs.predicted[i], inputs.truth_class[i]))
        .unzip();
    if pred.is_empty() {
        return Ok(None);
    }
    nmi(&pred, &truth).map(Some)
}

/// One point of the CCR-vs-FPR curve: counts of samples with `score > threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub ccr: f64,
    pub fpr: f64,
}

struct Sweep {
    points: Vec<CurvePoint>,
}

fn sweep(inputs: &EvalInputs) -> Result<Sweep> {
    let n_in = inputs.n_in();
    let n_out = inputs.n_out();
    if inputs.is_empty() {
        return Err(UnidaError::Domain("empty target".into()));
    }
    if n_in == 0 {
        return Err(UnidaError::Domain("no in-class target samples".into()));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&i, &j| inputs.scores[j].total_cmp(&inputs.scores[i]));
    let denom_out = n_out.max(1) as f64;
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        ccr: 0.0,
        fpr: 0.0,
    }];
    let (mut correct, mut false_pos) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = inputs.scores[order[k]];
        while k < order.len() && inputs.scores[order[k]] == s {
            let i = order[k];
            if inputs.is_out(i) {
                false_pos += 1;
            } else if inputs.argmax[i] == inputs.truth[i] {
                correct += 1;
            }
            k += 1;
        }
        let threshold = if k < order.len() {
            inputs.scores[order[k]]
        } else {
            f64::NEG_INFINITY
        };
        points.push(CurvePoint {
            threshold,
            ccr: correct as f64 / n_in as f64,
            fpr: false_pos as f64 / denom_out,
        });
    }
    Ok(Sweep { points })
}

/// CCR/FPR pairs by descending threshold, from `+∞` down to `-∞`; score ties
/// cross the threshold together. `None` when there are no out-class samples.
pub fn ccr_fpr_curve(inputs: &EvalInputs) -> Result<Option<Vec<CurvePoint>>> {
    if inputs.n_out() == 0 {
        return Ok(None);
    }
    sweep(inputs).map(|s| Some(s.points))
}

/// Step-function area under the CCR-vs-FPR curve, or closed-set accuracy on
/// in-class samples when the target has no out-class samples.
pub fn ucr(inputs: &EvalInputs) -> Result<f64> {
    let s = sweep(inputs)?;
    if inputs.n_out() == 0 {
        return Ok(s.points.last().map_or(0.0, |p| p.ccr));
    }
    Ok(s
        .points
        .windows(2)
        .map(|w| w[1].ccr * (w[1].fpr - w[0].fpr))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub acc_in: f64,
    /// `None` when the target has no out-class samples.
    pub acc_out: Option<f64>,
    pub nmi: Option<f64>,
    pub h_score: f64,
    pub h3_score: f64,
    pub ucr: f64,
    pub avg_class_acc: f64,
    pub curve: Vec<CurvePoint>,
    pub n_in: usize,
    pub n_out: usize,
}

impl EvalReport {
    /// Metric values in a fixed column order, for table emission.
    pub fn metric_values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("h_score", Some(self.h_score)),
            ("h3_score", Some(self.h3_score)),
            ("ucr", Some(self.ucr)),
            ("acc_in", Some(self.acc_in)),
            ("acc_out", self.acc_out),
            ("nmi", self.nmi),
            ("avg_class_acc", Some(self.avg_class_acc)),
        ]
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,ccr,fpr\n");
        for p in &self.curve {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.ccr, p.fpr));
        }
        s
    }
}

pub const METRIC_NAMES: [&str; 7] = [
    "h_score",
    "h3_score",
    "ucr",
    "acc_in",
    "acc_out",
    "nmi",
    "avg_class_acc",
];

/// Computes every metric. Without out-class samples H and H³ fall back to `acc_in`.
pub fn evaluate(inputs: &EvalInputs) -> Result<EvalReport> {
    let acc_in = acc_in(inputs)?;
    let acc_out = acc_out(inputs);
    let nmi = private_nmi(inputs)?;
    let (h, h3) = match (acc_out, nmi) {
        (Some(ao), Some(m)) => (h_score(acc_in, ao), h3_score(acc_in, ao, m)),
        _ => (acc_in, acc_in),
    };
    Ok(EvalReport {
        acc_in,
        acc_out,
        nmi,
        h_score: h,
        h3_score: h3,
        ucr: ucr(inputs)?,
        avg_class_acc: avg_class_accuracy(inputs)?,
        curve: ccr_fpr_curve(inputs)?.unwrap_or_default(),
        n_in: inputs.n_in(),
        n_out: inputs.n_out(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OUT: usize = 3;

    fn inputs(pred: &[usize], argmax: &[usize], scores: &[f64], truth: &[usize]) -> EvalInputs {
        let truth_class = truth.iter().map(|&t| if t == OUT { 10 } else { t }).collect();
        EvalInputs::new(
            pred.to_vec(),
            argmax.to_vec(),
            scores.to_vec(),
            truth.to_vec(),
            truth_class,
            3,
            OUT,
        )
        .unwrap()
    }

    #[test]
    fn h_score_examples() {
        assert_eq!(h_score(1.0, 1.0), 1.0);
        assert!((h_score(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-12);
        assert_eq!(h_score(0.7, 0.0), 0.0);
        assert_eq!(h_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn h3_score_examples() {
        assert_eq!(h3_score(1.0, 1.0, 1.0), 1.0);
        assert!((h3_score(0.4, 0.4, 0.4) - 0.4).abs() < 1e-15);
        let expected = 3.0 / (1.0 / 0.8 + 1.0 / 0.6 + 1.0 / 0.7);
        assert!((h3_score(0.8, 0.6, 0.7) - expected).abs() < 1e-15);
        assert!((h3_score(0.8, 0.6, 0.7) - 0.690_410_958_904_109_6).abs() < 1e-12);
        assert_eq!(h3_score(0.8, 0.0, 0.7), 0.0);
    }

    #[test]
    fn avg_class_accuracy_hand_confusion() {
        // class 0: 2/2, class 1: 1/2, class 2: 0/1, OUT: 2/3
        let truth = [0, 0, 1, 1, 2, OUT, OUT, OUT];
        let pred = [0, 0, 1, 0, OUT, OUT, OUT, 1];
        let inp = inputs(&pred, &pred, &[0.0; 8], &truth);
        let expected = (1.0 + 0.5 + 0.0 + 2.0 / 3.0) / 4.0;
        assert!((avg_class_accuracy(&inp).unwrap() - expected).abs() < 1e-15);
        assert!((acc_in(&inp).unwrap() - 0.5).abs() < 1e-15);
        assert!((acc_out(&inp).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_setting_is_macro_average() {
        let truth = [0, 1, 1, 2];
        let pred = [0, 1, 2, 2];
        let inp = inputs(&pred, &pred, &[0.0; 4], &truth);
        assert!((avg_class_accuracy(&inp).unwrap() - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-15);
        let r = evaluate(&inp).unwrap();
        assert_eq!(r.h_score, r.acc_in);
        assert_eq!(r.h3_score, r.acc_in);
        assert_eq!(r.acc_out, None);
        assert!(r.curve.is_empty());
    }

    #[test]
    fn all_out_targets_predicted_out() {
        let truth = [0, OUT, OUT];
        let pred = [OUT, OUT, OUT];
        let r = evaluate(&inputs(&pred, &[0, 0, 0], &[0.1, 0.2, 0.3], &truth)).unwrap();
        assert_eq!(r.acc_in, 0.0);
        assert_eq!(r.acc_out, Some(1.0));
        assert_eq!(r.h_score, 0.0);
    }

    #[test]
    fn no_in_class_is_error() {
        let inp = inputs(&[OUT], &[0], &[0.0], &[OUT]);
        assert!(matches!(avg_class_accuracy(&inp), Err(UnidaError::Domain(_))));
        assert!(ucr(&inp).is_err());
    }

    #[test]
    fn nmi_hand_case() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [0, 0, 0, 1, 1, 1];
        // H(A) = ln 3; H(B) = ln 2
        // joint cells: (0,0)=2, (1,0)=1, (1,1)=1, (2,1)=2 over n=6
        let ha = 3f64.ln();
        let hb = 2f64.ln();
        let p = |c: f64, px: f64, py: f64| (c / 6.0) * ((c / 6.0) / (px * py)).ln();
        let mi = p(2.0, 1.0 / 3.0, 0.5) * 2.0 + p(1.0, 1.0 / 3.0, 0.5) * 2.0;
        let expected = mi / ((ha + hb) / 2.0);
        assert!((nmi(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((nmi(&a, &[5, 5, 7, 7, 9, 9]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[1, 1], &[4, 4]).unwrap(), 1.0);
        assert_eq!(nmi(&[1, 1], &[4, 5]).unwrap(), 0.0);
        assert!(nmi(&[], &[]).is_err());
    }

    #[test]
    fn nmi_independent_partitions_near_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..5)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        assert!(nmi(&a, &b).unwrap() < 0.02);
    }

    #[test]
    fn perfect_separation_gives_unit_ucr() {
        let truth = [0, 1, 2, OUT, OUT];
        let argmax = [0, 1, 2, 0, 1];
        let scores = [5.0, 4.0, 3.0, 1.0, 0.0];
        let inp = inputs(&argmax, &argmax, &scores, &truth);
        let curve = ccr_fpr_curve(&inp).unwrap().unwrap();
        assert!(curve.iter().any(|p| p.fpr == 0.0 && p.ccr == 1.0));
        assert_eq!(curve[0], CurvePoint { threshold: f64::INFINITY, ccr: 0.0, fpr: 0.0 });
        let last = curve.last().unwrap();
        assert_eq!((last.threshold, last.ccr, last.fpr), (f64::NEG_INFINITY, 1.0, 1.0));
        assert_eq!(ucr(&inp).unwrap(), 1.0);
    }

    #[test]
    fn ucr_closed_branch_is_accuracy() {
        let truth: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let mut argmax = truth.clone();
        argmax[4] = (argmax[4] + 1) % 3;
        let scores: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let inp = inputs(&argmax, &argmax, &scores, &truth);
        assert_eq!(ucr(&inp).unwrap(), 0.9);
        assert_eq!(ccr_fpr_curve(&inp).unwrap(), None);
    }

    #[test]
    fn tied_scores_cross_together() {
        let truth = [0, OUT];
        let argmax = [0, 0];
        let inp = inputs(&argmax, &argmax, &[1.0, 1.0], &truth);
        let curve = ccr_fpr_curve(&inp).unwrap().unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(ucr(&inp).unwrap(), 1.0);
    }

    fn random_instance() -> impl Strategy<Value = EvalInputs> {
        prop::collection::vec((0usize..4, 0usize..3, -3i32..3), 2..40).prop_map(|rows| {
            let mut truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
            truth[0] = 0;
            let argmax: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let scores: Vec<f64> = rows.iter().map(|r| f64::from(r.2) * 0.5).collect();
            inputs(&argmax, &argmax, &scores, &truth)
        })
    }

    proptest! {
        #[test]
        fn ucr_bounded_by_closed_set_accuracy(inp in random_instance()) {
            let u = ucr(&inp).unwrap();
            let n_in = inp.n_in() as f64;
            let ceiling = (0..inp.len())
                .filter(|&i| inp.truth[i] != OUT && inp.argmax[i] == inp.truth[i])
                .count() as f64 / n_in;
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!(u <= ceiling + 1e-12);
        }

        #[test]
        fn ucr_invariant_under_monotone_maps(inp in random_instance(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let base = ucr(&inp).unwrap();
            let mut affine = inp.clone();
            affine.scores = inp.scores.iter().map(|s| a * s + b).collect();
            let mut expd = inp.clone();
            expd.scores = inp.scores.iter().map(|s| s.exp()).collect();
            prop_assert_eq!(ucr(&affine).unwrap(), base);
            prop_assert_eq!(ucr(&expd).unwrap(), base);
        }

        #[test]
        fn curve_is_monotone(inp in random_instance()) {
            if let Some(curve) = ccr_fpr_curve(&inp).unwrap() {
                for w in curve.windows(2) {
                    prop_assert!(w[1].threshold < w[0].threshold);
                    prop_assert!(w[1].ccr >= w[0].ccr && w[1].fpr >= w[0].fpr);
                }
            }
        }

        #[test]
        fn h_symmetry(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert!((h_score(a, b) - h_score(b, a)).abs() < 1e-15);
            prop_assert!((h_score(a, a) - a).abs() < 1e-15);
            prop_assert!(h_score(a, b) <= a.max(b) + 1e-15);
            prop_assert!(h_score(a, b) >= a.min(b) - 1e-15);
        }

        #[test]
        fn nmi_invariant_under_relabeling(a in prop::collection::vec(0usize..4, 1..50), b_seed in prop::collection::vec(0usize..3, 50)) {
            let b: Vec<usize> = b_seed[..a.len()].to_vec();
            let relabeled: Vec<usize> = a.iter().map(|x| (x + 1) * 7 % 11).collect();
            let m = nmi(&a, &b).unwrap();
            prop_assert!((m - nmi(&relabeled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((m - nmi(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&m));
        }

        #[test]
        fn evaluate_ignores_sample_order(inp in random_instance(), seed in 0u64..50) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..inp.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pick = |v: &[usize]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let shuffled = EvalInputs::new(
                pick(&inp.predicted),
                pick(&inp.argmax),
                perm.iter().map(|&i| inp.scores[i]).collect(),
                pick(&inp.truth),
                pick(&inp.truth_class),
                inp.n_shared,
                inp.out_label,
            ).unwrap();
            let r1 = evaluate(&inp).unwrap();
            let r2 = evaluate(&shuffled).unwrap();
            prop_assert_eq!(r1.curve.clone(), r2.curve.clone());
            prop_assert!((r1.ucr - r2.ucr).abs() < 1e-15);
            prop_assert!((r1.h_score - r2.h_score).abs() < 1e-15);
            prop_assert!((r1.avg_class_acc - r2.avg_class_acc).abs() < 1e-15);
            prop_assert_eq!(r1.nmi.map(|x| (x * 1e12).round()), r2.nmi.map(|x| (x * 1e12).round()));
        }
    }
}
