//! Binary-classification metrics: confusion matrix, accuracy / precision /
//! recall / F1, ROC-AUC (Mann–Whitney with half-credit ties) and
//! precision–recall curves.
//!
//! Metrics whose denominator is empty are `None` ("undefined"), never 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty batch")]
    Empty,
    #[error("length mismatch: {labels} labels vs {probs} scores")]
    LengthMismatch { labels: usize, probs: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("confusion matrix is all zero")]
    AllZero,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// 2×2 CSV, rows = actual class, columns = predicted class.
    pub fn to_csv(&self) -> String {
        format!(
            "actual,predicted_negative,predicted_positive\nnegative,{},{}\npositive,{},{}\n",
            self.tn, self.fp, self.fn_, self.tp
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn check_batch(labels: &[bool], probs: &[f64]) -> Result<(), MetricError> {
    if labels.len() != probs.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            probs: probs.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

/// `prob >= threshold` counts as a positive prediction.
pub fn confusion(labels: &[bool], probs: &[f64], threshold: f64) -> Result<ConfusionMatrix, MetricError> {
    check_batch(labels, probs)?;
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(probs) {
        match (y, p >= threshold) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

pub fn derived_metrics(cm: &ConfusionMatrix) -> Result<DerivedMetrics, MetricError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricError::AllZero);
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(DerivedMetrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Indices sorted by score ascending; ties keep input order.
fn ascending(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    idx
}

/// Area under the ROC curve via the rank-sum statistic; tied scores get
/// their average rank, i.e. each positive/negative tie contributes ½.
pub fn roc_auc(labels: &[bool], probs: &[f64]) -> Result<f64, MetricError> {
    check_batch(labels, probs)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let order = ascending(probs);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // ranks are 1-based: the tied block i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Cumulative (tp, fp) at each distinct score, scanning from the highest
/// score down. Entry `k` is for threshold `thresholds[k]` (descending).
fn sweep(labels: &[bool], probs: &[f64]) -> (Vec<f64>, Vec<(u64, u64)>) {
    let mut order = ascending(probs);
    order.reverse();
    let mut thresholds = Vec::new();
    let mut counts = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (pos, &k) in order.iter().enumerate() {
        if labels[k] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_block = pos + 1 == order.len() || probs[order[pos + 1]] != probs[k];
        if last_of_block {
            thresholds.push(probs[k]);
            counts.push((tp, fp));
        }
    }
    (thresholds, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One ROC point per distinct score, plus the (0, 0) origin.
pub fn roc_curve(labels: &[bool], probs: &[f64]) -> Result<Vec<RocPoint>, MetricError> {
    check_batch(labels, probs)?;
    let n_pos = labels.iter().filter(|&&y| y).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(MetricError::SingleClass);
    }
    let (thresholds, counts) = sweep(labels, probs);
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    out.extend(thresholds.iter().zip(&counts).map(|(&t, &(tp, fp))| RocPoint {
        threshold: t,
        fpr: fp as f64 / n_neg,
        tpr: tp as f64 / n_pos,
    }));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision–recall pairs at up to `points` thresholds taken at evenly
/// spaced quantiles of the distinct scores (always including the lowest and
/// highest score), sorted by recall ascending.
pub fn pr_curve(labels: &[bool], probs: &[f64], points: usize) -> Result<Vec<PrPoint>, MetricError> {
    check_batch(labels, probs)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let (thresholds, counts) = sweep(labels, probs);
    let d = thresholds.len();
    let points = points.max(1);
    let mut picks: Vec<usize> = if points >= d {
        (0..d).collect()
    } else if points == 1 {
        vec![d - 1]
    } else {
        (0..points)
            .map(|k| ((k * (d - 1)) as f64 / (points - 1) as f64).round() as usize)
            .collect()
    };
    picks.dedup();
    let mut out: Vec<PrPoint> = picks
        .into_iter()
        .map(|i| {
            let (tp, fp) = counts[i];
            PrPoint {
                threshold: thresholds[i],
                recall: tp as f64 / n_pos as f64,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.recall
            .total_cmp(&b.recall)
            .then(b.threshold.total_cmp(&a.threshold))
    });
    Ok(out)
}

/// Everything `eval` reports for one labeled batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n: u64,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
}

impl MetricReport {
    pub fn from_counts(cm: ConfusionMatrix, threshold: f64) -> Result<Self, MetricError> {
        let d = derived_metrics(&cm)?;
        Ok(MetricReport {
            n: cm.total(),
            threshold,
            confusion: cm,
            accuracy: d.accuracy,
            precision: d.precision,
            recall: d.recall,
            f1: d.f1,
            roc_auc: None,
        })
    }

    pub fn from_scores(labels: &[bool], probs: &[f64], threshold: f64) -> Result<Self, MetricError> {
        let cm = confusion(labels, probs, threshold)?;
        let mut r = Self::from_counts(cm, threshold)?;
        r.roc_auc = roc_auc(labels, probs).ok();
        Ok(r)
    }
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

pub fn pr_csv(points: &[PrPoint]) -> String {
    let mut s = String::from("threshold,recall,precision\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.recall, p.precision);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_pair() {
        let cm = confusion(&[true, false], &[0.9, 0.1], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 0, 0));
    }

    #[test]
    fn zero_threshold_predicts_all_positive() {
        let labels = [true, false, false, true, false];
        let cm = confusion(&labels, &[0.2, 0.0, 0.4, 0.9, 0.1], 0.0).unwrap();
        assert_eq!(cm.fp, 3);
        assert_eq!(cm.tn, 0);
    }

    #[test]
    fn batch_errors() {
        assert_eq!(confusion(&[], &[], 0.5).unwrap_err(), MetricError::Empty);
        assert!(matches!(confusion(&[true], &[0.1, 0.2], 0.5), Err(MetricError::LengthMismatch { .. })));
        assert_eq!(derived_metrics(&ConfusionMatrix::default()).unwrap_err(), MetricError::AllZero);
        assert_eq!(roc_auc(&[true, true], &[0.1, 0.2]).unwrap_err(), MetricError::SingleClass);
        assert_eq!(pr_curve(&[false, false], &[0.1, 0.2], 5).unwrap_err(), MetricError::NoPositives);
    }

    #[test]
    fn reported_confusion_counts() {
        let d = derived_metrics(&ConfusionMatrix::new(2434, 2448, 53, 65)).unwrap();
        // tp/(tp+fp) = 2434/2487, tp/(tp+fn) = 2434/2499, (tp+tn)/5000
        assert!((d.precision.unwrap() - 2434.0 / 2487.0).abs() < 1e-15);
        assert!((d.recall.unwrap() - 2434.0 / 2499.0).abs() < 1e-15);
        assert!((d.accuracy - 4882.0 / 5000.0).abs() < 1e-15);
        assert!((d.precision.unwrap() - 0.97869).abs() < 1e-5);
        assert!((d.recall.unwrap() - 0.97399).abs() < 1e-5);
        assert!((d.f1.unwrap() - 0.97633).abs() < 1e-5);
        assert!((d.accuracy - 0.97640).abs() < 1e-5);
    }

    #[test]
    fn perfect_and_undefined() {
        let d = derived_metrics(&ConfusionMatrix::new(5, 7, 0, 0)).unwrap();
        assert_eq!((d.accuracy, d.precision, d.recall, d.f1), (1.0, Some(1.0), Some(1.0), Some(1.0)));
        let d = derived_metrics(&ConfusionMatrix::new(0, 7, 0, 3)).unwrap();
        assert_eq!(d.precision, None);
        assert_eq!(d.recall, Some(0.0));
        assert_eq!(d.f1, None);
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(roc_auc(&[false, false, true, true], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, false, true, false], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn auc_of_independent_scores_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let labels: Vec<bool> = (0..10_000).map(|_| rng.gen_bool(0.5)).collect();
        let probs: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let auc = roc_auc(&labels, &probs).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    /// Pairwise-count oracle for the AUC.
    fn auc_pairs(labels: &[bool], probs: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if probs[i] > probs[j] {
                        1.0
                    } else if probs[i] == probs[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            // coarse scores so ties are common
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let a = roc_auc(&labels, &probs).unwrap();
            assert!((a - auc_pairs(&labels, &probs)).abs() < 1e-12);
        }
    }

    #[test]
    fn pr_curve_cases() {
        let c = pr_curve(&[false, false, true, true], &[0.1, 0.2, 0.8, 0.9], 10).unwrap();
        let perfect: Vec<_> = c.iter().filter(|p| p.recall <= 1.0 && p.threshold >= 0.8).collect();
        assert!(perfect.iter().all(|p| p.precision == 1.0));

        // single positive ranked last
        let n = 7;
        let mut labels = vec![false; n];
        labels[0] = true;
        let probs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let c = pr_curve(&labels, &probs, 100).unwrap();
        let full = c.iter().find(|p| p.recall == 1.0).unwrap();
        assert!((full.precision - 1.0 / n as f64).abs() < 1e-15);

        // endpoints and ordering
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<bool> = (0..200).map(|_| rng.gen_bool(0.3)).collect();
        let probs: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
        let c = pr_curve(&labels, &probs, 11).unwrap();
        assert!(c.len() <= 11);
        assert_eq!(c.last().unwrap().recall, 1.0);
        assert!(c.windows(2).all(|w| w[0].recall <= w[1].recall));
        let top = probs.iter().copied().fold(f64::MIN, f64::max);
        let top_recall = labels.iter().zip(&probs).filter(|(&y, &p)| y && p >= top).count() as f64
            / labels.iter().filter(|&&y| y).count() as f64;
        assert_eq!(c[0].recall, top_recall);
    }

    #[test]
    fn perfect_classifier_pr() {
        let labels = [true, true, false, false, true];
        let probs = [0.9, 0.8, 0.1, 0.2, 0.7];
        let c = pr_curve(&labels, &probs, 3).unwrap();
        assert!(c.iter().filter(|p| p.threshold >= 0.7).all(|p| p.precision == 1.0));
    }

    #[test]
    fn derived_metrics_match_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.gen_range(1..30);
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let probs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let t = rng.gen();
            let cm = confusion(&labels, &probs, t).unwrap();
            assert_eq!(cm.total(), n as u64);
            let d = derived_metrics(&cm).unwrap();
            let pred: Vec<bool> = probs.iter().map(|&p| p >= t).collect();
            let correct = labels.iter().zip(&pred).filter(|(a, b)| a == b).count();
            assert_eq!(d.accuracy, correct as f64 / n as f64);
            let tp = labels.iter().zip(&pred).filter(|(&a, &b)| a && b).count();
            let pp = pred.iter().filter(|&&b| b).count();
            let ap = labels.iter().filter(|&&a| a).count();
            assert_eq!(d.precision, (pp > 0).then(|| tp as f64 / pp as f64));
            assert_eq!(d.recall, (ap > 0).then(|| tp as f64 / ap as f64));
            if let (Some(p), Some(r), Some(f)) = (d.precision, d.recall, d.f1) {
                assert!(p.min(r) - 1e-12 <= f && f <= p.max(r) + 1e-12);
            }
        }
    }

    #[test]
    fn csv_outputs() {
        let cm = ConfusionMatrix::new(4, 3, 2, 1);
        assert_eq!(
            cm.to_csv(),
            "actual,predicted_negative,predicted_positive\nnegative,3,2\npositive,1,4\n"
        );
        let roc = roc_curve(&[true, false], &[0.9, 0.1]).unwrap();
        assert_eq!(roc_csv(&roc), "threshold,fpr,tpr\ninf,0,0\n0.9,0,1\n0.1,1,1\n");
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            seed in any::<u64>(),
            n in 2usize..60,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let a = roc_auc(&labels, &probs).unwrap();
            let cubed: Vec<f64> = probs.iter().map(|p| (3.0 * p).exp() + p.powi(3)).collect();
            let logit: Vec<f64> = probs.iter().map(|p| (p + 0.01).ln()).collect();
            prop_assert!((a - roc_auc(&labels, &cubed).unwrap()).abs() < 1e-12);
            prop_assert!((a - roc_auc(&labels, &logit).unwrap()).abs() < 1e-12);
        }
    }
}
