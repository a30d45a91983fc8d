use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::describe::midranks;
use super::logistic::{fit_logistic_1d, LogisticFit};
use super::LabeledScore;
use crate::error::{Error, Result};
use crate::primitives::RngStream;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T = f64> {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(T, T)>,
    pub auc: T,
}

impl<T: Scalar> RocCurve<T> {
    pub fn trapezoid_area(points: &[(T, T)]) -> T {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / T::lit(2.0))
            .sum()
    }
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData("AUC needs both classes".into()));
    }
    Ok((pos, neg))
}

fn check_aligned<T>(scores: &[T], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties counting one half.
pub fn auc_raw<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check_aligned(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let ranks = midranks(scores)?;
    let rank_sum: T = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(&r, _)| r).sum();
    let np = T::from_count(pos);
    // rank sums are half-integers, so U is exact
    let u = rank_sum - np * (np + T::one()) / T::lit(2.0);
    Ok(u / (np * T::from_count(neg)))
}

/// ROC by sweeping the threshold down through every distinct score.
pub fn roc_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<RocCurve<T>> {
    check_aligned(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("ROC scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap_or(Ordering::Equal));
    let (np, nn) = (T::from_count(pos), T::from_count(neg));
    let mut points = vec![(T::zero(), T::zero())];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((T::from_count(fp) / nn, T::from_count(tp) / np));
    }
    let auc = RocCurve::trapezoid_area(&points);
    Ok(RocCurve { points, auc })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult<T = f64> {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub fit: LogisticFit<T>,
    /// AUC of the fitted classifier on the held-out episodes.
    pub oof_auc: T,
    /// AUC of the raw feature on the same held-out episodes.
    pub raw_auc: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T = f64> {
    /// Pooled out-of-fold ROC.
    pub roc: RocCurve<T>,
    pub folds: Vec<FoldResult<T>>,
    pub k_requested: usize,
    pub k_used: usize,
    /// Fewer folds than requested because a class had fewer members than folds.
    pub k_reduced: bool,
}

/// Stratified k-fold cross-validated logistic classifier on the scores. Out-of-fold linear
/// predictors from every fold are pooled into one ROC.
pub fn roc_auc_cv<T: Scalar>(
    scores: &[LabeledScore<T>],
    k_folds: usize,
    stream: &mut RngStream,
) -> Result<CvReport<T>> {
    if k_folds < 2 {
        return Err(Error::config(format!("cross-validation needs k >= 2, got {k_folds}")));
    }
    let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
    let (pos, neg) = class_counts(&labels)?;
    let k = k_folds.min(pos).min(neg);
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs 2 members per class, got {pos} positive and {neg} negative"
        )));
    }

    let mut fold_of = vec![0usize; scores.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(stream);
        for (j, i) in members.into_iter().enumerate() {
            fold_of[i] = j % k;
        }
    }

    let mut pooled = vec![T::zero(); scores.len()];
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..scores.len()).partition(|&i| fold_of[i] != fold);
        let fx: Vec<T> = train.iter().map(|&i| scores[i].score).collect();
        let fy: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let fit = fit_logistic_1d(&fx, &fy)?;
        let raw: Vec<T> = test.iter().map(|&i| scores[i].score).collect();
        let ty: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let logits: Vec<T> = raw.iter().map(|&x| fit.logit(x)).collect();
        for (&i, &l) in test.iter().zip(&logits) {
            pooled[i] = l;
        }
        folds.push(FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            fit,
            oof_auc: auc_raw(&logits, &ty)?,
            raw_auc: auc_raw(&raw, &ty)?,
        });
    }

    Ok(CvReport {
        roc: roc_curve(&pooled, &labels)?,
        folds,
        k_requested: k_folds,
        k_used: k,
        k_reduced: k < k_folds,
    })
}
