use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LabeledScore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Result<T> {
    if xs.is_empty() {
        return Err(Error::Empty("mean of an empty list"));
    }
    Ok(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

pub fn population_std<T: Scalar>(xs: &[T]) -> Result<T> {
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Ok((ss / T::from_count(xs.len())).sqrt())
}

fn sample_variance<T: Scalar>(xs: &[T]) -> Result<T> {
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Ok(ss / T::from_count(xs.len() - 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZScored<T = f64> {
    /// Same order as the input, with `score` replaced by the within-task z-score.
    pub scores: Vec<LabeledScore<T>>,
    /// Tasks whose scores had zero spread; their members all get z = 0.
    pub degenerate_tasks: Vec<String>,
}

/// Standardizes scores within each task using the population standard deviation.
pub fn zscore_per_task<T: Scalar>(scores: &[LabeledScore<T>]) -> ZScored<T> {
    let mut groups: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for s in scores {
        groups.entry(s.task_id.as_str()).or_default().push(s.score);
    }
    let moments: BTreeMap<&str, (T, T)> = groups
        .iter()
        .map(|(task, xs)| {
            let m = mean(xs).expect("nonempty group");
            let sd = population_std(xs).expect("nonempty group");
            (*task, (m, sd))
        })
        .collect();
    let degenerate_tasks = moments
        .iter()
        .filter(|(_, (_, sd))| *sd == T::zero())
        .map(|(task, _)| task.to_string())
        .collect();
    let scores = scores
        .iter()
        .map(|s| {
            let (m, sd) = moments[s.task_id.as_str()];
            let z = if sd == T::zero() { T::zero() } else { (s.score - m) / sd };
            LabeledScore { score: z, ..s.clone() }
        })
        .collect();
    ZScored {
        scores,
        degenerate_tasks,
    }
}

/// Standardized mean difference with the pooled sample standard deviation.
pub fn cohens_d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "effect size needs at least 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (T::from_count(a.len()), T::from_count(b.len()));
    let pooled =
        ((na - T::one()) * sample_variance(a)? + (nb - T::one()) * sample_variance(b)?) / (na + nb - T::lit(2.0));
    if !(pooled > T::zero()) {
        return Err(Error::Undefined("effect size with zero pooled variance".into()));
    }
    Ok((mean(a)? - mean(b)?) / pooled.sqrt())
}

/// 1-based ranks with ties replaced by the average of the ranks they span.
pub fn midranks<T: Scalar>(xs: &[T]) -> Result<Vec<T>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rank input"));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && xs[order[end + 1]] == xs[order[start]] {
            end += 1;
        }
        // positions start..=end hold ranks start+1..=end+1
        let rank = T::from_count(start + end + 2) / T::lit(2.0);
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    Ok(ranks)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlations<T = f64> {
    pub pearson: T,
    pub spearman: T,
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let (mx, my) = (mean(x)?, mean(y)?);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::Undefined("correlation with a constant series".into()));
    }
    // sqrt of the product is exact when sxx == syy, so perfectly ranked data give exactly ±1
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

pub fn correlations<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlations<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs 3 pairs, got {}",
            x.len()
        )));
    }
    Ok(Correlations {
        pearson: pearson(x, y)?,
        spearman: pearson(&midranks(x)?, &midranks(y)?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn task(id: &str, xs: &[f64]) -> Vec<LabeledScore> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| LabeledScore::new(id, i as u64, x, i % 2 == 0))
            .collect()
    }

    #[test]
    fn zscore_examples() {
        let out = zscore_per_task(&task("a", &[1.0, 2.0, 3.0]));
        let z: Vec<f64> = out.scores.iter().map(|s| s.score).collect();
        let k = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(z[0], -k, epsilon = 1e-12);
        assert_eq!(z[1], 0.0);
        assert_abs_diff_eq!(z[2], k, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2], 1.2247, epsilon = 1e-4);
        assert!(out.degenerate_tasks.is_empty());

        let single = zscore_per_task(&task("solo", &[0.7]));
        assert_eq!(single.scores[0].score, 0.0);
        assert_eq!(single.degenerate_tasks, vec!["solo".to_string()]);
    }

    #[test]
    fn zscore_standardizes_each_task_separately() {
        let mut all = task("lo", &[0.1, 0.2, 0.4, 0.3]);
        all.extend(task("hi", &[10.0, 30.0, 20.0]));
        let out = zscore_per_task(&all);
        for id in ["lo", "hi"] {
            let z: Vec<f64> = out.scores.iter().filter(|s| s.task_id == id).map(|s| s.score).collect();
            assert_abs_diff_eq!(mean(&z).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(population_std(&z).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cohens_d_examples() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]).unwrap(), -2.0);
        assert_eq!(cohens_d(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 0.0);
        assert!(matches!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Undefined(_))));
        assert!(matches!(cohens_d(&[1.0], &[1.0, 2.0]), Err(Error::InsufficientData(_))));
        assert_eq!(cohens_d(&[1.0f32, 2.0, 3.0], &[3.0, 4.0, 5.0]).unwrap(), -2.0);
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = correlations(&x, &affine).unwrap();
        assert_abs_diff_eq!(c.pearson, 1.0, epsilon = 1e-12);
        assert_eq!(c.spearman, 1.0);

        let cubed: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        let c = correlations(&x, &cubed).unwrap();
        assert!(c.pearson > -1.0 && c.pearson < 0.0);
        assert_eq!(c.spearman, -1.0);

        let c = correlations(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(c.spearman, -0.5, epsilon = 1e-15);
        assert!(correlations(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(correlations(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_matches_the_rank_difference_formula() {
        // without ties rho = 1 - 6 Σ d² / (n (n² - 1))
        let x = [0.3, 1.7, -2.0, 5.5, 0.9, 3.1];
        let y = [2.0, 0.1, 0.4, 3.3, -1.0, 7.0];
        let (rx, ry) = (midranks(&x).unwrap(), midranks(&y).unwrap());
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        let want = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        assert_abs_diff_eq!(correlations(&x, &y).unwrap().spearman, want, epsilon = 1e-12);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[5.0, 1.0, 5.0, 2.0]).unwrap(), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn cohens_d_is_antisymmetric(
            a in prop::collection::vec(-10.0f64..10.0, 2..20),
            b in prop::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            if let Ok(d) = cohens_d(&a, &b) {
                prop_assert_eq!(d, -cohens_d(&b, &a).unwrap());
            }
        }

        #[test]
        fn zscore_is_idempotent(xs in prop::collection::vec((0usize..3, -5.0f64..5.0), 1..40)) {
            let input: Vec<LabeledScore> = xs
                .iter()
                .enumerate()
                .map(|(i, &(t, x))| LabeledScore::new(format!("t{t}"), i as u64, x, false))
                .collect();
            let once = zscore_per_task(&input).scores;
            let twice = zscore_per_task(&once).scores;
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a.score - b.score).abs() < 1e-9);
            }
        }

        #[test]
        fn spearman_is_bounded_and_exact_on_monotone_pairs(xs in prop::collection::hash_set(-1000i32..1000, 3..30)) {
            let x: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let up: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
            let down: Vec<f64> = x.iter().map(|v| -v * 3.0).collect();
            prop_assert_eq!(correlations(&x, &up).unwrap().spearman, 1.0);
            prop_assert_eq!(correlations(&x, &down).unwrap().spearman, -1.0);
            let shuffled: Vec<f64> = x.iter().rev().map(|v| (v * 0.37).sin()).collect();
            if let Ok(c) = correlations(&x, &shuffled) {
                prop_assert!(c.spearman.abs() <= 1.0 && c.pearson.abs() <= 1.0);
            }
        }
    }
}
