use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T = f64> {
    pub intercept: T,
    pub slope: T,
    pub iterations: usize,
    pub converged: bool,
    /// The classes are perfectly separated by the feature; coefficients are not finite-MLE.
    pub separated: bool,
}

impl<T: Scalar> LogisticFit<T> {
    /// Linear predictor `intercept + slope · x`.
    pub fn logit(&self, x: T) -> T {
        self.intercept + self.slope * x
    }

    pub fn probability(&self, x: T) -> T {
        sigmoid(self.logit(x))
    }
}

fn perfectly_separated<T: Scalar>(x: &[T], y: &[bool]) -> bool {
    let bounds = |class: bool| {
        x.iter()
            .zip(y)
            .filter(|(_, &l)| l == class)
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (&v, _)| {
                (lo.min(v), hi.max(v))
            })
    };
    let (pos_lo, pos_hi) = bounds(true);
    let (neg_lo, neg_hi) = bounds(false);
    pos_lo > neg_hi || neg_lo > pos_hi
}

/// Maximum-likelihood logistic regression on one feature, fitted by iteratively reweighted
/// least squares from a zero start.
pub fn fit_logistic_1d<T: Scalar>(x: &[T], y: &[bool]) -> Result<LogisticFit<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic features"));
    }
    let positives = y.iter().filter(|&&l| l).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::InsufficientData("logistic fit needs both classes".into()));
    }

    let separated = perfectly_separated(x, y);
    let tol = T::lit(TOLERANCE);
    let (mut b0, mut b1) = (T::zero(), T::zero());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mut g0, mut g1) = (T::zero(), T::zero());
        let (mut h00, mut h01, mut h11) = (T::zero(), T::zero(), T::zero());
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(b0 + b1 * xi);
            let r = if yi { T::one() - p } else { -p };
            let w = p * (T::one() - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > T::epsilon() * h00 * h11) {
            // weights have vanished (saturated fit) or the feature is constant
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        b0 += d0;
        b1 += d1;
        if d0.abs().max(d1.abs()) < tol {
            converged = true;
            break;
        }
    }
    Ok(LogisticFit {
        intercept: b0,
        slope: b1,
        iterations,
        converged: converged && !separated,
        separated,
    })
}
