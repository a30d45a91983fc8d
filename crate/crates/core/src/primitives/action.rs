use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Wraps an angle in radians onto `[-π, π)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let shifted = theta + pi;
    let mut r = shifted - two_pi * (shifted / two_pi).floor();
    // rounding can land exactly on 2π for tiny negative inputs
    if r >= two_pi {
        r = T::zero();
    }
    r - pi
}

/// A control command with a Euclidean part and a rotational part.
///
/// Angular entries always live on `[-π, π)`; the constructor wraps them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action<T> {
    pub linear: Vec<T>,
    pub angular: Vec<T>,
}

impl<T: Scalar> Action<T> {
    pub fn new(linear: Vec<T>, angular: Vec<T>) -> Self {
        let angular = angular.into_iter().map(wrap_angle).collect();
        Action { linear, angular }
    }

    pub fn zeros(n_linear: usize, n_angular: usize) -> Self {
        Action {
            linear: vec![T::zero(); n_linear],
            angular: vec![T::zero(); n_angular],
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len() + self.angular.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.linear.len() == other.linear.len() && self.angular.len() == other.angular.len()
    }

    /// Componentwise weighted sum over both parts, angles included, followed by wrapping.
    ///
    /// This is a plain Euclidean blend: two headings at +3 and -3 rad average to 0.
    pub fn weighted_blend(actions: &[&Self], weights: &[T]) -> Result<Self> {
        let first = actions.first().ok_or(Error::Empty("action blend"))?;
        if actions.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                left: actions.len(),
                right: weights.len(),
            });
        }
        let mut linear = vec![T::zero(); first.linear.len()];
        let mut angular = vec![T::zero(); first.angular.len()];
        for (a, &w) in actions.iter().zip(weights) {
            if !a.same_shape(first) {
                return Err(Error::DimensionMismatch {
                    left: first.dim(),
                    right: a.dim(),
                });
            }
            for (acc, &x) in linear.iter_mut().zip(&a.linear) {
                *acc += w * x;
            }
            for (acc, &x) in angular.iter_mut().zip(&a.angular) {
                *acc += w * x;
            }
        }
        Ok(Action::new(linear, angular))
    }
}
