//! Action-state consistency and latent change.
//!
//! Consistency maps the distance between a predicted and a realized future latent onto
//! `(0, 1]` through `c = exp(-α · d)`. Latent change is the raw distance between the current
//! latent and the latent one control horizon later, a proxy for how much the scene moved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{mse_distance, Latent};
use crate::scalar::Scalar;

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig<T = f64> {
    pub alpha: T,
    pub distance: Distance,
}

impl<T: Scalar> Default for ConsistencyConfig<T> {
    fn default() -> Self {
        ConsistencyConfig {
            alpha: T::lit(DEFAULT_ALPHA),
            distance: Distance::Mse,
        }
    }
}

impl<T: Scalar> ConsistencyConfig<T> {
    pub fn with_alpha(alpha: T) -> Result<Self> {
        let cfg = ConsistencyConfig {
            alpha,
            distance: Distance::Mse,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn distance(&self, a: &Latent<T>, b: &Latent<T>) -> Result<T> {
        match self.distance {
            Distance::Mse => mse_distance(a, b),
        }
    }

    /// `exp(-α · d)` for an already computed distance, kept strictly positive on underflow.
    pub fn score_from_distance(&self, d: T) -> T {
        (-self.alpha * d).exp().max(T::min_positive_value())
    }
}

pub fn consistency_score<T: Scalar>(
    predicted: &Latent<T>,
    realized: &Latent<T>,
    cfg: &ConsistencyConfig<T>,
) -> Result<T> {
    Ok(cfg.score_from_distance(cfg.distance(predicted, realized)?))
}

pub fn latent_change<T: Scalar>(z_now: &Latent<T>, z_future: &Latent<T>) -> Result<T> {
    mse_distance(z_now, z_future)
}

/// Per-decision diagnostics recorded in episode logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    pub c_t: f64,
    pub delta_z: f64,
    pub chosen_branch: usize,
    pub branch_scores: Vec<f64>,
    pub value_pred: Option<f64>,
}

/// Arithmetic mean of per-step consistency.
pub fn episode_consistency(steps: &[StepDiagnostics]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::Empty("episode steps"));
    }
    Ok(steps.iter().map(|s| s.c_t).sum::<f64>() / steps.len() as f64)
}
