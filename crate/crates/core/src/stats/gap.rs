use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCurve<T = f64> {
    /// Success mean minus failure mean, one entry per step.
    pub values: Vec<T>,
    /// The curve stops early because one class had no episode left.
    pub truncated: bool,
}

/// Per-step difference between the mean of successful and failed series. Each step averages
/// over the episodes still running at that step.
pub fn gap_curve<T: Scalar>(success: &[Vec<T>], failure: &[Vec<T>]) -> Result<GapCurve<T>> {
    if success.is_empty() || failure.is_empty() {
        return Err(Error::InsufficientData("gap curve needs both classes".into()));
    }
    let longest = success.iter().chain(failure).map(Vec::len).max().unwrap_or(0);
    let alive_mean = |group: &[Vec<T>], t: usize| {
        let alive: Vec<T> = group.iter().filter_map(|s| s.get(t).copied()).collect();
        (!alive.is_empty()).then(|| alive.iter().copied().sum::<T>() / T::from_count(alive.len()))
    };
    let mut values = Vec::with_capacity(longest);
    for t in 0..longest {
        match (alive_mean(success, t), alive_mean(failure, t)) {
            (Some(s), Some(f)) => values.push(s - f),
            _ => {
                return Ok(GapCurve {
                    values,
                    truncated: true,
                })
            }
        }
    }
    Ok(GapCurve {
        values,
        truncated: false,
    })
}
