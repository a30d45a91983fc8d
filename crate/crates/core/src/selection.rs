//! Test-time branch selection.
//!
//! Every strategy receives the same sampled branches and returns the index it chose together
//! with the per-branch scores it used. Ties always go to the lowest index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consistency::ConsistencyConfig;
use crate::envs::{Env, EnvState, Observation};
use crate::error::{Error, Result};
use crate::primitives::{mean_latent, Action, Latent};
use crate::scalar::Scalar;
use crate::wam::Branch;
use crate::ActionVec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Single,
    ValuePrediction,
    ConsistencyExploring,
    ConsistencyConsensus,
    WeightedConsensus,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Single,
        Strategy::ValuePrediction,
        Strategy::ConsistencyExploring,
        Strategy::ConsistencyConsensus,
        Strategy::WeightedConsensus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::ValuePrediction => "value",
            Strategy::ConsistencyExploring => "exploring",
            Strategy::ConsistencyConsensus => "consensus",
            Strategy::WeightedConsensus => "weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
            Error::config(format!("unknown strategy `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

pub const DEFAULT_CANDIDATES: usize = 8;
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub n_candidates: usize,
    pub tau: f64,
    pub tie_break: TieBreak,
}

impl SelectionConfig {
    pub fn new(strategy: Strategy, n_candidates: usize) -> Self {
        SelectionConfig {
            strategy,
            n_candidates,
            tau: DEFAULT_TAU,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_candidates < 1 {
            return Err(Error::config("candidates must be >= 1"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionOutcome {
    pub chosen_index: usize,
    pub scores: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    /// Action chunk that is actually executed (a blend for the weighted strategy).
    pub executed_action: Vec<ActionVec>,
    /// Environment branch executions consumed while scoring.
    pub exploration_cost: usize,
}

/// Index of the largest entry; ties resolve to the lowest index. NaNs never win.
pub fn argmax_lowest<T: Scalar>(xs: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the smallest entry; ties resolve to the lowest index.
pub fn argmin_lowest<T: Scalar>(xs: &[T]) -> Option<usize> {
    let negated: Vec<T> = xs.iter().map(|&x| -x).collect();
    argmax_lowest(&negated)
}

/// Lowest index whose value is within `rel_tol` (relative to the minimum's magnitude) of the
/// minimum. NaN entries are skipped.
pub fn argmin_within<T: Scalar>(xs: &[T], rel_tol: T) -> Option<usize> {
    let best = xs
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(None, |m: Option<T>, x| match m {
            Some(m) if m <= x => Some(m),
            _ => Some(x),
        })?;
    let slack = rel_tol * best.abs();
    xs.iter().position(|&x| !x.is_nan() && x - best <= slack)
}

/// Relative slack under which consensus distances count as tied. Two candidates are always
/// exactly equidistant from their mean, but rounding splits them at the last bit.
pub const CONSENSUS_TIE_TOL: f64 = 1e-12;

/// Temperature-scaled softmax `exp(s_i/τ) / Σ_j exp(s_j/τ)`, computed with the max subtracted.
pub fn softmax_weights<T: Scalar>(scores: &[T], tau: T) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax scores"));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Distance of each predicted future to the mean of all predicted futures.
pub fn consensus_distances<T: Scalar>(futures: &[&Latent<T>], cfg: &ConsistencyConfig<T>) -> Result<Vec<T>> {
    let consensus = mean_latent(futures.iter().copied())?;
    futures.iter().map(|f| cfg.distance(f, &consensus)).collect()
}

/// Consistency of each predicted future with the mean of all predicted futures.
pub fn consensus_scores<T: Scalar>(futures: &[&Latent<T>], cfg: &ConsistencyConfig<T>) -> Result<Vec<T>> {
    Ok(consensus_distances(futures, cfg)?
        .into_iter()
        .map(|d| cfg.score_from_distance(d))
        .collect())
}

fn nonempty(branches: &[Branch]) -> Result<()> {
    if branches.is_empty() {
        Err(Error::Empty("candidate branches"))
    } else {
        Ok(())
    }
}

pub fn select_single(branches: &[Branch]) -> Result<SelectionOutcome> {
    nonempty(branches)?;
    Ok(SelectionOutcome {
        chosen_index: 0,
        scores: vec![0.0; branches.len()],
        weights: None,
        executed_action: branches[0].actions.clone(),
        exploration_cost: 0,
    })
}

pub fn select_by_value(branches: &[Branch]) -> Result<SelectionOutcome> {
    nonempty(branches)?;
    let scores = branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            b.predicted_value.ok_or(Error::MissingValue {
                strategy: Strategy::ValuePrediction.name(),
                branch: i,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let chosen = argmax_lowest(&scores).unwrap_or(0);
    Ok(SelectionOutcome {
        chosen_index: chosen,
        executed_action: branches[chosen].actions.clone(),
        scores,
        weights: None,
        exploration_cost: 0,
    })
}

/// Resets to `snapshot`, executes the branch, and returns the distance between its prediction
/// and what happened.
pub fn distance_by_execution(
    branch: &Branch,
    env: &Env,
    snapshot: &EnvState,
    cfg: &ConsistencyConfig,
) -> Result<(f64, EnvState, Observation)> {
    let (state, obs) = env.step(&EnvState::restore(snapshot), &branch.actions)?;
    let d = cfg.distance(&branch.predicted_future, &obs.latent)?;
    Ok((d, state, obs))
}

/// Consistency score of a branch against its own realized future.
pub fn score_by_execution(
    branch: &Branch,
    env: &Env,
    snapshot: &EnvState,
    cfg: &ConsistencyConfig,
) -> Result<(f64, EnvState, Observation)> {
    let (d, state, obs) = distance_by_execution(branch, env, snapshot, cfg)?;
    Ok((cfg.score_from_distance(d), state, obs))
}

/// Executes every branch from the same snapshot, picks the most consistent one, then resets
/// once more and executes the winner. Returns the outcome and the post-execution state.
pub fn select_by_exploring(
    branches: &[Branch],
    env: &Env,
    snapshot: &EnvState,
    cfg: &ConsistencyConfig,
) -> Result<(SelectionOutcome, EnvState, Observation)> {
    nonempty(branches)?;
    let distances = branches
        .iter()
        .map(|b| distance_by_execution(b, env, snapshot, cfg).map(|(d, _, _)| d))
        .collect::<Result<Vec<f64>>>()?;
    // ranking on raw distance keeps the winner independent of alpha even at rounding-level ties
    let chosen = argmin_lowest(&distances).unwrap_or(0);
    let scores = distances.iter().map(|&d| cfg.score_from_distance(d)).collect();
    let (state, obs) = env.step(&EnvState::restore(snapshot), &branches[chosen].actions)?;
    let outcome = SelectionOutcome {
        chosen_index: chosen,
        executed_action: branches[chosen].actions.clone(),
        scores,
        weights: None,
        exploration_cost: branches.len(),
    };
    Ok((outcome, state, obs))
}

struct Consensus {
    chosen: usize,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

fn consensus_weights(branches: &[Branch], cfg: &ConsistencyConfig, sel: &SelectionConfig) -> Result<Consensus> {
    nonempty(branches)?;
    let futures: Vec<&Latent<f64>> = branches.iter().map(|b| &b.predicted_future).collect();
    let distances = consensus_distances(&futures, cfg)?;
    let scores: Vec<f64> = distances.iter().map(|&d| cfg.score_from_distance(d)).collect();
    let weights = softmax_weights(&scores, sel.tau)?;
    // argmax of the weights is argmin of the distances; the latter cannot be perturbed by
    // rounding in exp or the softmax
    Ok(Consensus {
        chosen: argmin_within(&distances, CONSENSUS_TIE_TOL).unwrap_or(0),
        scores,
        weights,
    })
}

/// Winner-takes-all over consensus weights.
pub fn select_by_consensus(
    branches: &[Branch],
    cfg: &ConsistencyConfig,
    sel: &SelectionConfig,
) -> Result<SelectionOutcome> {
    let Consensus {
        chosen,
        scores,
        weights,
    } = consensus_weights(branches, cfg, sel)?;
    Ok(SelectionOutcome {
        chosen_index: chosen,
        executed_action: branches[chosen].actions.clone(),
        scores,
        weights: Some(weights),
        exploration_cost: 0,
    })
}

/// Executes the consensus-weighted Euclidean mean of all branch actions, angles included.
pub fn select_weighted_consensus(
    branches: &[Branch],
    cfg: &ConsistencyConfig,
    sel: &SelectionConfig,
) -> Result<SelectionOutcome> {
    let Consensus {
        chosen,
        scores,
        weights,
    } = consensus_weights(branches, cfg, sel)?;
    let steps = branches[0].actions.len();
    if branches.iter().any(|b| b.actions.len() != steps) {
        return Err(Error::DimensionMismatch {
            left: steps,
            right: branches
                .iter()
                .map(|b| b.actions.len())
                .find(|&l| l != steps)
                .unwrap_or(steps),
        });
    }
    let executed_action = (0..steps)
        .map(|k| {
            let column: Vec<&ActionVec> = branches.iter().map(|b| &b.actions[k]).collect();
            Action::weighted_blend(&column, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionOutcome {
        chosen_index: chosen,
        scores,
        weights: Some(weights),
        executed_action,
        exploration_cost: 0,
    })
}

/// Result of one selection, plus the environment transition if the strategy already executed it.
pub struct Selected {
    pub outcome: SelectionOutcome,
    pub executed: Option<(EnvState, Observation)>,
}

/// Dispatches on `sel.strategy`.
pub fn select(
    branches: &[Branch],
    sel: &SelectionConfig,
    cfg: &ConsistencyConfig,
    env: &Env,
    state: &EnvState,
) -> Result<Selected> {
    let outcome = match sel.strategy {
        Strategy::Single => select_single(branches)?,
        Strategy::ValuePrediction => select_by_value(branches)?,
        Strategy::ConsistencyConsensus => select_by_consensus(branches, cfg, sel)?,
        Strategy::WeightedConsensus => select_weighted_consensus(branches, cfg, sel)?,
        Strategy::ConsistencyExploring => {
            let (outcome, s, o) = select_by_exploring(branches, env, &state.snapshot(), cfg)?;
            return Ok(Selected {
                outcome,
                executed: Some((s, o)),
            });
        }
    };
    Ok(Selected {
        outcome,
        executed: None,
    })
}

#[cfg(test)]
#[path = "selection_tests.rs"]
mod tests;
