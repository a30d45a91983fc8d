//! Episode and suite execution.
//!
//! An episode seed depends only on the task and the seed index, so every strategy, candidate
//! count and preset sees the same start state and the same branch streams at a given seed.

pub mod analysis;
pub mod io;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consistency::{consistency_score, episode_consistency, latent_change, ConsistencyConfig, StepDiagnostics};
use crate::envs::{Env, TaskSpec};
use crate::error::{Error, Result};
use crate::primitives::rng::lanes;
use crate::primitives::rng::mix64;
use crate::primitives::{derive_stream, hash_label};
use crate::selection::{select, SelectionConfig, Strategy};
use crate::wam::{episode_competence, sample_branches, CollapseTracker, DecisionKey, WamSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub task_id: String,
    pub wam_preset: String,
    pub strategy: Strategy,
    pub n_candidates: usize,
    pub seed_index: u64,
    pub episode_seed: u64,
    pub steps: Vec<StepDiagnostics>,
    pub success: bool,
    pub episode_consistency: f64,
    /// First decision after which the environment latched into its stall regime.
    pub stall_onset: Option<usize>,
    pub total_exploration_cost: usize,
}

impl EpisodeLog {
    fn sort_key(&self) -> (&str, &str, Strategy, usize, u64) {
        (
            &self.task_id,
            &self.wam_preset,
            self.strategy,
            self.n_candidates,
            self.seed_index,
        )
    }
}

/// Seed shared by every run of `task_id` at `seed_index`.
pub fn episode_seed(task_id: &str, seed_index: u64) -> u64 {
    mix64(hash_label(task_id) ^ mix64(seed_index.wrapping_add(1)))
}

/// Everything one episode needs besides its seed.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeSetup<'a> {
    pub env: &'a Env,
    pub preset: &'a str,
    pub wam: &'a WamSpec,
    pub selection: &'a SelectionConfig,
    pub consistency: &'a ConsistencyConfig,
}

/// Rolls one episode out. Stops after the first successful decision or at the horizon.
pub fn run_episode(setup: EpisodeSetup<'_>, master_seed: u64, seed_index: u64) -> Result<EpisodeLog> {
    let EpisodeSetup {
        env,
        preset,
        wam,
        selection,
        consistency,
    } = setup;
    let spec = env.spec();
    let seed = episode_seed(&spec.task_id, seed_index);
    let (mut state, mut obs) = env.reset(derive_stream(master_seed, seed, 0, lanes::TRANSITION))?;
    let competence = episode_competence(wam, master_seed, seed);
    let mut tracker = CollapseTracker::default();
    let mut steps = Vec::with_capacity(spec.episode_horizon);
    let mut stall_onset = None;
    let mut exploration = 0;
    let mut success = false;

    for t in 0..spec.episode_horizon {
        let key = DecisionKey {
            master_seed,
            episode: seed,
            step: t as u64,
        };
        let branches = sample_branches(
            env,
            &state,
            &obs,
            selection.n_candidates,
            wam,
            competence,
            &tracker,
            key,
        )?;
        let selected = select(&branches, selection, consistency, env, &state)?;
        let outcome = selected.outcome;
        let (next_state, next_obs) = match selected.executed {
            Some(done) => done,
            None => env.step(&state, &outcome.executed_action)?,
        };
        let chosen = &branches[outcome.chosen_index];
        let c_t = consistency_score(&chosen.predicted_future, &next_obs.latent, consistency)?;
        let delta_z = latent_change(&obs.latent, &next_obs.latent)?;
        tracker.observe(delta_z, &wam.collapse);
        if stall_onset.is_none() && next_state.stalled {
            stall_onset = Some(t);
        }
        exploration += outcome.exploration_cost;
        steps.push(StepDiagnostics {
            t,
            c_t,
            delta_z,
            chosen_branch: outcome.chosen_index,
            branch_scores: outcome.scores,
            value_pred: chosen.predicted_value,
        });
        state = next_state;
        obs = next_obs;
        if env.is_success(&state) {
            success = true;
            break;
        }
    }

    Ok(EpisodeLog {
        task_id: spec.task_id.clone(),
        wam_preset: preset.to_string(),
        strategy: selection.strategy,
        n_candidates: selection.n_candidates,
        seed_index,
        episode_seed: seed,
        episode_consistency: episode_consistency(&steps)?,
        steps,
        success,
        stall_onset,
        total_exploration_cost: exploration,
    })
}

/// Cartesian grid of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteGrid {
    pub tasks: Vec<TaskSpec>,
    /// Preset name and model, in declaration order.
    pub presets: Vec<(String, WamSpec)>,
    pub strategies: Vec<Strategy>,
    pub candidates: Vec<usize>,
    pub tau: f64,
    pub consistency: ConsistencyConfig,
    pub seeds: u64,
    pub master_seed: u64,
}

impl SuiteGrid {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.presets.is_empty() || self.strategies.is_empty() || self.candidates.is_empty()
        {
            return Err(Error::config(
                "suite grid needs at least one task, preset, strategy and candidate count",
            ));
        }
        if self.seeds == 0 {
            return Err(Error::config("seeds must be >= 1"));
        }
        self.consistency.validate()?;
        for t in &self.tasks {
            t.validate()?;
        }
        for (name, wam) in &self.presets {
            for t in &self.tasks {
                wam.validate(Some(t.latent_dim))
                    .map_err(|e| Error::config(format!("preset `{name}`: {e}")))?;
            }
        }
        for &n in &self.candidates {
            SelectionConfig {
                tau: self.tau,
                ..SelectionConfig::new(Strategy::Single, n)
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn episode_count(&self) -> usize {
        self.tasks.len() * self.presets.len() * self.strategies.len() * self.candidates.len() * self.seeds as usize
    }

    /// SHA-256 of the canonical JSON form, for grids built in code.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("grid serializes");
        fingerprint_bytes(&bytes)
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Aligned,
    Misaligned,
    Undetermined,
}

impl Alignment {
    pub fn name(&self) -> &'static str {
        match self {
            Alignment::Aligned => "aligned",
            Alignment::Misaligned => "misaligned",
            Alignment::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDataset {
    pub fingerprint: String,
    pub episodes: Vec<EpisodeLog>,
    pub alignment: BTreeMap<String, Alignment>,
}

impl RunDataset {
    pub fn from_episodes(fingerprint: String, mut episodes: Vec<EpisodeLog>) -> Self {
        episodes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let alignment = task_alignment(&episodes);
        RunDataset {
            fingerprint,
            episodes,
            alignment,
        }
    }
}

/// Aligned when successful Single-strategy episodes have the higher mean episode consistency.
pub fn alignment_of<'a>(episodes: impl IntoIterator<Item = &'a EpisodeLog>) -> Alignment {
    let (mut s, mut f) = (vec![], vec![]);
    for e in episodes {
        if e.success {
            s.push(e.episode_consistency);
        } else {
            f.push(e.episode_consistency);
        }
    }
    if s.is_empty() || f.is_empty() {
        return Alignment::Undetermined;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if mean(&s) > mean(&f) {
        Alignment::Aligned
    } else {
        Alignment::Misaligned
    }
}

pub fn task_alignment(episodes: &[EpisodeLog]) -> BTreeMap<String, Alignment> {
    let mut by_task: BTreeMap<String, Vec<&EpisodeLog>> = BTreeMap::new();
    for e in episodes {
        let entry = by_task.entry(e.task_id.clone()).or_default();
        if e.strategy == Strategy::Single {
            entry.push(e);
        }
    }
    by_task
        .into_iter()
        .map(|(task, eps)| (task, alignment_of(eps)))
        .collect()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

/// Runs every cell of the grid. The returned episodes are in canonical order regardless of
/// scheduling.
pub fn run_suite(grid: &SuiteGrid, fingerprint: String, opts: RunOptions) -> Result<RunDataset> {
    grid.validate()?;
    let envs = grid
        .tasks
        .iter()
        .map(|t| Env::new(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut work = Vec::with_capacity(grid.episode_count());
    for env in &envs {
        for (preset, wam) in &grid.presets {
            for &strategy in &grid.strategies {
                for &n in &grid.candidates {
                    let sel = SelectionConfig {
                        tau: grid.tau,
                        ..SelectionConfig::new(strategy, n)
                    };
                    for seed in 0..grid.seeds {
                        work.push((env, preset.as_str(), wam, sel, seed));
                    }
                }
            }
        }
    }
    let execute = || {
        work.par_iter()
            .map(|(env, preset, wam, sel, seed)| {
                let setup = EpisodeSetup {
                    env,
                    preset,
                    wam,
                    selection: sel,
                    consistency: &grid.consistency,
                };
                run_episode(setup, grid.master_seed, *seed)
            })
            .collect::<Result<Vec<_>>>()
    };
    let episodes = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(execute)?,
        None => execute()?,
    };
    Ok(RunDataset::from_episodes(fingerprint, episodes))
}

#[cfg(test)]
mod tests;
