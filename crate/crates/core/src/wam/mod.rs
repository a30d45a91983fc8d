//! Synthetic world action models.
//!
//! A model proposes candidate branches, each an action chunk paired with the future latent the
//! model expects that chunk to produce. Both factorizations are available:
//!
//! * **Joint prediction** samples an action and rolls the true dynamics forward (noise free) to
//!   obtain its future, which is then corrupted. Action and future share the sample.
//! * **Inverse dynamics** samples a future latent first and derives the action by inverting the
//!   dynamics toward it.
//!
//! Prediction error is controlled by `pred_noise_std` plus a systematic `bias`. Errors are tied
//! to competence: when a branch's action is a perturbed (non goal-directed) sample, its
//! prediction noise is multiplied by `1 + error_coupling`. With `collapse` enabled the model
//! falls back to a static prediction once realized motion has stayed below a threshold for
//! several consecutive decisions.

mod inverse;
mod policy;

pub use inverse::{invert_dynamics, InverseSolution};
pub use policy::expert_action;

use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvState, Observation};
use crate::error::{Error, Result};
use crate::primitives::rng::lanes;
use crate::primitives::{derive_stream, Latent, RngStream};
use crate::{ActionVec, LatentVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    JointPrediction,
    InverseDynamics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CollapseMode {
    Off,
    OnStall {
        /// Latent change below which a decision counts as static.
        threshold: f64,
        /// Consecutive static decisions that trigger the static prediction.
        persistence: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    Zero,
    /// Same offset on every latent coordinate.
    Constant(f64),
    Vector(Vec<f64>),
}

impl Bias {
    fn at(&self, k: usize) -> f64 {
        match self {
            Bias::Zero => 0.0,
            Bias::Constant(b) => *b,
            Bias::Vector(v) => v[k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WamSpec {
    pub formulation: Formulation,
    pub pred_noise_std: f64,
    pub bias: Bias,
    pub collapse: CollapseMode,
    /// Gaussian jitter (radians) on the goal-directed heading.
    pub policy_noise_std: f64,
    pub value_noise_std: f64,
    pub value_miscalibration: f64,
    /// Mean per-branch probability of a goal-directed rather than perturbed action.
    pub competence: f64,
    /// Half-width of the uniform per-episode spread around `competence`.
    pub competence_spread: f64,
    /// Relative extra prediction noise on perturbed branches.
    pub error_coupling: f64,
}

impl Default for WamSpec {
    fn default() -> Self {
        WamSpec {
            formulation: Formulation::JointPrediction,
            pred_noise_std: 0.0,
            bias: Bias::Zero,
            collapse: CollapseMode::Off,
            policy_noise_std: 0.0,
            value_noise_std: 0.0,
            value_miscalibration: 1.0,
            competence: 1.0,
            competence_spread: 0.0,
            error_coupling: 0.0,
        }
    }
}

impl WamSpec {
    /// Zero-error model with a perfect policy.
    pub fn oracle() -> Self {
        WamSpec::default()
    }

    pub fn validate(&self, latent_dim: Option<usize>) -> Result<()> {
        let nonneg = [
            ("pred_noise_std", self.pred_noise_std),
            ("policy_noise_std", self.policy_noise_std),
            ("value_noise_std", self.value_noise_std),
            ("competence_spread", self.competence_spread),
            ("error_coupling", self.error_coupling),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.competence) {
            return Err(Error::config(format!(
                "competence must be in [0, 1], got {}",
                self.competence
            )));
        }
        if !self.value_miscalibration.is_finite() {
            return Err(Error::config("value_miscalibration must be finite"));
        }
        if let CollapseMode::OnStall { threshold, persistence } = self.collapse {
            if !(threshold > 0.0) {
                return Err(Error::config(format!("stall threshold must be > 0, got {threshold}")));
            }
            if persistence < 1 {
                return Err(Error::config("stall persistence must be >= 1"));
            }
        }
        match (&self.bias, latent_dim) {
            (Bias::Vector(v), Some(d)) if v.len() != d => Err(Error::config(format!(
                "bias has {} entries but the latent dimension is {d}",
                v.len()
            ))),
            (Bias::Vector(v), _) if v.iter().any(|b| !b.is_finite()) => {
                Err(Error::config("bias entries must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// One sampled candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    /// One action per environment sub-step.
    pub actions: Vec<ActionVec>,
    pub predicted_future: LatentVec,
    pub predicted_value: Option<f64>,
    /// Whether the action was a perturbed rather than goal-directed sample.
    pub perturbed: bool,
}

/// Counts consecutive low-motion decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CollapseTracker {
    run: usize,
}

impl CollapseTracker {
    pub fn observe(&mut self, delta_z: f64, mode: &CollapseMode) {
        let threshold = match mode {
            CollapseMode::OnStall { threshold, .. } => *threshold,
            CollapseMode::Off => return,
        };
        if delta_z < threshold {
            self.run += 1;
        } else {
            self.run = 0;
        }
    }

    pub fn run_length(&self) -> usize {
        self.run
    }

    pub fn collapsed(&self, mode: &CollapseMode) -> bool {
        match mode {
            CollapseMode::OnStall { persistence, .. } => self.run >= *persistence,
            CollapseMode::Off => false,
        }
    }
}

/// Where in the seed space a decision lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionKey {
    pub master_seed: u64,
    pub episode: u64,
    pub step: u64,
}

/// Per-episode competence draw: uniform on `competence ± competence_spread`, clipped to `[0, 1]`.
pub fn episode_competence(wam: &WamSpec, master_seed: u64, episode: u64) -> f64 {
    if wam.competence_spread == 0.0 {
        return wam.competence;
    }
    let mut s = derive_stream(master_seed, episode, 0, lanes::EPISODE);
    let c = s.uniform(
        wam.competence - wam.competence_spread,
        wam.competence + wam.competence_spread,
    );
    c.clamp(0.0, 1.0)
}

/// Samples `n` candidate branches, branch `i` from the stream labelled `(episode, step, i)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_branches(
    env: &Env,
    state: &EnvState,
    obs: &Observation,
    n: usize,
    wam: &WamSpec,
    competence: f64,
    tracker: &CollapseTracker,
    key: DecisionKey,
) -> Result<Vec<Branch>> {
    if n == 0 {
        return Err(Error::Empty("branch count"));
    }
    let collapsed = tracker.collapsed(&wam.collapse);
    (0..n)
        .map(|i| sample_one(env, state, obs, wam, competence, collapsed, key, i as u64))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn sample_one(
    env: &Env,
    state: &EnvState,
    obs: &Observation,
    wam: &WamSpec,
    competence: f64,
    collapsed: bool,
    key: DecisionKey,
    branch: u64,
) -> Result<Branch> {
    let spec = env.spec();
    let mut stream = derive_stream(key.master_seed, key.episode, key.step, branch);

    // fixed draw order: perturbation flag, heading, speed, latent noise, value noise
    let perturbed = !stream.bernoulli(competence);
    let heading_draw = stream.uniform(-std::f64::consts::PI, std::f64::consts::PI);
    let speed_draw = stream.uniform(0.5, 1.0);
    let jitter = stream.normal(wam.policy_noise_std);

    let proposal = if perturbed {
        ActionVec::new(vec![speed_draw * spec.max_speed], vec![heading_draw])
    } else {
        let expert = expert_action(env, state);
        ActionVec::new(expert.linear.clone(), vec![expert.angular[0] + jitter])
    };
    let proposal = vec![proposal; spec.control_horizon];

    let noise_std = wam.pred_noise_std * if perturbed { 1.0 + wam.error_coupling } else { 1.0 };
    let (proposed_state, proposed_obs) = env.rollout_noiseless(state, &proposal)?;
    let corrupted: Vec<f64> = proposed_obs
        .latent
        .iter()
        .enumerate()
        .map(|(k, &z)| z + wam.bias.at(k) + stream.normal(noise_std))
        .collect();
    let corrupted = Latent::new(corrupted)?;

    let (actions, predicted_future, future_state) = match wam.formulation {
        Formulation::JointPrediction => {
            let predicted = if collapsed { obs.latent.clone() } else { corrupted };
            (proposal, predicted, proposed_state)
        }
        Formulation::InverseDynamics => {
            let predicted = if collapsed { obs.latent.clone() } else { corrupted };
            let solution = invert_dynamics(state, &predicted, env);
            let (future_state, _) = env.rollout_noiseless(state, &solution.actions)?;
            (solution.actions, predicted, future_state)
        }
    };

    let value_noise = stream.normal(wam.value_noise_std);
    let predicted_value = Some(wam.value_miscalibration * env.potential(&future_state.physical) + value_noise);
    Ok(Branch {
        actions,
        predicted_future,
        predicted_value,
        perturbed,
    })
}

/// `miscalibration · potential(state) + N(0, value_noise_std²)`.
pub fn predict_value(env: &Env, physical: &[f64], wam: &WamSpec, stream: &mut RngStream) -> f64 {
    wam.value_miscalibration * env.potential(physical) + stream.normal(wam.value_noise_std)
}
