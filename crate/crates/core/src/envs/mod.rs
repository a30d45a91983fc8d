//! Toy point-mass environments with value-semantic state.
//!
//! Three families share a square arena, a polar action (`linear = [speed]`,
//! `angular = [heading]`) and explicit Euler integration:
//!
//! * `PointReach` moves a point agent to a goal disk.
//! * `PushBlock` moves an agent that pushes a block out of its contact disk; success is the
//!   block reaching the goal disk.
//! * `StallTrap` is `PointReach` with an absorbing disk: once the agent enters it, every later
//!   sub-step (noise included) is scaled by the stall factor.
//!
//! Transition noise is applied to the physical state and drawn from the stream carried inside
//! [`EnvState`], so cloning a state also clones its noise cursor and replays identical noise.

mod encoder;

pub use encoder::LatentEncoder;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::RngStream;
use crate::{ActionVec, LatentVec};

pub type Vec2 = [f64; 2];

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn unit(a: Vec2) -> Option<Vec2> {
    let n = norm(a);
    (n > 0.0).then(|| [a[0] / n, a[1] / n])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    PointReach,
    PushBlock {
        block_start: Vec2,
        contact_radius: f64,
        /// Fraction of the contact push lost to friction, in `[0, 1)`.
        damping: f64,
    },
    StallTrap {
        center: Vec2,
        radius: f64,
        /// Motion multiplier once stalled, in `[0, 1]`.
        factor: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::PointReach => "point_reach",
            Family::PushBlock { .. } => "push_block",
            Family::StallTrap { .. } => "stall_trap",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Family::PushBlock { .. } => 4,
            _ => 2,
        }
    }
}

/// Full description of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub family: Family,
    pub start: Vec2,
    /// Radius of the uniform disk the agent start is drawn from.
    pub init_spread: f64,
    pub goal: Vec2,
    pub success_radius: f64,
    /// Decision steps per episode.
    pub episode_horizon: usize,
    /// Environment sub-steps per decision.
    pub control_horizon: usize,
    pub latent_dim: usize,
    pub noise_std: f64,
    pub dt: f64,
    pub max_speed: f64,
    /// Half-width of the square arena `[-a, a]²`.
    pub arena: f64,
}

impl TaskSpec {
    pub fn point_reach(task_id: impl Into<String>, goal: Vec2) -> Self {
        TaskSpec {
            task_id: task_id.into(),
            family: Family::PointReach,
            start: [0.0, 0.0],
            init_spread: 0.0,
            goal,
            success_radius: 0.15,
            episode_horizon: 40,
            control_horizon: 1,
            latent_dim: 16,
            noise_std: 0.0,
            dt: 0.1,
            max_speed: 1.0,
            arena: 2.5,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.family.state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("task `{}`: {msg}", self.task_id)));
        if self.task_id.is_empty() {
            return Err(Error::config("task id must be nonempty"));
        }
        if !(self.success_radius > 0.0) {
            return bad(format!("success_radius must be > 0, got {}", self.success_radius));
        }
        if self.episode_horizon < 1 {
            return bad("horizon must be >= 1".into());
        }
        if self.control_horizon < 1 {
            return bad("control_horizon must be >= 1".into());
        }
        if self.latent_dim < self.state_dim() {
            return bad(format!(
                "latent_dim {} is smaller than the state dimension {}",
                self.latent_dim,
                self.state_dim()
            ));
        }
        if !(self.noise_std >= 0.0) || !(self.init_spread >= 0.0) {
            return bad("noise_std and init_spread must be >= 0".into());
        }
        if !(self.dt > 0.0) || !(self.max_speed > 0.0) || !(self.arena > 0.0) {
            return bad("dt, max_speed and arena must be > 0".into());
        }
        let inside = |p: Vec2| p[0].abs() <= self.arena && p[1].abs() <= self.arena;
        if !inside(self.start) || !inside(self.goal) {
            return bad("start and goal must lie inside the arena".into());
        }
        match &self.family {
            Family::PointReach => {}
            Family::PushBlock {
                block_start,
                contact_radius,
                damping,
            } => {
                if !(*contact_radius > 0.0) {
                    return bad("contact_radius must be > 0".into());
                }
                if !(0.0..1.0).contains(damping) {
                    return bad(format!("damping must be in [0, 1), got {damping}"));
                }
                if !inside(*block_start) {
                    return bad("block_start must lie inside the arena".into());
                }
            }
            Family::StallTrap { center, radius, factor } => {
                if !(*radius > 0.0) {
                    return bad("stall radius must be > 0".into());
                }
                if !(0.0..=1.0).contains(factor) {
                    return bad(format!("stall factor must be in [0, 1], got {factor}"));
                }
                if dist(self.start, *center) < radius + self.init_spread {
                    return bad("start region overlaps the stall region".into());
                }
            }
        }
        Ok(())
    }

    /// Length of the arena diagonal, the largest distance two points can be apart.
    pub fn max_distance(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.arena
    }
}

#[derive(Clone, Debug)]
pub struct EnvState {
    pub physical: Vec<f64>,
    pub step_count: usize,
    /// StallTrap latch; always false in other families.
    pub stalled: bool,
    rng_cursor: RngStream,
}

impl EnvState {
    pub fn agent(&self) -> Vec2 {
        [self.physical[0], self.physical[1]]
    }

    pub fn block(&self) -> Option<Vec2> {
        (self.physical.len() >= 4).then(|| [self.physical[2], self.physical[3]])
    }

    /// Value copy of the state, noise cursor included.
    pub fn snapshot(&self) -> EnvState {
        self.clone()
    }

    pub fn restore(saved: &EnvState) -> EnvState {
        saved.clone()
    }

    /// Bitwise comparison of everything that influences future transitions.
    pub fn same_as(&self, other: &EnvState) -> bool {
        self.physical == other.physical
            && self.step_count == other.step_count
            && self.stalled == other.stalled
            && peek(&self.rng_cursor) == peek(&other.rng_cursor)
    }
}

fn peek(stream: &RngStream) -> [u64; 2] {
    let mut s = stream.clone();
    [s.next_u64(), s.next_u64()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub latent: LatentVec,
    /// Agent position.
    pub proprio: Vec<f64>,
}

/// A task together with its fixed latent encoder.
#[derive(Clone, Debug)]
pub struct Env {
    spec: TaskSpec,
    encoder: LatentEncoder,
}

impl Env {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        spec.validate()?;
        let encoder = LatentEncoder::for_task(&spec);
        Ok(Env { spec, encoder })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &LatentEncoder {
        &self.encoder
    }

    /// Draws the initial state from `stream`; the same stream then drives transition noise.
    pub fn reset(&self, mut stream: RngStream) -> Result<(EnvState, Observation)> {
        let spec = &self.spec;
        let mut agent = spec.start;
        if spec.init_spread > 0.0 {
            // uniform on the disk of radius init_spread
            let r = spec.init_spread * stream.uniform(0.0, 1.0).sqrt();
            let phi = stream.uniform(-std::f64::consts::PI, std::f64::consts::PI);
            agent = [agent[0] + r * phi.cos(), agent[1] + r * phi.sin()];
        }
        let mut physical = agent.to_vec();
        if let Family::PushBlock { block_start, .. } = spec.family {
            physical.extend_from_slice(&block_start);
        }
        let state = EnvState {
            physical,
            step_count: 0,
            stalled: false,
            rng_cursor: stream,
        };
        let obs = self.observe(&state);
        Ok((state, obs))
    }

    pub fn observe(&self, state: &EnvState) -> Observation {
        Observation {
            latent: self.encode_latent(&state.physical),
            proprio: state.agent().to_vec(),
        }
    }

    pub fn encode_latent(&self, physical: &[f64]) -> LatentVec {
        self.encoder.encode(physical)
    }

    fn check_action(&self, action: &ActionVec) -> Result<()> {
        if action.linear.len() != 1 || action.angular.len() != 1 {
            return Err(Error::DimensionMismatch {
                left: 2,
                right: action.dim(),
            });
        }
        Ok(())
    }

    /// Executes one decision: `actions.len()` must equal the control horizon.
    pub fn step(&self, state: &EnvState, actions: &[ActionVec]) -> Result<(EnvState, Observation)> {
        self.advance(state, actions, true)
    }

    fn advance(&self, state: &EnvState, actions: &[ActionVec], noisy: bool) -> Result<(EnvState, Observation)> {
        if actions.len() != self.spec.control_horizon {
            return Err(Error::DimensionMismatch {
                left: self.spec.control_horizon,
                right: actions.len(),
            });
        }
        let mut next = state.clone();
        for action in actions {
            self.check_action(action)?;
            self.substep(&mut next, action, noisy);
        }
        next.step_count += 1;
        let obs = self.observe(&next);
        Ok((next, obs))
    }

    /// Agent displacement commanded by `action` over one sub-step, before noise and gain.
    pub fn commanded_displacement(&self, action: &ActionVec) -> Vec2 {
        let speed = action.linear[0].clamp(0.0, self.spec.max_speed);
        let heading = action.angular[0];
        [
            speed * heading.cos() * self.spec.dt,
            speed * heading.sin() * self.spec.dt,
        ]
    }

    fn clamp_arena(&self, p: Vec2) -> Vec2 {
        let a = self.spec.arena;
        [p[0].clamp(-a, a), p[1].clamp(-a, a)]
    }

    fn substep(&self, state: &mut EnvState, action: &ActionVec, noisy: bool) {
        let spec = &self.spec;
        let d = self.commanded_displacement(action);
        let noise = if noisy {
            [
                state.rng_cursor.normal(spec.noise_std),
                state.rng_cursor.normal(spec.noise_std),
            ]
        } else {
            [0.0, 0.0]
        };
        let agent = state.agent();
        match &spec.family {
            Family::PointReach => {
                let p = self.clamp_arena([agent[0] + d[0] + noise[0], agent[1] + d[1] + noise[1]]);
                state.physical[..2].copy_from_slice(&p);
            }
            Family::StallTrap { center, radius, factor } => {
                let gain = if state.stalled { *factor } else { 1.0 };
                let p = self.clamp_arena([agent[0] + gain * (d[0] + noise[0]), agent[1] + gain * (d[1] + noise[1])]);
                state.physical[..2].copy_from_slice(&p);
                if dist(p, *center) < *radius {
                    state.stalled = true;
                }
            }
            Family::PushBlock {
                contact_radius,
                damping,
                ..
            } => {
                let p = self.clamp_arena([agent[0] + d[0] + noise[0], agent[1] + d[1] + noise[1]]);
                let block = state.block().expect("push block state carries a block");
                let gap = sub(block, p);
                let sep = norm(gap);
                let mut b = block;
                if sep < *contact_radius {
                    let n = unit(gap).or_else(|| unit(d)).unwrap_or([1.0, 0.0]);
                    let push = (contact_radius - sep) * (1.0 - damping);
                    b = self.clamp_arena([block[0] + push * n[0], block[1] + push * n[1]]);
                }
                state.physical[..2].copy_from_slice(&p);
                state.physical[2..4].copy_from_slice(&b);
            }
        }
    }

    /// Strict inequality: a distance of exactly the success radius is a failure.
    pub fn is_success(&self, state: &EnvState) -> bool {
        let target = match self.spec.family {
            Family::PushBlock { .. } => state.block().expect("block"),
            _ => state.agent(),
        };
        dist(target, self.spec.goal) < self.spec.success_radius
    }

    /// Distance-to-goal potential normalized to `[0, 1]`: 1 at the goal, 0 at the arena diagonal.
    ///
    /// For `PushBlock` the distance is the remaining push path: agent to the contact point
    /// behind the block, then block to goal, normalized by twice the diagonal.
    pub fn potential(&self, physical: &[f64]) -> f64 {
        let agent = [physical[0], physical[1]];
        let (d, scale) = match self.spec.family {
            Family::PushBlock { contact_radius, .. } => {
                let block = [physical[2], physical[3]];
                let behind = match unit(sub(self.spec.goal, block)) {
                    Some(u) => [block[0] - contact_radius * u[0], block[1] - contact_radius * u[1]],
                    None => block,
                };
                (
                    dist(agent, behind) + dist(block, self.spec.goal),
                    2.0 * self.spec.max_distance(),
                )
            }
            _ => (dist(agent, self.spec.goal), self.spec.max_distance()),
        };
        (1.0 - d / scale).clamp(0.0, 1.0)
    }

    /// Runs `actions` from `state` with transition noise disabled. The noise cursor is not advanced.
    pub fn rollout_noiseless(&self, state: &EnvState, actions: &[ActionVec]) -> Result<(EnvState, Observation)> {
        self.advance(state, actions, false)
    }

    pub fn in_stall_region(&self, physical: &[f64]) -> bool {
        match self.spec.family {
            Family::StallTrap { center, radius, .. } => dist([physical[0], physical[1]], center) < radius,
            _ => false,
        }
    }
}
