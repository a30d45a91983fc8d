use crate::envs::{norm, sub, unit, Env, EnvState, Family, Vec2};
use crate::{ActionVec, LatentVec};

#[derive(Clone, Debug, PartialEq)]
pub struct InverseSolution {
    /// One action per environment sub-step.
    pub actions: Vec<ActionVec>,
    /// Set when the target was outside the one-decision reachable set and the speed saturated.
    pub clamped: bool,
}

/// Recovers the action sequence that moves `current` to the state encoded by `target_latent`.
///
/// The target is first pulled back to physical space through the encoder's least-squares
/// preimage. Point-mass families are inverted exactly (one constant action per sub-step).
/// `PushBlock` solves the least-squares problem over agent and block displacement with the
/// contact linearized at the current state.
pub fn invert_dynamics(current: &EnvState, target_latent: &LatentVec, env: &Env) -> InverseSolution {
    let spec = env.spec();
    let target = env.encoder().decode(target_latent);
    let agent = current.agent();
    let horizon = spec.control_horizon as f64;
    let tau = spec.dt * horizon;

    let (velocity, gain_zero) = match &spec.family {
        Family::PointReach => (scale(sub([target[0], target[1]], agent), 1.0 / tau), false),
        Family::StallTrap { factor, .. } => {
            let gain = if current.stalled { *factor } else { 1.0 };
            let disp = sub([target[0], target[1]], agent);
            if gain == 0.0 {
                (scale(disp, 1.0 / tau), norm(disp) > 0.0)
            } else {
                (scale(disp, 1.0 / (gain * tau)), false)
            }
        }
        Family::PushBlock {
            contact_radius,
            damping,
            ..
        } => {
            let block = current.block().expect("block");
            let da = sub([target[0], target[1]], agent);
            let db = sub([target[2], target[3]], block);
            let gap = sub(block, agent);
            // block displacement ≈ b0 + J · agent displacement while in contact, where b0 is
            // the push already owed to the current overlap
            let (j, b0) = match unit(gap) {
                Some(n) if norm(gap) < *contact_radius => {
                    let k = 1.0 - damping;
                    let overlap = k * (contact_radius - norm(gap));
                    (
                        [[k * n[0] * n[0], k * n[0] * n[1]], [k * n[1] * n[0], k * n[1] * n[1]]],
                        [overlap * n[0], overlap * n[1]],
                    )
                }
                _ => ([[0.0; 2]; 2], [0.0; 2]),
            };
            let db = sub(db, b0);
            // (I + JᵀJ) x = da + Jᵀ (db - b0)
            let jtj = mat_mul_t(j, j);
            let lhs = [[1.0 + jtj[0][0], jtj[0][1]], [jtj[1][0], 1.0 + jtj[1][1]]];
            let rhs = [
                da[0] + j[0][0] * db[0] + j[1][0] * db[1],
                da[1] + j[0][1] * db[0] + j[1][1] * db[1],
            ];
            (scale(solve2(lhs, rhs), 1.0 / tau), false)
        }
    };

    let mut speed = norm(velocity);
    let heading = if speed > 0.0 {
        velocity[1].atan2(velocity[0])
    } else {
        0.0
    };
    let mut clamped = gain_zero;
    if speed > spec.max_speed || gain_zero {
        speed = spec.max_speed;
        clamped = true;
    }
    let action = ActionVec::new(vec![speed], vec![heading]);
    InverseSolution {
        actions: vec![action; spec.control_horizon],
        clamped,
    }
}

fn scale(v: Vec2, k: f64) -> Vec2 {
    [v[0] * k, v[1] * k]
}

/// Jᵀ J for 2×2 matrices.
fn mat_mul_t(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[0][i] * b[0][j] + a[1][i] * b[1][j];
        }
    }
    out
}

fn solve2(m: [[f64; 2]; 2], r: Vec2) -> Vec2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - m[1][0] * r[0]) / det,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TaskSpec;
    use crate::primitives::{derive_stream, mse_distance};

    fn reach() -> Env {
        Env::new(TaskSpec::point_reach("inv", [1.5, 0.5])).unwrap()
    }

    #[test]
    fn identity_transition_gives_zero_action() {
        let env = reach();
        let (s, obs) = env.reset(derive_stream(0, 0, 0, 0)).unwrap();
        let sol = invert_dynamics(&s, &obs.latent, &env);
        assert!(!sol.clamped);
        assert!(sol.actions[0].linear[0].abs() < 1e-9);
        assert_eq!(sol.actions[0].angular[0], 0.0);
    }

    #[test]
    fn point_reach_displacement_over_dt() {
        let env = reach();
        let (mut s, _) = env.reset(derive_stream(0, 0, 0, 0)).unwrap();
        s.physical = vec![0.2, -0.1];
        let d = [0.03, 0.04];
        let target = env.encode_latent(&[0.2 + d[0], -0.1 + d[1]]);
        let sol = invert_dynamics(&s, &target, &env);
        let v = env.commanded_displacement(&sol.actions[0]);
        // realized velocity = d / dt
        assert!((v[0] / 0.1 - d[0] / 0.1).abs() < 1e-9);
        assert!((v[1] / 0.1 - d[1] / 0.1).abs() < 1e-9);
        assert!((sol.actions[0].linear[0] - 0.5).abs() < 1e-9);
        let realized = env.step(&s, &sol.actions).unwrap().1.latent;
        assert!(mse_distance(&realized, &target).unwrap() < 1e-18);
    }

    #[test]
    fn far_target_saturates() {
        let env = reach();
        let (s, _) = env.reset(derive_stream(0, 0, 0, 0)).unwrap();
        let target = env.encode_latent(&[2.0, 2.0]);
        let sol = invert_dynamics(&s, &target, &env);
        assert!(sol.clamped);
        assert_eq!(sol.actions[0].linear[0], env.spec().max_speed);
        assert!((sol.actions[0].angular[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    }

    #[test]
    fn frozen_stall_cannot_be_inverted() {
        let env = Env::new(TaskSpec {
            family: Family::StallTrap {
                center: [0.6, 0.0],
                radius: 0.3,
                factor: 0.0,
            },
            ..TaskSpec::point_reach("inv_trap", [1.5, 0.0])
        })
        .unwrap();
        let (mut s, _) = env.reset(derive_stream(0, 0, 0, 0)).unwrap();
        s.physical = vec![0.6, 0.0];
        s.stalled = true;
        let sol = invert_dynamics(&s, &env.encode_latent(&[0.65, 0.0]), &env);
        assert!(sol.clamped);
    }

    #[test]
    fn push_block_least_squares_recovers_contact_push() {
        let env = Env::new(TaskSpec {
            family: Family::PushBlock {
                block_start: [0.5, 0.0],
                contact_radius: 0.25,
                damping: 0.2,
            },
            ..TaskSpec::point_reach("inv_push", [1.5, 0.0])
        })
        .unwrap();
        let (mut s, _) = env.reset(derive_stream(0, 0, 0, 0)).unwrap();
        s.physical = vec![0.3, 0.0, 0.5, 0.0];
        let action = ActionVec::new(vec![0.6], vec![0.0]);
        let (next, obs) = env.step(&s, std::slice::from_ref(&action)).unwrap();
        assert!(next.block().unwrap()[0] > 0.5);
        let sol = invert_dynamics(&s, &obs.latent, &env);
        assert!((sol.actions[0].linear[0] - 0.6).abs() < 1e-6, "{:?}", sol.actions[0]);
        assert!(sol.actions[0].angular[0].abs() < 1e-6);
    }
}
