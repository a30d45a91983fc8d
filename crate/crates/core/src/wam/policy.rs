//! Scripted goal-directed controller used as the action prior of the synthetic models.

use crate::envs::{dist, dot, norm, sub, unit, Env, EnvState, Family, Vec2};
use crate::ActionVec;

fn heading_to(from: Vec2, to: Vec2) -> f64 {
    let d = sub(to, from);
    d[1].atan2(d[0])
}

/// Speed that covers `distance` in one decision without overshooting, capped at the bound.
fn arrival_speed(env: &Env, distance: f64) -> f64 {
    let spec = env.spec();
    (distance / (spec.dt * spec.control_horizon as f64)).min(spec.max_speed)
}

/// The action an ideal controller would take from `state`.
pub fn expert_action(env: &Env, state: &EnvState) -> ActionVec {
    let spec = env.spec();
    let agent = state.agent();
    let (target, distance) = match &spec.family {
        Family::PointReach | Family::StallTrap { .. } => (spec.goal, dist(agent, spec.goal)),
        Family::PushBlock { contact_radius, .. } => {
            let block = state.block().expect("block");
            push_target(agent, block, spec.goal, *contact_radius)
        }
    };
    if distance == 0.0 {
        return ActionVec::zeros(1, 1);
    }
    ActionVec::new(vec![arrival_speed(env, distance)], vec![heading_to(agent, target)])
}

/// Waypoint for pushing `block` toward `goal`, and the distance to travel toward it.
fn push_target(agent: Vec2, block: Vec2, goal: Vec2, radius: f64) -> (Vec2, f64) {
    let Some(u) = unit(sub(goal, block)) else {
        return (agent, 0.0);
    };
    let rel = sub(agent, block);
    let along = dot(rel, u);
    let lateral = [rel[0] - along * u[0], rel[1] - along * u[1]];
    let behind = along < 0.0 && norm(lateral) < 0.35 * radius;
    if behind {
        // push through the block centre toward the goal
        let remaining = dist(block, goal);
        let aim = [block[0] + u[0] * radius, block[1] + u[1] * radius];
        return (aim, (remaining + 0.1 * radius).max(1e-9));
    }
    let approach = [block[0] - 1.05 * radius * u[0], block[1] - 1.05 * radius * u[1]];
    if along > -0.5 * radius {
        // on the wrong side: go around the block rather than through it
        let side = unit(lateral).unwrap_or([-u[1], u[0]]);
        let detour = [
            block[0] + 1.6 * radius * side[0] - 0.8 * radius * u[0],
            block[1] + 1.6 * radius * side[1] - 0.8 * radius * u[1],
        ];
        return (detour, dist(agent, detour));
    }
    (approach, dist(agent, approach))
}
