//! Planar navigation past a circular obstacle sitting on the straight line
//! from start to goal, so successful demonstrations split into a left and a
//! right detour with opposite initial actions.

use rand_chacha::ChaCha8Rng;

use super::{add_expert_noise, clamp_action, Env, EnvSpec, ExpertMode, StepResult};
use crate::error::{Error, Result};

const START: [f64; 2] = [0.0, 0.0];
const GOAL: [f64; 2] = [0.0, 1.0];
const OBSTACLE_CENTER: [f64; 2] = [0.0, 0.5];
const OBSTACLE_RADIUS: f64 = 0.15;
const GOAL_RADIUS: f64 = 0.05;
/// Lateral detour targets for the scripted experts; obstacle clearance along
/// the induced paths is about 0.1.
const DETOUR_X: f64 = 0.3;
/// Unit gain: the proportional controller stops saturating once the target
/// is closer than the action bound, so the expert settles into the goal
/// region instead of limit-cycling across it.
const CONTROL_GAIN: f64 = 1.0;

pub struct ObstacleNav2D {
    spec: EnvSpec,
}

impl ObstacleNav2D {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 2,
                action_bound: 0.1,
                horizon: 60,
                gamma: 0.99,
            },
        }
    }
}

impl Default for ObstacleNav2D {
    fn default() -> Self {
        Self::new()
    }
}

/// Minimum distance from segment a-b to point p.
fn segment_point_distance(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len_sq = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len_sq).clamp(0.0, 1.0)
    };
    let closest = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - closest[0]).powi(2) + (p[1] - closest[1]).powi(2)).sqrt()
}

impl Env for ObstacleNav2D {
    fn name(&self) -> String {
        "obstacle-nav".into()
    }

    fn base_name(&self) -> &'static str {
        "obstacle-nav"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        START.to_vec()
    }

    fn nominal_initial_state(&self) -> Vec<f64> {
        START.to_vec()
    }

    fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let a = clamp_action(action, self.spec.action_bound);
        let next = vec![state[0] + a[0], state[1] + a[1]];
        // Swept collision test so the obstacle cannot be stepped across.
        if segment_point_distance(state, &next, &OBSTACLE_CENTER) < OBSTACLE_RADIUS {
            return StepResult {
                next_state: next,
                reward: 0.0,
                done: true,
            };
        }
        let goal_dist = ((next[0] - GOAL[0]).powi(2) + (next[1] - GOAL[1]).powi(2)).sqrt();
        if goal_dist <= GOAL_RADIUS {
            return StepResult {
                next_state: next,
                reward: 1.0,
                done: true,
            };
        }
        StepResult {
            next_state: next,
            reward: 0.0,
            done: false,
        }
    }

    fn modes(&self) -> &'static [ExpertMode] {
        &[ExpertMode::Left, ExpertMode::Right]
    }

    fn expert_action(
        &self,
        mode: ExpertMode,
        state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let detour_x = match mode {
            ExpertMode::Left => -DETOUR_X,
            ExpertMode::Right => DETOUR_X,
            other => {
                return Err(Error::Config(format!(
                    "mode \"{}\" is not defined for obstacle-nav",
                    other.as_str()
                )));
            }
        };
        let target = if state[1] < OBSTACLE_CENTER[1] {
            [detour_x, OBSTACLE_CENTER[1]]
        } else {
            GOAL
        };
        let raw = [
            CONTROL_GAIN * (target[0] - state[0]),
            CONTROL_GAIN * (target[1] - state[1]),
        ];
        let sigma = 0.1 * self.spec.action_bound;
        Ok(add_expert_noise(&raw, sigma, self.spec.action_bound, rng))
    }

    fn anchor_expert_mode(&self) -> ExpertMode {
        ExpertMode::Left
    }

    fn relabel_reward(&self, name: &str, _s: &[f64], _a: &[f64], _n: &[f64]) -> Result<f64> {
        Err(Error::Config(format!(
            "no relabeling reward \"{name}\" defined for obstacle-nav"
        )))
    }

    fn success(&self, episode_return: f64, terminated: bool) -> bool {
        terminated && episode_return > 0.5
    }
}
