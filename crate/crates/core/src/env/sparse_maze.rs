//! U-shaped corridor with a sparse binary reward: 1 inside the goal region
//! at the top of the right arm, 0 everywhere else. Walls clamp motion with
//! axis-wise sliding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{add_expert_noise, clamp_action, Env, EnvSpec, ExpertMode, StepResult};
use crate::error::{Error, Result};

/// The central block [0.3, 0.7] x [0.3, 1.0] is solid; free space is the
/// U-shaped remainder of the unit square.
const WALL_X: (f64, f64) = (0.3, 0.7);
const WALL_Y_MIN: f64 = 0.3;

const START: [f64; 2] = [0.15, 0.85];
const START_JITTER: f64 = 0.05;
const GOAL: [f64; 2] = [0.85, 0.85];
const GOAL_RADIUS: f64 = 0.08;
const CONTROL_GAIN: f64 = 3.0;

pub struct SparseMaze {
    spec: EnvSpec,
}

impl SparseMaze {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 2,
                action_bound: 0.05,
                horizon: 120,
                gamma: 0.99,
            },
        }
    }

    fn is_free(p: &[f64]) -> bool {
        let in_square = (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        let in_wall = p[0] > WALL_X.0 && p[0] < WALL_X.1 && p[1] > WALL_Y_MIN;
        in_square && !in_wall
    }
}

impl Default for SparseMaze {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for SparseMaze {
    fn name(&self) -> String {
        "sparse-maze".into()
    }

    fn base_name(&self) -> &'static str {
        "sparse-maze"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![
            START[0] + rng.random_range(-START_JITTER..START_JITTER),
            START[1] + rng.random_range(-START_JITTER..START_JITTER),
        ]
    }

    fn nominal_initial_state(&self) -> Vec<f64> {
        START.to_vec()
    }

    fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let a = clamp_action(action, self.spec.action_bound);
        let full = [state[0] + a[0], state[1] + a[1]];
        let next = if Self::is_free(&full) {
            full.to_vec()
        } else {
            // Axis-wise sliding along walls.
            let mut p = state.to_vec();
            let x_only = [state[0] + a[0], state[1]];
            if Self::is_free(&x_only) {
                p[0] = x_only[0];
            }
            let y_only = [p[0], state[1] + a[1]];
            if Self::is_free(&y_only) {
                p[1] = y_only[1];
            }
            p
        };
        let goal_dist = ((next[0] - GOAL[0]).powi(2) + (next[1] - GOAL[1]).powi(2)).sqrt();
        if goal_dist <= GOAL_RADIUS {
            StepResult {
                next_state: next,
                reward: 1.0,
                done: true,
            }
        } else {
            StepResult {
                next_state: next,
                reward: 0.0,
                done: false,
            }
        }
    }

    fn modes(&self) -> &'static [ExpertMode] {
        &[ExpertMode::Expert, ExpertMode::Noisy]
    }

    fn expert_action(
        &self,
        mode: ExpertMode,
        state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let noise_frac = match mode {
            ExpertMode::Expert => 0.1,
            // Noise at four times the action bound mostly drowns the waypoint
            // drift: broad corridor coverage, few completions inside the
            // horizon.
            ExpertMode::Noisy => 4.0,
            other => {
                return Err(Error::Config(format!(
                    "mode \"{}\" is not defined for sparse-maze",
                    other.as_str()
                )));
            }
        };
        // Waypoints: down the left arm, across the bottom, up the right arm.
        let target = if state[0] < WALL_X.0 && state[1] > 0.2 {
            [0.15, 0.15]
        } else if state[1] < WALL_Y_MIN && state[0] < 0.8 {
            [0.85, 0.15]
        } else {
            GOAL
        };
        let raw = [
            CONTROL_GAIN * (target[0] - state[0]),
            CONTROL_GAIN * (target[1] - state[1]),
        ];
        let sigma = noise_frac * self.spec.action_bound;
        Ok(add_expert_noise(&raw, sigma, self.spec.action_bound, rng))
    }

    fn anchor_expert_mode(&self) -> ExpertMode {
        ExpertMode::Expert
    }

    fn relabel_reward(&self, name: &str, _s: &[f64], _a: &[f64], _n: &[f64]) -> Result<f64> {
        Err(Error::Config(format!(
            "no relabeling reward \"{name}\" defined for sparse-maze"
        )))
    }

    fn success(&self, episode_return: f64, terminated: bool) -> bool {
        terminated && episode_return > 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout;
    use crate::rng::{derive_rng, Domain};

    #[test]
    fn seeded_reset_is_reproducible() {
        let env = SparseMaze::new();
        let mut a = derive_rng(9, Domain::DataGen, 0, 0);
        let mut b = derive_rng(9, Domain::DataGen, 0, 0);
        assert_eq!(env.reset(&mut a), env.reset(&mut b));
    }

    #[test]
    fn walls_clamp_motion() {
        let env = SparseMaze::new();
        // Pushing straight into the wall from the left arm: x motion blocked,
        // y motion survives.
        let step = env.step(&[0.29, 0.6], &[0.05, -0.02]);
        assert_eq!(step.next_state[0], 0.29);
        assert!((step.next_state[1] - 0.58).abs() < 1e-12);
        // Leaving the unit square is blocked too.
        let step = env.step(&[0.01, 0.5], &[-0.05, 0.0]);
        assert_eq!(step.next_state, vec![0.01, 0.5]);
    }

    #[test]
    fn expert_mode_reaches_the_goal_reliably() {
        let env = SparseMaze::new();
        let mut successes = 0;
        for ep in 0..20 {
            let mut rng = derive_rng(11, Domain::DataGen, 0, ep);
            let res = rollout(
                &env,
                |s, r| env.expert_action(ExpertMode::Expert, s, r).unwrap(),
                &mut rng,
            );
            if res.episode_return > 0.5 {
                successes += 1;
            }
        }
        assert_eq!(successes, 20);
    }

    #[test]
    fn noisy_mode_succeeds_only_sometimes() {
        let env = SparseMaze::new();
        let mut successes = 0;
        for ep in 0..50 {
            let mut rng = derive_rng(12, Domain::DataGen, 1, ep);
            let res = rollout(
                &env,
                |s, r| env.expert_action(ExpertMode::Noisy, s, r).unwrap(),
                &mut rng,
            );
            if res.episode_return > 0.5 {
                successes += 1;
            }
        }
        assert!(
            successes < 40,
            "noisy waypoint data should be far from expert ({successes}/50)"
        );
    }

    #[test]
    fn rewards_are_binary() {
        let env = SparseMaze::new();
        let mut rng = derive_rng(13, Domain::DataGen, 0, 0);
        for ep in 0..10 {
            let mut ep_rng = derive_rng(13, Domain::DataGen, 2, ep);
            let res = rollout(
                &env,
                |_, r| vec![r.random_range(-0.05..0.05), r.random_range(-0.05..0.05)],
                &mut ep_rng,
            );
            for s in &res.steps {
                assert!(s.reward == 0.0 || s.reward == 1.0);
            }
        }
        let _ = &mut rng;
    }
}
