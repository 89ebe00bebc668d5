//! One-dimensional point mass with force control. The dynamics are shared
//! by three tasks that differ only in reward: run forward (reward is the
//! achieved velocity), run backward (its negation), and hold still (negative
//! speed). Datasets from different tasks can therefore be mixed and
//! relabeled.

use rand_chacha::ChaCha8Rng;

use super::{add_expert_noise, clamp_action, Env, EnvSpec, ExpertMode, StepResult};
use crate::error::{Error, Result};

const VELOCITY_CAP: f64 = 2.0;
const DRAG: f64 = 0.95;
const FORCE_SCALE: f64 = 0.1;
const DT: f64 = 0.1;
const CONTROL_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Forward,
    Backward,
    Still,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Forward => "forward",
            Task::Backward => "backward",
            Task::Still => "still",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "forward" => Task::Forward,
            "backward" => Task::Backward,
            "still" => Task::Still,
            other => {
                return Err(Error::Config(format!(
                    "unknown multitask-point task \"{other}\""
                )));
            }
        })
    }

    /// Reward as a function of the velocity reached by the transition.
    fn reward(&self, next_velocity: f64) -> f64 {
        match self {
            Task::Forward => next_velocity,
            Task::Backward => -next_velocity,
            Task::Still => -next_velocity.abs(),
        }
    }
}

pub struct MultiTaskPoint {
    task: Task,
    spec: EnvSpec,
}

impl MultiTaskPoint {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            spec: EnvSpec {
                state_dim: 2,
                action_dim: 1,
                action_bound: 1.0,
                horizon: 50,
                gamma: 0.99,
            },
        }
    }

    fn next_velocity(state: &[f64], action: f64) -> f64 {
        (DRAG * state[1] + FORCE_SCALE * action).clamp(-VELOCITY_CAP, VELOCITY_CAP)
    }
}

impl Env for MultiTaskPoint {
    fn name(&self) -> String {
        format!("multitask-point:{}", self.task.as_str())
    }

    fn base_name(&self) -> &'static str {
        "multitask-point"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn nominal_initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let a = clamp_action(action, self.spec.action_bound);
        let v = Self::next_velocity(state, a[0]);
        let x = state[0] + DT * v;
        StepResult {
            next_state: vec![x, v],
            reward: self.task.reward(v),
            done: false,
        }
    }

    fn modes(&self) -> &'static [ExpertMode] {
        &[ExpertMode::Forward, ExpertMode::Backward, ExpertMode::Still]
    }

    fn expert_action(
        &self,
        mode: ExpertMode,
        state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let v_target = match mode {
            ExpertMode::Forward => VELOCITY_CAP,
            ExpertMode::Backward => -VELOCITY_CAP,
            ExpertMode::Still => 0.0,
            other => {
                return Err(Error::Config(format!(
                    "mode \"{}\" is not defined for multitask-point",
                    other.as_str()
                )));
            }
        };
        let raw = [CONTROL_GAIN * (v_target - state[1])];
        let sigma = 0.1 * self.spec.action_bound;
        Ok(add_expert_noise(&raw, sigma, self.spec.action_bound, rng))
    }

    fn anchor_expert_mode(&self) -> ExpertMode {
        match self.task {
            Task::Forward => ExpertMode::Forward,
            Task::Backward => ExpertMode::Backward,
            Task::Still => ExpertMode::Still,
        }
    }

    fn relabel_reward(&self, name: &str, _s: &[f64], _a: &[f64], next: &[f64]) -> Result<f64> {
        Ok(Task::parse(name)?.reward(next[1]))
    }

    fn success(&self, episode_return: f64, _terminated: bool) -> bool {
        match self.task {
            Task::Forward | Task::Backward => episode_return > 0.0,
            // The still task's best return is 0; allow slack for noise.
            Task::Still => episode_return > -1.0,
        }
    }
}
