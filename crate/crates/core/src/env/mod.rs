//! Small analytic environments: a bimodal obstacle-navigation task, a
//! multi-task point agent with relabelable rewards, and a sparse-reward
//! U-maze. Dynamics are pure functions of (state, action); the episode
//! horizon is enforced by the rollout driver, and horizon truncation is
//! *not* an environmental termination.

mod multitask_point;
mod obstacle_nav;
mod sparse_maze;

pub use multitask_point::{MultiTaskPoint, Task};
pub use obstacle_nav::ObstacleNav2D;
pub use sparse_maze::SparseMaze;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Static description of an environment's interface.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Symmetric box bound: every action component lies in [-bound, bound].
    pub action_bound: f64,
    /// Episode horizon enforced by the rollout driver.
    pub horizon: usize,
    pub gamma: f64,
}

/// Result of one transition.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Environmental termination (goal or collision), never truncation.
    pub done: bool,
}

/// Data-collection policy modes, parsed from config/CLI strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpertMode {
    Left,
    Right,
    Forward,
    Backward,
    Still,
    Expert,
    Noisy,
}

impl ExpertMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "left" => Self::Left,
            "right" => Self::Right,
            "forward" => Self::Forward,
            "backward" => Self::Backward,
            "still" => Self::Still,
            "expert" => Self::Expert,
            "noisy" => Self::Noisy,
            other => {
                return Err(Error::Config(format!("unknown expert mode \"{other}\"")));
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Forward => "forward",
            Self::Backward => "backward",
            Self::Still => "still",
            Self::Expert => "expert",
            Self::Noisy => "noisy",
        }
    }
}

/// An environment with pure-function dynamics and scripted data-collection
/// experts.
pub trait Env: Send + Sync {
    /// Full name, including a task suffix where applicable
    /// (e.g. `multitask-point:forward`).
    fn name(&self) -> String;

    /// Name without the task suffix; datasets from the same base share
    /// dynamics and dimensions and may be mixed.
    fn base_name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec;

    /// Initial state. Deterministic given the generator state.
    fn reset(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Nominal initial state (jitter-free), used as the default histogram
    /// query point.
    fn nominal_initial_state(&self) -> Vec<f64>;

    /// One transition. Out-of-bounds actions are clamped, never an error.
    fn step(&self, state: &[f64], action: &[f64]) -> StepResult;

    /// Modes this environment's scripted experts support.
    fn modes(&self) -> &'static [ExpertMode];

    /// Scripted data-collection action for `mode` at `state`.
    fn expert_action(&self, mode: ExpertMode, state: &[f64], rng: &mut ChaCha8Rng)
        -> Result<Vec<f64>>;

    /// The strongest scripted mode, used for expert score anchors.
    fn anchor_expert_mode(&self) -> ExpertMode;

    /// Recompute a reward from (state, action, next-state) under a named
    /// reward function, for multi-task relabeling.
    fn relabel_reward(&self, name: &str, state: &[f64], action: &[f64], next: &[f64])
        -> Result<f64>;

    /// Whether a finished episode counts as a success.
    fn success(&self, episode_return: f64, terminated: bool) -> bool;
}

/// Build an environment from its config/CLI name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "obstacle-nav" => Ok(Box::new(ObstacleNav2D::new())),
        "sparse-maze" => Ok(Box::new(SparseMaze::new())),
        "multitask-point" | "multitask-point:forward" => {
            Ok(Box::new(MultiTaskPoint::new(Task::Forward)))
        }
        "multitask-point:backward" => Ok(Box::new(MultiTaskPoint::new(Task::Backward))),
        "multitask-point:still" => Ok(Box::new(MultiTaskPoint::new(Task::Still))),
        other => Err(Error::Config(format!("unknown environment \"{other}\""))),
    }
}

/// Clamp every action component into the environment's symmetric box.
pub fn clamp_action(action: &[f64], bound: f64) -> Vec<f64> {
    action.iter().map(|a| a.clamp(-bound, bound)).collect()
}

/// Saturate the raw control to the action box, then perturb with Gaussian
/// noise and clamp again. Applying noise after saturation keeps it effective
/// even where the controller is pinned at the bound, which is what gives the
/// generated datasets nondegenerate action support.
pub(crate) fn add_expert_noise(
    raw: &[f64],
    sigma: f64,
    bound: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    raw.iter()
        .map(|a| (a.clamp(-bound, bound) + normal.sample(rng)).clamp(-bound, bound))
        .collect()
}

/// One recorded step of a rollout.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Environmental termination; false on horizon truncation.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub steps: Vec<RolloutStep>,
    /// Undiscounted episode return.
    pub episode_return: f64,
    /// True if the episode ended by environmental termination.
    pub terminated: bool,
}

/// Run one episode under `policy`, respecting the horizon. The policy takes
/// the raw (unnormalized) state and may draw from the episode's generator.
pub fn rollout(
    env: &dyn Env,
    mut policy: impl FnMut(&[f64], &mut ChaCha8Rng) -> Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> RolloutResult {
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    let mut episode_return = 0.0;
    let mut terminated = false;
    for _ in 0..env.spec().horizon {
        let action = clamp_action(&policy(&state, rng), env.spec().action_bound);
        let step = env.step(&state, &action);
        episode_return += step.reward;
        steps.push(RolloutStep {
            state: state.clone(),
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal: step.done,
        });
        state = step.next_state;
        if step.done {
            terminated = true;
            break;
        }
    }
    RolloutResult {
        steps,
        episode_return,
        terminated,
    }
}
