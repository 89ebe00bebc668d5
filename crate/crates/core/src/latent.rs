//! Deterministic latent policy: a state-to-latent map bounded to
//! [-z_max, z_max] by a tanh head, its composition with the decoder into the
//! overall policy, and the deterministic-policy-gradient update that ascends
//! the critic through the frozen decoder.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, AdamState, Head, Net, Tape, Var};
use crate::critic::{polyak, CriticPair};
use crate::cvae::CvaePolicy;
use crate::error::{Error, Result};

/// Q-function usable as the latent policy's training objective. Production
/// code drives the first critic of a [`CriticPair`]; tests can substitute
/// analytic critics recorded directly on the tape.
pub trait LatentObjectiveCritic {
    /// Record Q(s, a) for constant states and recorded actions, as a (B, 1)
    /// column. Must not introduce trainable parameters of its own.
    fn q_on_tape(&self, tape: &mut Tape, states: &Array2<f64>, actions: Var) -> Var;
}

impl LatentObjectiveCritic for CriticPair {
    fn q_on_tape(&self, tape: &mut Tape, states: &Array2<f64>, actions: Var) -> Var {
        let s = tape.constant(states.clone());
        let input = tape.hcat(s, actions);
        let tp = self.q1().tape_params(tape, false);
        self.q1().forward_on_tape(tape, &tp, input).plain()
    }
}

/// Deterministic state-to-latent policy with a target copy.
pub struct LatentPolicy {
    net: Net,
    target: Net,
    opt: AdamState,
    z_max: f64,
    /// Linear head instead of the tanh bound (the unbounded ablation).
    unbounded: bool,
}

impl LatentPolicy {
    pub fn new(
        state_dim: usize,
        d_z: usize,
        z_max: f64,
        unbounded: bool,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !(z_max > 0.0) {
            return Err(Error::Config(format!("z_max must be positive, got {z_max}")));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(d_z);
        let head = if unbounded {
            Head::Linear
        } else {
            Head::TanhScaled { scale: z_max }
        };
        let net = Net::new(&sizes, Activation::Relu, head, rng)?;
        let target = net.clone();
        let opt = AdamState::new(net.param_count(), lr);
        Ok(Self {
            net,
            target,
            opt,
            z_max,
            unbounded,
        })
    }

    pub fn from_parts(net: Net, target: Net, opt: AdamState, z_max: f64, unbounded: bool) -> Self {
        Self {
            net,
            target,
            opt,
            z_max,
            unbounded,
        }
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn target(&self) -> &Net {
        &self.target
    }

    pub fn opt(&self) -> &AdamState {
        &self.opt
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn unbounded(&self) -> bool {
        self.unbounded
    }

    /// Latent for a batch of states, from the online network.
    pub fn act_latent_batch(&self, states: &Array2<f64>) -> Array2<f64> {
        self.net.forward(states).expect("latent policy input dims")
    }

    /// Latent for one state.
    pub fn act_latent(&self, state: &[f64]) -> Vec<f64> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row");
        self.act_latent_batch(&s).row(0).to_vec()
    }

    /// Latent from the target network (used inside TD targets).
    pub fn target_latent_batch(&self, states: &Array2<f64>) -> Array2<f64> {
        self.target.forward(states).expect("latent policy input dims")
    }

    /// Overall policy: decode the online latent through the action policy.
    pub fn overall_act(&self, cvae: &CvaePolicy, state: &[f64]) -> Vec<f64> {
        cvae.decode(state, &self.act_latent(state))
    }

    /// Overall policy on a batch of states.
    pub fn overall_act_batch(&self, cvae: &CvaePolicy, states: &Array2<f64>) -> Array2<f64> {
        cvae.decode_batch(states, &self.act_latent_batch(states))
    }

    /// One ascent step on `mean Q(s, decode(s, pi(s)))` over the state
    /// batch. Gradient flows through the frozen decoder and critic into the
    /// latent network only; decoder and critic parameters are untouched.
    /// Returns the objective value (mean Q) before the step.
    pub fn update(
        &mut self,
        cvae: &CvaePolicy,
        critic: &dyn LatentObjectiveCritic,
        states: &Array2<f64>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let s = tape.constant(states.clone());
        let tp = self.net.tape_params(&mut tape, true);
        let z = self.net.forward_on_tape(&mut tape, &tp, s).plain();
        let s_for_decode = tape.constant(states.clone());
        let action = cvae_decode_frozen(cvae, &mut tape, s_for_decode, z);
        let q = critic.q_on_tape(&mut tape, states, action);
        let mean_q = tape.mean_all(q);
        let loss = tape.scale(mean_q, -1.0);
        let grads = tape.backward(loss)?;
        let g = self.net.grad_from(&grads, &tp);
        self.opt.step(self.net.params_mut(), &g)?;
        Ok(tape.value(mean_q)[[0, 0]])
    }

    /// Polyak update of the target network toward the online one.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
        }
        polyak(self.target.params_mut(), self.net.params(), tau);
        Ok(())
    }
}

fn cvae_decode_frozen(cvae: &CvaePolicy, tape: &mut Tape, states: Var, z: Var) -> Var {
    cvae.decode_on_tape_frozen(tape, states, z)
}
