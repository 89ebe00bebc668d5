//! Twin Q-functions with polyak target copies, one-step TD policy
//! evaluation, value estimation under the overall policy, and exponential
//! advantage weights.
//!
//! TD targets and values are computed on the plain (untaped) forward path,
//! so no gradient can flow through them by construction.

use ndarray::{concatenate, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, AdamState, Head, Net, Tape};
use crate::dataset::Batch;
use crate::error::{Error, Result};

/// Exponent clamp keeping weights strictly positive under f64.
const MIN_EXPONENT: f64 = -700.0;

/// Anything that can propose one action per state row. Deterministic
/// policies ignore the generator.
pub trait ActionSampler {
    fn sample_actions(&self, states: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64>;
}

/// Per-transition advantage weights with the hyperparameters they were
/// computed under. `0 < omega <= omega_max` componentwise.
#[derive(Debug, Clone)]
pub struct AdvantageWeights {
    pub omega: Vec<f64>,
    pub lambda: f64,
    pub omega_max: f64,
}

impl AdvantageWeights {
    /// The all-ones weights of the first iteration and of unweighted
    /// (PLAS-style) training.
    pub fn ones(n: usize, lambda: f64, omega_max: f64) -> Self {
        Self {
            omega: vec![1.0; n],
            lambda,
            omega_max,
        }
    }
}

/// In-place polyak interpolation `target += tau * (online - target)`.
/// Exact at both fixed points: `tau = 1` copies bitwise, and equal vectors
/// stay bitwise unchanged for any `tau`.
pub(crate) fn polyak(target: &mut [f64], online: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), online.len());
    if tau == 1.0 {
        target.copy_from_slice(online);
    } else {
        for (t, o) in target.iter_mut().zip(online) {
            *t += tau * (*o - *t);
        }
    }
}

/// Twin online Q-networks with target copies.
pub struct CriticPair {
    q1: Net,
    q2: Net,
    q1_target: Net,
    q2_target: Net,
    opt1: AdamState,
    opt2: AdamState,
}

impl CriticPair {
    /// Fresh critics on `state_dim + action_dim` inputs. Targets start as
    /// bitwise copies of the online networks.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q1 = Net::new(&sizes, Activation::Relu, Head::Linear, rng)?;
        let q2 = Net::new(&sizes, Activation::Relu, Head::Linear, rng)?;
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let n = q1.param_count();
        Ok(Self {
            q1,
            q2,
            q1_target,
            q2_target,
            opt1: AdamState::new(n, lr),
            opt2: AdamState::new(n, lr),
        })
    }

    pub fn from_parts(
        q1: Net,
        q2: Net,
        q1_target: Net,
        q2_target: Net,
        opt1: AdamState,
        opt2: AdamState,
    ) -> Self {
        Self {
            q1,
            q2,
            q1_target,
            q2_target,
            opt1,
            opt2,
        }
    }

    pub fn q1(&self) -> &Net {
        &self.q1
    }

    pub fn q2(&self) -> &Net {
        &self.q2
    }

    pub fn q1_target(&self) -> &Net {
        &self.q1_target
    }

    pub fn q2_target(&self) -> &Net {
        &self.q2_target
    }

    pub fn opt1(&self) -> &AdamState {
        &self.opt1
    }

    pub fn opt2(&self) -> &AdamState {
        &self.opt2
    }

    fn join(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        concatenate(Axis(1), &[states.view(), actions.view()]).expect("row counts match")
    }

    /// Componentwise min of the two online Q-networks, as a (B, 1) column.
    pub fn min_online_q(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        let x = Self::join(states, actions);
        let a = self.q1.forward(&x).expect("critic input dims");
        let b = self.q2.forward(&x).expect("critic input dims");
        ndarray::Zip::from(&a).and(&b).map_collect(|&u, &v| u.min(v))
    }

    /// Componentwise min of the two target Q-networks.
    pub fn min_target_q(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        let x = Self::join(states, actions);
        let a = self.q1_target.forward(&x).expect("critic input dims");
        let b = self.q2_target.forward(&x).expect("critic input dims");
        ndarray::Zip::from(&a).and(&b).map_collect(|&u, &v| u.min(v))
    }

    /// Value estimate `V(s)`: the average over `n_samples` policy actions of
    /// the min target Q. With a deterministic policy one sample is exact.
    pub fn estimate_value(
        &self,
        states: &Array2<f64>,
        policy: &dyn ActionSampler,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Array2<f64> {
        assert!(n_samples >= 1, "n_samples must be at least 1");
        let mut acc = Array2::zeros((states.nrows(), 1));
        for _ in 0..n_samples {
            let actions = policy.sample_actions(states, rng);
            acc += &self.min_target_q(states, &actions);
        }
        acc / n_samples as f64
    }

    /// TD targets `y = r + gamma * (1 - terminal) * V(next_state)`, computed
    /// without gradient flow.
    pub fn td_targets(
        &self,
        batch: &Batch,
        policy: &dyn ActionSampler,
        gamma: f64,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Array2<f64> {
        let v_next = self.estimate_value(&batch.next_states, policy, n_samples, rng);
        let bootstrap = batch.terminal_mask.mapv(|t| 1.0 - t) * &v_next;
        &batch.rewards + &(bootstrap * gamma)
    }

    /// One optimizer step on both online networks toward the TD targets.
    /// Returns the mean squared error across the two networks.
    pub fn td_update(
        &mut self,
        batch: &Batch,
        policy: &dyn ActionSampler,
        gamma: f64,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("td_update needs a nonempty batch".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        let targets = self.td_targets(batch, policy, gamma, n_samples, rng);
        let x = Self::join(&batch.states, &batch.actions);

        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let yv = tape.constant(targets);
        let tp1 = self.q1.tape_params(&mut tape, true);
        let tp2 = self.q2.tape_params(&mut tape, true);
        let q1 = self.q1.forward_on_tape(&mut tape, &tp1, xv).plain();
        let q2 = self.q2.forward_on_tape(&mut tape, &tp2, xv).plain();
        let d1 = tape.sub(q1, yv);
        let s1 = tape.square(d1);
        let l1 = tape.mean_all(s1);
        let d2 = tape.sub(q2, yv);
        let s2 = tape.square(d2);
        let l2 = tape.mean_all(s2);
        let loss = tape.add(l1, l2);
        let grads = tape.backward(loss)?;
        let g1 = self.q1.grad_from(&grads, &tp1);
        let g2 = self.q2.grad_from(&grads, &tp2);
        self.opt1.step(self.q1.params_mut(), &g1)?;
        self.opt2.step(self.q2.params_mut(), &g2)?;
        Ok((tape.value(l1)[[0, 0]] + tape.value(l2)[[0, 0]]) / 2.0)
    }

    /// Exponential advantage weights for the batch:
    /// `omega = min(exp((minQ(s, a) - V(s)) / lambda), omega_max)` with the
    /// min of the two online networks for Q and target networks inside V.
    pub fn advantage_weights(
        &self,
        batch: &Batch,
        policy: &dyn ActionSampler,
        lambda: f64,
        omega_max: f64,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<AdvantageWeights> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "advantage temperature must be positive, got {lambda}"
            )));
        }
        let q = self.min_online_q(&batch.states, &batch.actions);
        let v = self.estimate_value(&batch.states, policy, n_samples, rng);
        let omega = q
            .iter()
            .zip(v.iter())
            .map(|(&qi, &vi)| ((qi - vi) / lambda).max(MIN_EXPONENT).exp().min(omega_max))
            .collect();
        Ok(AdvantageWeights {
            omega,
            lambda,
            omega_max,
        })
    }

    /// Polyak update of both target networks toward their online copies.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
        }
        polyak(self.q1_target.params_mut(), self.q1.params(), tau);
        polyak(self.q2_target.params_mut(), self.q2.params(), tau);
        Ok(())
    }
}
