//! Gaussian and Gaussian-mixture policy heads for the regression baselines:
//! recorded log-likelihoods for weighted maximum likelihood, and plain
//! samplers for TD targets and evaluation.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gaussian::gaussian_log_prob_rows;
use crate::autodiff::{
    standard_normal_matrix, Activation, AdamState, Head, Net, Tape, Var,
};
use crate::critic::AdvantageWeights;
use crate::dataset::Batch;
use crate::error::{Error, Result};

/// Layer sizes for a diagonal-Gaussian policy head.
pub fn gaussian_policy_sizes(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![state_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(2 * action_dim);
    sizes
}

pub fn new_gaussian_policy(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Net> {
    Net::new(
        &gaussian_policy_sizes(state_dim, action_dim, hidden),
        Activation::Relu,
        Head::GaussianMeanLogStd,
        rng,
    )
}

/// Layer sizes for a K-component mixture head: K means, K log-stds, K
/// mixture logits, all from one linear output block.
pub fn gmm_policy_sizes(
    state_dim: usize,
    action_dim: usize,
    k: usize,
    hidden: &[usize],
) -> Vec<usize> {
    let mut sizes = vec![state_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(2 * k * action_dim + k);
    sizes
}

pub fn new_gmm_policy(
    state_dim: usize,
    action_dim: usize,
    k: usize,
    hidden: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Net> {
    Net::new(
        &gmm_policy_sizes(state_dim, action_dim, k, hidden),
        Activation::Relu,
        Head::Linear,
        rng,
    )
}

/// Recorded per-row Gaussian policy log-likelihood of the batch actions.
fn gaussian_log_lik(
    net: &Net,
    tape: &mut Tape,
    tp: &crate::autodiff::TapeParams,
    states: Var,
    actions: Var,
) -> Var {
    let (mean, log_std) = net.forward_on_tape(tape, tp, states).gaussian();
    gaussian_log_prob_rows(tape, mean, log_std, actions)
}

/// Recorded per-row mixture log-likelihood via log-sum-exp over components.
/// Raw head layout: `[means (K*d) | log_stds (K*d) | logits (K)]`; log-stds
/// are clamped like the dedicated Gaussian head.
fn gmm_log_lik(
    net: &Net,
    tape: &mut Tape,
    tp: &crate::autodiff::TapeParams,
    states: Var,
    actions: Var,
    k: usize,
    action_dim: usize,
) -> Var {
    use crate::autodiff::net::{LOG_STD_MAX, LOG_STD_MIN};
    let raw = net.forward_on_tape(tape, tp, states).plain();
    let d = action_dim;
    let mut component_liks = Vec::with_capacity(k);
    for c in 0..k {
        let mean = tape.slice_cols(raw, c * d, (c + 1) * d);
        let ls_raw = tape.slice_cols(raw, k * d + c * d, k * d + (c + 1) * d);
        let log_std = tape.clamp(ls_raw, LOG_STD_MIN, LOG_STD_MAX);
        component_liks.push(gaussian_log_prob_rows(tape, mean, log_std, actions));
    }
    let mut lik_cat = component_liks[0];
    for lik in &component_liks[1..] {
        lik_cat = tape.hcat(lik_cat, *lik);
    }
    let logits = tape.slice_cols(raw, 2 * k * d, 2 * k * d + k);
    let lse = tape.log_sum_exp_rows(logits);
    let log_weights = tape.sub_col_broadcast(logits, lse);
    let joint = tape.add(lik_cat, log_weights);
    tape.log_sum_exp_rows(joint)
}

/// One weighted maximum-likelihood step: minimizes
/// `-mean(omega * log pi(a|s))`. With unit weights this is exactly the
/// behavior-cloning update. Returns the loss value.
pub fn weighted_nll_update(
    net: &mut Net,
    opt: &mut AdamState,
    batch: &Batch,
    weights: &AdvantageWeights,
    gmm_k: Option<usize>,
) -> Result<f64> {
    if weights.omega.len() != batch.len() {
        return Err(Error::Contract(format!(
            "{} weights for a batch of {}",
            weights.omega.len(),
            batch.len()
        )));
    }
    let mut tape = Tape::new();
    let states = tape.constant(batch.states.clone());
    let actions = tape.constant(batch.actions.clone());
    let w = tape.constant(
        Array2::from_shape_vec((batch.len(), 1), weights.omega.clone()).expect("column"),
    );
    let tp = net.tape_params(&mut tape, true);
    let log_lik = match gmm_k {
        None => gaussian_log_lik(net, &mut tape, &tp, states, actions),
        Some(k) => gmm_log_lik(
            net,
            &mut tape,
            &tp,
            states,
            actions,
            k,
            batch.actions.ncols(),
        ),
    };
    let weighted = tape.mul(w, log_lik);
    let mean = tape.mean_all(weighted);
    let loss = tape.scale(mean, -1.0);
    let grads = tape.backward(loss)?;
    let g = net.grad_from(&grads, &tp);
    opt.step(net.params_mut(), &g)?;
    Ok(tape.value(loss)[[0, 0]])
}

/// Mean action of a Gaussian policy (deterministic evaluation).
pub fn gaussian_mean_actions(net: &Net, states: &Array2<f64>) -> Array2<f64> {
    let (mean, _) = net.forward_gaussian(states).expect("gaussian head");
    mean
}

/// Sample actions from a Gaussian policy, clamped into the action box.
pub fn gaussian_sample_actions(
    net: &Net,
    states: &Array2<f64>,
    bound: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let (mean, log_std) = net.forward_gaussian(states).expect("gaussian head");
    let noise = standard_normal_matrix(states.nrows(), mean.ncols(), rng);
    let mut out = mean;
    out.zip_mut_with(&(log_std.mapv(f64::exp) * noise), |m, s| {
        *m = (*m + s).clamp(-bound, bound)
    });
    out
}

/// Split a raw mixture head output row into (means, log_stds, logits).
fn gmm_split(row: &[f64], k: usize, d: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use crate::autodiff::net::{LOG_STD_MAX, LOG_STD_MIN};
    let means = row[..k * d].to_vec();
    let log_stds: Vec<f64> = row[k * d..2 * k * d]
        .iter()
        .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
        .collect();
    let logits = row[2 * k * d..2 * k * d + k].to_vec();
    (means, log_stds, logits)
}

/// Deterministic mixture evaluation action: the mean of the most probable
/// component.
pub fn gmm_mode_actions(net: &Net, states: &Array2<f64>, k: usize, d: usize) -> Array2<f64> {
    let raw = net.forward(states).expect("gmm head");
    let mut out = Array2::zeros((states.nrows(), d));
    for (i, row) in raw.axis_iter(Axis(0)).enumerate() {
        let row = row.to_vec();
        let (means, _, logits) = gmm_split(&row, k, d);
        let best = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap_or(0);
        for j in 0..d {
            out[[i, j]] = means[best * d + j];
        }
    }
    out
}

/// Sample from a mixture policy: component by softmax logits, then Gaussian
/// noise, clamped into the action box.
pub fn gmm_sample_actions(
    net: &Net,
    states: &Array2<f64>,
    k: usize,
    d: usize,
    bound: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let raw = net.forward(states).expect("gmm head");
    let mut out = Array2::zeros((states.nrows(), d));
    for (i, row) in raw.axis_iter(Axis(0)).enumerate() {
        let row = row.to_vec();
        let (means, log_stds, logits) = gmm_split(&row, k, d);
        let max_logit = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let weights: Vec<f64> = logits.iter().map(|l| (l - max_logit).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut pick = rng.random_range(0.0..total);
        let mut comp = k - 1;
        for (c, w) in weights.iter().enumerate() {
            if pick < *w {
                comp = c;
                break;
            }
            pick -= w;
        }
        for j in 0..d {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            let a = means[comp * d + j] + log_stds[comp * d + j].exp() * eps;
            out[[i, j]] = a.clamp(-bound, bound);
        }
    }
    out
}
