//! Conditional latent-variable action policy: an encoder from (state,
//! action) to a diagonal Gaussian over the latent, a decoder from (state,
//! latent) to a bounded action, and the advantage-weighted variational
//! objective that trains them.
//!
//! The decoder likelihood is a fixed-variance Gaussian with its std set to
//! the action bound, so the reconstruction term is squared error over two in
//! bound-relative units; minimizing `mean(omega * (recon + beta * kl))`
//! maximizes the weighted bound. Measuring reconstruction relative to the
//! action scale keeps the recon/KL gradient balance independent of how wide
//! the environment's action box is; with a unit-variance likelihood instead,
//! small-bound environments starve the reconstruction term and the posterior
//! collapses onto the prior before the decoder can separate action modes.

use ndarray::{concatenate, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gaussian::{kl_std_normal_rows, reparam};
use crate::autodiff::{
    standard_normal_matrix, standard_normal_vec, Activation, AdamState, Head, Net, Tape, Var,
};
use crate::critic::AdvantageWeights;
use crate::dataset::Batch;
use crate::error::{Error, Result};

/// Encoder, decoder, and their optimizer states.
pub struct CvaePolicy {
    encoder: Net,
    decoder: Net,
    d_z: usize,
    beta: f64,
    action_bound: f64,
    enc_opt: AdamState,
    dec_opt: AdamState,
}

/// Standard-normal draw from the latent prior.
pub fn sample_prior(d_z: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    standard_normal_vec(d_z, rng)
}

impl CvaePolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_bound: f64,
        d_z: usize,
        beta: f64,
        hidden: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if d_z == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if beta < 0.0 {
            return Err(Error::Config(format!("beta must be nonnegative, got {beta}")));
        }
        let mut enc_sizes = vec![state_dim + action_dim];
        enc_sizes.extend_from_slice(hidden);
        enc_sizes.push(2 * d_z);
        let encoder = Net::new(&enc_sizes, Activation::Relu, Head::GaussianMeanLogStd, rng)?;
        let mut dec_sizes = vec![state_dim + d_z];
        dec_sizes.extend_from_slice(hidden);
        dec_sizes.push(action_dim);
        let decoder = Net::new(
            &dec_sizes,
            Activation::Relu,
            Head::TanhScaled {
                scale: action_bound,
            },
            rng,
        )?;
        let enc_opt = AdamState::new(encoder.param_count(), lr);
        let dec_opt = AdamState::new(decoder.param_count(), lr);
        Ok(Self {
            encoder,
            decoder,
            d_z,
            beta,
            action_bound,
            enc_opt,
            dec_opt,
        })
    }

    pub fn from_parts(
        encoder: Net,
        decoder: Net,
        d_z: usize,
        beta: f64,
        action_bound: f64,
        enc_opt: AdamState,
        dec_opt: AdamState,
    ) -> Self {
        Self {
            encoder,
            decoder,
            d_z,
            beta,
            action_bound,
            enc_opt,
            dec_opt,
        }
    }

    pub fn encoder(&self) -> &Net {
        &self.encoder
    }

    pub fn decoder(&self) -> &Net {
        &self.decoder
    }

    pub fn enc_opt(&self) -> &AdamState {
        &self.enc_opt
    }

    pub fn dec_opt(&self) -> &AdamState {
        &self.dec_opt
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    /// Deterministic decode of one (state, latent) pair.
    pub fn decode(&self, state: &[f64], z: &[f64]) -> Vec<f64> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row");
        let zs = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row");
        self.decode_batch(&s, &zs).row(0).to_vec()
    }

    /// Deterministic decode of a batch of (state, latent) rows.
    pub fn decode_batch(&self, states: &Array2<f64>, zs: &Array2<f64>) -> Array2<f64> {
        let input = concatenate(Axis(1), &[states.view(), zs.view()]).expect("row counts");
        self.decoder.forward(&input).expect("decoder input dims")
    }

    /// Recorded decode with frozen decoder parameters: gradient flows
    /// through the decoder into `z` but the decoder itself gets none.
    pub fn decode_on_tape_frozen(&self, tape: &mut Tape, states: Var, z: Var) -> Var {
        let input = tape.hcat(states, z);
        let tp = self.decoder.tape_params(tape, false);
        self.decoder.forward_on_tape(tape, &tp, input).plain()
    }

    /// Record the weighted variational loss on a fresh tape. Reparameterized
    /// noise is the first draw from `rng`. Returns the tape, the scalar loss
    /// node, the weighted loss components, and the parameter handles.
    fn record_loss(
        &self,
        batch: &Batch,
        weights: &AdvantageWeights,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossRecording> {
        if weights.omega.len() != batch.len() {
            return Err(Error::Contract(format!(
                "{} weights for a batch of {}",
                weights.omega.len(),
                batch.len()
            )));
        }
        let noise = standard_normal_matrix(batch.len(), self.d_z, rng);
        let enc_input =
            concatenate(Axis(1), &[batch.states.view(), batch.actions.view()]).expect("rows");

        let mut tape = Tape::new();
        let enc_in = tape.constant(enc_input);
        let states = tape.constant(batch.states.clone());
        let actions = tape.constant(batch.actions.clone());
        let noise_v = tape.constant(noise);
        let w = tape.constant(
            Array2::from_shape_vec((batch.len(), 1), weights.omega.clone()).expect("column"),
        );

        let enc_tp = self.encoder.tape_params(&mut tape, true);
        let (mean, log_std) = self
            .encoder
            .forward_on_tape(&mut tape, &enc_tp, enc_in)
            .gaussian();
        let z = reparam(&mut tape, mean, log_std, noise_v);

        let dec_in = tape.hcat(states, z);
        let dec_tp = self.decoder.tape_params(&mut tape, true);
        let decoded = self
            .decoder
            .forward_on_tape(&mut tape, &dec_tp, dec_in)
            .plain();

        let diff = tape.sub(decoded, actions);
        let sq = tape.square(diff);
        let sum_sq = tape.sum_rows(sq);
        let recon_row = tape.scale(sum_sq, 0.5 / (self.action_bound * self.action_bound));
        let kl_row = kl_std_normal_rows(&mut tape, mean, log_std);

        let w_recon = tape.mul(w, recon_row);
        let w_kl = tape.mul(w, kl_row);
        let recon_mean = tape.mean_all(w_recon);
        let kl_mean = tape.mean_all(w_kl);
        let beta_kl = tape.scale(kl_mean, self.beta);
        let loss = tape.add(recon_mean, beta_kl);
        Ok(LossRecording {
            tape,
            loss,
            recon: recon_mean,
            kl: kl_mean,
            enc_tp,
            dec_tp,
        })
    }

    /// Weighted variational loss value and its (weighted) components:
    /// `loss = recon + beta * kl`.
    pub fn weighted_elbo_loss(
        &self,
        batch: &Batch,
        weights: &AdvantageWeights,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64, f64)> {
        let rec = self.record_loss(batch, weights, rng)?;
        Ok((
            rec.tape.value(rec.loss)[[0, 0]],
            rec.tape.value(rec.recon)[[0, 0]],
            rec.tape.value(rec.kl)[[0, 0]],
        ))
    }

    /// One joint optimizer step on encoder and decoder. Returns the weighted
    /// (reconstruction, KL) components for logging.
    pub fn update(
        &mut self,
        batch: &Batch,
        weights: &AdvantageWeights,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        let rec = self.record_loss(batch, weights, rng)?;
        let grads = rec.tape.backward(rec.loss)?;
        let enc_grad = self.encoder.grad_from(&grads, &rec.enc_tp);
        let dec_grad = self.decoder.grad_from(&grads, &rec.dec_tp);
        self.enc_opt.step(self.encoder.params_mut(), &enc_grad)?;
        self.dec_opt.step(self.decoder.params_mut(), &dec_grad)?;
        Ok((
            rec.tape.value(rec.recon)[[0, 0]],
            rec.tape.value(rec.kl)[[0, 0]],
        ))
    }
}

struct LossRecording {
    tape: Tape,
    loss: Var,
    recon: Var,
    kl: Var,
    enc_tp: crate::autodiff::TapeParams,
    dec_tp: crate::autodiff::TapeParams,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GaussianParams;
    use crate::rng::{derive_rng, Domain};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn policy(seed: u64, beta: f64) -> CvaePolicy {
        let mut rng = derive_rng(seed, Domain::Init, 0, 0);
        CvaePolicy::new(2, 1, 0.1, 2, beta, &[16, 16], 1e-3, &mut rng).unwrap()
    }

    fn toy_batch(n: usize, seed: u64) -> Batch {
        let mut rng = derive_rng(seed, Domain::Batch, 0, 0);
        let states = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let actions = Array2::from_shape_fn((n, 1), |_| rng.random_range(-0.1..0.1));
        Batch {
            states: states.clone(),
            actions,
            rewards: Array2::zeros((n, 1)),
            next_states: states,
            terminal_mask: Array2::zeros((n, 1)),
        }
    }

    /// Independent oracle: the unweighted beta-ELBO loss computed with
    /// plain-number Gaussian utilities and the decoder's inference path,
    /// using the same noise draw.
    #[test]
    fn unit_weights_match_independent_unweighted_elbo() {
        let p = policy(1, 0.5);
        let batch = toy_batch(8, 2);
        let w = AdvantageWeights::ones(8, 0.3, 100.0);
        let mut rng = derive_rng(3, Domain::TrainStep, 0, 0);
        let (loss, recon, kl) = p.weighted_elbo_loss(&batch, &w, &mut rng).unwrap();

        // Replicate the internal noise draw, then compute row by row.
        let mut rng2 = derive_rng(3, Domain::TrainStep, 0, 0);
        let noise = standard_normal_matrix(8, p.d_z(), &mut rng2);
        let enc_in =
            concatenate(Axis(1), &[batch.states.view(), batch.actions.view()]).unwrap();
        let (means, log_stds) = p.encoder().forward_gaussian(&enc_in).unwrap();
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for i in 0..8 {
            let gp = GaussianParams::new(means.row(i).to_vec(), log_stds.row(i).to_vec()).unwrap();
            let z = gp.reparam_sample(&noise.row(i).to_vec());
            let decoded = p.decode(&batch.states.row(i).to_vec(), &z);
            let err: f64 = decoded
                .iter()
                .zip(batch.actions.row(i))
                .map(|(d, a)| (d - a) * (d - a))
                .sum();
            recon_sum += 0.5 * err / (0.1 * 0.1);
            kl_sum += gp.kl_std_normal();
        }
        assert_abs_diff_eq!(recon, recon_sum / 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(kl, kl_sum / 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(loss, recon + 0.5 * kl, epsilon = 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_loss_and_zero_gradients() {
        let mut p = policy(4, 0.5);
        let batch = toy_batch(6, 5);
        let w = AdvantageWeights {
            omega: vec![0.0; 6],
            lambda: 0.3,
            omega_max: 100.0,
        };
        let mut rng = derive_rng(6, Domain::TrainStep, 0, 0);
        let (loss, recon, kl) = p.weighted_elbo_loss(&batch, &w, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(recon, 0.0);
        assert_eq!(kl, 0.0);

        let enc_before = p.encoder().params().clone();
        let dec_before = p.decoder().params().clone();
        let mut rng2 = derive_rng(6, Domain::TrainStep, 0, 0);
        p.update(&batch, &w, &mut rng2).unwrap();
        assert_eq!(p.encoder().params(), &enc_before);
        assert_eq!(p.decoder().params(), &dec_before);
    }

    #[test]
    fn loss_is_exactly_linear_in_the_weights() {
        let p = policy(7, 0.5);
        let batch = toy_batch(5, 8);
        let ones = AdvantageWeights::ones(5, 0.3, 100.0);
        let twos = AdvantageWeights {
            omega: vec![2.0; 5],
            lambda: 0.3,
            omega_max: 100.0,
        };
        let mut r1 = derive_rng(9, Domain::TrainStep, 0, 0);
        let mut r2 = derive_rng(9, Domain::TrainStep, 0, 0);
        let (l1, _, _) = p.weighted_elbo_loss(&batch, &ones, &mut r1).unwrap();
        let (l2, _, _) = p.weighted_elbo_loss(&batch, &twos, &mut r2).unwrap();
        assert_eq!(l2.to_bits(), (2.0 * l1).to_bits(), "doubling is exact");
    }

    #[test]
    fn mismatched_weight_length_is_a_contract_error() {
        let p = policy(10, 0.5);
        let batch = toy_batch(4, 11);
        let w = AdvantageWeights::ones(3, 0.3, 100.0);
        let mut rng = derive_rng(12, Domain::TrainStep, 0, 0);
        assert!(matches!(
            p.weighted_elbo_loss(&batch, &w, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_weight_decoder_outputs_zero_action() {
        let mut p = policy(13, 0.5);
        let n = p.decoder().param_count();
        p.decoder = Net::zeros(
            p.decoder().layer_sizes(),
            Activation::Relu,
            Head::TanhScaled { scale: 0.1 },
        )
        .unwrap();
        assert_eq!(p.decoder().param_count(), n);
        let a = p.decode(&[0.4, -0.9], &[1.0, -1.0]);
        assert_eq!(a, vec![0.0]);
    }

    #[test]
    fn decoded_actions_stay_strictly_inside_bounds() {
        let p = policy(14, 0.5);
        let mut rng = derive_rng(15, Domain::Init, 1, 0);
        for _ in 0..1000 {
            let s = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let z = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
            let a = p.decode(&s, &z);
            assert!(a[0].abs() < 0.1);
        }
    }

    #[test]
    fn prior_samples_have_standard_moments() {
        let mut rng = derive_rng(16, Domain::Init, 0, 0);
        let n = 1_000_000;
        let d = 2;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for _ in 0..n {
            let z = sample_prior(d, &mut rng);
            for i in 0..d {
                sum[i] += z[i];
                sum_sq[i] += z[i] * z[i];
            }
        }
        for i in 0..d {
            let mean = sum[i] / n as f64;
            let var = sum_sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.01, "mean {mean}");
            assert!((var - 1.0).abs() < 0.01, "var {var}");
        }
    }

    #[test]
    fn prior_sampling_is_reproducible() {
        let mut a = derive_rng(17, Domain::Init, 0, 0);
        let mut b = derive_rng(17, Domain::Init, 0, 0);
        assert_eq!(sample_prior(4, &mut a), sample_prior(4, &mut b));
    }

    #[test]
    fn repeated_updates_shrink_reconstruction_error() {
        let mut p = policy(18, 0.1);
        let batch = Batch {
            states: Array2::from_shape_vec((1, 2), vec![0.2, -0.5]).unwrap(),
            actions: Array2::from_shape_vec((1, 1), vec![0.07]).unwrap(),
            rewards: Array2::zeros((1, 1)),
            next_states: Array2::zeros((1, 2)),
            terminal_mask: Array2::zeros((1, 1)),
        };
        let w = AdvantageWeights::ones(1, 0.3, 100.0);
        let mut recons = Vec::new();
        for step in 0..100 {
            let mut rng = derive_rng(19, Domain::TrainStep, step, 0);
            let (recon, _) = p.update(&batch, &w, &mut rng).unwrap();
            recons.push(recon);
        }
        // Noisy per-step values; compare averaged windows.
        let early: f64 = recons[..20].iter().sum::<f64>() / 20.0;
        let late: f64 = recons[80..].iter().sum::<f64>() / 20.0;
        assert!(late < early, "early {early}, late {late}");
    }

    #[test]
    fn zero_beta_excludes_kl_from_the_gradient() {
        let p0 = policy(20, 0.0);
        let batch = toy_batch(4, 21);
        let w = AdvantageWeights::ones(4, 0.3, 100.0);

        // Manual recon-only recording sharing the same noise.
        let mut rng = derive_rng(22, Domain::TrainStep, 0, 0);
        let rec = p0.record_loss(&batch, &w, &mut rng).unwrap();
        let grads = rec.tape.backward(rec.loss).unwrap();
        let g_beta0 = p0.encoder().grad_from(&grads, &rec.enc_tp);
        let recon_grads = rec.tape.backward(rec.recon).unwrap();
        let g_recon = p0.encoder().grad_from(&recon_grads, &rec.enc_tp);
        assert_eq!(g_beta0, g_recon);

        // KL is still reported even though it does not drive the update.
        let mut rng2 = derive_rng(22, Domain::TrainStep, 0, 0);
        let (_, _, kl) = p0.weighted_elbo_loss(&batch, &w, &mut rng2).unwrap();
        assert!(kl > 0.0);
    }

    #[test]
    fn updates_are_bitwise_deterministic() {
        let batch = toy_batch(6, 23);
        let w = AdvantageWeights::ones(6, 0.3, 100.0);
        let mut p1 = policy(24, 0.5);
        let mut p2 = policy(24, 0.5);
        for step in 0..5 {
            let mut r1 = derive_rng(25, Domain::TrainStep, step, 0);
            let mut r2 = derive_rng(25, Domain::TrainStep, step, 0);
            p1.update(&batch, &w, &mut r1).unwrap();
            p2.update(&batch, &w, &mut r2).unwrap();
        }
        assert_eq!(p1.encoder().params(), p2.encoder().params());
        assert_eq!(p1.decoder().params(), p2.decoder().params());
    }

    #[test]
    fn weighted_elbo_gradient_matches_finite_differences() {
        let p = policy(26, 0.5);
        let batch = toy_batch(3, 27);
        let w = AdvantageWeights {
            omega: vec![0.5, 1.5, 2.5],
            lambda: 0.3,
            omega_max: 100.0,
        };

        let loss_at = |enc: &[f64], dec: &[f64]| {
            let mut probe = CvaePolicy::from_parts(
                p.encoder().clone(),
                p.decoder().clone(),
                p.d_z(),
                p.beta(),
                p.action_bound(),
                p.enc_opt().clone(),
                p.dec_opt().clone(),
            );
            probe.encoder.set_params(enc.to_vec()).unwrap();
            probe.decoder.set_params(dec.to_vec()).unwrap();
            let mut rng = derive_rng(28, Domain::TrainStep, 0, 0);
            probe.weighted_elbo_loss(&batch, &w, &mut rng).unwrap().0
        };

        let mut rng = derive_rng(28, Domain::TrainStep, 0, 0);
        let rec = p.record_loss(&batch, &w, &mut rng).unwrap();
        let grads = rec.tape.backward(rec.loss).unwrap();
        let g_enc = p.encoder().grad_from(&grads, &rec.enc_tp);
        let g_dec = p.decoder().grad_from(&grads, &rec.dec_tp);

        let h = 1e-5;
        let enc0 = p.encoder().params().clone();
        let dec0 = p.decoder().params().clone();
        let mut worst = 0.0f64;
        for i in 0..enc0.len() {
            let mut e = enc0.clone();
            e[i] += h;
            let up = loss_at(&e, &dec0);
            e[i] -= 2.0 * h;
            let dn = loss_at(&e, &dec0);
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((g_enc[i] - fd).abs() / g_enc[i].abs().max(fd.abs()).max(1e-6));
        }
        for i in 0..dec0.len() {
            let mut d = dec0.clone();
            d[i] += h;
            let up = loss_at(&enc0, &d);
            d[i] -= 2.0 * h;
            let dn = loss_at(&enc0, &d);
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((g_dec[i] - fd).abs() / g_dec[i].abs().max(fd.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    /// Mode-fidelity smoke test: trained on a bimodal conditional action
    /// distribution, prior-sampled decodes should land near the two modes,
    /// not between them.
    #[test]
    fn prior_decodes_cover_the_two_data_modes() {
        let mut init_rng = derive_rng(29, Domain::Init, 0, 0);
        let mut p = CvaePolicy::new(1, 1, 0.1, 2, 0.1, &[32, 32], 3e-3, &mut init_rng).unwrap();

        let n = 64;
        for step in 0..1200 {
            let mut rng = derive_rng(30, Domain::TrainStep, step, 0);
            let mut data_rng = derive_rng(30, Domain::Batch, step, 0);
            let mut actions = Array2::zeros((n, 1));
            for i in 0..n {
                let sign = if data_rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                actions[[i, 0]] = sign * 0.08 + data_rng.random_range(-0.01..0.01);
            }
            let batch = Batch {
                states: Array2::zeros((n, 1)),
                actions,
                rewards: Array2::zeros((n, 1)),
                next_states: Array2::zeros((n, 1)),
                terminal_mask: Array2::zeros((n, 1)),
            };
            let w = AdvantageWeights::ones(n, 0.3, 100.0);
            p.update(&batch, &w, &mut rng).unwrap();
        }

        let mut eval_rng = derive_rng(31, Domain::Histogram, 0, 0);
        let mut in_modes = 0;
        let total = 400;
        for _ in 0..total {
            let z = sample_prior(2, &mut eval_rng);
            let a = p.decode(&[0.0], &z)[0];
            if (0.05..=0.1).contains(&a.abs()) {
                in_modes += 1;
            }
        }
        let frac = in_modes as f64 / total as f64;
        assert!(frac >= 0.85, "only {frac} of prior decodes near the modes");
    }
}
