//! Diagonal Gaussian utilities: plain-number ops on [`GaussianParams`] and
//! the recorded (differentiable) counterparts used in training objectives.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::net::{LOG_STD_MAX, LOG_STD_MIN};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Mean and log-std of a diagonal Gaussian. Log-std is clamped to
/// [`LOG_STD_MIN`, `LOG_STD_MAX`] at construction, mirroring the network
/// head that produces these values.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::Shape(format!(
                "mean dimension {} vs log-std dimension {}",
                mean.len(),
                log_std.len()
            )));
        }
        if mean.iter().chain(log_std.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gaussian parameters".into()));
        }
        let log_std = log_std
            .into_iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Log density of `x` under the Gaussian.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point dimension {} vs distribution dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input to log_prob".into()));
        }
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let z = (x[i] - self.mean[i]) * (-self.log_std[i]).exp();
            acc += z * z + 2.0 * self.log_std[i] + LN_2PI;
        }
        Ok(-0.5 * acc)
    }

    /// KL divergence to the standard normal, in closed form.
    pub fn kl_std_normal(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let var = (2.0 * self.log_std[i]).exp();
            acc += self.mean[i] * self.mean[i] + var - 1.0 - 2.0 * self.log_std[i];
        }
        0.5 * acc
    }

    /// Reparameterized sample `mean + exp(log_std) * noise`.
    pub fn reparam_sample(&self, noise: &[f64]) -> Vec<f64> {
        assert_eq!(noise.len(), self.dim(), "noise dimension");
        (0..self.dim())
            .map(|i| self.mean[i] + self.log_std[i].exp() * noise[i])
            .collect()
    }

    /// Draw a sample using fresh standard-normal noise from `rng`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = standard_normal_vec(self.dim(), rng);
        self.reparam_sample(&noise)
    }
}

/// A vector of iid standard-normal draws.
pub fn standard_normal_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// A `(rows, cols)` matrix of iid standard-normal draws, row-major order.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Recorded per-row Gaussian log density: `(B, d)` mean/log-std/x nodes to a
/// `(B, 1)` column of log probabilities.
pub fn gaussian_log_prob_rows(tape: &mut Tape, mean: Var, log_std: Var, x: Var) -> Var {
    let diff = tape.sub(x, mean);
    let neg_ls = tape.scale(log_std, -1.0);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.square(z);
    let spread = tape.affine(log_std, 2.0, LN_2PI);
    let inner = tape.add(z2, spread);
    let row = tape.sum_rows(inner);
    tape.scale(row, -0.5)
}

/// Recorded per-row KL to the standard normal: `(B, d)` to `(B, 1)`.
pub fn kl_std_normal_rows(tape: &mut Tape, mean: Var, log_std: Var) -> Var {
    let mu2 = tape.square(mean);
    let two_ls = tape.scale(log_std, 2.0);
    let var = tape.exp(two_ls);
    let lin = tape.affine(log_std, -2.0, -1.0);
    let a = tape.add(mu2, var);
    let inner = tape.add(a, lin);
    let row = tape.sum_rows(inner);
    tape.scale(row, 0.5)
}

/// Recorded reparameterized sample `mean + exp(log_std) * noise`.
pub fn reparam(tape: &mut Tape, mean: Var, log_std: Var, noise: Var) -> Var {
    let std = tape.exp(log_std);
    let scaled = tape.mul(std, noise);
    tape.add(mean, scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Domain};
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_prob_at_mode_of_standard_normal() {
        for d in [1, 2, 5] {
            let gp = GaussianParams::new(vec![0.0; d], vec![0.0; d]).unwrap();
            let lp = gp.log_prob(&vec![0.0; d]).unwrap();
            assert_abs_diff_eq!(lp, -0.5 * d as f64 * LN_2PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_sigma_identity() {
        let gp = GaussianParams::new(vec![0.4, -1.2, 3.0], vec![0.3, -0.7, 1.1]).unwrap();
        let at_mode = gp.log_prob(gp.mean()).unwrap();
        let x: Vec<f64> = gp
            .mean()
            .iter()
            .zip(gp.log_std())
            .map(|(m, ls)| m + ls.exp())
            .collect();
        let lp = gp.log_prob(&x).unwrap();
        assert_abs_diff_eq!(lp, at_mode - 0.5 * 3.0, epsilon = 1e-12);
    }

    #[test]
    fn log_prob_matches_direct_density_evaluation() {
        let mut r = derive_rng(11, Domain::Init, 0, 0);
        for _ in 0..50 {
            let d = 3;
            let mean: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let ls: Vec<f64> = (0..d).map(|_| r.random_range(-1.5..1.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let gp = GaussianParams::new(mean.clone(), ls.clone()).unwrap();
            // Product of univariate densities, then a single ln.
            let mut density = 1.0;
            for i in 0..d {
                let sigma = ls[i].exp();
                let z = (x[i] - mean[i]) / sigma;
                density *= (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            }
            assert_abs_diff_eq!(gp.log_prob(&x).unwrap(), density.ln(), epsilon = 1e-9);
        }
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let gp = GaussianParams::new(vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(
            gp.log_prob(&[f64::NAN]).unwrap_err(),
            Error::Numeric(_)
        ));
    }

    #[test]
    fn kl_is_zero_exactly_at_standard_parameters() {
        let gp = GaussianParams::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(gp.kl_std_normal(), 0.0);
    }

    #[test]
    fn kl_closed_form_for_shifted_mean() {
        let gp = GaussianParams::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(gp.kl_std_normal(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_zero_only_at_standard() {
        let mut r = derive_rng(13, Domain::Init, 0, 0);
        for _ in 0..1000 {
            let d = r.random_range(1..4usize);
            let mean: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let ls: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..1.5)).collect();
            let off_standard = mean.iter().any(|&m| m != 0.0) || ls.iter().any(|&l| l != 0.0);
            let gp = GaussianParams::new(mean, ls).unwrap();
            let kl = gp.kl_std_normal();
            assert!(kl >= 0.0);
            if off_standard {
                assert!(kl > 0.0);
            }
        }
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        let gp = GaussianParams::new(vec![0.7, -0.3], vec![0.4, -0.8]).unwrap();
        let analytic = gp.kl_std_normal();
        let std_normal = GaussianParams::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let mut r = derive_rng(17, Domain::Init, 0, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = gp.sample(&mut r);
            let v = gp.log_prob(&z).unwrap() - std_normal.log_prob(&z).unwrap();
            sum += v;
            sum_sq += v * v;
        }
        let mc = sum / n as f64;
        let var = (sum_sq / n as f64 - mc * mc).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mc - analytic).abs() < 3.0 * se,
            "mc {mc} vs analytic {analytic}, 3se {}",
            3.0 * se
        );
    }

    #[test]
    fn reparam_with_zero_noise_returns_mean() {
        let gp = GaussianParams::new(vec![1.5, -2.0], vec![0.3, 0.9]).unwrap();
        assert_eq!(gp.reparam_sample(&[0.0, 0.0]), gp.mean());
    }

    #[test]
    fn reparam_at_clamp_floor_stays_within_exp_minus_five_of_mean() {
        // log-std below the clamp floor gets clamped to -5.
        let gp = GaussianParams::new(vec![0.0, 1.0], vec![-50.0, -1e9]).unwrap();
        let out = gp.reparam_sample(&[1.0, -1.0]);
        for (o, m) in out.iter().zip(gp.mean()) {
            // One ulp of slack: (m + e) - m can round a hair above e.
            assert!((o - m).abs() <= (-5.0f64).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn reparam_gradient_wrt_mean_is_identity() {
        let mean0 = vec![0.5, -0.25, 1.0];
        let ls = vec![0.2, -0.4, 0.0];
        let noise = vec![0.3, -1.2, 0.7];
        let d = mean0.len();

        let eval = |mean: &[f64], pick: usize| {
            let mut tape = Tape::new();
            let m = tape.leaf(Array2::from_shape_vec((1, d), mean.to_vec()).unwrap());
            let l = tape.constant(Array2::from_shape_vec((1, d), ls.clone()).unwrap());
            let nz = tape.constant(Array2::from_shape_vec((1, d), noise.clone()).unwrap());
            let z = reparam(&mut tape, m, l, nz);
            let picked = tape.slice_cols(z, pick, pick + 1);
            let out = tape.sum_all(picked);
            (tape, m, out)
        };

        let h = 1e-5;
        for out_i in 0..d {
            let (tape, m, loss) = eval(&mean0, out_i);
            let grads = tape.backward(loss).unwrap();
            let g = grads.get(m).unwrap();
            for in_j in 0..d {
                let mut mp = mean0.clone();
                mp[in_j] += h;
                let (t1, _, l1) = eval(&mp, out_i);
                mp[in_j] -= 2.0 * h;
                let (t2, _, l2) = eval(&mp, out_i);
                let fd = (t1.value(l1)[[0, 0]] - t2.value(l2)[[0, 0]]) / (2.0 * h);
                let expect = if in_j == out_i { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g[[0, in_j]], expect, epsilon = 1e-9);
                assert_abs_diff_eq!(fd, expect, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn recorded_ops_match_plain_ops() {
        let mut r = derive_rng(23, Domain::Init, 0, 0);
        let d = 4;
        let mean: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let ls: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let gp = GaussianParams::new(mean.clone(), ls.clone()).unwrap();

        let mut tape = Tape::new();
        let m = tape.constant(Array2::from_shape_vec((1, d), mean).unwrap());
        let l = tape.constant(Array2::from_shape_vec((1, d), ls).unwrap());
        let xv = tape.constant(Array2::from_shape_vec((1, d), x.clone()).unwrap());
        let lp = gaussian_log_prob_rows(&mut tape, m, l, xv);
        let kl = kl_std_normal_rows(&mut tape, m, l);
        assert_abs_diff_eq!(tape.value(lp)[[0, 0]], gp.log_prob(&x).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(tape.value(kl)[[0, 0]], gp.kl_std_normal(), epsilon = 1e-12);
    }
}
