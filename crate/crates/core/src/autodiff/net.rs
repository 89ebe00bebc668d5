//! Dense feed-forward networks over flat parameter vectors.
//!
//! A [`Net`] owns its parameters as one flat `Vec<f64>` (weights row-major,
//! then biases, layer by layer). The same parameter layout backs the plain
//! inference path ([`Net::forward`]) and the recorded path
//! ([`Net::forward_on_tape`]) used for training, and is what checkpoints
//! serialize.

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Flat parameter vector of a network.
pub type ParamVector = Vec<f64>;
/// Flat gradient vector aligned with a [`ParamVector`].
pub type GradVector = Vec<f64>;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Cap on |tanh| inside the scaled head so outputs stay strictly inside
/// (-scale, scale) even when tanh saturates to exactly 1.0 in f64.
const TANH_CAP: f64 = 1.0 - 2.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Output head applied after the final affine layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    /// Raw affine output.
    Linear,
    /// Splits the output into (mean, log-std) halves; log-std is clamped
    /// to [`LOG_STD_MIN`, `LOG_STD_MAX`] on every forward pass.
    GaussianMeanLogStd,
    /// `y = scale * tanh(x)`, strictly inside (-scale, scale).
    TanhScaled { scale: f64 },
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    w_start: usize,
    b_start: usize,
    end: usize,
    in_dim: usize,
    out_dim: usize,
}

/// Dense feed-forward network with a fixed activation on hidden layers and
/// an output head.
#[derive(Debug, Clone)]
pub struct Net {
    layer_sizes: Vec<usize>,
    activation: Activation,
    head: Head,
    params: ParamVector,
}

/// Tape handles for one network's per-layer weight and bias nodes.
pub struct TapeParams {
    layers: Vec<(Var, Var)>,
    trainable: bool,
}

/// Output of a recorded forward pass; shape depends on the head.
pub enum HeadOut {
    Plain(Var),
    Gaussian { mean: Var, log_std: Var },
}

impl HeadOut {
    /// The single output node of a linear or tanh-scaled head.
    pub fn plain(self) -> Var {
        match self {
            HeadOut::Plain(v) => v,
            HeadOut::Gaussian { .. } => panic!("gaussian head has no single output node"),
        }
    }

    pub fn gaussian(self) -> (Var, Var) {
        match self {
            HeadOut::Gaussian { mean, log_std } => (mean, log_std),
            HeadOut::Plain(_) => panic!("plain head has no (mean, log-std) split"),
        }
    }
}

/// Number of parameters implied by a layer-size list.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum()
}

impl Net {
    /// Build a network with Xavier-uniform weights and zero biases, drawn
    /// from the caller's generator.
    pub fn new(
        layer_sizes: &[usize],
        activation: Activation,
        head: Head,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "layer sizes must list at least input and output widths".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        match head {
            Head::GaussianMeanLogStd => {
                let out = *layer_sizes.last().unwrap();
                if out % 2 != 0 {
                    return Err(Error::Config(format!(
                        "gaussian head needs an even output width, got {out}"
                    )));
                }
            }
            Head::TanhScaled { scale } => {
                if !(scale > 0.0) {
                    return Err(Error::Config(format!(
                        "tanh-scaled head needs a positive scale, got {scale}"
                    )));
                }
            }
            Head::Linear => {}
        }

        let mut params = vec![0.0; param_count(layer_sizes)];
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params.iter_mut().skip(offset).take(fan_in * fan_out) {
                *p = rng.random_range(-limit..limit);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            head,
            params,
        })
    }

    /// Network with all parameters zero (useful for fixtures and tests).
    pub fn zeros(layer_sizes: &[usize], activation: Activation, head: Head) -> Result<Self> {
        let mut rng = crate::rng::derive_rng(0, crate::rng::Domain::Init, 0, 0);
        let mut net = Self::new(layer_sizes, activation, head, &mut rng)?;
        net.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Declared output width (the final layer size; a gaussian head splits
    /// this into two halves).
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "parameter vector length {} does not match network size {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn layer_spans(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::with_capacity(self.layer_sizes.len() - 1);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            spans.push(LayerSpan {
                w_start: offset,
                b_start: offset + in_dim * out_dim,
                end: offset + (in_dim + 1) * out_dim,
                in_dim,
                out_dim,
            });
            offset += (in_dim + 1) * out_dim;
        }
        spans
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.dim().1 != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch width {} does not match network input width {}",
                batch.dim().1,
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Plain forward pass: affine layers with the hidden activation, then
    /// the head. Deterministic and allocation-only (no tape).
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let spans = self.layer_spans();
        let last = spans.len() - 1;
        let mut h = batch.to_owned();
        for (li, span) in spans.iter().enumerate() {
            let w = ArrayView2::from_shape(
                (span.out_dim, span.in_dim),
                &self.params[span.w_start..span.b_start],
            )
            .expect("contiguous weight span");
            let b = ArrayView1::from(&self.params[span.b_start..span.end]);
            let mut y = h.dot(&w.t());
            y += &b;
            if li < last {
                match self.activation {
                    Activation::Tanh => y.mapv_inplace(f64::tanh),
                    Activation::Relu => y.mapv_inplace(|v| v.max(0.0)),
                }
            }
            h = y;
        }
        match self.head {
            Head::Linear => {}
            Head::TanhScaled { scale } => {
                h.mapv_inplace(|v| scale * v.tanh().clamp(-TANH_CAP, TANH_CAP));
            }
            Head::GaussianMeanLogStd => {
                let d = self.output_dim() / 2;
                h.slice_mut(s![.., d..])
                    .mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
            }
        }
        Ok(h)
    }

    /// Forward pass of a gaussian-head network split into (means, log-stds).
    pub fn forward_gaussian(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if self.head != Head::GaussianMeanLogStd {
            return Err(Error::Contract("network does not have a gaussian head".into()));
        }
        let out = self.forward(batch)?;
        let d = self.output_dim() / 2;
        Ok((
            out.slice(s![.., ..d]).to_owned(),
            out.slice(s![.., d..]).to_owned(),
        ))
    }

    /// Insert this network's parameters on a tape, as leaves when
    /// `trainable` and as constants otherwise (gradient still flows
    /// *through* a frozen network to its inputs).
    pub fn tape_params(&self, tape: &mut Tape, trainable: bool) -> TapeParams {
        let mut layers = Vec::new();
        for span in self.layer_spans() {
            let w = Array2::from_shape_vec(
                (span.out_dim, span.in_dim),
                self.params[span.w_start..span.b_start].to_vec(),
            )
            .expect("contiguous weight span");
            let b = Array2::from_shape_vec(
                (1, span.out_dim),
                self.params[span.b_start..span.end].to_vec(),
            )
            .expect("contiguous bias span");
            let (wv, bv) = if trainable {
                (tape.leaf(w), tape.leaf(b))
            } else {
                (tape.constant(w), tape.constant(b))
            };
            layers.push((wv, bv));
        }
        TapeParams { layers, trainable }
    }

    /// Recorded forward pass through previously inserted tape parameters.
    pub fn forward_on_tape(&self, tape: &mut Tape, tp: &TapeParams, input: Var) -> HeadOut {
        assert_eq!(
            tape.value(input).dim().1,
            self.input_dim(),
            "tape input width vs network input width"
        );
        let last = tp.layers.len() - 1;
        let mut h = input;
        for (li, &(w, b)) in tp.layers.iter().enumerate() {
            h = tape.linear(h, w, b);
            if li < last {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        match self.head {
            Head::Linear => HeadOut::Plain(h),
            Head::TanhScaled { scale } => {
                let t = tape.tanh(h);
                let c = tape.clamp(t, -TANH_CAP, TANH_CAP);
                HeadOut::Plain(tape.scale(c, scale))
            }
            Head::GaussianMeanLogStd => {
                let d = self.output_dim() / 2;
                let mean = tape.slice_cols(h, 0, d);
                let raw = tape.slice_cols(h, d, 2 * d);
                let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
                HeadOut::Gaussian { mean, log_std }
            }
        }
    }

    /// Collect the flat gradient for this network after a backward pass.
    /// Parameters off the loss path get zero entries.
    pub fn grad_from(&self, grads: &Gradients, tp: &TapeParams) -> GradVector {
        assert!(tp.trainable, "gradients requested for a frozen network");
        let mut flat = vec![0.0; self.params.len()];
        for (span, &(wv, bv)) in self.layer_spans().iter().zip(&tp.layers) {
            if let Some(gw) = grads.get(wv) {
                for (dst, src) in flat[span.w_start..span.b_start].iter_mut().zip(gw.iter()) {
                    *dst = *src;
                }
            }
            if let Some(gb) = grads.get(bv) {
                for (dst, src) in flat[span.b_start..span.end].iter_mut().zip(gb.iter()) {
                    *dst = *src;
                }
            }
        }
        flat
    }
}
