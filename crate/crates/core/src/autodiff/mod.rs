//! Minimal dense-network stack: a recorded computation graph with reverse-mode
//! differentiation, feed-forward networks over flat parameter vectors,
//! diagonal-Gaussian utilities, and an Adam optimizer.

pub mod adam;
pub mod gaussian;
pub mod net;
pub mod tape;

pub use adam::AdamState;
pub use gaussian::{standard_normal_matrix, standard_normal_vec, GaussianParams};
pub use net::{param_count, Activation, GradVector, Head, HeadOut, Net, ParamVector, TapeParams};
pub use tape::{Gradients, Tape, Var};
