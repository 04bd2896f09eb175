//! Minimal dense neural-network substrate: matrices, layers, exact
//! reverse-mode gradients, SGD with momentum, and seeded randomness.
//!
//! Everything is `f64`.

mod layer;
mod matrix;
mod optim;
mod rng;
mod tape;

pub use layer::{forward, init_params, init_std, sigmoid, Activation, DenseLayer};
pub use matrix::Matrix;
pub use optim::SgdMomentum;
pub use rng::{derive_seed, SeededRng};
pub use tape::{gradients, Tape, Var, PROB_CLAMP};

/// Types whose trainable state is an ordered list of matrices.
///
/// `parameters` and `parameters_mut` must list the same tensors in the
/// same order; gradient and optimizer buffers are aligned to that order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Matrix>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;
}
