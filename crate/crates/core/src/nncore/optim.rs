use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::{Error, Result};

/// Stochastic gradient descent with heavy-ball momentum.
///
/// Each step applies, per parameter entry,
///
/// ```text
/// v <- momentum * v + g
/// p <- p - learning_rate * v
/// ```
///
/// Velocity buffers mirror the parameter shapes and start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Matrix>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64, params: &[&Matrix]) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::shape(
                "SgdMomentum::step",
                format!("{} tensors", self.velocity.len()),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (i, ((p, g), v)) in params.iter().zip(grads).zip(&self.velocity).enumerate() {
            if !p.same_shape(g) || !p.same_shape(v) {
                return Err(Error::shape(
                    "SgdMomentum::step",
                    format!("{:?} for tensor {i}", v.shape()),
                    format!("param {:?}, grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = mu * *vi + gi;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}
