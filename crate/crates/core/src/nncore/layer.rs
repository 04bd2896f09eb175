//! Dense layers and the activations they support.

use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use super::rng::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x` for `x > 0`, `exp(x) - 1` otherwise. Continuously differentiable.
    Elu,
    Identity,
    Sigmoid,
}

/// Logistic function, evaluated without overflow for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output `a = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if a > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// `y = activation(x W^T + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    /// `1 x out`.
    pub bias: Matrix,
    pub activation: Activation,
}

/// Standard deviation of the initial weights for a layer with `fan_in`
/// inputs: `sqrt(1 / fan_in)`.
pub fn init_std(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

impl DenseLayer {
    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dimensions must be >= 1, got {in_dim} -> {out_dim}"
            )));
        }
        let std = init_std(in_dim);
        let data = (0..in_dim * out_dim).map(|_| std * rng.normal()).collect();
        Ok(Self {
            weights: Matrix::from_vec(out_dim, in_dim, data)?,
            bias: Matrix::zeros(1, out_dim),
            activation,
        })
    }

    /// A layer with every weight and bias zero.
    pub fn zeroed(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: Matrix::zeros(1, out_dim),
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                "DenseLayer::forward",
                format!("{} input columns", self.in_dim()),
                x.cols(),
            ));
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        affine_into(x, &self.weights, &self.bias, &mut out);
        let act = self.activation;
        for v in out.data_mut() {
            *v = act.apply(*v);
        }
        Ok(out)
    }
}

/// `out = x W^T + b`.
pub(crate) fn affine_into(x: &Matrix, w: &Matrix, b: &Matrix, out: &mut Matrix) {
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        row.copy_from_slice(b.data());
    }
    gemm(1.0, x, false, w, true, 1.0, out);
}

/// Builds one layer per consecutive pair in `layer_sizes`.
pub fn init_params(rng: &mut SeededRng, layer_sizes: &[usize], activations: &[Activation]) -> Result<Vec<DenseLayer>> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config("need at least an input and an output size".into()));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Config(format!(
            "{} layers need {} activations, got {}",
            layer_sizes.len() - 1,
            layer_sizes.len() - 1,
            activations.len()
        )));
    }
    layer_sizes
        .windows(2)
        .zip(activations)
        .map(|(dims, &act)| DenseLayer::new(dims[0], dims[1], act, rng))
        .collect()
}

/// Runs `x` through `layers` in order.
pub fn forward(layers: &[DenseLayer], x: &Matrix) -> Result<Matrix> {
    let Some(first) = layers.first() else {
        return Ok(x.clone());
    };
    if x.cols() != first.in_dim() {
        return Err(Error::shape(
            "forward",
            format!("{} input columns", first.in_dim()),
            x.cols(),
        ));
    }
    let mut h = first.forward(x)?;
    for layer in &layers[1..] {
        h = layer.forward(&h)?;
    }
    Ok(h)
}
