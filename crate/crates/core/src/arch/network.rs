use serde::{Deserialize, Serialize};

use crate::nncore::{init_params, Activation, DenseLayer, Matrix, Parameterized, SeededRng, Tape, Var};
use crate::objectives::{ObjectiveWeights, TapeOutputs};
use crate::{Error, Result};

/// Which model family a [`Network`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Shared representation feeding two outcome heads and a propensity head.
    Dragonnet,
    /// Two outcome heads on a shared representation; the propensity model
    /// is a separate logistic regression on the raw covariates.
    Tarnet,
    /// Dragonnet's shape, trained in two stages: propensity first, then
    /// outcome heads on the frozen representation.
    Nednet,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Dragonnet => "dragonnet",
            Architecture::Tarnet => "tarnet",
            Architecture::Nednet => "nednet",
        }
    }

    /// Whether the propensity head reads the representation rather than
    /// the raw covariates.
    pub fn propensity_reads_representation(self) -> bool {
        !matches!(self, Architecture::Tarnet)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dragonnet" => Ok(Architecture::Dragonnet),
            "tarnet" => Ok(Architecture::Tarnet),
            "nednet" => Ok(Architecture::Nednet),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected dragonnet, tarnet or nednet)"
            ))),
        }
    }
}

/// Layer sizes. Defaults: three shared layers of width 200 and two hidden
/// layers of width 100 per outcome head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkShape {
    pub shared_width: usize,
    pub shared_depth: usize,
    /// Width of the last shared layer, i.e. of the representation.
    pub representation_width: usize,
    pub head_width: usize,
    pub head_depth: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            shared_width: 200,
            shared_depth: 3,
            representation_width: 200,
            head_width: 100,
            head_depth: 2,
        }
    }
}

impl NetworkShape {
    fn validate(&self) -> Result<()> {
        let sizes = [
            self.shared_width,
            self.shared_depth,
            self.representation_width,
            self.head_width,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config(format!(
                "network widths and shared depth must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    fn shared_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat_n(self.shared_width, self.shared_depth - 1));
        sizes.push(self.representation_width);
        sizes
    }

    fn head_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.representation_width];
        sizes.extend(std::iter::repeat_n(self.head_width, self.head_depth));
        sizes.push(1);
        sizes
    }
}

/// Every trainable tensor of one model.
///
/// Parameter order, used by gradients and the optimizer: shared layers
/// (weight, bias each), outcome head 0, outcome head 1, propensity weight
/// and bias, then the `1 x 1` fluctuation parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub architecture: Architecture,
    pub shared: Vec<DenseLayer>,
    pub heads: [Vec<DenseLayer>; 2],
    /// Reads the representation, or the raw covariates for TARNET.
    pub propensity: DenseLayer,
    pub epsilon: Matrix,
}

impl Network {
    /// Fresh weights `N(0, 1/fan_in)`, zero biases, zero epsilon. Layers
    /// are drawn in parameter order, so two architectures built from the
    /// same seed share their representation and outcome heads.
    pub fn new(
        architecture: Architecture,
        input_dim: usize,
        shape: &NetworkShape,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        shape.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("need at least one covariate".into()));
        }
        let shared = init_params(
            rng,
            &shape.shared_sizes(input_dim),
            &vec![Activation::Elu; shape.shared_depth],
        )?;
        let mut head_acts = vec![Activation::Elu; shape.head_depth];
        head_acts.push(Activation::Identity);
        let head0 = init_params(rng, &shape.head_sizes(), &head_acts)?;
        let head1 = init_params(rng, &shape.head_sizes(), &head_acts)?;
        let prop_in = if architecture.propensity_reads_representation() {
            shape.representation_width
        } else {
            input_dim
        };
        let propensity = DenseLayer::new(prop_in, 1, Activation::Sigmoid, rng)?;
        Ok(Self {
            architecture,
            shared,
            heads: [head0, head1],
            propensity,
            epsilon: Matrix::zeros(1, 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.shared[0].in_dim()
    }

    pub fn representation_width(&self) -> usize {
        self.shared.last().map_or(0, DenseLayer::out_dim)
    }

    fn head_first_id(&self, k: usize) -> usize {
        2 * self.shared.len() + k * 2 * self.heads[0].len()
    }

    pub(crate) fn propensity_id(&self) -> usize {
        2 * self.shared.len() + 4 * self.heads[0].len()
    }

    pub(crate) fn epsilon_id(&self) -> usize {
        self.propensity_id() + 2
    }

    pub fn representation(&self, x: &Matrix) -> Result<Matrix> {
        crate::nncore::forward(&self.shared, x)
    }

    /// `(q0, q1, g)` for each row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "Network::forward",
                format!("{} covariate columns", self.input_dim()),
                x.cols(),
            ));
        }
        let z = self.representation(x)?;
        let q0 = crate::nncore::forward(&self.heads[0], &z)?.into_vec();
        let q1 = crate::nncore::forward(&self.heads[1], &z)?.into_vec();
        let prop_in = if self.architecture.propensity_reads_representation() {
            &z
        } else {
            x
        };
        let g = self.propensity.forward(prop_in)?.into_vec();
        Ok((q0, q1, g))
    }

    /// Records the outputs `weights` needs on `tape`, whose parameters
    /// must be `self.parameters()`.
    pub fn record(&self, tape: &mut Tape<'_>, x: Var, weights: ObjectiveWeights) -> Result<TapeOutputs> {
        let heads = weights.needs_outcomes();
        let prop = weights.needs_propensity();
        let reads_z = self.architecture.propensity_reads_representation();
        let z = if heads || (prop && reads_z) {
            Some(tape.dense_stack(x, &self.shared, 0)?.0)
        } else {
            None
        };
        let mut out = TapeOutputs {
            q0: None,
            q1: None,
            g: None,
            epsilon: None,
        };
        if heads {
            let z = z.expect("representation recorded");
            out.q0 = Some(tape.dense_stack(z, &self.heads[0], self.head_first_id(0))?.0);
            out.q1 = Some(tape.dense_stack(z, &self.heads[1], self.head_first_id(1))?.0);
        }
        if prop {
            let input = if reads_z {
                z.expect("representation recorded")
            } else {
                x
            };
            out.g = Some(tape.dense(input, self.propensity_id(), Activation::Sigmoid)?);
        }
        if weights.beta > 0.0 {
            out.epsilon = Some(tape.param(self.epsilon_id()));
        }
        Ok(out)
    }
}

impl Parameterized for Network {
    fn parameters(&self) -> Vec<&Matrix> {
        let mut v = Vec::new();
        for layer in self.shared.iter().chain(&self.heads[0]).chain(&self.heads[1]) {
            v.push(&layer.weights);
            v.push(&layer.bias);
        }
        v.push(&self.propensity.weights);
        v.push(&self.propensity.bias);
        v.push(&self.epsilon);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::new();
        let [h0, h1] = &mut self.heads;
        for layer in self.shared.iter_mut().chain(h0.iter_mut()).chain(h1.iter_mut()) {
            v.push(&mut layer.weights);
            v.push(&mut layer.bias);
        }
        v.push(&mut self.propensity.weights);
        v.push(&mut self.propensity.bias);
        v.push(&mut self.epsilon);
        v
    }
}

/// `(q0, q1, g)` of a network on the rows of `x`.
pub fn dragonnet_forward(params: &Network, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    params.forward(x)
}

/// The two outcome heads alone, reading a fixed representation. This is
/// what NEDnet trains in its second stage.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OutcomeHeads {
    pub heads: [Vec<DenseLayer>; 2],
}

impl OutcomeHeads {
    pub fn record(&self, tape: &mut Tape<'_>, z: Var) -> Result<TapeOutputs> {
        let q0 = tape.dense_stack(z, &self.heads[0], 0)?.0;
        let q1 = tape.dense_stack(z, &self.heads[1], 2 * self.heads[0].len())?.0;
        Ok(TapeOutputs {
            q0: Some(q0),
            q1: Some(q1),
            g: None,
            epsilon: None,
        })
    }
}

impl Parameterized for OutcomeHeads {
    fn parameters(&self) -> Vec<&Matrix> {
        self.heads
            .iter()
            .flatten()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.heads
            .iter_mut()
            .flatten()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkShape {
        NetworkShape {
            shared_width: 6,
            shared_depth: 2,
            representation_width: 5,
            head_width: 4,
            head_depth: 2,
        }
    }

    fn zero_out(net: &mut Network) {
        for m in net.parameters_mut() {
            m.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_network_outputs() {
        let mut net = Network::new(Architecture::Dragonnet, 3, &small(), &mut SeededRng::new(0)).unwrap();
        zero_out(&mut net);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, 9.0]]).unwrap();
        let (q0, q1, g) = net.forward(&x).unwrap();
        assert_eq!(q0, vec![0.0, 0.0]);
        assert_eq!(q1, vec![0.0, 0.0]);
        assert_eq!(g, vec![0.5, 0.5]);
    }

    #[test]
    fn duplicated_rows_give_duplicated_outputs() {
        let net = Network::new(Architecture::Dragonnet, 2, &small(), &mut SeededRng::new(1)).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -1.0], vec![0.3, -1.0]]).unwrap();
        let (q0, q1, g) = net.forward(&x).unwrap();
        assert_eq!(q0[0], q0[1]);
        assert_eq!(q1[0], q1[1]);
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn head_one_perturbation_is_local() {
        let net = Network::new(Architecture::Dragonnet, 2, &small(), &mut SeededRng::new(2)).unwrap();
        let mut other = net.clone();
        other.heads[1][0].weights.data_mut()[0] += 0.7;
        let x = Matrix::from_rows(&[vec![0.3, -1.0], vec![1.5, 2.0]]).unwrap();
        let (a0, a1, ag) = net.forward(&x).unwrap();
        let (b0, b1, bg) = other.forward(&x).unwrap();
        assert_eq!(a0, b0);
        assert_eq!(ag, bg);
        assert_ne!(a1, b1);
    }

    #[test]
    fn tarnet_propensity_reads_covariates() {
        let net = Network::new(Architecture::Tarnet, 4, &small(), &mut SeededRng::new(3)).unwrap();
        assert_eq!(net.propensity.in_dim(), 4);
        let dn = Network::new(Architecture::Dragonnet, 4, &small(), &mut SeededRng::new(3)).unwrap();
        assert_eq!(dn.propensity.in_dim(), 5);
        // Same seed, same representation and outcome heads.
        assert_eq!(net.shared, dn.shared);
        assert_eq!(net.heads, dn.heads);
    }

    #[test]
    fn input_width_is_checked() {
        let net = Network::new(Architecture::Dragonnet, 3, &small(), &mut SeededRng::new(4)).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(2, 4)), Err(Error::Shape { .. })));
    }

    #[test]
    fn parameter_order_matches_ids() {
        let net = Network::new(Architecture::Dragonnet, 3, &small(), &mut SeededRng::new(5)).unwrap();
        let params = net.parameters();
        assert_eq!(params.len(), net.epsilon_id() + 1);
        assert_eq!(params[net.propensity_id()].shape(), (1, 5));
        assert_eq!(params[net.epsilon_id()].shape(), (1, 1));
        assert_eq!(params[net.head_first_id(1)].shape(), (4, 5));
    }

    #[test]
    fn default_shape_matches_reference_sizes() {
        let net = Network::new(
            Architecture::Dragonnet,
            25,
            &NetworkShape::default(),
            &mut SeededRng::new(6),
        )
        .unwrap();
        let widths: Vec<usize> = net.shared.iter().map(DenseLayer::out_dim).collect();
        assert_eq!(widths, vec![200, 200, 200]);
        let head: Vec<usize> = net.heads[0].iter().map(DenseLayer::out_dim).collect();
        assert_eq!(head, vec![100, 100, 1]);
        assert_eq!(net.heads[0].last().unwrap().activation, Activation::Identity);
    }
}
