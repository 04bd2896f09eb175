use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use super::train::TrainTrace;
use crate::estimators::Predictions;
use crate::nncore::{Matrix, Parameterized, PROB_CLAMP};
use crate::{Error, Result};

/// Affine map between original outcome units and the training scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaling {
    pub shift: f64,
    pub scale: f64,
}

impl OutcomeScaling {
    pub fn identity() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }

    pub fn to_training(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn to_original(&self, q: f64) -> f64 {
        self.shift + self.scale * q
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub architecture: Architecture,
    /// Hex SHA-256 of the training configuration.
    pub config_digest: String,
    /// Root of every random stream used in training.
    pub seed: u64,
    /// Trained with the targeted-regularization penalty.
    pub treg: bool,
}

/// A trained model: `Q(0, x)`, `Q(1, x)`, `g(x)` and the fitted
/// fluctuation, all in original outcome units. Fields are private; the
/// model cannot change after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    network: Network,
    scaling: OutcomeScaling,
    metadata: ModelMetadata,
    trace: TrainTrace,
    propensity_trace: Option<TrainTrace>,
}

/// Checkpoint file layout: this struct as JSON.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: FittedModel,
}

const CHECKPOINT_FORMAT: &str = "dragonnet-checkpoint-v1";

impl FittedModel {
    pub(crate) fn new(
        network: Network,
        scaling: OutcomeScaling,
        metadata: ModelMetadata,
        trace: TrainTrace,
        propensity_trace: Option<TrainTrace>,
    ) -> Result<Self> {
        if network.parameters().iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                term: "model weights",
                value: f64::NAN,
            });
        }
        Ok(Self {
            network,
            scaling,
            metadata,
            trace,
            propensity_trace,
        })
    }

    pub(crate) fn set_trace(&mut self, trace: TrainTrace) {
        self.trace = trace;
    }

    pub(crate) fn set_propensity_trace(&mut self, trace: TrainTrace) {
        self.propensity_trace = Some(trace);
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scaling(&self) -> OutcomeScaling {
        self.scaling
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn architecture(&self) -> Architecture {
        self.metadata.architecture
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    /// Trace of a separately fitted propensity stage: NEDnet's first stage,
    /// or TARNET's logistic model when trained without the penalty.
    pub fn propensity_trace(&self) -> Option<&TrainTrace> {
        self.propensity_trace.as_ref()
    }

    /// Fitted fluctuation in original outcome units; 0 without the penalty.
    pub fn epsilon_hat(&self) -> f64 {
        self.scaling.scale * self.network.epsilon.data()[0]
    }

    /// `Q(0, x_i)`, `Q(1, x_i)`, `g(x_i)` for every row, with `g` kept
    /// strictly inside (0, 1). `epsilon` is set only for models trained
    /// with the penalty.
    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let (q0, q1, g) = self.network.forward(x)?;
        let back = |v: Vec<f64>| v.into_iter().map(|q| self.scaling.to_original(q)).collect::<Vec<_>>();
        let preds = Predictions {
            q0: back(q0),
            q1: back(q1),
            g: g.into_iter().map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).collect(),
            epsilon: self.metadata.treg.then(|| self.epsilon_hat()),
        };
        if let Some(bad) = preds.q0.iter().chain(&preds.q1).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                term: "outcome prediction",
                value: *bad,
            });
        }
        Ok(preds)
    }

    fn predict_row(&self, row: &[f64]) -> Result<Predictions> {
        let x = Matrix::from_vec(1, row.len(), row.to_vec())?;
        self.predict(&x)
    }

    pub fn q0(&self, row: &[f64]) -> Result<f64> {
        Ok(self.predict_row(row)?.q0[0])
    }

    pub fn q1(&self, row: &[f64]) -> Result<f64> {
        Ok(self.predict_row(row)?.q1[0])
    }

    pub fn g(&self, row: &[f64]) -> Result<f64> {
        Ok(self.predict_row(row)?.g[0])
    }

    /// Writes a JSON checkpoint. Floats are written in shortest
    /// round-trip form, so [`FittedModel::load`] restores every weight
    /// exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.clone(),
        };
        serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ckpt.format
            )));
        }
        let m = ckpt.model;
        FittedModel::new(m.network, m.scaling, m.metadata, m.trace, m.propensity_trace)
    }
}
