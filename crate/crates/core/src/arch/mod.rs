//! Dragonnet, TARNET and NEDnet, their training, and the fitted-model
//! interface shared by all three.

mod model;
mod network;
mod train;

pub use model::{FittedModel, ModelMetadata, OutcomeScaling};
pub use network::{dragonnet_forward, Architecture, Network, NetworkShape};
pub use train::{
    train, train_dragonnet, train_from_network, train_nednet, train_nednet_phase_one, train_on_rows, train_tarnet,
    TrainConfig, TrainRows, TrainTrace,
};
